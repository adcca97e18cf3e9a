// emkken: citation-network knowledge evaluation toolkit.
//
// Subcommands: ingest, kqi, label, train, eval, sweep, ablate, plot.
// Global flags: --config PATH, --seed INT, --out DIR, --jobs INT,
// --set KEY=VALUE. Precision via EMKKEN_PRECISION={32|64}.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "emkken/commands.hpp"
#include "emkken/errors.hpp"
#include "emkken/tensor.hpp"

using namespace emkken;

int main(int argc, char** argv) {
    precision_from_env();

    CLI::App app{"EMK-KEN citation-network knowledge evaluation toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_given = false;
    int jobs = 1;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "JSON config path")->capture_default_str();
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--seed", seed, "seed override")->each([&](const std::string&) { seed_given = true; });
    app.add_option("--jobs", jobs, "parallel trials for eval/sweep/ablate")->capture_default_str();
    app.add_option("--set", overrides, "config override KEY=VALUE (repeatable)");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "build a corpus archive from CSV inputs");
    std::string edge_path, meta_path, embed_path;
    bool edge_header = false, meta_header = false;
    int year_column = -1;
    ingest->add_option("--edges", edge_path, "edge CSV citing,cited")->required();
    ingest->add_option("--meta", meta_path, "metadata CSV id + features")->required();
    ingest->add_option("--embed", embed_path, "embedding CSV or raw f32 with JSON sidecar")->required();
    ingest->add_flag("--edge-header", edge_header, "edge CSV has a header row");
    ingest->add_flag("--meta-header", meta_header, "metadata CSV has a header row");
    ingest->add_option("--year-col", year_column, "0-based metadata column holding the year");

    // kqi
    auto* kqi_cmd = app.add_subcommand("kqi", "knowledge quantification index over the corpus DAG");
    std::string corpus_path;
    int kqi_classes = 0;
    kqi_cmd->add_option("--corpus", corpus_path, "corpus archive from ingest")->required();
    kqi_cmd->add_option("--classes", kqi_classes, "bin log-KQI into N labels (omit for scores only)");

    // label
    auto* label_cmd = app.add_subcommand("label", "assign labels per the configured criterion");
    label_cmd->add_option("--corpus", corpus_path, "corpus archive")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train EMK-KEN on the corpus");
    train_cmd->add_option("--corpus", corpus_path, "corpus archive")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "repeated-trial evaluation protocol");
    std::string checkpoint_path;
    eval_cmd->add_option("--corpus", corpus_path, "corpus archive")->required();
    eval_cmd->add_option("--checkpoint", checkpoint_path, "score this checkpoint on the test split instead");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "d_state sensitivity sweep");
    sweep_cmd->add_option("--corpus", corpus_path, "corpus archive")->required();

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "full model plus the six component removals");
    ablate_cmd->add_option("--corpus", corpus_path, "corpus archive")->required();

    // plot
    auto* plot_cmd = app.add_subcommand("plot", "render SVG line charts from a history/sweep CSV");
    std::string csv_path;
    plot_cmd->add_option("--input", csv_path, "history or sweep CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        cli::CliConfig config;
        const bool needs_config = train_cmd->parsed() || eval_cmd->parsed() || sweep_cmd->parsed() ||
                                  ablate_cmd->parsed() || label_cmd->parsed();
        if (needs_config)
            config = cli::load_cli_config(config_path, overrides, seed_given ? &seed : nullptr);

        if (ingest->parsed()) {
            cli::IngestArgs args{edge_path, meta_path, embed_path, out_dir, edge_header, meta_header, year_column};
            return cli::cmd_ingest(args);
        }
        if (kqi_cmd->parsed()) {
            return cli::cmd_kqi(cli::KqiArgs{corpus_path, out_dir, kqi_classes});
        }
        if (label_cmd->parsed()) {
            return cli::cmd_label(cli::LabelArgs{corpus_path, out_dir, config});
        }
        if (train_cmd->parsed()) {
            return cli::cmd_train(cli::TrainArgs{corpus_path, out_dir, config, config_path});
        }
        if (eval_cmd->parsed()) {
            return cli::cmd_eval(cli::EvalArgs{corpus_path, out_dir, config, config_path, jobs, checkpoint_path});
        }
        if (sweep_cmd->parsed()) {
            return cli::cmd_sweep(cli::SweepArgs{corpus_path, out_dir, config, config_path, jobs});
        }
        if (ablate_cmd->parsed()) {
            return cli::cmd_ablate(cli::AblateArgs{corpus_path, out_dir, config, config_path, jobs});
        }
        if (plot_cmd->parsed()) {
            return cli::cmd_plot(cli::PlotArgs{csv_path, out_dir});
        }
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return cli::kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return cli::kExitFailure;
    }
    return cli::kExitFailure;
}
