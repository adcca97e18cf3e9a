#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "doctest.h"
#include "emkken/commands.hpp"
#include "emkken/errors.hpp"
#include "emkken/io_util.hpp"
#include "nlohmann/json.hpp"
#include "support/synthetic.hpp"

using namespace emkken;
using namespace emkken::cli;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("emkken_cli_" + tag + "_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

/// Compare every artifact except manifest.json (its wall time varies).
void check_dirs_identical(const std::string& a, const std::string& b) {
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(a)) {
        const std::string name = entry.path().filename().string();
        if (name != "manifest.json") names.push_back(name);
    }
    CHECK(!names.empty());
    for (const std::string& name : names) {
        INFO(name);
        REQUIRE(fs::exists(fs::path(b) / name));
        CHECK(io::read_bytes((fs::path(a) / name).string()) == io::read_bytes((fs::path(b) / name).string()));
    }
}

std::string ingest_synthetic(const synthetic::Data& data, TempDir& dir, const std::string& out_name) {
    std::string edges, meta, embed;
    synthetic::write_files(data, dir.path.string(), edges, meta, embed);
    IngestArgs args;
    args.edge_path = edges;
    args.meta_path = meta;
    args.embed_path = embed;
    args.out_dir = dir.file(out_name);
    args.year_column = 0;  // first metadata column is the year
    REQUIRE(cmd_ingest(args) == kExitOk);
    return (fs::path(args.out_dir) / "corpus.emkc").string();
}

CliConfig tiny_cli_config() {
    CliConfig cfg;
    cfg.model = synthetic::small_config(synthetic::Spec{});
    cfg.model.epochs = 2;
    cfg.n_trials = 2;
    cfg.label_criterion = "complexity";
    return cfg;
}

}  // namespace

TEST_CASE("cmd_ingest emits archive plus stats and is byte-deterministic") {
    TempDir dir("ingest");
    write_file(dir.file("edges.csv"), "0,1\n0,2\n1,1\n");
    write_file(dir.file("meta.csv"), "0,1.0,2.0\n1,3.0,4.0\n2,5.0,6.0\n");
    write_file(dir.file("embed.csv"), "0,0.1,0.2\n1,0.3,0.4\n2,0.5,0.6\n");

    IngestArgs args;
    args.edge_path = dir.file("edges.csv");
    args.meta_path = dir.file("meta.csv");
    args.embed_path = dir.file("embed.csv");
    args.out_dir = dir.file("out1");
    CHECK(cmd_ingest(args) == kExitOk);
    CHECK(fs::exists(dir.file("out1/corpus.emkc")));
    CHECK(fs::exists(dir.file("out1/stats.json")));
    CHECK(fs::exists(dir.file("out1/manifest.json")));

    auto stats = nlohmann::json::parse(io::read_text(dir.file("out1/stats.json")));
    CHECK(stats["node_count"] == 3);
    CHECK(stats["edge_count"] == 2);
    CHECK(stats["dropped_self_loops"] == 1);
    CHECK(stats.contains("avg_degree_mean"));
    CHECK(stats.contains("merged_clustering_coefficient"));

    // manifest checksums match the emitted files
    auto manifest = nlohmann::json::parse(io::read_text(dir.file("out1/manifest.json")));
    CHECK(manifest["artifacts"]["stats.json"] == io::fnv1a_hex(dir.file("out1/stats.json")));
    CHECK(manifest["artifacts"]["corpus.emkc"] == io::fnv1a_hex(dir.file("out1/corpus.emkc")));

    // re-ingesting the same inputs gives byte-identical artifacts
    args.out_dir = dir.file("out2");
    CHECK(cmd_ingest(args) == kExitOk);
    check_dirs_identical(dir.file("out1"), dir.file("out2"));

    // missing file: exit 2, message names the path
    args.edge_path = dir.file("missing.csv");
    args.out_dir = dir.file("out3");
    CHECK(cmd_ingest(args) == kExitIngestSchema);

    // schema violation: exit 2
    write_file(dir.file("bad_meta.csv"), "0,1.0\n1,2.0,3.0\n");
    args.edge_path = dir.file("edges.csv");
    args.meta_path = dir.file("bad_meta.csv");
    CHECK(cmd_ingest(args) == kExitIngestSchema);
}

TEST_CASE("cmd_kqi on a chain corpus") {
    TempDir dir("kqi");
    // chain: 2 cites 1 cites 0
    write_file(dir.file("edges.csv"), "1,0\n2,1\n");
    write_file(dir.file("meta.csv"), "0,1.0\n1,1.0\n2,1.0\n");
    write_file(dir.file("embed.csv"), "0,0.1\n1,0.1\n2,0.1\n");
    IngestArgs ingest;
    ingest.edge_path = dir.file("edges.csv");
    ingest.meta_path = dir.file("meta.csv");
    ingest.embed_path = dir.file("embed.csv");
    ingest.out_dir = dir.file("corpus");
    REQUIRE(cmd_ingest(ingest) == kExitOk);

    KqiArgs args;
    args.corpus_path = dir.file("corpus/corpus.emkc");
    args.out_dir = dir.file("kqi_out");
    CHECK(cmd_kqi(args) == kExitOk);
    const std::string csv = io::read_text(dir.file("kqi_out/kqi.csv"));
    CHECK(csv.find("id,volume,kappa,log_kappa,label") == 0);
    // kappa column: 0 for node 0, 1/3 for node 1, 0 for node 2
    CHECK(csv.find("\n0,2,0,-inf,0") != std::string::npos);
    CHECK(csv.find("\n1,1,0.333333333333,") != std::string::npos);
    CHECK(csv.find("\n2,0,0,-inf,0") != std::string::npos);
    CHECK(fs::exists(dir.file("kqi_out/kqi_summary.json")));

    // edgeless corpus: warning without labels, exit 3 with labels
    TempDir dir2("kqi_flat");
    write_file(dir2.file("edges.csv"), "\n");
    write_file(dir2.file("meta.csv"), "0,1.0\n1,1.0\n");
    write_file(dir2.file("embed.csv"), "0,0.1\n1,0.1\n");
    IngestArgs flat;
    flat.edge_path = dir2.file("edges.csv");
    flat.meta_path = dir2.file("meta.csv");
    flat.embed_path = dir2.file("embed.csv");
    flat.out_dir = dir2.file("corpus");
    REQUIRE(cmd_ingest(flat) == kExitOk);
    KqiArgs noclass;
    noclass.corpus_path = dir2.file("corpus/corpus.emkc");
    noclass.out_dir = dir2.file("a");
    CHECK(cmd_kqi(noclass) == kExitOk);
    KqiArgs withclass = noclass;
    withclass.out_dir = dir2.file("b");
    withclass.n_classes = 2;
    CHECK(cmd_kqi(withclass) == kExitDegenerateKqi);
}

TEST_CASE("cmd_kqi binning splits a thousand-node corpus evenly") {
    TempDir dir("kqi_bins");
    // one 1002-node chain: interior nodes carry strictly distinct positive
    // kappa values, so 2-class binning lands 500/500
    const int id = 1002;
    std::string edge_text, meta_text, embed_text;
    for (int i = 1; i < id; ++i) edge_text += std::to_string(i) + "," + std::to_string(i - 1) + "\n";
    for (int i = 0; i < id; ++i) {
        meta_text += std::to_string(i) + ",1.0\n";
        embed_text += std::to_string(i) + ",0.5\n";
    }
    write_file(dir.file("edges.csv"), edge_text);
    write_file(dir.file("meta.csv"), meta_text);
    write_file(dir.file("embed.csv"), embed_text);
    IngestArgs ingest;
    ingest.edge_path = dir.file("edges.csv");
    ingest.meta_path = dir.file("meta.csv");
    ingest.embed_path = dir.file("embed.csv");
    ingest.out_dir = dir.file("corpus");
    REQUIRE(cmd_ingest(ingest) == kExitOk);
    KqiArgs args;
    args.corpus_path = dir.file("corpus/corpus.emkc");
    args.out_dir = dir.file("out");
    args.n_classes = 2;
    CHECK(cmd_kqi(args) == kExitOk);

    // among nodes with kappa > 0, classes are balanced within +-1
    const std::string csv = io::read_text(dir.file("out/kqi.csv"));
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    int c0 = 0, c1 = 0;
    while (std::getline(in, line)) {
        const auto fields = io::split_csv_line(line);
        if (fields[3] == "-inf") continue;
        (fields[4] == "0" ? c0 : c1)++;
    }
    CHECK(std::abs(c0 - c1) <= 1);
}

TEST_CASE("cmd_label and cmd_train on a synthetic corpus") {
    TempDir dir("train");
    synthetic::Spec spec;
    spec.n_egos = 30;
    synthetic::Data data = synthetic::make(spec);
    const std::string corpus = ingest_synthetic(data, dir, "corpus");

    LabelArgs label;
    label.corpus_path = corpus;
    label.out_dir = dir.file("labels");
    label.config = tiny_cli_config();
    CHECK(cmd_label(label) == kExitOk);
    const std::string labels_csv = io::read_text(dir.file("labels/labels.csv"));
    CHECK(labels_csv.find("id,label") == 0);

    TrainArgs train;
    train.corpus_path = corpus;
    train.out_dir = dir.file("run1");
    train.config = tiny_cli_config();
    CHECK(cmd_train(train) == kExitOk);
    CHECK(fs::exists(dir.file("run1/checkpoint.emkt")));
    CHECK(fs::exists(dir.file("run1/history.csv")));
    const std::string history = io::read_text(dir.file("run1/history.csv"));
    CHECK(history.find("epoch,split,loss,acc,f1,auc") == 0);

    // byte-identical second run
    train.out_dir = dir.file("run2");
    CHECK(cmd_train(train) == kExitOk);
    check_dirs_identical(dir.file("run1"), dir.file("run2"));

    // provided-labels path
    TrainArgs provided = train;
    provided.out_dir = dir.file("run3");
    provided.config.label_criterion = "provided";
    provided.config.label_file = dir.file("provided.csv");
    std::string provided_text = "";
    for (std::size_t i = 0; i < data.corpus.node_count(); ++i)
        provided_text += std::to_string(data.corpus.external_ids[i]) + "," + std::to_string(i % 2) + "\n";
    write_file(dir.file("provided.csv"), provided_text);
    CHECK(cmd_train(provided) == kExitOk);

    // epochs = 0 leaves an init checkpoint and an empty history body
    TrainArgs zero = train;
    zero.out_dir = dir.file("run0");
    zero.config.model.epochs = 0;
    CHECK(cmd_train(zero) == kExitOk);
    const std::string h0 = io::read_text(dir.file("run0/history.csv"));
    CHECK(h0 == "epoch,split,loss,acc,f1,auc\n");

    // divergence exits with the dedicated code
    TrainArgs exploding = train;
    exploding.out_dir = dir.file("run_div");
    exploding.config.model.epochs = 40;
    exploding.config.model.lr = 1e18;
    CHECK(cmd_train(exploding) == kExitDivergence);
}

TEST_CASE("cmd_eval, cmd_sweep, cmd_ablate shapes") {
    TempDir dir("harness");
    synthetic::Spec spec;
    spec.n_egos = 30;
    synthetic::Data data = synthetic::make(spec);
    const std::string corpus = ingest_synthetic(data, dir, "corpus");
    CliConfig cfg = tiny_cli_config();
    cfg.model.epochs = 1;
    cfg.n_trials = 2;

    EvalArgs ev;
    ev.corpus_path = corpus;
    ev.out_dir = dir.file("eval");
    ev.config = cfg;
    CHECK(cmd_eval(ev) == kExitOk);
    auto report = nlohmann::json::parse(io::read_text(dir.file("eval/report.json")));
    CHECK(report["n_trials"] == 2);
    CHECK(report["acc"]["per_trial"].size() == 2);

    // checkpoint path: train once, then score the saved weights
    TrainArgs tr;
    tr.corpus_path = corpus;
    tr.out_dir = dir.file("ckpt_train");
    tr.config = cfg;
    REQUIRE(cmd_train(tr) == kExitOk);
    EvalArgs ckpt_eval;
    ckpt_eval.corpus_path = corpus;
    ckpt_eval.out_dir = dir.file("ckpt_eval");
    ckpt_eval.config = cfg;
    ckpt_eval.checkpoint_path = dir.file("ckpt_train/checkpoint.emkt");
    CHECK(cmd_eval(ckpt_eval) == kExitOk);
    auto ckpt_report = nlohmann::json::parse(io::read_text(dir.file("ckpt_eval/report.json")));
    CHECK(ckpt_report["n_trials"] == 1);
    CHECK(ckpt_report["acc"]["std"] == 0.0);

    SweepArgs sw;
    sw.corpus_path = corpus;
    sw.out_dir = dir.file("sweep");
    sw.config = cfg;
    sw.config.n_trials = 1;
    sw.config.sweep_axis = "d_state1";
    sw.config.sweep_grid = {1, 2};
    CHECK(cmd_sweep(sw) == kExitOk);
    const std::string sweep_csv = io::read_text(dir.file("sweep/sweep.csv"));
    CHECK(sweep_csv.find("axis_value,acc,f1,auc") == 0);
    CHECK(std::count(sweep_csv.begin(), sweep_csv.end(), '\n') == 3);  // header + 2 rows

    AblateArgs ab;
    ab.corpus_path = corpus;
    ab.out_dir = dir.file("ablate");
    ab.config = cfg;
    ab.config.n_trials = 1;
    CHECK(cmd_ablate(ab) == kExitOk);
    const std::string ablate_csv = io::read_text(dir.file("ablate/ablate.csv"));
    CHECK(std::count(ablate_csv.begin(), ablate_csv.end(), '\n') == 8);  // header + full + 6 variants
    CHECK(ablate_csv.find("full,") != std::string::npos);
    CHECK(ablate_csv.find("no_metafp,") != std::string::npos);
    CHECK(ablate_csv.find("no_kan_dropout,") != std::string::npos);
}

TEST_CASE("cmd_plot emits one svg per metric") {
    TempDir dir("plot");
    write_file(dir.file("history.csv"),
               "epoch,split,loss,acc,f1,auc\n"
               "1,train,0.9,0.5,0.45,0.52\n"
               "2,train,0.7,0.6,0.58,0.63\n");
    PlotArgs args;
    args.csv_path = dir.file("history.csv");
    args.out_dir = dir.file("out1");
    CHECK(cmd_plot(args) == kExitOk);
    CHECK(fs::exists(dir.file("out1/loss.svg")));
    CHECK(fs::exists(dir.file("out1/acc.svg")));
    CHECK(fs::exists(dir.file("out1/f1.svg")));
    CHECK(fs::exists(dir.file("out1/auc.svg")));

    // identical input twice -> byte-identical SVGs
    args.out_dir = dir.file("out2");
    CHECK(cmd_plot(args) == kExitOk);
    check_dirs_identical(dir.file("out1"), dir.file("out2"));

    write_file(dir.file("bad.csv"), "epoch,split,loss\n1,train\n");
    PlotArgs bad;
    bad.csv_path = dir.file("bad.csv");
    bad.out_dir = dir.file("out3");
    CHECK(cmd_plot(bad) == kExitPlotInput);
}

TEST_CASE("config loading, overrides, validation errors") {
    TempDir dir("config");
    write_file(dir.file("config.json"),
               "{\"F_meta\":4,\"F_embed\":8,\"epochs\":3,\"n_trials\":5,"
               "\"label_criterion\":\"kqi\",\"label_classes\":2}");
    CliConfig cfg = load_cli_config(dir.file("config.json"), {}, nullptr);
    CHECK(cfg.model.f_meta == 4);
    CHECK(cfg.model.epochs == 3);
    CHECK(cfg.n_trials == 5);
    CHECK(cfg.label_criterion == "kqi");

    // --set overrides, nested keys included
    CliConfig over = load_cli_config(dir.file("config.json"),
                                     {"epochs=7", "ablation.no_kan=true", "scan_mode=zoh"}, nullptr);
    CHECK(over.model.epochs == 7);
    CHECK(over.model.ablation.no_kan);
    CHECK(over.model.scan_mode == layers::ScanMode::zoh);

    // --seed override
    std::uint64_t seed = 777;
    CliConfig seeded = load_cli_config(dir.file("config.json"), {}, &seed);
    CHECK(seeded.model.seed == 777);

    // invalid d_state2 -> config error naming the field
    try {
        (void)load_cli_config(dir.file("config.json"), {"d_state2=0"}, nullptr);
        CHECK(false);
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("d_state2") != std::string::npos);
    }

    CHECK_THROWS_AS((void)load_cli_config(dir.file("config.json"), {"oops"}, nullptr), ConfigError);
}

TEST_CASE("cli binary end to end: exit codes and determinism") {
    const char* cli = std::getenv("EMKKEN_CLI");
    REQUIRE(cli != nullptr);
    TempDir dir("binary");
    write_file(dir.file("edges.csv"), "0,1\n");
    write_file(dir.file("meta.csv"), "0,1.0\n1,2.0\n");
    write_file(dir.file("embed.csv"), "0,0.1\n1,0.2\n");

    auto run = [&](const std::string& args) {
        const std::string cmd = std::string(cli) + " " + args + " >/dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    };

    CHECK(run("--out " + dir.file("ok") + " ingest --edges " + dir.file("edges.csv") + " --meta " +
              dir.file("meta.csv") + " --embed " + dir.file("embed.csv")) == 0);
    CHECK(fs::exists(dir.file("ok/corpus.emkc")));

    // missing input: ingest schema exit code
    CHECK(run("--out " + dir.file("bad") + " ingest --edges " + dir.file("nope.csv") + " --meta " +
              dir.file("meta.csv") + " --embed " + dir.file("embed.csv")) == 2);

    // config violation: exit 5 (d_state2 out of range)
    CHECK(run("--out " + dir.file("cfg") + " --set d_state2=0 train --corpus " + dir.file("ok/corpus.emkc")) == 5);

    // kqi over the tiny corpus works and is deterministic
    CHECK(run("--out " + dir.file("k1") + " kqi --corpus " + dir.file("ok/corpus.emkc")) == 0);
    CHECK(run("--out " + dir.file("k2") + " kqi --corpus " + dir.file("ok/corpus.emkc")) == 0);
    check_dirs_identical(dir.file("k1"), dir.file("k2"));

    // plot on malformed csv: exit 6
    write_file(dir.file("bad.csv"), "epoch,split\n");
    CHECK(run("--out " + dir.file("p") + " plot --input " + dir.file("bad.csv")) == 6);
}
