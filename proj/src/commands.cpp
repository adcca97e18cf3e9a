#include "emkken/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include "emkken/archive.hpp"
#include "emkken/checkpoint.hpp"
#include "emkken/errors.hpp"
#include "emkken/eval.hpp"
#include "emkken/io_util.hpp"
#include "emkken/kqi.hpp"
#include "emkken/svg_plot.hpp"
#include "nlohmann/json.hpp"

namespace emkken::cli {

namespace {

namespace fs = std::filesystem;

class ManifestWriter {
public:
    ManifestWriter(std::string command, std::string out_dir, std::string config_path,
                   std::vector<std::string> inputs, std::uint64_t seed)
        : command_(std::move(command)),
          out_dir_(std::move(out_dir)),
          config_path_(std::move(config_path)),
          inputs_(std::move(inputs)),
          seed_(seed),
          start_(std::chrono::steady_clock::now()) {
        fs::create_directories(out_dir_);
    }

    std::string path(const std::string& filename) const { return (fs::path(out_dir_) / filename).string(); }

    void emit(const std::string& filename, const std::string& content) {
        io::write_atomic(path(filename), content);
        artifacts_.push_back(filename);
    }

    void track(const std::string& filename) { artifacts_.push_back(filename); }

    void finish() {
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        nlohmann::json j;
        j["command"] = command_;
        j["config"] = config_path_;
        j["inputs"] = inputs_;
        j["out_dir"] = out_dir_;
        j["seed"] = seed_;
        j["wall_time_sec"] = wall;
        nlohmann::json checks;
        for (const std::string& a : artifacts_) checks[a] = io::fnv1a_hex(path(a));
        j["artifacts"] = checks;
        io::write_atomic(path("manifest.json"), j.dump(2) + "\n");
    }

private:
    std::string command_;
    std::string out_dir_;
    std::string config_path_;
    std::vector<std::string> inputs_;
    std::uint64_t seed_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> artifacts_;
};

nlohmann::json parse_set_value(const std::string& text) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception&) {
        return nlohmann::json(text);  // plain string
    }
}

void apply_override(nlohmann::json& doc, const std::string& kv) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const nlohmann::json value = parse_set_value(kv.substr(eq + 1));
    nlohmann::json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("--set key has empty segment: '" + key + "'");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

eval::LabelSpec label_spec_from_config(const CliConfig& cfg, const graph::CitationCorpus& corpus,
                                       const model::EgoDataset& dataset) {
    eval::LabelSpec spec;
    spec.n_classes = cfg.effective_label_classes();
    if (cfg.label_criterion == "complexity") {
        spec.kind = eval::LabelSpec::Kind::complexity;
    } else if (cfg.label_criterion == "kqi") {
        spec.kind = eval::LabelSpec::Kind::kqi;
    } else if (cfg.label_criterion == "provided") {
        spec.kind = eval::LabelSpec::Kind::provided;
        if (cfg.label_file.empty()) throw ConfigError("field label_file: required for criterion 'provided'");
        // CSV id,label over external ids
        const std::string text = io::read_text(cfg.label_file);
        std::vector<int> labels(dataset.size(), -1);
        std::size_t lineno = 0, assigned = 0;
        std::string line;
        std::istringstream in(text);
        std::unordered_map<std::int64_t, std::size_t> ext_to_dense;
        for (std::size_t i = 0; i < corpus.external_ids.size(); ++i) ext_to_dense[corpus.external_ids[i]] = i;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.find_first_not_of(" \t") == std::string::npos) continue;
            const auto fields = io::split_csv_line(line);
            if (fields.size() != 2)
                throw ParseError("label row needs id,label at " + cfg.label_file + ":" + std::to_string(lineno));
            const std::int64_t ext = io::parse_int(fields[0], cfg.label_file + ":" + std::to_string(lineno));
            auto it = ext_to_dense.find(ext);
            if (it == ext_to_dense.end())
                throw SchemaError("label id " + std::to_string(ext) + " unknown at line " + std::to_string(lineno));
            labels[it->second] =
                static_cast<int>(io::parse_int(fields[1], cfg.label_file + ":" + std::to_string(lineno)));
            ++assigned;
        }
        if (assigned != dataset.size())
            throw SchemaError("label file covers " + std::to_string(assigned) + " of " +
                              std::to_string(dataset.size()) + " nodes");
        spec.provided = std::move(labels);
    } else {
        throw ConfigError("field label_criterion: unknown value '" + cfg.label_criterion + "'");
    }
    return spec;
}

std::string ablate_csv(const graph::CitationCorpus& corpus, const model::EgoDataset& dataset,
                       const eval::LabelSpec& labels, const CliConfig& cfg, int jobs) {
    eval::TrialProtocol protocol{cfg.train_ratio, cfg.val_ratio, cfg.test_ratio, cfg.n_trials, jobs};
    std::string out = "variant,acc_mean,acc_std,f1_mean,f1_std,auc_mean,auc_std\n";
    std::vector<std::string> variants = {"full"};
    for (const std::string& v : model::ablation_variant_names()) variants.push_back(v);
    for (const std::string& variant : variants) {
        model::EmkKenConfig vcfg = model::apply_ablation(cfg.model, variant);
        eval::MetricsReport r = eval::run_trials(corpus, dataset, labels, vcfg, protocol);
        out += variant + "," + io::fmt_double(r.acc.mean) + "," + io::fmt_double(r.acc.std) + "," +
               io::fmt_double(r.f1.mean) + "," + io::fmt_double(r.f1.std) + "," + io::fmt_double(r.auc.mean) + "," +
               io::fmt_double(r.auc.std) + "\n";
    }
    return out;
}

double quantile_sorted(const std::vector<double>& xs, double q) {
    if (xs.empty()) return 0.0;
    const double pos = q * (xs.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(xs.size() - 1, lo + 1);
    const double frac = pos - lo;
    return xs[lo] * (1.0 - frac) + xs[hi] * frac;
}

}  // namespace

CliConfig load_cli_config(const std::string& config_path, const std::vector<std::string>& set_overrides,
                          const std::uint64_t* seed_override) {
    nlohmann::json doc = nlohmann::json::object();
    if (!config_path.empty()) {
        try {
            doc = nlohmann::json::parse(io::read_text(config_path));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config " + config_path + ": " + e.what());
        }
    }
    for (const std::string& kv : set_overrides) apply_override(doc, kv);
    if (seed_override) doc["seed"] = *seed_override;

    CliConfig cfg;
    cfg.model = model::config_from_json(doc.dump());
    try {
        if (doc.contains("split_ratios")) {
            const auto r = doc["split_ratios"].get<std::vector<double>>();
            if (r.size() != 3) throw ConfigError("field split_ratios: need [train,val,test]");
            cfg.train_ratio = r[0];
            cfg.val_ratio = r[1];
            cfg.test_ratio = r[2];
        }
        if (doc.contains("n_trials")) cfg.n_trials = doc["n_trials"].get<int>();
        if (doc.contains("label_criterion")) cfg.label_criterion = doc["label_criterion"].get<std::string>();
        if (doc.contains("label_classes")) cfg.label_classes = doc["label_classes"].get<int>();
        if (doc.contains("label_file")) cfg.label_file = doc["label_file"].get<std::string>();
        if (doc.contains("sweep_axis")) cfg.sweep_axis = doc["sweep_axis"].get<std::string>();
        if (doc.contains("sweep_grid")) cfg.sweep_grid = doc["sweep_grid"].get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    if (cfg.n_trials < 1) throw ConfigError("field n_trials: must be >= 1");
    if (cfg.train_ratio <= 0 || cfg.val_ratio <= 0 || cfg.test_ratio <= 0 ||
        std::fabs(cfg.train_ratio + cfg.val_ratio + cfg.test_ratio - 1.0) > 1e-9)
        throw ConfigError("field split_ratios: must be positive and sum to 1");
    return cfg;
}

int cmd_ingest(const IngestArgs& args) {
    try {
        ManifestWriter manifest("ingest", args.out_dir, "", {args.edge_path, args.meta_path, args.embed_path}, 0);

        graph::IngestOptions opts;
        opts.edge_header = args.edge_header;
        opts.meta_header = args.meta_header;
        opts.year_column = args.year_column;
        graph::CitationCorpus corpus = graph::ingest_corpus(args.edge_path, args.meta_path, args.embed_path, opts);

        io::save_corpus(manifest.path("corpus.emkc"), corpus);
        manifest.track("corpus.emkc");

        // per-ego means plus the merged (global) view
        model::EgoDataset dataset = model::build_ego_dataset(corpus);
        double deg = 0.0, den = 0.0, clu = 0.0;
        for (const auto& ego : dataset.egos) {
            graph::GraphStats st = graph::compute_stats(ego);
            deg += st.avg_degree;
            den += st.density;
            clu += st.clustering_coefficient;
        }
        const double n_egos = static_cast<double>(dataset.egos.size());
        graph::EgoNetwork global;
        global.center = 0;
        global.central_index = 0;
        for (std::size_t i = 0; i < corpus.node_count(); ++i)
            global.ordered_nodes.push_back(static_cast<graph::NodeId>(i));
        global.edges = corpus.edges;
        graph::GraphStats merged = graph::compute_stats(global);

        nlohmann::json st;
        st["node_count"] = corpus.node_count();
        st["edge_count"] = corpus.edge_count();
        st["f_meta"] = corpus.f_meta;
        st["f_embed"] = corpus.f_embed;
        st["dropped_self_loops"] = corpus.dropped_self_loops;
        st["dropped_duplicate_edges"] = corpus.dropped_duplicate_edges;
        st["avg_degree_mean"] = deg / n_egos;
        st["density_mean"] = den / n_egos;
        st["clustering_coefficient_mean"] = clu / n_egos;
        st["merged_avg_degree"] = merged.avg_degree;
        st["merged_density"] = merged.density;
        st["merged_clustering_coefficient"] = merged.clustering_coefficient;
        manifest.emit("stats.json", st.dump(2) + "\n");
        manifest.finish();
        if (corpus.dropped_self_loops || corpus.dropped_duplicate_edges)
            std::cerr << "ingest: dropped " << corpus.dropped_self_loops << " self-loops, "
                      << corpus.dropped_duplicate_edges << " duplicate edges\n";
        return kExitOk;
    } catch (const SchemaError& e) {
        std::cerr << e.what() << "\n";
        return kExitIngestSchema;
    } catch (const ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitIngestSchema;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitFailure;
    }
}

int cmd_kqi(const KqiArgs& args) {
    try {
        ManifestWriter manifest("kqi", args.out_dir, "", {args.corpus_path}, 0);
        graph::CitationCorpus corpus = io::load_corpus(args.corpus_path);
        kqi::KnowledgeTree tree = kqi::to_dag(corpus);
        kqi::VolumeTable volumes = kqi::compute_volumes(tree);
        kqi::KqiScore score = kqi::kqi_all(tree, volumes);

        const bool labels_requested = args.n_classes >= 2;
        kqi::LogBinResult bins;
        bool degenerate = true;
        for (double k : score.kappa)
            if (k > 0.0) degenerate = false;
        if (labels_requested) {
            bins = kqi::log_bin(score.kappa, args.n_classes);
        } else {
            bins.labels.assign(score.kappa.size(), 0);
            bins.degenerate_all_zero = degenerate;
        }

        std::string csv = "id,volume,kappa,log_kappa,label\n";
        for (std::size_t i = 0; i < score.kappa.size(); ++i) {
            const double k = score.kappa[i];
            csv += std::to_string(corpus.external_ids[i]) + "," + io::fmt_double(volumes.volume[i]) + "," +
                   io::fmt_double(k) + "," + (k > 0.0 ? io::fmt_double(std::log(k)) : std::string("-inf")) + "," +
                   std::to_string(bins.labels[i]) + "\n";
        }
        manifest.emit("kqi.csv", csv);

        // per-class quartiles of log(kappa) for box plots
        nlohmann::json summary;
        summary["total_volume"] = volumes.total;
        summary["removed_cycle_edges"] = tree.removed_cycle_edges;
        summary["degenerate_all_zero"] = degenerate;
        nlohmann::json classes = nlohmann::json::array();
        const int n_cls = labels_requested ? args.n_classes : 1;
        for (int c = 0; c < n_cls; ++c) {
            std::vector<double> logs;
            std::size_t count = 0;
            for (std::size_t i = 0; i < score.kappa.size(); ++i)
                if (bins.labels[i] == c) {
                    ++count;
                    if (score.kappa[i] > 0.0) logs.push_back(std::log(score.kappa[i]));
                }
            std::sort(logs.begin(), logs.end());
            nlohmann::json entry;
            entry["label"] = c;
            entry["count"] = count;
            if (!logs.empty()) {
                entry["min"] = logs.front();
                entry["max"] = logs.back();
                entry["q1"] = quantile_sorted(logs, 0.25);
                entry["median"] = quantile_sorted(logs, 0.5);
                entry["q3"] = quantile_sorted(logs, 0.75);
            } else {
                entry["min"] = nullptr;
                entry["max"] = nullptr;
                entry["q1"] = nullptr;
                entry["median"] = nullptr;
                entry["q3"] = nullptr;
            }
            classes.push_back(entry);
        }
        summary["classes"] = classes;
        manifest.emit("kqi_summary.json", summary.dump(2) + "\n");
        manifest.finish();

        if (degenerate) {
            std::cerr << "kqi: warning, every kappa is zero\n";
            if (labels_requested) return kExitDegenerateKqi;
        }
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitFailure;
    }
}

int cmd_label(const LabelArgs& args) {
    try {
        ManifestWriter manifest("label", args.out_dir, "", {args.corpus_path}, args.config.model.seed);
        graph::CitationCorpus corpus = io::load_corpus(args.corpus_path);
        model::EgoDataset dataset = model::build_ego_dataset(corpus);
        eval::LabelSpec spec = label_spec_from_config(args.config, corpus, dataset);
        // standalone labeling fits on the whole corpus
        eval::assign_labels(dataset, corpus, spec, {});
        std::string csv = "id,label\n";
        for (std::size_t i = 0; i < dataset.size(); ++i)
            csv += std::to_string(corpus.external_ids[i]) + "," + std::to_string(dataset.labels[i]) + "\n";
        manifest.emit("labels.csv", csv);
        manifest.finish();
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitFailure;
    }
}

int cmd_train(const TrainArgs& args) {
    try {
        const CliConfig& cfg = args.config;
        ManifestWriter manifest("train", args.out_dir, args.config_path, {args.corpus_path}, cfg.model.seed);
        graph::CitationCorpus corpus = io::load_corpus(args.corpus_path);
        model::EgoDataset dataset = model::build_ego_dataset(corpus);
        eval::LabelSpec spec = label_spec_from_config(cfg, corpus, dataset);

        graph::DatasetSplit split;
        if (spec.kind == eval::LabelSpec::Kind::complexity) {
            std::vector<int> blind(dataset.size(), 0);
            split = graph::split_dataset(blind, cfg.train_ratio, cfg.val_ratio, cfg.test_ratio, cfg.model.seed);
            eval::assign_labels(dataset, corpus, spec, split.train);
        } else {
            eval::assign_labels(dataset, corpus, spec, {});
            split = graph::split_dataset(dataset.labels, cfg.train_ratio, cfg.val_ratio, cfg.test_ratio,
                                         cfg.model.seed);
        }

        model::EmkKenModel net = model::EmkKenModel::init_seeded(cfg.model);
        model::History history = model::train(net, dataset, split);

        std::vector<const Parameter*> to_save;
        for (Parameter* p : net.parameters()) to_save.push_back(p);
        io::save_checkpoint(manifest.path("checkpoint.emkt"), to_save);
        manifest.track("checkpoint.emkt");
        manifest.emit("history.csv", model::history_to_csv(history));
        manifest.emit("config.json", model::config_to_json(cfg.model));
        manifest.finish();
        return kExitOk;
    } catch (const DivergenceError& e) {
        std::cerr << e.what() << "\n";
        return kExitDivergence;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitFailure;
    }
}

int cmd_eval(const EvalArgs& args) {
    try {
        const CliConfig& cfg = args.config;
        std::vector<std::string> inputs = {args.corpus_path};
        if (!args.checkpoint_path.empty()) inputs.push_back(args.checkpoint_path);
        ManifestWriter manifest("eval", args.out_dir, args.config_path, inputs, cfg.model.seed);
        graph::CitationCorpus corpus = io::load_corpus(args.corpus_path);
        model::EgoDataset dataset = model::build_ego_dataset(corpus);
        eval::LabelSpec spec = label_spec_from_config(cfg, corpus, dataset);

        eval::MetricsReport report;
        if (args.checkpoint_path.empty()) {
            eval::TrialProtocol protocol{cfg.train_ratio, cfg.val_ratio, cfg.test_ratio, cfg.n_trials, args.jobs};
            report = eval::run_trials(corpus, dataset, spec, cfg.model, protocol);
        } else {
            // single pass over the test split with the saved weights
            graph::DatasetSplit split;
            if (spec.kind == eval::LabelSpec::Kind::complexity) {
                std::vector<int> blind(dataset.size(), 0);
                split = graph::split_dataset(blind, cfg.train_ratio, cfg.val_ratio, cfg.test_ratio, cfg.model.seed);
                eval::assign_labels(dataset, corpus, spec, split.train);
            } else {
                eval::assign_labels(dataset, corpus, spec, {});
                split = graph::split_dataset(dataset.labels, cfg.train_ratio, cfg.val_ratio, cfg.test_ratio,
                                             cfg.model.seed);
            }
            model::EmkKenModel net = model::EmkKenModel::init_seeded(cfg.model);
            io::load_checkpoint(args.checkpoint_path, net.parameters());
            model::EvalResult test = model::evaluate(net, dataset, split.test, cfg.model.batch_size);
            report.n_trials = 1;
            report.acc_per_trial = {test.acc};
            report.f1_per_trial = {test.f1};
            report.auc_per_trial = {test.auc};
            report.acc = {test.acc, 0.0};
            report.f1 = {test.f1, 0.0};
            report.auc = {test.auc, 0.0};
        }
        manifest.emit("report.json", eval::report_to_json(report));
        manifest.emit("report_trials.csv", eval::report_to_csv(report));
        manifest.finish();
        return kExitOk;
    } catch (const DivergenceError& e) {
        std::cerr << e.what() << "\n";
        return kExitDivergence;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitFailure;
    }
}

int cmd_sweep(const SweepArgs& args) {
    try {
        const CliConfig& cfg = args.config;
        ManifestWriter manifest("sweep", args.out_dir, args.config_path, {args.corpus_path}, cfg.model.seed);
        graph::CitationCorpus corpus = io::load_corpus(args.corpus_path);
        model::EgoDataset dataset = model::build_ego_dataset(corpus);
        eval::LabelSpec spec = label_spec_from_config(cfg, corpus, dataset);
        eval::TrialProtocol protocol{cfg.train_ratio, cfg.val_ratio, cfg.test_ratio, cfg.n_trials, args.jobs};
        const std::vector<int> grid =
            cfg.sweep_grid.empty() ? eval::default_sweep_grid(cfg.sweep_axis) : cfg.sweep_grid;
        eval::SweepResult sweep =
            eval::sweep_d_state(corpus, dataset, spec, cfg.model, protocol, cfg.sweep_axis, grid);
        manifest.emit("sweep.csv", eval::sweep_to_csv(sweep));
        manifest.finish();
        return kExitOk;
    } catch (const DivergenceError& e) {
        std::cerr << e.what() << "\n";
        return kExitDivergence;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitFailure;
    }
}

int cmd_ablate(const AblateArgs& args) {
    try {
        const CliConfig& cfg = args.config;
        ManifestWriter manifest("ablate", args.out_dir, args.config_path, {args.corpus_path}, cfg.model.seed);
        graph::CitationCorpus corpus = io::load_corpus(args.corpus_path);
        model::EgoDataset dataset = model::build_ego_dataset(corpus);
        eval::LabelSpec spec = label_spec_from_config(cfg, corpus, dataset);
        manifest.emit("ablate.csv", ablate_csv(corpus, dataset, spec, cfg, args.jobs));
        manifest.finish();
        return kExitOk;
    } catch (const DivergenceError& e) {
        std::cerr << e.what() << "\n";
        return kExitDivergence;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitFailure;
    }
}

int cmd_plot(const PlotArgs& args) {
    try {
        ManifestWriter manifest("plot", args.out_dir, "", {args.csv_path}, 0);
        const std::string csv = io::read_text(args.csv_path);
        std::vector<plot::PlotOutput> charts = plot::charts_from_csv(csv);
        for (const auto& chart : charts) manifest.emit(chart.filename, chart.svg);
        manifest.finish();
        return kExitOk;
    } catch (const ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitPlotInput;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace emkken::cli
