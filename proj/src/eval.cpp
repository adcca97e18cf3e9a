#include "emkken/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "emkken/errors.hpp"
#include "emkken/io_util.hpp"
#include "emkken/kqi.hpp"
#include "nlohmann/json.hpp"

namespace emkken::eval {

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.empty() || pred.size() != truth.size())
        throw ContractError("accuracy: need equal-length non-empty inputs");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth, int n_classes, int* absent_classes) {
    if (pred.empty() || pred.size() != truth.size())
        throw ContractError("macro_f1: need equal-length non-empty inputs");
    if (n_classes < 2) throw ContractError("macro_f1: n_classes must be >= 2");
    std::vector<long> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int p = pred[i], y = truth[i];
        if (p < 0 || p >= n_classes || y < 0 || y >= n_classes)
            throw IndexError("macro_f1: label out of range at index " + std::to_string(i));
        if (p == y)
            ++tp[y];
        else {
            ++fp[p];
            ++fn[y];
        }
    }
    int absent = 0;
    double sum = 0.0;
    for (int c = 0; c < n_classes; ++c) {
        if (tp[c] + fp[c] + fn[c] == 0) {
            ++absent;  // contributes F1 = 0
            continue;
        }
        const double prec = tp[c] + fp[c] > 0 ? static_cast<double>(tp[c]) / (tp[c] + fp[c]) : 0.0;
        const double rec = tp[c] + fn[c] > 0 ? static_cast<double>(tp[c]) / (tp[c] + fn[c]) : 0.0;
        sum += (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    }
    if (absent_classes) *absent_classes = absent;
    return sum / n_classes;
}

double auc_binary(const std::vector<double>& scores, const std::vector<int>& positive) {
    if (scores.size() != positive.size() || scores.empty()) throw ContractError("auc_binary: bad inputs");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // average ranks over ties = Mann-Whitney with 0.5 per tied pair
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t k = 0; k < n; ++k)
        if (positive[k]) {
            pos_rank_sum += rank[k];
            ++n_pos;
        }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw ContractError("auc_binary: need both positives and negatives");
    const double u = pos_rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auc_ovr(const Tensor& scores, const std::vector<int>& truth, int* skipped_classes) {
    if (scores.rank() != 2) throw ContractError("auc_ovr: scores must be [N,C]");
    const int n = scores.dim(0), c = scores.dim(1);
    if (static_cast<int>(truth.size()) != n) throw ContractError("auc_ovr: truth length mismatch");
    for (int i = 0; i < n; ++i) {
        double rowsum = 0.0;
        for (int j = 0; j < c; ++j) rowsum += scores.at(i, j);
        if (std::fabs(rowsum - 1.0) > 1e-6)
            throw ContractError("auc_ovr: score row " + std::to_string(i) + " sums to " + std::to_string(rowsum));
    }
    auto column = [&](int cls) {
        std::vector<double> col(n);
        for (int i = 0; i < n; ++i) col[i] = scores.at(i, cls);
        return col;
    };
    auto positives = [&](int cls) {
        std::vector<int> pos(n);
        for (int i = 0; i < n; ++i) pos[i] = truth[i] == cls ? 1 : 0;
        return pos;
    };
    int skipped = 0;
    double sum = 0.0;
    int used = 0;
    const int first = c == 2 ? 1 : 0;  // binary: class-1 score column only
    const int last = c == 2 ? 1 : c - 1;
    for (int cls = first; cls <= last; ++cls) {
        std::vector<int> pos = positives(cls);
        const long n_pos = std::count(pos.begin(), pos.end(), 1);
        if (n_pos == 0 || n_pos == n) {
            ++skipped;
            continue;
        }
        sum += auc_binary(column(cls), pos);
        ++used;
    }
    if (skipped_classes) *skipped_classes = skipped;
    if (used == 0) throw ContractError("auc_ovr: undefined, every class lacks positives or negatives");
    return sum / used;
}

namespace {

MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd ms;
    if (xs.empty()) return ms;
    double sum = 0.0;
    for (double x : xs) sum += x;
    ms.mean = sum / xs.size();
    double var = 0.0;
    for (double x : xs) var += (x - ms.mean) * (x - ms.mean);
    ms.std = std::sqrt(var / xs.size());
    return ms;
}

struct TrialOutcome {
    double acc = 0.0, f1 = 0.0, auc = 0.0;
    bool diverged = false;
};

TrialOutcome run_one_trial(const graph::CitationCorpus& corpus, const model::EgoDataset& base_dataset,
                           const LabelSpec& labels, const model::EmkKenConfig& config, const TrialProtocol& protocol,
                           int trial_index) {
    TrialOutcome out;
    model::EmkKenConfig cfg = config;
    cfg.seed = config.seed + static_cast<std::uint64_t>(trial_index);

    model::EgoDataset dataset = base_dataset;
    graph::DatasetSplit split;
    if (labels.kind == LabelSpec::Kind::complexity) {
        // split first (blind), then fit thresholds on the train portion only
        std::vector<int> blind(dataset.size(), 0);
        split = graph::split_dataset(blind, protocol.train_ratio, protocol.val_ratio, protocol.test_ratio, cfg.seed);
        assign_labels(dataset, corpus, labels, split.train);
    } else {
        split = graph::split_dataset(dataset.labels, protocol.train_ratio, protocol.val_ratio, protocol.test_ratio,
                                     cfg.seed);
    }

    try {
        model::EmkKenModel net = model::EmkKenModel::init_seeded(cfg);
        model::train(net, dataset, split);
        model::EvalResult test = model::evaluate(net, dataset, split.test, cfg.batch_size);
        out.acc = test.acc;
        out.f1 = test.f1;
        out.auc = test.auc;
    } catch (const DivergenceError&) {
        out.diverged = true;
    }
    return out;
}

}  // namespace

void assign_labels(model::EgoDataset& dataset, const graph::CitationCorpus& corpus, const LabelSpec& spec,
                   const std::vector<std::size_t>& complexity_fit_indices) {
    switch (spec.kind) {
        case LabelSpec::Kind::provided: {
            if (spec.provided.size() != dataset.size())
                throw SchemaError("provided labels cover " + std::to_string(spec.provided.size()) + " of " +
                                  std::to_string(dataset.size()) + " samples");
            dataset.labels = spec.provided;
            return;
        }
        case LabelSpec::Kind::kqi: {
            kqi::KnowledgeTree tree = kqi::to_dag(corpus);
            kqi::VolumeTable volumes = kqi::compute_volumes(tree);
            kqi::KqiScore score = kqi::kqi_all(tree, volumes);
            std::vector<double> central(dataset.size());
            for (std::size_t i = 0; i < dataset.size(); ++i) central[i] = score.kappa[dataset.egos[i].center];
            dataset.labels = kqi::log_bin(central, spec.n_classes).labels;
            return;
        }
        case LabelSpec::Kind::complexity: {
            const std::vector<int> in_deg = corpus.in_degrees();
            std::vector<graph::ComplexityLabeler::EgoFeatures> all_features(dataset.size());
            for (std::size_t i = 0; i < dataset.size(); ++i)
                all_features[i] = graph::ComplexityLabeler::features_of(dataset.egos[i], in_deg);
            std::vector<graph::ComplexityLabeler::EgoFeatures> fit_features;
            if (complexity_fit_indices.empty()) {
                fit_features = all_features;
            } else {
                fit_features.reserve(complexity_fit_indices.size());
                for (std::size_t idx : complexity_fit_indices) fit_features.push_back(all_features[idx]);
            }
            graph::ComplexityLabeler labeler;
            labeler.fit(fit_features, spec.n_classes);
            dataset.labels.resize(dataset.size());
            for (std::size_t i = 0; i < dataset.size(); ++i) dataset.labels[i] = labeler.label(all_features[i]);
            return;
        }
    }
    throw ContractError("unknown label criterion");
}

MetricsReport run_trials(const graph::CitationCorpus& corpus, model::EgoDataset dataset, const LabelSpec& labels,
                         const model::EmkKenConfig& config, const TrialProtocol& protocol) {
    if (protocol.n_trials < 1) throw ContractError("run_trials: n_trials must be >= 1");
    if (labels.kind != LabelSpec::Kind::complexity && dataset.labels.empty())
        assign_labels(dataset, corpus, labels, {});

    std::vector<TrialOutcome> outcomes(protocol.n_trials);
    const int jobs = std::max(1, protocol.jobs);
    if (jobs == 1) {
        for (int i = 0; i < protocol.n_trials; ++i)
            outcomes[i] = run_one_trial(corpus, dataset, labels, config, protocol, i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int w = 0; w < std::min(jobs, protocol.n_trials); ++w) {
            pool.emplace_back([&]() {
                while (true) {
                    const int i = next.fetch_add(1);
                    if (i >= protocol.n_trials) break;
                    outcomes[i] = run_one_trial(corpus, dataset, labels, config, protocol, i);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    MetricsReport report;
    report.n_trials = protocol.n_trials;
    for (const TrialOutcome& o : outcomes) {
        if (o.diverged) {
            ++report.diverged_trials;
            continue;
        }
        report.acc_per_trial.push_back(o.acc);
        report.f1_per_trial.push_back(o.f1);
        report.auc_per_trial.push_back(o.auc);
    }
    report.acc = mean_std(report.acc_per_trial);
    report.f1 = mean_std(report.f1_per_trial);
    report.auc = mean_std(report.auc_per_trial);
    return report;
}

std::vector<int> default_sweep_grid(const std::string& axis) {
    if (axis == "d_state1") return {1, 2, 4, 8, 16};
    if (axis == "d_state2") return {8, 16, 32, 64, 120};
    throw ConfigError("unknown sweep axis '" + axis + "' (want d_state1 or d_state2)");
}

SweepResult sweep_d_state(const graph::CitationCorpus& corpus, const model::EgoDataset& dataset,
                          const LabelSpec& labels, const model::EmkKenConfig& config, const TrialProtocol& protocol,
                          const std::string& axis, const std::vector<int>& grid) {
    if (axis != "d_state1" && axis != "d_state2") throw ConfigError("unknown sweep axis '" + axis + "'");
    if (grid.empty()) throw ContractError("sweep grid is empty");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (grid[i] <= grid[i - 1]) throw ContractError("sweep grid must be strictly increasing");
    SweepResult result;
    result.axis = axis;
    result.grid = grid;
    for (int value : grid) {
        model::EmkKenConfig cfg = config;
        if (axis == "d_state1")
            cfg.d_state1 = value;
        else
            cfg.d_state2 = value;
        cfg.validate();  // range check per documented axis bounds
        result.reports.push_back(run_trials(corpus, dataset, labels, cfg, protocol));
    }
    return result;
}

std::string report_to_json(const MetricsReport& report) {
    nlohmann::json j;
    j["n_trials"] = report.n_trials;
    j["diverged_trials"] = report.diverged_trials;
    j["acc"] = {{"mean", report.acc.mean}, {"std", report.acc.std}, {"per_trial", report.acc_per_trial}};
    j["f1"] = {{"mean", report.f1.mean}, {"std", report.f1.std}, {"per_trial", report.f1_per_trial}};
    j["auc"] = {{"mean", report.auc.mean}, {"std", report.auc.std}, {"per_trial", report.auc_per_trial}};
    return j.dump(2) + "\n";
}

std::string report_to_csv(const MetricsReport& report) {
    std::string out = "trial,acc,f1,auc\n";
    for (std::size_t i = 0; i < report.acc_per_trial.size(); ++i)
        out += std::to_string(i) + "," + io::fmt_double(report.acc_per_trial[i]) + "," +
               io::fmt_double(report.f1_per_trial[i]) + "," + io::fmt_double(report.auc_per_trial[i]) + "\n";
    return out;
}

std::string sweep_to_csv(const SweepResult& sweep) {
    std::string out = "axis_value,acc,f1,auc\n";
    for (std::size_t i = 0; i < sweep.grid.size(); ++i)
        out += std::to_string(sweep.grid[i]) + "," + io::fmt_double(sweep.reports[i].acc.mean) + "," +
               io::fmt_double(sweep.reports[i].f1.mean) + "," + io::fmt_double(sweep.reports[i].auc.mean) + "\n";
    return out;
}

}  // namespace emkken::eval
