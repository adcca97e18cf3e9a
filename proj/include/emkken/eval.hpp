#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emkken/graph.hpp"
#include "emkken/model.hpp"
#include "emkken/tensor.hpp"

namespace emkken::eval {

/// Fraction of matching entries; ContractError on empty input.
double accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

/// Unweighted mean of per-class F1. A class absent from both pred and truth
/// contributes 0 (flagged through the optional warning counter).
double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth, int n_classes,
                int* absent_classes = nullptr);

/// One-vs-rest AUC. C=2 uses the class-1 score column; C>2 macro-averages
/// the per-class binary AUCs. Ties count 0.5 (Mann-Whitney). Classes with
/// no positives or no negatives are skipped; all skipped is an error.
double auc_ovr(const Tensor& scores, const std::vector<int>& truth, int* skipped_classes = nullptr);

/// Binary AUC on raw scores (pairwise concordance with 0.5 ties).
double auc_binary(const std::vector<double>& scores, const std::vector<int>& positive);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

struct MetricsReport {
    MeanStd acc, f1, auc;
    int n_trials = 0;
    std::vector<double> acc_per_trial, f1_per_trial, auc_per_trial;
    int diverged_trials = 0;
};

/// How a dataset gets its labels inside the harness.
struct LabelSpec {
    enum class Kind { complexity, provided, kqi } kind = Kind::complexity;
    int n_classes = 2;
    std::vector<int> provided;  // used when kind == provided
};

struct TrialProtocol {
    double train_ratio = 0.8;
    double val_ratio = 0.1;
    double test_ratio = 0.1;
    int n_trials = 10;
    int jobs = 1;
};

/// Repeated-trial protocol: trial i uses seed base_seed + i for split shuffling
/// and init; reports mean +/- std of the test metrics. Labels from a
/// complexity criterion are refit per trial on that trial's train portion.
MetricsReport run_trials(const graph::CitationCorpus& corpus, model::EgoDataset dataset, const LabelSpec& labels,
                         const model::EmkKenConfig& config, const TrialProtocol& protocol);

struct SweepResult {
    std::string axis;  // "d_state1" | "d_state2"
    std::vector<int> grid;
    std::vector<MetricsReport> reports;
};

/// Default sensitivity-sweep grids per axis.
std::vector<int> default_sweep_grid(const std::string& axis);

/// One run_trials per grid value with everything else fixed.
SweepResult sweep_d_state(const graph::CitationCorpus& corpus, const model::EgoDataset& dataset,
                          const LabelSpec& labels, const model::EmkKenConfig& config, const TrialProtocol& protocol,
                          const std::string& axis, const std::vector<int>& grid);

std::string report_to_json(const MetricsReport& report);
std::string report_to_csv(const MetricsReport& report);
std::string sweep_to_csv(const SweepResult& sweep);

/// Labels a dataset in place according to the spec'd criterion. Complexity
/// fitting indices may be a subset (the train split); pass all indices for
/// whole-corpus fitting.
void assign_labels(model::EgoDataset& dataset, const graph::CitationCorpus& corpus, const LabelSpec& spec,
                   const std::vector<std::size_t>& complexity_fit_indices);

}  // namespace emkken::eval
