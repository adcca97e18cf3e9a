#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "emkken/graph.hpp"
#include "emkken/layers.hpp"

namespace emkken::model {

using layers::ScanMode;

struct AblationFlags {
    bool no_metafp = false;
    bool no_conv = false;
    bool no_ssm = false;
    bool no_mamba = false;
    bool no_kan = false;
    bool no_kan_dropout = false;

    int count() const {
        return (no_metafp ? 1 : 0) + (no_conv ? 1 : 0) + (no_ssm ? 1 : 0) + (no_mamba ? 1 : 0) + (no_kan ? 1 : 0) +
               (no_kan_dropout ? 1 : 0);
    }
};

/// Names of the six ablation variants, in reporting order.
const std::vector<std::string>& ablation_variant_names();
AblationFlags ablation_by_name(const std::string& name);

struct EmkKenConfig {
    int f_meta = 4;
    int f_embed = 16;
    int h_dim = 16;
    int d_state1 = 4;
    int d_state2 = 16;
    int knu_hdim = 32;
    int knu_outputdim = 0;  // 0 -> knu_hdim / 2
    int n_classes = 2;
    double lambda = 1e-4;
    double dropout_mamba = 0.1;
    double dropout_kan = 0.1;
    double lr = 1e-3;
    int epochs = 100;
    int batch_size = 32;
    std::uint64_t seed = 42;
    ScanMode scan_mode = ScanMode::paper_literal;
    AblationFlags ablation;
    int conv_width = 4;
    int kan_grid_size = 5;
    int kan_spline_order = 3;

    int h_per() const { return std::max(1, h_dim / f_meta); }
    int h_meta() const { return f_meta * h_per(); }
    int knu_out() const { return knu_outputdim > 0 ? knu_outputdim : std::max(1, knu_hdim / 2); }
    int d_model_meta() const { return h_meta() + 1; }
    int d_model_text() const { return f_embed; }

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// JSON round-trip (schema_version 1). from_json applies defaults for
/// missing keys and validates.
EmkKenConfig config_from_json(const std::string& json_text);
std::string config_to_json(const EmkKenConfig& cfg);

/// Returns a copy of `base` with exactly the named variant's flag set
/// ("full" clears all flags). Throws ConfigError for unknown names.
EmkKenConfig apply_ablation(const EmkKenConfig& base, const std::string& variant);

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

struct BatchInput {
    Tensor meta;          // [N, L_max, F_meta]
    Tensor embed;         // [N, L_max, F_embed]
    Tensor valid_mask;    // [N, L_max], 1 on the valid prefix
    Tensor central_mask;  // [N, L_max], one-hot at the last valid position
    std::vector<int> labels;
};

struct EgoDataset {
    const graph::CitationCorpus* corpus = nullptr;
    std::vector<graph::EgoNetwork> egos;
    std::vector<int> labels;

    std::size_t size() const { return egos.size(); }
};

/// One ego per corpus node, ordered per order_nodes. Labels start empty.
EgoDataset build_ego_dataset(const graph::CitationCorpus& corpus);

BatchInput make_batch(const EgoDataset& dataset, const std::vector<std::size_t>& indices);

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct EmkKenModel {
    EmkKenConfig config;

    layers::MetaFpParams metafp;
    layers::PosConcatParams posconcat;
    layers::MambaParams mamba_meta;
    layers::MambaParams mamba_text;
    layers::KanLayerParams knu_meta;
    layers::KanLayerParams knu_text;
    // ablation stubs (allocated only when the matching flag is set)
    Parameter mamba_stub_w_meta, mamba_stub_b_meta;
    Parameter mamba_stub_w_text, mamba_stub_b_text;
    Parameter knu_stub_w_meta, knu_stub_b_meta;
    Parameter knu_stub_w_text, knu_stub_b_text;
    Parameter w_out;  // [2*knu_out, n_classes]
    Parameter b_out;  // [n_classes]

    static EmkKenModel init(const EmkKenConfig& cfg, Rng& rng);
    static EmkKenModel init_seeded(const EmkKenConfig& cfg);  // Rng(cfg.seed)

    std::vector<Parameter*> parameters();
    std::size_t parameter_count();
};

/// Full forward pass to logits [N, n_classes].
Var forward(Tape& t, EmkKenModel& m, const BatchInput& batch, RunMode mode, Rng& rng);

/// Cross-entropy on logits plus lambda * (KAN reg of both branches).
Var loss_op(Tape& t, EmkKenModel& m, Var logits, const std::vector<int>& labels);

/// Eval-mode class probabilities; rows sum to 1.
Tensor predict(EmkKenModel& m, const BatchInput& batch);

struct EpochMetrics {
    int epoch = 0;
    std::string split;
    double loss = 0.0;
    double acc = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
};
using History = std::vector<EpochMetrics>;

struct EvalResult {
    double loss = 0.0;
    double acc = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
    Tensor probabilities;  // [N, C] in dataset-index order
    std::vector<int> predictions;
};

EvalResult evaluate(EmkKenModel& m, const EgoDataset& dataset, const std::vector<std::size_t>& indices,
                    int batch_size);

/// Algorithm-style mini-batch training with Adam. Deterministic given the
/// config seed on a single thread; throws DivergenceError with epoch/batch
/// on non-finite loss.
History train(EmkKenModel& m, const EgoDataset& dataset, const graph::DatasetSplit& split);

std::string history_to_csv(const History& history);

}  // namespace emkken::model
