#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emkken/model.hpp"

namespace emkken::cli {

// stable exit-code contract
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitIngestSchema = 2;
constexpr int kExitDegenerateKqi = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitConfig = 5;
constexpr int kExitPlotInput = 6;

/// Config document driving every command: the model fields plus harness
/// settings. --set overrides are applied to the JSON before parsing.
struct CliConfig {
    model::EmkKenConfig model;
    double train_ratio = 0.8;
    double val_ratio = 0.1;
    double test_ratio = 0.1;
    int n_trials = 10;
    std::string label_criterion = "complexity";  // complexity | provided | kqi
    int label_classes = 0;                       // 0 -> model.n_classes
    std::string label_file;
    std::string sweep_axis = "d_state2";
    std::vector<int> sweep_grid;  // empty -> default grid for the axis

    int effective_label_classes() const { return label_classes > 0 ? label_classes : model.n_classes; }
};

CliConfig load_cli_config(const std::string& config_path, const std::vector<std::string>& set_overrides,
                          const std::uint64_t* seed_override);

struct IngestArgs {
    std::string edge_path;
    std::string meta_path;
    std::string embed_path;
    std::string out_dir;
    bool edge_header = false;
    bool meta_header = false;
    int year_column = -1;
};

struct KqiArgs {
    std::string corpus_path;
    std::string out_dir;
    int n_classes = 0;  // 0: no labels requested
};

struct LabelArgs {
    std::string corpus_path;
    std::string out_dir;
    CliConfig config;
};

struct TrainArgs {
    std::string corpus_path;
    std::string out_dir;
    CliConfig config;
    std::string config_path;  // recorded in the manifest
};

struct EvalArgs {
    std::string corpus_path;
    std::string out_dir;
    CliConfig config;
    std::string config_path;
    int jobs = 1;
    /// When set, skips the repeated-trial protocol: loads this checkpoint
    /// into a model built from the config and scores the test split once.
    std::string checkpoint_path;
};

struct SweepArgs {
    std::string corpus_path;
    std::string out_dir;
    CliConfig config;
    std::string config_path;
    int jobs = 1;
};

struct AblateArgs {
    std::string corpus_path;
    std::string out_dir;
    CliConfig config;
    std::string config_path;
    int jobs = 1;
};

struct PlotArgs {
    std::string csv_path;
    std::string out_dir;
};

int cmd_ingest(const IngestArgs& args);
int cmd_kqi(const KqiArgs& args);
int cmd_label(const LabelArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_sweep(const SweepArgs& args);
int cmd_ablate(const AblateArgs& args);
int cmd_plot(const PlotArgs& args);

}  // namespace emkken::cli
