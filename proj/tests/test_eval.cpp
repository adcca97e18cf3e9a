#include <cmath>

#include "doctest.h"
#include "emkken/errors.hpp"
#include "emkken/eval.hpp"
#include "support/synthetic.hpp"

using namespace emkken;
using namespace emkken::eval;

TEST_CASE("accuracy basics") {
    CHECK(accuracy({1, 2, 3}, {1, 2, 3}) == 1.0);
    CHECK(accuracy({1, 0}, {0, 1}) == 0.0);
    CHECK(accuracy({0, 1, 1, 0}, {0, 1, 0, 0}) == doctest::Approx(0.75));
    CHECK_THROWS_AS(accuracy({}, {}), ContractError);
}

TEST_CASE("macro F1 against a confusion-matrix hand oracle") {
    CHECK(macro_f1({0, 1, 2}, {0, 1, 2}, 3) == doctest::Approx(1.0));

    // all-0 predictor on half-1 truth: F1_0 = 2/3, F1_1 = 0
    int absent = 0;
    const double f1 = macro_f1({0, 0, 0, 0}, {0, 0, 1, 1}, 2, &absent);
    CHECK(f1 == doctest::Approx((2.0 / 3.0) / 2.0));
    CHECK(absent == 0);

    // random 3-class case vs hand-computed confusion matrix
    std::vector<int> pred = {0, 1, 2, 2, 1, 0, 0, 2, 1, 1};
    std::vector<int> truth = {0, 2, 2, 0, 1, 0, 1, 2, 1, 0};
    // class 0: tp=2 fp=1 fn=2 -> p=2/3 r=1/2 f1=4/7
    // class 1: tp=2 fp=2 fn=1 -> p=1/2 r=2/3 f1=4/7
    // class 2: tp=2 fp=1 fn=1 -> p=2/3 r=2/3 f1=2/3
    const double want = (4.0 / 7.0 + 4.0 / 7.0 + 2.0 / 3.0) / 3.0;
    CHECK(macro_f1(pred, truth, 3) == doctest::Approx(want).epsilon(1e-12));

    // macro F1 equals accuracy on balanced binary data with a
    // label-symmetric predictor
    std::vector<int> sym_truth = {0, 0, 1, 1};
    std::vector<int> sym_pred = {0, 1, 0, 1};
    CHECK(macro_f1(sym_pred, sym_truth, 2) == doctest::Approx(accuracy(sym_pred, sym_truth)));

    // class absent from both contributes zero with a warning count
    int absent2 = 0;
    (void)macro_f1({0, 0}, {0, 0}, 3, &absent2);
    CHECK(absent2 == 2);
}

TEST_CASE("auc pairwise examples and tie handling") {
    // perfect ranking
    Tensor perfect({2, 2}, {0.1, 0.9, 0.9, 0.1});
    CHECK(auc_ovr(perfect, {1, 0}) == doctest::Approx(1.0));

    // the 0.75 pairwise-counting example
    Tensor scores({4, 2},
                  {0.2, 0.8,
                   0.3, 0.7,
                   0.4, 0.6,
                   0.5, 0.5});
    CHECK(auc_ovr(scores, {1, 0, 1, 0}) == doctest::Approx(0.75));

    // constant scores: all ties -> 0.5
    Tensor constant({4, 2}, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
    CHECK(auc_ovr(constant, {1, 0, 1, 0}) == doctest::Approx(0.5));

    // multiclass macro OvR: skips classes with no positives
    Tensor multi({4, 3},
                 {0.6, 0.3, 0.1,
                  0.2, 0.5, 0.3,
                  0.5, 0.4, 0.1,
                  0.1, 0.2, 0.7});
    int skipped = -1;
    const double auc = auc_ovr(multi, {0, 1, 0, 1}, &skipped);
    CHECK(skipped == 1);  // class 2 has no positives
    CHECK(auc >= 0.0);
    CHECK(auc <= 1.0);

    // single class present everywhere -> undefined
    Tensor ones({2, 2}, {0.4, 0.6, 0.3, 0.7});
    CHECK_THROWS_AS(auc_ovr(ones, {1, 1}), ContractError);

    // random scores on balanced labels hover near 0.5
    Rng rng(99);
    const int n = 10000;
    Tensor rand_scores({n, 2});
    std::vector<int> truth(n);
    for (int i = 0; i < n; ++i) {
        const double p = rng.uniform();
        rand_scores.at(i, 0) = 1.0 - p;
        rand_scores.at(i, 1) = p;
        truth[i] = i % 2;
    }
    const double chance = auc_ovr(rand_scores, truth);
    CHECK(chance > 0.4);
    CHECK(chance < 0.6);
}

TEST_CASE("run_trials protocol on a tiny synthetic dataset") {
    synthetic::Spec spec;
    spec.n_egos = 40;
    synthetic::Data data = synthetic::make(spec);
    model::EgoDataset ds = synthetic::dataset_of(data);

    model::EmkKenConfig cfg = synthetic::small_config(spec);
    cfg.epochs = 1;

    LabelSpec labels;
    labels.kind = LabelSpec::Kind::provided;
    labels.provided = data.labels;
    TrialProtocol protocol;
    protocol.n_trials = 3;

    MetricsReport r = run_trials(data.corpus, ds, labels, cfg, protocol);
    CHECK(r.n_trials == 3);
    CHECK(r.acc_per_trial.size() == 3);
    CHECK(r.diverged_trials == 0);
    for (double a : r.acc_per_trial) {
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
    }
    CHECK(r.acc.std >= 0.0);

    // single trial: std = 0
    protocol.n_trials = 1;
    MetricsReport one = run_trials(data.corpus, ds, labels, cfg, protocol);
    CHECK(one.acc.std == 0.0);
    CHECK(one.f1.std == 0.0);

    // reproducible: same base seed, same per-trial vectors
    protocol.n_trials = 2;
    MetricsReport a = run_trials(data.corpus, ds, labels, cfg, protocol);
    MetricsReport b = run_trials(data.corpus, ds, labels, cfg, protocol);
    CHECK(a.acc_per_trial == b.acc_per_trial);
    CHECK(a.auc_per_trial == b.auc_per_trial);

    // parallel jobs produce the identical report, merged in trial order
    protocol.jobs = 2;
    MetricsReport par = run_trials(data.corpus, ds, labels, cfg, protocol);
    CHECK(par.acc_per_trial == a.acc_per_trial);
    CHECK(par.f1_per_trial == a.f1_per_trial);
}

TEST_CASE("run_trials records diverged trials instead of aborting") {
    synthetic::Spec spec;
    spec.n_egos = 24;
    synthetic::Data data = synthetic::make(spec);
    model::EgoDataset ds = synthetic::dataset_of(data);
    model::EmkKenConfig cfg = synthetic::small_config(spec);
    cfg.epochs = 40;
    cfg.lr = 1e18;  // every trial blows up
    LabelSpec labels;
    labels.kind = LabelSpec::Kind::provided;
    labels.provided = data.labels;
    TrialProtocol protocol;
    protocol.n_trials = 2;
    MetricsReport r = run_trials(data.corpus, ds, labels, cfg, protocol);
    CHECK(r.diverged_trials == 2);
    CHECK(r.acc_per_trial.empty());
    CHECK(r.n_trials == 2);
}

TEST_CASE("run_trials with complexity labels refits per trial") {
    synthetic::Spec spec;
    spec.n_egos = 36;
    synthetic::Data data = synthetic::make(spec);
    model::EgoDataset ds = synthetic::dataset_of(data);
    model::EmkKenConfig cfg = synthetic::small_config(spec);
    cfg.epochs = 1;
    LabelSpec labels;
    labels.kind = LabelSpec::Kind::complexity;
    labels.n_classes = 2;
    TrialProtocol protocol;
    protocol.n_trials = 2;
    MetricsReport r = run_trials(data.corpus, ds, labels, cfg, protocol);
    CHECK(r.acc_per_trial.size() == 2);
}

TEST_CASE("sweep grids and result shape") {
    CHECK(default_sweep_grid("d_state1") == std::vector<int>({1, 2, 4, 8, 16}));
    CHECK(default_sweep_grid("d_state2") == std::vector<int>({8, 16, 32, 64, 120}));
    CHECK_THROWS_AS(default_sweep_grid("d_state3"), ConfigError);

    synthetic::Spec spec;
    spec.n_egos = 30;
    synthetic::Data data = synthetic::make(spec);
    model::EgoDataset ds = synthetic::dataset_of(data);
    model::EmkKenConfig cfg = synthetic::small_config(spec);
    cfg.epochs = 1;
    LabelSpec labels;
    labels.kind = LabelSpec::Kind::provided;
    labels.provided = data.labels;
    TrialProtocol protocol;
    protocol.n_trials = 1;

    SweepResult sweep = sweep_d_state(data.corpus, ds, labels, cfg, protocol, "d_state1", {1, 4});
    CHECK(sweep.axis == "d_state1");
    CHECK(sweep.grid == std::vector<int>({1, 4}));
    CHECK(sweep.reports.size() == 2);

    // single point grid
    SweepResult single = sweep_d_state(data.corpus, ds, labels, cfg, protocol, "d_state2", {16});
    CHECK(single.reports.size() == 1);

    CHECK_THROWS_AS(sweep_d_state(data.corpus, ds, labels, cfg, protocol, "d_state1", {4, 2}), ContractError);
    // grid outside the documented range fails config validation
    CHECK_THROWS_AS(sweep_d_state(data.corpus, ds, labels, cfg, protocol, "d_state1", {1, 99}), ConfigError);

    const std::string csv = sweep_to_csv(sweep);
    CHECK(csv.find("axis_value,acc,f1,auc") == 0);
}

TEST_CASE("kqi labeling path assigns log-binned classes") {
    synthetic::Spec spec;
    spec.n_egos = 20;
    synthetic::Data data = synthetic::make(spec);
    model::EgoDataset ds = synthetic::dataset_of(data);
    LabelSpec spec_kqi;
    spec_kqi.kind = LabelSpec::Kind::kqi;
    spec_kqi.n_classes = 2;
    assign_labels(ds, data.corpus, spec_kqi, {});
    CHECK(ds.labels.size() == ds.size());
    for (int l : ds.labels) {
        CHECK(l >= 0);
        CHECK(l < 2);
    }
}

TEST_CASE("report serialization shapes") {
    MetricsReport r;
    r.n_trials = 2;
    r.acc_per_trial = {0.5, 0.7};
    r.f1_per_trial = {0.4, 0.6};
    r.auc_per_trial = {0.55, 0.65};
    r.acc = {0.6, 0.1};
    r.f1 = {0.5, 0.1};
    r.auc = {0.6, 0.05};
    const std::string json = report_to_json(r);
    CHECK(json.find("\"per_trial\"") != std::string::npos);
    const std::string csv = report_to_csv(r);
    CHECK(csv.find("trial,acc,f1,auc") == 0);
    CHECK(csv.find("\n1,") != std::string::npos);
}
