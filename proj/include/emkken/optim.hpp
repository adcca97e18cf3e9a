#pragma once

#include <functional>
#include <vector>

#include "emkken/autodiff.hpp"

namespace emkken {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam. step() consumes and zeroes the parameter gradients.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig cfg = {});

    void step();
    long step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    long step_ = 0;
};

/// Central finite-difference gradient check.
///
/// `forward` must build a fresh tape over the current parameter values and
/// return the scalar loss var together with its tape. Coordinates are
/// sampled per parameter. Relative error uses a 1e-3 floor so near-zero
/// gradients are measured against that floor instead of blowing up.
struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
};

/// `run(true)` must execute forward+backward (analytic grads land in the
/// parameters) and return the loss; `run(false)` forward only.
GradCheckResult gradcheck(const std::function<double(bool with_backward)>& run,
                          std::vector<Parameter*> params,
                          double eps = 1e-5,
                          int samples_per_param = 20,
                          std::uint64_t seed = 1234);

}  // namespace emkken
