#include "emkken/optim.hpp"

#include <cmath>

#include "emkken/errors.hpp"

namespace emkken {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : cfg_(cfg), params_(std::move(params)) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Parameter* p : params_) {
        m_.push_back(Tensor::zeros(p->value.shape()));
        v_.push_back(Tensor::zeros(p->value.shape()));
    }
}

void Adam::step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Parameter& p = *params_[k];
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        p.value.quantize();
        p.zero_grad();
    }
}

GradCheckResult gradcheck(const std::function<double(bool with_backward)>& run,
                          std::vector<Parameter*> params,
                          double eps,
                          int samples_per_param,
                          std::uint64_t seed) {
    for (Parameter* p : params) p->zero_grad();
    const double base = run(true);
    if (!std::isfinite(base)) throw ContractError("gradcheck: non-finite loss at base point");

    // snapshot analytic grads, they get clobbered by the probe runs
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    GradCheckResult result;
    Rng rng(seed);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Parameter& p = *params[k];
        const std::size_t n = p.value.size();
        const int samples = static_cast<int>(std::min<std::size_t>(n, samples_per_param));
        for (int s = 0; s < samples; ++s) {
            const std::size_t i =
                (n <= static_cast<std::size_t>(samples_per_param)) ? static_cast<std::size_t>(s)
                                                                   : static_cast<std::size_t>(rng.uniform_int(n));
            const double saved = p.value[i];
            p.value[i] = saved + eps;
            const double fp = run(false);
            p.value[i] = saved - eps;
            const double fm = run(false);
            p.value[i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw ContractError("gradcheck: non-finite output probing " + p.name + "[" + std::to_string(i) +
                                    "]");
            const double fd = (fp - fm) / (2.0 * eps);
            const double an = analytic[k][i];
            const double denom = std::max({1e-3, std::fabs(fd), std::fabs(an)});
            const double rel = std::fabs(fd - an) / denom;
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst_param = p.name;
                result.worst_index = i;
            }
        }
        p.grad = analytic[k];
    }
    return result;
}

}  // namespace emkken
