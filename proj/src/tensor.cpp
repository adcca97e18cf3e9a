#include "emkken/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace emkken {

namespace {
std::atomic<int> g_precision{64};
}  // namespace

Precision precision() {
    return g_precision.load(std::memory_order_relaxed) == 32 ? Precision::f32 : Precision::f64;
}

void set_precision(Precision p) {
    g_precision.store(p == Precision::f32 ? 32 : 64, std::memory_order_relaxed);
}

Precision precision_from_env() {
    const char* env = std::getenv("EMKKEN_PRECISION");
    Precision p = Precision::f64;
    if (env && std::string(env) == "32") p = Precision::f32;
    set_precision(p);
    return p;
}

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor shape has non-positive dim " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_str(shape_));
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

int Tensor::dim(int axis) const {
    int r = rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r)
        throw std::out_of_range("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(r));
    return shape_[axis];
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
    if (shape_numel(new_shape) != data_.size())
        throw std::invalid_argument("reshape " + shape_str(shape_) + " -> " + shape_str(new_shape) +
                                    " changes element count");
    return Tensor(std::move(new_shape), data_);
}

void Tensor::fill(double value) {
    for (double& v : data_) v = value;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::quantize() {
    if (precision() != Precision::f32) return;
    for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

// splitmix64: small, fast, identical everywhere.
std::uint64_t Rng::next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    // modulo bias is irrelevant at the sizes used here
    return next_u64() % n;
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

void Rng::fill_uniform(Tensor& t, double lo, double hi) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform(lo, hi);
}

void Rng::fill_normal(Tensor& t, double mean, double stddev) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal(mean, stddev);
}

}  // namespace emkken
