#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace emkken {

/// Global numeric precision for tensor math.
///
/// f64 computes in native double throughout. f32 rounds every op result
/// through IEEE float, which pins down reproducible single-precision
/// semantics (and float checkpoint payloads) without a templated stack.
enum class Precision { f32, f64 };

Precision precision();
void set_precision(Precision p);

/// Reads EMKKEN_PRECISION ("32" or "64", default 64) and installs it.
Precision precision_from_env();

/// Dense row-major n-dimensional array of reals.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor scalar(double value);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    // dim(-1) is the last axis
    int dim(int axis) const;
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    double& at(int i, int j, int k) {
        return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    double at(int i, int j, int k) const {
        return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    /// Same data, new shape; element counts must agree.
    Tensor reshaped(std::vector<int> new_shape) const;

    void fill(double value);
    bool all_finite() const;

    /// In f32 mode, rounds every element through float. No-op in f64 mode.
    void quantize();

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::string shape_str(const std::vector<int>& shape);
std::size_t shape_numel(const std::vector<int>& shape);

/// Deterministic RNG used everywhere randomness is needed. All draws go
/// through explicit algorithms (no std::distribution) so streams are
/// bit-identical across platforms and library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n);
    /// Standard normal via Box-Muller.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    void fill_uniform(Tensor& t, double lo, double hi);
    void fill_normal(Tensor& t, double mean, double stddev);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace emkken
