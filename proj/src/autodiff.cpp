#include "emkken/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "emkken/errors.hpp"

namespace emkken {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Tensor finished(Tensor t) {
    t.quantize();
#ifndef NDEBUG
    if (!t.all_finite()) throw ContractError("op produced a non-finite value");
#endif
    return t;
}

}  // namespace

double silu_scalar(double x) { return x / (1.0 + std::exp(-x)); }

double softplus_scalar(double x) {
    // overflow-safe branch: softplus(x) = max(x,0) + log1p(exp(-|x|))
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

Var Tape::input(Tensor value) { return emit(std::move(value)); }

Var Tape::param(Parameter& p) {
    Var v = emit(p.value);
    param_leaves_.emplace_back(v.id, &p);
    return v;
}

Var Tape::emit(Tensor value) {
    values_.push_back(std::move(value));
    return Var{static_cast<int>(values_.size()) - 1};
}

void Tape::record(std::function<void(Tape&)> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
}

Tensor& Tape::grad_buf(Var v) {
    if (grads_.size() < values_.size()) grads_.resize(values_.size());
    if (grads_[v.id].size() == 0) grads_[v.id] = Tensor::zeros(values_[v.id].shape());
    return grads_[v.id];
}

Tensor Tape::grad_of(Var v) const {
    if (v.id < static_cast<int>(grads_.size()) && grads_[v.id].size() > 0) return grads_[v.id];
    return Tensor::zeros(values_[v.id].shape());
}

void Tape::backward(Var loss) {
    if (backward_done_) throw ContractError("backward called twice on the same tape");
    if (values_[loss.id].size() != 1)
        throw ContractError("backward requires a scalar loss, got shape " + shape_str(values_[loss.id].shape()));
    backward_done_ = true;
    grad_buf(loss)[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)(*this);
    for (auto& [id, p] : param_leaves_) {
        if (!grad_touched(Var{id})) continue;
        const Tensor& g = grads_[id];
        for (std::size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
        p->grad.quantize();
    }
}

// ---------------------------------------------------------------------------

Var matmul(Tape& t, Var a, Var b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
        throw ShapeError("matmul: " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
    const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor out({m, n});
    for (int i = 0; i < m; ++i) {
        const double* arow = A.data() + static_cast<std::size_t>(i) * k;
        double* orow = out.data() + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = B.data() + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    Var o = t.emit(finished(std::move(out)));
    t.record([a, b, o, m, k, n](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        const Tensor& A2 = tp.value(a);
        const Tensor& B2 = tp.value(b);
        Tensor& ga = tp.grad_buf(a);  // G @ B^T
        Tensor& gb = tp.grad_buf(b);  // A^T @ G
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                const double g = G.at(i, j);
                if (g == 0.0) continue;
                for (int p = 0; p < k; ++p) {
                    ga.at(i, p) += g * B2.at(p, j);
                    gb.at(p, j) += g * A2.at(i, p);
                }
            }
        }
    });
    return o;
}

Var add(Tape& t, Var a, Var b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    check_same_shape(A, B, "add");
    Tensor out(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[i];
    Var o = t.emit(finished(std::move(out)));
    t.record([a, b, o](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        Tensor& ga = tp.grad_buf(a);
        Tensor& gb = tp.grad_buf(b);
        for (std::size_t i = 0; i < G.size(); ++i) {
            ga[i] += G[i];
            gb[i] += G[i];
        }
    });
    return o;
}

Var add_rowwise(Tape& t, Var x, Var bias) {
    const Tensor& X = t.value(x);
    const Tensor& B = t.value(bias);
    const int c = X.dim(-1);
    if (B.rank() != 1 || B.dim(0) != c)
        throw ShapeError("add_rowwise: bias " + shape_str(B.shape()) + " vs last dim " + std::to_string(c));
    Tensor out(X.shape());
    const std::size_t rows = X.size() / c;
    for (std::size_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) out[r * c + j] = X[r * c + j] + B[j];
    Var o = t.emit(finished(std::move(out)));
    t.record([x, bias, o, c](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        Tensor& gx = tp.grad_buf(x);
        Tensor& gb = tp.grad_buf(bias);
        const std::size_t rows = G.size() / c;
        for (std::size_t r = 0; r < rows; ++r)
            for (int j = 0; j < c; ++j) {
                gx[r * c + j] += G[r * c + j];
                gb[j] += G[r * c + j];
            }
    });
    return o;
}

Var mul(Tape& t, Var a, Var b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    check_same_shape(A, B, "mul");
    Tensor out(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * B[i];
    Var o = t.emit(finished(std::move(out)));
    t.record([a, b, o](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        const Tensor& A2 = tp.value(a);
        const Tensor& B2 = tp.value(b);
        Tensor& ga = tp.grad_buf(a);
        Tensor& gb = tp.grad_buf(b);
        for (std::size_t i = 0; i < G.size(); ++i) {
            ga[i] += G[i] * B2[i];
            gb[i] += G[i] * A2[i];
        }
    });
    return o;
}

Var scale(Tape& t, Var a, double s) {
    const Tensor& A = t.value(a);
    Tensor out(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * s;
    Var o = t.emit(finished(std::move(out)));
    t.record([a, o, s](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        Tensor& ga = tp.grad_buf(a);
        for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i] * s;
    });
    return o;
}

Var activation(Tape& t, Var x, Activation kind) {
    switch (kind) {
        case Activation::relu: return relu(t, x);
        case Activation::silu: return silu(t, x);
        case Activation::softplus: return softplus(t, x);
    }
    throw ContractError("unknown activation kind");
}

Var relu(Tape& t, Var x) {
    const Tensor& X = t.value(x);
    Tensor out(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] > 0.0 ? X[i] : 0.0;
    Var o = t.emit(finished(std::move(out)));
    t.record([x, o](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        const Tensor& X2 = tp.value(x);
        Tensor& gx = tp.grad_buf(x);
        for (std::size_t i = 0; i < G.size(); ++i)
            if (X2[i] > 0.0) gx[i] += G[i];
    });
    return o;
}

Var silu(Tape& t, Var x) {
    const Tensor& X = t.value(x);
    Tensor out(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) out[i] = silu_scalar(X[i]);
    Var o = t.emit(finished(std::move(out)));
    t.record([x, o](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        const Tensor& X2 = tp.value(x);
        Tensor& gx = tp.grad_buf(x);
        for (std::size_t i = 0; i < G.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-X2[i]));
            gx[i] += G[i] * (s + X2[i] * s * (1.0 - s));
        }
    });
    return o;
}

Var softplus(Tape& t, Var x) {
    const Tensor& X = t.value(x);
    Tensor out(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) out[i] = softplus_scalar(X[i]);
    Var o = t.emit(finished(std::move(out)));
    t.record([x, o](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        const Tensor& X2 = tp.value(x);
        Tensor& gx = tp.grad_buf(x);
        for (std::size_t i = 0; i < G.size(); ++i) gx[i] += G[i] / (1.0 + std::exp(-X2[i]));
    });
    return o;
}

Var abs_val(Tape& t, Var x) {
    const Tensor& X = t.value(x);
    Tensor out(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) out[i] = std::fabs(X[i]);
    Var o = t.emit(finished(std::move(out)));
    t.record([x, o](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        const Tensor& X2 = tp.value(x);
        Tensor& gx = tp.grad_buf(x);
        for (std::size_t i = 0; i < G.size(); ++i)
            gx[i] += G[i] * (X2[i] > 0.0 ? 1.0 : (X2[i] < 0.0 ? -1.0 : 0.0));
    });
    return o;
}

Var maximum_const(Tape& t, Var x, double c) {
    const Tensor& X = t.value(x);
    Tensor out(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] > c ? X[i] : c;
    Var o = t.emit(finished(std::move(out)));
    t.record([x, o, c](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        const Tensor& X2 = tp.value(x);
        Tensor& gx = tp.grad_buf(x);
        for (std::size_t i = 0; i < G.size(); ++i)
            if (X2[i] > c) gx[i] += G[i];
    });
    return o;
}

Var negate(Tape& t, Var x) { return scale(t, x, -1.0); }

Var exp_val(Tape& t, Var x) {
    const Tensor& X = t.value(x);
    Tensor out(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) out[i] = std::exp(X[i]);
    Var o = t.emit(finished(std::move(out)));
    t.record([x, o](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        const Tensor& O = tp.value(o);
        Tensor& gx = tp.grad_buf(x);
        for (std::size_t i = 0; i < G.size(); ++i) gx[i] += G[i] * O[i];
    });
    return o;
}

Tensor softmax_rows(const Tensor& logits) {
    const int c = logits.dim(-1);
    const std::size_t rows = logits.size() / c;
    Tensor out(logits.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = logits.data() + r * c;
        double* po = out.data() + r * c;
        double mx = in[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
            po[j] = std::exp(in[j] - mx);
            sum += po[j];
        }
        for (int j = 0; j < c; ++j) po[j] /= sum;
    }
    return out;
}

Var softmax_last(Tape& t, Var x) {
    Tensor out = softmax_rows(t.value(x));
    const int c = out.dim(-1);
    Var o = t.emit(finished(std::move(out)));
    t.record([x, o, c](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        const Tensor& S = tp.value(o);
        Tensor& gx = tp.grad_buf(x);
        const std::size_t rows = G.size() / c;
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += G[r * c + j] * S[r * c + j];
            for (int j = 0; j < c; ++j) gx[r * c + j] += S[r * c + j] * (G[r * c + j] - dot);
        }
    });
    return o;
}

Var dropout(Tape& t, Var x, double rate, RunMode mode, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout rate must be in [0,1)");
    if (mode == RunMode::eval || rate == 0.0) return x;  // bit-exact identity
    const Tensor& X = t.value(x);
    const double keep_scale = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<std::vector<double>>(X.size());
    Tensor out(X.shape());
    for (std::size_t i = 0; i < X.size(); ++i) {
        (*mask)[i] = rng.uniform() < rate ? 0.0 : keep_scale;
        out[i] = X[i] * (*mask)[i];
    }
    Var o = t.emit(finished(std::move(out)));
    t.record([x, o, mask](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        Tensor& gx = tp.grad_buf(x);
        for (std::size_t i = 0; i < G.size(); ++i) gx[i] += G[i] * (*mask)[i];
    });
    return o;
}

Var concat_last(Tape& t, Var a, Var b) {
    const Tensor& A = t.value(a);
    const Tensor& B = t.value(b);
    if (A.rank() != B.rank()) throw ShapeError("concat_last: rank mismatch");
    for (int d = 0; d + 1 < A.rank(); ++d)
        if (A.shape()[d] != B.shape()[d])
            throw ShapeError("concat_last: " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
    const int ca = A.dim(-1), cb = B.dim(-1);
    std::vector<int> oshape = A.shape();
    oshape.back() = ca + cb;
    Tensor out(oshape);
    const std::size_t rows = A.size() / ca;
    for (std::size_t r = 0; r < rows; ++r) {
        for (int j = 0; j < ca; ++j) out[r * (ca + cb) + j] = A[r * ca + j];
        for (int j = 0; j < cb; ++j) out[r * (ca + cb) + ca + j] = B[r * cb + j];
    }
    Var o = t.emit(finished(std::move(out)));
    t.record([a, b, o, ca, cb](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        Tensor& ga = tp.grad_buf(a);
        Tensor& gb = tp.grad_buf(b);
        const std::size_t rows = ga.size() / ca;
        for (std::size_t r = 0; r < rows; ++r) {
            for (int j = 0; j < ca; ++j) ga[r * ca + j] += G[r * (ca + cb) + j];
            for (int j = 0; j < cb; ++j) gb[r * cb + j] += G[r * (ca + cb) + ca + j];
        }
    });
    return o;
}

Var slice_last(Tape& t, Var x, int from, int to) {
    const Tensor& X = t.value(x);
    const int c = X.dim(-1);
    if (from < 0 || to > c || from >= to)
        throw ShapeError("slice_last [" + std::to_string(from) + "," + std::to_string(to) + ") of width " +
                         std::to_string(c));
    std::vector<int> oshape = X.shape();
    oshape.back() = to - from;
    Tensor out(oshape);
    const int w = to - from;
    const std::size_t rows = X.size() / c;
    for (std::size_t r = 0; r < rows; ++r)
        for (int j = 0; j < w; ++j) out[r * w + j] = X[r * c + from + j];
    Var o = t.emit(finished(std::move(out)));
    t.record([x, o, from, w, c](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        Tensor& gx = tp.grad_buf(x);
        const std::size_t rows = gx.size() / c;
        for (std::size_t r = 0; r < rows; ++r)
            for (int j = 0; j < w; ++j) gx[r * c + from + j] += G[r * w + j];
    });
    return o;
}

std::pair<Var, Var> chunk2_last(Tape& t, Var x) {
    const int c = t.value(x).dim(-1);
    if (c % 2 != 0) throw ShapeError("chunk2_last: odd last dim " + std::to_string(c));
    return {slice_last(t, x, 0, c / 2), slice_last(t, x, c / 2, c)};
}

Var reshape(Tape& t, Var x, std::vector<int> shape) {
    Tensor out = t.value(x).reshaped(shape);
    Var o = t.emit(std::move(out));
    t.record([x, o](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        Tensor& gx = tp.grad_buf(x);
        for (std::size_t i = 0; i < G.size(); ++i) gx[i] += G[i];
    });
    return o;
}

Var masked_mean_seq(Tape& t, Var x, const Tensor& mask) {
    const Tensor& X = t.value(x);
    if (X.rank() != 3 || mask.rank() != 2 || mask.dim(0) != X.dim(0) || mask.dim(1) != X.dim(1))
        throw ShapeError("masked_mean_seq: x " + shape_str(X.shape()) + ", mask " + shape_str(mask.shape()));
    const int n = X.dim(0), l = X.dim(1), d = X.dim(2);
    auto counts = std::make_shared<std::vector<double>>(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double c = 0.0;
        for (int s = 0; s < l; ++s) c += mask.at(i, s) != 0.0 ? 1.0 : 0.0;
        if (c == 0.0) throw ContractError("masked_mean_seq: empty mask in row " + std::to_string(i));
        (*counts)[i] = c;
    }
    Tensor out({n, d});
    for (int i = 0; i < n; ++i)
        for (int s = 0; s < l; ++s) {
            if (mask.at(i, s) == 0.0) continue;
            for (int j = 0; j < d; ++j) out.at(i, j) += X.at(i, s, j) / (*counts)[i];
        }
    Var o = t.emit(finished(std::move(out)));
    Tensor mask_copy = mask;
    t.record([x, o, mask_copy, counts, n, l, d](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        Tensor& gx = tp.grad_buf(x);
        for (int i = 0; i < n; ++i)
            for (int s = 0; s < l; ++s) {
                if (mask_copy.at(i, s) == 0.0) continue;
                for (int j = 0; j < d; ++j) gx.at(i, s, j) += G.at(i, j) / (*counts)[i];
            }
    });
    return o;
}

Var mean_all(Tape& t, Var x) {
    const Tensor& X = t.value(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) acc += X[i];
    const double inv = 1.0 / static_cast<double>(X.size());
    Var o = t.emit(finished(Tensor::scalar(acc * inv)));
    t.record([x, o, inv](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const double g = tp.grad_buf(o)[0] * inv;
        Tensor& gx = tp.grad_buf(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
    return o;
}

Var sum_all(Tape& t, Var x) {
    const Tensor& X = t.value(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) acc += X[i];
    Var o = t.emit(finished(Tensor::scalar(acc)));
    t.record([x, o](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const double g = tp.grad_buf(o)[0];
        Tensor& gx = tp.grad_buf(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
    return o;
}

double cross_entropy(const Tensor& probabilities, const std::vector<int>& labels) {
    if (probabilities.rank() != 2) throw ShapeError("cross_entropy expects [N,C] probabilities");
    const int n = probabilities.dim(0), c = probabilities.dim(1);
    if (static_cast<int>(labels.size()) != n)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                         " rows");
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        double rowsum = 0.0;
        for (int j = 0; j < c; ++j) rowsum += probabilities.at(i, j);
        if (std::fabs(rowsum - 1.0) > 1e-6)
            throw ContractError("cross_entropy: row " + std::to_string(i) + " sums to " + std::to_string(rowsum));
        if (labels[i] < 0 || labels[i] >= c)
            throw IndexError("cross_entropy: label " + std::to_string(labels[i]) + " out of [0," +
                             std::to_string(c) + ")");
        loss += -std::log(probabilities.at(i, labels[i]));
    }
    return loss / n;
}

Var cross_entropy_logits(Tape& t, Var logits, const std::vector<int>& labels) {
    const Tensor& X = t.value(logits);
    if (X.rank() != 2) throw ShapeError("cross_entropy_logits expects [N,C]");
    const int n = X.dim(0), c = X.dim(1);
    if (static_cast<int>(labels.size()) != n)
        throw ShapeError("cross_entropy_logits: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
    for (int i = 0; i < n; ++i)
        if (labels[i] < 0 || labels[i] >= c)
            throw IndexError("cross_entropy_logits: label " + std::to_string(labels[i]) + " out of [0," +
                             std::to_string(c) + ")");
    Tensor probs = softmax_rows(X);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) loss += -std::log(std::max(probs.at(i, labels[i]), 1e-300));
    loss /= n;
    auto probs_saved = std::make_shared<Tensor>(std::move(probs));
    auto labels_saved = std::make_shared<std::vector<int>>(labels);
    Var o = t.emit(finished(Tensor::scalar(loss)));
    t.record([logits, o, probs_saved, labels_saved, n, c](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const double g = tp.grad_buf(o)[0] / n;
        Tensor& gx = tp.grad_buf(logits);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) {
                const double onehot = ((*labels_saved)[i] == j) ? 1.0 : 0.0;
                gx.at(i, j) += g * (probs_saved->at(i, j) - onehot);
            }
    });
    return o;
}

}  // namespace emkken
