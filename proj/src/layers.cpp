#include "emkken/layers.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "emkken/errors.hpp"

namespace emkken::layers {

namespace {

double inv_sqrt(int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

Parameter uniform_param(const std::string& name, std::vector<int> shape, double bound, Rng& rng) {
    Tensor t(std::move(shape));
    rng.fill_uniform(t, -bound, bound);
    t.quantize();
    return Parameter(name, t);
}

}  // namespace

Var linear_lastdim(Tape& t, Var x, Var w) {
    const Tensor& X = t.value(x);
    const Tensor& W = t.value(w);
    const int a = X.dim(-1);
    const int b = W.dim(1);
    if (W.dim(0) != a)
        throw ShapeError("linear: input width " + std::to_string(a) + " vs weight " + shape_str(W.shape()));
    std::vector<int> out_shape = X.shape();
    out_shape.back() = b;
    const int rows = static_cast<int>(X.size()) / a;
    Var x2 = reshape(t, x, {rows, a});
    Var y2 = matmul(t, x2, w);
    return reshape(t, y2, std::move(out_shape));
}

Var linear_lastdim(Tape& t, Var x, Var w, Var bias) { return add_rowwise(t, linear_lastdim(t, x, w), bias); }

// ---------------------------------------------------------------------------
// MetaFP
// ---------------------------------------------------------------------------

MetaFpParams MetaFpParams::init(const std::string& prefix, int f_meta, int h_dim, Rng& rng) {
    if (f_meta < 1) throw ContractError("MetaFP needs f_meta >= 1");
    MetaFpParams p;
    p.f_meta = f_meta;
    p.h_per = std::max(1, h_dim / f_meta);
    p.w_fc = uniform_param(prefix + ".W_fc", {1, p.h_per}, 1.0, rng);
    p.b_fc = uniform_param(prefix + ".b_fc", {p.h_per}, 1.0, rng);
    return p;
}

std::vector<Parameter*> MetaFpParams::parameters() { return {&w_fc, &b_fc}; }

Var metafp_forward(Tape& t, Var meta, MetaFpParams& p, bool with_relu) {
    const Tensor& M = t.value(meta);
    if (M.dim(-1) != p.f_meta)
        throw ShapeError("metafp: input width " + std::to_string(M.dim(-1)) + ", expected " +
                         std::to_string(p.f_meta));
    std::vector<int> out_shape = M.shape();
    out_shape.back() = p.h_meta();
    const int scalars = static_cast<int>(M.size());
    Var col = reshape(t, meta, {scalars, 1});
    Var expanded = add_rowwise(t, matmul(t, col, t.param(p.w_fc)), t.param(p.b_fc));
    if (with_relu) expanded = relu(t, expanded);
    return reshape(t, expanded, std::move(out_shape));
}

// ---------------------------------------------------------------------------
// Positional concat
// ---------------------------------------------------------------------------

PosConcatParams PosConcatParams::init(const std::string& prefix, int width, Rng& rng) {
    PosConcatParams p;
    p.width = width;
    const double bound = inv_sqrt(width);
    p.w_metafc = uniform_param(prefix + ".W_metafc", {width, width}, bound, rng);
    p.b_metafc = uniform_param(prefix + ".b_metafc", {width}, bound, rng);
    return p;
}

std::vector<Parameter*> PosConcatParams::parameters() { return {&w_metafc, &b_metafc}; }

Tensor relative_positions(const Tensor& valid_mask) {
    const int n = valid_mask.dim(0), l = valid_mask.dim(1);
    Tensor pos({n, l, 1});
    for (int i = 0; i < n; ++i) {
        int len = 0;
        for (int s = 0; s < l; ++s)
            if (valid_mask.at(i, s) != 0.0) ++len;
        for (int s = 0; s < l && s < len; ++s)
            pos[(static_cast<std::size_t>(i) * l + s)] = len > 1 ? static_cast<double>(s) / (len - 1) : 0.0;
    }
    return pos;
}

Var positional_concat(Tape& t, Var meta_fc, const Tensor& positions, PosConcatParams& p) {
    const Tensor& M = t.value(meta_fc);
    if (positions.dim(0) != M.dim(0) || positions.dim(1) != M.dim(1))
        throw ShapeError("positional_concat: positions " + shape_str(positions.shape()) + " vs input " +
                         shape_str(M.shape()));
    if (M.dim(-1) + 1 != p.width)
        throw ShapeError("positional_concat: width " + std::to_string(M.dim(-1) + 1) + " vs params " +
                         std::to_string(p.width));
    Var cat = concat_last(t, meta_fc, t.input(positions));
    return relu(t, linear_lastdim(t, cat, t.param(p.w_metafc), t.param(p.b_metafc)));
}

// ---------------------------------------------------------------------------
// Mamba block
// ---------------------------------------------------------------------------

MambaParams MambaParams::init(const std::string& prefix, int d_model, int d_state, Rng& rng, int conv_width,
                              bool with_conv, bool with_ssm) {
    if (d_model < 1 || d_state < 1 || conv_width < 1) throw ContractError("mamba dims must be positive");
    MambaParams p;
    p.d_model = d_model;
    p.d_inner = 2 * d_model;  // expansion factor 2
    p.d_state = d_state;
    p.dt_rank = (p.d_inner + 15) / 16;
    p.conv_width = conv_width;

    p.w_in_proj = uniform_param(prefix + ".W_in_proj", {d_model, 2 * p.d_inner}, inv_sqrt(d_model), rng);
    p.b_in_proj = uniform_param(prefix + ".b_in_proj", {2 * p.d_inner}, inv_sqrt(d_model), rng);
    if (with_conv) {
        p.w_conv1d = uniform_param(prefix + ".W_conv1d", {p.d_inner, 1, conv_width}, inv_sqrt(conv_width), rng);
        p.b_conv1d = uniform_param(prefix + ".b_conv1d", {p.d_inner}, inv_sqrt(conv_width), rng);
    }
    if (with_ssm) {
        p.w_x_proj =
            uniform_param(prefix + ".W_x_proj", {p.d_inner, p.dt_rank + 2 * d_state}, inv_sqrt(p.d_inner), rng);
        p.w_dt = uniform_param(prefix + ".W_dt", {p.dt_rank, p.d_inner}, inv_sqrt(p.dt_rank), rng);
        // softplus(b_dt) starts log-uniform in [1e-3, 1e-1] so time steps
        // begin small and positive
        Tensor bdt({p.d_inner});
        for (int i = 0; i < p.d_inner; ++i) {
            const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
            bdt[i] = std::log(std::expm1(dt));
        }
        bdt.quantize();
        p.b_dt = Parameter(prefix + ".b_dt", bdt);
        // softplus(a_log) column s equals s+1, so A starts at -(1..d_state)
        Tensor alog({p.d_inner, d_state});
        for (int i = 0; i < p.d_inner; ++i)
            for (int s = 0; s < d_state; ++s) alog.at(i, s) = std::log(std::expm1(static_cast<double>(s + 1)));
        alog.quantize();
        p.a_log = Parameter(prefix + ".A_log", alog);
        p.d_skip = Parameter(prefix + ".D", Tensor::full({p.d_inner}, 1.0));
    }
    p.w_out_proj = uniform_param(prefix + ".W_out_proj", {p.d_inner, d_model}, inv_sqrt(p.d_inner), rng);
    return p;
}

std::vector<Parameter*> MambaParams::parameters() {
    std::vector<Parameter*> out;
    for (Parameter* p : {&w_in_proj, &b_in_proj, &w_conv1d, &b_conv1d, &w_x_proj, &w_dt, &b_dt, &a_log, &d_skip,
                         &w_out_proj})
        if (p->numel() > 0) out.push_back(p);
    return out;
}

Var MambaParams::effective_a(Tape& t, ScanMode mode) {
    Var neg = negate(t, softplus(t, t.param(a_log)));
    if (mode == ScanMode::paper_literal) neg = maximum_const(t, neg, -(1.0 - 1e-4));
    return neg;
}

std::pair<Var, Var> in_project_split(Tape& t, Var u, MambaParams& p) {
    if (t.value(u).dim(-1) != p.d_model)
        throw ShapeError("in_project_split: input width " + std::to_string(t.value(u).dim(-1)) + ", d_model " +
                         std::to_string(p.d_model));
    Var xz = linear_lastdim(t, u, t.param(p.w_in_proj), t.param(p.b_in_proj));
    return chunk2_last(t, xz);
}

Var causal_conv(Tape& t, Var x, Var w, Var b) {
    const Tensor& X = t.value(x);
    const Tensor& W = t.value(w);
    const Tensor& B = t.value(b);
    if (X.rank() != 3 || W.rank() != 3 || W.dim(1) != 1)
        throw ShapeError("causal_conv: x " + shape_str(X.shape()) + ", w " + shape_str(W.shape()));
    const int n = X.dim(0), l = X.dim(1), ch = X.dim(2), wk = W.dim(2);
    if (W.dim(0) != ch || B.dim(0) != ch) throw ShapeError("causal_conv: channel mismatch");

    Tensor pre({n, l, ch});
    for (int bi = 0; bi < n; ++bi)
        for (int ti = 0; ti < l; ++ti)
            for (int c = 0; c < ch; ++c) {
                double acc = B[c];
                for (int j = 0; j < wk; ++j) {
                    const int src = ti - wk + 1 + j;
                    if (src < 0) continue;  // zero left padding
                    acc += W[static_cast<std::size_t>(c) * wk + j] * X.at(bi, src, c);
                }
                pre.at(bi, ti, c) = acc;
            }
    pre.quantize();
    Var o = t.emit(pre);
    t.record([x, w, b, o, n, l, ch, wk](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        const Tensor& X2 = tp.value(x);
        const Tensor& W2 = tp.value(w);
        Tensor& gx = tp.grad_buf(x);
        Tensor& gw = tp.grad_buf(w);
        Tensor& gb = tp.grad_buf(b);
        for (int bi = 0; bi < n; ++bi)
            for (int ti = 0; ti < l; ++ti)
                for (int c = 0; c < ch; ++c) {
                    const double g = G.at(bi, ti, c);
                    if (g == 0.0) continue;
                    gb[c] += g;
                    for (int j = 0; j < wk; ++j) {
                        const int src = ti - wk + 1 + j;
                        if (src < 0) continue;
                        gw[static_cast<std::size_t>(c) * wk + j] += g * X2.at(bi, src, c);
                        gx.at(bi, src, c) += g * W2[static_cast<std::size_t>(c) * wk + j];
                    }
                }
    });
    return silu(t, o);
}

XProjOut x_project_split(Tape& t, Var x_conv, MambaParams& p) {
    const Tensor& X = t.value(x_conv);
    if (X.dim(-1) != p.d_inner)
        throw ShapeError("x_project_split: width " + std::to_string(X.dim(-1)) + " vs d_inner " +
                         std::to_string(p.d_inner));
    Var proj = linear_lastdim(t, x_conv, t.param(p.w_x_proj));
    XProjOut out;
    Var dt_low = slice_last(t, proj, 0, p.dt_rank);
    out.b = slice_last(t, proj, p.dt_rank, p.dt_rank + p.d_state);
    out.c = slice_last(t, proj, p.dt_rank + p.d_state, p.dt_rank + 2 * p.d_state);
    out.dt = softplus(t, linear_lastdim(t, dt_low, t.param(p.w_dt), t.param(p.b_dt)));
    return out;
}

Var selective_scan(Tape& t, Var x, Var dt, Var b, Var c, Var a_eff, Var d_skip, ScanMode mode) {
    const Tensor& X = t.value(x);
    const Tensor& DT = t.value(dt);
    const Tensor& B = t.value(b);
    const Tensor& C = t.value(c);
    const Tensor& A = t.value(a_eff);
    const Tensor& D = t.value(d_skip);
    if (X.rank() != 3) throw ShapeError("selective_scan: x must be [N,L,d_inner]");
    const int n = X.dim(0), l = X.dim(1), di = X.dim(2);
    const int ds = B.dim(2);
    if (!DT.same_shape(X) || B.dim(0) != n || B.dim(1) != l || !C.same_shape(B) || A.dim(0) != di ||
        A.dim(1) != ds || D.dim(0) != di)
        throw ShapeError("selective_scan: inconsistent operand shapes");

    const bool literal = mode == ScanMode::paper_literal;
    auto states = std::make_shared<Tensor>(std::vector<int>{n, l, di, ds});  // S after each step
    Tensor y({n, l, di});
    std::vector<double> s_cur(static_cast<std::size_t>(di) * ds);
    for (int bi = 0; bi < n; ++bi) {
        std::fill(s_cur.begin(), s_cur.end(), 0.0);
        for (int ti = 0; ti < l; ++ti) {
            for (int i = 0; i < di; ++i) {
                const double dtv = DT.at(bi, ti, i);
                const double xv = X.at(bi, ti, i);
                double acc = 0.0;
                double* srow = s_cur.data() + static_cast<std::size_t>(i) * ds;
                const double* arow = A.data() + static_cast<std::size_t>(i) * ds;
                const double* brow = B.data() + (static_cast<std::size_t>(bi) * l + ti) * ds;
                const double* crow = C.data() + (static_cast<std::size_t>(bi) * l + ti) * ds;
                double* save = states->data() + ((static_cast<std::size_t>(bi) * l + ti) * di + i) * ds;
                for (int s = 0; s < ds; ++s) {
                    const double abar = literal ? arow[s] : std::exp(dtv * arow[s]);
                    const double snew = abar * srow[s] + dtv * brow[s] * xv;
                    srow[s] = snew;
                    save[s] = snew;
                    acc += snew * crow[s];
                }
                const double yv = acc + D[i] * xv;
                if (!std::isfinite(yv))
                    throw DivergenceError("selective_scan produced non-finite output at step " + std::to_string(ti));
                y.at(bi, ti, i) = yv;
            }
        }
    }
    y.quantize();
    Var o = t.emit(std::move(y));
    t.record([x, dt, b, c, a_eff, d_skip, o, states, n, l, di, ds, literal](Tape& tp) {
        if (!tp.grad_touched(o)) return;
        const Tensor& G = tp.grad_buf(o);
        const Tensor& X2 = tp.value(x);
        const Tensor& DT2 = tp.value(dt);
        const Tensor& B2 = tp.value(b);
        const Tensor& C2 = tp.value(c);
        const Tensor& A2 = tp.value(a_eff);
        const Tensor& D2 = tp.value(d_skip);
        Tensor& gx = tp.grad_buf(x);
        Tensor& gdt = tp.grad_buf(dt);
        Tensor& gb = tp.grad_buf(b);
        Tensor& gc = tp.grad_buf(c);
        Tensor& ga = tp.grad_buf(a_eff);
        Tensor& gd = tp.grad_buf(d_skip);

        std::vector<double> adj(static_cast<std::size_t>(di) * ds);  // dL/dS_t
        for (int bi = 0; bi < n; ++bi) {
            std::fill(adj.begin(), adj.end(), 0.0);
            for (int ti = l - 1; ti >= 0; --ti) {
                for (int i = 0; i < di; ++i) {
                    const double g = G.at(bi, ti, i);
                    const double dtv = DT2.at(bi, ti, i);
                    const double xv = X2.at(bi, ti, i);
                    double* arow = adj.data() + static_cast<std::size_t>(i) * ds;
                    const double* aeff = A2.data() + static_cast<std::size_t>(i) * ds;
                    const double* brow = B2.data() + (static_cast<std::size_t>(bi) * l + ti) * ds;
                    const double* crow = C2.data() + (static_cast<std::size_t>(bi) * l + ti) * ds;
                    const double* s_now = states->data() + ((static_cast<std::size_t>(bi) * l + ti) * di + i) * ds;
                    const double* s_prev =
                        ti > 0 ? states->data() + ((static_cast<std::size_t>(bi) * l + ti - 1) * di + i) * ds
                               : nullptr;
                    double* gb_row = gb.data() + (static_cast<std::size_t>(bi) * l + ti) * ds;
                    double* gc_row = gc.data() + (static_cast<std::size_t>(bi) * l + ti) * ds;
                    double* ga_row = ga.data() + static_cast<std::size_t>(i) * ds;

                    if (g != 0.0) {
                        gd[i] += g * xv;
                        gx.at(bi, ti, i) += g * D2[i];
                    }
                    double ddt_acc = 0.0;
                    double dx_acc = 0.0;
                    for (int s = 0; s < ds; ++s) {
                        if (g != 0.0) {
                            gc_row[s] += g * s_now[s];
                            arow[s] += g * crow[s];
                        }
                        const double gs = arow[s];
                        if (gs == 0.0) continue;
                        const double sp = s_prev ? s_prev[s] : 0.0;
                        double abar;
                        if (literal) {
                            abar = aeff[s];
                            ga_row[s] += gs * sp;
                        } else {
                            const double e = std::exp(dtv * aeff[s]);
                            abar = e;
                            ga_row[s] += gs * sp * dtv * e;
                            ddt_acc += gs * sp * aeff[s] * e;
                        }
                        ddt_acc += gs * brow[s] * xv;
                        dx_acc += gs * dtv * brow[s];
                        gb_row[s] += gs * dtv * xv;
                        arow[s] = abar * gs;  // adjoint of S_{t-1}
                    }
                    gdt.at(bi, ti, i) += ddt_acc;
                    gx.at(bi, ti, i) += dx_acc;
                }
            }
        }
    });
    return o;
}

Var mamba_forward(Tape& t, Var u, MambaParams& p, const MambaOptions& opts, Rng& rng) {
    auto [x, z] = in_project_split(t, u, p);
    Var x_conv = opts.with_conv ? causal_conv(t, x, t.param(p.w_conv1d), t.param(p.b_conv1d)) : silu(t, x);
    Var y_ssm = x_conv;
    if (opts.with_ssm) {
        XProjOut xp = x_project_split(t, x_conv, p);
        Var a = p.effective_a(t, opts.scan_mode);
        y_ssm = selective_scan(t, x_conv, xp.dt, xp.b, xp.c, a, t.param(p.d_skip), opts.scan_mode);
    }
    Var gated = mul(t, y_ssm, silu(t, z));
    Var out = linear_lastdim(t, gated, t.param(p.w_out_proj));
    return dropout(t, out, opts.dropout_rate, opts.run_mode, rng);
}

// ---------------------------------------------------------------------------
// KAN
// ---------------------------------------------------------------------------

KanGrid make_kan_grid(double lo, double hi, int intervals, int order) {
    if (!(hi > lo) || intervals < 1 || order < 1) throw ContractError("bad KAN grid parameters");
    if (intervals + 2 * order > 60) throw ContractError("KAN grid too large");
    KanGrid g;
    g.lo = lo;
    g.hi = hi;
    g.intervals = intervals;
    g.order = order;
    const double h = (hi - lo) / intervals;
    g.knots.resize(intervals + 2 * order + 1);
    for (int j = 0; j < static_cast<int>(g.knots.size()); ++j) g.knots[j] = lo + (j - order) * h;
    return g;
}

void bspline_basis_scalar(double x, const KanGrid& grid, double* basis_out, double* deriv_out) {
    const int k = grid.order;
    const int m = grid.intervals + 2 * k;  // number of knot intervals
    const double* t = grid.knots.data();
    x = std::clamp(x, grid.lo, grid.hi);

    // locate the interior interval [t_idx, t_idx+1); x == hi uses the last one
    const double h = (grid.hi - grid.lo) / grid.intervals;
    int idx = k + static_cast<int>(std::floor((x - grid.lo) / h));
    idx = std::clamp(idx, k, k + grid.intervals - 1);
    // floor can land one off when x sits on a knot's representation edge;
    // t[idx] <= x < t[idx+1] keeps every recursion coefficient non-negative
    while (idx > k && x < t[idx]) --idx;
    while (idx < k + grid.intervals - 1 && x >= t[idx + 1]) ++idx;

    double cur[64] = {0.0};
    double nxt[64];
    double km1[64] = {0.0};
    cur[idx] = 1.0;  // degree 0
    for (int d = 1; d <= k; ++d) {
        for (int j = 0; j < m - d; ++j) {
            const double denom_l = t[j + d] - t[j];
            const double denom_r = t[j + d + 1] - t[j + 1];
            nxt[j] = (x - t[j]) / denom_l * cur[j] + (t[j + d + 1] - x) / denom_r * cur[j + 1];
        }
        if (d == k - 1 || k == 1) {
            const double* src = (k == 1) ? cur : nxt;
            for (int j = 0; j < m; ++j) km1[j] = 0.0;
            for (int j = 0; j < m - (k - 1); ++j) km1[j] = src[j];
        }
        for (int j = 0; j < m - d; ++j) cur[j] = nxt[j];
    }
    const int nb = grid.basis_count();
    for (int j = 0; j < nb; ++j) basis_out[j] = cur[j];
    if (deriv_out) {
        for (int j = 0; j < nb; ++j) {
            const double left = km1[j] / (t[j + k] - t[j]);
            const double right = km1[j + 1] / (t[j + k + 1] - t[j + 1]);
            deriv_out[j] = k * (left - right);
        }
    }
}

Tensor bspline_basis(const std::vector<double>& xs, const KanGrid& grid) {
    const int nb = grid.basis_count();
    Tensor out({static_cast<int>(xs.size()), nb});
    for (std::size_t i = 0; i < xs.size(); ++i) bspline_basis_scalar(xs[i], grid, out.data() + i * nb, nullptr);
    return out;
}

KanLayerParams KanLayerParams::init(const std::string& prefix, int in_dim, int out_dim, Rng& rng,
                                    int grid_intervals, int spline_order) {
    KanLayerParams p;
    p.in_dim = in_dim;
    p.out_dim = out_dim;
    p.grid = make_kan_grid(-1.0, 1.0, grid_intervals, spline_order);
    const double bound = inv_sqrt(in_dim);
    p.w_base = uniform_param(prefix + ".W_base", {in_dim, out_dim}, bound, rng);
    p.b_base = uniform_param(prefix + ".b_base", {out_dim}, bound, rng);
    const int nb = p.grid.basis_count();
    p.w_spline = uniform_param(prefix + ".W_spline", {out_dim, in_dim, nb}, 0.1 * inv_sqrt(nb), rng);
    p.spline_scaler = Parameter(prefix + ".splineScaler", Tensor::full({out_dim, in_dim}, 1.0));
    return p;
}

std::vector<Parameter*> KanLayerParams::parameters() { return {&w_base, &b_base, &w_spline, &spline_scaler}; }

namespace {

/// Spline interpolation term of the KAN layer as one tape node:
/// y[n,o] = sum_i sum_j scaler[o,i] * w[o,i,j] * B_j(clamp(x[n,i])).
Var kan_spline_term(Tape& t, Var x, Var w_spline, Var scaler, const KanGrid& grid) {
    const Tensor& X = t.value(x);
    const Tensor& W = t.value(w_spline);
    const Tensor& S = t.value(scaler);
    const int n = X.dim(0), in = X.dim(1);
    const int out = W.dim(0), nb = W.dim(2);
    if (W.dim(1) != in || S.dim(0) != out || S.dim(1) != in)
        throw ShapeError("kan spline: x " + shape_str(X.shape()) + ", w " + shape_str(W.shape()));

    auto bases = std::make_shared<Tensor>(std::vector<int>{n, in, nb});
    auto derivs = std::make_shared<Tensor>(std::vector<int>{n, in, nb});
    for (int r = 0; r < n; ++r)
        for (int i = 0; i < in; ++i) {
            const double xv = X.at(r, i);
            double* bp = bases->data() + (static_cast<std::size_t>(r) * in + i) * nb;
            double* dp = derivs->data() + (static_cast<std::size_t>(r) * in + i) * nb;
            bspline_basis_scalar(xv, grid, bp, dp);
            if (xv < grid.lo || xv > grid.hi)  // clamped: no gradient into x
                for (int j = 0; j < nb; ++j) dp[j] = 0.0;
        }

    Tensor y({n, out});
    for (int r = 0; r < n; ++r)
        for (int o = 0; o < out; ++o) {
            double acc = 0.0;
            for (int i = 0; i < in; ++i) {
                const double* bp = bases->data() + (static_cast<std::size_t>(r) * in + i) * nb;
                const double* wp = W.data() + (static_cast<std::size_t>(o) * in + i) * nb;
                double dot = 0.0;
                for (int j = 0; j < nb; ++j) dot += wp[j] * bp[j];
                acc += S.at(o, i) * dot;
            }
            y.at(r, o) = acc;
        }
    y.quantize();
    Var ov = t.emit(std::move(y));
    t.record([x, w_spline, scaler, ov, bases, derivs, n, in, out, nb](Tape& tp) {
        if (!tp.grad_touched(ov)) return;
        const Tensor& G = tp.grad_buf(ov);
        const Tensor& W2 = tp.value(w_spline);
        const Tensor& S2 = tp.value(scaler);
        Tensor& gx = tp.grad_buf(x);
        Tensor& gw = tp.grad_buf(w_spline);
        Tensor& gs = tp.grad_buf(scaler);
        for (int r = 0; r < n; ++r)
            for (int o = 0; o < out; ++o) {
                const double g = G.at(r, o);
                if (g == 0.0) continue;
                for (int i = 0; i < in; ++i) {
                    const double* bp = bases->data() + (static_cast<std::size_t>(r) * in + i) * nb;
                    const double* dp = derivs->data() + (static_cast<std::size_t>(r) * in + i) * nb;
                    const double* wp = W2.data() + (static_cast<std::size_t>(o) * in + i) * nb;
                    double* gwp = gw.data() + (static_cast<std::size_t>(o) * in + i) * nb;
                    const double sc = S2.at(o, i);
                    double dot_b = 0.0, dot_d = 0.0;
                    for (int j = 0; j < nb; ++j) {
                        dot_b += wp[j] * bp[j];
                        dot_d += wp[j] * dp[j];
                        gwp[j] += g * sc * bp[j];
                    }
                    gs.at(o, i) += g * dot_b;
                    gx.at(r, i) += g * sc * dot_d;
                }
            }
    });
    return ov;
}

}  // namespace

Var kan_forward(Tape& t, Var x, KanLayerParams& p, double dropout_rate, RunMode mode, Rng& rng) {
    const Tensor& X = t.value(x);
    if (X.rank() != 2 || X.dim(1) != p.in_dim)
        throw ShapeError("kan_forward: input " + shape_str(X.shape()) + ", expected [N," +
                         std::to_string(p.in_dim) + "]");
    Var base = add_rowwise(t, matmul(t, x, t.param(p.w_base)), t.param(p.b_base));
    Var spline = kan_spline_term(t, x, t.param(p.w_spline), t.param(p.spline_scaler), p.grid);
    return dropout(t, add(t, base, spline), dropout_rate, mode, rng);
}

Var kan_reg_loss(Tape& t, KanLayerParams& p) { return mean_all(t, abs_val(t, t.param(p.w_spline))); }

}  // namespace emkken::layers
