#pragma once

#include <string>
#include <vector>

#include "emkken/autodiff.hpp"

namespace emkken::layers {

// ---------------------------------------------------------------------------
// MetaFP: shared per-feature linear expansion + ReLU over sparse metadata.
// Each scalar feature becomes h_per channels; blocks are flattened in
// feature order, so the output width is f_meta * h_per.
// ---------------------------------------------------------------------------
struct MetaFpParams {
    int f_meta = 0;
    int h_per = 0;
    Parameter w_fc;  // [1, h_per]
    Parameter b_fc;  // [h_per]

    static MetaFpParams init(const std::string& prefix, int f_meta, int h_dim, Rng& rng);
    int h_meta() const { return f_meta * h_per; }
    std::vector<Parameter*> parameters();
};

/// meta [N,F] or [N,L,F] -> [N, F*h_per] / [N,L,F*h_per].
/// with_relu=false is the no_metafp ablation stub (same shapes, pure linear).
Var metafp_forward(Tape& t, Var meta, MetaFpParams& p, bool with_relu = true);

/// x [..., A] -> [..., B] through w [A,B], optionally + bias; keeps the
/// leading shape.
Var linear_lastdim(Tape& t, Var x, Var w);
Var linear_lastdim(Tape& t, Var x, Var w, Var bias);

// ---------------------------------------------------------------------------
// Positional concatenation: appends the relative position column and applies
// a width-preserving ReLU(linear).
// ---------------------------------------------------------------------------
struct PosConcatParams {
    int width = 0;  // h_meta + 1
    Parameter w_metafc;  // [width, width]
    Parameter b_metafc;  // [width]

    static PosConcatParams init(const std::string& prefix, int width, Rng& rng);
    std::vector<Parameter*> parameters();
};

/// Relative positions i/(L_n-1) for the valid prefix of each row (0 when
/// L_n = 1); padded positions get 0. Returns [N,L,1].
Tensor relative_positions(const Tensor& valid_mask);

/// meta_fc [N,L,H] + positions [N,L,1] -> [N,L,H+1].
Var positional_concat(Tape& t, Var meta_fc, const Tensor& positions, PosConcatParams& p);

// ---------------------------------------------------------------------------
// Mamba block.
// ---------------------------------------------------------------------------
enum class ScanMode {
    paper_literal,  // S <- A*S + dt*B*x, A used exactly as written
    zoh,            // S <- exp(dt*A)*S + dt*B*x
};

struct MambaParams {
    int d_model = 0;
    int d_inner = 0;  // 2 * d_model
    int d_state = 0;
    int dt_rank = 0;  // ceil(d_inner / 16)
    int conv_width = 0;

    Parameter w_in_proj;   // [d_model, 2*d_inner]
    Parameter b_in_proj;   // [2*d_inner]
    Parameter w_conv1d;    // [d_inner, 1, conv_width], depthwise
    Parameter b_conv1d;    // [d_inner]
    Parameter w_x_proj;    // [d_inner, dt_rank + 2*d_state]
    Parameter w_dt;        // [dt_rank, d_inner]
    Parameter b_dt;        // [d_inner]
    Parameter a_log;       // [d_inner, d_state]; effective A = -softplus(a_log)
    Parameter d_skip;      // [d_inner]
    Parameter w_out_proj;  // [d_inner, d_model]

    /// with_conv/with_ssm=false skip allocating the weights the matching
    /// ablation never touches.
    static MambaParams init(const std::string& prefix, int d_model, int d_state, Rng& rng, int conv_width = 4,
                            bool with_conv = true, bool with_ssm = true);
    std::vector<Parameter*> parameters();

    /// Effective negative state matrix on the tape. Literal mode clamps the
    /// magnitude into (0,1) so the plain recurrence stays contractive.
    Var effective_a(Tape& t, ScanMode mode);
};

/// Eq-4/5 step: u [N,L,d_model] -> (x, z), each [N,L,d_inner].
std::pair<Var, Var> in_project_split(Tape& t, Var u, MambaParams& p);

/// Depthwise causal convolution + SiLU. Left-padded with conv_width-1
/// zeros; output at t only sees inputs <= t.
Var causal_conv(Tape& t, Var x, Var w, Var b);

struct XProjOut {
    Var dt;  // [N,L,d_inner], strictly positive (softplus)
    Var b;   // [N,L,d_state]
    Var c;   // [N,L,d_state]
};

/// Splits W_x_proj output in the order (dt_rank | d_state | d_state) and
/// expands dt through the low-rank projection + softplus.
XProjOut x_project_split(Tape& t, Var x_conv, MambaParams& p);

/// The recurrence over the sequence, Theta(L * d_inner * d_state):
///   S <- A_bar*S + dt*B*x;  y = S.C + D*x
/// Throws DivergenceError naming the step if the state goes non-finite.
Var selective_scan(Tape& t, Var x, Var dt, Var b, Var c, Var a_eff, Var d_skip, ScanMode mode);

struct MambaOptions {
    ScanMode scan_mode = ScanMode::paper_literal;
    double dropout_rate = 0.0;
    RunMode run_mode = RunMode::eval;
    bool with_conv = true;  // false: no_conv ablation, SiLU retained
    bool with_ssm = true;   // false: no_ssm ablation, scan is identity on x'
};

/// Full block: in_proj -> conv -> ssm -> gate with SiLU(z) -> out_proj ->
/// dropout. u [N,L,d_model] -> [N,L,d_model].
Var mamba_forward(Tape& t, Var u, MambaParams& p, const MambaOptions& opts, Rng& rng);

// ---------------------------------------------------------------------------
// KAN unit: linear base + learnable B-spline term per edge.
// ---------------------------------------------------------------------------
struct KanGrid {
    double lo = -1.0;
    double hi = 1.0;
    int intervals = 5;  // G
    int order = 3;      // k
    std::vector<double> knots;  // G + 2k + 1 values, uniform, extended k per side

    int basis_count() const { return intervals + order; }
};

KanGrid make_kan_grid(double lo, double hi, int intervals, int order);

/// Degree-`order` B-spline basis values of one (clamped) scalar over the
/// grid; writes basis_count() values summing to 1 on the interior.
/// deriv_out may be null.
void bspline_basis_scalar(double x, const KanGrid& grid, double* basis_out, double* deriv_out);

/// Batch version for inspection/tests: xs -> [n, basis_count].
Tensor bspline_basis(const std::vector<double>& xs, const KanGrid& grid);

struct KanLayerParams {
    int in_dim = 0;
    int out_dim = 0;
    KanGrid grid;
    Parameter w_base;         // [in, out]
    Parameter b_base;         // [out]
    Parameter w_spline;       // [out, in, G+k]
    Parameter spline_scaler;  // [out, in], initialized to 1

    static KanLayerParams init(const std::string& prefix, int in_dim, int out_dim, Rng& rng, int grid_intervals = 5,
                               int spline_order = 3);
    std::vector<Parameter*> parameters();
};

/// x [N,in] -> dropout(base + spline) [N,out]. Inputs are clamped to the
/// grid range inside the spline term.
Var kan_forward(Tape& t, Var x, KanLayerParams& p, double dropout_rate, RunMode mode, Rng& rng);

/// Mean absolute value of the spline weights.
Var kan_reg_loss(Tape& t, KanLayerParams& p);

}  // namespace emkken::layers
