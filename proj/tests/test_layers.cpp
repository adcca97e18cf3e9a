#include <cmath>
#include <functional>

#include "doctest.h"
#include "emkken/errors.hpp"
#include "emkken/layers.hpp"
#include "emkken/optim.hpp"
#include "support/oracles.hpp"

using namespace emkken;
using namespace emkken::layers;

namespace {

Tensor randn(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    rng.fill_normal(t, 0.0, scale);
    return t;
}

double layer_gradcheck(const std::function<Var(Tape&)>& build, std::vector<Parameter*> params) {
    auto run = [&](bool with_backward) {
        Tape t;
        Var loss = mean_all(t, build(t));
        if (with_backward) t.backward(loss);
        return t.value(loss)[0];
    };
    return gradcheck(run, std::move(params)).max_rel_err;
}

}  // namespace

// ---------------------------------------------------------------------------
// MetaFP
// ---------------------------------------------------------------------------

TEST_CASE("metafp hand values and per-feature loop oracle") {
    Rng rng(1);
    MetaFpParams p = MetaFpParams::init("m", 1, 2, rng);
    p.w_fc.value = Tensor({1, 2}, {1.0, 2.0});
    p.b_fc.value = Tensor({2}, {0.0, 0.0});
    Tape t;
    Var out = metafp_forward(t, t.input(Tensor({1, 1}, {3.0})), p);
    CHECK(t.value(out).at(0, 0) == 3.0);
    CHECK(t.value(out).at(0, 1) == 6.0);

    // zero weights and bias: ReLU(0) = 0 everywhere
    MetaFpParams pz = MetaFpParams::init("z", 3, 12, rng);
    pz.w_fc.value.fill(0.0);
    pz.b_fc.value.fill(0.0);
    Tape t2;
    Var zero = metafp_forward(t2, t2.input(randn({4, 3}, rng)), pz);
    for (std::size_t i = 0; i < t2.value(zero).size(); ++i) CHECK(t2.value(zero)[i] == 0.0);

    // random case equals the per-feature loop
    MetaFpParams pr = MetaFpParams::init("r", 3, 12, rng);
    Tensor meta = randn({5, 3}, rng);
    Tape t3;
    Var got = metafp_forward(t3, t3.input(meta), pr);
    const int hper = pr.h_per;
    for (int n = 0; n < 5; ++n)
        for (int f = 0; f < 3; ++f)
            for (int j = 0; j < hper; ++j) {
                const double pre = meta.at(n, f) * pr.w_fc.value.at(0, j) + pr.b_fc.value[j];
                const double want = pre > 0.0 ? pre : 0.0;
                CHECK(t3.value(got).at(n, f * hper + j) == doctest::Approx(want).epsilon(1e-12));
            }

    CHECK_THROWS_AS((void)metafp_forward(t3, t3.input(randn({5, 4}, rng)), pr), ShapeError);
}

TEST_CASE("metafp gradcheck") {
    Rng rng(2);
    MetaFpParams p = MetaFpParams::init("m", 2, 8, rng);
    Parameter input("input", randn({3, 4, 2}, rng));
    CHECK(layer_gradcheck(
              [&](Tape& t) { return metafp_forward(t, t.param(input), p); },
              {&p.w_fc, &p.b_fc, &input}) <= 1e-6);
}

// ---------------------------------------------------------------------------
// Positional concat
// ---------------------------------------------------------------------------

TEST_CASE("relative positions formula") {
    Tensor one({1, 1}, {1.0});
    Tensor p1 = relative_positions(one);
    CHECK(p1[0] == 0.0);  // L = 1

    Tensor three({1, 3}, {1.0, 1.0, 1.0});
    Tensor p3 = relative_positions(three);
    CHECK(p3[0] == 0.0);
    CHECK(p3[1] == doctest::Approx(0.5));
    CHECK(p3[2] == 1.0);  // center last -> encoding 1.0

    // padded tail stays zero
    Tensor padded({1, 4}, {1.0, 1.0, 1.0, 0.0});
    Tensor pp = relative_positions(padded);
    CHECK(pp[2] == 1.0);
    CHECK(pp[3] == 0.0);
}

TEST_CASE("positional concat identity pass-through") {
    Rng rng(3);
    const int h = 3;
    PosConcatParams p = PosConcatParams::init("pc", h + 1, rng);
    // identity weight, zero bias: ReLU passes non-negative input through
    p.w_metafc.value.fill(0.0);
    for (int i = 0; i < h + 1; ++i) p.w_metafc.value.at(i, i) = 1.0;
    p.b_metafc.value.fill(0.0);

    Tensor x({1, 2, h}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    Tensor mask({1, 2}, {1.0, 1.0});
    Tape t;
    Var out = positional_concat(t, t.input(x), relative_positions(mask), p);
    CHECK(t.value(out).at(0, 0, 0) == doctest::Approx(0.1));
    CHECK(t.value(out).at(0, 0, h) == 0.0);  // position column
    CHECK(t.value(out).at(0, 1, 2) == doctest::Approx(0.6));
    CHECK(t.value(out).at(0, 1, h) == 1.0);
}

TEST_CASE("positional concat gradcheck") {
    Rng rng(4);
    PosConcatParams p = PosConcatParams::init("pc", 4, rng);
    Parameter input("input", randn({2, 3, 3}, rng));
    Tensor mask({2, 3}, {1, 1, 1, 1, 1, 0});
    CHECK(layer_gradcheck(
              [&](Tape& t) { return positional_concat(t, t.param(input), relative_positions(mask), p); },
              {&p.w_metafc, &p.b_metafc, &input}) <= 1e-6);
}

// ---------------------------------------------------------------------------
// Mamba pieces
// ---------------------------------------------------------------------------

TEST_CASE("in_project_split widths and zero-weight case") {
    Rng rng(5);
    MambaParams p = MambaParams::init("mb", 3, 4, rng);
    CHECK(p.d_inner == 6);
    p.w_in_proj.value.fill(0.0);
    for (int j = 0; j < 2 * p.d_inner; ++j) p.b_in_proj.value[j] = 0.1 * j;
    Tape t;
    auto [x, z] = in_project_split(t, t.input(randn({2, 3, 3}, rng)), p);
    CHECK(t.value(x).dim(2) == 6);
    CHECK(t.value(z).dim(2) == 6);
    // constant halves of the bias
    for (int j = 0; j < 6; ++j) {
        CHECK(t.value(x).at(0, 0, j) == doctest::Approx(0.1 * j));
        CHECK(t.value(z).at(1, 2, j) == doctest::Approx(0.1 * (6 + j)));
    }
}

TEST_CASE("causal_conv delta kernel and zero input") {
    Rng rng(6);
    MambaParams p = MambaParams::init("mb", 2, 2, rng);
    const int di = p.d_inner, wk = p.conv_width;

    // all-zero input, zero bias -> SiLU(0) = 0
    p.b_conv1d.value.fill(0.0);
    Tape t;
    Var zero = causal_conv(t, t.input(Tensor({1, 5, di})), t.param(p.w_conv1d), t.param(p.b_conv1d));
    for (std::size_t i = 0; i < t.value(zero).size(); ++i) CHECK(t.value(zero)[i] == 0.0);

    // delta kernel (last tap 1): y = SiLU(x) pointwise
    p.w_conv1d.value.fill(0.0);
    for (int c = 0; c < di; ++c) p.w_conv1d.value[static_cast<std::size_t>(c) * wk + wk - 1] = 1.0;
    Tensor x = randn({1, 5, di}, rng);
    Tape t2;
    Var out = causal_conv(t2, t2.input(x), t2.param(p.w_conv1d), t2.param(p.b_conv1d));
    for (int ti = 0; ti < 5; ++ti)
        for (int c = 0; c < di; ++c)
            CHECK(t2.value(out).at(0, ti, c) == doctest::Approx(silu_scalar(x.at(0, ti, c))).epsilon(1e-12));
}

TEST_CASE("causal_conv causality under perturbation") {
    Rng rng(7);
    MambaParams p = MambaParams::init("mb", 3, 2, rng);
    const int di = p.d_inner, l = 9;
    Tensor x = randn({1, l, di}, rng);
    Tape base;
    Var yb = causal_conv(base, base.input(x), base.param(p.w_conv1d), base.param(p.b_conv1d));
    for (int trial = 0; trial < 50; ++trial) {
        const int t0 = 1 + static_cast<int>(rng.uniform_int(l - 1));
        Tensor xp = x;
        for (int c = 0; c < di; ++c) xp.at(0, t0, c) += rng.normal();
        Tape t;
        Var yp = causal_conv(t, t.input(xp), t.param(p.w_conv1d), t.param(p.b_conv1d));
        for (int ti = 0; ti < t0; ++ti)
            for (int c = 0; c < di; ++c)
                CHECK(t.value(yp).at(0, ti, c) == base.value(yb).at(0, ti, c));  // bit-identical
    }
}

TEST_CASE("causal_conv gradcheck") {
    Rng rng(8);
    MambaParams p = MambaParams::init("mb", 2, 2, rng);
    Parameter input("x", randn({2, 4, p.d_inner}, rng));
    CHECK(layer_gradcheck(
              [&](Tape& t) { return causal_conv(t, t.param(input), t.param(p.w_conv1d), t.param(p.b_conv1d)); },
              {&p.w_conv1d, &p.b_conv1d, &input}) <= 1e-6);
}

TEST_CASE("x_project_split slices and softplus positivity") {
    Rng rng(9);
    MambaParams p = MambaParams::init("mb", 4, 4, rng);
    CHECK(p.dt_rank == 1);

    // zero input and b_dt = 0: dt = softplus(0) = ln 2 everywhere
    p.b_dt.value.fill(0.0);
    Tape t;
    XProjOut xp = x_project_split(t, t.input(Tensor({1, 3, p.d_inner})), p);
    CHECK(t.value(xp.dt).dim(2) == p.d_inner);
    CHECK(t.value(xp.b).dim(2) == p.d_state);
    CHECK(t.value(xp.c).dim(2) == p.d_state);
    for (std::size_t i = 0; i < t.value(xp.dt).size(); ++i)
        CHECK(t.value(xp.dt)[i] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // property sweep: dt strictly positive for random inputs
    MambaParams p2 = MambaParams::init("mb2", 8, 4, rng);
    for (int trial = 0; trial < 20; ++trial) {
        Tape t2;
        XProjOut out = x_project_split(t2, t2.input(randn({4, 8, p2.d_inner}, rng, 3.0)), p2);
        for (std::size_t i = 0; i < t2.value(out.dt).size(); ++i) CHECK(t2.value(out.dt)[i] > 0.0);
    }
}

// ---------------------------------------------------------------------------
// Selective scan
// ---------------------------------------------------------------------------

namespace {

struct ScanInputs {
    Parameter x, dt, b, c, a, d;
    ScanInputs(int n, int l, int di, int ds, Rng& rng)
        : x("x", Tensor({n, l, di})),
          dt("dt", Tensor({n, l, di})),
          b("B", Tensor({n, l, ds})),
          c("C", Tensor({n, l, ds})),
          a("A", Tensor({di, ds})),
          d("D", Tensor({di})) {
        rng.fill_normal(x.value, 0.0, 1.0);
        rng.fill_uniform(dt.value, 0.05, 0.8);
        rng.fill_normal(b.value, 0.0, 1.0);
        rng.fill_normal(c.value, 0.0, 1.0);
        rng.fill_uniform(a.value, -0.9, -0.1);
        rng.fill_uniform(d.value, 0.5, 1.5);
    }
};

}  // namespace

TEST_CASE("selective_scan matches the recurrence oracle in both modes") {
    Rng rng(10);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_int(2));
        const int l = 1 + static_cast<int>(rng.uniform_int(16));
        const int di = 1 + static_cast<int>(rng.uniform_int(8));
        const int ds = 1 + static_cast<int>(rng.uniform_int(4));
        ScanInputs in(n, l, di, ds, rng);
        for (bool zoh : {false, true}) {
            Tape t;
            Var y = selective_scan(t, t.param(in.x), t.param(in.dt), t.param(in.b), t.param(in.c), t.param(in.a),
                                   t.param(in.d), zoh ? ScanMode::zoh : ScanMode::paper_literal);
            Tensor want = oracles::scan_recurrence(in.x.value, in.dt.value, in.b.value, in.c.value, in.a.value,
                                                   in.d.value, zoh);
            for (std::size_t i = 0; i < want.size(); ++i)
                CHECK(t.value(y)[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("selective_scan closed forms") {
    Rng rng(11);
    const int n = 1, l = 5, di = 3, ds = 2;
    ScanInputs in(n, l, di, ds, rng);

    // A = 0 in literal mode: memoryless, y = dt*x*sum(B*C) + D*x
    in.a.value.fill(0.0);
    Tape t;
    Var y = selective_scan(t, t.param(in.x), t.param(in.dt), t.param(in.b), t.param(in.c), t.param(in.a),
                           t.param(in.d), ScanMode::paper_literal);
    for (int ti = 0; ti < l; ++ti)
        for (int i = 0; i < di; ++i) {
            double bc = 0.0;
            for (int s = 0; s < ds; ++s) bc += in.b.value.at(0, ti, s) * in.c.value.at(0, ti, s);
            const double want =
                in.dt.value.at(0, ti, i) * in.x.value.at(0, ti, i) * bc + in.d.value[i] * in.x.value.at(0, ti, i);
            CHECK(t.value(y).at(0, ti, i) == doctest::Approx(want).epsilon(1e-12));
        }

    // dt = 0: state stays zero, y = D .* x in both modes
    ScanInputs in2(n, l, di, ds, rng);
    in2.dt.value.fill(0.0);
    for (bool zoh : {false, true}) {
        Tape t2;
        Var y2 = selective_scan(t2, t2.param(in2.x), t2.param(in2.dt), t2.param(in2.b), t2.param(in2.c),
                                t2.param(in2.a), t2.param(in2.d), zoh ? ScanMode::zoh : ScanMode::paper_literal);
        for (int ti = 0; ti < l; ++ti)
            for (int i = 0; i < di; ++i)
                CHECK(t2.value(y2).at(0, ti, i) ==
                      doctest::Approx(in2.d.value[i] * in2.x.value.at(0, ti, i)).epsilon(1e-13));
    }
}

TEST_CASE("selective_scan causality under perturbation") {
    Rng rng(12);
    const int l = 11, di = 4, ds = 3;
    ScanInputs in(1, l, di, ds, rng);
    Tape base;
    Var yb = selective_scan(base, base.param(in.x), base.param(in.dt), base.param(in.b), base.param(in.c),
                            base.param(in.a), base.param(in.d), ScanMode::paper_literal);
    for (int trial = 0; trial < 50; ++trial) {
        const int t0 = 1 + static_cast<int>(rng.uniform_int(l - 1));
        ScanInputs p = in;
        for (int i = 0; i < di; ++i) p.x.value.at(0, t0, i) += rng.normal();
        for (int s = 0; s < ds; ++s) p.b.value.at(0, t0, s) += rng.normal();
        Tape t;
        Var yp = selective_scan(t, t.param(p.x), t.param(p.dt), t.param(p.b), t.param(p.c), t.param(p.a),
                                t.param(p.d), ScanMode::paper_literal);
        for (int ti = 0; ti < t0; ++ti)
            for (int i = 0; i < di; ++i) CHECK(t.value(yp).at(0, ti, i) == base.value(yb).at(0, ti, i));
    }
}

TEST_CASE("selective_scan gradcheck both modes") {
    Rng rng(13);
    for (bool zoh : {false, true}) {
        ScanInputs in(2, 5, 3, 2, rng);
        const double err = layer_gradcheck(
            [&](Tape& t) {
                return selective_scan(t, t.param(in.x), t.param(in.dt), t.param(in.b), t.param(in.c), t.param(in.a),
                                      t.param(in.d), zoh ? ScanMode::zoh : ScanMode::paper_literal);
            },
            {&in.x, &in.dt, &in.b, &in.c, &in.a, &in.d});
        const char* mode_name = zoh ? "zoh" : "literal";
        INFO(mode_name);
        CHECK(err <= 1e-6);
    }
}

TEST_CASE("selective_scan divergence reporting") {
    Rng rng(14);
    ScanInputs in(1, 4, 2, 2, rng);
    in.x.value.fill(1e308);
    in.b.value.fill(1e308);
    Tape t;
    CHECK_THROWS_AS((void)selective_scan(t, t.param(in.x), t.param(in.dt), t.param(in.b), t.param(in.c),
                                         t.param(in.a), t.param(in.d), ScanMode::paper_literal),
                    DivergenceError);
}

TEST_CASE("mamba_forward gate annihilation and full-block gradcheck") {
    Rng rng(15);
    MambaParams p = MambaParams::init("mb", 3, 3, rng);
    // zero in_proj: z = 0, SiLU(0) = 0 kills the gate; no out_proj bias
    p.w_in_proj.value.fill(0.0);
    p.b_in_proj.value.fill(0.0);
    Rng drop(1);
    Tape t;
    MambaOptions opts;
    Var out = mamba_forward(t, t.input(randn({1, 4, 3}, rng)), p, opts, drop);
    for (std::size_t i = 0; i < t.value(out).size(); ++i) CHECK(t.value(out)[i] == 0.0);

    // gradcheck through the whole block, both scan modes (dropout off)
    for (bool zoh : {false, true}) {
        Rng rng2(16);
        MambaParams pg = MambaParams::init("g", 2, 2, rng2);
        Parameter input("u", randn({2, 3, 2}, rng2));
        MambaOptions gopts;
        gopts.scan_mode = zoh ? ScanMode::zoh : ScanMode::paper_literal;
        std::vector<Parameter*> params = pg.parameters();
        params.push_back(&input);
        Rng drng(0);
        const double err = layer_gradcheck(
            [&](Tape& tt) { return mamba_forward(tt, tt.param(input), pg, gopts, drng); }, params);
        const char* mode_name = zoh ? "zoh" : "literal";
        INFO(mode_name);
        CHECK(err <= 1e-6);
    }
}

TEST_CASE("mamba_forward single-step closed form at L=1") {
    Rng rng(17);
    MambaParams p = MambaParams::init("mb", 2, 2, rng);
    Tensor u = randn({1, 1, 2}, rng);
    Rng drop(1);
    Tape t;
    MambaOptions opts;
    Var out = mamba_forward(t, t.input(u), p, opts, drop);

    // hand-unrolled: in_proj -> conv(single left-padded tap) -> x_proj ->
    // one scan step -> gate -> out_proj
    const int di = p.d_inner, ds = p.d_state, wk = p.conv_width, r = p.dt_rank;
    std::vector<double> xz(2 * di, 0.0);
    for (int j = 0; j < 2 * di; ++j) {
        double acc = p.b_in_proj.value[j];
        for (int k = 0; k < 2; ++k) acc += u.at(0, 0, k) * p.w_in_proj.value.at(k, j);
        xz[j] = acc;
    }
    std::vector<double> xc(di);
    for (int c = 0; c < di; ++c)
        xc[c] = silu_scalar(p.w_conv1d.value[static_cast<std::size_t>(c) * wk + wk - 1] * xz[c] +
                            p.b_conv1d.value[c]);
    std::vector<double> proj(r + 2 * ds, 0.0);
    for (int j = 0; j < r + 2 * ds; ++j)
        for (int i = 0; i < di; ++i) proj[j] += xc[i] * p.w_x_proj.value.at(i, j);
    std::vector<double> dt(di);
    for (int i = 0; i < di; ++i) {
        double acc = p.b_dt.value[i];
        for (int k = 0; k < r; ++k) acc += proj[k] * p.w_dt.value.at(k, i);
        dt[i] = softplus_scalar(acc);
    }
    std::vector<double> y(di);
    for (int i = 0; i < di; ++i) {
        double acc = 0.0;
        for (int s = 0; s < ds; ++s) {
            const double state = dt[i] * proj[r + s] * xc[i];  // S0 = 0
            acc += state * proj[r + ds + s];
        }
        y[i] = (acc + 1.0 * xc[i]) * silu_scalar(xz[di + i]);  // D starts at 1
    }
    for (int k = 0; k < 2; ++k) {
        double acc = 0.0;
        for (int i = 0; i < di; ++i) acc += y[i] * p.w_out_proj.value.at(i, k);
        CHECK(t.value(out).at(0, 0, k) == doctest::Approx(acc).epsilon(1e-10));
    }
}

// ---------------------------------------------------------------------------
// B-splines and KAN
// ---------------------------------------------------------------------------

TEST_CASE("bspline basics: hat apex, partition of unity, oracle match") {
    // order 1: at an interior knot exactly one hat peaks at 1
    KanGrid hat = make_kan_grid(-1.0, 1.0, 4, 1);
    std::vector<double> basis(hat.basis_count());
    bspline_basis_scalar(-0.5, hat, basis.data(), nullptr);
    int ones = 0, zeros = 0;
    for (double b : basis) {
        if (b == doctest::Approx(1.0)) ++ones;
        if (b == doctest::Approx(0.0)) ++zeros;
    }
    CHECK(ones == 1);
    CHECK(zeros == hat.basis_count() - 1);

    // partition of unity and non-negativity over the interior, order 3
    KanGrid grid = make_kan_grid(-1.0, 1.0, 5, 3);
    Rng rng(18);
    for (int i = 0; i < 2000; ++i) {
        const double x = rng.uniform(-0.999, 0.999);
        std::vector<double> b(grid.basis_count());
        bspline_basis_scalar(x, grid, b.data(), nullptr);
        double sum = 0.0;
        int nonzero = 0;
        for (double v : b) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0 + 1e-12);
            if (v != 0.0) ++nonzero;
            sum += v;
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-9);
        CHECK(nonzero <= grid.order + 1);
    }

    // random points against the recursive Cox-de Boor oracle
    for (int i = 0; i < 500; ++i) {
        const double x = rng.uniform(-1.0, 0.9999);
        std::vector<double> b(grid.basis_count());
        bspline_basis_scalar(x, grid, b.data(), nullptr);
        for (int j = 0; j < grid.basis_count(); ++j)
            CHECK(b[j] == doctest::Approx(oracles::cox_de_boor(j, grid.order, x, grid.knots)).epsilon(1e-12));
    }
}

TEST_CASE("kan reduces to its base linear map with zero spline term") {
    Rng rng(19);
    for (bool zero_weights : {true, false}) {
        KanLayerParams p = KanLayerParams::init("kan", 3, 2, rng);
        if (zero_weights)
            p.w_spline.value.fill(0.0);
        else
            p.spline_scaler.value.fill(0.0);
        Tensor x = randn({4, 3}, rng);
        Rng drop(1);
        Tape t;
        Var out = kan_forward(t, t.input(x), p, 0.0, RunMode::eval, drop);
        for (int n = 0; n < 4; ++n)
            for (int o = 0; o < 2; ++o) {
                double want = p.b_base.value[o];
                for (int i = 0; i < 3; ++i) want += x.at(n, i) * p.w_base.value.at(i, o);
                CHECK(std::fabs(t.value(out).at(n, o) - want) <= 1e-12);
            }
    }
}

TEST_CASE("kan matches the double-loop oracle") {
    Rng rng(20);
    KanLayerParams p = KanLayerParams::init("kan", 4, 3, rng);
    rng.fill_normal(p.w_spline.value, 0.0, 0.3);
    rng.fill_uniform(p.spline_scaler.value, 0.5, 1.5);
    Tensor x = randn({6, 4}, rng, 0.8);  // some values clamp at the grid edge
    Rng drop(1);
    Tape t;
    Var out = kan_forward(t, t.input(x), p, 0.0, RunMode::eval, drop);
    Tensor want = oracles::kan_reference(x, p);
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(t.value(out)[i] == doctest::Approx(want[i]).epsilon(1e-10));
}

TEST_CASE("kan gradcheck") {
    Rng rng(21);
    KanLayerParams p = KanLayerParams::init("kan", 3, 2, rng);
    rng.fill_normal(p.w_spline.value, 0.0, 0.3);
    // interior inputs: the clamp kink at the grid edge is non-differentiable
    Parameter input("x", Tensor({4, 3}));
    rng.fill_uniform(input.value, -0.8, 0.8);
    Rng drop(1);
    std::vector<Parameter*> params = p.parameters();
    params.push_back(&input);
    CHECK(layer_gradcheck(
              [&](Tape& t) { return kan_forward(t, t.param(input), p, 0.0, RunMode::eval, drop); }, params) <= 1e-6);
}

TEST_CASE("kan regularizer is the mean absolute spline weight") {
    Rng rng(22);
    KanLayerParams p = KanLayerParams::init("kan", 2, 2, rng);
    p.w_spline.value.fill(0.0);
    {
        Tape t;
        CHECK(t.value(kan_reg_loss(t, p))[0] == 0.0);
    }
    p.w_spline.value.fill(-0.75);
    {
        Tape t;
        CHECK(t.value(kan_reg_loss(t, p))[0] == doctest::Approx(0.75).epsilon(1e-15));
    }
    rng.fill_normal(p.w_spline.value, 0.0, 1.0);
    double want = 0.0;
    for (std::size_t i = 0; i < p.w_spline.value.size(); ++i) want += std::fabs(p.w_spline.value[i]);
    want /= p.w_spline.value.size();
    Tape t;
    CHECK(t.value(kan_reg_loss(t, p))[0] == doctest::Approx(want).epsilon(1e-12));
}

// ---------------------------------------------------------------------------
// Padding invariance at the layer level
// ---------------------------------------------------------------------------

TEST_CASE("zero padding after the last valid position never leaks backward") {
    Rng rng(23);
    MambaParams p = MambaParams::init("mb", 3, 3, rng);
    const int l = 5, pad = 3;
    Tensor u = randn({1, l, 3}, rng);
    Tensor padded({1, l + pad, 3});
    for (int ti = 0; ti < l; ++ti)
        for (int k = 0; k < 3; ++k) padded.at(0, ti, k) = u.at(0, ti, k);

    Rng d1(1), d2(1);
    Tape ta, tb;
    MambaOptions opts;
    Var ya = mamba_forward(ta, ta.input(u), p, opts, d1);
    Var yb = mamba_forward(tb, tb.input(padded), p, opts, d2);
    for (int ti = 0; ti < l; ++ti)
        for (int k = 0; k < 3; ++k)
            CHECK(ta.value(ya).at(0, ti, k) == doctest::Approx(tb.value(yb).at(0, ti, k)).epsilon(1e-12));
}
