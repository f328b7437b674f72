#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "memjscc/ad.hpp"
#include "memjscc/nn.hpp"
#include "memjscc/rng.hpp"

using namespace memjscc;
using ad::Mat;
using ad::Var;

namespace {

using ScalarFn = std::function<Var(ad::Tape&, const nn::Bound&)>;

double eval_fn(nn::ParamStore& s, const ScalarFn& f) {
    ad::Tape t;
    auto b = nn::bind(t, s);
    return f(t, b).val()(0, 0);
}

// Central finite differences against the tape gradient, every entry of every
// parameter.
void check_gradients(nn::ParamStore& s, const ScalarFn& f, double tol = 1e-6, double h = 1e-6) {
    ad::Tape t;
    auto b = nn::bind(t, s);
    Var y = f(t, b);
    REQUIRE(y.val().size() == 1);
    t.backward(y.id);
    auto grads = nn::collect_grads(b);
    for (int pi = 0; pi < s.count(); ++pi) {
        Mat& v = s.value(pi);
        for (Eigen::Index j = 0; j < v.size(); ++j) {
            const double orig = v(j);
            v(j) = orig + h;
            const double fp = eval_fn(s, f);
            v(j) = orig - h;
            const double fm = eval_fn(s, f);
            v(j) = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = grads[static_cast<std::size_t>(pi)](j);
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
            INFO(s.name(pi) << "[" << j << "] fd=" << fd << " analytic=" << an);
            CHECK(std::abs(fd - an) / denom <= tol);
        }
    }
}

Mat random_mat(Eigen::Index r, Eigen::Index c, RngStream& rng, double scale = 1.0) {
    Mat m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * rng.gauss();
    return m;
}

}  // namespace

TEST_CASE("elementwise op gradients") {
    RngStream rng(1);
    nn::ParamStore s;
    s.add("x", random_mat(3, 4, rng, 0.7));
    s.add("y", random_mat(3, 4, rng, 0.7));
    check_gradients(s, [](ad::Tape&, const nn::Bound& b) {
        Var x = b[0], y = b[1];
        Var z = ad::add(ad::mul(ad::tanh_(x), ad::sigmoid_(y)), ad::scale(ad::square_(x), 0.3));
        z = ad::add(z, ad::softplus_(ad::sub(x, y)));
        z = ad::add(z, ad::exp_(ad::scale(y, 0.1)));
        return ad::mean_(z);
    });
}

TEST_CASE("log sqrt abs relu clamp gradients") {
    RngStream rng(2);
    nn::ParamStore s;
    Mat x = random_mat(2, 5, rng).array().abs() + 0.5;
    s.add("x", x);
    check_gradients(s, [](ad::Tape&, const nn::Bound& b) {
        Var x = b[0];
        Var z = ad::add(ad::log_(x), ad::sqrt_(x));
        z = ad::add(z, ad::abs_(ad::add_scalar(x, -1.0)));
        z = ad::add(z, ad::relu_(ad::add_scalar(x, -0.8)));
        z = ad::add(z, ad::clamp_(ad::scale(x, 2.0), 0.5, 2.5));
        return ad::sum_(z);
    }, 1e-5);
}

TEST_CASE("matmul and broadcast gradients") {
    RngStream rng(3);
    nn::ParamStore s;
    s.add("a", random_mat(4, 3, rng));
    s.add("b", random_mat(3, 5, rng));
    s.add("r", random_mat(1, 5, rng));
    check_gradients(s, [](ad::Tape&, const nn::Bound& b) {
        Var z = ad::add_row_broadcast(ad::matmul(b[0], b[1]), b[2]);
        return ad::mean_(ad::square_(z));
    });
}

TEST_CASE("concat and global average pool gradients") {
    RngStream rng(4);
    nn::ParamStore s;
    s.add("a", random_mat(3, 8, rng));  // 2 channels x 4 locations
    s.add("b", random_mat(3, 2, rng));
    check_gradients(s, [](ad::Tape&, const nn::Bound& b) {
        Var pooled = ad::global_avg_pool(b[0], 2, 4);
        Var z = ad::concat_cols(pooled, b[1]);
        return ad::mean_(ad::square_(ad::tanh_(z)));
    });
}

TEST_CASE("gdn and igdn gradients") {
    RngStream rng(5);
    const int C = 3, HW = 4, B = 2;
    nn::ParamStore s;
    s.add("x", random_mat(B, C * HW, rng));
    s.add("beta_raw", random_mat(1, C, rng, 0.5));
    s.add("gamma_raw", random_mat(C, C, rng, 0.3));
    auto fn = [C, HW](bool inverse) {
        return [C, HW, inverse](ad::Tape&, const nn::Bound& b) {
            Var beta = ad::add_scalar(ad::square_(b[1]), 1e-2);
            Var gamma = ad::square_(b[2]);
            Var y = inverse ? ad::igdn(b[0], beta, gamma, C, HW) : ad::gdn(b[0], beta, gamma, C, HW);
            return ad::mean_(ad::square_(y));
        };
    };
    check_gradients(s, fn(false), 1e-5);
    check_gradients(s, fn(true), 1e-5);
}

TEST_CASE("gdn with per-sample beta gradients") {
    RngStream rng(6);
    const int C = 2, HW = 4, B = 3;
    nn::ParamStore s;
    s.add("x", random_mat(B, C * HW, rng));
    s.add("beta_raw", random_mat(B, C, rng, 0.5));
    s.add("gamma_raw", random_mat(C, C, rng, 0.3));
    check_gradients(s, [C, HW](ad::Tape&, const nn::Bound& b) {
        Var beta = ad::add_scalar(ad::square_(b[1]), 1e-2);
        Var gamma = ad::square_(b[2]);
        return ad::mean_(ad::square_(ad::gdn(b[0], beta, gamma, C, HW)));
    }, 1e-5);
}

TEST_CASE("gdn known values") {
    // beta=1, gamma=0 is the identity.
    ad::Tape t;
    Mat x(1, 4);
    x << 1.0, -2.0, 0.5, 3.0;
    Var xv = ad::constant(t, x);
    Var beta = ad::constant(t, Mat::Ones(1, 2));
    Var gamma = ad::constant(t, Mat::Zero(2, 2));
    Var y = ad::gdn(xv, beta, gamma, 2, 2);
    for (int i = 0; i < 4; ++i) CHECK(y.val()(0, i) == Catch::Approx(x(0, i)));
    Var yi = ad::igdn(xv, beta, gamma, 2, 2);
    for (int i = 0; i < 4; ++i) CHECK(yi.val()(0, i) == Catch::Approx(x(0, i)));

    // Single channel, w=2, beta=0, gamma=0.25: u = 2 / sqrt(0.25 * 4) = 2.
    Mat x1 = Mat::Constant(1, 1, 2.0);
    Var y1 = ad::gdn(ad::constant(t, x1), ad::constant(t, Mat::Constant(1, 1, 1e-12)),
                     ad::constant(t, Mat::Constant(1, 1, 0.25)), 1, 1);
    CHECK(y1.val()(0, 0) == Catch::Approx(2.0).epsilon(1e-9));

    // Two channels, w=(3,4), beta=(1,1), gamma=I: (0.94868, 0.97014).
    Mat x2(1, 2);
    x2 << 3.0, 4.0;
    Var y2 = ad::gdn(ad::constant(t, x2), ad::constant(t, Mat::Ones(1, 2)),
                     ad::constant(t, Mat::Identity(2, 2)), 2, 1);
    CHECK(y2.val()(0, 0) == Catch::Approx(3.0 / std::sqrt(10.0)).epsilon(1e-6));
    CHECK(y2.val()(0, 1) == Catch::Approx(4.0 / std::sqrt(17.0)).epsilon(1e-6));
    CHECK(y2.val()(0, 0) == Catch::Approx(0.94868).margin(1e-5));
    CHECK(y2.val()(0, 1) == Catch::Approx(0.97014).margin(1e-5));
}

TEST_CASE("conv2d gradients and shapes") {
    RngStream rng(7);
    auto g = ad::make_conv_geom(2, 6, 6, 3, 3, 2);
    CHECK(g.ho == 3);
    CHECK(g.wo == 3);
    nn::ParamStore s;
    s.add("x", random_mat(2, 2 * 6 * 6, rng, 0.5));
    s.add("w", random_mat(3, 2 * 3 * 3, rng, 0.5));
    s.add("b", random_mat(1, 3, rng, 0.5));
    check_gradients(s, [g](ad::Tape&, const nn::Bound& b) {
        return ad::mean_(ad::square_(ad::conv2d(b[0], b[1], b[2], g)));
    }, 1e-5);
}

TEST_CASE("conv2d_transpose gradients and inversion of geometry") {
    RngStream rng(8);
    auto g = ad::make_conv_geom(2, 6, 6, 3, 3, 2);  // mirror conv: large(2ch 6x6) -> small(3ch 3x3)
    nn::ParamStore s;
    s.add("x", random_mat(2, 3 * 3 * 3, rng, 0.5));  // small side input
    s.add("w", random_mat(3, 2 * 3 * 3, rng, 0.5));
    s.add("b", random_mat(1, 2, rng, 0.5));
    check_gradients(s, [g](ad::Tape&, const nn::Bound& b) {
        Var y = ad::conv2d_transpose(b[0], b[1], b[2], g);
        return ad::mean_(ad::square_(y));
    }, 1e-5);
    ad::Tape t;
    auto bnd = nn::bind(t, s);
    Var y = ad::conv2d_transpose(bnd[0], bnd[1], bnd[2], g);
    CHECK(y.val().cols() == 2 * 6 * 6);
}

TEST_CASE("stride-2 conv produces expected downsampling chain") {
    // 32x32 -> 16 -> 8 as in the codec architecture.
    auto g1 = ad::make_conv_geom(3, 32, 32, 16, 5, 2);
    CHECK(g1.ho == 16);
    auto g2 = ad::make_conv_geom(16, 16, 16, 32, 5, 2);
    CHECK(g2.ho == 8);
    auto g3 = ad::make_conv_geom(32, 8, 8, 32, 3, 1);
    CHECK(g3.ho == 8);
}

TEST_CASE("mlp forward and gradient") {
    RngStream rng(9);
    nn::ParamStore s;
    auto mlp = nn::Mlp::create(s, "mlp", {3, 8, 2}, rng);
    const int xi = s.add("x", random_mat(4, 3, rng));
    check_gradients(s, [&mlp, xi](ad::Tape&, const nn::Bound& b) {
        return ad::mean_(ad::square_(mlp.forward(b, b[xi])));
    }, 1e-5);
}

TEST_CASE("adam determinism") {
    auto run = [] {
        RngStream rng(10);
        nn::ParamStore s;
        s.add("w", random_mat(3, 3, rng));
        nn::AdamState st;
        for (int i = 0; i < 50; ++i) {
            ad::Tape t;
            auto b = nn::bind(t, s);
            Var loss = ad::mean_(ad::square_(ad::add_scalar(b[0], -0.3)));
            t.backward(loss.id);
            auto g = nn::collect_grads(b);
            nn::adam_step(s, g, st, 1e-2);
        }
        return s.value(0);
    };
    Mat a = run(), b = run();
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}
