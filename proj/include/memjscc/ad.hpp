#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace memjscc::ad {

using Mat = Eigen::MatrixXd;

// Define-by-run reverse-mode tape over dense matrices. Batched feature maps
// are stored one sample per row with channel-major layout within the row
// (index = c*H*W + y*W + x); convolution and GDN ops carry the geometry.
class Tape {
public:
    int add(Mat v) {
        nodes_.push_back(Node{std::move(v), Mat(), {}});
        return static_cast<int>(nodes_.size()) - 1;
    }

    void set_back(int id, std::function<void(Tape&)> back) {
        nodes_[static_cast<std::size_t>(id)].back = std::move(back);
    }

    const Mat& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }

    Mat& grad(int id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.size() == 0) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
        return n.grad;
    }

    void backward(int root) {
        if (val(root).size() != 1) throw std::invalid_argument("backward: root must be scalar");
        grad(root)(0, 0) = 1.0;
        for (int i = root; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.back && n.grad.size() != 0) n.back(*this);
        }
    }

private:
    struct Node {
        Mat val;
        Mat grad;
        std::function<void(Tape&)> back;
    };
    std::vector<Node> nodes_;
};

struct Var {
    Tape* tape = nullptr;
    int id = -1;
    const Mat& val() const { return tape->val(id); }
};

inline Var constant(Tape& t, Mat v) { return {&t, t.add(std::move(v))}; }

namespace detail {
inline void check_same_shape(const Mat& a, const Mat& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

inline Var unary(Var x, Mat out, std::function<void(Tape&, int, int)> back) {
    Tape& t = *x.tape;
    const int id = t.add(std::move(out));
    t.set_back(id, [xi = x.id, id, back = std::move(back)](Tape& tp) { back(tp, id, xi); });
    return {&t, id};
}
}  // namespace detail

inline Var add(Var a, Var b) {
    Tape& t = *a.tape;
    detail::check_same_shape(a.val(), b.val(), "add");
    const int id = t.add(a.val() + b.val());
    t.set_back(id, [ai = a.id, bi = b.id, id](Tape& tp) {
        tp.grad(ai) += tp.grad(id);
        tp.grad(bi) += tp.grad(id);
    });
    return {&t, id};
}

inline Var sub(Var a, Var b) {
    Tape& t = *a.tape;
    detail::check_same_shape(a.val(), b.val(), "sub");
    const int id = t.add(a.val() - b.val());
    t.set_back(id, [ai = a.id, bi = b.id, id](Tape& tp) {
        tp.grad(ai) += tp.grad(id);
        tp.grad(bi) -= tp.grad(id);
    });
    return {&t, id};
}

inline Var mul(Var a, Var b) {
    Tape& t = *a.tape;
    detail::check_same_shape(a.val(), b.val(), "mul");
    const int id = t.add(a.val().cwiseProduct(b.val()));
    t.set_back(id, [ai = a.id, bi = b.id, id](Tape& tp) {
        tp.grad(ai) += tp.grad(id).cwiseProduct(tp.val(bi));
        tp.grad(bi) += tp.grad(id).cwiseProduct(tp.val(ai));
    });
    return {&t, id};
}

inline Var scale(Var x, double c) {
    return detail::unary(x, x.val() * c, [c](Tape& tp, int id, int xi) {
        tp.grad(xi) += tp.grad(id) * c;
    });
}

inline Var add_scalar(Var x, double c) {
    return detail::unary(x, x.val().array() + c, [](Tape& tp, int id, int xi) {
        tp.grad(xi) += tp.grad(id);
    });
}

inline Var matmul(Var a, Var b) {
    Tape& t = *a.tape;
    if (a.val().cols() != b.val().rows()) throw std::invalid_argument("matmul: inner dim mismatch");
    const int id = t.add(a.val() * b.val());
    t.set_back(id, [ai = a.id, bi = b.id, id](Tape& tp) {
        tp.grad(ai) += tp.grad(id) * tp.val(bi).transpose();
        tp.grad(bi) += tp.val(ai).transpose() * tp.grad(id);
    });
    return {&t, id};
}

// X [B,n] plus a [1,n] row, broadcast across rows.
inline Var add_row_broadcast(Var x, Var r) {
    Tape& t = *x.tape;
    if (r.val().rows() != 1 || r.val().cols() != x.val().cols())
        throw std::invalid_argument("add_row_broadcast: shape mismatch");
    Mat out = x.val();
    out.rowwise() += r.val().row(0);
    const int id = t.add(std::move(out));
    t.set_back(id, [xi = x.id, ri = r.id, id](Tape& tp) {
        tp.grad(xi) += tp.grad(id);
        tp.grad(ri) += tp.grad(id).colwise().sum();
    });
    return {&t, id};
}

inline Var tanh_(Var x) {
    return detail::unary(x, x.val().array().tanh(), [](Tape& tp, int id, int xi) {
        tp.grad(xi).array() += tp.grad(id).array() * (1.0 - tp.val(id).array().square());
    });
}

inline Var sigmoid_(Var x) {
    Mat out = (1.0 / (1.0 + (-x.val().array()).exp())).matrix();
    return detail::unary(x, std::move(out), [](Tape& tp, int id, int xi) {
        tp.grad(xi).array() += tp.grad(id).array() * tp.val(id).array() * (1.0 - tp.val(id).array());
    });
}

// Numerically stable log(1 + e^x); gradient is the logistic function.
inline Var softplus_(Var x) {
    Mat out = x.val().array().unaryExpr([](double v) {
        return v > 30.0 ? v : std::log1p(std::exp(std::min(v, 30.0)));
    });
    return detail::unary(x, std::move(out), [](Tape& tp, int id, int xi) {
        tp.grad(xi).array() +=
            tp.grad(id).array() * (1.0 / (1.0 + (-tp.val(xi).array()).exp()));
    });
}

inline Var exp_(Var x) {
    return detail::unary(x, x.val().array().exp(), [](Tape& tp, int id, int xi) {
        tp.grad(xi).array() += tp.grad(id).array() * tp.val(id).array();
    });
}

inline Var log_(Var x) {
    return detail::unary(x, x.val().array().log(), [](Tape& tp, int id, int xi) {
        tp.grad(xi).array() += tp.grad(id).array() / tp.val(xi).array();
    });
}

inline Var square_(Var x) {
    return detail::unary(x, x.val().array().square(), [](Tape& tp, int id, int xi) {
        tp.grad(xi).array() += 2.0 * tp.grad(id).array() * tp.val(xi).array();
    });
}

inline Var sqrt_(Var x) {
    return detail::unary(x, x.val().array().sqrt(), [](Tape& tp, int id, int xi) {
        tp.grad(xi).array() += 0.5 * tp.grad(id).array() / tp.val(id).array();
    });
}

inline Var abs_(Var x) {
    return detail::unary(x, x.val().array().abs(), [](Tape& tp, int id, int xi) {
        tp.grad(xi).array() += tp.grad(id).array() * tp.val(xi).array().sign();
    });
}

inline Var relu_(Var x) {
    return detail::unary(x, x.val().cwiseMax(0.0), [](Tape& tp, int id, int xi) {
        tp.grad(xi).array() +=
            tp.grad(id).array() * (tp.val(xi).array() > 0.0).cast<double>();
    });
}

// Value clamp; the gradient passes through only where the input lies inside
// [lo, hi].
inline Var clamp_(Var x, double lo, double hi) {
    return detail::unary(x, x.val().cwiseMax(lo).cwiseMin(hi), [lo, hi](Tape& tp, int id, int xi) {
        tp.grad(xi).array() += tp.grad(id).array() *
                               ((tp.val(xi).array() >= lo) && (tp.val(xi).array() <= hi))
                                   .cast<double>();
    });
}

inline Var sum_(Var x) {
    return detail::unary(x, Mat::Constant(1, 1, x.val().sum()), [](Tape& tp, int id, int xi) {
        tp.grad(xi).array() += tp.grad(id)(0, 0);
    });
}

inline Var mean_(Var x) {
    const double n = static_cast<double>(x.val().size());
    return detail::unary(x, Mat::Constant(1, 1, x.val().sum() / n), [n](Tape& tp, int id, int xi) {
        tp.grad(xi).array() += tp.grad(id)(0, 0) / n;
    });
}

inline Var concat_cols(Var a, Var b) {
    Tape& t = *a.tape;
    if (a.val().rows() != b.val().rows()) throw std::invalid_argument("concat_cols: row mismatch");
    Mat out(a.val().rows(), a.val().cols() + b.val().cols());
    out << a.val(), b.val();
    const int id = t.add(std::move(out));
    t.set_back(id, [ai = a.id, bi = b.id, id](Tape& tp) {
        const auto ca = tp.val(ai).cols();
        const auto cb = tp.val(bi).cols();
        tp.grad(ai) += tp.grad(id).leftCols(ca);
        tp.grad(bi) += tp.grad(id).rightCols(cb);
    });
    return {&t, id};
}

// Global average pool: [B, C*HW] -> [B, C].
inline Var global_avg_pool(Var x, int channels, int hw) {
    Tape& t = *x.tape;
    const auto b = x.val().rows();
    if (x.val().cols() != static_cast<Eigen::Index>(channels) * hw)
        throw std::invalid_argument("global_avg_pool: shape mismatch");
    Mat out(b, channels);
    for (Eigen::Index i = 0; i < b; ++i)
        for (int c = 0; c < channels; ++c)
            out(i, c) = x.val().row(i).segment(static_cast<Eigen::Index>(c) * hw, hw).mean();
    const int id = t.add(std::move(out));
    t.set_back(id, [xi = x.id, id, channels, hw](Tape& tp) {
        Mat& gx = tp.grad(xi);
        const Mat& g = tp.grad(id);
        for (Eigen::Index i = 0; i < g.rows(); ++i)
            for (int c = 0; c < channels; ++c)
                gx.row(i).segment(static_cast<Eigen::Index>(c) * hw, hw).array() +=
                    g(i, c) / static_cast<double>(hw);
    });
    return {&t, id};
}

// ---------------------------------------------------------------------------
// Generalised divisive normalisation, fused forward/backward.
// y_i = w_i / sqrt(beta_i + sum_j gamma_ij w_j^2) per spatial location.
// beta is [1,C] (shared) or [B,C] (per-sample, as produced by conditioning);
// gamma is [C,C].
// ---------------------------------------------------------------------------
namespace detail {
// Per-sample view: [HW, C] column-major over the sample's row buffer.
using MapHWxC = Eigen::Map<const Mat>;
using MutMapHWxC = Eigen::Map<Mat>;

struct GdnCache {
    std::vector<Mat> s;   // [HW, C] per sample: beta + ws * gamma^T
    std::vector<Mat> ws;  // squared inputs
};
}  // namespace detail

inline Var gdn_core(Var x, Var beta, Var gamma, int channels, int hw, bool inverse) {
    Tape& t = *x.tape;
    const auto b = x.val().rows();
    if (x.val().cols() != static_cast<Eigen::Index>(channels) * hw)
        throw std::invalid_argument("gdn: input shape mismatch");
    if (gamma.val().rows() != channels || gamma.val().cols() != channels)
        throw std::invalid_argument("gdn: gamma must be CxC");
    const bool per_sample_beta = beta.val().rows() != 1;
    if (beta.val().cols() != channels || (per_sample_beta && beta.val().rows() != b))
        throw std::invalid_argument("gdn: beta shape mismatch");

    auto cache = std::make_shared<detail::GdnCache>();
    cache->s.resize(static_cast<std::size_t>(b));
    cache->ws.resize(static_cast<std::size_t>(b));
    Mat out(b, x.val().cols());
    std::vector<double> buf(static_cast<std::size_t>(channels) * hw);
    for (Eigen::Index i = 0; i < b; ++i) {
        for (Eigen::Index c = 0; c < x.val().cols(); ++c) buf[static_cast<std::size_t>(c)] = x.val()(i, c);
        detail::MapHWxC w(buf.data(), hw, channels);
        Mat ws = w.array().square();
        Mat s = ws * gamma.val().transpose();
        s.rowwise() += per_sample_beta ? beta.val().row(i) : beta.val().row(0);
        if ((s.array() <= 0.0).any())
            throw std::runtime_error("gdn: non-positive denominator");
        Mat y;
        if (inverse)
            y = w.array() * s.array().sqrt();
        else
            y = w.array() * s.array().rsqrt();
        for (Eigen::Index c = 0; c < x.val().cols(); ++c) out(i, c) = y(c % hw, c / hw);
        cache->s[static_cast<std::size_t>(i)] = std::move(s);
        cache->ws[static_cast<std::size_t>(i)] = std::move(ws);
    }
    const int id = t.add(std::move(out));
    t.set_back(id, [xi = x.id, bi = beta.id, gi = gamma.id, id, channels, hw, per_sample_beta,
                    inverse, cache](Tape& tp) {
        const Mat& gout = tp.grad(id);
        const Mat& xv = tp.val(xi);
        const Mat& gammav = tp.val(gi);
        Mat& gx = tp.grad(xi);
        Mat& gbeta = tp.grad(bi);
        Mat& ggamma = tp.grad(gi);
        const auto bsz = xv.rows();
        std::vector<double> xbuf(static_cast<std::size_t>(channels) * hw);
        std::vector<double> gbuf(static_cast<std::size_t>(channels) * hw);
        for (Eigen::Index i = 0; i < bsz; ++i) {
            for (Eigen::Index c = 0; c < xv.cols(); ++c) {
                xbuf[static_cast<std::size_t>(c)] = xv(i, c);
                gbuf[static_cast<std::size_t>(c)] = gout(i, c);
            }
            detail::MapHWxC w(xbuf.data(), hw, channels);
            detail::MapHWxC g(gbuf.data(), hw, channels);
            const Mat& s = cache->s[static_cast<std::size_t>(i)];
            const Mat& ws = cache->ws[static_cast<std::size_t>(i)];
            Mat tmat, dw;
            if (inverse) {
                // y = w * sqrt(s); t = 0.5 g w s^{-1/2}
                Mat rsq = s.array().rsqrt();
                tmat = 0.5 * g.array() * w.array() * rsq.array();
                dw = (g.array() * s.array().sqrt()).matrix() +
                     (2.0 * w.array() * (tmat * gammav).array()).matrix();
            } else {
                // y = w * s^{-1/2}; t = -0.5 g w s^{-3/2}
                Mat rsq = s.array().rsqrt();
                tmat = -0.5 * g.array() * w.array() * rsq.array() / s.array();
                dw = (g.array() * rsq.array()).matrix() +
                     (2.0 * w.array() * (tmat * gammav).array()).matrix();
            }
            for (Eigen::Index c = 0; c < xv.cols(); ++c) gx(i, c) += dw(c % hw, c / hw);
            if (per_sample_beta)
                gbeta.row(i) += tmat.colwise().sum();
            else
                gbeta.row(0) += tmat.colwise().sum();
            ggamma += tmat.transpose() * ws;
        }
    });
    return {&t, id};
}

inline Var gdn(Var x, Var beta, Var gamma, int channels, int hw) {
    return gdn_core(x, beta, gamma, channels, hw, false);
}

inline Var igdn(Var x, Var beta, Var gamma, int channels, int hw) {
    return gdn_core(x, beta, gamma, channels, hw, true);
}

// ---------------------------------------------------------------------------
// Convolution, im2col-based. Weight matrix is [Cout, Cin*k*k]; transposed
// convolution reuses the mirror geometry (large -> small) and the same weight
// layout.
// ---------------------------------------------------------------------------
struct ConvGeom {
    int cin = 0, h = 0, w = 0;
    int cout = 0, k = 0, stride = 1, pad = 0;
    int ho = 0, wo = 0;
};

inline ConvGeom make_conv_geom(int cin, int h, int w, int cout, int k, int stride) {
    ConvGeom g;
    g.cin = cin; g.h = h; g.w = w; g.cout = cout; g.k = k; g.stride = stride;
    g.pad = k / 2;
    g.ho = (h + 2 * g.pad - k) / stride + 1;
    g.wo = (w + 2 * g.pad - k) / stride + 1;
    return g;
}

namespace detail {
inline Mat im2col(const double* x, const ConvGeom& g) {
    Mat cols = Mat::Zero(static_cast<Eigen::Index>(g.cin) * g.k * g.k,
                         static_cast<Eigen::Index>(g.ho) * g.wo);
    for (int oy = 0; oy < g.ho; ++oy)
        for (int ox = 0; ox < g.wo; ++ox) {
            const Eigen::Index col = static_cast<Eigen::Index>(oy) * g.wo + ox;
            Eigen::Index row = 0;
            for (int c = 0; c < g.cin; ++c)
                for (int ky = 0; ky < g.k; ++ky) {
                    const int y = oy * g.stride - g.pad + ky;
                    for (int kx = 0; kx < g.k; ++kx, ++row) {
                        const int xx = ox * g.stride - g.pad + kx;
                        if (y >= 0 && y < g.h && xx >= 0 && xx < g.w)
                            cols(row, col) = x[static_cast<std::size_t>(c) * g.h * g.w +
                                               static_cast<std::size_t>(y) * g.w + xx];
                    }
                }
        }
    return cols;
}

inline void col2im_accum(const Mat& cols, const ConvGeom& g, double* x) {
    for (int oy = 0; oy < g.ho; ++oy)
        for (int ox = 0; ox < g.wo; ++ox) {
            const Eigen::Index col = static_cast<Eigen::Index>(oy) * g.wo + ox;
            Eigen::Index row = 0;
            for (int c = 0; c < g.cin; ++c)
                for (int ky = 0; ky < g.k; ++ky) {
                    const int y = oy * g.stride - g.pad + ky;
                    for (int kx = 0; kx < g.k; ++kx, ++row) {
                        const int xx = ox * g.stride - g.pad + kx;
                        if (y >= 0 && y < g.h && xx >= 0 && xx < g.w)
                            x[static_cast<std::size_t>(c) * g.h * g.w +
                              static_cast<std::size_t>(y) * g.w + xx] += cols(row, col);
                    }
                }
        }
}
}  // namespace detail

// x: [B, cin*h*w] -> [B, cout*ho*wo]. bias: [1, cout].
inline Var conv2d(Var x, Var weight, Var bias, const ConvGeom& g) {
    Tape& t = *x.tape;
    if (x.val().cols() != static_cast<Eigen::Index>(g.cin) * g.h * g.w)
        throw std::invalid_argument("conv2d: input shape mismatch");
    if (weight.val().rows() != g.cout ||
        weight.val().cols() != static_cast<Eigen::Index>(g.cin) * g.k * g.k)
        throw std::invalid_argument("conv2d: weight shape mismatch");
    const auto b = x.val().rows();
    const Eigen::Index out_cols = static_cast<Eigen::Index>(g.cout) * g.ho * g.wo;
    auto cols_cache = std::make_shared<std::vector<Mat>>(static_cast<std::size_t>(b));
    Mat out(b, out_cols);
    std::vector<double> buf(static_cast<std::size_t>(g.cin) * g.h * g.w);
    for (Eigen::Index i = 0; i < b; ++i) {
        for (Eigen::Index c = 0; c < x.val().cols(); ++c) buf[static_cast<std::size_t>(c)] = x.val()(i, c);
        Mat cols = detail::im2col(buf.data(), g);
        Mat o = weight.val() * cols;  // [cout, ho*wo]
        o.colwise() += bias.val().row(0).transpose();
        for (int c = 0; c < g.cout; ++c)
            for (int l = 0; l < g.ho * g.wo; ++l)
                out(i, static_cast<Eigen::Index>(c) * g.ho * g.wo + l) = o(c, l);
        (*cols_cache)[static_cast<std::size_t>(i)] = std::move(cols);
    }
    const int id = t.add(std::move(out));
    t.set_back(id, [xi = x.id, wi = weight.id, bi = bias.id, id, g, cols_cache](Tape& tp) {
        const Mat& gout = tp.grad(id);
        const Mat& wv = tp.val(wi);
        Mat& gx = tp.grad(xi);
        Mat& gw = tp.grad(wi);
        Mat& gb = tp.grad(bi);
        const auto bsz = gout.rows();
        std::vector<double> gxbuf(static_cast<std::size_t>(g.cin) * g.h * g.w);
        for (Eigen::Index i = 0; i < bsz; ++i) {
            Mat go(g.cout, static_cast<Eigen::Index>(g.ho) * g.wo);
            for (int c = 0; c < g.cout; ++c)
                for (int l = 0; l < g.ho * g.wo; ++l)
                    go(c, l) = gout(i, static_cast<Eigen::Index>(c) * g.ho * g.wo + l);
            const Mat& cols = (*cols_cache)[static_cast<std::size_t>(i)];
            gw += go * cols.transpose();
            gb.row(0) += go.rowwise().sum().transpose();
            std::fill(gxbuf.begin(), gxbuf.end(), 0.0);
            detail::col2im_accum(wv.transpose() * go, g, gxbuf.data());
            for (Eigen::Index c = 0; c < gx.cols(); ++c) gx(i, c) += gxbuf[static_cast<std::size_t>(c)];
        }
    });
    return {&t, id};
}

// Transposed convolution small -> large. `g` is the geometry of the mirror
// convolution (large -> small): x has shape [B, cout*ho*wo] and the result
// [B, cin*h*w]. weight: [cout, cin*k*k] as in the mirror conv; bias: [1, cin].
inline Var conv2d_transpose(Var x, Var weight, Var bias, const ConvGeom& g) {
    Tape& t = *x.tape;
    if (x.val().cols() != static_cast<Eigen::Index>(g.cout) * g.ho * g.wo)
        throw std::invalid_argument("conv2d_transpose: input shape mismatch");
    if (weight.val().rows() != g.cout ||
        weight.val().cols() != static_cast<Eigen::Index>(g.cin) * g.k * g.k)
        throw std::invalid_argument("conv2d_transpose: weight shape mismatch");
    if (bias.val().cols() != g.cin)
        throw std::invalid_argument("conv2d_transpose: bias shape mismatch");
    const auto b = x.val().rows();
    const Eigen::Index out_cols = static_cast<Eigen::Index>(g.cin) * g.h * g.w;
    Mat out = Mat::Zero(b, out_cols);
    std::vector<double> obuf(static_cast<std::size_t>(out_cols));
    for (Eigen::Index i = 0; i < b; ++i) {
        Mat xs(g.cout, static_cast<Eigen::Index>(g.ho) * g.wo);
        for (int c = 0; c < g.cout; ++c)
            for (int l = 0; l < g.ho * g.wo; ++l)
                xs(c, l) = x.val()(i, static_cast<Eigen::Index>(c) * g.ho * g.wo + l);
        std::fill(obuf.begin(), obuf.end(), 0.0);
        detail::col2im_accum(weight.val().transpose() * xs, g, obuf.data());
        for (Eigen::Index c = 0; c < out_cols; ++c) out(i, c) = obuf[static_cast<std::size_t>(c)];
        for (int c = 0; c < g.cin; ++c)
            out.row(i).segment(static_cast<Eigen::Index>(c) * g.h * g.w, g.h * g.w).array() +=
                bias.val()(0, c);
    }
    const int id = t.add(std::move(out));
    t.set_back(id, [xi = x.id, wi = weight.id, bi = bias.id, id, g](Tape& tp) {
        const Mat& gout = tp.grad(id);
        const Mat& wv = tp.val(wi);
        const Mat& xv = tp.val(xi);
        Mat& gx = tp.grad(xi);
        Mat& gw = tp.grad(wi);
        Mat& gb = tp.grad(bi);
        const auto bsz = gout.rows();
        std::vector<double> gbuf(static_cast<std::size_t>(g.cin) * g.h * g.w);
        for (Eigen::Index i = 0; i < bsz; ++i) {
            for (Eigen::Index c = 0; c < gout.cols(); ++c) gbuf[static_cast<std::size_t>(c)] = gout(i, c);
            Mat gcols = detail::im2col(gbuf.data(), g);  // [cin*k*k, ho*wo]
            // dx (small side) = W * im2col(g_large)
            Mat gxs = wv * gcols;  // [cout, ho*wo]
            for (int c = 0; c < g.cout; ++c)
                for (int l = 0; l < g.ho * g.wo; ++l)
                    gx(i, static_cast<Eigen::Index>(c) * g.ho * g.wo + l) += gxs(c, l);
            Mat xs(g.cout, static_cast<Eigen::Index>(g.ho) * g.wo);
            for (int c = 0; c < g.cout; ++c)
                for (int l = 0; l < g.ho * g.wo; ++l)
                    xs(c, l) = xv(i, static_cast<Eigen::Index>(c) * g.ho * g.wo + l);
            gw += xs * gcols.transpose();
            for (int c = 0; c < g.cin; ++c)
                gb(0, c) += gout.row(i).segment(static_cast<Eigen::Index>(c) * g.h * g.w, g.h * g.w).sum();
        }
    });
    return {&t, id};
}

}  // namespace memjscc::ad
