#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <tuple>
#include <stdexcept>
#include <string>
#include <vector>

#include "memjscc/ad.hpp"
#include "memjscc/drift_sim.hpp"
#include "memjscc/io.hpp"
#include "memjscc/nn.hpp"
#include "memjscc/normalization.hpp"
#include "memjscc/stats.hpp"

namespace memjscc {

using ad::Mat;

// Differentiable location-scale model of the drift channel: two small MLPs
// map (r_bar_in, d_bar) to the mean and (softplus) std of the normalized
// output resistance. Stands in for the cited conditional generative channel;
// interface-compatible with it (normalized in/out, delay-conditioned).
struct SurrogateTrainConfig {
    int hidden_width = 64;
    int hidden_layers = 2;
    int epochs = 40;
    int batch = 1024;
    double learning_rate = 1e-3;
    double d_valid_s = 500.0;
    int recurrence_n = 4;
    int starts_per_series = 200;  // pair subsampling grid
    // Stratified rebalancing: quota of pairs per (input level, delay) bin.
    // The raw pair distribution concentrates near equilibrium; equalizing the
    // bins keeps the rare far-from-equilibrium transitions trainable.
    int bin_quota = 200;
    double input_bin_width = 0.0625;
    std::uint64_t seed = 1;
};

struct SurrogateParams {
    nn::ParamStore store;
    nn::Mlp f_mu;
    nn::Mlp f_sigma;
    ResistanceNormalizer res_nrm;
    DelayNormalizer delay_nrm;
    double d_valid_s = 500.0;
    int recurrence_n = 4;
    double d_min_trained_s = 0.0;
    double d_max_trained_s = 0.0;

    double max_delay_s() const { return d_valid_s * recurrence_n; }
};

namespace detail {

inline std::vector<int> mlp_widths(const SurrogateTrainConfig& cfg) {
    std::vector<int> w{2};
    for (int i = 0; i < cfg.hidden_layers; ++i) w.push_back(cfg.hidden_width);
    w.push_back(1);
    return w;
}

// Log-spaced integer deltas up to and including `max_delta`, so the largest
// usable delay is always in the training pairs.
inline std::vector<int> pair_deltas(int max_delta) {
    std::vector<int> out;
    double d = 1.0;
    while (static_cast<int>(d) <= max_delta) {
        const int di = static_cast<int>(d);
        if (out.empty() || out.back() != di) out.push_back(di);
        d *= 1.65;
    }
    if (max_delta >= 1 && (out.empty() || out.back() != max_delta)) out.push_back(max_delta);
    return out;
}

inline double stable_softplus(double x) {
    return x > 30.0 ? x : std::log1p(std::exp(std::min(x, 30.0)));
}

// Direct (tape-free) MLP evaluation for the sampling path.
inline Mat mlp_eval(const nn::ParamStore& s, const nn::Mlp& m, Mat x) {
    for (std::size_t l = 0; l < m.weight_idx.size(); ++l) {
        x = (x * s.value(m.weight_idx[l])).rowwise() + s.value(m.bias_idx[l]).row(0);
        if (l + 1 < m.weight_idx.size()) x = x.array().tanh().matrix();
    }
    return x;
}

}  // namespace detail

inline SurrogateParams make_surrogate(const SurrogateTrainConfig& cfg,
                                      const ResistanceNormalizer& rn, const DelayNormalizer& dn,
                                      RngStream& rng) {
    SurrogateParams p;
    // The mean head is residual (mu = input + f_mu), zero-initialized so the
    // untrained channel is the identity plus noise.
    p.f_mu = nn::Mlp::create(p.store, "f_mu", detail::mlp_widths(cfg), rng, /*zero_last=*/true);
    p.f_sigma = nn::Mlp::create(p.store, "f_sigma", detail::mlp_widths(cfg), rng);
    p.res_nrm = rn;
    p.delay_nrm = dn;
    p.d_valid_s = cfg.d_valid_s;
    p.recurrence_n = cfg.recurrence_n;
    return p;
}

// Minimizes the Gaussian negative log-likelihood of r_bar_out given
// (r_bar_in, d_bar) over pairs extracted from the series (each retained start
// paired with log-spaced later samples). Deterministic given cfg.seed.
inline SurrogateParams fit_surrogate(const DriftDataset& ds, const ResistanceNormalizer& rn,
                                     const DelayNormalizer& dn, const SurrogateTrainConfig& cfg) {
    if (ds.series.empty()) throw std::domain_error("fit_surrogate: empty dataset");
    RngStream rng(splitmix64(cfg.seed));
    SurrogateParams params = make_surrogate(cfg, rn, dn, rng);

    // Pair extraction.
    std::vector<double> in_bar, d_bar, out_bar;
    std::vector<int> series_of, delta_of, start_of;
    double d_lo = 1e300, d_hi = 0.0;
    for (std::size_t si = 0; si < ds.series.size(); ++si) {
        const auto& s = ds.series[si];
        const int len = static_cast<int>(s.resistances_ohm.size());
        if (len < 2) continue;
        const double dt = s.sample_times_s.size() > 1 ? s.sample_times_s[1] - s.sample_times_s[0] : 1.0;
        const int max_delta_idx = std::min(len - 1, static_cast<int>(cfg.d_valid_s / dt));
        const int stride = std::max(1, len / cfg.starts_per_series);
        // One canonical delta ladder per series: every (input bin, delta)
        // group then collects starts from the whole series instead of
        // fragmenting into one-off exact-delta groups near the tail.
        const std::vector<int> ladder = detail::pair_deltas(max_delta_idx);
        for (int j = 0; j < len - 1; j += stride) {
            for (int delta : ladder) {
                if (delta > len - 1 - j) break;
                const double d = delta * dt;
                in_bar.push_back(normalize_resistance(s.resistances_ohm[static_cast<std::size_t>(j)], rn));
                d_bar.push_back(normalize_delay(d, dn));
                out_bar.push_back(normalize_resistance(
                    s.resistances_ohm[static_cast<std::size_t>(j + delta)], rn));
                series_of.push_back(static_cast<int>(si));
                delta_of.push_back(delta);
                start_of.push_back(j);
                d_lo = std::min(d_lo, d);
                d_hi = std::max(d_hi, d);
            }
        }
    }
    if (in_bar.empty()) throw std::domain_error("fit_surrogate: no training pairs");
    params.d_min_trained_s = d_lo;
    params.d_max_trained_s = d_hi;
    params.d_valid_s = std::min(cfg.d_valid_s, d_hi);

    // Stratified rebalancing over (input level, delay) bins: cap dense bins at
    // the quota and cyclically repeat sparse ones up to it.
    std::map<std::pair<int, int>, std::vector<std::size_t>> bins;
    for (std::size_t i = 0; i < in_bar.size(); ++i) {
        const int ib = static_cast<int>(std::floor(in_bar[i] / cfg.input_bin_width));
        const int db = static_cast<int>(std::lround(d_bar[i] * 8.0));
        bins[{ib, db}].push_back(i);
    }
    std::vector<std::size_t> order;
    for (auto& [key, idx] : bins) {
        const auto quota = static_cast<std::size_t>(cfg.bin_quota);
        if (idx.size() > quota) {
            std::shuffle(idx.begin(), idx.end(), rng.engine());
            idx.resize(quota);
        }
        // Cap duplication at 8x so very sparse (correlated) bins cannot
        // dominate their neighborhood of the fit.
        const std::size_t target = std::min(quota, idx.size() * 8);
        for (std::size_t k = 0; k < target; ++k) order.push_back(idx[k % idx.size()]);
    }
    const auto n_pairs = order.size();

    // Alternating fit.
    //   1. Mean head by least squares (maximizes likelihood at fixed sigma).
    //   2. Scale head regressed onto difference-based (Rice) variance
    //      estimates: within a narrow (input, delay) group, half the squared
    //      difference of residuals at adjacent inputs from *different* series
    //      estimates sigma^2 with smooth mean error cancelled. Fitting sigma
    //      to raw residuals instead would floor it at the mean-fit error,
    //      which in the low-noise corner is 3x the true sigma.
    //   3. Mean head again by inverse-variance weighted least squares, which
    //      sharpens it exactly where sigma is small.
    //   4. Scale head once more against the refined residuals.
    auto all_residuals = [&]() {
        std::vector<double> z(in_bar.size());
        const std::size_t chunk = 8192;
        for (std::size_t off = 0; off < z.size(); off += chunk) {
            const auto n = std::min(chunk, z.size() - off);
            Mat x(n, 2);
            for (std::size_t i = 0; i < n; ++i) {
                x(static_cast<Eigen::Index>(i), 0) = in_bar[off + i];
                x(static_cast<Eigen::Index>(i), 1) = d_bar[off + i];
            }
            Mat mu = detail::mlp_eval(params.store, params.f_mu, x);
            for (std::size_t i = 0; i < n; ++i)
                z[off + i] = out_bar[off + i] - in_bar[off + i] - mu(static_cast<Eigen::Index>(i), 0);
        }
        return z;
    };

    auto fit_mean = [&](bool weighted, double lr_scale) {
        nn::AdamState adam;
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            // Step decay lets late epochs settle the fine structure.
            const double lr = lr_scale * cfg.learning_rate * std::pow(0.5, epoch / 10);
            std::shuffle(order.begin(), order.end(), rng.engine());
            for (std::size_t off = 0; off < n_pairs; off += static_cast<std::size_t>(cfg.batch)) {
                const auto bsz =
                    std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), n_pairs - off);
                Mat x(bsz, 2), y(bsz, 1);
                for (std::size_t i = 0; i < bsz; ++i) {
                    const auto idx = order[off + i];
                    x(static_cast<Eigen::Index>(i), 0) = in_bar[idx];
                    x(static_cast<Eigen::Index>(i), 1) = d_bar[idx];
                    y(static_cast<Eigen::Index>(i), 0) = out_bar[idx];
                }
                Mat w = Mat::Ones(static_cast<Eigen::Index>(bsz), 1);
                if (weighted) {
                    Mat sg_raw = detail::mlp_eval(params.store, params.f_sigma, x);
                    for (Eigen::Index i = 0; i < w.rows(); ++i) {
                        const double sg =
                            std::max(detail::stable_softplus(sg_raw(i, 0)) + 1e-6, 1e-4);
                        w(i, 0) = 1.0 / (sg * sg);
                    }
                    w /= w.mean();
                }
                ad::Tape t;
                auto b = nn::bind(t, params.store);
                ad::Var xv = ad::constant(t, x);
                ad::Var mu = ad::add(ad::constant(t, x.col(0)), params.f_mu.forward(b, xv));
                ad::Var z = ad::sub(ad::constant(t, y), mu);
                ad::Var loss = ad::mean_(ad::mul(ad::square_(z), ad::constant(t, w)));
                const double loss_v = loss.val()(0, 0);
                if (!std::isfinite(loss_v))
                    throw std::runtime_error("fit_surrogate: non-finite loss at epoch " +
                                             std::to_string(epoch));
                t.backward(loss.id);
                auto grads = nn::collect_grads(b);
                nn::adam_step(params.store, grads, adam, lr);
            }
        }
    };

    auto fit_sigma = [&]() {
        // Group residuals by (narrow input bin, exact delta) and form the
        // cross-series difference estimate of sigma^2 per group.
        struct Sample {
            double in, z;
            int series, start;
        };
        const std::vector<double> z = all_residuals();
        std::map<std::pair<int, int>, std::vector<Sample>> groups;
        for (std::size_t i = 0; i < in_bar.size(); ++i) {
            const int ib = static_cast<int>(std::floor(in_bar[i] / cfg.input_bin_width));
            groups[{ib, delta_of[i]}].push_back({in_bar[i], z[i], series_of[i], start_of[i]});
        }
        std::vector<double> g_in, g_d, g_target, g_weight;
        for (auto& [key, v] : groups) {
            // Tie-break on the start index so samples at the same quantized
            // input interleave across series. The ordering must not depend on
            // z itself: sorting residuals would pair per-series extremes and
            // bias the difference estimate upward severalfold.
            std::sort(v.begin(), v.end(), [](const Sample& a, const Sample& b) {
                return std::tie(a.in, a.start, a.series) < std::tie(b.in, b.start, b.series);
            });
            double acc = 0.0, in_sum = 0.0;
            int n_diff = 0;
            for (std::size_t i = 1; i < v.size(); ++i) {
                if (v[i].series == v[i - 1].series) continue;
                acc += 0.5 * (v[i].z - v[i - 1].z) * (v[i].z - v[i - 1].z);
                ++n_diff;
            }
            if (n_diff < 4 || acc <= 0.0) continue;
            for (const auto& s : v) in_sum += s.in;
            g_in.push_back(in_sum / static_cast<double>(v.size()));
            g_d.push_back(normalize_delay(key.second, dn));
            g_target.push_back(0.5 * std::log(acc / n_diff));
            g_weight.push_back(std::min(n_diff, 100));
        }
        if (g_in.empty()) throw std::runtime_error("fit_surrogate: no sigma target groups");
        const auto n_groups = static_cast<Eigen::Index>(g_in.size());
        Mat x(n_groups, 2), tgt(n_groups, 1), w(n_groups, 1);
        for (Eigen::Index i = 0; i < n_groups; ++i) {
            x(i, 0) = g_in[static_cast<std::size_t>(i)];
            x(i, 1) = g_d[static_cast<std::size_t>(i)];
            tgt(i, 0) = g_target[static_cast<std::size_t>(i)];
            w(i, 0) = g_weight[static_cast<std::size_t>(i)];
        }
        w /= w.mean();
        nn::AdamState adam;
        const int n_steps = 120 * cfg.epochs;
        for (int step = 0; step < n_steps; ++step) {
            const double lr = 3.0 * cfg.learning_rate * std::pow(0.5, (8 * step) / n_steps);
            ad::Tape t;
            auto b = nn::bind(t, params.store);
            ad::Var xv = ad::constant(t, x);
            ad::Var sigma = ad::add_scalar(ad::softplus_(params.f_sigma.forward(b, xv)), 1e-6);
            ad::Var err = ad::sub(ad::log_(sigma), ad::constant(t, tgt));
            ad::Var loss = ad::mean_(ad::mul(ad::square_(err), ad::constant(t, w)));
            if (!std::isfinite(loss.val()(0, 0)))
                throw std::runtime_error("fit_surrogate: non-finite sigma loss");
            t.backward(loss.id);
            auto grads = nn::collect_grads(b);
            nn::adam_step(params.store, grads, adam, lr);
        }
    };

    fit_mean(false, 1.0);
    fit_sigma();
    fit_mean(true, 0.3);
    fit_sigma();
    return params;
}

// Predicted (mu, sigma) in normalized space for a matrix of normalized inputs
// at one delay.
inline std::pair<Mat, Mat> surrogate_moments(const SurrogateParams& p, const Mat& m_bar,
                                             double delay_s) {
    const double db = normalize_delay(delay_s, p.delay_nrm);
    Mat x(m_bar.size(), 2);
    for (Eigen::Index i = 0; i < m_bar.size(); ++i) {
        x(i, 0) = m_bar(i);
        x(i, 1) = db;
    }
    Mat mu_flat = detail::mlp_eval(p.store, p.f_mu, x);
    Mat sg_flat = detail::mlp_eval(p.store, p.f_sigma, x);
    Mat mu(m_bar.rows(), m_bar.cols()), sigma(m_bar.rows(), m_bar.cols());
    for (Eigen::Index i = 0; i < m_bar.size(); ++i) {
        mu(i) = m_bar(i) + mu_flat(i, 0);
        sigma(i) = detail::stable_softplus(sg_flat(i, 0)) + 1e-6;
    }
    return {mu, sigma};
}

// Splitting rule shared by the sampling and differentiable paths. d == 0 is
// the identity condition.
inline std::vector<double> split_delay(double delay_s, const SurrogateParams& p) {
    if (delay_s < 0.0) throw std::domain_error("channel_forward: negative delay");
    if (delay_s == 0.0) return {};
    if (delay_s > p.max_delay_s())
        throw std::domain_error("channel_forward: delay " + std::to_string(delay_s) +
                                " exceeds validity bound " + std::to_string(p.max_delay_s()));
    const int n_steps = std::max(1, static_cast<int>(std::ceil(delay_s / p.d_valid_s)));
    return std::vector<double>(static_cast<std::size_t>(n_steps),
                               delay_s / static_cast<double>(n_steps));
}

// Sampling path: elementwise m_hat = mu + sigma * eps with recurrent
// composition for d > d_valid.
inline Mat channel_forward(const Mat& m_bar, double delay_s, const SurrogateParams& p,
                           RngStream& rng) {
    Mat cur = m_bar;
    for (double sub : split_delay(delay_s, p)) {
        auto [mu, sigma] = surrogate_moments(p, cur, sub);
        for (Eigen::Index i = 0; i < cur.size(); ++i) cur(i) = mu(i) + sigma(i) * rng.gauss();
    }
    return cur;
}

// Differentiable path on a tape: noise is supplied explicitly
// (reparameterization), one [rows x cols] matrix per sub-step. `bound` must
// be a binding of p.store on the same tape as m_bar.
inline ad::Var channel_forward_ad(ad::Var m_bar, double delay_s, const SurrogateParams& p,
                                  const nn::Bound& bound, const std::vector<Mat>& noise) {
    const auto subs = split_delay(delay_s, p);
    if (noise.size() < subs.size())
        throw std::invalid_argument("channel_forward_ad: not enough noise matrices");
    ad::Tape& t = *m_bar.tape;
    ad::Var cur = m_bar;
    const auto rows = m_bar.val().rows();
    const auto cols = m_bar.val().cols();
    for (std::size_t step = 0; step < subs.size(); ++step) {
        const double db = normalize_delay(subs[step], p.delay_nrm);
        // Flatten [B, n] to [B*n, 1] feature rows with the delay column.
        Mat dcol = Mat::Constant(rows * cols, 1, db);
        ad::Var flat = [&] {
            // reshape via matmul-free copy op: build it as a fused unary
            Mat out(rows * cols, 1);
            const Mat& v = cur.val();
            for (Eigen::Index c = 0; c < cols; ++c)
                for (Eigen::Index r = 0; r < rows; ++r) out(c * rows + r, 0) = v(r, c);
            int id = t.add(std::move(out));
            t.set_back(id, [ci = cur.id, id, rows, cols](ad::Tape& tp) {
                const Mat& g = tp.grad(id);
                Mat& gc = tp.grad(ci);
                for (Eigen::Index c = 0; c < cols; ++c)
                    for (Eigen::Index r = 0; r < rows; ++r) gc(r, c) += g(c * rows + r, 0);
            });
            return ad::Var{&t, id};
        }();
        ad::Var x = ad::concat_cols(flat, ad::constant(t, dcol));
        ad::Var mu = ad::add(flat, p.f_mu.forward(bound, x));
        ad::Var sigma = ad::add_scalar(ad::softplus_(p.f_sigma.forward(bound, x)), 1e-6);
        const Mat& nz = noise[step];
        if (nz.rows() != rows || nz.cols() != cols)
            throw std::invalid_argument("channel_forward_ad: noise shape mismatch");
        Mat nz_flat(rows * cols, 1);
        for (Eigen::Index c = 0; c < cols; ++c)
            for (Eigen::Index r = 0; r < rows; ++r) nz_flat(c * rows + r, 0) = nz(r, c);
        ad::Var out_flat = ad::add(mu, ad::mul(sigma, ad::constant(t, nz_flat)));
        // Back to [B, n].
        cur = [&] {
            Mat out(rows, cols);
            const Mat& v = out_flat.val();
            for (Eigen::Index c = 0; c < cols; ++c)
                for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = v(c * rows + r, 0);
            int id = t.add(std::move(out));
            t.set_back(id, [oi = out_flat.id, id, rows, cols](ad::Tape& tp) {
                const Mat& g = tp.grad(id);
                Mat& go = tp.grad(oi);
                for (Eigen::Index c = 0; c < cols; ++c)
                    for (Eigen::Index r = 0; r < rows; ++r) go(c * rows + r, 0) += g(r, c);
            });
            return ad::Var{&t, id};
        }();
    }
    return cur;
}

// ---------------------------------------------------------------------------
// Validation against the simulator.
// ---------------------------------------------------------------------------
struct SurrogateCellReport {
    double r0_ohm = 0.0;
    double delay_s = 0.0;
    double sim_mean = 0.0, sim_std = 0.0;
    double sur_mean = 0.0, sur_std = 0.0;
    double ks_stat = 0.0;
    bool pass = false;
};

struct SurrogateValidationConfig {
    int n_draws = 10000;
    double mean_tol_abs = 0.1;
    double std_tol_rel = 0.15;
    std::uint64_t seed = 7;
};

inline std::vector<SurrogateCellReport> validate_surrogate(
    const SurrogateParams& p, const DeviceModelParams& device, const std::vector<double>& r0_grid,
    const std::vector<double>& delay_grid, const SurrogateValidationConfig& cfg = {}) {
    std::vector<SurrogateCellReport> report;
    std::uint64_t cell = 0;
    for (double r0 : r0_grid)
        for (double d : delay_grid) {
            if (d < p.d_min_trained_s || d > p.max_delay_s())
                throw std::domain_error("validate_surrogate: delay outside trained validity");
            SurrogateCellReport rep;
            rep.r0_ohm = r0;
            rep.delay_s = d;
            RngStream sim_rng(derive_stream_seed(cfg.seed, cell, 0, 0));
            RngStream sur_rng(derive_stream_seed(cfg.seed, cell, 1, 0));
            ++cell;
            std::vector<double> sim(static_cast<std::size_t>(cfg.n_draws));
            for (auto& v : sim)
                v = normalize_resistance(sample_drift(r0, d, device, sim_rng), p.res_nrm);
            const double m0 = normalize_resistance(r0, p.res_nrm);
            std::vector<double> sur(static_cast<std::size_t>(cfg.n_draws));
            Mat m(1, 1);
            for (auto& v : sur) {
                m(0, 0) = m0;
                v = channel_forward(m, d, p, sur_rng)(0, 0);
            }
            rep.sim_mean = stats::mean(sim);
            rep.sim_std = stats::stddev(sim);
            rep.sur_mean = stats::mean(sur);
            rep.sur_std = stats::stddev(sur);
            rep.ks_stat = stats::ks_two_sample(sim, sur).statistic;
            rep.pass = std::abs(rep.sur_mean - rep.sim_mean) <= cfg.mean_tol_abs &&
                       std::abs(rep.sur_std - rep.sim_std) <=
                           cfg.std_tol_rel * std::max(rep.sim_std, 1e-12);
            report.push_back(rep);
        }
    return report;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O.
// ---------------------------------------------------------------------------
inline void save_surrogate(const SurrogateParams& p, const std::filesystem::path& path) {
    nlohmann::json meta = {
        {"format_version", 1},
        {"kind", "surrogate"},
        {"normalizers", normalizers_to_json(p.res_nrm, p.delay_nrm)},
        {"d_valid_s", p.d_valid_s},
        {"recurrence_n", p.recurrence_n},
        {"d_min_trained_s", p.d_min_trained_s},
        {"d_max_trained_s", p.d_max_trained_s},
        {"hidden_width", p.store.value(p.f_mu.weight_idx[0]).cols()},
        {"hidden_layers", static_cast<int>(p.f_mu.weight_idx.size()) - 1},
    };
    io::save_checkpoint(path, std::move(meta), p.store);
}

inline SurrogateParams load_surrogate(const std::filesystem::path& path) {
    auto meta = io::peek_checkpoint_meta(path);
    if (meta.value("kind", "") != "surrogate")
        throw std::runtime_error("load_surrogate: not a surrogate checkpoint");
    SurrogateTrainConfig cfg;
    cfg.hidden_width = meta.at("hidden_width").get<int>();
    cfg.hidden_layers = meta.at("hidden_layers").get<int>();
    ResistanceNormalizer rn;
    DelayNormalizer dn;
    normalizers_from_json(meta.at("normalizers"), rn, dn);
    RngStream rng(0);
    SurrogateParams p = make_surrogate(cfg, rn, dn, rng);
    io::load_checkpoint(path, p.store);
    p.d_valid_s = meta.at("d_valid_s").get<double>();
    p.recurrence_n = meta.at("recurrence_n").get<int>();
    p.d_min_trained_s = meta.at("d_min_trained_s").get<double>();
    p.d_max_trained_s = meta.at("d_max_trained_s").get<double>();
    return p;
}

}  // namespace memjscc
