#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "memjscc/drift_sim.hpp"
#include "memjscc/images.hpp"
#include "memjscc/jscc.hpp"
#include "memjscc/losses.hpp"
#include "memjscc/surrogate.hpp"

namespace memjscc {

inline std::vector<double> default_eval_delays() {
    return {0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0};
}

// A channel realization used at evaluation time. `surrogate` points at the
// learned channel when kind == surrogate; `device` parameterizes the physical
// simulator when kind == ground_truth.
struct ChannelSpec {
    enum class Kind { surrogate, ground_truth, noiseless };
    Kind kind = Kind::noiseless;
    const SurrogateParams* surrogate = nullptr;
    DeviceModelParams device;

    static ChannelSpec make_surrogate(const SurrogateParams& p) {
        ChannelSpec c;
        c.kind = Kind::surrogate;
        c.surrogate = &p;
        return c;
    }
    static ChannelSpec make_ground_truth(DeviceModelParams d = {}) {
        ChannelSpec c;
        c.kind = Kind::ground_truth;
        c.device = d;
        return c;
    }
    static ChannelSpec make_noiseless() { return {}; }
};

// Applies the channel to normalized codewords. Ground-truth entries are
// clipped into the simulator's physical range first; `clipped` (if given)
// accumulates how many entries required it.
inline Mat apply_channel(const Mat& code, double delay_s, const ChannelSpec& ch,
                         const ResistanceNormalizer& rn, RngStream& rng,
                         long long* clipped = nullptr) {
    switch (ch.kind) {
        case ChannelSpec::Kind::noiseless:
            return code;
        case ChannelSpec::Kind::surrogate:
            if (ch.surrogate == nullptr)
                throw std::invalid_argument("apply_channel: missing surrogate");
            return channel_forward(code, delay_s, *ch.surrogate, rng);
        case ChannelSpec::Kind::ground_truth: {
            Mat out = code;
            for (Eigen::Index i = 0; i < out.size(); ++i) {
                double r = denormalize_resistance(out(i), rn);
                const double lo = ch.device.r_on_ohm, hi = ch.device.r_off_ohm;
                if (r < lo || r > hi) {
                    r = std::clamp(r, lo, hi);
                    if (clipped) ++*clipped;
                }
                out(i) = normalize_resistance(sample_drift(r, delay_s, ch.device, rng), rn);
            }
            return out;
        }
    }
    throw std::logic_error("apply_channel: unknown kind");
}

struct PsnrPoint {
    double delay_s = 0.0;
    double psnr_mean_db = 0.0;
    double psnr_std_db = 0.0;
    long long clipped = 0;
};

struct EvalConfig {
    int n_draws = 4;
    std::uint64_t seed = 1;
    std::vector<double> delays = default_eval_delays();

    void validate() const {
        if (n_draws < 1) throw std::invalid_argument("EvalConfig: n_draws must be >= 1");
        if (delays.empty()) throw std::invalid_argument("EvalConfig: empty delay grid");
    }
};

namespace detail {
inline std::uint64_t delay_bits(double d) { return std::bit_cast<std::uint64_t>(d); }
}  // namespace detail

// Reconstruction quality over the delay grid. Noise streams are keyed by
// (seed, image index, delay, draw), so two models evaluated with the same
// config see identical channel noise on every sample (paired comparison).
inline std::vector<PsnrPoint> eval_psnr_vs_delay(ModelBundle& model, const ImageDataset& images,
                                                 const ChannelSpec& ch, const EvalConfig& cfg) {
    cfg.validate();
    if (images.count() == 0) throw std::invalid_argument("eval_psnr_vs_delay: no images");
    std::vector<PsnrPoint> points;
    for (double d : cfg.delays) {
        Mat code = encode(model, images.pixels,
                          encoder_conditioned(model.mode) ? std::optional<double>(d) : std::nullopt);
        PsnrPoint pt;
        pt.delay_s = d;
        double sum = 0.0, sq = 0.0;
        long long n = 0;
        for (Eigen::Index i = 0; i < images.count(); ++i) {
            for (int k = 0; k < cfg.n_draws; ++k) {
                RngStream rng(derive_stream_seed(cfg.seed, static_cast<std::uint64_t>(i),
                                                 detail::delay_bits(d),
                                                 static_cast<std::uint64_t>(k)));
                Mat m_hat = apply_channel(code.row(i), d, ch, model.res_nrm, rng, &pt.clipped);
                Mat rec = decode(model, m_hat,
                                 decoder_conditioned(model.mode) ? std::optional<double>(d)
                                                                 : std::nullopt);
                const double p = psnr(images.pixels.row(i), rec);
                if (!std::isfinite(p)) continue;  // exact reconstruction; skip in moments
                sum += p;
                sq += p * p;
                ++n;
            }
        }
        if (n > 0) {
            pt.psnr_mean_db = sum / static_cast<double>(n);
            const double var = std::max(0.0, sq / static_cast<double>(n) -
                                                 pt.psnr_mean_db * pt.psnr_mean_db);
            pt.psnr_std_db = std::sqrt(var);
        }
        points.push_back(pt);
    }
    return points;
}

// ---------------------------------------------------------------------------
// Energy accounting.
// ---------------------------------------------------------------------------
struct EnergyHistogram {
    double delay_s = 0.0;
    std::vector<double> edges_ohm;    // bins + 1 ascending edges
    std::vector<long long> counts;    // per bin
    long long below = 0, above = 0;   // outside [edges.front(), edges.back()]
    double mean_energy_j = 0.0;       // computed from the raw codewords
};

inline std::vector<double> histogram_edges_ohm(int bins = 200, double lo_ohm = 1.0,
                                               double hi_ohm = 100e6) {
    if (bins < 1 || !(lo_ohm > 0.0) || !(hi_ohm > lo_ohm))
        throw std::invalid_argument("histogram_edges_ohm: bad bin spec");
    std::vector<double> e(static_cast<std::size_t>(bins) + 1);
    const double llo = std::log(lo_ohm), lhi = std::log(hi_ohm);
    for (int i = 0; i <= bins; ++i)
        e[static_cast<std::size_t>(i)] = std::exp(llo + (lhi - llo) * i / bins);
    e.front() = lo_ohm;
    e.back() = hi_ohm;
    return e;
}

// Log-spaced resistance histogram of one delay's codewords plus their exact
// mean programming energy.
inline EnergyHistogram codeword_histogram(const Mat& code, const ResistanceNormalizer& rn,
                                          const EnergyModelParams& ep, double delay_s,
                                          int bins = 200) {
    if (code.size() == 0) throw std::invalid_argument("codeword_histogram: empty codeword");
    EnergyHistogram h;
    h.delay_s = delay_s;
    h.edges_ohm = histogram_edges_ohm(bins);
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    const double llo = std::log(h.edges_ohm.front()), lhi = std::log(h.edges_ohm.back());
    double e_sum = 0.0;
    for (Eigen::Index i = 0; i < code.size(); ++i) {
        const double r = denormalize_resistance(code(i), rn);
        e_sum += energy_cost(r, ep);
        if (r < h.edges_ohm.front()) {
            ++h.below;
        } else if (r >= h.edges_ohm.back()) {
            // The top edge is closed so the full physical range is counted.
            if (r > h.edges_ohm.back())
                ++h.above;
            else
                ++h.counts.back();
        } else {
            auto b = static_cast<std::size_t>((std::log(r) - llo) / (lhi - llo) * bins);
            b = std::min(b, static_cast<std::size_t>(bins - 1));
            ++h.counts[b];
        }
    }
    h.mean_energy_j = e_sum / static_cast<double>(code.size());
    return h;
}

// Mean energy recomputed from binned counts at geometric bin centers; used as
// a consistency check against mean_energy_j.
inline double histogram_mean_energy(const EnergyHistogram& h, const EnergyModelParams& ep) {
    double e = 0.0;
    long long n = 0;
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
        if (h.counts[b] == 0) continue;
        const double center = std::sqrt(h.edges_ohm[b] * h.edges_ohm[b + 1]);
        e += static_cast<double>(h.counts[b]) * energy_cost(center, ep);
        n += h.counts[b];
    }
    if (n == 0) throw std::domain_error("histogram_mean_energy: empty histogram");
    return e / static_cast<double>(n);
}

inline std::vector<EnergyHistogram> eval_energy_histograms(ModelBundle& model,
                                                           const ImageDataset& images,
                                                           const EnergyModelParams& ep,
                                                           const std::vector<double>& delays) {
    std::vector<EnergyHistogram> out;
    for (double d : delays) {
        Mat code = encode(model, images.pixels,
                          encoder_conditioned(model.mode) ? std::optional<double>(d) : std::nullopt);
        out.push_back(codeword_histogram(code, model.res_nrm, ep, d));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Report emission. All text output uses fixed formatting so identical inputs
// produce byte-identical files.
// ---------------------------------------------------------------------------
namespace detail {
inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}
inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    return f;
}
}  // namespace detail

inline void write_psnr_csv(const std::filesystem::path& path, const std::vector<PsnrPoint>& pts) {
    auto f = detail::open_out(path);
    f << "delay_s,psnr_mean_db,psnr_std_db,clipped\n";
    for (const auto& p : pts)
        f << detail::fmt(p.delay_s) << ',' << detail::fmt(p.psnr_mean_db) << ','
          << detail::fmt(p.psnr_std_db) << ',' << p.clipped << '\n';
}

inline void write_energy_csv(const std::filesystem::path& path,
                             const std::vector<EnergyHistogram>& hists) {
    auto f = detail::open_out(path);
    f << "delay_s,mean_energy_j\n";
    for (const auto& h : hists)
        f << detail::fmt(h.delay_s) << ',' << detail::fmt(h.mean_energy_j) << '\n';
}

inline void write_histogram_csv(const std::filesystem::path& path, const EnergyHistogram& h) {
    auto f = detail::open_out(path);
    f << "bin_low_ohm,bin_high_ohm,count\n";
    for (std::size_t b = 0; b < h.counts.size(); ++b)
        f << detail::fmt(h.edges_ohm[b]) << ',' << detail::fmt(h.edges_ohm[b + 1]) << ','
          << h.counts[b] << '\n';
}

// Minimal line plot; `log_x` applies log10 to the x positions.
inline void write_line_svg(const std::filesystem::path& path, const std::vector<double>& xs,
                           const std::vector<double>& ys, const std::string& title,
                           const std::string& x_label, const std::string& y_label,
                           bool log_x = false) {
    if (xs.size() != ys.size() || xs.empty())
        throw std::invalid_argument("write_line_svg: bad series");
    auto tx = [&](double x) { return log_x ? std::log10(std::max(x, 0.1)) : x; };
    double x_lo = tx(xs.front()), x_hi = x_lo, y_lo = ys.front(), y_hi = y_lo;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        x_lo = std::min(x_lo, tx(xs[i]));
        x_hi = std::max(x_hi, tx(xs[i]));
        y_lo = std::min(y_lo, ys[i]);
        y_hi = std::max(y_hi, ys[i]);
    }
    if (x_hi == x_lo) x_hi = x_lo + 1.0;
    if (y_hi == y_lo) y_hi = y_lo + 1.0;
    const double w = 640, h = 420, ml = 70, mr = 20, mt = 40, mb = 50;
    auto px = [&](double x) { return ml + (tx(x) - x_lo) / (x_hi - x_lo) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - (y - y_lo) / (y_hi - y_lo) * (h - mt - mb); };
    auto f = detail::open_out(path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
      << "</text>\n"
      << "<text x=\"" << w / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << x_label << "</text>\n"
      << "<text x=\"16\" y=\"" << h / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << h / 2 << ")\">" << y_label << "</text>\n"
      << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\"" << h - mb
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
      << "\" stroke=\"black\"/>\n<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i)
        f << detail::fmt(px(xs[i])) << ',' << detail::fmt(py(ys[i])) << ' ';
    f << "\"/>\n";
    for (std::size_t i = 0; i < xs.size(); ++i)
        f << "<circle cx=\"" << detail::fmt(px(xs[i])) << "\" cy=\"" << detail::fmt(py(ys[i]))
          << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
    // Endpoint tick labels keep the plot readable without a full axis engine.
    f << "<text x=\"" << ml << "\" y=\"" << h - mb + 16 << "\" font-size=\"10\" text-anchor=\"middle\">"
      << detail::fmt(xs.front()) << "</text>\n"
      << "<text x=\"" << w - mr << "\" y=\"" << h - mb + 16
      << "\" font-size=\"10\" text-anchor=\"middle\">" << detail::fmt(xs.back()) << "</text>\n"
      << "<text x=\"" << ml - 6 << "\" y=\"" << h - mb << "\" font-size=\"10\" text-anchor=\"end\">"
      << detail::fmt(y_lo) << "</text>\n"
      << "<text x=\"" << ml - 6 << "\" y=\"" << mt + 4 << "\" font-size=\"10\" text-anchor=\"end\">"
      << detail::fmt(y_hi) << "</text>\n</svg>\n";
}

// Standard per-run artifact set: PSNR curve + CSV, energy curve + CSV, and
// the worst-case (largest delay) codeword histogram.
inline void emit_report(const std::filesystem::path& dir, const std::vector<PsnrPoint>& pts,
                        const std::vector<EnergyHistogram>& hists) {
    std::filesystem::create_directories(dir);
    write_psnr_csv(dir / "psnr_vs_delay.csv", pts);
    std::vector<double> xs, ys;
    for (const auto& p : pts) {
        xs.push_back(p.delay_s);
        ys.push_back(p.psnr_mean_db);
    }
    write_line_svg(dir / "psnr_vs_delay.svg", xs, ys, "Reconstruction quality vs storage delay",
                   "delay (s, log scale)", "PSNR (dB)", /*log_x=*/true);
    if (!hists.empty()) {
        write_energy_csv(dir / "energy_vs_delay.csv", hists);
        xs.clear();
        ys.clear();
        for (const auto& h : hists) {
            xs.push_back(h.delay_s);
            ys.push_back(h.mean_energy_j);
        }
        write_line_svg(dir / "energy_vs_delay.svg", xs, ys, "Mean programming energy vs delay",
                       "delay (s, log scale)", "energy (J)", /*log_x=*/true);
        write_histogram_csv(dir / "codeword_histogram.csv", hists.back());
    }
}

}  // namespace memjscc
