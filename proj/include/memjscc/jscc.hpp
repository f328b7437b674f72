#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "memjscc/ad.hpp"
#include "memjscc/io.hpp"
#include "memjscc/nn.hpp"
#include "memjscc/normalization.hpp"
#include "memjscc/rng.hpp"

namespace memjscc {

using ad::Mat;

// ---------------------------------------------------------------------------
// Delay-conditioned convolutional autoencoder. Images are stored row-per-
// sample, channel-major within the row (index = c*H*W + y*W + x), matching
// the ad:: convolution layout. The encoder output is interpreted as
// normalized log-resistance and hard-clipped to the physical device range.
// ---------------------------------------------------------------------------

enum class ConditioningMode { none, encoder, decoder, both };

inline bool encoder_conditioned(ConditioningMode m) {
    return m == ConditioningMode::encoder || m == ConditioningMode::both;
}
inline bool decoder_conditioned(ConditioningMode m) {
    return m == ConditioningMode::decoder || m == ConditioningMode::both;
}

inline std::string to_string(ConditioningMode m) {
    switch (m) {
        case ConditioningMode::none: return "none";
        case ConditioningMode::encoder: return "encoder";
        case ConditioningMode::decoder: return "decoder";
        case ConditioningMode::both: return "both";
    }
    throw std::invalid_argument("to_string: bad conditioning mode");
}

inline ConditioningMode conditioning_mode_from_string(const std::string& s) {
    if (s == "none") return ConditioningMode::none;
    if (s == "encoder") return ConditioningMode::encoder;
    if (s == "decoder") return ConditioningMode::decoder;
    if (s == "both") return ConditioningMode::both;
    throw std::invalid_argument("conditioning mode must be none|encoder|decoder|both, got " + s);
}

struct ConditioningConfig {
    int delay_embed_width = 16;
    int act_embed_width = 16;
    int combined_hidden = 32;
    int residual_hidden = 256;
    int residual_layers = 2;
};

struct ArchitectureConfig {
    int height = 32, width = 32, channels = 3;
    // Hidden encoder channel counts; the latent layer c_latent is appended.
    std::vector<int> enc_channels{16, 32, 32, 32};
    std::vector<int> kernels{5, 5, 3, 3, 3};
    std::vector<int> strides{2, 2, 1, 1, 1};
    int c_latent = 8;
    ConditioningConfig cond;

    int layer_count() const { return static_cast<int>(kernels.size()); }

    std::vector<int> channel_seq() const {
        std::vector<int> c{channels};
        c.insert(c.end(), enc_channels.begin(), enc_channels.end());
        c.push_back(c_latent);
        return c;
    }

    int latent_height() const {
        int h = height;
        for (int s : strides) h = (h + s - 1) / s;
        return h;
    }
    int latent_width() const {
        int w = width;
        for (int s : strides) w = (w + s - 1) / s;
        return w;
    }
    int codeword_length() const { return c_latent * latent_height() * latent_width(); }
    int pixel_count() const { return channels * height * width; }

    void validate() const {
        if (height <= 0 || width <= 0 || channels <= 0)
            throw std::invalid_argument("ArchitectureConfig: bad image dims");
        if (kernels.size() != strides.size() || enc_channels.size() + 1 != kernels.size())
            throw std::invalid_argument("ArchitectureConfig: layer lists inconsistent");
        if (c_latent <= 0) throw std::invalid_argument("ArchitectureConfig: c_latent must be > 0");
        for (int k : kernels)
            if (k <= 0 || k % 2 == 0)
                throw std::invalid_argument("ArchitectureConfig: kernels must be odd and positive");
    }
};

namespace detail {

constexpr double kBetaFloor = 1e-6;

// Inverse of softplus, for initializing reparameterized nonnegative params.
inline double softplus_inverse(double y) { return std::log(std::expm1(y)); }

struct ConvLayer {
    int w_idx = -1, b_idx = -1;
    ad::ConvGeom geom;
};

// Reparameterized divisive-normalization parameters: beta = floor +
// softplus(raw), gamma = softplus(raw), keeping the denominator positive with
// gradients alive everywhere.
struct GdnLayer {
    int beta_raw_idx = -1, gamma_raw_idx = -1;
    int channels = 0, hw = 0;
};

// Conditioning nets feeding the per-sample beta offset.
struct CgdnNets {
    nn::Mlp delay_net, act_net, combined;
};

}  // namespace detail

struct ModelBundle {
    nn::ParamStore store;
    ArchitectureConfig arch;
    ConditioningMode mode = ConditioningMode::none;
    ResistanceNormalizer res_nrm;
    DelayNormalizer delay_nrm;
    double b_low_ohm = 1.0;
    double b_high_ohm = 100e6;
    // Constant added to the encoder output before clipping, in normalized
    // log-resistance units. Setting it to the normalized equilibrium
    // resistance makes codewords deviations from the zero-energy operating
    // point, so freshly initialized models start inside the energy budget.
    double codeword_offset = 0.0;
    std::uint64_t seed = 0;

    std::vector<detail::ConvLayer> enc_conv, dec_conv;
    std::vector<detail::GdnLayer> enc_gdn, dec_gdn;
    std::vector<detail::CgdnNets> enc_cgdn, dec_cgdn;
    nn::Mlp enc_residual, dec_residual;

    double clip_low() const { return normalize_resistance(b_low_ohm, res_nrm); }
    double clip_high() const { return normalize_resistance(b_high_ohm, res_nrm); }
};

namespace detail {

inline GdnLayer make_gdn_layer(nn::ParamStore& s, const std::string& prefix, int channels, int hw) {
    GdnLayer g;
    g.channels = channels;
    g.hw = hw;
    // beta starts at 1, gamma at 0.1 on the diagonal and near zero elsewhere.
    Mat beta_raw = Mat::Constant(1, channels, softplus_inverse(1.0));
    Mat gamma_raw = Mat::Constant(channels, channels, -6.0);
    for (int i = 0; i < channels; ++i) gamma_raw(i, i) = softplus_inverse(0.1);
    g.beta_raw_idx = s.add(prefix + ".beta_raw", std::move(beta_raw));
    g.gamma_raw_idx = s.add(prefix + ".gamma_raw", std::move(gamma_raw));
    return g;
}

inline CgdnNets make_cgdn_nets(nn::ParamStore& s, const std::string& prefix, int channels,
                               const ConditioningConfig& c, RngStream& rng) {
    CgdnNets n;
    n.delay_net = nn::Mlp::create(s, prefix + ".delay", {1, c.delay_embed_width}, rng);
    n.act_net = nn::Mlp::create(s, prefix + ".act", {channels, c.act_embed_width}, rng);
    // Zero-initialized head: the conditioned layer starts exactly as plain GDN.
    n.combined = nn::Mlp::create(
        s, prefix + ".combined",
        {c.delay_embed_width + c.act_embed_width, c.combined_hidden, channels}, rng,
        /*zero_last=*/true);
    return n;
}

inline nn::Mlp make_residual_net(nn::ParamStore& s, const std::string& prefix, int n,
                                 const ConditioningConfig& c, RngStream& rng) {
    std::vector<int> widths{n + 1};
    for (int i = 0; i < c.residual_layers; ++i) widths.push_back(c.residual_hidden);
    widths.push_back(n);
    return nn::Mlp::create(s, prefix, widths, rng, /*zero_last=*/true);
}

}  // namespace detail

inline ModelBundle make_model(const ArchitectureConfig& arch, ConditioningMode mode,
                              const ResistanceNormalizer& rn, const DelayNormalizer& dn,
                              std::uint64_t seed) {
    arch.validate();
    ModelBundle m;
    m.arch = arch;
    m.mode = mode;
    m.res_nrm = rn;
    m.delay_nrm = dn;
    m.seed = seed;
    RngStream rng(splitmix64(seed));

    const auto chans = arch.channel_seq();
    int h = arch.height, w = arch.width;
    for (int l = 0; l < arch.layer_count(); ++l) {
        const int cin = chans[static_cast<std::size_t>(l)];
        const int cout = chans[static_cast<std::size_t>(l) + 1];
        const int k = arch.kernels[static_cast<std::size_t>(l)];
        detail::ConvLayer conv;
        conv.geom = ad::make_conv_geom(cin, h, w, cout, k, arch.strides[static_cast<std::size_t>(l)]);
        const double fan_in = static_cast<double>(cin) * k * k;
        const double fan_out = static_cast<double>(cout) * k * k;
        conv.w_idx = m.store.add("enc.conv" + std::to_string(l) + ".w",
                                 nn::glorot_uniform(cout, static_cast<Eigen::Index>(cin) * k * k,
                                                    fan_in, fan_out, rng));
        conv.b_idx = m.store.add("enc.conv" + std::to_string(l) + ".b", Mat::Zero(1, cout));
        m.enc_conv.push_back(conv);
        h = conv.geom.ho;
        w = conv.geom.wo;
        m.enc_gdn.push_back(
            detail::make_gdn_layer(m.store, "enc.gdn" + std::to_string(l), cout, h * w));
        if (encoder_conditioned(mode))
            m.enc_cgdn.push_back(
                detail::make_cgdn_nets(m.store, "enc.cgdn" + std::to_string(l), cout, arch.cond, rng));
    }
    if (encoder_conditioned(mode))
        m.enc_residual = detail::make_residual_net(m.store, "enc.residual", arch.codeword_length(),
                                                   arch.cond, rng);

    // Decoder mirror: transposed convolutions reusing the encoder geometries
    // (weights independent), inverse normalization after all but the last.
    for (int l = arch.layer_count() - 1; l >= 0; --l) {
        const auto& g = m.enc_conv[static_cast<std::size_t>(l)].geom;
        detail::ConvLayer conv;
        conv.geom = g;
        const double fan_in = static_cast<double>(g.cout) * g.k * g.k;
        const double fan_out = static_cast<double>(g.cin) * g.k * g.k;
        conv.w_idx = m.store.add("dec.conv" + std::to_string(l) + ".w",
                                 nn::glorot_uniform(g.cout, static_cast<Eigen::Index>(g.cin) * g.k * g.k,
                                                    fan_in, fan_out, rng));
        conv.b_idx = m.store.add("dec.conv" + std::to_string(l) + ".b", Mat::Zero(1, g.cin));
        m.dec_conv.push_back(conv);
        if (l > 0) {
            m.dec_gdn.push_back(detail::make_gdn_layer(m.store, "dec.gdn" + std::to_string(l),
                                                       g.cin, g.h * g.w));
            if (decoder_conditioned(mode))
                m.dec_cgdn.push_back(detail::make_cgdn_nets(
                    m.store, "dec.cgdn" + std::to_string(l), g.cin, arch.cond, rng));
        }
    }
    if (decoder_conditioned(mode))
        m.dec_residual = detail::make_residual_net(m.store, "dec.residual", arch.codeword_length(),
                                                   arch.cond, rng);
    return m;
}

namespace detail {

// beta/gamma materialization plus the optional per-sample conditioning offset.
// `dbar` is a [B,1] node of normalized delays when conditioning is active.
inline ad::Var normalization_apply(const ModelBundle& m, const nn::Bound& b, const GdnLayer& g,
                                   const CgdnNets* cond, ad::Var x,
                                   const std::optional<ad::Var>& dbar, bool inverse) {
    ad::Var beta = ad::add_scalar(ad::softplus_(b[g.beta_raw_idx]), kBetaFloor);
    ad::Var gamma = ad::softplus_(b[g.gamma_raw_idx]);
    if (cond != nullptr) {
        if (!dbar) throw std::invalid_argument("normalization_apply: conditioning needs a delay");
        ad::Var e_d = ad::tanh_(cond->delay_net.forward(b, *dbar));
        ad::Var e_a = ad::tanh_(cond->act_net.forward(b, ad::global_avg_pool(x, g.channels, g.hw)));
        ad::Var delta = cond->combined.forward(b, ad::concat_cols(e_d, e_a));
        // Clip keeps the denominator positive; gradient passes through only
        // inside the admissible region.
        beta = ad::clamp_(ad::add_row_broadcast(delta, beta), kBetaFloor, 1e30);
    }
    return inverse ? ad::igdn(x, beta, gamma, g.channels, g.hw)
                   : ad::gdn(x, beta, gamma, g.channels, g.hw);
}

inline void check_delay_argument(bool conditioned, const std::optional<ad::Var>& dbar,
                                 const char* side) {
    if (conditioned && !dbar)
        throw std::invalid_argument(std::string(side) + ": conditioned model requires a delay");
    if (!conditioned && dbar)
        throw std::invalid_argument(std::string(side) +
                                    ": unconditioned model rejects a delay argument");
}

}  // namespace detail

// images: [B, C*H*W] in [0,1]. dbar: [B,1] normalized delays, present iff the
// encoder side is conditioned. Returns normalized-resistance codewords [B, n],
// hard-clipped to the physical range.
inline ad::Var encode_ad(const ModelBundle& m, const nn::Bound& b, ad::Var images,
                         const std::optional<ad::Var>& dbar = std::nullopt) {
    if (images.val().cols() != m.arch.pixel_count())
        throw std::invalid_argument("encode: image shape mismatch");
    detail::check_delay_argument(encoder_conditioned(m.mode), dbar, "encode");
    ad::Var x = images;
    for (std::size_t l = 0; l < m.enc_conv.size(); ++l) {
        const auto& c = m.enc_conv[l];
        x = ad::conv2d(x, b[c.w_idx], b[c.b_idx], c.geom);
        const detail::CgdnNets* cond = m.enc_cgdn.empty() ? nullptr : &m.enc_cgdn[l];
        x = detail::normalization_apply(m, b, m.enc_gdn[l], cond, x, dbar, /*inverse=*/false);
    }
    if (encoder_conditioned(m.mode))
        x = ad::add(x, m.enc_residual.forward(b, ad::concat_cols(x, *dbar)));
    if (m.codeword_offset != 0.0) x = ad::add_scalar(x, m.codeword_offset);
    return ad::clamp_(x, m.clip_low(), m.clip_high());
}

// m_hat: received codewords [B, n]. dbar present iff the decoder side is
// conditioned. Returns images [B, C*H*W] squashed to [0,1].
inline ad::Var decode_ad(const ModelBundle& m, const nn::Bound& b, ad::Var m_hat,
                         const std::optional<ad::Var>& dbar = std::nullopt) {
    if (m_hat.val().cols() != m.arch.codeword_length())
        throw std::invalid_argument("decode: codeword shape mismatch");
    detail::check_delay_argument(decoder_conditioned(m.mode), dbar, "decode");
    ad::Var x = m_hat;
    if (decoder_conditioned(m.mode))
        x = ad::add(x, m.dec_residual.forward(b, ad::concat_cols(x, *dbar)));
    for (std::size_t i = 0; i < m.dec_conv.size(); ++i) {
        const auto& c = m.dec_conv[i];
        x = ad::conv2d_transpose(x, b[c.w_idx], b[c.b_idx], c.geom);
        if (i + 1 < m.dec_conv.size()) {
            const detail::CgdnNets* cond = m.dec_cgdn.empty() ? nullptr : &m.dec_cgdn[i];
            x = detail::normalization_apply(m, b, m.dec_gdn[i], cond, x, dbar, /*inverse=*/true);
        }
    }
    return ad::sigmoid_(x);
}

// Convenience sampling-path wrappers: run a throwaway tape and return values.
// `delay_s` is ignored (and must be absent semantically) for unconditioned
// sides; pass std::nullopt.
inline Mat encode(ModelBundle& m, const Mat& images, std::optional<double> delay_s = std::nullopt) {
    ad::Tape t;
    auto b = nn::bind(t, m.store);
    std::optional<ad::Var> dbar;
    if (delay_s)
        dbar = ad::constant(
            t, Mat::Constant(images.rows(), 1, normalize_delay(*delay_s, m.delay_nrm)));
    return encode_ad(m, b, ad::constant(t, images), dbar).val();
}

inline Mat decode(ModelBundle& m, const Mat& m_hat, std::optional<double> delay_s = std::nullopt) {
    ad::Tape t;
    auto b = nn::bind(t, m.store);
    std::optional<ad::Var> dbar;
    if (delay_s)
        dbar = ad::constant(t,
                            Mat::Constant(m_hat.rows(), 1, normalize_delay(*delay_s, m.delay_nrm)));
    return decode_ad(m, b, ad::constant(t, m_hat), dbar).val();
}

// ---------------------------------------------------------------------------
// Checkpoint I/O.
// ---------------------------------------------------------------------------
inline nlohmann::json architecture_to_json(const ArchitectureConfig& a) {
    return {{"height", a.height},
            {"width", a.width},
            {"channels", a.channels},
            {"enc_channels", a.enc_channels},
            {"kernels", a.kernels},
            {"strides", a.strides},
            {"c_latent", a.c_latent},
            {"delay_embed_width", a.cond.delay_embed_width},
            {"act_embed_width", a.cond.act_embed_width},
            {"combined_hidden", a.cond.combined_hidden},
            {"residual_hidden", a.cond.residual_hidden},
            {"residual_layers", a.cond.residual_layers}};
}

inline ArchitectureConfig architecture_from_json(const nlohmann::json& j) {
    ArchitectureConfig a;
    a.height = j.at("height").get<int>();
    a.width = j.at("width").get<int>();
    a.channels = j.at("channels").get<int>();
    a.enc_channels = j.at("enc_channels").get<std::vector<int>>();
    a.kernels = j.at("kernels").get<std::vector<int>>();
    a.strides = j.at("strides").get<std::vector<int>>();
    a.c_latent = j.at("c_latent").get<int>();
    a.cond.delay_embed_width = j.at("delay_embed_width").get<int>();
    a.cond.act_embed_width = j.at("act_embed_width").get<int>();
    a.cond.combined_hidden = j.at("combined_hidden").get<int>();
    a.cond.residual_hidden = j.at("residual_hidden").get<int>();
    a.cond.residual_layers = j.at("residual_layers").get<int>();
    a.validate();
    return a;
}

inline void save_model(const ModelBundle& m, const std::filesystem::path& path,
                       nlohmann::json extra_meta = {}) {
    nlohmann::json meta = {{"format_version", 1},
                           {"kind", "model"},
                           {"architecture", architecture_to_json(m.arch)},
                           {"conditioning", to_string(m.mode)},
                           {"normalizers", normalizers_to_json(m.res_nrm, m.delay_nrm)},
                           {"b_low_ohm", m.b_low_ohm},
                           {"b_high_ohm", m.b_high_ohm},
                           {"codeword_offset", m.codeword_offset},
                           {"seed", m.seed}};
    if (!extra_meta.is_null())
        for (auto& [k, v] : extra_meta.items()) meta[k] = v;
    io::save_checkpoint(path, std::move(meta), m.store);
}

inline ModelBundle load_model(const std::filesystem::path& path, nlohmann::json* meta_out = nullptr) {
    auto meta = io::peek_checkpoint_meta(path);
    if (meta.value("kind", "") != "model")
        throw std::runtime_error("load_model: not a model checkpoint");
    ArchitectureConfig arch = architecture_from_json(meta.at("architecture"));
    ResistanceNormalizer rn;
    DelayNormalizer dn;
    normalizers_from_json(meta.at("normalizers"), rn, dn);
    ModelBundle m = make_model(arch, conditioning_mode_from_string(meta.at("conditioning")), rn, dn,
                               meta.at("seed").get<std::uint64_t>());
    m.b_low_ohm = meta.at("b_low_ohm").get<double>();
    m.b_high_ohm = meta.at("b_high_ohm").get<double>();
    m.codeword_offset = meta.value("codeword_offset", 0.0);
    io::load_checkpoint(path, m.store);
    if (meta_out) *meta_out = std::move(meta);
    return m;
}

}  // namespace memjscc
