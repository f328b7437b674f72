#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "memjscc/images.hpp"
#include "memjscc/jscc.hpp"
#include "memjscc/losses.hpp"
#include "memjscc/surrogate.hpp"

namespace memjscc {

struct TrainingConfig {
    int batch = 32;
    double learning_rate = 5e-5;
    int epochs = 50;
    double d_min_s = 0.0;
    double d_max_s = 1000.0;
    std::uint64_t seed = 1;
    // Reconstruction delay per sample instead of per batch (slower; the
    // default matches single-delay-per-batch training).
    bool per_sample_delay = false;
    // Draw the per-batch delay log-uniformly over the integer range instead
    // of uniformly. Short delays are the only ones whose channel output still
    // carries signal, so at very small epoch counts uniform sampling starves
    // the model of usable gradients; log-uniform sampling balances the two
    // regimes. Off by default (uniform matches the reference protocol).
    bool log_delay_sampling = false;
    bool energy_literal = false;
    bool frobenius = false;
    int checkpoint_every = 1;  // epochs

    void validate() const {
        if (batch < 2) throw std::invalid_argument("TrainingConfig: batch must be >= 2");
        if (epochs < 1) throw std::invalid_argument("TrainingConfig: epochs must be >= 1");
        if (!(learning_rate > 0.0))
            throw std::invalid_argument("TrainingConfig: learning rate must be > 0");
        if (d_min_s < 0.0 || d_max_s < d_min_s)
            throw std::invalid_argument("TrainingConfig: need 0 <= d_min <= d_max");
    }
};

struct StepMetrics {
    long step = 0;
    int epoch = 0;
    double delay_s = 0.0;
    double mse = 0.0;
    double r_upper = 0.0;
    double r_lower = 0.0;
    double energy_j = 0.0;
    double loss = 0.0;
};

// Owns the optimizer/RNG state of one training run; the model and surrogate
// are referenced, not copied.
class Trainer {
public:
    Trainer(ModelBundle& model, const SurrogateParams& surrogate, const TrainingConfig& tcfg,
            const RegularizationConfig& rcfg, const EnergyModelParams& ecfg)
        : model_(model),
          surrogate_(surrogate),
          tcfg_(tcfg),
          rcfg_(rcfg),
          ecfg_(ecfg),
          rng_(splitmix64(tcfg.seed)) {
        tcfg_.validate();
        rcfg_.validate();
        ecfg_.validate();
        if (surrogate.max_delay_s() < tcfg.d_max_s)
            throw std::domain_error("Trainer: surrogate not valid up to d_max");
    }

    StepMetrics step(const Mat& batch_images) {
        const auto b = batch_images.rows();
        if (b < 2) throw std::invalid_argument("Trainer::step: batch must have >= 2 rows");
        if (tcfg_.per_sample_delay) return per_sample_step(batch_images);
        const double d = draw_delay();
        std::vector<Mat> noise = draw_noise(b, d);
        StepMetrics m = combined_step(batch_images, {d}, noise);
        m.delay_s = d;
        return m;
    }

    long step_count() const { return step_; }
    int epoch = 0;

    // Optimizer + RNG snapshot: JSON header line, then the raw Adam moments.
    void save_state(const std::filesystem::path& path) const {
        std::ostringstream rs;
        rs << rng_copy_();
        nlohmann::json meta = {{"format_version", 1},
                               {"kind", "optimizer"},
                               {"step", step_},
                               {"epoch", epoch},
                               {"adam_step", adam_.step},
                               {"rng", rs.str()}};
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("Trainer::save_state: cannot write " + path.string());
        f << meta.dump() << "\n";
        for (const auto& part : {&adam_.m, &adam_.v})
            for (const auto& mat : *part)
                f.write(reinterpret_cast<const char*>(mat.data()),
                        static_cast<std::streamsize>(static_cast<std::size_t>(mat.size()) *
                                                     sizeof(double)));
    }

    void load_state(const std::filesystem::path& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("Trainer::load_state: cannot open " + path.string());
        std::string header;
        std::getline(f, header);
        nlohmann::json meta = nlohmann::json::parse(header);
        if (meta.value("kind", "") != "optimizer")
            throw std::runtime_error("Trainer::load_state: not an optimizer state file");
        step_ = meta.at("step").get<long>();
        epoch = meta.at("epoch").get<int>();
        std::istringstream rs(meta.at("rng").get<std::string>());
        rs >> rng_.engine();
        // Rebuild the moment buffers at the model's current shapes.
        adam_ = nn::AdamState{};
        adam_.step = meta.at("adam_step").get<long>();
        adam_.m.resize(static_cast<std::size_t>(model_.store.count()));
        adam_.v.resize(static_cast<std::size_t>(model_.store.count()));
        for (auto* part : {&adam_.m, &adam_.v})
            for (int i = 0; i < model_.store.count(); ++i) {
                Mat& mat = (*part)[static_cast<std::size_t>(i)];
                mat = Mat::Zero(model_.store.value(i).rows(), model_.store.value(i).cols());
                f.read(reinterpret_cast<char*>(mat.data()),
                       static_cast<std::streamsize>(static_cast<std::size_t>(mat.size()) *
                                                    sizeof(double)));
                if (!f) throw std::runtime_error("Trainer::load_state: truncated data");
            }
    }

private:
    std::mt19937_64 rng_copy_() const { return const_cast<RngStream&>(rng_).engine(); }

    double draw_delay() {
        const auto lo = std::llround(tcfg_.d_min_s);
        const auto hi = std::llround(tcfg_.d_max_s);
        if (!tcfg_.log_delay_sampling || lo == hi)
            return static_cast<double>(rng_.uniform_int(lo, hi));
        // Log-uniform over [lo, hi] with half-integer shifts so lo (including
        // zero) keeps nonzero mass, rounded back to the integer grid.
        const double u = rng_.uniform(std::log(static_cast<double>(lo) + 0.5),
                                      std::log(static_cast<double>(hi) + 0.5));
        const auto d = std::llround(std::exp(u) - 0.5);
        return static_cast<double>(std::clamp(d, lo, hi));
    }

    std::vector<Mat> draw_noise(Eigen::Index rows, double delay_s) {
        std::vector<Mat> noise;
        for (std::size_t s = 0; s < split_delay(delay_s, surrogate_).size(); ++s) {
            Mat nz(rows, model_.arch.codeword_length());
            for (Eigen::Index i = 0; i < nz.size(); ++i) nz(i) = rng_.gauss();
            noise.push_back(std::move(nz));
        }
        return noise;
    }

    // One optimizer update on reconstruction + resistance + energy terms.
    // `delays` holds a single per-batch reconstruction delay.
    StepMetrics combined_step(const Mat& images, const std::vector<double>& delays,
                              const std::vector<Mat>& noise) {
        const auto b = images.rows();
        const double d = delays.front();
        ad::Tape t;
        auto bm = nn::bind(t, model_.store);
        auto bs = nn::bind(t, const_cast<nn::ParamStore&>(surrogate_.store));
        ad::Var x = ad::constant(t, images);
        std::optional<ad::Var> dbar;
        const double db = normalize_delay(d, model_.delay_nrm);
        if (encoder_conditioned(model_.mode) || decoder_conditioned(model_.mode))
            dbar = ad::constant(t, Mat::Constant(b, 1, db));
        ad::Var code = encode_ad(model_, bm, x,
                                 encoder_conditioned(model_.mode) ? dbar : std::nullopt);
        ad::Var m_hat = channel_forward_ad(code, d, surrogate_, bs, noise);
        ad::Var rec = decode_ad(model_, bm, m_hat,
                                decoder_conditioned(model_.mode) ? dbar : std::nullopt);
        ad::Var diff = ad::sub(rec, x);
        ad::Var mse = ad::mean_(ad::square_(diff));
        ad::Var recon = tcfg_.frobenius
                            ? ad::scale(ad::sum_(ad::square_(diff)), 1.0 / static_cast<double>(b))
                            : mse;
        ad::Var rup = r_upper_ad(code, rcfg_, model_.res_nrm);
        ad::Var rlo = r_lower_ad(code, rcfg_, model_.res_nrm);

        // Energy branch: re-encode with the fixed delay grid, one delay per
        // batch slot, and enforce the budget on that encoding's mean energy.
        const auto grid = make_energy_delay_grid(static_cast<int>(b), tcfg_.d_min_s, tcfg_.d_max_s);
        std::optional<ad::Var> dbar_e;
        if (encoder_conditioned(model_.mode)) {
            Mat de(b, 1);
            for (Eigen::Index i = 0; i < b; ++i)
                de(i, 0) = normalize_delay(grid[static_cast<std::size_t>(i)], model_.delay_nrm);
            dbar_e = ad::constant(t, de);
        }
        ad::Var code_e = encode_ad(model_, bm, x, dbar_e);
        ad::Var pen_e = r_energy_ad(code_e, model_.res_nrm, ecfg_, rcfg_, tcfg_.energy_literal);

        ad::Var loss = ad::add(recon, ad::scale(ad::add(rup, rlo), rcfg_.lambda_resistance));
        loss = ad::add(loss, ad::scale(pen_e, rcfg_.lambda_energy));

        StepMetrics out;
        out.loss = loss.val()(0, 0);
        out.mse = mse.val()(0, 0);
        out.r_upper = rup.val()(0, 0);
        out.r_lower = rlo.val()(0, 0);
        out.energy_j = mean_codeword_energy_norm(code_e.val(), model_.res_nrm, ecfg_);
        if (!std::isfinite(out.loss))
            throw std::runtime_error("Trainer::step: non-finite loss at step " +
                                     std::to_string(step_) + " (delay " + std::to_string(d) + ")");
        t.backward(loss.id);
        auto grads = nn::collect_grads(bm);
        nn::adam_step(model_.store, grads, adam_, tcfg_.learning_rate);
        ++step_;
        out.step = step_;
        out.epoch = epoch;
        return out;
    }

    // Per-sample reconstruction delays: independent single-row passes with
    // accumulated gradients and a single optimizer update.
    StepMetrics per_sample_step(const Mat& images) {
        const auto b = images.rows();
        std::vector<double> ds(static_cast<std::size_t>(b));
        for (auto& v : ds) v = draw_delay();
        std::vector<std::vector<Mat>> noise;
        for (Eigen::Index i = 0; i < b; ++i)
            noise.push_back(draw_noise(1, ds[static_cast<std::size_t>(i)]));

        std::vector<Mat> acc(static_cast<std::size_t>(model_.store.count()));
        for (int i = 0; i < model_.store.count(); ++i)
            acc[static_cast<std::size_t>(i)] =
                Mat::Zero(model_.store.value(i).rows(), model_.store.value(i).cols());
        StepMetrics out;
        const auto grid = make_energy_delay_grid(static_cast<int>(b), tcfg_.d_min_s, tcfg_.d_max_s);
        for (Eigen::Index i = 0; i < b; ++i) {
            const double d = ds[static_cast<std::size_t>(i)];
            ad::Tape t;
            auto bm = nn::bind(t, model_.store);
            auto bs = nn::bind(t, const_cast<nn::ParamStore&>(surrogate_.store));
            ad::Var x = ad::constant(t, images.row(i));
            std::optional<ad::Var> dbar;
            if (encoder_conditioned(model_.mode) || decoder_conditioned(model_.mode))
                dbar = ad::constant(t, Mat::Constant(1, 1, normalize_delay(d, model_.delay_nrm)));
            ad::Var code = encode_ad(model_, bm, x,
                                     encoder_conditioned(model_.mode) ? dbar : std::nullopt);
            ad::Var m_hat = channel_forward_ad(code, d, surrogate_, bs,
                                               noise[static_cast<std::size_t>(i)]);
            ad::Var rec = decode_ad(model_, bm, m_hat,
                                    decoder_conditioned(model_.mode) ? dbar : std::nullopt);
            ad::Var diff = ad::sub(rec, x);
            ad::Var mse = ad::mean_(ad::square_(diff));
            ad::Var recon =
                tcfg_.frobenius ? ad::sum_(ad::square_(diff)) : mse;
            ad::Var rup = r_upper_ad(code, rcfg_, model_.res_nrm);
            ad::Var rlo = r_lower_ad(code, rcfg_, model_.res_nrm);
            std::optional<ad::Var> dbar_e;
            if (encoder_conditioned(model_.mode))
                dbar_e = ad::constant(
                    t, Mat::Constant(1, 1,
                                     normalize_delay(grid[static_cast<std::size_t>(i)],
                                                     model_.delay_nrm)));
            ad::Var code_e = encode_ad(model_, bm, x, dbar_e);
            ad::Var pen_e = r_energy_ad(code_e, model_.res_nrm, ecfg_, rcfg_, tcfg_.energy_literal);
            ad::Var loss = ad::add(recon, ad::scale(ad::add(rup, rlo), rcfg_.lambda_resistance));
            loss = ad::add(loss, ad::scale(pen_e, rcfg_.lambda_energy));
            loss = ad::scale(loss, 1.0 / static_cast<double>(b));
            out.loss += loss.val()(0, 0);
            out.mse += mse.val()(0, 0) / static_cast<double>(b);
            out.r_upper += rup.val()(0, 0) / static_cast<double>(b);
            out.r_lower += rlo.val()(0, 0) / static_cast<double>(b);
            out.energy_j += mean_codeword_energy_norm(code_e.val(), model_.res_nrm, ecfg_) /
                            static_cast<double>(b);
            t.backward(loss.id);
            auto grads = nn::collect_grads(bm);
            for (std::size_t g = 0; g < grads.size(); ++g) acc[g] += grads[g];
        }
        if (!std::isfinite(out.loss))
            throw std::runtime_error("Trainer::step: non-finite loss at step " +
                                     std::to_string(step_));
        nn::adam_step(model_.store, acc, adam_, tcfg_.learning_rate);
        ++step_;
        out.step = step_;
        out.epoch = epoch;
        out.delay_s = std::accumulate(ds.begin(), ds.end(), 0.0) / static_cast<double>(b);
        return out;
    }

    ModelBundle& model_;
    const SurrogateParams& surrogate_;
    TrainingConfig tcfg_;
    RegularizationConfig rcfg_;
    EnergyModelParams ecfg_;
    RngStream rng_;
    nn::AdamState adam_;
    long step_ = 0;
};

struct TrainResult {
    std::vector<double> epoch_mean_loss;
    long steps = 0;
};

inline void write_log_header(std::ofstream& f) {
    f << "step,epoch,delay_s,mse,r_upper,r_lower,energy_j,loss\n";
}

inline void write_log_row(std::ofstream& f, const StepMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%ld,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", m.step, m.epoch,
                  m.delay_s, m.mse, m.r_upper, m.r_lower, m.energy_j, m.loss);
    f << buf;
}

// Full training run with CSV logging and periodic checkpoints in `out_dir`
// (model.ckpt + optimizer.bin + log.csv). With `resume`, the model parameters
// and optimizer/RNG state are restored and the log is appended to.
inline TrainResult train(ModelBundle& model, const SurrogateParams& surrogate,
                         const ImageDataset& train_set, const TrainingConfig& tcfg,
                         const RegularizationConfig& rcfg, const EnergyModelParams& ecfg,
                         const std::filesystem::path& out_dir, bool resume = false) {
    tcfg.validate();
    if (train_set.count() < tcfg.batch)
        throw std::domain_error("train: dataset smaller than one batch");
    std::filesystem::create_directories(out_dir);
    const auto model_path = out_dir / "model.ckpt";
    const auto opt_path = out_dir / "optimizer.bin";
    const auto log_path = out_dir / "log.csv";

    Trainer trainer(model, surrogate, tcfg, rcfg, ecfg);
    if (resume) {
        io::load_checkpoint(model_path, model.store);
        trainer.load_state(opt_path);
    }
    std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error("train: cannot write " + log_path.string());
    if (!resume) write_log_header(log);

    // The shuffle stream is separate from the step stream so resuming at an
    // epoch boundary reproduces the same batch order.
    const auto n_batches = train_set.count() / tcfg.batch;
    TrainResult result;
    for (int epoch = trainer.epoch; epoch < tcfg.epochs; ++epoch) {
        trainer.epoch = epoch;
        RngStream shuffle_rng(derive_stream_seed(tcfg.seed, static_cast<std::uint64_t>(epoch) + 1));
        std::vector<Eigen::Index> order(static_cast<std::size_t>(train_set.count()));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        double loss_sum = 0.0;
        for (Eigen::Index bi = 0; bi < n_batches; ++bi) {
            Mat batch(tcfg.batch, train_set.pixel_count());
            for (int i = 0; i < tcfg.batch; ++i)
                batch.row(i) =
                    train_set.pixels.row(order[static_cast<std::size_t>(bi * tcfg.batch + i)]);
            StepMetrics m = trainer.step(batch);
            loss_sum += m.loss;
            write_log_row(log, m);
        }
        result.epoch_mean_loss.push_back(loss_sum / static_cast<double>(n_batches));
        trainer.epoch = epoch + 1;
        if ((epoch + 1) % tcfg.checkpoint_every == 0 || epoch + 1 == tcfg.epochs) {
            save_model(model, model_path,
                       {{"epoch", epoch + 1}, {"conditioning", to_string(model.mode)}});
            trainer.save_state(opt_path);
            log.flush();
        }
    }
    result.steps = trainer.step_count();
    return result;
}

}  // namespace memjscc
