// Command-line entry point: dataset generation, surrogate fitting and
// validation, training, evaluation, ablations, report aggregation, and
// energy-table printing, all deterministic given (config, seed).
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "memjscc/drift_sim.hpp"
#include "memjscc/energy_model.hpp"
#include "memjscc/evaluation.hpp"
#include "memjscc/images.hpp"
#include "memjscc/jscc.hpp"
#include "memjscc/losses.hpp"
#include "memjscc/normalization.hpp"
#include "memjscc/surrogate.hpp"
#include "memjscc/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace memjscc;

namespace {

// Registry tying each flag to a config-file key and a resolved-value
// snapshot. Config files are JSON objects whose keys match flag names with
// underscores; command-line flags win over config values; unknown keys are
// rejected.
class FlagSet {
public:
    explicit FlagSet(CLI::App& cmd) : cmd_(cmd) {}

    template <typename T>
    CLI::Option* add(const std::string& key, T& var, const std::string& desc) {
        std::string flag = "--" + key;
        for (auto& c : flag)
            if (c == '_') c = '-';
        CLI::Option* opt = cmd_.add_option(flag, var, desc);
        opts_[key] = opt;
        setters_[key] = [&var](const json& v) { var = v.get<T>(); };
        getters_[key] = [&var]() { return json(var); };
        return opt;
    }

    CLI::Option* add_flag(const std::string& key, bool& var, const std::string& desc) {
        std::string flag = "--" + key;
        for (auto& c : flag)
            if (c == '_') c = '-';
        CLI::Option* opt = cmd_.add_flag(flag, var, desc);
        opts_[key] = opt;
        setters_[key] = [&var](const json& v) { var = v.get<bool>(); };
        getters_[key] = [&var]() { return json(var); };
        return opt;
    }

    void apply_config(const fs::path& path) {
        std::ifstream f(path);
        if (!f) throw CLI::ValidationError("config", "cannot open " + path.string());
        json cfg = json::parse(f);
        if (!cfg.is_object()) throw CLI::ValidationError("config", "config must be a JSON object");
        for (const auto& [k, v] : cfg.items()) {
            if (k == "format_version") continue;
            auto it = setters_.find(k);
            if (it == setters_.end())
                throw CLI::ValidationError("config", "unknown key '" + k + "' in " + path.string());
            if (opts_.at(k)->count() == 0) it->second(v);
        }
    }

    json resolved() const {
        json out = {{"format_version", 1}};
        for (const auto& [k, g] : getters_) out[k] = g();
        return out;
    }

private:
    CLI::App& cmd_;
    std::map<std::string, CLI::Option*> opts_;
    std::map<std::string, std::function<void(const json&)>> setters_;
    std::map<std::string, std::function<json()>> getters_;
};

void write_run_json(const fs::path& out_dir, const std::string& subcommand, const json& resolved) {
    fs::create_directories(out_dir);
    json run = resolved;
    run["subcommand"] = subcommand;
    std::ofstream f(out_dir / "run.json");
    if (!f) throw std::runtime_error("cannot write " + (out_dir / "run.json").string());
    f << run.dump(2) << "\n";
}

// Shared image-source resolution: an explicit path (file or directory of the
// 32x32 benchmark binaries), the MEMJSCC_DATA_DIR environment fallback, or
// the deterministic synthetic corpus.
ImageDataset load_images(const std::string& images_path, Eigen::Index count, std::uint64_t seed,
                         std::string* source_out = nullptr) {
    fs::path p = images_path;
    if (p.empty()) {
        if (const char* env = std::getenv("MEMJSCC_DATA_DIR")) {
            fs::path candidate = fs::path(env) / "images";
            if (fs::exists(candidate)) p = candidate;
        }
    }
    if (!p.empty() && fs::exists(p)) {
        if (source_out) *source_out = p.string();
        ImageDataset ds = load_cifar10(p, count);
        if (ds.count() < count)
            throw std::runtime_error("image source " + p.string() + " has only " +
                                     std::to_string(ds.count()) + " images, need " +
                                     std::to_string(count));
        return ds;
    }
    if (!p.empty())
        throw std::runtime_error("image path does not exist: " + p.string());
    if (source_out) *source_out = "synthetic";
    return synthetic_images(count, seed);
}

ConditioningMode parse_conditioning(const std::string& s) { return conditioning_mode_from_string(s); }

struct TrainOptions {
    std::string out, config, images, surrogate_path, profile = "desk";
    std::string conditioning = "both", energy_penalty = "default", loss = "mse";
    std::uint64_t seed = 1;
    double budget = 0.01;
    // 0/negative sentinels mean "take the profile default".
    int epochs = 0, batch = 0, train_count = 0, c_latent = 0, checkpoint_every = 1;
    double lr = 0.0, d_min = 0.0, d_max = 1000.0;
    bool resume = false, per_sample_delay = false;
    std::string delay_sampling;  // empty = profile default
};

void register_train_flags(FlagSet& fl, TrainOptions& o) {
    fl.add("out", o.out, "run output directory")->required();
    fl.add("images", o.images, "image source (file or directory of .bin batches)");
    fl.add("surrogate", o.surrogate_path, "surrogate channel checkpoint")->required();
    fl.add("profile", o.profile, "paper|desk scale profile")
        ->check(CLI::IsMember({"paper", "desk"}));
    fl.add("conditioning", o.conditioning, "none|encoder|decoder|both")
        ->check(CLI::IsMember({"none", "encoder", "decoder", "both"}));
    fl.add("energy_penalty", o.energy_penalty, "default|literal penalty form")
        ->check(CLI::IsMember({"default", "literal"}));
    fl.add("loss", o.loss, "mse|frobenius reconstruction term")
        ->check(CLI::IsMember({"mse", "frobenius"}));
    fl.add("seed", o.seed, "master seed");
    fl.add("budget", o.budget, "energy budget e_b in joules");
    fl.add("epochs", o.epochs, "override profile epochs");
    fl.add("batch", o.batch, "override profile batch size");
    fl.add("train_count", o.train_count, "override profile training image count");
    fl.add("c_latent", o.c_latent, "override profile latent channel count");
    fl.add("checkpoint_every", o.checkpoint_every, "checkpoint cadence in epochs");
    fl.add("lr", o.lr, "override profile learning rate");
    fl.add("d_min", o.d_min, "minimum training delay (s)");
    fl.add("d_max", o.d_max, "maximum training delay (s)");
    fl.add_flag("resume", o.resume, "resume from the checkpoint in --out");
    fl.add_flag("per_sample_delay", o.per_sample_delay,
                "sample a reconstruction delay per image instead of per batch");
    fl.add("delay_sampling", o.delay_sampling,
           "uniform|log training delay distribution (default: profile)")
        ->check(CLI::IsMember({"uniform", "log"}));
}

// Profile resolution. `paper` pins the full-scale hyperparameters; `desk` is
// the acceptance-suite scale, tuned so three epochs make visible progress.
void resolve_profile(TrainOptions& o, TrainingConfig& tcfg, ArchitectureConfig& arch,
                     Eigen::Index& train_count, json& extra) {
    const bool paper = o.profile == "paper";
    tcfg.batch = o.batch > 0 ? o.batch : 32;
    tcfg.epochs = o.epochs > 0 ? o.epochs : (paper ? 50 : 3);
    tcfg.learning_rate = o.lr > 0.0 ? o.lr : (paper ? 5e-5 : 5e-4);
    tcfg.d_min_s = o.d_min;
    tcfg.d_max_s = o.d_max;
    tcfg.seed = o.seed;
    tcfg.energy_literal = o.energy_penalty == "literal";
    tcfg.frobenius = o.loss == "frobenius";
    tcfg.per_sample_delay = o.per_sample_delay;
    // Log-uniform delays keep every desk-scale epoch supplied with short,
    // signal-bearing delays; the full-scale run has enough steps not to need
    // it and keeps the uniform protocol.
    tcfg.log_delay_sampling =
        o.delay_sampling.empty() ? !paper : o.delay_sampling == "log";
    tcfg.checkpoint_every = o.checkpoint_every;
    train_count = o.train_count > 0 ? o.train_count : (paper ? 50000 : 2000);
    arch = ArchitectureConfig{};
    arch.c_latent = o.c_latent > 0 ? o.c_latent : 8;
    if (paper)
        extra["paper_budget_sweep_j"] = {1.0, 0.5, 0.1, 0.05, 0.01};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Analogue image storage on drifting memristors: simulation, "
                 "surrogate channel, delay-conditioned autoencoder, evaluation."};
    app.require_subcommand(1);

    // ---------------- gen-data ----------------
    auto* gen = app.add_subcommand("gen-data", "generate a drift dataset directory");
    FlagSet gen_fl(*gen);
    struct {
        std::string out, config, format = "bin";
        std::int64_t count = 5000;
        double duration = 1000.0, rate = 1.0, r0_min = 100.0, r0_max = 750e3;
        std::uint64_t seed = 1;
    } g;
    gen_fl.add("out", g.out, "dataset directory")->required();
    gen_fl.add("count", g.count, "number of drift series");
    gen_fl.add("duration", g.duration, "series duration (s)");
    gen_fl.add("rate", g.rate, "sample rate (Hz)");
    gen_fl.add("r0_min", g.r0_min, "minimum initial resistance (ohm)");
    gen_fl.add("r0_max", g.r0_max, "maximum initial resistance (ohm)");
    gen_fl.add("seed", g.seed, "master seed");
    gen_fl.add("format", g.format, "bin|csv series storage")
        ->check(CLI::IsMember({"bin", "csv"}));
    gen->add_option("--config", g.config, "JSON config file (flags win)");
    gen->callback([&] {
        if (!g.config.empty()) gen_fl.apply_config(g.config);
        DatasetConfig cfg;
        cfg.count = g.count;
        cfg.duration_s = g.duration;
        cfg.sample_rate_hz = g.rate;
        cfg.r0_min_ohm = g.r0_min;
        cfg.r0_max_ohm = g.r0_max;
        cfg.master_seed = g.seed;
        DriftDataset ds = generate_dataset(cfg);
        save_dataset(ds, g.out, g.format == "csv");
        write_run_json(g.out, "gen-data", gen_fl.resolved());
        std::cout << "wrote " << ds.series.size() << " series ("
                  << ds.series.front().sample_times_s.size() << " samples each) to " << g.out
                  << "\n";
    });

    // ---------------- fit-surrogate ----------------
    auto* fit = app.add_subcommand("fit-surrogate", "fit the differentiable channel surrogate");
    FlagSet fit_fl(*fit);
    struct {
        std::string data, out, config;
        std::uint64_t seed = 1;
        int epochs = 40, hidden = 64;
        double d_min = 0.0, d_max = 1000.0, d_valid = 500.0;
        int recurrence_n = 4;
    } s;
    fit_fl.add("data", s.data, "drift dataset directory (or $MEMJSCC_DATA_DIR)");
    fit_fl.add("out", s.out, "output directory")->required();
    fit_fl.add("seed", s.seed, "fitting seed");
    fit_fl.add("epochs", s.epochs, "fitting epochs");
    fit_fl.add("hidden", s.hidden, "hidden width of the surrogate nets");
    fit_fl.add("d_min", s.d_min, "minimum delay the channel must cover (s)");
    fit_fl.add("d_max", s.d_max, "maximum delay the channel must cover (s)");
    fit_fl.add("d_valid", s.d_valid, "single-step validity bound (s)");
    fit_fl.add("recurrence_n", s.recurrence_n, "maximum recurrence steps");
    fit->add_option("--config", s.config, "JSON config file (flags win)");
    fit->callback([&] {
        if (!s.config.empty()) fit_fl.apply_config(s.config);
        fs::path data = s.data;
        if (data.empty()) {
            const char* env = std::getenv("MEMJSCC_DATA_DIR");
            if (!env) throw CLI::ValidationError("--data", "no dataset given and MEMJSCC_DATA_DIR unset");
            data = fs::path(env) / "drift";
        }
        DriftDataset ds = load_dataset(data);
        ResistanceNormalizer rn = fit_resistance_normalizer(ds);
        DelayNormalizer dn = fit_delay_normalizer(s.d_min, s.d_max);
        SurrogateTrainConfig cfg;
        cfg.seed = s.seed;
        cfg.epochs = s.epochs;
        cfg.hidden_width = s.hidden;
        cfg.d_valid_s = s.d_valid;
        cfg.recurrence_n = s.recurrence_n;
        SurrogateParams p = fit_surrogate(ds, rn, dn, cfg);
        fs::create_directories(s.out);
        save_surrogate(p, fs::path(s.out) / "surrogate.ckpt");
        write_run_json(s.out, "fit-surrogate", fit_fl.resolved());
        std::cout << "surrogate fitted on " << ds.series.size() << " series; valid to "
                  << p.max_delay_s() << " s; saved to " << (fs::path(s.out) / "surrogate.ckpt")
                  << "\n";
    });

    // ---------------- validate-surrogate ----------------
    auto* val = app.add_subcommand("validate-surrogate",
                                   "compare surrogate moments against the simulator");
    FlagSet val_fl(*val);
    struct {
        std::string surrogate, out, config;
        std::vector<double> r0 = {1e3, 1e4, 1e5, 5e5};
        std::vector<double> delays = {1.0, 10.0, 100.0, 500.0};
        int draws = 10000;
        std::uint64_t seed = 7;
    } v;
    val_fl.add("surrogate", v.surrogate, "surrogate checkpoint")->required();
    val_fl.add("out", v.out, "report directory")->required();
    val_fl.add("r0", v.r0, "initial resistances (ohm)");
    val_fl.add("delays", v.delays, "delays (s)");
    val_fl.add("draws", v.draws, "Monte Carlo draws per cell");
    val_fl.add("seed", v.seed, "Monte Carlo seed");
    val->add_option("--config", v.config, "JSON config file (flags win)");
    val->callback([&] {
        if (!v.config.empty()) val_fl.apply_config(v.config);
        SurrogateParams p = load_surrogate(v.surrogate);
        SurrogateValidationConfig vcfg;
        vcfg.n_draws = v.draws;
        vcfg.seed = v.seed;
        auto cells = validate_surrogate(p, DeviceModelParams{}, v.r0, v.delays, vcfg);
        fs::create_directories(v.out);
        {
            std::ofstream f(fs::path(v.out) / "surrogate_validation.csv", std::ios::binary);
            f << "r0_ohm,delay_s,mean_model,mean_sim,std_model,std_sim,mean_abs_err,std_rel_err,"
                 "pass\n";
            char buf[320];
            for (const auto& c : cells) {
                std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%d\n",
                              c.r0_ohm, c.delay_s, c.sur_mean, c.sim_mean, c.sur_std, c.sim_std,
                              std::abs(c.sur_mean - c.sim_mean),
                              std::abs(c.sur_std - c.sim_std) / c.sim_std, c.pass ? 1 : 0);
                f << buf;
            }
        }
        write_run_json(v.out, "validate-surrogate", val_fl.resolved());
        int failed = 0;
        for (const auto& c : cells)
            if (!c.pass) ++failed;
        std::cout << cells.size() - static_cast<std::size_t>(failed) << "/" << cells.size()
                  << " cells within tolerance; report in " << v.out << "\n";
        if (failed > 0) throw CLI::RuntimeError(1);
    });

    // ---------------- train ----------------
    auto* tr = app.add_subcommand("train", "train a delay-conditioned autoencoder");
    FlagSet tr_fl(*tr);
    TrainOptions t;
    register_train_flags(tr_fl, t);
    tr->add_option("--config", t.config, "JSON config file (flags win)");
    tr->callback([&] {
        if (!t.config.empty()) tr_fl.apply_config(t.config);
        SurrogateParams surrogate = load_surrogate(t.surrogate_path);
        TrainingConfig tcfg;
        ArchitectureConfig arch;
        Eigen::Index train_count = 0;
        json extra;
        resolve_profile(t, tcfg, arch, train_count, extra);
        std::string source;
        ImageDataset imgs = load_images(t.images, train_count, derive_stream_seed(t.seed, 1000), &source);
        ConditioningMode mode = parse_conditioning(t.conditioning);
        ModelBundle model = make_model(arch, mode, surrogate.res_nrm,
                                       fit_delay_normalizer(tcfg.d_min_s, tcfg.d_max_s), t.seed);
        // Codewords start at the zero-energy equilibrium level.
        model.codeword_offset =
            normalize_resistance(EnergyModelParams{}.r_start_ohm, surrogate.res_nrm);
        RegularizationConfig rcfg;
        rcfg.e_b_joule = t.budget;
        EnergyModelParams ecfg;
        json resolved = tr_fl.resolved();
        resolved["image_source"] = source;
        resolved["resolved_epochs"] = tcfg.epochs;
        resolved["resolved_batch"] = tcfg.batch;
        resolved["resolved_lr"] = tcfg.learning_rate;
        resolved["resolved_train_count"] = static_cast<std::int64_t>(train_count);
        for (const auto& [k, vj] : extra.items()) resolved[k] = vj;
        write_run_json(t.out, "train", resolved);
        TrainResult res =
            train(model, surrogate, imgs, tcfg, rcfg, ecfg, t.out, t.resume);
        std::cout << "trained " << res.steps << " steps; epoch mean loss:";
        for (double l : res.epoch_mean_loss) std::cout << ' ' << l;
        std::cout << "\nmodel saved to " << (fs::path(t.out) / "model.ckpt") << "\n";
    });

    // ---------------- eval ----------------
    auto* ev = app.add_subcommand("eval", "evaluate a trained model over the delay grid");
    FlagSet ev_fl(*ev);
    struct {
        std::string model, surrogate, out, images, config, channel = "surrogate";
        std::vector<double> delays = default_eval_delays();
        int draws = 4, count = 500;
        std::uint64_t seed = 1;
    } e;
    ev_fl.add("model", e.model, "model checkpoint")->required();
    ev_fl.add("surrogate", e.surrogate, "surrogate checkpoint (for --channel surrogate)");
    ev_fl.add("out", e.out, "report directory")->required();
    ev_fl.add("images", e.images, "test image source");
    ev_fl.add("channel", e.channel, "surrogate|ground-truth|noiseless")
        ->check(CLI::IsMember({"surrogate", "ground-truth", "noiseless"}));
    ev_fl.add("delays", e.delays, "evaluation delays (s)");
    ev_fl.add("draws", e.draws, "channel draws per image and delay");
    ev_fl.add("count", e.count, "number of test images");
    ev_fl.add("seed", e.seed, "evaluation seed");
    ev->add_option("--config", e.config, "JSON config file (flags win)");
    ev->callback([&] {
        if (!e.config.empty()) ev_fl.apply_config(e.config);
        ModelBundle model = load_model(e.model);
        SurrogateParams surrogate;
        ChannelSpec ch = ChannelSpec::make_noiseless();
        if (e.channel == "surrogate") {
            if (e.surrogate.empty())
                throw CLI::ValidationError("--surrogate", "required for --channel surrogate");
            surrogate = load_surrogate(e.surrogate);
            ch = ChannelSpec::make_surrogate(surrogate);
        } else if (e.channel == "ground-truth") {
            ch = ChannelSpec::make_ground_truth();
        }
        std::string source;
        ImageDataset imgs =
            load_images(e.images, e.count, derive_stream_seed(e.seed, 2000), &source);
        EvalConfig cfg;
        cfg.n_draws = e.draws;
        cfg.seed = e.seed;
        cfg.delays = e.delays;
        auto pts = eval_psnr_vs_delay(model, imgs, ch, cfg);
        auto hists = eval_energy_histograms(model, imgs, EnergyModelParams{}, e.delays);
        emit_report(e.out, pts, hists);
        json resolved = ev_fl.resolved();
        resolved["image_source"] = source;
        write_run_json(e.out, "eval", resolved);
        std::cout << "delay_s  psnr_db  mean_energy_j\n";
        for (std::size_t i = 0; i < pts.size(); ++i)
            std::cout << pts[i].delay_s << "  " << pts[i].psnr_mean_db << "  "
                      << hists[i].mean_energy_j << "\n";
        std::cout << "report in " << e.out << "\n";
    });

    // ---------------- ablate ----------------
    auto* ab = app.add_subcommand(
        "ablate", "train fixed-delay and noiseless baselines, then evaluate them");
    FlagSet ab_fl(*ab);
    TrainOptions a;
    struct {
        std::vector<double> fixed_delays = {1.0, 10.0, 100.0, 1000.0};
        std::vector<double> eval_delays = {1.0, 10.0, 100.0, 1000.0};
        bool noiseless = false;
        int eval_count = 500, eval_draws = 4;
    } ax;
    register_train_flags(ab_fl, a);
    ab_fl.add("fixed_delays", ax.fixed_delays, "single training delays, one model each");
    ab_fl.add("eval_delays", ax.eval_delays, "delays each variant is evaluated at");
    ab_fl.add_flag("noiseless", ax.noiseless, "also train a noiseless-channel baseline");
    ab_fl.add("eval_count", ax.eval_count, "test images per evaluation");
    ab_fl.add("eval_draws", ax.eval_draws, "channel draws per evaluation sample");
    ab->add_option("--config", a.config, "JSON config file (flags win)");
    ab->callback([&] {
        if (!a.config.empty()) ab_fl.apply_config(a.config);
        SurrogateParams surrogate = load_surrogate(a.surrogate_path);
        TrainingConfig base;
        ArchitectureConfig arch;
        Eigen::Index train_count = 0;
        json extra;
        resolve_profile(a, base, arch, train_count, extra);
        std::string source;
        ImageDataset imgs =
            load_images(a.images, train_count, derive_stream_seed(a.seed, 1000), &source);
        ImageDataset test =
            load_images(a.images, ax.eval_count, derive_stream_seed(a.seed, 2000), &source);
        RegularizationConfig rcfg;
        rcfg.e_b_joule = a.budget;
        ConditioningMode mode = parse_conditioning(a.conditioning);
        json resolved = ab_fl.resolved();
        resolved["image_source"] = source;
        write_run_json(a.out, "ablate", resolved);

        std::ofstream summary(fs::path(a.out) / "ablation_summary.csv", std::ios::binary);
        summary << "variant,eval_delay_s,psnr_mean_db\n";
        auto run_variant = [&](const std::string& name, TrainingConfig tcfg, bool noiseless_train) {
            fs::path dir = fs::path(a.out) / name;
            ModelBundle model = make_model(arch, mode, surrogate.res_nrm,
                                           fit_delay_normalizer(tcfg.d_min_s, tcfg.d_max_s),
                                           a.seed);
            model.codeword_offset =
                normalize_resistance(EnergyModelParams{}.r_start_ohm, surrogate.res_nrm);
            // A noiseless training baseline is emulated with a zero-delay
            // channel (the surrogate's identity condition).
            if (noiseless_train) tcfg.d_min_s = tcfg.d_max_s = 0.0;
            train(model, surrogate, imgs, tcfg, rcfg, EnergyModelParams{}, dir);
            EvalConfig ecfg;
            ecfg.n_draws = ax.eval_draws;
            ecfg.seed = a.seed;
            ecfg.delays = ax.eval_delays;
            auto pts =
                eval_psnr_vs_delay(model, test, ChannelSpec::make_surrogate(surrogate), ecfg);
            auto hists = eval_energy_histograms(model, test, EnergyModelParams{}, ecfg.delays);
            emit_report(dir, pts, hists);
            char buf[160];
            for (const auto& p : pts) {
                std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g\n", name.c_str(), p.delay_s,
                              p.psnr_mean_db);
                summary << buf;
            }
        };
        for (double d : ax.fixed_delays) {
            TrainingConfig tcfg = base;
            tcfg.d_min_s = tcfg.d_max_s = d;
            std::string name = "fixed_d" + std::to_string(static_cast<long long>(d));
            run_variant(name, tcfg, false);
        }
        if (ax.noiseless) run_variant("noiseless", base, true);
        std::cout << "ablation summary in " << (fs::path(a.out) / "ablation_summary.csv") << "\n";
    });

    // ---------------- report ----------------
    auto* rp = app.add_subcommand("report", "aggregate evaluation runs into one summary");
    FlagSet rp_fl(*rp);
    struct {
        std::string runs, out, config;
    } r;
    rp_fl.add("runs", r.runs, "directory containing evaluation run subdirectories")->required();
    rp_fl.add("out", r.out, "summary output directory")->required();
    rp->add_option("--config", r.config, "JSON config file (flags win)");
    rp->callback([&] {
        if (!r.config.empty()) rp_fl.apply_config(r.config);
        std::vector<fs::path> runs;
        for (const auto& entry : fs::directory_iterator(r.runs))
            if (entry.is_directory() && fs::exists(entry.path() / "psnr_vs_delay.csv"))
                runs.push_back(entry.path());
        std::sort(runs.begin(), runs.end());
        if (runs.empty())
            throw CLI::ValidationError("--runs", "no evaluation runs under " + r.runs);
        fs::create_directories(r.out);
        std::ofstream f(fs::path(r.out) / "summary.csv", std::ios::binary);
        f << "run,delay_s,psnr_mean_db,psnr_std_db,clipped\n";
        for (const auto& run : runs) {
            std::ifstream in(run / "psnr_vs_delay.csv");
            std::string line;
            std::getline(in, line);  // header
            while (std::getline(in, line))
                if (!line.empty()) f << run.filename().string() << ',' << line << '\n';
        }
        write_run_json(r.out, "report", rp_fl.resolved());
        std::cout << "aggregated " << runs.size() << " runs into "
                  << (fs::path(r.out) / "summary.csv") << "\n";
    });

    // ---------------- energy ----------------
    auto* en = app.add_subcommand("energy", "print the programming-energy table E(r) as CSV");
    FlagSet en_fl(*en);
    struct {
        std::string out, config;
        double r_min = 100.0, r_max = 750e3;
        int points = 100;
    } q;
    en_fl.add("out", q.out, "output CSV path (stdout when omitted)");
    en_fl.add("r_min", q.r_min, "lowest target resistance (ohm)");
    en_fl.add("r_max", q.r_max, "highest target resistance (ohm)");
    en_fl.add("points", q.points, "number of log-spaced targets");
    en->add_option("--config", q.config, "JSON config file (flags win)");
    en->callback([&] {
        if (!q.config.empty()) en_fl.apply_config(q.config);
        if (q.points < 2) throw CLI::ValidationError("--points", "need at least 2 points");
        EnergyModelParams ep;
        std::ostringstream body;
        body << "r_ohm,energy_j\n";
        char buf[96];
        for (int i = 0; i < q.points; ++i) {
            const double r = std::exp(std::log(q.r_min) +
                                      (std::log(q.r_max) - std::log(q.r_min)) * i / (q.points - 1));
            std::snprintf(buf, sizeof buf, "%.10g,%.10g\n", r, energy_cost(r, ep));
            body << buf;
        }
        if (q.out.empty()) {
            std::cout << body.str();
        } else {
            std::ofstream f(q.out, std::ios::binary);
            if (!f) throw std::runtime_error("cannot write " + q.out);
            f << body.str();
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& ex) {
        return app.exit(ex);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
