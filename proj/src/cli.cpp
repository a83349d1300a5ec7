#include "texadiff/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "texadiff/config.hpp"
#include "texadiff/error.hpp"
#include "texadiff/metrics.hpp"

namespace texadiff {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + path.string());
    os << text;
    if (!os) throw IoError("write failed for " + path.string());
}

bool is_tnsr(const fs::path& p) { return p.extension() == ".tnsr"; }

Image read_any_image(const fs::path& p) { return is_tnsr(p) ? tnsr_image(read_tnsr(p)) : load_image(p); }

BinaryMask read_any_mask(const fs::path& p, MaskResolution res) {
    return is_tnsr(p) ? tnsr_mask(read_tnsr(p), res) : image_to_mask(load_image(p), res);
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
    fs::path out = p;
    out.replace_extension();
    out += suffix;
    return out;
}

// Checkpoints carry a JSON sidecar holding the config text they were trained with.
fs::path sidecar(const fs::path& ckpt) { return fs::path(ckpt.string() + ".json"); }

void write_sidecar(const fs::path& ckpt, const std::string& kind, const std::string& config_text) {
    json j;
    j["kind"] = kind;
    j["config"] = config_text;
    write_text(sidecar(ckpt), j.dump(2) + "\n");
}

RunConfig read_sidecar(const fs::path& ckpt, const std::string& kind) {
    json j;
    try {
        j = json::parse(read_text(sidecar(ckpt)));
    } catch (const json::exception& e) {
        throw IoError("bad checkpoint sidecar " + sidecar(ckpt).string() + ": " + e.what());
    }
    if (j.value("kind", "") != kind) throw IoError(ckpt.string() + " is not a " + kind + " checkpoint");
    return parse_run_config(j.at("config").get<std::string>(), sidecar(ckpt).string());
}

Image match_channels(const Image& img, int channels) {
    if (img.channels == channels) return img;
    if (channels == 1) return to_grayscale(img);
    throw ContractError("image has " + std::to_string(img.channels) + " channels, model expects " +
                        std::to_string(channels));
}

std::pair<int, int> parse_window(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw ConfigError("--window expects LO:HI, got '" + s + "'");
    try {
        std::size_t a = 0, b = 0;
        const int lo = std::stoi(s.substr(0, colon), &a);
        const int hi = std::stoi(s.substr(colon + 1), &b);
        if (a != colon || b != s.size() - colon - 1) throw std::invalid_argument(s);
        return {lo, hi};
    } catch (const std::logic_error&) {
        throw ConfigError("--window expects LO:HI, got '" + s + "'");
    }
}

// ---------------------------------------------------------------------------

struct EstimateArgs {
    std::string lr, hr, psr, out_map, out_mask, config;
    double tau = 0.35;
};

int cmd_rtdm_estimate(const EstimateArgs& a, std::ostream& out) {
    const RtdmConfig cfg = a.config.empty() ? RtdmConfig{} : load_run_config(a.config).rtdm;
    const Image lr = read_any_image(a.lr);
    const Image hr = read_any_image(a.hr);
    std::optional<Image> psr;
    if (!a.psr.empty()) psr = read_any_image(a.psr);
    const RtdmResult r = estimate_rtdm(lr, hr, cfg, a.tau, FilterBankProvider(), psr);
    write_tnsr(a.out_map, map_tnsr(r.map));
    write_tnsr(a.out_mask, mask_tnsr(r.latent));
    save_image(mask_to_image(r.latent), with_suffix(a.out_mask, ".png"));
    char buf[64];
    std::snprintf(buf, sizeof buf, "foreground_fraction %.3f\n", r.latent.foreground_fraction());
    out << buf;
    return 0;
}

int cmd_dataset(const std::string& config, const std::string& dir, std::ostream& out) {
    const std::string text = read_text(config);
    const RunConfig c = parse_run_config(text, config);
    const auto items = build_dataset(c.n_scenes, c.scenes, c.degrade, c.rtdm, c.seed);
    save_dataset(items, dir, c.seed);
    out << "wrote " << items.size() << " scenes to " << dir << "\n";
    return 0;
}

struct TrainArgs {
    std::string config, dataset, out, freeze, log;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    const std::string text = read_text(a.config);
    RunConfig c = parse_run_config(text, a.config);
    if (!a.freeze.empty()) c.train.freeze = freeze_preset_from_string(a.freeze);
    const auto items = load_dataset(a.dataset);
    if (items.empty()) throw IoError("dataset " + a.dataset + " has no scenes");
    const auto examples = make_train_examples(items, c.rtdm.pool_factor);

    DenoiserModel model(c.model);
    model.apply_freeze(c.train.freeze);
    std::map<std::string, std::vector<nn::real>> frozen_before;
    for (const auto& [name, v] : model.params().snapshot())
        if (model.params().is_frozen(name)) frozen_before.emplace(name, v);

    const auto sched = make_schedule(c.schedule.timesteps, c.schedule.beta_start, c.schedule.beta_end);
    const auto log = train(model, examples, sched, c.train);

    const auto after = model.params().snapshot();
    for (const auto& [name, v] : frozen_before)
        if (after.at(name) != v) throw ContractError("frozen parameter " + name + " changed during training");

    model.save(a.out);
    write_sidecar(a.out, "denoiser", text);
    const fs::path log_path = a.log.empty() ? with_suffix(a.out, ".csv") : fs::path(a.log);
    write_loss_csv(log_path, log);
    out << "trained " << log.size() << " steps, frozen " << frozen_before.size() << " tensors; checkpoint " << a.out
        << ", log " << log_path.string() << "\n";
    return 0;
}

int cmd_train_predictor(const std::string& config, const std::string& dataset, const std::string& out_path,
                        std::ostream& out) {
    const std::string text = read_text(config);
    const RunConfig c = parse_run_config(text, config);
    const auto items = load_dataset(dataset);
    if (items.empty()) throw IoError("dataset " + dataset + " has no scenes");
    PredictorModel model(c.predictor_model);
    const auto log = train_predictor(model, make_predictor_examples(items), c.predictor);
    model.save(out_path);
    write_sidecar(out_path, "predictor", text);
    std::ofstream os(with_suffix(out_path, ".csv"), std::ios::trunc);
    if (!os) throw IoError("cannot write predictor log");
    os << "step,loss\n";
    for (std::size_t i = 0; i < log.size(); ++i) os << i + 1 << ',' << log[i] << '\n';
    out << "trained predictor " << log.size() << " steps; checkpoint " << out_path << "\n";
    return 0;
}

struct SampleArgs {
    std::string ckpt, lr, mask, out, hr, predictor, ta = "on", window;
    std::optional<double> tau;
    std::uint64_t seed = 0;
};

BinaryMask resolve_mask(const SampleArgs& a, const RunConfig& c, const Image& lr, int lh, int lw, double tau) {
    auto oracle = [&] {
        if (a.hr.empty()) throw ConfigError("--mask " + a.mask + " needs --hr");
        return estimate_rtdm(lr, read_any_image(a.hr), c.rtdm, tau, FilterBankProvider()).latent;
    };
    auto predicted = [&] {
        if (a.predictor.empty()) throw ConfigError("--mask " + a.mask + " needs --predictor");
        const RunConfig pc = read_sidecar(a.predictor, "predictor");
        PredictorModel pm(pc.predictor_model);
        pm.load(a.predictor);
        return predict_latent_mask(pm, match_channels(lr, pm.config().in_channels), make_psr(lr, c.degrade.scale),
                                   tau, c.rtdm);
    };
    if (a.mask == "ones") return BinaryMask(lh, lw, 1, MaskResolution::latent);
    if (a.mask == "zeros") return BinaryMask(lh, lw, 0, MaskResolution::latent);
    if (a.mask == "oracle") return oracle();
    if (a.mask == "predicted") return predicted();
    if (a.mask == "inverted") return (a.hr.empty() ? predicted() : oracle()).inverted();
    return read_any_mask(a.mask, MaskResolution::latent);
}

int cmd_sample(const SampleArgs& a, std::ostream& out) {
    const RunConfig c = read_sidecar(a.ckpt, "denoiser");
    DenoiserModel model(c.model);
    model.load(a.ckpt);

    const Image lr_raw = read_any_image(a.lr);
    const int f = c.rtdm.pool_factor, s = c.degrade.scale;
    require((lr_raw.height * s) % f == 0 && (lr_raw.width * s) % f == 0,
            "LR dims times the scale must be divisible by " + std::to_string(f));
    const int lh = lr_raw.height * s / f, lw = lr_raw.width * s / f;
    const Image lr = match_channels(lr_raw, c.model.cond_channels);

    const double tau = a.tau.value_or(c.sample_tau);
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("--tau must lie in [0, 1]");
    TaSamplerConfig ta = c.sample;
    if (a.ta != "on" && a.ta != "off") throw ConfigError("--ta must be on or off");
    ta.enabled = a.ta == "on";
    if (!a.window.empty()) std::tie(ta.t_lo, ta.t_hi) = parse_window(a.window);
    try {
        ta.validate(c.schedule.timesteps);
    } catch (const ContractError& e) {
        throw ConfigError(e.what());
    }

    const BinaryMask mask = resolve_mask(a, c, lr, lh, lw, tau);
    if (mask.height != lh || mask.width != lw)
        throw ContractError("mask is " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                            ", latent grid is " + std::to_string(lh) + "x" + std::to_string(lw));

    const auto sched = make_schedule(c.schedule.timesteps, c.schedule.beta_start, c.schedule.beta_end);
    const nn::Tensor z = sample_model(model, lr_condition(lr, lh, lw), mask_tensor(mask), sched, ta, a.seed);
    const Image sr = decode_latent(z);

    const fs::path o(a.out);
    write_tnsr(with_suffix(o, ".tnsr"), image_tnsr(sr));
    save_image(sr, is_tnsr(o) ? with_suffix(o, ".png") : o);
    write_tnsr(with_suffix(o, ".mask.tnsr"), mask_tnsr(mask));
    save_image(mask_to_image(mask), with_suffix(o, ".mask.png"));
    char buf[96];
    std::snprintf(buf, sizeof buf, "sampled %dx%d, mask foreground %.3f\n", sr.height, sr.width,
                  mask.foreground_fraction());
    out << buf;
    return 0;
}

int cmd_eval(const std::string& pred, const std::string& ref, const std::string& mpred, const std::string& mref,
             std::ostream& out) {
    MetricReport r;
    const Image a = read_any_image(pred), b = read_any_image(ref);
    r.psnr = psnr(a, b);
    r.ssim = ssim(a, b);
    if (!mpred.empty() || !mref.empty()) {
        if (mpred.empty() || mref.empty()) throw ConfigError("--mask-pred and --mask-ref go together");
        const BinaryMask p = read_any_mask(mpred, MaskResolution::latent);
        const BinaryMask q = read_any_mask(mref, MaskResolution::latent);
        r.mask_accuracy = mask_accuracy(p, q);
        r.mask_iou = mask_iou(p, q);
    }
    out << r.to_json() << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Texture-aware diffusion super-resolution toolkit (desk scale)", "texadiff"};
    app.require_subcommand(1);

    EstimateArgs est;
    auto* c_est = app.add_subcommand("rtdm-estimate", "Estimate the texture map and latent mask from an LR/HR pair");
    c_est->add_option("--lr", est.lr, "LR image")->required();
    c_est->add_option("--hr", est.hr, "HR image")->required();
    c_est->add_option("--psr", est.psr, "precomputed PSR image");
    c_est->add_option("--tau", est.tau, "binarization threshold")->required();
    c_est->add_option("--out-map", est.out_map, "continuous map (TNSR)")->required();
    c_est->add_option("--out-mask", est.out_mask, "latent mask (TNSR, PNG preview alongside)")->required();
    c_est->add_option("--config", est.config, "run config (TOML)");

    std::string ds_config, ds_out;
    auto* c_ds = app.add_subcommand("dataset", "Generate a synthetic dataset");
    c_ds->add_option("--config", ds_config)->required();
    c_ds->add_option("--out", ds_out)->required();

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "Train the denoiser");
    c_tr->add_option("--config", tr.config)->required();
    c_tr->add_option("--dataset", tr.dataset)->required();
    c_tr->add_option("--out", tr.out, "checkpoint path")->required();
    c_tr->add_option("--freeze-preset", tr.freeze)->check(CLI::IsMember({"none", "paper"}));
    c_tr->add_option("--log", tr.log, "loss CSV (default: checkpoint with .csv)");

    std::string tp_config, tp_dataset, tp_out;
    auto* c_tp = app.add_subcommand("train-predictor", "Train the texture-map predictor");
    c_tp->add_option("--config", tp_config)->required();
    c_tp->add_option("--dataset", tp_dataset)->required();
    c_tp->add_option("--out", tp_out, "checkpoint path")->required();

    SampleArgs sa;
    auto* c_sa = app.add_subcommand("sample", "Run the sampler on an LR image");
    c_sa->add_option("--ckpt", sa.ckpt)->required();
    c_sa->add_option("--lr", sa.lr)->required();
    c_sa->add_option("--mask", sa.mask, "predicted|oracle|ones|zeros|inverted|FILE")->required();
    c_sa->add_option("--tau", sa.tau);
    c_sa->add_option("--ta", sa.ta, "on|off");
    c_sa->add_option("--window", sa.window, "LO:HI");
    c_sa->add_option("--out", sa.out)->required();
    c_sa->add_option("--seed", sa.seed)->required();
    c_sa->add_option("--hr", sa.hr, "HR image for --mask oracle");
    c_sa->add_option("--predictor", sa.predictor, "predictor checkpoint for --mask predicted");

    std::string ev_pred, ev_ref, ev_mpred, ev_mref;
    auto* c_ev = app.add_subcommand("eval", "Compare images (and optionally masks)");
    c_ev->add_option("--pred", ev_pred)->required();
    c_ev->add_option("--ref", ev_ref)->required();
    c_ev->add_option("--mask-pred", ev_mpred);
    c_ev->add_option("--mask-ref", ev_mref);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        const CLI::App* sub = nullptr;
        for (const auto* s : app.get_subcommands()) sub = s;
        err << (sub ? sub->help() : app.help());
        return static_cast<int>(ErrorKind::io);
    }

    try {
        if (*c_est) return cmd_rtdm_estimate(est, out);
        if (*c_ds) return cmd_dataset(ds_config, ds_out, out);
        if (*c_tr) return cmd_train(tr, out);
        if (*c_tp) return cmd_train_predictor(tp_config, tp_dataset, tp_out, out);
        if (*c_sa) return cmd_sample(sa, out);
        if (*c_ev) return cmd_eval(ev_pred, ev_ref, ev_mpred, ev_mref, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace texadiff
