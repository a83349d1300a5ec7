#include "texadiff/denoiser.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "texadiff/error.hpp"
#include "texadiff/nn/ops.hpp"

namespace texadiff {

using nn::Tensor;

void ConditionSet::validate() const {
    require(lr_cond.defined() && noisy_latent.defined() && rtdm.defined(), "ConditionSet: missing condition");
    require(noisy_latent.ndim() == 4 && lr_cond.ndim() == 4 && rtdm.ndim() == 4, "ConditionSet: expected 4-D tensors");
    const auto& z = noisy_latent.shape();
    auto same_grid = [&](const Tensor& t) { return t.dim(0) == z[0] && t.dim(2) == z[2] && t.dim(3) == z[3]; };
    require(same_grid(lr_cond), "ConditionSet: lr_cond " + nn::shape_str(lr_cond.shape()) +
                                    " does not match latent " + nn::shape_str(z));
    require(same_grid(rtdm) && rtdm.dim(1) == 1,
            "ConditionSet: rtdm " + nn::shape_str(rtdm.shape()) + " does not match latent " + nn::shape_str(z));
    for (nn::real v : rtdm.data()) require(v == 0.0 || v == 1.0, "ConditionSet: rtdm must be binary");
}

SftLayer::SftLayer(nn::ParameterSet& ps, const std::string& name, int cond_ch, int feat_ch, Rng& rng)
    : shared(ps, name + ".shared", cond_ch, cond_ch, 3, rng),
      to_gamma(ps, name + ".gamma", cond_ch, feat_ch, 3, rng, 1, -1, true),
      to_beta(ps, name + ".beta", cond_ch, feat_ch, 3, rng, 1, -1, true) {}

Tensor sft_inject(const SftLayer& layer, const Tensor& feat, const Tensor& rtdm_feat) {
    require(feat.ndim() == 4 && rtdm_feat.ndim() == 4 && feat.dim(0) == rtdm_feat.dim(0) &&
                feat.dim(2) == rtdm_feat.dim(2) && feat.dim(3) == rtdm_feat.dim(3),
            "sft_inject: rtdm features " + nn::shape_str(rtdm_feat.shape()) + " not aligned with " +
                nn::shape_str(feat.shape()));
    Tensor h = nn::silu(layer.shared(rtdm_feat));
    Tensor gamma = nn::add_scalar(layer.to_gamma(h), 1.0);
    Tensor beta = layer.to_beta(h);
    require(gamma.shape() == feat.shape(), "sft_inject: modulation channels differ from feature channels");
    return gamma * feat + beta;
}

ResBlock::ResBlock(nn::ParameterSet& ps, const std::string& name, int cin, int cout, int temb_dim, int groups,
                   Rng& rng)
    : norm1(ps, name + ".norm1", cin, groups),
      norm2(ps, name + ".norm2", cout, groups),
      conv1(ps, name + ".conv1", cin, cout, 3, rng),
      conv2(ps, name + ".conv2", cout, cout, 3, rng),
      temb_proj(ps, name + ".temb", temb_dim, cout, rng) {
    if (cin != cout) skip.emplace(ps, name + ".skip", cin, cout, 1, rng);
}

Tensor ResBlock::operator()(const Tensor& x, const Tensor& temb) const {
    Tensor h = conv1(nn::silu(norm1(x)));
    h = nn::add_channel_bias(h, temb_proj(nn::silu(temb)));
    h = conv2(nn::silu(norm2(h)));
    return h + (skip ? (*skip)(x) : x);
}

MiniControlBranch::MiniControlBranch(nn::ParameterSet& ps, const DenoiserConfig& cfg, Rng& rng) {
    const int w = cfg.control_width;
    lr_enc1 = nn::Conv2d(ps, "control.lr_enc1", cfg.cond_channels, w, 3, rng);
    lr_enc2 = nn::Conv2d(ps, "control.lr_enc2", w, w, 3, rng);
    lat_enc1 = nn::Conv2d(ps, "control.lat_enc1", cfg.latent_channels, w, 3, rng);
    lat_enc2 = nn::Conv2d(ps, "control.lat_enc2", w, w, 3, rng);
    time_res1 = ResBlock(ps, "control.time_res1", w, w, cfg.temb_dim, cfg.groups, rng);
    rtdm_enc = nn::Conv2d(ps, "control.rtdm_enc", 1, w, 3, rng);
    sft = SftLayer(ps, "control.sft", w, w, rng);
    time_res2 = ResBlock(ps, "control.time_res2", w, w, cfg.temb_dim, cfg.groups, rng);
    to_main = nn::Conv2d(ps, "control.to_main", w, cfg.base_width, 1, rng);
    zero_proj = nn::Conv2d(ps, "control.zero_proj", cfg.base_width, cfg.base_width, 1, rng, 1, 0, true);
}

Tensor MiniControlBranch::operator()(const ConditionSet& conds, const Tensor& temb, const Tensor& main_feat) const {
    Tensor e = lr_enc2(nn::silu(lr_enc1(conds.lr_cond))) + lat_enc2(nn::silu(lat_enc1(conds.noisy_latent)));
    e = time_res1(e, temb);
    e = sft_inject(sft, e, nn::silu(rtdm_enc(conds.rtdm)));
    e = time_res2(e, temb);
    Tensor c = nn::cross_normalize(to_main(e), main_feat);
    return zero_proj(c);
}

FreezePreset freeze_preset_from_string(const std::string& s) {
    if (s == "none") return FreezePreset::none;
    if (s == "paper") return FreezePreset::paper;
    throw ConfigError("freeze preset must be 'none' or 'paper', got '" + s + "'");
}

std::string to_string(FreezePreset p) { return p == FreezePreset::none ? "none" : "paper"; }

DenoiserModel::DenoiserModel(const DenoiserConfig& cfg) : cfg_(cfg) {
    require(cfg.base_width % cfg.groups == 0 && cfg.control_width % cfg.groups == 0 && cfg.temb_dim % 2 == 0,
            "DenoiserConfig: widths must be divisible by groups");
    Rng rng(cfg.seed);
    const int w = cfg.base_width, td = cfg.temb_dim;
    time1_ = nn::Linear(params_, "backbone.time1", td / 2, td, rng);
    time2_ = nn::Linear(params_, "backbone.time2", td, td, rng);
    in_conv_ = nn::Conv2d(params_, "backbone.in_conv", cfg.latent_channels, w, 3, rng);
    down1_ = ResBlock(params_, "backbone.down1", w, w, td, cfg.groups, rng);
    down2_ = ResBlock(params_, "backbone.down2", w, 2 * w, td, cfg.groups, rng);
    mid_ = ResBlock(params_, "backbone.mid", 2 * w, 2 * w, td, cfg.groups, rng);
    up1_ = ResBlock(params_, "backbone.up1", 4 * w, 2 * w, td, cfg.groups, rng);
    up2_ = ResBlock(params_, "backbone.up2", 3 * w, w, td, cfg.groups, rng);
    out_norm_ = nn::GroupNorm(params_, "backbone.out_norm", w, cfg.groups);
    out_conv_ = nn::Conv2d(params_, "backbone.out_conv", w, cfg.latent_channels, 3, rng);
    control_ = MiniControlBranch(params_, cfg, rng);
}

Tensor DenoiserModel::run(const Tensor& z_t, const std::vector<int>& ts, const ConditionSet* conds) const {
    require(z_t.ndim() == 4 && z_t.dim(1) == cfg_.latent_channels, "denoiser: latent must be (N, C, h, w)");
    require(z_t.dim(2) % 4 == 0 && z_t.dim(3) % 4 == 0, "denoiser: latent dims must be divisible by 4");
    require(static_cast<int>(ts.size()) == z_t.dim(0), "denoiser: one timestep per batch item required");
    Tensor temb = time2_(nn::silu(time1_(nn::timestep_embedding(ts, cfg_.temb_dim / 2))));
    Tensor h1 = down1_(in_conv_(z_t), temb);
    if (conds) h1 = h1 + control_(*conds, temb, h1);
    Tensor h2 = down2_(nn::avg_pool2(h1), temb);
    Tensor m = mid_(nn::avg_pool2(h2), temb);
    Tensor u = up1_(nn::concat_channels(nn::upsample_nearest2(m), h2), temb);
    u = up2_(nn::concat_channels(nn::upsample_nearest2(u), h1), temb);
    return out_conv_(nn::silu(out_norm_(u)));
}

Tensor DenoiserModel::forward(const ConditionSet& conds, const std::vector<int>& ts) const {
    conds.validate();
    require(conds.lr_cond.dim(1) == cfg_.cond_channels, "denoiser: lr_cond channel count mismatch");
    return run(conds.noisy_latent, ts, &conds);
}

Tensor DenoiserModel::forward_backbone(const Tensor& z_t, const std::vector<int>& ts) const {
    return run(z_t, ts, nullptr);
}

void DenoiserModel::apply_freeze(FreezePreset preset) {
    params_.unfreeze_all();
    if (preset == FreezePreset::none) return;
    params_.freeze_prefix("backbone.");
    for (const auto& [name, t] : params_.items())
        if (name.rfind("backbone.down1.", 0) == 0 || name.rfind("backbone.up1.", 0) == 0 ||
            name.rfind("backbone.up2.", 0) == 0)
            params_.unfreeze(name);
}

Tensor denoise_forward(const DenoiserModel& model, const ConditionSet& conds, int t) {
    conds.validate();
    return model.forward(conds, std::vector<int>(static_cast<std::size_t>(conds.noisy_latent.dim(0)), t));
}

Tensor sample_model(const DenoiserModel& model, const Tensor& lr_cond, const Tensor& rtdm, const NoiseSchedule& sched,
                    const TaSamplerConfig& ta, std::uint64_t seed, const StepObserver& observer) {
    require(lr_cond.ndim() == 4 && rtdm.ndim() == 4, "sample_model: expected 4-D conditions");
    const nn::Shape shape{lr_cond.dim(0), model.config().latent_channels, lr_cond.dim(2), lr_cond.dim(3)};
    EpsFn fn = [&](const Tensor& z, int t) {
        ConditionSet c{lr_cond, z, rtdm, std::nullopt};
        return denoise_forward(model, c, t);
    };
    return sample(fn, shape, rtdm, sched, ta, seed, observer);
}

std::vector<TrainExample> make_train_examples(const std::vector<DatasetItem>& items, int latent_factor) {
    std::vector<TrainExample> out;
    for (const auto& it : items) {
        TrainExample ex;
        ex.z0 = encode_latent(it.hr, latent_factor);
        ex.lr_cond = lr_condition(it.lr, ex.z0.dim(2), ex.z0.dim(3));
        require(it.latent_mask.height == ex.z0.dim(2) && it.latent_mask.width == ex.z0.dim(3),
                "training example mask does not match the latent grid");
        ex.mask = mask_tensor(it.latent_mask);
        out.push_back(std::move(ex));
    }
    return out;
}

void TrainConfig::validate() const {
    if (steps < 0) throw ConfigError("train.steps must be >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
    if (alpha_w < 0.0) throw ConfigError("train.alpha_w must be >= 0");
}

std::vector<LossRecord> train(DenoiserModel& model, const std::vector<TrainExample>& data, const NoiseSchedule& sched,
                              const TrainConfig& cfg) {
    cfg.validate();
    require(!data.empty(), "train: empty dataset");
    if (cfg.freeze != FreezePreset::none) model.apply_freeze(cfg.freeze);
    nn::OptimizerState opt;
    opt.cfg.lr = cfg.lr;
    Rng rng(cfg.seed);
    std::vector<LossRecord> log;
    log.reserve(static_cast<std::size_t>(cfg.steps));
    for (int step = 1; step <= cfg.steps; ++step) {
        std::vector<Tensor> z0s, lrs, masks;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& ex = data[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(data.size()) - 1))];
            z0s.push_back(ex.z0);
            lrs.push_back(ex.lr_cond);
            masks.push_back(ex.mask);
        }
        const int t = static_cast<int>(rng.integer(1, sched.T));
        Tensor z0 = stack_batch(z0s);
        Tensor eps = Tensor::randn(z0.shape(), rng);
        ConditionSet conds{stack_batch(lrs), q_sample(z0, t, eps, sched), stack_batch(masks), std::nullopt};

        model.params().zero_grad();
        Tensor pred = model.forward(conds, std::vector<int>(static_cast<std::size_t>(cfg.batch_size), t));
        Tensor loss = tadl_loss(eps, pred, conds.rtdm, cfg.alpha_w);
        if (!std::isfinite(loss.item()))
            throw NumericError("non-finite training loss at step " + std::to_string(step) + " (t=" +
                               std::to_string(t) + ")");
        loss.backward();
        nn::adam_step(model.params(), opt);
        log.push_back({step, t, loss.item(), masked_mse(eps, pred, conds.rtdm, true),
                       masked_mse(eps, pred, conds.rtdm, false)});
    }
    model.params().zero_grad();
    return log;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& log) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write loss log " + path.string());
    f << "step,t,loss,masked_loss,unmasked_loss\n";
    char buf[160];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.9g,%.9g,%.9g\n", r.step, r.t, r.loss, r.masked_loss, r.unmasked_loss);
        f << buf;
    }
    if (!f) throw IoError("failed writing loss log " + path.string());
}

}  // namespace texadiff
