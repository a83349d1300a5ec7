#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "texadiff/degrade.hpp"
#include "texadiff/diffusion.hpp"
#include "texadiff/nn/params.hpp"

namespace texadiff {

struct DenoiserConfig {
    int latent_channels = 1;
    int cond_channels = 1;
    int base_width = 32;
    int control_width = 16;
    int temb_dim = 64;
    int groups = 8;
    std::uint64_t seed = 0;
};

// Conditions consumed by the control branch; all tensors share the latent grid.
struct ConditionSet {
    nn::Tensor lr_cond;       // (N, Cc, h, w)
    nn::Tensor noisy_latent;  // (N, C, h, w)
    nn::Tensor rtdm;          // (N, 1, h, w), binary
    std::optional<std::string> prompt_slot;  // accepted and ignored

    void validate() const;
};

// Per-pixel affine modulation: gamma = 1 + to_gamma(h), beta = to_beta(h),
// h = silu(shared(rtdm_feat)). The producers start at zero, so a fresh layer is the identity.
struct SftLayer {
    nn::Conv2d shared, to_gamma, to_beta;

    SftLayer() = default;
    SftLayer(nn::ParameterSet& ps, const std::string& name, int cond_ch, int feat_ch, Rng& rng);
};

nn::Tensor sft_inject(const SftLayer& layer, const nn::Tensor& feat, const nn::Tensor& rtdm_feat);

struct ResBlock {
    nn::GroupNorm norm1, norm2;
    nn::Conv2d conv1, conv2;
    nn::Linear temb_proj;
    std::optional<nn::Conv2d> skip;

    ResBlock() = default;
    ResBlock(nn::ParameterSet& ps, const std::string& name, int cin, int cout, int temb_dim, int groups, Rng& rng);
    nn::Tensor operator()(const nn::Tensor& x, const nn::Tensor& temb) const;
};

struct MiniControlBranch {
    nn::Conv2d lr_enc1, lr_enc2, lat_enc1, lat_enc2;
    ResBlock time_res1, time_res2;
    nn::Conv2d rtdm_enc;
    SftLayer sft;
    nn::Conv2d to_main;
    nn::Conv2d zero_proj;  // zero-initialised; the branch adds nothing until trained

    MiniControlBranch() = default;
    MiniControlBranch(nn::ParameterSet& ps, const DenoiserConfig& cfg, Rng& rng);
    // Residual to add to the backbone features after its first block.
    nn::Tensor operator()(const ConditionSet& conds, const nn::Tensor& temb, const nn::Tensor& main_feat) const;
};

enum class FreezePreset { none, paper };
FreezePreset freeze_preset_from_string(const std::string& s);
std::string to_string(FreezePreset p);

class DenoiserModel {
public:
    explicit DenoiserModel(const DenoiserConfig& cfg = {});
    DenoiserModel(const DenoiserModel&) = delete;
    DenoiserModel& operator=(const DenoiserModel&) = delete;

    const DenoiserConfig& config() const { return cfg_; }
    nn::ParameterSet& params() { return params_; }
    const nn::ParameterSet& params() const { return params_; }
    MiniControlBranch& control() { return control_; }

    // Predicted noise for conds.noisy_latent at per-sample timesteps ts.
    nn::Tensor forward(const ConditionSet& conds, const std::vector<int>& ts) const;
    // Same network with the control injection skipped.
    nn::Tensor forward_backbone(const nn::Tensor& z_t, const std::vector<int>& ts) const;

    void apply_freeze(FreezePreset preset);

    void save(const std::filesystem::path& path) const { params_.save(path); }
    void load(const std::filesystem::path& path) { params_.load(path); }

private:
    nn::Tensor run(const nn::Tensor& z_t, const std::vector<int>& ts, const ConditionSet* conds) const;

    DenoiserConfig cfg_;
    nn::ParameterSet params_;
    nn::Linear time1_, time2_;
    nn::Conv2d in_conv_;
    ResBlock down1_, down2_, mid_, up1_, up2_;
    nn::GroupNorm out_norm_;
    nn::Conv2d out_conv_;
    MiniControlBranch control_;
};

nn::Tensor denoise_forward(const DenoiserModel& model, const ConditionSet& conds, int t);

// Sample with the model; lr_cond and rtdm are fixed, the noisy latent is refreshed each step.
nn::Tensor sample_model(const DenoiserModel& model, const nn::Tensor& lr_cond, const nn::Tensor& rtdm,
                        const NoiseSchedule& sched, const TaSamplerConfig& ta, std::uint64_t seed,
                        const StepObserver& observer = {});

struct TrainExample {
    nn::Tensor z0;       // (1, C, h, w)
    nn::Tensor lr_cond;  // (1, Cc, h, w)
    nn::Tensor mask;     // (1, 1, h, w)
};

std::vector<TrainExample> make_train_examples(const std::vector<DatasetItem>& items, int latent_factor = 8);

struct TrainConfig {
    int steps = 2000;
    int batch_size = 8;
    double lr = 3e-3;
    double alpha_w = 1.0;
    FreezePreset freeze = FreezePreset::none;
    std::uint64_t seed = 0;

    void validate() const;
};

struct LossRecord {
    int step = 0;
    int t = 0;
    double loss = 0.0;
    double masked_loss = 0.0;    // plain squared residual over mask == 1
    double unmasked_loss = 0.0;  // over mask == 0
};

// Each step draws a batch (with replacement), one timestep shared by the batch and
// fresh noise, then takes an Adam step on the TADL objective.
std::vector<LossRecord> train(DenoiserModel& model, const std::vector<TrainExample>& data, const NoiseSchedule& sched,
                              const TrainConfig& cfg);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& log);

}  // namespace texadiff
