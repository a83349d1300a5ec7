#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "texadiff/degrade.hpp"
#include "texadiff/nn/params.hpp"
#include "texadiff/rtdm.hpp"

namespace texadiff {

struct PredictorConfig {
    int in_channels = 1;
    int width = 16;
    std::uint64_t seed = 0;
};

// g = sigmoid(gate(concat(f_lr, f_psr))); g * f_lr + (1 - g) * f_psr.
nn::Tensor gated_fuse(const nn::Tensor& f_lr, const nn::Tensor& f_psr, const nn::Conv2d& gate);

// Two-branch encoder over (LR upsampled to PSR size, PSR) at two scales, per-scale
// gated fusion, and a skip decoder ending in a zero-initialised sigmoid head.
class PredictorModel {
public:
    explicit PredictorModel(const PredictorConfig& cfg = {});
    PredictorModel(const PredictorModel&) = delete;
    PredictorModel& operator=(const PredictorModel&) = delete;

    const PredictorConfig& config() const { return cfg_; }
    nn::ParameterSet& params() { return params_; }
    const nn::ParameterSet& params() const { return params_; }

    // Inputs (N, C, H, W) in [-1, 1], H and W even; output (N, 1, H, W) in [0, 1].
    nn::Tensor forward(const nn::Tensor& lr_up, const nn::Tensor& psr) const;

    void save(const std::filesystem::path& path) const { params_.save(path); }
    void load(const std::filesystem::path& path) { params_.load(path); }

    nn::Conv2d lr1, lr2, psr1, psr2;
    nn::Conv2d gate1, gate2;
    nn::Conv2d dec2, dec1, head;

private:
    PredictorConfig cfg_;
    nn::ParameterSet params_;
};

// LR is bicubic-upsampled to the PSR grid before entering its branch.
TextureMap predict_rtdm(const PredictorModel& model, const Image& lr, const Image& psr);

// Predicted map pushed through the estimation path's binarize -> postprocess -> pool.
BinaryMask predict_latent_mask(const PredictorModel& model, const Image& lr, const Image& psr, double tau,
                               const RtdmConfig& cfg);

struct PredictorExample {
    nn::Tensor lr_up;   // (1, C, H, W)
    nn::Tensor psr;     // (1, C, H, W)
    nn::Tensor target;  // (1, 1, H, W) continuous M
};

PredictorExample make_predictor_example(const Image& lr, const Image& psr, const TextureMap& target);
std::vector<PredictorExample> make_predictor_examples(const std::vector<DatasetItem>& items);

struct PredictorTrainConfig {
    int steps = 2000;
    int batch_size = 8;
    double lr = 3e-3;
    // Side of the random square training crop, a multiple of 8; 0 trains on whole scenes.
    int crop = 32;
    // Random flips and transposes of each crop.
    bool augment = true;
    std::uint64_t seed = 0;

    void validate() const;
};

// L1 against the continuous map; returns the per-step loss.
std::vector<double> train_predictor(PredictorModel& model, const std::vector<PredictorExample>& data,
                                    const PredictorTrainConfig& cfg);

// Percentage of matching latent pixels.
double rtdm_accuracy(const BinaryMask& pred, const BinaryMask& oracle);
// Accuracy of always answering the oracle's more frequent class.
double majority_baseline(const BinaryMask& oracle);

}  // namespace texadiff
