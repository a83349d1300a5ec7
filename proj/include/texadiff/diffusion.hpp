#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "texadiff/image.hpp"
#include "texadiff/nn/tensor.hpp"
#include "texadiff/rtdm.hpp"

namespace texadiff {

// Timesteps run 1..T; the tables are stored 0-based, so timestep t reads index t-1.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta, alpha, alpha_bar;

    void check_t(int t) const;
    double beta_at(int t) const { return beta[static_cast<std::size_t>(t - 1)]; }
    double alpha_at(int t) const { return alpha[static_cast<std::size_t>(t - 1)]; }
    double alpha_bar_at(int t) const { return alpha_bar[static_cast<std::size_t>(t - 1)]; }
};

NoiseSchedule make_schedule(int T = 1000, double beta_start = 1e-4, double beta_end = 0.02);

nn::Tensor q_sample(const nn::Tensor& z0, int t, const nn::Tensor& eps, const NoiseSchedule& sched);

// Mean over all elements of (1 + alpha_w * mask) * (eps - eps_pred)^2. `mask` is
// (N, 1, H, W) with values in {0, 1} and broadcasts across channels.
nn::Tensor tadl_loss(const nn::Tensor& eps, const nn::Tensor& eps_pred, const nn::Tensor& mask, double alpha_w = 1.0);
nn::Tensor tadl_loss(const nn::Tensor& eps, const nn::Tensor& eps_pred, const BinaryMask& mask, double alpha_w = 1.0);

// Mean squared residual restricted to mask == 1 (or mask == 0); 0 when the region is empty.
double masked_mse(const nn::Tensor& eps, const nn::Tensor& eps_pred, const nn::Tensor& mask, bool rich);

nn::Tensor ddpm_step(const nn::Tensor& z_t, const nn::Tensor& eps_pred, int t, const NoiseSchedule& sched,
                     const nn::Tensor& noise);

enum class Parity { even, odd };
Parity parity_from_string(const std::string& s);
std::string to_string(Parity p);

struct TaSamplerConfig {
    int t_lo = 100;
    int t_hi = 500;
    Parity parity = Parity::even;
    bool enabled = true;

    void validate(int T) const;
    // True when step t performs the rich-only update.
    bool selective(int t) const;
};

using EpsFn = std::function<nn::Tensor(const nn::Tensor& z_t, int t)>;

struct StepInfo {
    int t;
    bool selective;
    const nn::Tensor& before;
    const nn::Tensor& after;
};
using StepObserver = std::function<void(const StepInfo&)>;

// Ancestral sampling from z_T ~ N(0, I). Inside the alternating window, selective
// steps update only latents where mask == 1 and copy the rest unchanged. One noise
// tensor is drawn per step whatever the branch, so trajectories stay aligned.
// Output is clamped to [-1, 1].
nn::Tensor sample(const EpsFn& eps_fn, const nn::Shape& shape, const nn::Tensor& mask, const NoiseSchedule& sched,
                  const TaSamplerConfig& ta, std::uint64_t seed, const StepObserver& observer = {});

// E[eps | z_t] when every latent scalar is independently N(mu0, var0).
nn::Tensor analytic_gaussian_eps(const nn::Tensor& z_t, int t, const NoiseSchedule& sched, double mu0, double var0);

// Pixel-latent codec: 8x area downsample mapped to [-1, 1].
nn::Tensor encode_latent(const Image& hr, int factor = 8);
// LR image area-resized to the latent grid, mapped to [-1, 1].
nn::Tensor lr_condition(const Image& lr, int latent_h, int latent_w);
nn::Tensor mask_tensor(const BinaryMask& mask);
nn::Tensor mask_tensor(const std::vector<BinaryMask>& masks);
BinaryMask tensor_to_mask(const nn::Tensor& mask, int n = 0);
Image decode_latent(const nn::Tensor& z, int n = 0);

// Concatenate along the batch axis (no gradient).
nn::Tensor stack_batch(const std::vector<nn::Tensor>& parts);
nn::Tensor batch_item(const nn::Tensor& batch, int n);

}  // namespace texadiff
