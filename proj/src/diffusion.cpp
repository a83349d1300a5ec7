#include "texadiff/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "texadiff/error.hpp"
#include "texadiff/nn/ops.hpp"
#include "texadiff/rng.hpp"

namespace texadiff {

using nn::Tensor;

void NoiseSchedule::check_t(int t) const {
    if (t < 1 || t > T)
        throw ContractError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
}

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    require(T >= 1, "schedule needs T >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ContractError("invalid beta bounds: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        s.beta[i] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (T - 1);
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    sched.check_t(t);
    require(z0.shape() == eps.shape(), "q_sample: eps shape " + nn::shape_str(eps.shape()) + " != z0 shape " +
                                           nn::shape_str(z0.shape()));
    const double ab = sched.alpha_bar_at(t);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    std::vector<nn::real> out(z0.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z0.data()[i] + b * eps.data()[i];
    return Tensor::from(z0.shape(), std::move(out));
}

namespace {

void check_mask(const Tensor& eps, const Tensor& mask) {
    require(eps.ndim() == 4 && mask.ndim() == 4, "tadl_loss: expected 4-D tensors");
    require(mask.dim(0) == eps.dim(0) && mask.dim(1) == 1 && mask.dim(2) == eps.dim(2) && mask.dim(3) == eps.dim(3),
            "tadl_loss: mask " + nn::shape_str(mask.shape()) + " does not match residual " +
                nn::shape_str(eps.shape()));
    for (nn::real v : mask.data()) require(v == 0.0 || v == 1.0, "tadl_loss: mask must be binary");
}

}  // namespace

Tensor tadl_loss(const Tensor& eps, const Tensor& eps_pred, const Tensor& mask, double alpha_w) {
    require(eps.shape() == eps_pred.shape(), "tadl_loss: eps and eps_pred shapes differ");
    require(alpha_w >= 0.0, "tadl_loss: alpha_w must be >= 0");
    check_mask(eps, mask);
    std::vector<nn::real> w(mask.numel());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 + alpha_w * mask.data()[i];
    return nn::weighted_mse(eps, eps_pred, Tensor::from(mask.shape(), std::move(w)));
}

Tensor tadl_loss(const Tensor& eps, const Tensor& eps_pred, const BinaryMask& mask, double alpha_w) {
    require(eps.ndim() == 4 && eps.dim(0) == 1, "tadl_loss: single-mask overload needs batch size 1");
    return tadl_loss(eps, eps_pred, mask_tensor(mask), alpha_w);
}

double masked_mse(const Tensor& eps, const Tensor& eps_pred, const Tensor& mask, bool rich) {
    check_mask(eps, mask);
    const int n = eps.dim(0), c = eps.dim(1);
    const std::size_t hw = static_cast<std::size_t>(eps.dim(2)) * eps.dim(3);
    double s = 0.0;
    std::size_t count = 0;
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
            for (std::size_t p = 0; p < hw; ++p) {
                if ((mask.data()[i * hw + p] == 1.0) != rich) continue;
                const std::size_t k = (static_cast<std::size_t>(i) * c + ch) * hw + p;
                const double r = eps.data()[k] - eps_pred.data()[k];
                s += r * r;
                ++count;
            }
    return count ? s / static_cast<double>(count) : 0.0;
}

Tensor ddpm_step(const Tensor& z_t, const Tensor& eps_pred, int t, const NoiseSchedule& sched, const Tensor& noise) {
    sched.check_t(t);
    require(z_t.shape() == eps_pred.shape(), "ddpm_step: eps_pred shape differs from z_t");
    require(t == 1 || noise.shape() == z_t.shape(), "ddpm_step: noise shape differs from z_t");
    const double beta = sched.beta_at(t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha_at(t));
    const double coef = beta / std::sqrt(1.0 - sched.alpha_bar_at(t));
    const double sigma = t > 1 ? std::sqrt(beta) : 0.0;
    std::vector<nn::real> out(z_t.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = inv_sqrt_alpha * (z_t.data()[i] - coef * eps_pred.data()[i]);
        if (t > 1) out[i] += sigma * noise.data()[i];
    }
    return Tensor::from(z_t.shape(), std::move(out));
}

Parity parity_from_string(const std::string& s) {
    if (s == "even") return Parity::even;
    if (s == "odd") return Parity::odd;
    throw ConfigError("parity must be 'even' or 'odd', got '" + s + "'");
}

std::string to_string(Parity p) { return p == Parity::even ? "even" : "odd"; }

void TaSamplerConfig::validate(int T) const {
    if (!(0 <= t_lo && t_lo < t_hi && t_hi <= T))
        throw ConfigError("sampling window [" + std::to_string(t_lo) + ", " + std::to_string(t_hi) +
                          "] must satisfy 0 <= t_lo < t_hi <= " + std::to_string(T));
}

bool TaSamplerConfig::selective(int t) const {
    if (!enabled || t < t_lo || t > t_hi) return false;
    const bool even = (t_hi - t) % 2 == 0;
    return even == (parity == Parity::even);
}

Tensor sample(const EpsFn& eps_fn, const nn::Shape& shape, const Tensor& mask, const NoiseSchedule& sched,
              const TaSamplerConfig& ta, std::uint64_t seed, const StepObserver& observer) {
    require(shape.size() == 4, "sample: latent shape must be (N, C, H, W)");
    if (ta.enabled) {
        ta.validate(sched.T);
        require(mask.defined() && mask.ndim() == 4 && mask.dim(0) == shape[0] && mask.dim(1) == 1 &&
                    mask.dim(2) == shape[2] && mask.dim(3) == shape[3],
                "sample: mask must be (N, 1, H, W) matching the latent grid");
        for (nn::real v : mask.data()) require(v == 0.0 || v == 1.0, "sample: mask must be binary");
    }
    nn::NoGradGuard no_grad;
    Rng rng(seed);
    Tensor z = Tensor::randn(shape, rng);
    const int c = shape[1];
    const std::size_t hw = static_cast<std::size_t>(shape[2]) * shape[3];
    for (int t = sched.T; t >= 1; --t) {
        Tensor eps = eps_fn(z, t);
        if (!eps.defined() || eps.shape() != z.shape())
            throw ContractError("sample: predictor output shape differs from the latent");
        Tensor noise = Tensor::randn(shape, rng);
        Tensor next = ddpm_step(z, eps, t, sched, noise);
        const bool sel = ta.selective(t);
        if (sel) {
            auto nv = next.data();
            const auto zv = z.data();
            const auto mv = mask.data();
            for (int n = 0; n < shape[0]; ++n)
                for (int ch = 0; ch < c; ++ch)
                    for (std::size_t p = 0; p < hw; ++p) {
                        const std::size_t k = (static_cast<std::size_t>(n) * c + ch) * hw + p;
                        nv[k] = mv[n * hw + p] == 1.0 ? nv[k] : zv[k];
                    }
        }
        for (nn::real v : next.data())
            if (!std::isfinite(v)) throw NumericError("sample: non-finite latent at t=" + std::to_string(t));
        if (observer) observer(StepInfo{t, sel, z, next});
        z = next;
    }
    for (auto& v : z.data()) v = std::clamp(v, -1.0, 1.0);
    return z;
}

Tensor analytic_gaussian_eps(const Tensor& z_t, int t, const NoiseSchedule& sched, double mu0, double var0) {
    sched.check_t(t);
    if (var0 < 0.0) throw ContractError("analytic_gaussian_eps: var0 must be >= 0");
    const double ab = sched.alpha_bar_at(t);
    const double sab = std::sqrt(ab);
    const double gain = sab * var0 / (ab * var0 + 1.0 - ab);
    const double s = std::sqrt(1.0 - ab);
    std::vector<nn::real> out(z_t.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double z = z_t.data()[i];
        const double m_post = var0 == 0.0 ? mu0 : mu0 + gain * (z - sab * mu0);
        out[i] = (z - sab * m_post) / s;
    }
    return Tensor::from(z_t.shape(), std::move(out));
}

namespace {

Tensor image_to_tensor(const Image& img) {
    std::vector<nn::real> v(img.data.size());
    const std::size_t hw = static_cast<std::size_t>(img.height) * img.width;
    // Image is interleaved HWC; tensors are planar CHW.
    for (int c = 0; c < img.channels; ++c)
        for (std::size_t p = 0; p < hw; ++p) v[c * hw + p] = 2.0 * img.data[p * img.channels + c] - 1.0;
    return Tensor::from({1, img.channels, img.height, img.width}, std::move(v));
}

}  // namespace

Tensor encode_latent(const Image& hr, int factor) {
    require(factor >= 1 && hr.height % factor == 0 && hr.width % factor == 0,
            "encode_latent: image dims must be divisible by " + std::to_string(factor));
    return image_to_tensor(resize(hr, hr.height / factor, hr.width / factor, ResizeMode::area));
}

Tensor lr_condition(const Image& lr, int latent_h, int latent_w) {
    return image_to_tensor(resize(lr, latent_h, latent_w, ResizeMode::area));
}

Tensor mask_tensor(const BinaryMask& mask) {
    std::vector<nn::real> v(mask.data.begin(), mask.data.end());
    return Tensor::from({1, 1, mask.height, mask.width}, std::move(v));
}

Tensor mask_tensor(const std::vector<BinaryMask>& masks) {
    std::vector<Tensor> parts;
    for (const auto& m : masks) parts.push_back(mask_tensor(m));
    return stack_batch(parts);
}

BinaryMask tensor_to_mask(const Tensor& mask, int n) {
    require(mask.ndim() == 4 && mask.dim(1) == 1 && n >= 0 && n < mask.dim(0), "tensor_to_mask: bad shape");
    BinaryMask out(mask.dim(2), mask.dim(3), 0, MaskResolution::latent);
    const std::size_t hw = out.data.size();
    for (std::size_t p = 0; p < hw; ++p) out.data[p] = mask.data()[n * hw + p] >= 0.5 ? 1 : 0;
    return out;
}

Image decode_latent(const Tensor& z, int n) {
    require(z.ndim() == 4 && n >= 0 && n < z.dim(0), "decode_latent: expected (N, C, H, W)");
    const int c = z.dim(1), h = z.dim(2), w = z.dim(3);
    Image img(h, w, c);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < hw; ++p) {
            const double v = (z.data()[(static_cast<std::size_t>(n) * c + ch) * hw + p] + 1.0) * 0.5;
            img.data[p * c + ch] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    return img;
}

Tensor stack_batch(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "stack_batch: no tensors");
    nn::Shape shape = parts.front().shape();
    require(shape.size() == 4, "stack_batch: expected 4-D tensors");
    std::vector<nn::real> out;
    int n = 0;
    for (const auto& p : parts) {
        require(p.ndim() == 4 && p.dim(1) == shape[1] && p.dim(2) == shape[2] && p.dim(3) == shape[3],
                "stack_batch: mismatched shapes");
        out.insert(out.end(), p.data().begin(), p.data().end());
        n += p.dim(0);
    }
    shape[0] = n;
    return Tensor::from(shape, std::move(out));
}

Tensor batch_item(const Tensor& batch, int n) {
    require(batch.ndim() == 4 && n >= 0 && n < batch.dim(0), "batch_item: index out of range");
    const std::size_t sz = batch.numel() / batch.dim(0);
    std::vector<nn::real> v(batch.data().begin() + n * sz, batch.data().begin() + (n + 1) * sz);
    return Tensor::from({1, batch.dim(1), batch.dim(2), batch.dim(3)}, std::move(v));
}

}  // namespace texadiff
