#include "texadiff/predictor.hpp"

#include <algorithm>
#include <cmath>

#include "texadiff/diffusion.hpp"
#include "texadiff/error.hpp"
#include "texadiff/metrics.hpp"
#include "texadiff/nn/ops.hpp"

namespace texadiff {

using nn::Tensor;

Tensor gated_fuse(const Tensor& f_lr, const Tensor& f_psr, const nn::Conv2d& gate) {
    require(f_lr.defined() && f_psr.defined() && f_lr.shape() == f_psr.shape(),
            "gated_fuse: branch features must have the same shape");
    Tensor g = nn::sigmoid(gate(nn::concat_channels(f_lr, f_psr)));
    require(g.shape() == f_lr.shape(), "gated_fuse: gate output shape differs from the features");
    // g*a + (1-g)*b written as b + g*(a-b)
    return f_psr + g * (f_lr - f_psr);
}

PredictorModel::PredictorModel(const PredictorConfig& cfg) : cfg_(cfg) {
    Rng rng(cfg.seed);
    const int w = cfg.width, c = cfg.in_channels;
    lr1 = nn::Conv2d(params_, "lr.enc1", c, w, 3, rng);
    lr2 = nn::Conv2d(params_, "lr.enc2", w, 2 * w, 3, rng, 2, 1);
    psr1 = nn::Conv2d(params_, "psr.enc1", c, w, 3, rng);
    psr2 = nn::Conv2d(params_, "psr.enc2", w, 2 * w, 3, rng, 2, 1);
    gate1 = nn::Conv2d(params_, "gate1", 2 * w, w, 1, rng);
    gate2 = nn::Conv2d(params_, "gate2", 4 * w, 2 * w, 1, rng);
    dec2 = nn::Conv2d(params_, "dec.conv2", 2 * w, 2 * w, 3, rng);
    dec1 = nn::Conv2d(params_, "dec.conv1", 3 * w, w, 3, rng);
    head = nn::Conv2d(params_, "dec.head", w, 1, 1, rng, 1, 0, true);
}

Tensor PredictorModel::forward(const Tensor& lr_up, const Tensor& psr) const {
    require(lr_up.ndim() == 4 && lr_up.shape() == psr.shape(), "predictor: LR and PSR tensors must match");
    require(lr_up.dim(1) == cfg_.in_channels, "predictor: channel count mismatch");
    require(lr_up.dim(2) % 2 == 0 && lr_up.dim(3) % 2 == 0, "predictor: spatial dims must be even");
    Tensor a1 = nn::silu(lr1(lr_up)), b1 = nn::silu(psr1(psr));
    Tensor a2 = nn::silu(lr2(a1)), b2 = nn::silu(psr2(b1));
    Tensor f1 = gated_fuse(a1, b1, gate1);
    Tensor f2 = gated_fuse(a2, b2, gate2);
    Tensor d = nn::silu(dec2(f2));
    d = nn::silu(dec1(nn::concat_channels(nn::upsample_nearest2(d), f1)));
    return nn::sigmoid(head(d));
}

namespace {

Tensor to_input(const Image& img) {
    const std::size_t hw = img.pixel_count();
    std::vector<nn::real> v(img.data.size());
    for (int c = 0; c < img.channels; ++c)
        for (std::size_t p = 0; p < hw; ++p) v[c * hw + p] = 2.0 * img.data[p * img.channels + c] - 1.0;
    return Tensor::from({1, img.channels, img.height, img.width}, std::move(v));
}

Image upsample_lr(const Image& lr, const Image& psr) {
    require(lr.channels == psr.channels, "predictor: LR and PSR channel counts differ");
    require(psr.height % lr.height == 0 && psr.width % lr.width == 0 &&
                psr.height / lr.height == psr.width / lr.width,
            "predictor: PSR dims must be an integer multiple of LR dims");
    return resize(lr, psr.height, psr.width, ResizeMode::bicubic);
}

}  // namespace

TextureMap predict_rtdm(const PredictorModel& model, const Image& lr, const Image& psr) {
    Image up = upsample_lr(lr, psr);
    nn::NoGradGuard no_grad;
    Tensor out = model.forward(to_input(up), to_input(psr));
    TextureMap m(psr.height, psr.width);
    for (std::size_t i = 0; i < m.data.size(); ++i)
        m.data[i] = static_cast<float>(std::clamp(out.data()[i], 0.0, 1.0));
    return m;
}

BinaryMask predict_latent_mask(const PredictorModel& model, const Image& lr, const Image& psr, double tau,
                               const RtdmConfig& cfg) {
    return mask_from_map(predict_rtdm(model, lr, psr), tau, cfg);
}

PredictorExample make_predictor_example(const Image& lr, const Image& psr, const TextureMap& target) {
    require(target.height == psr.height && target.width == psr.width, "predictor example: target dims differ from PSR");
    PredictorExample ex;
    ex.lr_up = to_input(upsample_lr(lr, psr));
    ex.psr = to_input(psr);
    std::vector<nn::real> t(target.data.begin(), target.data.end());
    ex.target = Tensor::from({1, 1, target.height, target.width}, std::move(t));
    return ex;
}

std::vector<PredictorExample> make_predictor_examples(const std::vector<DatasetItem>& items) {
    std::vector<PredictorExample> out;
    for (const auto& it : items) out.push_back(make_predictor_example(it.lr, it.psr, it.map));
    return out;
}

void PredictorTrainConfig::validate() const {
    if (steps < 0) throw ConfigError("predictor.steps must be >= 0");
    if (batch_size < 1) throw ConfigError("predictor.batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("predictor.lr must be > 0");
    if (crop < 0 || crop % 8 != 0) throw ConfigError("predictor.crop must be 0 or a positive multiple of 8");
}

namespace {

Tensor crop_tensor(const Tensor& t, int y0, int x0, int size) {
    const int c = t.dim(1), h = t.dim(2), w = t.dim(3);
    const auto src = t.data();
    std::vector<nn::real> out(static_cast<std::size_t>(c) * size * size);
    for (int k = 0; k < c; ++k)
        for (int y = 0; y < size; ++y) {
            const nn::real* row = src.data() + (static_cast<std::size_t>(k) * h + y0 + y) * w + x0;
            std::copy(row, row + size, out.begin() + (static_cast<std::ptrdiff_t>(k) * size + y) * size);
        }
    return Tensor::from({1, c, size, size}, std::move(out));
}

// One of the 8 square symmetries: optional transpose, then optional flips.
Tensor dihedral(const Tensor& t, int code) {
    if (code == 0) return t;
    const int c = t.dim(1), n = t.dim(2);
    const bool tr = code & 1, fy = code & 2, fx = code & 4;
    const auto src = t.data();
    std::vector<nn::real> out(src.size());
    for (int k = 0; k < c; ++k)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                int sy = fy ? n - 1 - y : y, sx = fx ? n - 1 - x : x;
                if (tr) std::swap(sy, sx);
                out[(static_cast<std::size_t>(k) * n + y) * n + x] = src[(static_cast<std::size_t>(k) * n + sy) * n + sx];
            }
    return Tensor::from({1, c, n, n}, std::move(out));
}

}  // namespace

std::vector<double> train_predictor(PredictorModel& model, const std::vector<PredictorExample>& data,
                                    const PredictorTrainConfig& cfg) {
    cfg.validate();
    require(!data.empty(), "train_predictor: empty dataset");
    nn::OptimizerState opt;
    opt.cfg.lr = cfg.lr;
    Rng rng(cfg.seed);
    std::vector<double> log;
    for (int step = 1; step <= cfg.steps; ++step) {
        std::vector<Tensor> lrs, psrs, tgts;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& ex = data[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(data.size()) - 1))];
            const int h = ex.psr.dim(2), w = ex.psr.dim(3);
            if (cfg.crop == 0 || (cfg.crop >= h && cfg.crop >= w)) {
                lrs.push_back(ex.lr_up);
                psrs.push_back(ex.psr);
                tgts.push_back(ex.target);
                continue;
            }
            require(cfg.crop <= h && cfg.crop <= w, "train_predictor: crop larger than a scene");
            const int y0 = 8 * static_cast<int>(rng.integer(0, (h - cfg.crop) / 8));
            const int x0 = 8 * static_cast<int>(rng.integer(0, (w - cfg.crop) / 8));
            const int code = cfg.augment ? static_cast<int>(rng.integer(0, 7)) : 0;
            lrs.push_back(dihedral(crop_tensor(ex.lr_up, y0, x0, cfg.crop), code));
            psrs.push_back(dihedral(crop_tensor(ex.psr, y0, x0, cfg.crop), code));
            tgts.push_back(dihedral(crop_tensor(ex.target, y0, x0, cfg.crop), code));
        }
        model.params().zero_grad();
        Tensor loss = nn::l1(stack_batch(tgts), model.forward(stack_batch(lrs), stack_batch(psrs)));
        if (!std::isfinite(loss.item()))
            throw NumericError("non-finite predictor loss at step " + std::to_string(step));
        loss.backward();
        nn::adam_step(model.params(), opt);
        log.push_back(loss.item());
    }
    model.params().zero_grad();
    return log;
}

double rtdm_accuracy(const BinaryMask& pred, const BinaryMask& oracle) {
    require(pred.same_dims(oracle), "rtdm_accuracy: mask dimensions differ");
    return mask_accuracy(pred, oracle);
}

double majority_baseline(const BinaryMask& oracle) {
    if (oracle.data.empty()) return 100.0;
    const double fg = oracle.foreground_fraction();
    return 100.0 * std::max(fg, 1.0 - fg);
}

}  // namespace texadiff
