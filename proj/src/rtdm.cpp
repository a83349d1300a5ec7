#include "texadiff/rtdm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "texadiff/error.hpp"
#include "texadiff/tnsr.hpp"

namespace texadiff {

float TextureMap::mean() const {
    if (data.empty()) return 0.0f;
    return static_cast<float>(std::accumulate(data.begin(), data.end(), 0.0) / static_cast<double>(data.size()));
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

double BinaryMask::foreground_fraction() const {
    return data.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(data.size());
}

BinaryMask BinaryMask::inverted() const {
    BinaryMask out = *this;
    for (auto& v : out.data) v = v ? 0 : 1;
    return out;
}

void RtdmConfig::validate() const {
    require(0.0 <= tau_lo && tau_lo <= tau_hi && tau_hi <= 1.0, "rtdm: need 0 <= tau_lo <= tau_hi <= 1");
    require(window >= 1 && window % 2 == 1, "rtdm: window must be odd");
    require(sigma > 0.0, "rtdm: sigma must be positive");
    require(c2 >= 0.0, "rtdm: c2 must be non-negative");
    require(morph_radius >= 0, "rtdm: morph_radius must be non-negative");
    require(min_component_area >= 1, "rtdm: min_component_area must be >= 1");
    require(area_reference > 0.0, "rtdm: area_reference must be positive");
    require(pool_factor >= 1, "rtdm: pool_factor must be >= 1");
}

int RtdmConfig::effective_min_area(int h, int w) const {
    const double scaled = min_component_area * (static_cast<double>(h) * w) / area_reference;
    return std::max(1, static_cast<int>(std::lround(scaled)));
}

// ---------------------------------------------------------------------------

TextureMap cct_map(const Image& psr, const Image& hr, const RtdmConfig& cfg) {
    require(psr.same_dims(hr), "cct_map: dimension mismatch");
    const auto s = gaussian_window_stats(to_grayscale(psr), to_grayscale(hr), cfg.window, cfg.sigma);
    TextureMap m(hr.height, hr.width);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        const double sx = std::sqrt(s.var_a[i]);
        const double sy = std::sqrt(s.var_b[i]);
        const double v = (2.0 * sx * sy + cfg.c2) / (s.var_a[i] + s.var_b[i] + cfg.c2);
        m.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return m;
}

namespace {

struct Features {
    std::vector<float> gx, gy, lap;
};

Features filter_bank(const Image& g) {
    const int h = g.height, w = g.width;
    Features f;
    f.gx.resize(g.data.size());
    f.gy.resize(g.data.size());
    f.lap.resize(g.data.size());
    auto px = [&](int y, int x) { return g.at(reflect_index(y, h), reflect_index(x, w)); };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const float c = px(y, x), l = px(y, x - 1), r = px(y, x + 1), u = px(y - 1, x), d = px(y + 1, x);
            f.gx[i] = 0.5f * (r - l);
            f.gy[i] = 0.5f * (d - u);
            f.lap[i] = l + r + u + d - 4.0f * c;
        }
    return f;
}

}  // namespace

TextureMap FilterBankProvider::compute(const Image& psr, const Image& hr) const {
    require(psr.same_dims(hr), "perceptual_map: dimension mismatch");
    const Image a = to_grayscale(psr);
    const Image b = to_grayscale(hr);
    std::vector<double> acc(a.pixel_count(), 0.0);
    int used = 0;
    for (int s = 0; s < scales_; ++s) {
        const int hs = std::max(1, a.height >> s), ws = std::max(1, a.width >> s);
        const Image as = resize(a, hs, ws, ResizeMode::area);
        const Image bs = resize(b, hs, ws, ResizeMode::area);
        const Features fa = filter_bank(as), fb = filter_bank(bs);
        Image dist(hs, ws, 1);
        for (std::size_t i = 0; i < dist.data.size(); ++i) {
            const float dx = fa.gx[i] - fb.gx[i], dy = fa.gy[i] - fb.gy[i], dl = fa.lap[i] - fb.lap[i];
            dist.data[i] = std::sqrt(dx * dx + dy * dy + dl * dl);
        }
        const Image up = resize(dist, a.height, a.width, ResizeMode::bilinear);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += up.data[i];
        ++used;
    }
    TextureMap m(a.height, a.width);
    for (std::size_t i = 0; i < acc.size(); ++i)
        m.data[i] = static_cast<float>(std::clamp(acc[i] / used / saturation_, 0.0, 1.0));
    return m;
}

TextureMap ExternalMapProvider::compute(const Image& psr, const Image& hr) const {
    require(psr.same_dims(hr), "perceptual_map: dimension mismatch");
    const TnsrFile f = read_tnsr(path_);
    if (f.dims.size() != 2 || static_cast<int>(f.dims[0]) != hr.height || static_cast<int>(f.dims[1]) != hr.width)
        throw ContractError("external perceptual map " + path_.string() + " does not match image dimensions");
    TextureMap m(hr.height, hr.width);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        const float v = f.data[i];
        m.data[i] = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
    }
    return m;
}

TextureMap perceptual_map(const Image& psr, const Image& hr, const PerceptualProvider& provider) {
    require(psr.same_dims(hr), "perceptual_map: dimension mismatch");
    return provider.compute(psr, hr);
}

TextureMap combine(const TextureMap& m_sl, const TextureMap& m_cct) {
    require(m_sl.same_dims(m_cct), "combine: dimension mismatch");
    TextureMap m(m_sl.height, m_sl.width);
    for (std::size_t i = 0; i < m.data.size(); ++i)
        m.data[i] = std::clamp((1.0f - m_sl.data[i]) * m_cct.data[i], 0.0f, 1.0f);
    return m;
}

BinaryMask binarize(const TextureMap& m, double tau) {
    require(tau >= 0.0 && tau <= 1.0, "binarize: tau must lie in [0, 1]");
    BinaryMask out(m.height, m.width);
    for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = static_cast<double>(m.data[i]) <= tau ? 1 : 0;
    return out;
}

double sample_tau(const RtdmConfig& cfg, Rng& rng) {
    cfg.validate();
    if (cfg.tau_lo == cfg.tau_hi) return cfg.tau_lo;
    return std::min(cfg.tau_hi, rng.uniform(cfg.tau_lo, cfg.tau_hi));
}

// ---------------------------------------------------------------------------
// Morphology. Square structuring element; outside the field counts as background.

BinaryMask erode(const BinaryMask& mask, int radius) {
    BinaryMask out = mask;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            std::uint8_t v = 1;
            for (int dy = -radius; dy <= radius && v; ++dy)
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= mask.height || xx < 0 || xx >= mask.width || !mask.at(yy, xx)) {
                        v = 0;
                        break;
                    }
                }
            out.at(y, x) = v;
        }
    return out;
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
    BinaryMask out = mask;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            std::uint8_t v = 0;
            for (int dy = -radius; dy <= radius && !v; ++dy)
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy >= 0 && yy < mask.height && xx >= 0 && xx < mask.width && mask.at(yy, xx)) {
                        v = 1;
                        break;
                    }
                }
            out.at(y, x) = v;
        }
    return out;
}

BinaryMask remove_small_components(const BinaryMask& mask, int min_area) {
    BinaryMask out = mask;
    std::vector<std::uint8_t> seen(mask.data.size(), 0);
    std::vector<int> stack, component;
    const int w = mask.width;
    for (std::size_t start = 0; start < mask.data.size(); ++start) {
        if (!mask.data[start] || seen[start]) continue;
        component.clear();
        stack.assign(1, static_cast<int>(start));
        seen[start] = 1;
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            component.push_back(p);
            const int y = p / w, x = p % w;
            const int nbr[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
            for (const auto& n : nbr) {
                if (n[0] < 0 || n[0] >= mask.height || n[1] < 0 || n[1] >= w) continue;
                const int q = n[0] * w + n[1];
                if (mask.data[q] && !seen[q]) {
                    seen[q] = 1;
                    stack.push_back(q);
                }
            }
        }
        if (static_cast<int>(component.size()) < min_area)
            for (int p : component) out.data[p] = 0;
    }
    return out;
}

BinaryMask postprocess(const BinaryMask& mask, const RtdmConfig& cfg) {
    require(mask.resolution == MaskResolution::pixel, "postprocess: expects a pixel-resolution mask");
    BinaryMask opened = dilate(erode(mask, cfg.morph_radius), cfg.morph_radius);
    return remove_small_components(opened, cfg.effective_min_area(mask.height, mask.width));
}

BinaryMask downsample_pool(const BinaryMask& mask, int factor) {
    require(factor >= 1, "downsample_pool: factor must be >= 1");
    require(mask.height % factor == 0 && mask.width % factor == 0,
            "downsample_pool: mask dimensions not divisible by factor");
    BinaryMask out(mask.height / factor, mask.width / factor, 0, MaskResolution::latent);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(y, x)) out.at(y / factor, x / factor) = 1;
    return out;
}

BinaryMask upsample_nearest(const BinaryMask& mask, int factor) {
    BinaryMask out(mask.height * factor, mask.width * factor, 0, MaskResolution::pixel);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) out.at(y, x) = mask.at(y / factor, x / factor);
    return out;
}

BinaryMask mask_from_map(const TextureMap& m, double tau, const RtdmConfig& cfg) {
    return downsample_pool(postprocess(binarize(m, tau), cfg), cfg.pool_factor);
}

RtdmResult estimate_rtdm(const Image& lr, const Image& hr, const RtdmConfig& cfg, double tau,
                         const PerceptualProvider& provider, const std::optional<Image>& psr_override) {
    cfg.validate();
    require(hr.height % cfg.pool_factor == 0 && hr.width % cfg.pool_factor == 0,
            "estimate_rtdm: HR dimensions must be divisible by " + std::to_string(cfg.pool_factor));
    require(lr.height >= 1 && lr.width >= 1 && hr.height % lr.height == 0 && hr.width % lr.width == 0 &&
                hr.height / lr.height == hr.width / lr.width,
            "estimate_rtdm: LR dimensions must be HR dimensions divided by an integer scale");
    RtdmResult r;
    if (psr_override) {
        require(psr_override->same_dims(hr), "estimate_rtdm: PSR override must match HR dimensions");
        r.psr = *psr_override;
    } else {
        r.psr = resize(lr, hr.height, hr.width, ResizeMode::bicubic);
    }
    const TextureMap m_cct = cct_map(r.psr, hr, cfg);
    const TextureMap m_sl = perceptual_map(r.psr, hr, provider);
    r.map = combine(m_sl, m_cct);
    r.pixel = binarize(r.map, tau);
    r.latent = downsample_pool(postprocess(r.pixel, cfg), cfg.pool_factor);
    return r;
}

Image map_to_image(const TextureMap& m) { return Image(m.height, m.width, 1, m.data); }

Image mask_to_image(const BinaryMask& m) {
    Image img(m.height, m.width, 1);
    for (std::size_t i = 0; i < m.data.size(); ++i) img.data[i] = m.data[i] ? 1.0f : 0.0f;
    return img;
}

BinaryMask image_to_mask(const Image& img, MaskResolution res) {
    const Image g = to_grayscale(img);
    BinaryMask m(g.height, g.width, 0, res);
    for (std::size_t i = 0; i < g.data.size(); ++i) m.data[i] = g.data[i] >= 0.5f ? 1 : 0;
    return m;
}

}  // namespace texadiff
