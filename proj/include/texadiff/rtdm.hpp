#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "texadiff/image.hpp"
#include "texadiff/rng.hpp"

namespace texadiff {

// Continuous per-pixel map in [0, 1].
struct TextureMap {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    TextureMap() = default;
    TextureMap(int h, int w, float fill = 0.0f) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}
    float& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
    bool same_dims(const TextureMap& o) const { return height == o.height && width == o.width; }
    float mean() const;
};

enum class MaskResolution { pixel, latent };

// Strictly binary mask; 1 marks texture-rich.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;
    MaskResolution resolution = MaskResolution::pixel;

    BinaryMask() = default;
    BinaryMask(int h, int w, std::uint8_t fill = 0, MaskResolution res = MaskResolution::pixel)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill), resolution(res) {}
    std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
    bool same_dims(const BinaryMask& o) const { return height == o.height && width == o.width; }
    std::size_t count() const;
    double foreground_fraction() const;
    BinaryMask inverted() const;
};

struct RtdmConfig {
    double tau_lo = 0.35;
    double tau_hi = 0.40;
    int window = 11;
    double sigma = 1.5;
    double c2 = 0.03 * 0.03;
    int morph_radius = 1;
    // Minimum component area stated at the reference area and scaled to the input.
    int min_component_area = 64;
    double area_reference = 512.0 * 512.0;
    int pool_factor = 8;

    void validate() const;
    int effective_min_area(int h, int w) const;
};

// Source of the per-pixel perceptual divergence map (higher = more different).
class PerceptualProvider {
public:
    virtual ~PerceptualProvider() = default;
    virtual TextureMap compute(const Image& psr, const Image& hr) const = 0;
};

// Fixed multi-scale filter bank: horizontal/vertical gradients and a Laplacian at
// scales 1, 1/2, 1/4; per-scale L2 feature distance, bilinear upsampling, mean over
// scales, divided by a saturation constant and clamped.
class FilterBankProvider : public PerceptualProvider {
public:
    explicit FilterBankProvider(int scales = 3, double saturation = 0.5) : scales_(scales), saturation_(saturation) {}
    TextureMap compute(const Image& psr, const Image& hr) const override;

private:
    int scales_;
    double saturation_;
};

// Map computed elsewhere, stored as a 2-D TNSR file of H x W floats.
class ExternalMapProvider : public PerceptualProvider {
public:
    explicit ExternalMapProvider(std::filesystem::path path) : path_(std::move(path)) {}
    TextureMap compute(const Image& psr, const Image& hr) const override;

private:
    std::filesystem::path path_;
};

TextureMap cct_map(const Image& psr, const Image& hr, const RtdmConfig& cfg = {});
TextureMap perceptual_map(const Image& psr, const Image& hr, const PerceptualProvider& provider);
TextureMap combine(const TextureMap& m_sl, const TextureMap& m_cct);
BinaryMask binarize(const TextureMap& m, double tau);
double sample_tau(const RtdmConfig& cfg, Rng& rng);

BinaryMask erode(const BinaryMask& mask, int radius);
BinaryMask dilate(const BinaryMask& mask, int radius);
BinaryMask remove_small_components(const BinaryMask& mask, int min_area);
BinaryMask postprocess(const BinaryMask& mask, const RtdmConfig& cfg);
BinaryMask downsample_pool(const BinaryMask& mask, int factor = 8);
// Nearest-neighbour expansion of a latent mask back to pixel resolution.
BinaryMask upsample_nearest(const BinaryMask& mask, int factor = 8);

struct RtdmResult {
    Image psr;
    TextureMap map;       // continuous M
    BinaryMask pixel;     // binarize(M, tau) before post-processing
    BinaryMask latent;    // pooled post-processed mask
};

// Binarize -> post-process -> pool, shared by the estimation and prediction paths.
BinaryMask mask_from_map(const TextureMap& m, double tau, const RtdmConfig& cfg);

RtdmResult estimate_rtdm(const Image& lr, const Image& hr, const RtdmConfig& cfg, double tau,
                         const PerceptualProvider& provider, const std::optional<Image>& psr_override = std::nullopt);

Image map_to_image(const TextureMap& m);
Image mask_to_image(const BinaryMask& m);
BinaryMask image_to_mask(const Image& img, MaskResolution res);

}  // namespace texadiff
