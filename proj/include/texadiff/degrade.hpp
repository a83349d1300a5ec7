#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "texadiff/image.hpp"
#include "texadiff/rng.hpp"
#include "texadiff/rtdm.hpp"
#include "texadiff/tnsr.hpp"

namespace texadiff {

enum class TextureKind { checker, stripes, noise, constant, gradient };

std::string to_string(TextureKind k);
TextureKind texture_kind_from_string(const std::string& s);
// Checker, stripes and noise count as texture-rich.
bool is_rich(TextureKind k);

struct Region {
    int y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // half-open [y0, y1) x [x0, x1)
    TextureKind kind = TextureKind::constant;
    float base = 0.5f;       // mean level
    float amplitude = 0.0f;  // peak-to-peak for textures, ramp span for gradients
    int period = 1;          // cell size in pixels
    bool vertical = false;   // stripes orientation / gradient direction
};

struct SceneSpec {
    int size = 128;
    std::vector<Region> layout;
    std::uint64_t seed = 0;

    void validate(int scale = 4) const;
};

struct Scene {
    Image hr;
    BinaryMask region_mask;  // 1 exactly on texture-rich regions
};

Scene synth_scene(const SceneSpec& spec);

// Random layouts: two-way splits or quadrants on an 8-pixel grid, always containing
// at least one texture-rich and one texture-sparse region.
struct SceneDistribution {
    int size = 128;
    int min_period = 2;
    int max_period = 4;
    float min_amplitude = 0.35f;
    float max_amplitude = 0.6f;
};

SceneSpec random_scene_spec(const SceneDistribution& dist, Rng& rng);

struct DegradeConfig {
    double blur_sigma_lo = 0.4, blur_sigma_hi = 1.6;
    int scale = 4;
    double noise_sigma_lo = 0.0, noise_sigma_hi = 0.04;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Degraded {
    Image lr;
    double blur_sigma = 0.0;
    double noise_sigma = 0.0;
};

// blur (sampled sigma, skipped at 0) -> area downsample -> additive Gaussian noise -> clamp.
Degraded degrade_detailed(const Image& hr, const DegradeConfig& cfg);
Image degrade(const Image& hr, const DegradeConfig& cfg);

Image make_psr(const Image& lr, int scale = 4);

struct DatasetItem {
    SceneSpec spec;
    std::uint64_t degrade_seed = 0;
    double blur_sigma = 0.0;
    double noise_sigma = 0.0;
    double tau = 0.0;
    Image hr, lr, psr;
    TextureMap map;           // continuous M
    BinaryMask latent_mask;   // pooled binarized RTDM
    BinaryMask region_mask;   // ground-truth texture-rich pixels
};

std::vector<DatasetItem> build_dataset(int n_scenes, const SceneDistribution& dist, const DegradeConfig& degrade_cfg,
                                       const RtdmConfig& rtdm_cfg, std::uint64_t master_seed);

// TNSR views: images as (H, W, C), maps and masks as (H, W).
TnsrFile image_tnsr(const Image& img);
Image tnsr_image(const TnsrFile& f);
TnsrFile map_tnsr(const TextureMap& m);
TextureMap tnsr_map(const TnsrFile& f);
TnsrFile mask_tnsr(const BinaryMask& m);
BinaryMask tnsr_mask(const TnsrFile& f, MaskResolution res);

// Directory layout: manifest.json plus scene_XXXX/{hr,lr,psr,mask}.png and {map,mask,region}.tnsr.
void save_dataset(const std::vector<DatasetItem>& items, const std::filesystem::path& dir,
                  std::uint64_t master_seed);
std::vector<DatasetItem> load_dataset(const std::filesystem::path& dir);

}  // namespace texadiff
