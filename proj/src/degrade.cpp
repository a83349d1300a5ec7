#include "texadiff/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "texadiff/error.hpp"
#include "texadiff/tnsr.hpp"

namespace texadiff {

using nlohmann::json;

std::string to_string(TextureKind k) {
    switch (k) {
        case TextureKind::checker: return "checker";
        case TextureKind::stripes: return "stripes";
        case TextureKind::noise: return "noise";
        case TextureKind::constant: return "constant";
        case TextureKind::gradient: return "gradient";
    }
    return "constant";
}

TextureKind texture_kind_from_string(const std::string& s) {
    if (s == "checker") return TextureKind::checker;
    if (s == "stripes") return TextureKind::stripes;
    if (s == "noise" || s == "noise-texture") return TextureKind::noise;
    if (s == "constant") return TextureKind::constant;
    if (s == "gradient") return TextureKind::gradient;
    throw ConfigError("unknown texture kind '" + s + "'");
}

bool is_rich(TextureKind k) {
    return k == TextureKind::checker || k == TextureKind::stripes || k == TextureKind::noise;
}

void SceneSpec::validate(int scale) const {
    require(size > 0 && size % 8 == 0 && size % scale == 0, "scene size must be divisible by 8 and by the scale");
    std::vector<int> cover(static_cast<std::size_t>(size) * size, 0);
    for (const auto& r : layout) {
        require(0 <= r.y0 && r.y0 < r.y1 && r.y1 <= size && 0 <= r.x0 && r.x0 < r.x1 && r.x1 <= size,
                "scene region out of bounds");
        require(r.period >= 1, "scene region period must be >= 1");
        for (int y = r.y0; y < r.y1; ++y)
            for (int x = r.x0; x < r.x1; ++x) ++cover[static_cast<std::size_t>(y) * size + x];
    }
    for (int c : cover) require(c == 1, "scene regions must tile the image without overlap");
}

Scene synth_scene(const SceneSpec& spec) {
    spec.validate(1);
    Scene s{Image(spec.size, spec.size, 1), BinaryMask(spec.size, spec.size)};
    Rng rng(spec.seed);
    for (const auto& r : spec.layout) {
        const int h = r.y1 - r.y0, w = r.x1 - r.x0;
        const int cells_y = (h + r.period - 1) / r.period, cells_x = (w + r.period - 1) / r.period;
        std::vector<float> cell_noise;
        if (r.kind == TextureKind::noise) {
            cell_noise.resize(static_cast<std::size_t>(cells_y) * cells_x);
            for (auto& v : cell_noise) v = static_cast<float>(rng.uniform(-0.5, 0.5));
        }
        for (int y = r.y0; y < r.y1; ++y)
            for (int x = r.x0; x < r.x1; ++x) {
                const int cy = (y - r.y0) / r.period, cx = (x - r.x0) / r.period;
                float v = r.base;
                switch (r.kind) {
                    case TextureKind::checker: v += ((cy + cx) % 2 ? 0.5f : -0.5f) * r.amplitude; break;
                    case TextureKind::stripes: v += (((r.vertical ? cx : cy) % 2) ? 0.5f : -0.5f) * r.amplitude; break;
                    case TextureKind::noise: v += cell_noise[static_cast<std::size_t>(cy) * cells_x + cx] * r.amplitude; break;
                    case TextureKind::constant: break;
                    case TextureKind::gradient: {
                        const float t = r.vertical ? (y - r.y0 + 0.5f) / h : (x - r.x0 + 0.5f) / w;
                        v += (t - 0.5f) * r.amplitude;
                        break;
                    }
                }
                s.hr.at(y, x) = std::clamp(v, 0.0f, 1.0f);
                s.region_mask.at(y, x) = is_rich(r.kind) ? 1 : 0;
            }
    }
    return s;
}

SceneSpec random_scene_spec(const SceneDistribution& dist, Rng& rng) {
    const int n = dist.size;
    require(n % 8 == 0 && n >= 64, "scene size must be a multiple of 8 and at least 64");
    const int cells = n / 8;
    auto split = [&] { return 8 * static_cast<int>(rng.integer(cells / 4, cells - cells / 4)); };

    SceneSpec spec;
    spec.size = n;
    spec.seed = rng.next();
    std::vector<Region> rects;
    switch (rng.integer(0, 2)) {
        case 0: {
            const int x = split();
            rects = {{0, 0, n, x}, {0, x, n, n}};
            break;
        }
        case 1: {
            const int y = split();
            rects = {{0, 0, y, n}, {y, 0, n, n}};
            break;
        }
        default: {
            const int y = split(), x = split();
            rects = {{0, 0, y, x}, {0, x, y, n}, {y, 0, n, x}, {y, x, n, n}};
            break;
        }
    }
    // At least one rich and one sparse region.
    std::vector<bool> rich(rects.size());
    do {
        for (std::size_t i = 0; i < rich.size(); ++i) rich[i] = rng.uniform() < 0.5;
    } while (std::all_of(rich.begin(), rich.end(), [](bool b) { return b; }) ||
             std::none_of(rich.begin(), rich.end(), [](bool b) { return b; }));

    for (std::size_t i = 0; i < rects.size(); ++i) {
        Region r = rects[i];
        r.vertical = rng.uniform() < 0.5;
        if (rich[i]) {
            static constexpr TextureKind kinds[] = {TextureKind::checker, TextureKind::stripes, TextureKind::noise};
            r.kind = kinds[rng.integer(0, 2)];
            r.amplitude = static_cast<float>(rng.uniform(dist.min_amplitude, dist.max_amplitude));
            r.period = static_cast<int>(rng.integer(dist.min_period, dist.max_period));
            r.base = static_cast<float>(rng.uniform(0.35, 0.65));
        } else {
            r.kind = rng.uniform() < 0.5 ? TextureKind::constant : TextureKind::gradient;
            r.amplitude = r.kind == TextureKind::gradient ? static_cast<float>(rng.uniform(0.05, 0.3)) : 0.0f;
            r.period = 1;
            r.base = static_cast<float>(rng.uniform(0.2, 0.8));
        }
        spec.layout.push_back(r);
    }
    return spec;
}

// ---------------------------------------------------------------------------

void DegradeConfig::validate() const {
    require(blur_sigma_lo >= 0.0 && blur_sigma_lo <= blur_sigma_hi, "degrade: invalid blur sigma range");
    require(noise_sigma_lo >= 0.0 && noise_sigma_lo <= noise_sigma_hi, "degrade: invalid noise sigma range");
    require(scale >= 1, "degrade: scale must be >= 1");
}

Degraded degrade_detailed(const Image& hr, const DegradeConfig& cfg) {
    cfg.validate();
    require(hr.height % cfg.scale == 0 && hr.width % cfg.scale == 0, "degrade: HR dimensions not divisible by scale");
    Rng rng(cfg.seed);
    Degraded d;
    d.blur_sigma = rng.uniform(cfg.blur_sigma_lo, cfg.blur_sigma_hi);
    d.noise_sigma = rng.uniform(cfg.noise_sigma_lo, cfg.noise_sigma_hi);
    Image blurred = d.blur_sigma > 0.0 ? gaussian_blur(hr, d.blur_sigma) : hr;
    d.lr = resize(blurred, hr.height / cfg.scale, hr.width / cfg.scale, ResizeMode::area);
    for (float& v : d.lr.data) {
        const double n = rng.normal();
        if (d.noise_sigma > 0.0) v = static_cast<float>(v + d.noise_sigma * n);
        v = std::clamp(v, 0.0f, 1.0f);
    }
    return d;
}

Image degrade(const Image& hr, const DegradeConfig& cfg) { return degrade_detailed(hr, cfg).lr; }

Image make_psr(const Image& lr, int scale) {
    require(scale >= 1, "make_psr: scale must be >= 1");
    return resize(lr, lr.height * scale, lr.width * scale, ResizeMode::bicubic);
}

std::vector<DatasetItem> build_dataset(int n_scenes, const SceneDistribution& dist, const DegradeConfig& degrade_cfg,
                                       const RtdmConfig& rtdm_cfg, std::uint64_t master_seed) {
    require(n_scenes >= 0, "build_dataset: n_scenes must be non-negative");
    rtdm_cfg.validate();
    degrade_cfg.validate();
    std::vector<DatasetItem> items(static_cast<std::size_t>(n_scenes));
    const FilterBankProvider provider;
    // Per-scene derived seeds make every tuple independent of build order.
    parallel_rows(n_scenes, [&](int i) {
        Rng rng(Rng::derive_seed(master_seed, static_cast<std::uint64_t>(i)));
        DatasetItem& it = items[static_cast<std::size_t>(i)];
        it.spec = random_scene_spec(dist, rng);
        it.degrade_seed = rng.next();
        it.tau = sample_tau(rtdm_cfg, rng);
        Scene scene = synth_scene(it.spec);
        DegradeConfig dc = degrade_cfg;
        dc.seed = it.degrade_seed;
        Degraded d = degrade_detailed(scene.hr, dc);
        it.blur_sigma = d.blur_sigma;
        it.noise_sigma = d.noise_sigma;
        it.hr = std::move(scene.hr);
        it.region_mask = std::move(scene.region_mask);
        it.lr = std::move(d.lr);
        it.psr = make_psr(it.lr, degrade_cfg.scale);
        RtdmResult r = estimate_rtdm(it.lr, it.hr, rtdm_cfg, it.tau, provider, it.psr);
        it.map = std::move(r.map);
        it.latent_mask = std::move(r.latent);
    });
    return items;
}

// ---------------------------------------------------------------------------
// Persistence

TnsrFile image_tnsr(const Image& img) {
    return {{static_cast<std::uint32_t>(img.height), static_cast<std::uint32_t>(img.width),
             static_cast<std::uint32_t>(img.channels)},
            img.data,
            {}};
}

Image tnsr_image(const TnsrFile& f) {
    if (f.dims.size() != 3) throw IoError("expected a 3-D image tensor");
    return Image(static_cast<int>(f.dims[0]), static_cast<int>(f.dims[1]), static_cast<int>(f.dims[2]), f.data);
}

TnsrFile mask_tnsr(const BinaryMask& m) {
    TnsrFile f{{static_cast<std::uint32_t>(m.height), static_cast<std::uint32_t>(m.width)}, {}, {}};
    f.data.assign(m.data.begin(), m.data.end());
    return f;
}

BinaryMask tnsr_mask(const TnsrFile& f, MaskResolution res) {
    if (f.dims.size() != 2) throw IoError("expected a 2-D mask tensor");
    BinaryMask m(static_cast<int>(f.dims[0]), static_cast<int>(f.dims[1]), 0, res);
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = f.data[i] >= 0.5f ? 1 : 0;
    return m;
}

TnsrFile map_tnsr(const TextureMap& m) {
    return {{static_cast<std::uint32_t>(m.height), static_cast<std::uint32_t>(m.width)}, m.data, {}};
}

TextureMap tnsr_map(const TnsrFile& f) {
    if (f.dims.size() != 2) throw IoError("expected a 2-D map tensor");
    TextureMap m(static_cast<int>(f.dims[0]), static_cast<int>(f.dims[1]));
    m.data = f.data;
    return m;
}

namespace {

json region_json(const Region& r) {
    return {{"y0", r.y0}, {"x0", r.x0}, {"y1", r.y1}, {"x1", r.x1}, {"kind", to_string(r.kind)},
            {"base", r.base}, {"amplitude", r.amplitude}, {"period", r.period}, {"vertical", r.vertical}};
}

Region region_from_json(const json& j) {
    Region r;
    r.y0 = j.at("y0");
    r.x0 = j.at("x0");
    r.y1 = j.at("y1");
    r.x1 = j.at("x1");
    r.kind = texture_kind_from_string(j.at("kind"));
    r.base = j.at("base");
    r.amplitude = j.at("amplitude");
    r.period = j.at("period");
    r.vertical = j.at("vertical");
    return r;
}

std::string scene_dir_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%04zu", i);
    return buf;
}

}  // namespace

void save_dataset(const std::vector<DatasetItem>& items, const std::filesystem::path& dir, std::uint64_t master_seed) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create dataset directory " + dir.string());
    json manifest;
    manifest["format"] = "texadiff-dataset";
    manifest["version"] = 1;
    manifest["master_seed"] = master_seed;
    manifest["scenes"] = json::array();
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        const auto sub = dir / scene_dir_name(i);
        std::filesystem::create_directories(sub, ec);
        if (ec) throw IoError("cannot create " + sub.string());
        write_tnsr(sub / "hr.tnsr", image_tnsr(it.hr));
        write_tnsr(sub / "lr.tnsr", image_tnsr(it.lr));
        write_tnsr(sub / "psr.tnsr", image_tnsr(it.psr));
        write_tnsr(sub / "map.tnsr", map_tnsr(it.map));
        write_tnsr(sub / "mask.tnsr", mask_tnsr(it.latent_mask));
        write_tnsr(sub / "region.tnsr", mask_tnsr(it.region_mask));
        save_image(it.hr, sub / "hr.png");
        save_image(it.lr, sub / "lr.png");
        save_image(it.psr, sub / "psr.png");
        save_image(mask_to_image(it.latent_mask), sub / "mask.png");

        json scene;
        scene["dir"] = scene_dir_name(i);
        scene["size"] = it.spec.size;
        scene["scene_seed"] = it.spec.seed;
        scene["degrade_seed"] = it.degrade_seed;
        scene["blur_sigma"] = it.blur_sigma;
        scene["noise_sigma"] = it.noise_sigma;
        scene["tau"] = it.tau;
        scene["layout"] = json::array();
        for (const auto& r : it.spec.layout) scene["layout"].push_back(region_json(r));
        manifest["scenes"].push_back(scene);
    }
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    if (!os) throw IoError("cannot write manifest in " + dir.string());
    os << manifest.dump(2) << '\n';
}

std::vector<DatasetItem> load_dataset(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw IoError("dataset manifest not found in " + dir.string());
    json manifest;
    try {
        manifest = json::parse(is);
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed dataset manifest: ") + e.what());
    }
    std::vector<DatasetItem> items;
    for (const auto& scene : manifest.at("scenes")) {
        DatasetItem it;
        const auto sub = dir / scene.at("dir").get<std::string>();
        it.spec.size = scene.at("size");
        it.spec.seed = scene.at("scene_seed");
        for (const auto& r : scene.at("layout")) it.spec.layout.push_back(region_from_json(r));
        it.degrade_seed = scene.at("degrade_seed");
        it.blur_sigma = scene.at("blur_sigma");
        it.noise_sigma = scene.at("noise_sigma");
        it.tau = scene.at("tau");
        it.hr = tnsr_image(read_tnsr(sub / "hr.tnsr"));
        it.lr = tnsr_image(read_tnsr(sub / "lr.tnsr"));
        it.psr = tnsr_image(read_tnsr(sub / "psr.tnsr"));
        it.map = tnsr_map(read_tnsr(sub / "map.tnsr"));
        it.latent_mask = tnsr_mask(read_tnsr(sub / "mask.tnsr"), MaskResolution::latent);
        it.region_mask = tnsr_mask(read_tnsr(sub / "region.tnsr"), MaskResolution::pixel);
        items.push_back(std::move(it));
    }
    return items;
}

}  // namespace texadiff
