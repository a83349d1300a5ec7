#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "json.hpp"

#include "texadiff/degrade.hpp"
#include "texadiff/error.hpp"
#include "texadiff/metrics.hpp"
#include "texadiff/tnsr.hpp"

using namespace texadiff;
namespace fs = std::filesystem;

namespace {

SceneSpec single(TextureKind k, int n = 32) {
    SceneSpec s;
    s.size = n;
    Region r{0, 0, n, n, k, 0.5f, k == TextureKind::constant ? 0.0f : 0.4f, 2, false};
    s.layout = {r};
    s.seed = 3;
    return s;
}

Image random_image(int h, int w, int c, Rng& rng) {
    Image img(h, w, c);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    return img;
}

double mean_abs(const Image& a, const Image& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
    return s / static_cast<double>(a.data.size());
}

}  // namespace

TEST_CASE("synth_scene") {
    CHECK(synth_scene(single(TextureKind::constant)).region_mask.count() == 0);
    CHECK(synth_scene(single(TextureKind::checker)).region_mask.count() == 32u * 32u);
    CHECK(synth_scene(single(TextureKind::noise)).region_mask.count() == 32u * 32u);
    CHECK(synth_scene(single(TextureKind::gradient)).region_mask.count() == 0);

    SceneSpec half;
    half.size = 64;
    half.layout = {{0, 0, 64, 32, TextureKind::checker, 0.5f, 0.5f, 1, false},
                   {0, 32, 64, 64, TextureKind::constant, 0.4f, 0.0f, 1, false}};
    auto s = synth_scene(half);
    CHECK(s.region_mask.foreground_fraction() == 0.5);
    CHECK(s.hr.at(0, 0) == doctest::Approx(0.25));
    CHECK(s.hr.at(0, 1) == doctest::Approx(0.75));
    CHECK(s.hr.at(5, 40) == doctest::Approx(0.4));

    auto n1 = synth_scene(single(TextureKind::noise)), n2 = synth_scene(single(TextureKind::noise));
    CHECK(n1.hr.data == n2.hr.data);
    for (float v : n1.hr.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }

    SceneSpec overlap = half;
    overlap.layout[1].x0 = 30;
    CHECK_THROWS_AS(synth_scene(overlap), ContractError);
    SceneSpec gap = half;
    gap.layout[1].x0 = 34;
    CHECK_THROWS_AS(synth_scene(gap), ContractError);
    SceneSpec odd = single(TextureKind::constant, 36);
    CHECK_THROWS_AS(synth_scene(odd), ContractError);
}

TEST_CASE("random scene specs tile and mix rich with sparse") {
    Rng rng(12);
    SceneDistribution dist;
    for (int i = 0; i < 50; ++i) {
        auto spec = random_scene_spec(dist, rng);
        spec.validate(4);
        bool rich = false, sparse = false;
        for (const auto& r : spec.layout) (is_rich(r.kind) ? rich : sparse) = true;
        CHECK(rich);
        CHECK(sparse);
    }
}

TEST_CASE("degrade") {
    DegradeConfig none;
    none.blur_sigma_lo = none.blur_sigma_hi = 0.0;
    none.noise_sigma_lo = none.noise_sigma_hi = 0.0;
    Image c(32, 32, 1, 0.3f);
    auto lr = degrade(c, none);
    CHECK(lr.height == 8);
    for (float v : lr.data) CHECK(v == doctest::Approx(0.3));

    Rng rng(1);
    auto hr = random_image(32, 32, 1, rng);
    DegradeConfig blur_only = none;
    blur_only.blur_sigma_lo = blur_only.blur_sigma_hi = 1.1;
    auto got = degrade(hr, blur_only);
    auto ref = resize(gaussian_blur(hr, 1.1), 8, 8, ResizeMode::area);
    for (std::size_t i = 0; i < got.data.size(); ++i) CHECK(std::abs(got.data[i] - ref.data[i]) <= 1e-6);

    DegradeConfig noisy = none;
    noisy.noise_sigma_lo = noisy.noise_sigma_hi = 0.04;
    noisy.seed = 5;
    Image mid(256, 256, 1, 0.5f);
    auto n = degrade(mid, noisy);
    REQUIRE(n.height == 64);
    double s2 = 0;
    for (float v : n.data) s2 += (v - 0.5) * (v - 0.5);
    const double sd = std::sqrt(s2 / static_cast<double>(n.data.size()));
    CHECK(sd >= 0.03);
    CHECK(sd <= 0.05);

    DegradeConfig d1;
    d1.seed = 10;
    CHECK(degrade(hr, d1).data == degrade(hr, d1).data);
    int distinct = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        DegradeConfig a = noisy, b = noisy;
        a.seed = s;
        b.seed = s + 100;
        distinct += degrade(mid, a).data != degrade(mid, b).data;
    }
    CHECK(distinct == 10);

    CHECK_THROWS_AS(degrade(Image(30, 32, 1), d1), ContractError);
    DegradeConfig bad;
    bad.scale = 0;
    CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("make_psr") {
    Image c(5, 6, 1, 0.45f);
    auto p = make_psr(c, 4);
    CHECK(p.height == 20);
    CHECK(p.width == 24);
    for (float v : p.data) CHECK(v == doctest::Approx(0.45));

    Image smooth(16, 16, 1);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) smooth.at(y, x) = 0.3f + 0.4f * std::sin(0.3 * x) * std::cos(0.2 * y) * 0.5f;
    CHECK(mean_abs(resize(make_psr(smooth), 16, 16, ResizeMode::area), smooth) <= 0.02);
}

TEST_CASE("build_dataset") {
    SceneDistribution dist;
    dist.size = 64;
    CHECK(build_dataset(0, dist, {}, {}, 1).empty());
    auto a = build_dataset(3, dist, {}, {}, 42), b = build_dataset(3, dist, {}, {}, 42);
    REQUIRE(a.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a[i].hr.data == b[i].hr.data);
        CHECK(a[i].lr.data == b[i].lr.data);
        CHECK(a[i].map.data == b[i].map.data);
        CHECK(a[i].latent_mask.data == b[i].latent_mask.data);
        CHECK(a[i].tau == b[i].tau);
        CHECK(a[i].tau >= 0.35);
        CHECK(a[i].tau <= 0.40);
        CHECK(a[i].latent_mask.height == 8);
        CHECK(a[i].psr.height == 64);
        CHECK(a[i].lr.height == 16);
    }
    auto c = build_dataset(3, dist, {}, {}, 43);
    CHECK(c[0].hr.data != a[0].hr.data);

    // The first items do not depend on how many scenes are built.
    auto d = build_dataset(1, dist, {}, {}, 42);
    CHECK(d[0].map.data == a[0].map.data);

    auto dir = fs::temp_directory_path() / "texadiff_unit_ds";
    fs::remove_all(dir);
    save_dataset(a, dir, 42);
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(fs::exists(dir / "scene_0002" / "hr.png"));
    auto back = load_dataset(dir);
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].hr.data == a[i].hr.data);
        CHECK(back[i].psr.data == a[i].psr.data);
        CHECK(back[i].map.data == a[i].map.data);
        CHECK(back[i].latent_mask.data == a[i].latent_mask.data);
        CHECK(back[i].region_mask.data == a[i].region_mask.data);
        CHECK(back[i].tau == a[i].tau);
        CHECK(back[i].spec.layout.size() == a[i].spec.layout.size());
    }
    CHECK_THROWS_AS(load_dataset(dir / "nope"), IoError);
}

TEST_CASE("psnr") {
    Rng rng(3);
    auto a = random_image(8, 8, 3, rng);
    CHECK(std::isinf(psnr(a, a)));
    Image x(4, 4, 1, 0.5f), y(4, 4, 1, 0.6f);
    CHECK(psnr(x, y) == doctest::Approx(20.0).epsilon(1e-5));
    auto b = random_image(8, 8, 3, rng);
    double se = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) se += (static_cast<double>(a.data[i]) - b.data[i]) * (static_cast<double>(a.data[i]) - b.data[i]);
    const double ref = 10.0 * std::log10(1.0 / (se / static_cast<double>(a.data.size())));
    CHECK(std::abs(psnr(a, b) - ref) <= 1e-6);
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK_THROWS_AS(psnr(x, Image(4, 5, 1)), ContractError);
}

TEST_CASE("ssim") {
    Rng rng(4);
    auto a = random_image(16, 16, 1, rng);
    CHECK(ssim(a, a) == doctest::Approx(1.0));
    constexpr double c1 = 1e-4;
    CHECK(ssim(Image(12, 12, 1, 0.0f), Image(12, 12, 1, 1.0f)) == doctest::Approx(c1 / (1.0 + c1)).epsilon(1e-9));

    Image chk(24, 24, 1);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) chk.at(y, x) = ((y / 2 + x / 2) % 2) ? 0.8f : 0.2f;
    auto bl = gaussian_blur(chk, 1.0);
    const double v = ssim(chk, bl);
    CHECK(v > 0.0);
    CHECK(v < 1.0);
    // Direct per-pixel windowed oracle.
    const int r = 5;
    double tot = 0;
    for (int u = -r; u <= r; ++u)
        for (int w = -r; w <= r; ++w) tot += std::exp(-(u * u + w * w) / (2 * 1.5 * 1.5));
    auto mir = [](int i, int n) {
        while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
        return i;
    };
    double acc = 0;
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
            double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
            for (int u = -r; u <= r; ++u)
                for (int w = -r; w <= r; ++w) {
                    const double k = std::exp(-(u * u + w * w) / (2 * 1.5 * 1.5)) / tot;
                    const double pa = chk.at(mir(y + u, 24), mir(x + w, 24)), pb = bl.at(mir(y + u, 24), mir(x + w, 24));
                    ma += k * pa;
                    mb += k * pb;
                    aa += k * pa * pa;
                    bb += k * pb * pb;
                    ab += k * pa * pb;
                }
            const double va = aa - ma * ma, vb = bb - mb * mb, cv = ab - ma * mb;
            acc += (2 * ma * mb + c1) * (2 * cv + 9e-4) / ((ma * ma + mb * mb + c1) * (va + vb + 9e-4));
        }
    CHECK(std::abs(v - acc / 576.0) <= 1e-5);
    CHECK(ssim(chk, bl) == ssim(bl, chk));
}

TEST_CASE("mask metrics") {
    BinaryMask a(2, 2), b(2, 2);
    a.data = {1, 1, 0, 0};
    CHECK(mask_iou(a, a) == 1.0);
    b.data = {0, 0, 1, 1};
    CHECK(mask_iou(a, b) == 0.0);
    BinaryMask sub(2, 2), sup(2, 2, 1);
    sub.data = {1, 0, 0, 1};
    CHECK(mask_iou(sub, sup) == 0.5);
    CHECK(mask_iou(BinaryMask(3, 3), BinaryMask(3, 3)) == 1.0);
    CHECK(mask_accuracy(a, a) == 100.0);
    CHECK(mask_accuracy(a, a.inverted()) == 0.0);
    BinaryMask one_off = a;
    one_off.data[3] = 1;
    CHECK(mask_accuracy(one_off, a) == 75.0);
    Rng rng(8);
    for (int i = 0; i < 20; ++i) {
        BinaryMask p(5, 7), q(5, 7);
        for (auto& v : p.data) v = rng.uniform() < 0.4;
        for (auto& v : q.data) v = rng.uniform() < 0.6;
        CHECK(mask_iou(p, q) == mask_iou(q, p));
        CHECK(mask_accuracy(p, q) == mask_accuracy(q, p));
        CHECK(mask_iou(p, q) >= 0.0);
        CHECK(mask_iou(p, q) <= 1.0);
    }
    CHECK_THROWS_AS(mask_iou(a, BinaryMask(2, 3)), ContractError);
}

TEST_CASE("metric report json") {
    MetricReport r;
    r.psnr = std::numeric_limits<double>::infinity();
    r.ssim = 1.0;
    auto j = nlohmann::json::parse(r.to_json());
    CHECK(j["psnr"] == "inf");
    CHECK(j["ssim"] == 1.0);
    CHECK_FALSE(j.contains("mask_iou"));
    r.psnr = 20.0;
    r.mask_accuracy = 100.0;
    j = nlohmann::json::parse(r.to_json());
    CHECK(j["psnr"] == 20.0);
    CHECK(j["mask_accuracy"] == 100.0);
}

TEST_CASE("tnsr container") {
    TnsrFile f{{2, 3}, {1.0f, -2.5f, 0.0f, 3.25f, 1e-30f, -0.0f}, {}};
    auto bytes = encode_tnsr(f);
    REQUIRE(bytes.size() == 4 + 2 + 2 + 2 * 4 + 6 * 4);
    CHECK(std::memcmp(bytes.data(), "TNSR", 4) == 0);
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    CHECK(bytes[6] == 2);
    CHECK(bytes[8] == 2);
    CHECK(bytes[12] == 3);
    // 1.0f little-endian is 00 00 80 3f
    CHECK(bytes[16] == 0x00);
    CHECK(bytes[18] == 0x80);
    CHECK(bytes[19] == 0x3f);
    auto back = decode_tnsr(bytes);
    CHECK(back.dims == f.dims);
    CHECK(std::memcmp(back.data.data(), f.data.data(), f.data.size() * 4) == 0);

    Rng rng(2);
    TnsrFile ck{{10}, std::vector<float>(10), {{"a.w", 0, {2, 3}}, {"a.b", 6, {4}}}};
    for (auto& v : ck.data) v = static_cast<float>(rng.normal());
    auto path = fs::temp_directory_path() / "texadiff_unit.tnsr";
    write_tnsr(path, ck);
    auto rb = read_tnsr(path);
    CHECK(rb.data == ck.data);
    REQUIRE(rb.manifest.size() == 2);
    CHECK(rb.manifest[1].name == "a.b");
    CHECK(rb.manifest[1].offset == 6);
    CHECK(rb.manifest[0].dims == std::vector<std::uint32_t>{2, 3});
    CHECK(encode_tnsr(rb) == encode_tnsr(ck));

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_tnsr(bad), IoError);
    auto trunc = bytes;
    trunc.pop_back();
    CHECK_THROWS_AS(decode_tnsr(trunc), IoError);
    auto ver = bytes;
    ver[4] = 2;
    CHECK_THROWS_AS(decode_tnsr(ver), IoError);
    TnsrFile over{{2}, {1, 2}, {{"x", 1, {2}}}};
    CHECK_THROWS_AS(decode_tnsr(encode_tnsr(over)), IoError);
    CHECK_THROWS_AS(read_tnsr(fs::temp_directory_path() / "texadiff_missing.tnsr"), IoError);
    TnsrFile mismatch{{3}, {1, 2}, {}};
    CHECK_THROWS_AS(encode_tnsr(mismatch), ContractError);
}
