#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "texadiff/cli.hpp"
#include "texadiff/config.hpp"
#include "texadiff/error.hpp"
#include "texadiff/image.hpp"

using namespace texadiff;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "texadiff");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

fs::path scratch(const std::string& name) {
    auto d = fs::temp_directory_path() / ("texadiff_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

const char* kSmall = R"(seed = 11
[degrade]
n_scenes = 2
size = 64
[train]
steps = 10
batch_size = 2
timesteps = 40
base_width = 16
[sample]
t_lo = 5
t_hi = 25
[predictor]
steps = 3
crop = 32
)";

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST_CASE("run config parsing") {
    auto c = parse_run_config("seed = 3\n");
    CHECK(c.seed == 3);
    CHECK(c.rtdm.tau_lo == 0.35);
    CHECK(c.sample.t_lo == 100);
    CHECK(c.sample.t_hi == 500);
    CHECK(c.sample_tau == 0.35);
    CHECK(c.model.seed != c.train.seed);
    CHECK(parse_run_config("seed = 3\n").train.seed == c.train.seed);
    CHECK(parse_run_config("seed = 4\n").train.seed != c.train.seed);

    auto d = parse_run_config("seed = 1\n[train]\nlr = 1\nfreeze = \"paper\"\n[sample]\nparity = \"odd\"\nta = false\n");
    CHECK(d.train.lr == 1.0);
    CHECK(d.train.freeze == FreezePreset::paper);
    CHECK(d.sample.parity == Parity::odd);
    CHECK_FALSE(d.sample.enabled);

    CHECK_THROWS_AS(parse_run_config("[train]\nsteps = 1\n"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_run_config("seed = 1\n[train]\nstepz = 1\n"), doctest::Contains("train.stepz"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_run_config("seed = 1\n[sampler]\n"), doctest::Contains("sampler"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("seed = 1\n[train]\nsteps = \"ten\"\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("seed = 1\n[train]\nsteps = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("seed = -1\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("seed = 1\n[rtdm]\ntau_lo = 0.5\ntau_hi = 0.4\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("seed = 1\n[sample]\nt_lo = 600\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("seed = 1\n[train]\nfreeze = \"most\"\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("seed = 1\n[degrade]\nsize = 60\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("seed = = 1\n"), ConfigError);
    CHECK_THROWS_AS(load_run_config("/nonexistent/x.toml"), IoError);
}

TEST_CASE("cli usage errors") {
    CHECK(cli({}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);
    auto r = cli({"rtdm-estimate", "--lr", "a.png", "--tau", "0.4", "--out-map", "m.tnsr", "--out-mask", "k.tnsr"});
    CHECK(r.code == 2);
    CHECK(r.err.find("--hr") != std::string::npos);
    CHECK(r.err.find("Usage") != std::string::npos);
    CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("cli rtdm-estimate and eval") {
    const auto d = scratch("est");
    save_image(Image(8, 8, 1, 0.4f), d / "lr.png");
    save_image(Image(32, 32, 1, 0.4f), d / "hr.png");
    auto r = cli({"rtdm-estimate", "--lr", (d / "lr.png").string(), "--hr", (d / "hr.png").string(), "--tau", "0.4",
                  "--out-map", (d / "m.tnsr").string(), "--out-mask", (d / "k.tnsr").string()});
    CHECK(r.code == 0);
    CHECK(r.out.find("0.000") != std::string::npos);
    CHECK(fs::exists(d / "k.png"));

    Image hr(64, 64, 1, 0.4f);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 32; ++x) hr.at(y, x) = ((x + y) % 2) ? 0.8f : 0.2f;
    save_image(hr, d / "hr2.png");
    save_image(resize(gaussian_blur(hr, 1.0), 16, 16, ResizeMode::area), d / "lr2.png");
    r = cli({"rtdm-estimate", "--lr", (d / "lr2.png").string(), "--hr", (d / "hr2.png").string(), "--tau", "0.40",
             "--out-map", (d / "m2.tnsr").string(), "--out-mask", (d / "k2.tnsr").string()});
    REQUIRE(r.code == 0);
    const double frac = std::stod(r.out.substr(r.out.find(' ') + 1));
    CHECK(frac > 0.0);
    CHECK(frac < 1.0);

    save_image(Image(24, 24, 1, 0.4f), d / "hr24.png");
    r = cli({"rtdm-estimate", "--lr", (d / "lr2.png").string(), "--hr", (d / "hr24.png").string(), "--tau", "0.4",
             "--out-map", (d / "m3.tnsr").string(), "--out-mask", (d / "k3.tnsr").string()});
    CHECK(r.code == 3);
    r = cli({"rtdm-estimate", "--lr", (d / "none.png").string(), "--hr", (d / "hr.png").string(), "--tau", "0.4",
             "--out-map", (d / "m3.tnsr").string(), "--out-mask", (d / "k3.tnsr").string()});
    CHECK(r.code == 2);

    r = cli({"eval", "--pred", (d / "hr2.png").string(), "--ref", (d / "hr2.png").string(), "--mask-pred",
             (d / "k2.tnsr").string(), "--mask-ref", (d / "k2.tnsr").string()});
    REQUIRE(r.code == 0);
    auto j = nlohmann::json::parse(r.out);
    CHECK(j["psnr"] == "inf");
    CHECK(j["ssim"] == 1.0);
    CHECK(j["mask_accuracy"] == 100.0);

    save_image(Image(8, 8, 1, 0.5f), d / "a.png");
    save_image(Image(8, 8, 1, 0.6f), d / "b.png");
    j = nlohmann::json::parse(cli({"eval", "--pred", (d / "a.png").string(), "--ref", (d / "b.png").string()}).out);
    // 8-bit quantization puts 0.5 and 0.6 at 128/255 and 153/255.
    CHECK(j["psnr"].get<double>() == doctest::Approx(20.0 * std::log10(255.0 / 25.0)).epsilon(1e-6));
    CHECK(cli({"eval", "--pred", (d / "a.png").string(), "--ref", (d / "hr2.png").string()}).code == 3);
}

TEST_CASE("cli dataset, train and sample") {
    const auto d = scratch("pipe");
    write(d / "c.toml", kSmall);
    const std::string cfg = (d / "c.toml").string();

    REQUIRE(cli({"dataset", "--config", cfg, "--out", (d / "ds").string()}).code == 0);
    REQUIRE(cli({"dataset", "--config", cfg, "--out", (d / "ds2").string()}).code == 0);
    CHECK(fs::is_directory(d / "ds" / "scene_0001"));
    CHECK_FALSE(fs::exists(d / "ds" / "scene_0002"));
    CHECK(slurp(d / "ds" / "manifest.json") == slurp(d / "ds2" / "manifest.json"));
    for (const char* f : {"hr.tnsr", "lr.tnsr", "psr.tnsr", "map.tnsr", "mask.tnsr"})
        CHECK(slurp(d / "ds" / "scene_0001" / f) == slurp(d / "ds2" / "scene_0001" / f));

    write(d / "bad.toml", std::string(kSmall) + "colour = 3\n");
    auto r = cli({"dataset", "--config", (d / "bad.toml").string(), "--out", (d / "ds3").string()});
    CHECK(r.code == 4);
    CHECK(r.err.find("colour") != std::string::npos);
    write(d / "file", "x");
    CHECK(cli({"dataset", "--config", cfg, "--out", (d / "file" / "sub").string()}).code == 2);

    const std::string ds = (d / "ds").string();
    r = cli({"train", "--config", cfg, "--dataset", ds, "--out", (d / "ck.tnsr").string(), "--freeze-preset", "paper"});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(d / "ck.tnsr"));
    std::istringstream csv(slurp(d / "ck.csv"));
    std::string line;
    int rows = -1;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 10);
    CHECK(cli({"train", "--config", cfg, "--dataset", ds, "--out", (d / "x.tnsr").string(), "--freeze-preset", "all"})
              .code == 2);

    // alpha_w only changes the loss when the batch has rich latents.
    write(d / "a0.toml", std::string(kSmall) + "[train]\n");
    std::string a0 = kSmall;
    a0.replace(a0.find("[train]\n"), 8, "[train]\nalpha_w = 0.0\n");
    write(d / "a0.toml", a0);
    REQUIRE(cli({"train", "--config", (d / "a0.toml").string(), "--dataset", ds, "--out", (d / "a0.tnsr").string()}).code == 0);
    REQUIRE(cli({"train", "--config", cfg, "--dataset", ds, "--out", (d / "a1.tnsr").string()}).code == 0);
    CHECK(slurp(d / "a0.csv") != slurp(d / "a1.csv"));

    const std::string ck = (d / "a1.tnsr").string();
    const std::string lr = (d / "ds" / "scene_0000" / "lr.png").string();
    auto sample = [&](const std::string& mask, const std::string& out, std::vector<std::string> extra = {}) {
        std::vector<std::string> a{"sample", "--ckpt", ck, "--lr", lr, "--mask", mask, "--out", (d / out).string(),
                                   "--seed", "9"};
        a.insert(a.end(), extra.begin(), extra.end());
        return cli(a);
    };
    REQUIRE(sample("ones", "ones.png").code == 0);
    REQUIRE(sample("ones", "off.png", {"--ta", "off"}).code == 0);
    CHECK(slurp(d / "ones.tnsr") == slurp(d / "off.tnsr"));
    REQUIRE(sample("zeros", "z1.png", {"--window", "10:20"}).code == 0);
    REQUIRE(sample("zeros", "z2.png", {"--window", "10:20"}).code == 0);
    CHECK(slurp(d / "z1.tnsr") == slurp(d / "z2.tnsr"));
    CHECK(slurp(d / "z1.tnsr") != slurp(d / "ones.tnsr"));
    CHECK(fs::exists(d / "z1.mask.png"));

    REQUIRE(sample("oracle", "or.png", {"--hr", (d / "ds" / "scene_0000" / "hr.png").string(), "--tau", "0.40"}).code == 0);
    REQUIRE(sample("inverted", "inv.png", {"--hr", (d / "ds" / "scene_0000" / "hr.png").string(), "--tau", "0.40"}).code == 0);
    const auto om = read_tnsr(d / "or.mask.tnsr"), im = read_tnsr(d / "inv.mask.tnsr");
    for (std::size_t i = 0; i < om.data.size(); ++i) CHECK(om.data[i] + im.data[i] == 1.0f);
    CHECK(sample("oracle", "x.png").code == 4);
    CHECK(sample("predicted", "x.png").code == 4);
    CHECK(sample("ones", "x.png", {"--window", "30:20"}).code == 4);

    REQUIRE(cli({"train-predictor", "--config", cfg, "--dataset", ds, "--out", (d / "pr.tnsr").string()}).code == 0);
    CHECK(sample("predicted", "pr.png", {"--predictor", (d / "pr.tnsr").string()}).code == 0);
    CHECK(sample("predicted", "pr.png", {"--predictor", ck}).code == 2);

    CHECK(sample((d / "ds" / "scene_0000" / "region.tnsr").string(), "x.png").code == 3);
    CHECK(sample((d / "ds" / "scene_0001" / "mask.tnsr").string(), "f.png").code == 0);
    CHECK(sample((d / "missing.tnsr").string(), "x.png").code == 2);
}
