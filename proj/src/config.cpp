#include "texadiff/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "texadiff/error.hpp"

namespace texadiff {

std::uint64_t RunConfig::stage_seed(int stage) const {
    // splitmix64 step on seed + stage
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(stage + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

using Setter = std::function<void(const toml::node&, const std::string&)>;
using Section = std::map<std::string, Setter>;

template <class T>
Setter integer(T& dst) {
    return [&dst](const toml::node& n, const std::string& key) {
        auto v = n.value_exact<std::int64_t>();
        if (!v) throw ConfigError(key + ": expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
            if (*v < 0) throw ConfigError(key + ": must be non-negative");
        }
        dst = static_cast<T>(*v);
    };
}

Setter real(double& dst) {
    return [&dst](const toml::node& n, const std::string& key) {
        auto v = n.value<double>();
        if (!v || !(n.is_floating_point() || n.is_integer())) throw ConfigError(key + ": expected a number");
        dst = *v;
    };
}

Setter real(float& dst) {
    return [&dst](const toml::node& n, const std::string& key) {
        auto v = n.value<double>();
        if (!v || !(n.is_floating_point() || n.is_integer())) throw ConfigError(key + ": expected a number");
        dst = static_cast<float>(*v);
    };
}

Setter boolean(bool& dst) {
    return [&dst](const toml::node& n, const std::string& key) {
        auto v = n.value_exact<bool>();
        if (!v) throw ConfigError(key + ": expected true or false");
        dst = *v;
    };
}

template <class F>
Setter text(F assign) {
    return [assign](const toml::node& n, const std::string& key) {
        auto v = n.value_exact<std::string>();
        if (!v) throw ConfigError(key + ": expected a string");
        try {
            assign(*v);
        } catch (const Error& e) {
            throw ConfigError(key + ": " + e.what());
        }
    };
}

void apply(const toml::table& tbl, const std::string& name, const Section& section) {
    for (auto&& [k, node] : tbl) {
        const std::string key(k.str());
        const std::string full = name + "." + key;
        auto it = section.find(key);
        if (it == section.end()) throw ConfigError("unknown config key '" + full + "'");
        it->second(node, full);
    }
}

template <class F>
void checked(const std::string& what, F fn) {
    try {
        fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& text_in, const std::string& source) {
    toml::table root;
    try {
        root = toml::parse(text_in, std::string_view(source));
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << source << ": " << e.description() << " (line " << e.source().begin.line << ")";
        throw ConfigError(os.str());
    }

    RunConfig c;
    bool have_seed = false;
    auto& r = c.rtdm;
    auto& d = c.degrade;
    auto& s = c.scenes;
    auto& t = c.train;
    auto& m = c.model;
    auto& p = c.predictor;

    const std::map<std::string, Section> sections = {
        {"rtdm",
         {{"tau_lo", real(r.tau_lo)},
          {"tau_hi", real(r.tau_hi)},
          {"window", integer(r.window)},
          {"sigma", real(r.sigma)},
          {"c2", real(r.c2)},
          {"morph_radius", integer(r.morph_radius)},
          {"min_component_area", integer(r.min_component_area)},
          {"area_reference", real(r.area_reference)},
          {"pool_factor", integer(r.pool_factor)}}},
        {"degrade",
         {{"blur_sigma_lo", real(d.blur_sigma_lo)},
          {"blur_sigma_hi", real(d.blur_sigma_hi)},
          {"scale", integer(d.scale)},
          {"noise_sigma_lo", real(d.noise_sigma_lo)},
          {"noise_sigma_hi", real(d.noise_sigma_hi)},
          {"n_scenes", integer(c.n_scenes)},
          {"size", integer(s.size)},
          {"min_period", integer(s.min_period)},
          {"max_period", integer(s.max_period)},
          {"min_amplitude", real(s.min_amplitude)},
          {"max_amplitude", real(s.max_amplitude)}}},
        {"train",
         {{"steps", integer(t.steps)},
          {"batch_size", integer(t.batch_size)},
          {"lr", real(t.lr)},
          {"alpha_w", real(t.alpha_w)},
          {"freeze", text([&t](const std::string& v) { t.freeze = freeze_preset_from_string(v); })},
          {"timesteps", integer(c.schedule.timesteps)},
          {"beta_start", real(c.schedule.beta_start)},
          {"beta_end", real(c.schedule.beta_end)},
          {"base_width", integer(m.base_width)},
          {"control_width", integer(m.control_width)},
          {"temb_dim", integer(m.temb_dim)},
          {"groups", integer(m.groups)}}},
        {"sample",
         {{"t_lo", integer(c.sample.t_lo)},
          {"t_hi", integer(c.sample.t_hi)},
          {"parity", text([&c](const std::string& v) { c.sample.parity = parity_from_string(v); })},
          {"ta", boolean(c.sample.enabled)},
          {"tau", real(c.sample_tau)}}},
        {"predictor",
         {{"steps", integer(p.steps)},
          {"batch_size", integer(p.batch_size)},
          {"lr", real(p.lr)},
          {"crop", integer(p.crop)},
          {"augment", boolean(p.augment)},
          {"width", integer(c.predictor_model.width)}}},
    };

    for (auto&& [k, node] : root) {
        const std::string key(k.str());
        if (key == "seed") {
            integer(c.seed)(node, "seed");
            have_seed = true;
            continue;
        }
        auto sec = sections.find(key);
        if (sec == sections.end()) throw ConfigError("unknown config key '" + key + "'");
        const toml::table* tbl = node.as_table();
        if (!tbl) throw ConfigError("'" + key + "' must be a table");
        apply(*tbl, key, sec->second);
    }
    if (!have_seed) throw ConfigError("missing mandatory key 'seed'");

    checked("rtdm", [&] { c.rtdm.validate(); });
    checked("degrade", [&] { c.degrade.validate(); });
    if (c.n_scenes < 0) throw ConfigError("degrade.n_scenes must be >= 0");
    if (s.size <= 0 || s.size % 8 != 0 || s.size % d.scale != 0)
        throw ConfigError("degrade.size must be a positive multiple of 8 and of the scale");
    if (s.min_period < 1 || s.min_period > s.max_period) throw ConfigError("degrade: invalid period range");
    if (!(s.min_amplitude >= 0.0f && s.min_amplitude <= s.max_amplitude)) throw ConfigError("degrade: invalid amplitude range");
    checked("train", [&] { c.train.validate(); });
    if (c.schedule.timesteps < 1) throw ConfigError("train.timesteps must be >= 1");
    if (!(c.schedule.beta_start > 0.0 && c.schedule.beta_start <= c.schedule.beta_end && c.schedule.beta_end < 1.0))
        throw ConfigError("train: invalid beta range");
    if (m.base_width < 1 || m.control_width < 1 || m.temb_dim < 1 || m.groups < 1 || m.base_width % m.groups != 0 ||
        m.control_width % m.groups != 0)
        throw ConfigError("train: model widths must be positive multiples of groups");
    checked("sample", [&] { c.sample.validate(c.schedule.timesteps); });
    if (!(c.sample_tau >= 0.0 && c.sample_tau <= 1.0)) throw ConfigError("sample.tau must lie in [0, 1]");
    checked("predictor", [&] { c.predictor.validate(); });
    if (c.predictor_model.width < 1) throw ConfigError("predictor.width must be >= 1");

    c.model.seed = c.stage_seed(1);
    c.train.seed = c.stage_seed(2);
    c.predictor_model.seed = c.stage_seed(3);
    c.predictor.seed = c.stage_seed(4);
    c.degrade.seed = c.stage_seed(5);
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read config " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    return parse_run_config(os.str(), path.string());
}

}  // namespace texadiff
