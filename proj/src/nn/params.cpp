#include "texadiff/nn/params.hpp"

#include <algorithm>
#include <cmath>

#include "texadiff/error.hpp"
#include "texadiff/nn/ops.hpp"

namespace texadiff::nn {

Tensor ParameterSet::add(const std::string& name, Tensor init) {
    require(!contains(name), "duplicate parameter name '" + name + "'");
    init.set_requires_grad(true);
    params_.emplace(name, init);
    return init;
}

const Tensor& ParameterSet::get(const std::string& name) const {
    auto it = params_.find(name);
    require(it != params_.end(), "unknown parameter '" + name + "'");
    return it->second;
}

void ParameterSet::freeze(const std::string& name) {
    require(contains(name), "cannot freeze unknown parameter '" + name + "'");
    frozen_.insert(name);
}

void ParameterSet::unfreeze(const std::string& name) { frozen_.erase(name); }

int ParameterSet::freeze_prefix(const std::string& prefix) {
    int n = 0;
    for (const auto& [name, t] : params_)
        if (name.rfind(prefix, 0) == 0) {
            frozen_.insert(name);
            ++n;
        }
    return n;
}

void ParameterSet::freeze_all() {
    for (const auto& [name, t] : params_) frozen_.insert(name);
}

std::size_t ParameterSet::scalar_count(const std::string& prefix) const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_)
        if (name.rfind(prefix, 0) == 0) n += t.numel();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

std::map<std::string, std::vector<real>> ParameterSet::snapshot() const {
    std::map<std::string, std::vector<real>> out;
    for (const auto& [name, t] : params_) out[name].assign(t.data().begin(), t.data().end());
    return out;
}

TnsrFile ParameterSet::to_tnsr() const {
    TnsrFile f;
    for (const auto& [name, t] : params_) {
        TnsrEntry e{name, f.data.size(), {}};
        for (int d : t.shape()) e.dims.push_back(static_cast<std::uint32_t>(d));
        for (real v : t.data()) f.data.push_back(static_cast<float>(v));
        f.manifest.push_back(std::move(e));
    }
    f.dims = {static_cast<std::uint32_t>(f.data.size())};
    return f;
}

void ParameterSet::load_tnsr(const TnsrFile& file) {
    if (file.manifest.empty()) throw IoError("checkpoint has no name manifest");
    std::map<std::string, const TnsrEntry*> byname;
    for (const auto& e : file.manifest) byname[e.name] = &e;
    for (auto& [name, t] : params_) {
        auto it = byname.find(name);
        if (it == byname.end()) throw ContractError("checkpoint is missing parameter '" + name + "'");
        Shape s(it->second->dims.begin(), it->second->dims.end());
        if (s != t.shape())
            throw ContractError("checkpoint shape mismatch for '" + name + "': " + shape_str(s) + " vs " +
                                shape_str(t.shape()));
        auto dst = t.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = file.data[it->second->offset + i];
    }
    if (byname.size() != params_.size()) throw ContractError("checkpoint has parameters unknown to this model");
}

void ParameterSet::save(const std::filesystem::path& path) const { write_tnsr(path, to_tnsr()); }

void ParameterSet::load(const std::filesystem::path& path) { load_tnsr(read_tnsr(path)); }

// ---------------------------------------------------------------------------

void adam_step(ParameterSet& params, OptimizerState& state) {
    const auto& c = state.cfg;
    for (const auto& [name, t] : params.items())
        if (!params.is_frozen(name) && !t.has_grad())
            throw ContractError("adam_step: parameter '" + name + "' has no gradient");
    ++state.step;
    const real bc1 = 1.0 - std::pow(c.beta1, static_cast<real>(state.step));
    const real bc2 = 1.0 - std::pow(c.beta2, static_cast<real>(state.step));
    for (const auto& [name, t] : params.items()) {
        if (params.is_frozen(name)) continue;
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) {
            m.assign(t.numel(), 0.0);
            v.assign(t.numel(), 0.0);
        }
        Tensor handle = t;
        auto value = handle.data();
        const auto g = t.grad();
        for (std::size_t i = 0; i < value.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const real mhat = m[i] / bc1, vhat = v[i] / bc2;
            value[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

// ---------------------------------------------------------------------------

real grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs, const GradCheckOptions& opts) {
    GemmPrecisionScope reference(GemmPrecision::dbl);
    std::vector<Tensor> ins = inputs;
    for (auto& t : ins) t.zero_grad();
    Tensor loss = f();
    require(loss.numel() == 1, "grad_check: function must return a scalar");
    if (!std::isfinite(loss.item())) throw NumericError("grad_check: non-finite loss");
    loss.backward();

    Rng rng(opts.seed);
    real worst = 0.0;
    for (auto& t : ins) {
        std::vector<real> analytic = t.has_grad() ? std::vector<real>(t.grad().begin(), t.grad().end())
                                                  : std::vector<real>(t.numel(), 0.0);
        std::vector<std::size_t> coords;
        if (opts.samples_per_param <= 0 || static_cast<std::size_t>(opts.samples_per_param) >= t.numel()) {
            for (std::size_t i = 0; i < t.numel(); ++i) coords.push_back(i);
        } else {
            for (int s = 0; s < opts.samples_per_param; ++s)
                coords.push_back(static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(t.numel()) - 1)));
        }
        auto values = t.data();
        for (std::size_t i : coords) {
            const real orig = values[i];
            values[i] = orig + opts.eps;
            const real fp = f().item();
            values[i] = orig - opts.eps;
            const real fm = f().item();
            values[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericError("grad_check: non-finite loss");
            const real numeric = (fp - fm) / (2.0 * opts.eps);
            const real a = analytic[i];
            const real rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    for (auto& t : ins) t.zero_grad();
    return worst;
}

real grad_check(const std::function<Tensor()>& f, ParameterSet& params, const GradCheckOptions& opts) {
    std::vector<Tensor> ins;
    for (const auto& [name, t] : params.items()) ins.push_back(t);
    return grad_check(f, ins, opts);
}

// ---------------------------------------------------------------------------

Conv2d::Conv2d(ParameterSet& ps, const std::string& name, int cin, int cout, int k, Rng& rng, int stride_,
               int padding_, bool zero_init)
    : stride(stride_), padding(padding_ < 0 ? k / 2 : padding_) {
    const real bound = 1.0 / std::sqrt(static_cast<real>(cin * k * k));
    w = ps.add(name + ".w", zero_init ? Tensor::zeros({cout, cin, k, k}) : Tensor::uniform({cout, cin, k, k}, rng, -bound, bound));
    b = ps.add(name + ".b", zero_init ? Tensor::zeros({cout}) : Tensor::uniform({cout}, rng, -bound, bound));
}

Tensor Conv2d::operator()(const Tensor& x) const { return conv2d(x, w, b, stride, padding); }

Linear::Linear(ParameterSet& ps, const std::string& name, int in, int out, Rng& rng) {
    const real bound = 1.0 / std::sqrt(static_cast<real>(in));
    w = ps.add(name + ".w", Tensor::uniform({out, in}, rng, -bound, bound));
    b = ps.add(name + ".b", Tensor::uniform({out}, rng, -bound, bound));
}

Tensor Linear::operator()(const Tensor& x) const { return linear(x, w, b); }

GroupNorm::GroupNorm(ParameterSet& ps, const std::string& name, int channels, int groups_) : groups(groups_) {
    gamma = ps.add(name + ".gamma", Tensor::full({channels}, 1.0));
    beta = ps.add(name + ".beta", Tensor::zeros({channels}));
}

Tensor GroupNorm::operator()(const Tensor& x) const { return group_norm(x, groups, gamma, beta); }

}  // namespace texadiff::nn
