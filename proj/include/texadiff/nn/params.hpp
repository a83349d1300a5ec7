#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "texadiff/nn/tensor.hpp"
#include "texadiff/rng.hpp"
#include "texadiff/tnsr.hpp"

namespace texadiff::nn {

// Named trainable tensors plus the set of names the optimizer must not touch.
class ParameterSet {
public:
    ParameterSet() = default;
    ParameterSet(const ParameterSet&) = delete;
    ParameterSet& operator=(const ParameterSet&) = delete;
    ParameterSet(ParameterSet&&) = default;
    ParameterSet& operator=(ParameterSet&&) = default;

    Tensor add(const std::string& name, Tensor init);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    const std::map<std::string, Tensor>& items() const { return params_; }

    void freeze(const std::string& name);
    void unfreeze(const std::string& name);
    // Freeze every parameter whose name starts with prefix; returns how many matched.
    int freeze_prefix(const std::string& prefix);
    void unfreeze_all() { frozen_.clear(); }
    void freeze_all();
    bool is_frozen(const std::string& name) const { return frozen_.count(name) != 0; }
    const std::set<std::string>& frozen() const { return frozen_; }

    std::size_t scalar_count(const std::string& prefix = "") const;
    void zero_grad();

    std::map<std::string, std::vector<real>> snapshot() const;

    // Checkpoint as a flat 1-D TNSR payload with a name manifest (float32 on disk).
    TnsrFile to_tnsr() const;
    // Copies values for every parameter of this set; names and shapes must match exactly.
    void load_tnsr(const TnsrFile& file);
    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);

private:
    std::map<std::string, Tensor> params_;
    std::set<std::string> frozen_;
};

struct AdamConfig {
    real lr = 1e-3;
    real beta1 = 0.9;
    real beta2 = 0.999;
    real eps = 1e-8;
};

struct OptimizerState {
    AdamConfig cfg;
    std::int64_t step = 0;
    std::map<std::string, std::vector<real>> m, v;
};

// Bias-corrected Adam over every non-frozen parameter; frozen ones are left untouched.
void adam_step(ParameterSet& params, OptimizerState& state);

struct GradCheckOptions {
    real eps = 1e-3;
    int samples_per_param = 8;  // coordinates probed per tensor; <= 0 means all
    std::uint64_t seed = 0;
};

// Max over probed coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
// numeric from central differences. `f` must rebuild the graph on every call. Runs with double GEMM.
real grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                const GradCheckOptions& opts = {});
real grad_check(const std::function<Tensor()>& f, ParameterSet& params, const GradCheckOptions& opts = {});

// PyTorch-style default initialisation: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
struct Conv2d {
    Tensor w, b;
    int stride = 1, padding = 0;

    Conv2d() = default;
    Conv2d(ParameterSet& ps, const std::string& name, int cin, int cout, int k, Rng& rng, int stride = 1,
           int padding = -1, bool zero_init = false);
    Tensor operator()(const Tensor& x) const;
};

struct Linear {
    Tensor w, b;

    Linear() = default;
    Linear(ParameterSet& ps, const std::string& name, int in, int out, Rng& rng);
    Tensor operator()(const Tensor& x) const;
};

struct GroupNorm {
    Tensor gamma, beta;
    int groups = 1;

    GroupNorm() = default;
    GroupNorm(ParameterSet& ps, const std::string& name, int channels, int groups);
    Tensor operator()(const Tensor& x) const;
};

}  // namespace texadiff::nn
