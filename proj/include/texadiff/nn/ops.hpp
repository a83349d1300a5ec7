#pragma once

#include <vector>

#include "texadiff/nn/tensor.hpp"

namespace texadiff::nn {

enum class Activation { relu, silu, sigmoid };

// Precision of the matrix products inside conv2d. Tensors stay double either way;
// single is the default and double is the reference used by finite-difference checks.
enum class GemmPrecision { single, dbl };
GemmPrecision gemm_precision();

class GemmPrecisionScope {
public:
    explicit GemmPrecisionScope(GemmPrecision p);
    ~GemmPrecisionScope();
    GemmPrecisionScope(const GemmPrecisionScope&) = delete;
    GemmPrecisionScope& operator=(const GemmPrecisionScope&) = delete;

private:
    GemmPrecision prev_;
};

// Cross-correlation over NCHW input with (Cout, Cin, k, k) weights. `b` may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride = 1, int padding = 0);

// (N, F) x (O, F)^T + (O).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor activation(const Tensor& x, Activation kind);
inline Tensor relu(const Tensor& x) { return activation(x, Activation::relu); }
inline Tensor silu(const Tensor& x) { return activation(x, Activation::silu); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::sigmoid); }

// Per-(sample, group) standardisation followed by a per-channel affine map.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, real eps = 1e-5);

// Standardise `control` per (sample, channel) over space, then impose the spatial
// mean and standard deviation of `reference`. Differentiable in both inputs.
Tensor cross_normalize(const Tensor& control, const Tensor& reference, real eps = 1e-5);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real s);
Tensor add_scalar(const Tensor& a, real s);
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// x (N, C, H, W) + v (N, C) broadcast over space.
Tensor add_channel_bias(const Tensor& x, const Tensor& v);

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor avg_pool2(const Tensor& x);
Tensor upsample_nearest2(const Tensor& x);

Tensor mean(const Tensor& x);
Tensor mse(const Tensor& target, const Tensor& pred);
Tensor l1(const Tensor& target, const Tensor& pred);
// mean over all elements of weight * (target - pred)^2; weight is (N, 1, H, W) and
// broadcasts over channels of the (N, C, H, W) operands.
Tensor weighted_mse(const Tensor& target, const Tensor& pred, const Tensor& weight);

// Sinusoidal embedding; frequencies 10000^(-i/(dim/2)), layout [sin | cos].
Tensor timestep_embedding(int t, int dim);
Tensor timestep_embedding(const std::vector<int>& ts, int dim);

}  // namespace texadiff::nn
