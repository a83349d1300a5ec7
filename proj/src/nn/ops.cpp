#include "texadiff/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "texadiff/error.hpp"

namespace texadiff::nn {

namespace {

using Mat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<Mat>;
using CMapMat = Eigen::Map<const Mat>;
using Arr = Eigen::Array<real, Eigen::Dynamic, 1>;

void require_shape(const Tensor& t, int rank, const char* what) {
    require(t.defined() && t.ndim() == rank, std::string(what) + ": expected rank " + std::to_string(rank) +
                                                 (t.defined() ? ", got " + shape_str(t.shape()) : ", got undefined"));
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
    require(a.defined() && b.defined() && a.shape() == b.shape(),
            std::string(what) + ": shape mismatch " + (a.defined() ? shape_str(a.shape()) : "?") + " vs " +
                (b.defined() ? shape_str(b.shape()) : "?"));
}

std::vector<real>* grad_of(detail::Node& self, std::size_t i) {
    auto& p = *self.parents[i];
    return p.requires_grad ? &p.ensure_grad() : nullptr;
}

struct ConvGeom {
    int n, ci, h, w, co, k, stride, pad, ho, wo;
    int kdim() const { return ci * k * k; }
    int cols() const { return n * ho * wo; }
};

template <class S>
using MatS = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

thread_local GemmPrecision g_precision = GemmPrecision::single;

// Output columns ox whose input column ox*stride - pad + kx lies inside [0, w).
struct ColRange {
    int lo, hi;
};

ColRange valid_cols(const ConvGeom& g, int kx) {
    const int off = kx - g.pad;
    int lo = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
    int hi = g.w - 1 - off < 0 ? 0 : (g.w - 1 - off) / g.stride + 1;
    hi = std::min(hi, g.wo);
    lo = std::min(lo, hi);
    return {lo, hi};
}

// col is (Ci*k*k) x (N*Ho*Wo), row-major.
template <class S>
void im2col(const real* x, const ConvGeom& g, S* col) {
    const int cols = g.cols();
    for (int c = 0; c < g.ci; ++c)
        for (int ky = 0; ky < g.k; ++ky)
            for (int kx = 0; kx < g.k; ++kx) {
                const auto [lo, hi] = valid_cols(g, kx);
                const int off = kx - g.pad;
                S* row = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * cols;
                for (int n = 0; n < g.n; ++n) {
                    const real* plane = x + (static_cast<std::size_t>(n) * g.ci + c) * g.h * g.w;
                    S* dst = row + static_cast<std::size_t>(n) * g.ho * g.wo;
                    for (int oy = 0; oy < g.ho; ++oy) {
                        const int iy = oy * g.stride - g.pad + ky;
                        S* drow = dst + oy * g.wo;
                        if (iy < 0 || iy >= g.h) {
                            std::fill(drow, drow + g.wo, S(0));
                            continue;
                        }
                        const real* srow = plane + iy * g.w + off;
                        std::fill(drow, drow + lo, S(0));
                        if (g.stride == 1)
                            for (int ox = lo; ox < hi; ++ox) drow[ox] = static_cast<S>(srow[ox]);
                        else
                            for (int ox = lo; ox < hi; ++ox) drow[ox] = static_cast<S>(srow[ox * g.stride]);
                        std::fill(drow + hi, drow + g.wo, S(0));
                    }
                }
            }
}

template <class S>
void col2im(const S* col, const ConvGeom& g, real* dx) {
    const int cols = g.cols();
    for (int c = 0; c < g.ci; ++c)
        for (int ky = 0; ky < g.k; ++ky)
            for (int kx = 0; kx < g.k; ++kx) {
                const auto [lo, hi] = valid_cols(g, kx);
                const int off = kx - g.pad;
                const S* row = col + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * cols;
                for (int n = 0; n < g.n; ++n) {
                    real* plane = dx + (static_cast<std::size_t>(n) * g.ci + c) * g.h * g.w;
                    const S* src = row + static_cast<std::size_t>(n) * g.ho * g.wo;
                    for (int oy = 0; oy < g.ho; ++oy) {
                        const int iy = oy * g.stride - g.pad + ky;
                        if (iy < 0 || iy >= g.h) continue;
                        real* prow = plane + iy * g.w + off;
                        const S* srow = src + oy * g.wo;
                        if (g.stride == 1)
                            for (int ox = lo; ox < hi; ++ox) prow[ox] += srow[ox];
                        else
                            for (int ox = lo; ox < hi; ++ox) prow[ox * g.stride] += srow[ox];
                    }
                }
            }
}

template <class S>
Tensor conv2d_impl(const Tensor& x, const Tensor& w, const Tensor& b, const ConvGeom& g) {
    const int p = g.ho * g.wo;
    auto col = std::make_shared<std::vector<S>>(static_cast<std::size_t>(g.kdim()) * g.cols());
    im2col(x.data().data(), g, col->data());

    const auto wv = w.data();
    const MatS<S> ws = CMapMat(wv.data(), g.co, g.kdim()).template cast<S>();
    MatS<S> y = ws * Eigen::Map<const MatS<S>>(col->data(), g.kdim(), g.cols());
    std::vector<real> out(static_cast<std::size_t>(g.n) * g.co * p);
    const real* bv = b.defined() ? b.data().data() : nullptr;
    for (int co = 0; co < g.co; ++co) {
        const real bias = bv ? bv[co] : 0.0;
        for (int n = 0; n < g.n; ++n) {
            const S* src = y.data() + static_cast<std::size_t>(co) * g.cols() + static_cast<std::size_t>(n) * p;
            real* dst = out.data() + (static_cast<std::size_t>(n) * g.co + co) * p;
            for (int i = 0; i < p; ++i) dst[i] = static_cast<real>(src[i]) + bias;
        }
    }

    const bool has_bias = b.defined();
    const Tensor bias = has_bias ? b : Tensor::zeros({g.co});
    return Tensor::make_result({g.n, g.co, g.ho, g.wo}, std::move(out), {x, w, bias}, [g, col, has_bias](detail::Node& self) {
        const int p = g.ho * g.wo;
        MatS<S> dy(g.co, g.cols());
        for (int co = 0; co < g.co; ++co)
            for (int n = 0; n < g.n; ++n) {
                const real* src = self.grad.data() + (static_cast<std::size_t>(n) * g.co + co) * p;
                S* dst = dy.data() + static_cast<std::size_t>(co) * g.cols() + static_cast<std::size_t>(n) * p;
                for (int i = 0; i < p; ++i) dst[i] = static_cast<S>(src[i]);
            }
        const Eigen::Map<const MatS<S>> colm(col->data(), g.kdim(), g.cols());
        if (auto* gx = grad_of(self, 0)) {
            const MatS<S> ws = CMapMat(self.parents[1]->value.data(), g.co, g.kdim()).template cast<S>();
            MatS<S> dcol = ws.transpose() * dy;
            col2im(dcol.data(), g, gx->data());
        }
        if (auto* gw = grad_of(self, 1)) {
            MatS<S> dw = dy * colm.transpose();
            MapMat(gw->data(), g.co, g.kdim()) += dw.template cast<real>();
        }
        if (has_bias)
            if (auto* gb = grad_of(self, 2))
                for (int co = 0; co < g.co; ++co) {
                    real acc = 0.0;
                    for (int n = 0; n < g.n; ++n) {
                        const real* src = self.grad.data() + (static_cast<std::size_t>(n) * g.co + co) * p;
                        for (int i = 0; i < p; ++i) acc += src[i];
                    }
                    (*gb)[static_cast<std::size_t>(co)] += acc;
                }
    });
}

}  // namespace

GemmPrecision gemm_precision() { return g_precision; }
GemmPrecisionScope::GemmPrecisionScope(GemmPrecision p) : prev_(g_precision) { g_precision = p; }
GemmPrecisionScope::~GemmPrecisionScope() { g_precision = prev_; }

// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
    require_shape(x, 4, "conv2d input");
    require_shape(w, 4, "conv2d weight");
    require(stride >= 1 && padding >= 0, "conv2d: stride must be >= 1 and padding >= 0");
    require(w.dim(2) == w.dim(3), "conv2d: square kernels only");
    if (x.dim(1) != w.dim(1))
        throw ContractError("conv2d: channel mismatch, input " + shape_str(x.shape()) + " weight " +
                            shape_str(w.shape()));
    ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride, padding, 0, 0};
    require(g.h + 2 * padding >= g.k && g.w + 2 * padding >= g.k, "conv2d: kernel larger than padded input");
    g.ho = (g.h + 2 * padding - g.k) / stride + 1;
    g.wo = (g.w + 2 * padding - g.k) / stride + 1;
    if (b.defined()) require(b.ndim() == 1 && b.dim(0) == g.co, "conv2d: bias shape mismatch");
    if (g_precision == GemmPrecision::single) return conv2d_impl<float>(x, w, b, g);
    return conv2d_impl<double>(x, w, b, g);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_shape(x, 2, "linear input");
    require_shape(w, 2, "linear weight");
    require(x.dim(1) == w.dim(1), "linear: feature mismatch");
    const int n = x.dim(0), f = x.dim(1), o = w.dim(0);
    require(b.defined() && b.ndim() == 1 && b.dim(0) == o, "linear: bias shape mismatch");
    Mat y = CMapMat(x.data().data(), n, f) * CMapMat(w.data().data(), o, f).transpose();
    y.rowwise() += Eigen::Map<const Eigen::Matrix<real, 1, Eigen::Dynamic>>(b.data().data(), o);
    std::vector<real> out(y.data(), y.data() + y.size());
    return Tensor::make_result({n, o}, std::move(out), {x, w, b}, [n, f, o](detail::Node& self) {
        CMapMat dy(self.grad.data(), n, o);
        if (auto* gx = grad_of(self, 0))
            MapMat(gx->data(), n, f).noalias() += dy * CMapMat(self.parents[1]->value.data(), o, f);
        if (auto* gw = grad_of(self, 1))
            MapMat(gw->data(), o, f).noalias() += dy.transpose() * CMapMat(self.parents[0]->value.data(), n, f);
        if (auto* gb = grad_of(self, 2))
            for (int j = 0; j < o; ++j) (*gb)[static_cast<std::size_t>(j)] += dy.col(j).sum();
    });
}

Tensor activation(const Tensor& x, Activation kind) {
    const auto xs = x.data();
    const Eigen::Map<const Arr> xv(xs.data(), static_cast<Eigen::Index>(xs.size()));
    std::vector<real> out(xs.size());
    Eigen::Map<Arr> ov(out.data(), xv.size());
    switch (kind) {
        case Activation::relu: ov = xv.max(0.0); break;
        case Activation::sigmoid: ov = 1.0 / (1.0 + (-xv).exp()); break;
        case Activation::silu: ov = xv / (1.0 + (-xv).exp()); break;
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, [kind](detail::Node& self) {
        auto* gx = grad_of(self, 0);
        if (!gx) return;
        const auto& xs = self.parents[0]->value;
        const auto n = static_cast<Eigen::Index>(xs.size());
        const Eigen::Map<const Arr> xv(xs.data(), n), yv(self.value.data(), n), gy(self.grad.data(), n);
        Eigen::Map<Arr> g(gx->data(), n);
        switch (kind) {
            case Activation::relu: g += (xv > 0.0).select(gy, 0.0); break;
            case Activation::sigmoid: g += gy * yv * (1.0 - yv); break;
            case Activation::silu: {
                const Arr s = 1.0 / (1.0 + (-xv).exp());
                g += gy * s * (1.0 + xv * (1.0 - s));
                break;
            }
        }
    });
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, real eps) {
    require_shape(x, 4, "group_norm input");
    const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    require(groups >= 1 && c % groups == 0, "group_norm: channels " + std::to_string(c) +
                                                " not divisible by groups " + std::to_string(groups));
    require(gamma.defined() && gamma.numel() == static_cast<std::size_t>(c) && beta.defined() &&
                beta.numel() == static_cast<std::size_t>(c),
            "group_norm: affine parameter shape mismatch");
    const int cg = c / groups;
    const std::size_t m = static_cast<std::size_t>(cg) * hw;
    auto xhat = std::make_shared<std::vector<real>>(x.numel());
    auto rstd = std::make_shared<std::vector<real>>(static_cast<std::size_t>(n) * groups);
    std::vector<real> out(x.numel());
    const auto xv = x.data();
    const auto gv = gamma.data(), bv = beta.data();
    for (int i = 0; i < n; ++i)
        for (int g = 0; g < groups; ++g) {
            const std::size_t off = (static_cast<std::size_t>(i) * c + static_cast<std::size_t>(g) * cg) * hw;
            real mu = 0.0;
            for (std::size_t j = 0; j < m; ++j) mu += xv[off + j];
            mu /= static_cast<real>(m);
            real var = 0.0;
            for (std::size_t j = 0; j < m; ++j) var += (xv[off + j] - mu) * (xv[off + j] - mu);
            var /= static_cast<real>(m);
            const real r = 1.0 / std::sqrt(var + eps);
            (*rstd)[static_cast<std::size_t>(i) * groups + g] = r;
            for (std::size_t j = 0; j < m; ++j) {
                const int ch = g * cg + static_cast<int>(j / hw);
                const real xh = (xv[off + j] - mu) * r;
                (*xhat)[off + j] = xh;
                out[off + j] = xh * gv[static_cast<std::size_t>(ch)] + bv[static_cast<std::size_t>(ch)];
            }
        }
    return Tensor::make_result(x.shape(), std::move(out), {x, gamma, beta},
                               [n, c, hw, groups, cg, m, xhat, rstd](detail::Node& self) {
        auto* gx = grad_of(self, 0);
        auto* gg = grad_of(self, 1);
        auto* gb = grad_of(self, 2);
        const auto& gv = self.parents[1]->value;
        std::vector<real> dxh(m);
        for (int i = 0; i < n; ++i)
            for (int g = 0; g < groups; ++g) {
                const std::size_t off = (static_cast<std::size_t>(i) * c + static_cast<std::size_t>(g) * cg) * hw;
                real s1 = 0.0, s2 = 0.0;
                for (std::size_t j = 0; j < m; ++j) {
                    const std::size_t ch = static_cast<std::size_t>(g * cg) + j / hw;
                    const real dy = self.grad[off + j];
                    if (gg) (*gg)[ch] += dy * (*xhat)[off + j];
                    if (gb) (*gb)[ch] += dy;
                    dxh[j] = dy * gv[ch];
                    s1 += dxh[j];
                    s2 += dxh[j] * (*xhat)[off + j];
                }
                if (!gx) continue;
                s1 /= static_cast<real>(m);
                s2 /= static_cast<real>(m);
                const real r = (*rstd)[static_cast<std::size_t>(i) * groups + g];
                for (std::size_t j = 0; j < m; ++j) (*gx)[off + j] += r * (dxh[j] - s1 - (*xhat)[off + j] * s2);
            }
    });
}

Tensor cross_normalize(const Tensor& control, const Tensor& reference, real eps) {
    require_shape(control, 4, "cross_normalize control");
    require_same(control, reference, "cross_normalize");
    const int nc = control.dim(0) * control.dim(1);
    const std::size_t s = static_cast<std::size_t>(control.dim(2)) * control.dim(3);
    auto ahat = std::make_shared<std::vector<real>>(control.numel());
    // per (n, c): rstd of control, mean and std of reference
    auto stats = std::make_shared<std::vector<real>>(static_cast<std::size_t>(nc) * 3);
    std::vector<real> out(control.numel());
    const auto av = control.data(), mv = reference.data();
    for (int k = 0; k < nc; ++k) {
        const std::size_t off = static_cast<std::size_t>(k) * s;
        real mu_a = 0.0, mu_m = 0.0;
        for (std::size_t j = 0; j < s; ++j) {
            mu_a += av[off + j];
            mu_m += mv[off + j];
        }
        mu_a /= static_cast<real>(s);
        mu_m /= static_cast<real>(s);
        real var_a = 0.0, var_m = 0.0;
        for (std::size_t j = 0; j < s; ++j) {
            var_a += (av[off + j] - mu_a) * (av[off + j] - mu_a);
            var_m += (mv[off + j] - mu_m) * (mv[off + j] - mu_m);
        }
        var_a /= static_cast<real>(s);
        var_m /= static_cast<real>(s);
        const real r_a = 1.0 / std::sqrt(var_a + eps);
        const real sd_m = std::sqrt(var_m);
        (*stats)[3 * k] = r_a;
        (*stats)[3 * k + 1] = mu_m;
        (*stats)[3 * k + 2] = sd_m;
        for (std::size_t j = 0; j < s; ++j) {
            const real h = (av[off + j] - mu_a) * r_a;
            (*ahat)[off + j] = h;
            out[off + j] = h * sd_m + mu_m;
        }
    }
    return Tensor::make_result(control.shape(), std::move(out), {control, reference}, [nc, s, ahat, stats](detail::Node& self) {
        auto* ga = grad_of(self, 0);
        auto* gm = grad_of(self, 1);
        const auto& mv = self.parents[1]->value;
        const real inv_s = 1.0 / static_cast<real>(s);
        for (int k = 0; k < nc; ++k) {
            const std::size_t off = static_cast<std::size_t>(k) * s;
            const real r_a = (*stats)[3 * k], mu_m = (*stats)[3 * k + 1], sd_m = (*stats)[3 * k + 2];
            real sum_g = 0.0, sum_gh = 0.0;
            for (std::size_t j = 0; j < s; ++j) {
                sum_g += self.grad[off + j];
                sum_gh += self.grad[off + j] * (*ahat)[off + j];
            }
            if (ga) {
                // d/da of standardisation, with upstream gy * sd_m
                const real m1 = sum_g * sd_m * inv_s, m2 = sum_gh * sd_m * inv_s;
                for (std::size_t j = 0; j < s; ++j)
                    (*ga)[off + j] += r_a * (self.grad[off + j] * sd_m - m1 - (*ahat)[off + j] * m2);
            }
            if (gm) {
                const real dsd = sd_m > 0.0 ? sum_gh / (static_cast<real>(s) * sd_m) : 0.0;
                for (std::size_t j = 0; j < s; ++j) (*gm)[off + j] += sum_g * inv_s + dsd * (mv[off + j] - mu_m);
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    require_same(a, b, "add");
    std::vector<real> out(a.numel());
    const auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        for (std::size_t k = 0; k < 2; ++k)
            if (auto* g = grad_of(self, k))
                for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same(a, b, "sub");
    std::vector<real> out(a.numel());
    const auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        if (auto* g = grad_of(self, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
        if (auto* g = grad_of(self, 1))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same(a, b, "mul");
    std::vector<real> out(a.numel());
    const auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        if (auto* g = grad_of(self, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
        if (auto* g = grad_of(self, 1))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    });
}

Tensor scale(const Tensor& a, real s) {
    std::vector<real> out(a.numel());
    const auto av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
    return Tensor::make_result(a.shape(), std::move(out), {a}, [s](detail::Node& self) {
        if (auto* g = grad_of(self, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * s;
    });
}

Tensor add_scalar(const Tensor& a, real s) {
    std::vector<real> out(a.numel());
    const auto av = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + s;
    return Tensor::make_result(a.shape(), std::move(out), {a}, [](detail::Node& self) {
        if (auto* g = grad_of(self, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& v) {
    require_shape(x, 4, "add_channel_bias input");
    require_shape(v, 2, "add_channel_bias vector");
    require(v.dim(0) == x.dim(0) && v.dim(1) == x.dim(1), "add_channel_bias: shape mismatch " +
                                                              shape_str(x.shape()) + " vs " + shape_str(v.shape()));
    const std::size_t nc = static_cast<std::size_t>(x.dim(0)) * x.dim(1);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    std::vector<real> out(x.numel());
    const auto xv = x.data(), vv = v.data();
    for (std::size_t k = 0; k < nc; ++k)
        for (std::size_t j = 0; j < hw; ++j) out[k * hw + j] = xv[k * hw + j] + vv[k];
    return Tensor::make_result(x.shape(), std::move(out), {x, v}, [nc, hw](detail::Node& self) {
        if (auto* g = grad_of(self, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
        if (auto* g = grad_of(self, 1))
            for (std::size_t k = 0; k < nc; ++k)
                for (std::size_t j = 0; j < hw; ++j) (*g)[k] += self.grad[k * hw + j];
    });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_shape(a, 4, "concat_channels");
    require_shape(b, 4, "concat_channels");
    require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
            "concat_channels: batch/spatial mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    const std::size_t hw = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
    const std::size_t sa = ca * hw, sb = cb * hw;
    std::vector<real> out(a.numel() + b.numel());
    for (int i = 0; i < n; ++i) {
        std::copy_n(a.data().data() + i * sa, sa, out.data() + i * (sa + sb));
        std::copy_n(b.data().data() + i * sb, sb, out.data() + i * (sa + sb) + sa);
    }
    return Tensor::make_result({n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {a, b}, [n, sa, sb](detail::Node& self) {
        if (auto* g = grad_of(self, 0))
            for (int i = 0; i < n; ++i)
                for (std::size_t j = 0; j < sa; ++j) (*g)[i * sa + j] += self.grad[i * (sa + sb) + j];
        if (auto* g = grad_of(self, 1))
            for (int i = 0; i < n; ++i)
                for (std::size_t j = 0; j < sb; ++j) (*g)[i * sb + j] += self.grad[i * (sa + sb) + sa + j];
    });
}

Tensor avg_pool2(const Tensor& x) {
    require_shape(x, 4, "avg_pool2");
    require(x.dim(2) % 2 == 0 && x.dim(3) % 2 == 0, "avg_pool2: spatial dims must be even");
    const int nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3), ho = h / 2, wo = w / 2;
    std::vector<real> out(static_cast<std::size_t>(nc) * ho * wo);
    const auto xv = x.data();
    for (int k = 0; k < nc; ++k)
        for (int y = 0; y < ho; ++y)
            for (int xx = 0; xx < wo; ++xx) {
                const std::size_t base = static_cast<std::size_t>(k) * h * w;
                out[(static_cast<std::size_t>(k) * ho + y) * wo + xx] =
                    0.25 * (xv[base + (2 * y) * w + 2 * xx] + xv[base + (2 * y) * w + 2 * xx + 1] +
                            xv[base + (2 * y + 1) * w + 2 * xx] + xv[base + (2 * y + 1) * w + 2 * xx + 1]);
            }
    return Tensor::make_result({x.dim(0), x.dim(1), ho, wo}, std::move(out), {x}, [nc, h, w, ho, wo](detail::Node& self) {
        auto* g = grad_of(self, 0);
        if (!g) return;
        for (int k = 0; k < nc; ++k)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx)
                    (*g)[(static_cast<std::size_t>(k) * h + y) * w + xx] +=
                        0.25 * self.grad[(static_cast<std::size_t>(k) * ho + y / 2) * wo + xx / 2];
    });
}

Tensor upsample_nearest2(const Tensor& x) {
    require_shape(x, 4, "upsample_nearest2");
    const int nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3), ho = 2 * h, wo = 2 * w;
    std::vector<real> out(static_cast<std::size_t>(nc) * ho * wo);
    const auto xv = x.data();
    for (int k = 0; k < nc; ++k)
        for (int y = 0; y < ho; ++y)
            for (int xx = 0; xx < wo; ++xx)
                out[(static_cast<std::size_t>(k) * ho + y) * wo + xx] = xv[(static_cast<std::size_t>(k) * h + y / 2) * w + xx / 2];
    return Tensor::make_result({x.dim(0), x.dim(1), ho, wo}, std::move(out), {x}, [nc, h, w, ho, wo](detail::Node& self) {
        auto* g = grad_of(self, 0);
        if (!g) return;
        for (int k = 0; k < nc; ++k)
            for (int y = 0; y < ho; ++y)
                for (int xx = 0; xx < wo; ++xx)
                    (*g)[(static_cast<std::size_t>(k) * h + y / 2) * w + xx / 2] +=
                        self.grad[(static_cast<std::size_t>(k) * ho + y) * wo + xx];
    });
}

// ---------------------------------------------------------------------------
// Reductions and losses

Tensor mean(const Tensor& x) {
    require(x.numel() > 0, "mean of empty tensor");
    real s = 0.0;
    for (real v : x.data()) s += v;
    const real inv = 1.0 / static_cast<real>(x.numel());
    return Tensor::make_result({1}, {s * inv}, {x}, [inv](detail::Node& self) {
        if (auto* g = grad_of(self, 0))
            for (auto& v : *g) v += self.grad[0] * inv;
    });
}

Tensor weighted_mse(const Tensor& target, const Tensor& pred, const Tensor& weight) {
    require_shape(pred, 4, "weighted_mse prediction");
    require_same(target, pred, "weighted_mse");
    require_shape(weight, 4, "weighted_mse weight");
    require(weight.dim(0) == pred.dim(0) && weight.dim(1) == 1 && weight.dim(2) == pred.dim(2) &&
                weight.dim(3) == pred.dim(3),
            "weighted_mse: weight must be (N,1,H,W) matching " + shape_str(pred.shape()) + ", got " +
                shape_str(weight.shape()));
    const int n = pred.dim(0), c = pred.dim(1);
    const std::size_t hw = static_cast<std::size_t>(pred.dim(2)) * pred.dim(3);
    const auto tv = target.data(), pv = pred.data(), wv = weight.data();
    real s = 0.0;
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
            for (std::size_t j = 0; j < hw; ++j) {
                const std::size_t k = (static_cast<std::size_t>(i) * c + ch) * hw + j;
                const real r = tv[k] - pv[k];
                s += wv[static_cast<std::size_t>(i) * hw + j] * (r * r);
            }
    const real inv = 1.0 / static_cast<real>(pred.numel());
    return Tensor::make_result({1}, {s * inv}, {target, pred, weight}, [n, c, hw, inv](detail::Node& self) {
        const auto& tv = self.parents[0]->value;
        const auto& pv = self.parents[1]->value;
        const auto& wv = self.parents[2]->value;
        auto* gt = grad_of(self, 0);
        auto* gp = grad_of(self, 1);
        auto* gw = grad_of(self, 2);
        const real g0 = self.grad[0] * inv;
        for (int i = 0; i < n; ++i)
            for (int ch = 0; ch < c; ++ch)
                for (std::size_t j = 0; j < hw; ++j) {
                    const std::size_t k = (static_cast<std::size_t>(i) * c + ch) * hw + j;
                    const std::size_t wk = static_cast<std::size_t>(i) * hw + j;
                    const real r = tv[k] - pv[k];
                    const real d = 2.0 * g0 * wv[wk] * r;
                    if (gt) (*gt)[k] += d;
                    if (gp) (*gp)[k] -= d;
                    if (gw) (*gw)[wk] += g0 * r * r;
                }
    });
}

Tensor mse(const Tensor& target, const Tensor& pred) {
    require_same(target, pred, "mse");
    if (pred.ndim() == 4)
        return weighted_mse(target, pred, Tensor::full({pred.dim(0), 1, pred.dim(2), pred.dim(3)}, 1.0));
    return mean(mul(sub(target, pred), sub(target, pred)));
}

Tensor l1(const Tensor& target, const Tensor& pred) {
    require_same(target, pred, "l1");
    real s = 0.0;
    const auto tv = target.data(), pv = pred.data();
    for (std::size_t i = 0; i < pv.size(); ++i) s += std::abs(tv[i] - pv[i]);
    const real inv = 1.0 / static_cast<real>(pred.numel());
    return Tensor::make_result({1}, {s * inv}, {target, pred}, [inv](detail::Node& self) {
        const auto& tv = self.parents[0]->value;
        const auto& pv = self.parents[1]->value;
        auto* gt = grad_of(self, 0);
        auto* gp = grad_of(self, 1);
        for (std::size_t i = 0; i < tv.size(); ++i) {
            const real r = tv[i] - pv[i];
            const real sgn = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
            if (gt) (*gt)[i] += self.grad[0] * inv * sgn;
            if (gp) (*gp)[i] -= self.grad[0] * inv * sgn;
        }
    });
}

Tensor timestep_embedding(const std::vector<int>& ts, int dim) {
    require(dim >= 2 && dim % 2 == 0, "timestep_embedding: dim must be even");
    const int half = dim / 2;
    std::vector<real> out(ts.size() * static_cast<std::size_t>(dim));
    for (std::size_t n = 0; n < ts.size(); ++n)
        for (int i = 0; i < half; ++i) {
            const real freq = half == 1 ? 1.0 : std::pow(10000.0, -static_cast<real>(i) / (half - 1));
            const real arg = ts[n] * freq;
            out[n * dim + i] = std::sin(arg);
            out[n * dim + half + i] = std::cos(arg);
        }
    return Tensor::from({static_cast<int>(ts.size()), dim}, std::move(out));
}

Tensor timestep_embedding(int t, int dim) { return timestep_embedding(std::vector<int>{t}, dim); }

}  // namespace texadiff::nn
