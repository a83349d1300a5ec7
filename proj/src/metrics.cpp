#include "texadiff/metrics.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"

#include "texadiff/error.hpp"

namespace texadiff {

std::string MetricReport::to_json() const {
    nlohmann::ordered_json j;
    if (psnr) {
        if (std::isinf(*psnr)) j["psnr"] = "inf";
        else j["psnr"] = *psnr;
    }
    if (ssim) j["ssim"] = *ssim;
    if (mask_accuracy) j["mask_accuracy"] = *mask_accuracy;
    if (mask_iou) j["mask_iou"] = *mask_iou;
    return j.dump();
}

double psnr(const Image& a, const Image& b) {
    require(a.same_shape(b), "psnr: dimension mismatch");
    double sse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        sse += d * d;
    }
    if (sse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / (sse / static_cast<double>(a.data.size())));
}

double ssim(const Image& a, const Image& b) {
    require(a.same_dims(b), "ssim: dimension mismatch");
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const auto s = gaussian_window_stats(to_grayscale(a), to_grayscale(b), 11, 1.5);
    double acc = 0.0;
    for (std::size_t i = 0; i < s.mu_a.size(); ++i) {
        const double num = (2.0 * s.mu_a[i] * s.mu_b[i] + c1) * (2.0 * s.cov_ab[i] + c2);
        const double den = (s.mu_a[i] * s.mu_a[i] + s.mu_b[i] * s.mu_b[i] + c1) * (s.var_a[i] + s.var_b[i] + c2);
        acc += num / den;
    }
    return s.mu_a.empty() ? 1.0 : acc / static_cast<double>(s.mu_a.size());
}

double mask_accuracy(const BinaryMask& pred, const BinaryMask& oracle) {
    require(pred.same_dims(oracle), "mask_accuracy: dimension mismatch");
    if (pred.data.empty()) return 100.0;
    std::size_t match = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) match += pred.data[i] == oracle.data[i];
    return 100.0 * static_cast<double>(match) / static_cast<double>(pred.data.size());
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
    require(a.same_dims(b), "mask_iou: dimension mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        inter += a.data[i] && b.data[i];
        uni += a.data[i] || b.data[i];
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace texadiff
