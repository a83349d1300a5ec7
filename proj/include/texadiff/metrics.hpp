#pragma once

#include <optional>
#include <string>

#include "texadiff/image.hpp"
#include "texadiff/rtdm.hpp"

namespace texadiff {

struct MetricReport {
    std::optional<double> psnr;  // dB; +inf for identical images
    std::optional<double> ssim;
    std::optional<double> mask_accuracy;  // percent
    std::optional<double> mask_iou;

    // One JSON object; infinite PSNR is written as the string "inf".
    std::string to_json() const;
};

double psnr(const Image& a, const Image& b);
double ssim(const Image& a, const Image& b);
double mask_accuracy(const BinaryMask& pred, const BinaryMask& oracle);
double mask_iou(const BinaryMask& a, const BinaryMask& b);

}  // namespace texadiff
