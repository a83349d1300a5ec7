#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace texadiff {

// H x W x C float field, row-major with interleaved channels, nominally in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, int c, float fill = 0.0f);
    Image(int h, int w, int c, std::vector<float> samples);

    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return data.size(); }
    float& at(int y, int x, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    float at(int y, int x, int c = 0) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    bool same_shape(const Image& o) const { return height == o.height && width == o.width && channels == o.channels; }
    bool same_dims(const Image& o) const { return height == o.height && width == o.width; }
    float mean() const;
};

// Per-pixel Gaussian-windowed first and second moments of two single-channel images.
// Kept in double: the contrast term divides by variances of order 1e-3.
struct LocalStats {
    int height = 0;
    int width = 0;
    std::vector<double> mu_a, mu_b, var_a, var_b, cov_ab;
};

enum class ResizeMode { nearest, bilinear, bicubic, area };

Image load_image(const std::filesystem::path& path);
void save_image(const Image& img, const std::filesystem::path& path);

Image to_grayscale(const Image& img);

// Normalised 1-D Gaussian taps of length `size` (odd), centred.
std::vector<double> gaussian_kernel_1d(int size, double sigma);

// Symmetric border extension index (d c b a | a b c d | d c b a), valid for any offset.
int reflect_index(int i, int n);

LocalStats gaussian_window_stats(const Image& a, const Image& b, int window = 11, double sigma = 1.5);

Image gaussian_blur(const Image& img, double sigma);

Image resize(const Image& img, int new_h, int new_w, ResizeMode mode);

// Rows [0, n) processed by fn(row); split over TEXADIFF_THREADS workers when > 1.
void parallel_rows(int n, const std::function<void(int)>& fn);
int configured_threads();

}  // namespace texadiff
