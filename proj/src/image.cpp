#include "texadiff/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>
#include <thread>

#include <png.h>

#include "texadiff/error.hpp"

namespace texadiff {

Image::Image(int h, int w, int c, float fill) : height(h), width(w), channels(c) {
    require(h >= 0 && w >= 0, "image dimensions must be non-negative");
    require(c == 1 || c == 3, "image channels must be 1 or 3");
    data.assign(static_cast<std::size_t>(h) * w * c, fill);
}

Image::Image(int h, int w, int c, std::vector<float> samples)
    : height(h), width(w), channels(c), data(std::move(samples)) {
    require(c == 1 || c == 3, "image channels must be 1 or 3");
    require(data.size() == static_cast<std::size_t>(h) * w * c, "image data length does not match dimensions");
    for (float v : data) require(std::isfinite(v), "image samples must be finite");
}

float Image::mean() const {
    if (data.empty()) return 0.0f;
    double s = std::accumulate(data.begin(), data.end(), 0.0);
    return static_cast<float>(s / static_cast<double>(data.size()));
}

int configured_threads() {
    const char* env = std::getenv("TEXADIFF_THREADS");
    int n = 0;
    if (env != nullptr) n = std::atoi(env);
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, n);
}

void parallel_rows(int n, const std::function<void(int)>& fn) {
    const int workers = std::min(configured_threads(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (int i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// PNG I/O

Image load_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IoError("image not found: " + path.string());

    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&png, path.c_str()) == 0)
        throw IoError("cannot read PNG " + path.string() + ": " + png.message);

    const auto fmt = png.format;
    if ((fmt & PNG_FORMAT_FLAG_LINEAR) != 0 || (fmt & PNG_FORMAT_FLAG_ALPHA) != 0 ||
        (fmt & PNG_FORMAT_FLAG_COLORMAP) != 0) {
        png_image_free(&png);
        throw IoError("unsupported PNG (need 8-bit gray or RGB): " + path.string());
    }
    const bool color = (fmt & PNG_FORMAT_FLAG_COLOR) != 0;
    png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

    const int h = static_cast<int>(png.height);
    const int w = static_cast<int>(png.width);
    const int c = color ? 3 : 1;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(png));
    if (png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr) == 0) {
        std::string msg = png.message;
        png_image_free(&png);
        throw IoError("cannot decode PNG " + path.string() + ": " + msg);
    }

    Image img(h, w, c);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(buf[i]) / 255.0f;
    return img;
}

void save_image(const Image& img, const std::filesystem::path& path) {
    require(img.channels == 1 || img.channels == 3, "save_image: channels must be 1 or 3");
    require(img.height > 0 && img.width > 0, "save_image: empty image");
    std::vector<png_byte> buf(img.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        float v = std::clamp(img.data[i], 0.0f, 1.0f);
        buf[i] = static_cast<png_byte>(std::lround(v * 255.0f));
    }
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr) == 0) {
        std::string msg = png.message;
        png_image_free(&png);
        throw IoError("cannot write PNG " + path.string() + ": " + msg);
    }
}

// ---------------------------------------------------------------------------

Image to_grayscale(const Image& img) {
    require(img.channels == 1 || img.channels == 3, "to_grayscale: channels must be 1 or 3");
    if (img.channels == 1) return img;
    Image out(img.height, img.width, 1);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        const float* px = &img.data[p * 3];
        float v = 0.299f * px[0] + 0.587f * px[1] + 0.114f * px[2];
        out.data[p] = std::clamp(v, 0.0f, 1.0f);
    }
    return out;
}

std::vector<double> gaussian_kernel_1d(int size, double sigma) {
    require(size >= 1 && size % 2 == 1, "gaussian kernel size must be odd");
    require(sigma > 0.0, "gaussian sigma must be positive");
    const int r = size / 2;
    std::vector<double> k(size);
    double s = 0.0;
    for (int i = -r; i <= r; ++i) {
        k[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        s += k[i + r];
    }
    for (double& v : k) v /= s;
    return k;
}

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n;
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - 1 - m;
}

namespace {

// Separable correlation of a double plane with a symmetric kernel, reflect borders.
std::vector<double> separable_filter(const std::vector<double>& src, int h, int w, const std::vector<double>& k) {
    const int r = static_cast<int>(k.size()) / 2;
    std::vector<double> tmp(src.size()), out(src.size());
    parallel_rows(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int d = -r; d <= r; ++d) acc += k[d + r] * src[static_cast<std::size_t>(y) * w + reflect_index(x + d, w)];
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    });
    parallel_rows(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int d = -r; d <= r; ++d) acc += k[d + r] * tmp[static_cast<std::size_t>(reflect_index(y + d, h)) * w + x];
            out[static_cast<std::size_t>(y) * w + x] = acc;
        }
    });
    return out;
}

}  // namespace

LocalStats gaussian_window_stats(const Image& a, const Image& b, int window, double sigma) {
    require(a.channels == 1 && b.channels == 1, "gaussian_window_stats: inputs must be single-channel");
    require(a.same_dims(b), "gaussian_window_stats: dimension mismatch");
    require(window >= 1 && window % 2 == 1, "gaussian_window_stats: window must be odd");
    const auto k = gaussian_kernel_1d(window, sigma);
    const std::size_t n = a.data.size();
    std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
    for (std::size_t i = 0; i < n; ++i) {
        pa[i] = a.data[i];
        pb[i] = b.data[i];
        paa[i] = pa[i] * pa[i];
        pbb[i] = pb[i] * pb[i];
        pab[i] = pa[i] * pb[i];
    }
    LocalStats s;
    s.height = a.height;
    s.width = a.width;
    s.mu_a = separable_filter(pa, a.height, a.width, k);
    s.mu_b = separable_filter(pb, a.height, a.width, k);
    auto eaa = separable_filter(paa, a.height, a.width, k);
    auto ebb = separable_filter(pbb, a.height, a.width, k);
    auto eab = separable_filter(pab, a.height, a.width, k);
    s.var_a.resize(n);
    s.var_b.resize(n);
    s.cov_ab.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.var_a[i] = std::max(0.0, eaa[i] - s.mu_a[i] * s.mu_a[i]);
        s.var_b[i] = std::max(0.0, ebb[i] - s.mu_b[i] * s.mu_b[i]);
        s.cov_ab[i] = eab[i] - s.mu_a[i] * s.mu_b[i];
    }
    return s;
}

Image gaussian_blur(const Image& img, double sigma) {
    require(sigma > 0.0, "gaussian_blur: sigma must be positive");
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    const auto k = gaussian_kernel_1d(2 * r + 1, sigma);
    Image out(img.height, img.width, img.channels);
    std::vector<double> plane(img.pixel_count());
    for (int c = 0; c < img.channels; ++c) {
        for (std::size_t p = 0; p < plane.size(); ++p) plane[p] = img.data[p * img.channels + c];
        auto f = separable_filter(plane, img.height, img.width, k);
        for (std::size_t p = 0; p < plane.size(); ++p) out.data[p * img.channels + c] = static_cast<float>(f[p]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

double cubic_weight(double t) {
    constexpr double a = -0.75;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

struct Tap {
    int index;
    double weight;
};

// 1-D sampling taps per output coordinate for the separable modes.
std::vector<std::vector<Tap>> make_taps(int in, int out, ResizeMode mode) {
    std::vector<std::vector<Tap>> taps(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        auto& t = taps[o];
        switch (mode) {
            case ResizeMode::nearest: {
                int i = std::min(in - 1, static_cast<int>(std::floor(o * scale)));
                t.push_back({i, 1.0});
                break;
            }
            case ResizeMode::bilinear: {
                double src = std::max(0.0, (o + 0.5) * scale - 0.5);
                int i0 = std::min(in - 1, static_cast<int>(std::floor(src)));
                int i1 = std::min(in - 1, i0 + 1);
                double f = src - i0;
                t.push_back({i0, 1.0 - f});
                t.push_back({i1, f});
                break;
            }
            case ResizeMode::bicubic: {
                double src = (o + 0.5) * scale - 0.5;
                int i0 = static_cast<int>(std::floor(src));
                double f = src - i0;
                for (int d = -1; d <= 2; ++d) {
                    int idx = std::clamp(i0 + d, 0, in - 1);
                    t.push_back({idx, cubic_weight(d - f)});
                }
                break;
            }
            case ResizeMode::area: {
                double lo = o * scale, hi = (o + 1) * scale;
                int i0 = static_cast<int>(std::floor(lo));
                int i1 = std::min(in - 1, static_cast<int>(std::ceil(hi)) - 1);
                for (int i = i0; i <= i1; ++i) {
                    double ov = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
                    if (ov > 0.0) t.push_back({i, ov / scale});
                }
                break;
            }
        }
    }
    return taps;
}

}  // namespace

Image resize(const Image& img, int new_h, int new_w, ResizeMode mode) {
    require(new_h >= 1 && new_w >= 1, "resize: target dimensions must be >= 1");
    require(img.height >= 1 && img.width >= 1, "resize: empty source image");
    if (new_h == img.height && new_w == img.width) return img;

    const auto ty = make_taps(img.height, new_h, mode);
    const auto tx = make_taps(img.width, new_w, mode);
    const int c = img.channels;

    // Horizontal pass then vertical pass, in double.
    std::vector<double> tmp(static_cast<std::size_t>(img.height) * new_w * c, 0.0);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < new_w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (const auto& tap : tx[x]) acc += tap.weight * img.at(y, tap.index, ch);
                tmp[(static_cast<std::size_t>(y) * new_w + x) * c + ch] = acc;
            }
    Image out(new_h, new_w, c);
    for (int y = 0; y < new_h; ++y)
        for (int x = 0; x < new_w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (const auto& tap : ty[y]) acc += tap.weight * tmp[(static_cast<std::size_t>(tap.index) * new_w + x) * c + ch];
                float v = static_cast<float>(acc);
                if (mode == ResizeMode::bicubic) v = std::clamp(v, 0.0f, 1.0f);
                out.at(y, x, ch) = v;
            }
    return out;
}

}  // namespace texadiff
