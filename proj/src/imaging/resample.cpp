#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "abpn/error.hpp"
#include "abpn/imaging.hpp"

namespace abpn {

ImageBuffer::ImageBuffer(int height, int width, double fill, Provenance provenance)
    : height_(height), width_(width), provenance_(provenance) {
  if (height < 0 || width < 0) throw DimensionError("image", "extent", "negative image size");
  data_.assign(static_cast<std::size_t>(height) * width * 3, fill);
}

ImageBuffer ImageBuffer::crop(int top, int left, int height, int width) const {
  if (top < 0 || left < 0 || top + height > height_ || left + width > width_ || height < 0 || width < 0)
    throw DimensionError("crop", "extent",
                         "window " + std::to_string(height) + "x" + std::to_string(width) + "@(" +
                             std::to_string(top) + "," + std::to_string(left) + ") outside " +
                             std::to_string(height_) + "x" + std::to_string(width_));
  ImageBuffer out(height, width, 0.0, provenance_);
  for (int y = 0; y < height; ++y) {
    const double* src = &at(top + y, left, 0);
    std::copy_n(src, static_cast<std::size_t>(width) * 3, &out.at(y, 0, 0));
  }
  return out;
}

void ImageBuffer::clamp() {
  for (double& v : data_) v = std::clamp(v, 0.0, 1.0);
}

std::vector<std::uint8_t> ImageBuffer::to_bytes() const {
  std::vector<std::uint8_t> out(data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(data_[i], 0.0, 1.0) * 255.0));
  return out;
}

ImageBuffer ImageBuffer::from_bytes(int height, int width, const std::vector<std::uint8_t>& rgb) {
  ImageBuffer img(height, width, 0.0, Provenance::loaded_8bit);
  if (rgb.size() != img.data_.size()) throw DimensionError("from_bytes", "length", "byte count does not match size");
  for (std::size_t i = 0; i < rgb.size(); ++i) img.data_[i] = rgb[i] / 255.0;
  return img;
}

double keys_kernel(double x, double a) {
  const double ax = std::abs(x);
  if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
  return 0.0;
}

std::array<double, 4> keys_taps(double phase) {
  return {keys_kernel(1.0 + phase), keys_kernel(phase), keys_kernel(1.0 - phase), keys_kernel(2.0 - phase)};
}

Eigen::MatrixXd bicubic_matrix(int in, int out) {
  if (in < 1) throw DimensionError("bicubic_matrix", "input", "empty input extent");
  if (out < 1) throw DimensionError("bicubic_matrix", "target", "target extent must be >= 1");
  const double scale = static_cast<double>(out) / in;
  const bool shrink = scale < 1.0;
  const double width = shrink ? 4.0 / scale : 4.0;
  const int taps = static_cast<int>(std::ceil(width)) + 2;

  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(out, in);
  std::vector<double> w(static_cast<std::size_t>(taps));
  for (int i = 0; i < out; ++i) {
    const double centre = (i + 0.5) / scale - 0.5;
    const int left = static_cast<int>(std::floor(centre - width / 2.0));
    double total = 0.0;
    for (int t = 0; t < taps; ++t) {
      const double d = centre - (left + t);
      w[t] = shrink ? scale * keys_kernel(scale * d) : keys_kernel(d);
      total += w[t];
    }
    for (int t = 0; t < taps; ++t) {
      const int j = std::clamp(left + t, 0, in - 1);
      m(i, j) += w[t] / total;
    }
  }
  return m;
}

ImageBuffer bicubic_resize(const ImageBuffer& img, int out_height, int out_width) {
  if (out_height < 1 || out_width < 1) throw DimensionError("bicubic_resize", "target", "zero-size target");
  if (img.empty()) throw DimensionError("bicubic_resize", "input", "empty image");
  const Eigen::MatrixXd rows = bicubic_matrix(img.height(), out_height);
  const Eigen::MatrixXd cols = bicubic_matrix(img.width(), out_width);

  ImageBuffer out(out_height, out_width, 0.0, Provenance::synthetic_float);
  Eigen::MatrixXd plane(img.height(), img.width());
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) plane(y, x) = img.at(y, x, c);
    const Eigen::MatrixXd res = rows * plane * cols.transpose();
    for (int y = 0; y < out_height; ++y)
      for (int x = 0; x < out_width; ++x) out.at(y, x, c) = res(y, x);
  }
  return out;
}

namespace {
int scaled_extent(int extent, double factor) {
  const double exact = extent * factor;
  const double nearest = std::round(exact);
  if (std::abs(exact - nearest) < 1e-9) return static_cast<int>(nearest);
  return static_cast<int>(std::ceil(exact));
}
}  // namespace

ImageBuffer bicubic_resize(const ImageBuffer& img, double factor) {
  if (!(factor > 0.0)) throw DimensionError("bicubic_resize", "scale", "scale factor must be positive");
  return bicubic_resize(img, scaled_extent(img.height(), factor), scaled_extent(img.width(), factor));
}

ImageBuffer mod_crop(const ImageBuffer& img, int scale) {
  return img.crop(0, 0, img.height() - img.height() % scale, img.width() - img.width() % scale);
}

ImageBuffer degrade(const ImageBuffer& hr, const DegradationConfig& cfg) {
  if (cfg.scale < 1) throw ConfigError("degrade: scale must be >= 1");
  if (cfg.noise_sigma < 0.0) throw ConfigError("degrade: noise sigma must be >= 0");
  if (hr.height() % cfg.scale != 0)
    throw DimensionError("degrade", "height", std::to_string(hr.height()) + " not divisible by " + std::to_string(cfg.scale));
  if (hr.width() % cfg.scale != 0)
    throw DimensionError("degrade", "width", std::to_string(hr.width()) + " not divisible by " + std::to_string(cfg.scale));

  ImageBuffer lr = bicubic_resize(hr, hr.height() / cfg.scale, hr.width() / cfg.scale);
  if (cfg.noise_sigma > 0.0) {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (double& v : lr.data()) v += noise(rng);
  }
  lr.clamp();
  return lr;
}

ImageBuffer dihedral(const ImageBuffer& img, int k) {
  if (k < 0 || k > 7) throw std::out_of_range("dihedral: k must be in 0..7, got " + std::to_string(k));
  const int h = img.height(), w = img.width();
  const bool flip = k >= 4;
  const int turns = k % 4;
  const bool swap = turns % 2 == 1;
  ImageBuffer out(swap ? w : h, swap ? h : w, 0.0, img.provenance());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int fx = flip ? w - 1 - x : x;
      // Quarter turns counter-clockwise: (y, x) -> (w-1-x, y).
      int oy = y, ox = fx;
      switch (turns) {
        case 1: oy = w - 1 - fx; ox = y; break;
        case 2: oy = h - 1 - y; ox = w - 1 - fx; break;
        case 3: oy = fx; ox = h - 1 - y; break;
        default: break;
      }
      for (int c = 0; c < 3; ++c) out.at(oy, ox, c) = img.at(y, x, c);
    }
  return out;
}

ImageBuffer dihedral_inverse(const ImageBuffer& img, int k) {
  if (k < 0 || k > 7) throw std::out_of_range("dihedral_inverse: k must be in 0..7, got " + std::to_string(k));
  // Rotations invert to the opposite turn; flip-then-rotate elements are involutions.
  if (k >= 4) return dihedral(img, k);
  return dihedral(img, (4 - k) % 4);
}

std::vector<PatchPair> extract_patch_pairs(const ImageBuffer& hr, const DegradationConfig& cfg, int patch,
                                           int count, std::uint64_t sampler_seed) {
  if (patch < 1) throw DimensionError("extract_patch_pairs", "patch", "patch size must be >= 1");
  const ImageBuffer cropped = mod_crop(hr, cfg.scale);
  const int lr_h = cropped.height() / cfg.scale;
  const int lr_w = cropped.width() / cfg.scale;
  if (lr_h < patch) throw DimensionError("extract_patch_pairs", "height", "image smaller than patch");
  if (lr_w < patch) throw DimensionError("extract_patch_pairs", "width", "image smaller than patch");

  const ImageBuffer lr = degrade(cropped, cfg);
  std::mt19937_64 rng(sampler_seed);
  std::uniform_int_distribution<int> pick_y(0, lr_h - patch);
  std::uniform_int_distribution<int> pick_x(0, lr_w - patch);
  std::vector<PatchPair> pairs;
  pairs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int y = pick_y(rng);
    const int x = pick_x(rng);
    pairs.push_back(PatchPair{lr.crop(y, x, patch, patch),
                              cropped.crop(y * cfg.scale, x * cfg.scale, patch * cfg.scale, patch * cfg.scale), y, x});
  }
  return pairs;
}

}  // namespace abpn
