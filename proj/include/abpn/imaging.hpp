#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace abpn {

enum class Provenance { loaded_8bit, synthetic_float };

/// H×W×3 interleaved RGB, nominally in [0,1]. Resampling may leave values
/// outside that range; they are clamped on 8-bit export.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int height, int width, double fill = 0.0, Provenance provenance = Provenance::synthetic_float);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  static constexpr int channels() noexcept { return 3; }
  bool empty() const noexcept { return data_.empty(); }
  Provenance provenance() const noexcept { return provenance_; }
  void set_provenance(Provenance p) noexcept { provenance_ = p; }

  double& at(int y, int x, int c) noexcept { return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }
  const double& at(int y, int x, int c) const noexcept { return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  ImageBuffer crop(int top, int left, int height, int width) const;
  void clamp();

  /// Quantize to 8-bit with round-half-away-from-zero after clamping.
  std::vector<std::uint8_t> to_bytes() const;
  static ImageBuffer from_bytes(int height, int width, const std::vector<std::uint8_t>& rgb);

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
  Provenance provenance_ = Provenance::synthetic_float;
};

// ---------------------------------------------------------------------------
// Bicubic resampling (Keys kernel, a = -0.5, antialiased when shrinking,
// edge-replicated borders).

constexpr double kKeysA = -0.5;

double keys_kernel(double x, double a = kKeysA);

/// Four interpolation taps for a sample at fractional offset `phase` ∈ [0,1)
/// past a grid point: weights of the samples at −1, 0, +1, +2.
std::array<double, 4> keys_taps(double phase);

/// Dense out×in operator resampling a 1-D signal of length `in` to `out`
/// using pixel-centre alignment. Rows sum to 1.
Eigen::MatrixXd bicubic_matrix(int in, int out);

ImageBuffer bicubic_resize(const ImageBuffer& img, int out_height, int out_width);
/// Resizes both axes by `factor` (e.g. 0.25 or 4); the target extent is
/// ceil(extent·factor).
ImageBuffer bicubic_resize(const ImageBuffer& img, double factor);

// ---------------------------------------------------------------------------
// Degradation model: bicubic down-sampling plus white Gaussian noise.

struct DegradationConfig {
  int scale = 4;
  double noise_sigma = 0.0;  // on the [0,1] scale
  std::uint64_t seed = 0;
};

ImageBuffer degrade(const ImageBuffer& hr, const DegradationConfig& cfg);

/// Crops so both extents are multiples of `scale`.
ImageBuffer mod_crop(const ImageBuffer& img, int scale);

// ---------------------------------------------------------------------------
// Dihedral group D4. k = rotation (k mod 4, quarter turns counter-clockwise)
// applied after an optional horizontal flip (k ≥ 4).

ImageBuffer dihedral(const ImageBuffer& img, int k);
ImageBuffer dihedral_inverse(const ImageBuffer& img, int k);

// ---------------------------------------------------------------------------

struct PatchPair {
  ImageBuffer lr;
  ImageBuffer hr;
  int lr_top = 0;
  int lr_left = 0;
};

/// Degrades `hr` once, then samples `count` aligned crops: an LR patch of
/// `patch`² at a uniformly drawn top-left (y, x) and the HR patch of
/// (scale·patch)² at (scale·y, scale·x).
std::vector<PatchPair> extract_patch_pairs(const ImageBuffer& hr, const DegradationConfig& cfg, int patch,
                                           int count, std::uint64_t sampler_seed);

/// Smooth procedural test image: a few random low-frequency gratings per
/// channel plus soft-edged discs. `detail` scales the highest spatial
/// frequency (cycles across the image).
ImageBuffer synthetic_image(int height, int width, std::uint64_t seed, double detail = 4.0);

// ---------------------------------------------------------------------------
// PNG I/O (8-bit RGB).

ImageBuffer png_read(const std::string& path);

/// `text` entries are stored as tEXt chunks.
void png_write(const std::string& path, const ImageBuffer& img, const std::map<std::string, std::string>& text = {});

/// Reads tEXt chunks, mostly for tests and `inspect`.
std::map<std::string, std::string> png_read_text(const std::string& path);

/// Sorted list of *.png files directly inside `dir`.
std::vector<std::string> list_png_files(const std::string& dir);

}  // namespace abpn
