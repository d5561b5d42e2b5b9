#include <cmath>
#include <numbers>
#include <random>

#include "abpn/error.hpp"
#include "abpn/imaging.hpp"

namespace abpn {

ImageBuffer synthetic_image(int height, int width, std::uint64_t seed, double detail) {
  if (height < 1 || width < 1) throw DimensionError("synthetic_image", "extent", "image must be at least 1x1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  struct Grating {
    double fy, fx, phase, amplitude;
  };
  struct Disc {
    double cy, cx, radius, softness;
    double color[3];
  };
  std::vector<Grating> gratings[3];
  for (auto& channel : gratings)
    for (int i = 0; i < 3; ++i)
      channel.push_back({(unit(rng) * 2.0 - 1.0) * detail, (unit(rng) * 2.0 - 1.0) * detail,
                         unit(rng) * 2.0 * std::numbers::pi, 0.08 + 0.08 * unit(rng)});
  std::vector<Disc> discs(3);
  for (auto& d : discs) {
    d.cy = unit(rng) * height;
    d.cx = unit(rng) * width;
    d.radius = (0.15 + 0.25 * unit(rng)) * std::min(height, width);
    d.softness = 1.0 + 2.0 * unit(rng);
    for (double& c : d.color) c = unit(rng) - 0.5;
  }
  double base[3];
  for (double& b : base) b = 0.35 + 0.3 * unit(rng);

  ImageBuffer img(height, width, 0.0, Provenance::synthetic_float);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double v = static_cast<double>(y) / height;
      const double u = static_cast<double>(x) / width;
      for (int c = 0; c < 3; ++c) {
        double value = base[c];
        for (const auto& g : gratings[c])
          value += g.amplitude * std::sin(2.0 * std::numbers::pi * (g.fy * v + g.fx * u) + g.phase);
        for (const auto& d : discs) {
          const double r = std::hypot(y - d.cy, x - d.cx);
          value += 0.25 * d.color[c] / (1.0 + std::exp((r - d.radius) / d.softness));
        }
        img.at(y, x, c) = value;
      }
    }
  img.clamp();
  return img;
}

}  // namespace abpn
