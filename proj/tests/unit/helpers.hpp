#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "abpn/autograd.hpp"
#include "abpn/imaging.hpp"

namespace abpn::testing {

template <class T>
Var<T> leaf(Shape s, std::vector<T> values, bool grad = true) {
  return make_var(Tensor<T>(s, std::move(values)), grad);
}

template <class T>
Var<T> scalar(T v, bool grad = true) {
  return make_var(Tensor<T>(Shape{1, 1, 1, 1}, std::vector<T>{v}), grad);
}

inline ImageBuffer random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageBuffer img(h, w);
  for (double& v : img.data()) v = u(rng);
  return img;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("abpn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace abpn::testing
