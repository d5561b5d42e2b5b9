#include "abpn/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "abpn/error.hpp"

namespace abpn {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);

void check_same_dims(const char* op, const LumaPlane& a, const LumaPlane& b) {
  if (a.height != b.height) throw DimensionError(op, "height", std::to_string(a.height) + " vs " + std::to_string(b.height));
  if (a.width != b.width) throw DimensionError(op, "width", std::to_string(a.width) + " vs " + std::to_string(b.width));
}

std::vector<double> gaussian_window() {
  std::vector<double> w(kWindow);
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Valid-mode separable filtering of f(a, b) with the Gaussian window.
template <class F>
std::vector<double> filter_valid(const LumaPlane& a, const LumaPlane& b, const std::vector<double>& w, F f) {
  const int oh = a.height - kWindow + 1;
  const int ow = a.width - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(a.height) * ow);
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += w[k] * f(a.at(y, x + k), b.at(y, x + k));
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += w[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

std::string format_double(double v, int decimals) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

LumaPlane rgb_to_y(const ImageBuffer& img) {
  LumaPlane out{img.height(), img.width(), {}};
  out.values.resize(static_cast<std::size_t>(img.height()) * img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out.values[static_cast<std::size_t>(y) * img.width() + x] =
          16.0 + 65.481 * img.at(y, x, 0) + 128.553 * img.at(y, x, 1) + 24.966 * img.at(y, x, 2);
  return out;
}

LumaPlane crop_border(const LumaPlane& plane, int border) {
  if (border < 0) throw DimensionError("crop_border", "border", "negative border");
  if (2 * border >= plane.height || 2 * border >= plane.width)
    throw DimensionError("crop_border", "border",
                         "border " + std::to_string(border) + " too large for " + std::to_string(plane.height) + "x" +
                             std::to_string(plane.width));
  LumaPlane out{plane.height - 2 * border, plane.width - 2 * border, {}};
  out.values.reserve(static_cast<std::size_t>(out.height) * out.width);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.values.push_back(plane.at(y + border, x + border));
  return out;
}

double psnr(const LumaPlane& a, const LumaPlane& b, int border) {
  check_same_dims("psnr", a, b);
  const LumaPlane ca = crop_border(a, border);
  const LumaPlane cb = crop_border(b, border);
  double sse = 0.0;
  for (std::size_t i = 0; i < ca.values.size(); ++i) {
    const double d = ca.values[i] - cb.values[i];
    sse += d * d;
  }
  if (sse == 0.0) return kPsnrIdentical;
  const double mse = sse / static_cast<double>(ca.values.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const LumaPlane& a, const LumaPlane& b, int border) {
  check_same_dims("ssim", a, b);
  const LumaPlane ca = crop_border(a, border);
  const LumaPlane cb = crop_border(b, border);
  if (ca.height < kWindow || ca.width < kWindow)
    throw DimensionError("ssim", ca.height < kWindow ? "height" : "width",
                         "image smaller than the 11x11 window after cropping");
  const auto w = gaussian_window();
  const auto mu_a = filter_valid(ca, cb, w, [](double x, double) { return x; });
  const auto mu_b = filter_valid(ca, cb, w, [](double, double y) { return y; });
  const auto e_aa = filter_valid(ca, cb, w, [](double x, double) { return x * x; });
  const auto e_bb = filter_valid(ca, cb, w, [](double, double y) { return y * y; });
  const auto e_ab = filter_valid(ca, cb, w, [](double x, double y) { return x * y; });
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
  }
  return total / static_cast<double>(mu_a.size());
}

ImageBuffer self_ensemble_sr(const SrFunction& sr, const ImageBuffer& lr, const std::vector<int>& transforms) {
  if (transforms.empty()) throw std::invalid_argument("self_ensemble_sr: empty transform list");
  ImageBuffer sum;
  for (int k : transforms) {
    ImageBuffer out = dihedral_inverse(sr(dihedral(lr, k)), k);
    if (sum.empty()) {
      sum = std::move(out);
      continue;
    }
    if (out.height() != sum.height() || out.width() != sum.width())
      throw DimensionError("self_ensemble_sr", "extent", "transform outputs disagree in size");
    for (std::size_t i = 0; i < sum.data().size(); ++i) sum.data()[i] += out.data()[i];
  }
  const double n = static_cast<double>(transforms.size());
  for (double& v : sum.data()) v /= n;
  return sum;
}

void MetricsReport::merge(const MetricsReport& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  per_image.insert(per_image.end(), other.per_image.begin(), other.per_image.end());
  for (const auto& h : other.header)
    if (std::find(header.begin(), header.end(), h) == header.end()) header.push_back(h);
  skipped_files += other.skipped_files;
  infinite_psnr += other.infinite_psnr;
}

MetricsReport score_pairs(const std::string& dataset, const std::string& method, int scale,
                          const std::vector<std::string>& names, const std::vector<ImageBuffer>& sr,
                          const std::vector<ImageBuffer>& hr) {
  if (sr.size() != hr.size() || names.size() != hr.size())
    throw std::invalid_argument("score_pairs: mismatched list lengths");
  if (hr.empty()) throw std::invalid_argument("score_pairs: empty dataset");
  MetricsReport report;
  report.header.push_back("border: " + std::to_string(scale));
  double psnr_sum = 0.0, ssim_sum = 0.0;
  int finite = 0;
  for (std::size_t i = 0; i < hr.size(); ++i) {
    const LumaPlane ys = rgb_to_y(sr[i]);
    const LumaPlane yh = rgb_to_y(hr[i]);
    const double p = psnr(ys, yh, scale);
    const double s = ssim(ys, yh, scale);
    report.per_image.push_back({method, names[i], p, s});
    if (std::isinf(p)) {
      ++report.infinite_psnr;
    } else {
      psnr_sum += p;
      ++finite;
    }
    ssim_sum += s;
  }
  if (report.infinite_psnr > 0)
    std::cerr << "warning: " << report.infinite_psnr << " image(s) with identical output excluded from mean PSNR\n";
  const double mean_psnr = finite > 0 ? psnr_sum / finite : kPsnrIdentical;
  report.rows.push_back({dataset, scale, method, mean_psnr, ssim_sum / static_cast<double>(hr.size())});
  return report;
}

MetricsReport evaluate(const SrFunction& sr, const std::string& method, const std::string& dataset_dir, int scale,
                       bool ensemble) {
  namespace fs = std::filesystem;
  const fs::path root(dataset_dir);
  const fs::path hr_dir = fs::is_directory(root / "HR") ? root / "HR" : root;
  std::string dataset = root.filename().string();
  if (dataset.empty()) dataset = root.parent_path().filename().string();

  std::vector<std::string> names;
  std::vector<ImageBuffer> outputs, targets;
  int skipped = 0;
  for (const auto& path : list_png_files(hr_dir.string())) {
    ImageBuffer hr;
    try {
      hr = mod_crop(png_read(path), scale);
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << path << ": " << e.what() << "\n";
      ++skipped;
      continue;
    }
    const ImageBuffer lr = degrade(hr, DegradationConfig{scale, 0.0, 0});
    outputs.push_back(ensemble ? self_ensemble_sr(sr, lr) : sr(lr));
    targets.push_back(std::move(hr));
    names.push_back(fs::path(path).filename().string());
  }
  if (targets.empty()) throw std::runtime_error("evaluate: no readable images in " + hr_dir.string());
  MetricsReport report = score_pairs(dataset, method, scale, names, outputs, targets);
  report.skipped_files = skipped;
  report.header.push_back(std::string("ensemble: ") + (ensemble ? "true" : "false"));
  if (skipped > 0) report.header.push_back("skipped_files: " + std::to_string(skipped));
  return report;
}

std::string report_csv(const MetricsReport& report) {
  std::ostringstream out;
  for (const auto& h : report.header) out << "# " << h << "\n";
  out << "Dataset,Scale,Method,PSNR,SSIM\n";
  for (const auto& r : report.rows)
    out << r.dataset << "," << r.scale << "," << r.method << "," << format_double(r.psnr, 4) << ","
        << format_double(r.ssim, 6) << "\n";
  return out.str();
}

std::string report_per_image_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "Method,Image,PSNR,SSIM\n";
  for (const auto& s : report.per_image)
    out << s.method << "," << s.filename << "," << format_double(s.psnr, 4) << "," << format_double(s.ssim, 6) << "\n";
  return out.str();
}

std::string report_table(const MetricsReport& report) {
  std::vector<std::array<std::string, 5>> cells{{"Dataset", "Scale", "Method", "PSNR", "SSIM"}};
  for (const auto& r : report.rows)
    cells.push_back({r.dataset, "x" + std::to_string(r.scale), r.method, format_double(r.psnr, 2),
                     format_double(r.ssim, 4)});
  std::array<std::size_t, 5> width{};
  for (const auto& row : cells)
    for (std::size_t c = 0; c < 5; ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream out;
  for (const auto& h : report.header) out << h << "\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t c = 0; c < 5; ++c) {
      const std::string& s = cells[i][c];
      // Text columns left-aligned, numbers right-aligned.
      if (c < 3)
        out << s << std::string(width[c] - s.size(), ' ');
      else
        out << std::string(width[c] - s.size(), ' ') << s;
      out << (c + 1 < 5 ? "  " : "\n");
    }
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out << std::string(total + 8, '-') << "\n";
    }
  }
  return out.str();
}

}  // namespace abpn
