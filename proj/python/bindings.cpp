#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "abpn/error.hpp"
#include "abpn/gradient_suite.hpp"
#include "abpn/metrics.hpp"
#include "abpn/train.hpp"
#include "abpn/weights_io.hpp"

namespace py = pybind11;
using namespace abpn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ImageBuffer to_image(const Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw py::value_error("expected an HxWx3 array");
  ImageBuffer img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::memcpy(img.data().data(), a.data(), img.data().size() * sizeof(double));
  return img;
}

Array to_array(const ImageBuffer& img) {
  Array out({img.height(), img.width(), 3});
  std::memcpy(out.mutable_data(), img.data().data(), img.data().size() * sizeof(double));
  return out;
}

LumaPlane to_plane(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected an HxW luma array");
  LumaPlane p{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), {}};
  p.values.assign(a.data(), a.data() + a.size());
  return p;
}

// Frozen weights plus the inference closure built from them.
struct Model {
  NetworkConfig config;
  ModelWeights<float> weights;
  SrFunction sr;

  Model(NetworkConfig c, ModelWeights<float> w) : config(c), weights(std::move(w)), sr(make_sr_function(config, weights)) {}
};

}  // namespace

PYBIND11_MODULE(_abpn, m) {
  m.doc() = "Attention-based back projection super-resolution";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);

  py::class_<NetworkConfig>(m, "NetworkConfig")
      .def(py::init([](int scale, int channels, int stages, const std::string& fusion, const std::string& refine) {
             NetworkConfig c{scale, channels, stages, parse_fusion_mode(fusion), parse_refine_mode(refine)};
             c.validate();
             return c;
           }),
           py::arg("scale") = 4, py::arg("channels") = 32, py::arg("stages") = 4, py::arg("fusion") = "attention",
           py::arg("refine") = "rbpb")
      .def_readonly("scale", &NetworkConfig::scale)
      .def_readonly("channels", &NetworkConfig::channels)
      .def_readonly("stages", &NetworkConfig::stages)
      .def_property_readonly("fusion", [](const NetworkConfig& c) { return to_string(c.fusion); })
      .def_property_readonly("refine", [](const NetworkConfig& c) { return to_string(c.refine); })
      .def("__repr__", [](const NetworkConfig& c) {
        return "NetworkConfig(scale=" + std::to_string(c.scale) + ", channels=" + std::to_string(c.channels) +
               ", stages=" + std::to_string(c.stages) + ", fusion='" + to_string(c.fusion) + "', refine='" +
               to_string(c.refine) + "')";
      });

  m.def("count_parameters", [](const NetworkConfig& c) { return count_parameters(c); });
  m.def(
      "parameter_layout",
      [](const NetworkConfig& c) {
        std::vector<std::pair<std::string, std::vector<std::int64_t>>> out;
        for (const auto& p : parameter_layout(c)) out.emplace_back(p.name, p.dims);
        return out;
      },
      "(name, dims) for every learnable tensor in storage order");

  py::class_<Model>(m, "Model")
      .def_static(
          "initialize", [](const NetworkConfig& c, std::uint64_t seed) { return Model(c, ModelWeights<float>::initialize(c, seed)); },
          py::arg("config"), py::arg("seed") = 0)
      .def_static(
          "load",
          [](const std::string& path, const NetworkConfig& fallback) {
            auto [config, weights] = load_model(path, fallback);
            return Model(config, std::move(weights));
          },
          py::arg("path"), py::arg("config") = NetworkConfig{},
          "Reads a checkpoint, or a weight file laid out as `config`")
      .def("save", [](const Model& self, const std::string& path) { save_weights(path, self.weights); })
      .def_readonly("config", &Model::config)
      .def(
          "super_resolve",
          [](const Model& self, const Array& lr, bool ensemble) {
            const ImageBuffer in = to_image(lr);
            ImageBuffer out;
            {
              py::gil_scoped_release release;
              out = ensemble ? self_ensemble_sr(self.sr, in) : self.sr(in);
            }
            return to_array(out);
          },
          py::arg("lr"), py::arg("ensemble") = false);

  m.def(
      "bicubic_resize", [](const Array& img, int height, int width) { return to_array(bicubic_resize(to_image(img), height, width)); },
      py::arg("image"), py::arg("height"), py::arg("width"));
  m.def(
      "degrade",
      [](const Array& hr, int scale, double noise_sigma, std::uint64_t seed) {
        return to_array(degrade(to_image(hr), DegradationConfig{scale, noise_sigma, seed}));
      },
      py::arg("hr"), py::arg("scale"), py::arg("noise_sigma") = 0.0, py::arg("seed") = 0);
  m.def(
      "synthetic_image",
      [](int height, int width, std::uint64_t seed, double detail) {
        return to_array(synthetic_image(height, width, seed, detail));
      },
      py::arg("height"), py::arg("width"), py::arg("seed") = 0, py::arg("detail") = 4.0);
  m.def("png_read", [](const std::string& path) { return to_array(png_read(path)); });
  m.def("png_write", [](const std::string& path, const Array& img) { png_write(path, to_image(img)); });

  m.def("rgb_to_y", [](const Array& img) {
    const LumaPlane p = rgb_to_y(to_image(img));
    Array out({p.height, p.width});
    std::memcpy(out.mutable_data(), p.values.data(), p.values.size() * sizeof(double));
    return out;
  });
  m.def(
      "psnr", [](const Array& a, const Array& b, int border) { return psnr(to_plane(a), to_plane(b), border); },
      py::arg("a"), py::arg("b"), py::arg("border") = 0);
  m.def(
      "ssim", [](const Array& a, const Array& b, int border) { return ssim(to_plane(a), to_plane(b), border); },
      py::arg("a"), py::arg("b"), py::arg("border") = 0);

  m.def(
      "gradient_suite",
      [](std::uint64_t seed, const std::string& fault) {
        std::vector<std::tuple<std::string, double, double, bool>> out;
        for (const auto& o : gradient_suite(seed, fault)) out.emplace_back(o.name, o.max_rel_error, o.tolerance, o.passed);
        return out;
      },
      py::arg("seed") = 0, py::arg("inject_fault") = "", "(name, max_rel_error, tolerance, passed) per check");
}
