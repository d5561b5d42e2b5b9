#include <cmath>
#include <random>
#include <stdexcept>

#include "abpn/error.hpp"
#include "abpn/model.hpp"
#include "abpn/ops.hpp"

namespace abpn {

std::string to_string(FusionMode mode) { return mode == FusionMode::attention ? "attention" : "concatenation"; }

std::string to_string(RefineMode mode) {
  switch (mode) {
    case RefineMode::none: return "none";
    case RefineMode::post_bp: return "post_bp";
    case RefineMode::rbpb: return "rbpb";
  }
  return "unknown";
}

FusionMode parse_fusion_mode(std::string_view text) {
  if (text == "attention") return FusionMode::attention;
  if (text == "concatenation" || text == "concat") return FusionMode::concatenation;
  throw ConfigError("unknown fusion mode '" + std::string(text) + "' (expected attention|concatenation)");
}

RefineMode parse_refine_mode(std::string_view text) {
  if (text == "none") return RefineMode::none;
  if (text == "post_bp") return RefineMode::post_bp;
  if (text == "rbpb") return RefineMode::rbpb;
  throw ConfigError("unknown refine mode '" + std::string(text) + "' (expected none|post_bp|rbpb)");
}

ProjectionGeometry projection_for_scale(int scale) {
  switch (scale) {
    case 2: return {6, 2, 2};
    case 4: return {6, 4, 1};
    case 8: return {10, 8, 1};
    default: throw ConfigError("unsupported scale " + std::to_string(scale) + " (expected 2, 4 or 8)");
  }
}

void NetworkConfig::validate() const {
  const ProjectionGeometry g = projection();
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (stages < 1) throw ConfigError("stages must be >= 1");
  for (std::int64_t n = 1; n <= 64; ++n) {
    if (ops::deconv_out_extent(n, g.kernel, g.stride, g.pad) != scale * n ||
        ops::conv_out_extent(scale * n, g.kernel, g.stride, g.pad) != n)
      throw ConfigError("projection geometry does not satisfy n -> scale*n -> n");
  }
}

std::int64_t ParameterSpec::numel() const {
  std::int64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

namespace {

void add_conv(std::vector<ParameterSpec>& out, const std::string& name, std::int64_t cin, std::int64_t cout,
              std::int64_t k, InitKind init = InitKind::conv) {
  out.push_back({name + ".weight", {cout, cin, k, k}, init});
  out.push_back({name + ".bias", {cout}, InitKind::bias});
}

void add_deconv(std::vector<ParameterSpec>& out, const std::string& name, std::int64_t cin, std::int64_t cout,
                std::int64_t k) {
  out.push_back({name + ".weight", {cin, cout, k, k}, InitKind::deconv});
  out.push_back({name + ".bias", {cout}, InitKind::bias});
}

void add_act(std::vector<ParameterSpec>& out, const std::string& name, std::int64_t c) {
  out.push_back({name + ".slope", {c}, InitKind::slope});
}

void add_attention(std::vector<ParameterSpec>& out, const std::string& prefix, std::int64_t c) {
  for (const char* branch : {"theta", "phi", "g"}) add_conv(out, prefix + "." + branch, c, c, 1, InitKind::attention);
}

}  // namespace

std::vector<ParameterSpec> parameter_layout(const NetworkConfig& config) {
  config.validate();
  const std::int64_t c = config.channels;
  const std::int64_t k = config.projection().kernel;
  std::vector<ParameterSpec> out;

  add_conv(out, "feat.conv0", 3, c, 3);
  add_act(out, "feat.act0", c);
  add_conv(out, "feat.conv1", c, c, 1);
  add_act(out, "feat.act1", c);
  add_attention(out, "feat.attn", c);

  for (int t = 1; t <= config.stages; ++t) {
    const std::string stage = "stage" + std::to_string(t);
    add_deconv(out, stage + ".up.deconv0", c, c, k);
    add_act(out, stage + ".up.act0", c);
    add_conv(out, stage + ".up.conv1", c, c, k);
    add_act(out, stage + ".up.act1", c);
    add_deconv(out, stage + ".up.deconv2", c, c, k);
    add_act(out, stage + ".up.act2", c);

    add_conv(out, stage + ".down.conv0", c, c, k);
    add_act(out, stage + ".down.act0", c);
    add_deconv(out, stage + ".down.deconv1", c, c, k);
    add_act(out, stage + ".down.act1", c);
    add_conv(out, stage + ".down.conv2", c, c, k);
    add_act(out, stage + ".down.act2", c);

    if (config.fusion == FusionMode::attention)
      add_attention(out, stage + ".fuse", c);
    else
      add_conv(out, stage + ".fuse.compress", (t + 1) * c, c, 1, InitKind::attention);
  }

  add_deconv(out, "recon.lr_up", c, c, k);
  add_conv(out, "recon.conv", (config.stages + 1) * c, 3, 3);

  if (config.refine == RefineMode::rbpb) {
    add_conv(out, "refine.conv0", 3, c, 3);
    add_act(out, "refine.act0", c);
    add_conv(out, "refine.conv1", c, c, 1);
    add_act(out, "refine.act1", c);
    add_conv(out, "refine.conv2", c, 3, 3);
  }
  return out;
}

std::int64_t count_parameters(const NetworkConfig& config) { return count_parameters(config, ""); }

std::int64_t count_parameters(const NetworkConfig& config, std::string_view prefix) {
  std::int64_t total = 0;
  for (const auto& spec : parameter_layout(config))
    if (spec.name.starts_with(prefix)) total += spec.numel();
  return total;
}

std::int64_t count_fusion_parameters(const NetworkConfig& config) {
  std::int64_t total = 0;
  for (const auto& spec : parameter_layout(config))
    if (spec.name.find(".fuse.") != std::string::npos) total += spec.numel();
  return total;
}

namespace {

Shape storage_shape(const std::vector<std::int64_t>& dims) {
  if (dims.size() == 4) return Shape{dims[0], dims[1], dims[2], dims[3]};
  if (dims.size() == 1) return Shape{1, dims[0], 1, 1};
  throw std::invalid_argument("parameter rank must be 1 or 4");
}

double init_stddev(const ParameterSpec& spec) {
  const auto& d = spec.dims;
  switch (spec.init) {
    case InitKind::conv: return std::sqrt(2.0 / static_cast<double>(d[1] * d[2] * d[3]));
    case InitKind::attention: return std::sqrt(1.0 / static_cast<double>(d[1] * d[2] * d[3]));
    case InitKind::deconv: {
      // Each output pixel of a stride-s deconv sees about (k/s)² taps per input channel.
      const double k = static_cast<double>(d[2]);
      return std::sqrt(2.0 / (static_cast<double>(d[0]) * k * k));
    }
    default: return 0.0;
  }
}

}  // namespace

template <class T>
void ModelWeights<T>::add(Parameter<T> p) {
  if (index_.count(p.name)) throw std::invalid_argument("duplicate parameter name " + p.name);
  index_.emplace(p.name, params_.size());
  params_.push_back(std::move(p));
}

template <class T>
ModelWeights<T> ModelWeights<T>::zeros(const NetworkConfig& config) {
  ModelWeights<T> w;
  for (const auto& spec : parameter_layout(config))
    w.add(Parameter<T>{spec.name, spec.dims, make_var(Tensor<T>(storage_shape(spec.dims)), true)});
  return w;
}

template <class T>
ModelWeights<T> ModelWeights<T>::initialize(const NetworkConfig& config, std::uint64_t seed) {
  ModelWeights<T> w;
  std::mt19937_64 rng(seed);
  const auto layout = parameter_layout(config);
  for (const auto& spec : layout) {
    Tensor<T> value(storage_shape(spec.dims));
    if (spec.init == InitKind::slope) {
      value.fill(T(0.25));
    } else if (spec.init != InitKind::bias) {
      std::normal_distribution<double> dist(0.0, init_stddev(spec));
      for (auto& v : value.data()) v = static_cast<T>(dist(rng));
    }
    w.add(Parameter<T>{spec.name, spec.dims, make_var(std::move(value), true)});
  }
  return w;
}

template <class T>
const Var<T>* ModelWeights<T>::find(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second].var;
}

template <class T>
const Var<T>& ModelWeights<T>::operator[](std::string_view name) const {
  if (const Var<T>* v = find(name)) return *v;
  throw std::out_of_range("no parameter named " + std::string(name));
}

template <class T>
std::int64_t ModelWeights<T>::total_elements() const {
  std::int64_t total = 0;
  for (const auto& p : params_) total += static_cast<std::int64_t>(p.var->value.size());
  return total;
}

template <class T>
void ModelWeights<T>::zero_grad() {
  for (auto& p : params_) p.var->zero_grad();
}

template class ModelWeights<float>;
template class ModelWeights<double>;

}  // namespace abpn
