#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "abpn/autograd.hpp"
#include "abpn/imaging.hpp"

namespace abpn {

enum class FusionMode { attention, concatenation };
enum class RefineMode { none, post_bp, rbpb };

std::string to_string(FusionMode mode);
std::string to_string(RefineMode mode);
FusionMode parse_fusion_mode(std::string_view text);
RefineMode parse_refine_mode(std::string_view text);

/// Kernel / stride / pad of the projection (de)convolutions.
struct ProjectionGeometry {
  int kernel = 6;
  int stride = 4;
  int pad = 1;
};

/// α=2 → 6/2/2, α=4 → 6/4/1, α=8 → 10/8/1.
ProjectionGeometry projection_for_scale(int scale);

struct NetworkConfig {
  int scale = 4;
  int channels = 32;
  int stages = 4;
  FusionMode fusion = FusionMode::attention;
  RefineMode refine = RefineMode::rbpb;

  ProjectionGeometry projection() const { return projection_for_scale(scale); }

  /// Throws ConfigError unless the projection geometry maps n → α·n → n.
  void validate() const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

enum class InitKind { conv, deconv, attention, bias, slope };

/// One learnable tensor in the layout: hierarchical name plus logical dims.
struct ParameterSpec {
  std::string name;
  std::vector<std::int64_t> dims;
  InitKind init = InitKind::conv;

  std::int64_t numel() const;
};

/// Deterministic parameter layout for a configuration, in forward order.
std::vector<ParameterSpec> parameter_layout(const NetworkConfig& config);

/// Total learnable scalars.
std::int64_t count_parameters(const NetworkConfig& config);

/// Learnable scalars whose name starts with `prefix`.
std::int64_t count_parameters(const NetworkConfig& config, std::string_view prefix);

/// Scalars in the stage fusion layers only (attention or concatenation).
std::int64_t count_fusion_parameters(const NetworkConfig& config);

template <class T>
struct Parameter {
  std::string name;
  std::vector<std::int64_t> dims;
  Var<T> var;
};

/// Named parameters generated from a NetworkConfig.
template <class T>
class ModelWeights {
 public:
  ModelWeights() = default;

  /// Fan-in scaled Gaussian conv/deconv/attention weights, zero biases,
  /// PReLU slopes 0.25.
  static ModelWeights initialize(const NetworkConfig& config, std::uint64_t seed);

  /// All-zero tensors with the layout of `config` (slopes included).
  static ModelWeights zeros(const NetworkConfig& config);

  const Var<T>& operator[](std::string_view name) const;
  const Var<T>* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  std::vector<Parameter<T>>& parameters() noexcept { return params_; }
  const std::vector<Parameter<T>>& parameters() const noexcept { return params_; }

  std::int64_t total_elements() const;
  void zero_grad();
  void add(Parameter<T> p);

  template <class U>
  ModelWeights<U> cast() const {
    ModelWeights<U> out;
    for (const auto& p : params_) out.add(Parameter<U>{p.name, p.dims, make_var(p.var->value.template cast<U>(), true)});
    return out;
  }

 private:
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Attention matrices and g-branch maps captured for inspection.
template <class T>
struct AttentionTrace {
  std::vector<std::string> labels;
  std::vector<Tensor<T>> attention;  // N×1×C×C
  std::vector<Tensor<T>> projected;  // g-branch, N×C×h×w
};

struct ShapeTraceEntry {
  std::string stage;
  Shape shape;
};

/// A Tape, the weights and the config bundled for one forward pass. The
/// optional sinks collect attention maps and per-stage output shapes.
template <class T>
struct ForwardContext {
  Tape<T>& tape;
  const ModelWeights<T>& weights;
  const NetworkConfig& config;
  AttentionTrace<T>* trace = nullptr;
  std::vector<ShapeTraceEntry>* shapes = nullptr;
};

template <class T>
Var<T> conv_layer(ForwardContext<T>& ctx, const std::string& name, const Var<T>& x, int stride, int pad);
template <class T>
Var<T> deconv_layer(ForwardContext<T>& ctx, const std::string& name, const Var<T>& x);
template <class T>
Var<T> activation(ForwardContext<T>& ctx, const std::string& name, const Var<T>& x);

/// conv3×3 → PReLU → conv1×1 → PReLU → self-attention.
template <class T>
Var<T> feature_extract(ForwardContext<T>& ctx, const Var<T>& image);

/// out = X + softmax(θ(X)·φ(X)ᵀ)·g(X), channel×channel attention.
template <class T>
Var<T> self_attention(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x);

/// out = Y + softmax(θ(X)·φ(X)ᵀ)·g(Y). θ, φ read the basis X; g reads Y.
template <class T>
Var<T> spatial_attention(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x, const Var<T>& y);

/// Enhanced up-projection: LR n×n → HR αn×αn with one error-feedback pass.
template <class T>
Var<T> up_projection(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& lr);

/// Enhanced down-projection: HR αn×αn → LR n×n with one error-feedback pass.
template <class T>
Var<T> down_projection(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& hr);

/// Concatenate HR stage features with the up-sampled final LR features and
/// map to RGB with a 3×3 convolution.
template <class T>
Var<T> reconstruct(ForwardContext<T>& ctx, const std::vector<Var<T>>& hr_features, const Var<T>& lr_final);

/// Residual back-projection against the LR input. In rbpb mode the LR
/// residue passes through a learned conv stack; post_bp uses it directly.
template <class T>
Var<T> rbpb_refine(ForwardContext<T>& ctx, const Var<T>& sr_estimate, const Var<T>& lr_input);

/// Full network: N×3×n×n → N×3×αn×αn.
template <class T>
Var<T> forward(ForwardContext<T>& ctx, const Var<T>& lr);

/// Shape trace of one forward pass, for `inspect`.
std::vector<ShapeTraceEntry> trace_shapes(const NetworkConfig& config, const ModelWeights<float>& weights, Shape probe);

// ---------------------------------------------------------------------------
// Image-level helpers.

Tensor<float> image_to_tensor(const ImageBuffer& img);
Tensor<float> images_to_tensor(const std::vector<const ImageBuffer*>& imgs);
ImageBuffer tensor_to_image(const Tensor<float>& t, std::int64_t index = 0);

using SrFunction = std::function<ImageBuffer(const ImageBuffer&)>;

/// Inference closure over a frozen model. Safe to call concurrently.
SrFunction make_sr_function(const NetworkConfig& config, const ModelWeights<float>& weights);

/// Plain bicubic up-sampling by `scale`, the evaluation baseline.
SrFunction make_bicubic_function(int scale);

}  // namespace abpn
