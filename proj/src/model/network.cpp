#include <string>

#include "abpn/error.hpp"
#include "abpn/model.hpp"
#include "abpn/ops.hpp"

namespace abpn {

template <class T>
Var<T> conv_layer(ForwardContext<T>& ctx, const std::string& name, const Var<T>& x, int stride, int pad) {
  return ops::conv2d(ctx.tape, x, ctx.weights[name + ".weight"], ctx.weights[name + ".bias"], stride, pad);
}

template <class T>
Var<T> deconv_layer(ForwardContext<T>& ctx, const std::string& name, const Var<T>& x) {
  const ProjectionGeometry g = ctx.config.projection();
  return ops::deconv2d(ctx.tape, x, ctx.weights[name + ".weight"], ctx.weights[name + ".bias"], g.stride, g.pad);
}

template <class T>
Var<T> activation(ForwardContext<T>& ctx, const std::string& name, const Var<T>& x) {
  return ops::prelu(ctx.tape, x, ctx.weights[name + ".slope"]);
}

namespace {

template <class T>
Var<T> projection_conv(ForwardContext<T>& ctx, const std::string& name, const Var<T>& x) {
  const ProjectionGeometry g = ctx.config.projection();
  return conv_layer(ctx, name, x, g.stride, g.pad);
}

// Shared body of self- and spatial attention.
template <class T>
Var<T> attention_block(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& basis,
                       const Var<T>& projected) {
  const Shape xs = basis->value.shape();
  const Shape ys = projected->value.shape();
  if (xs != ys) throw DimensionError("spatial_attention", "shape", xs.str() + " vs " + ys.str());

  auto& tape = ctx.tape;
  const Shape flat{xs.n, 1, xs.c, xs.h * xs.w};
  auto theta = ops::reshape(tape, conv_layer(ctx, prefix + ".theta", basis, 1, 0), flat);
  auto phi = ops::reshape(tape, conv_layer(ctx, prefix + ".phi", basis, 1, 0), flat);
  auto g = conv_layer(ctx, prefix + ".g", projected, 1, 0);
  auto attention = ops::softmax_rows(tape, ops::matmul(tape, theta, ops::transpose(tape, phi)));
  auto z = ops::matmul(tape, attention, ops::reshape(tape, g, flat));
  if (ctx.trace) {
    ctx.trace->labels.push_back(prefix);
    ctx.trace->attention.push_back(attention->value);
    ctx.trace->projected.push_back(g->value);
  }
  return ops::add(tape, projected, ops::reshape(tape, z, ys));
}

template <class T>
Var<T> resample_to(Tape<T>& tape, const Var<T>& x, std::int64_t height, std::int64_t width) {
  const Shape& s = x->value.shape();
  return ops::resample(tape, x, bicubic_matrix(static_cast<int>(s.h), static_cast<int>(height)),
                       bicubic_matrix(static_cast<int>(s.w), static_cast<int>(width)));
}

}  // namespace

template <class T>
Var<T> self_attention(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x) {
  return attention_block(ctx, prefix, x, x);
}

template <class T>
Var<T> spatial_attention(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& x, const Var<T>& y) {
  return attention_block(ctx, prefix, x, y);
}

template <class T>
Var<T> feature_extract(ForwardContext<T>& ctx, const Var<T>& image) {
  if (image->value.shape().c != 3)
    throw DimensionError("feature_extract", "channels",
                         "expected 3-channel input, got " + image->value.shape().str());
  auto x = activation(ctx, "feat.act0", conv_layer(ctx, "feat.conv0", image, 1, 1));
  x = activation(ctx, "feat.act1", conv_layer(ctx, "feat.conv1", x, 1, 0));
  return self_attention(ctx, "feat.attn", x);
}

template <class T>
Var<T> up_projection(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& lr) {
  auto& tape = ctx.tape;
  auto h0 = activation(ctx, prefix + ".act0", deconv_layer(ctx, prefix + ".deconv0", lr));
  auto l0 = activation(ctx, prefix + ".act1", projection_conv(ctx, prefix + ".conv1", h0));
  auto residue = ops::sub(tape, l0, lr);
  auto h1 = activation(ctx, prefix + ".act2", deconv_layer(ctx, prefix + ".deconv2", residue));
  return ops::add(tape, h0, h1);
}

template <class T>
Var<T> down_projection(ForwardContext<T>& ctx, const std::string& prefix, const Var<T>& hr) {
  const Shape& s = hr->value.shape();
  const int scale = ctx.config.scale;
  if (s.h % scale != 0)
    throw DimensionError("down_projection", "height", s.str() + " not divisible by scale " + std::to_string(scale));
  if (s.w % scale != 0)
    throw DimensionError("down_projection", "width", s.str() + " not divisible by scale " + std::to_string(scale));
  auto& tape = ctx.tape;
  auto l0 = activation(ctx, prefix + ".act0", projection_conv(ctx, prefix + ".conv0", hr));
  auto h0 = activation(ctx, prefix + ".act1", deconv_layer(ctx, prefix + ".deconv1", l0));
  auto residue = ops::sub(tape, h0, hr);
  auto l1 = activation(ctx, prefix + ".act2", projection_conv(ctx, prefix + ".conv2", residue));
  return ops::add(tape, l0, l1);
}

template <class T>
Var<T> reconstruct(ForwardContext<T>& ctx, const std::vector<Var<T>>& hr_features, const Var<T>& lr_final) {
  if (hr_features.empty()) throw DimensionError("reconstruct", "stages", "no HR features");
  std::vector<Var<T>> parts = hr_features;
  parts.push_back(deconv_layer(ctx, "recon.lr_up", lr_final));
  const Shape& ref = hr_features.front()->value.shape();
  for (const auto& p : parts)
    if (p->value.shape().h != ref.h || p->value.shape().w != ref.w)
      throw DimensionError("reconstruct", "spatial", p->value.shape().str() + " vs " + ref.str());
  return conv_layer(ctx, "recon.conv", ops::concat_channels(ctx.tape, parts), 1, 1);
}

template <class T>
Var<T> rbpb_refine(ForwardContext<T>& ctx, const Var<T>& sr_estimate, const Var<T>& lr_input) {
  const Shape& hs = sr_estimate->value.shape();
  const Shape& ls = lr_input->value.shape();
  const int scale = ctx.config.scale;
  if (hs.h != ls.h * scale) throw DimensionError("rbpb_refine", "height", hs.str() + " vs LR " + ls.str());
  if (hs.w != ls.w * scale) throw DimensionError("rbpb_refine", "width", hs.str() + " vs LR " + ls.str());
  if (ctx.config.refine == RefineMode::none) return sr_estimate;

  auto& tape = ctx.tape;
  auto estimated_lr = resample_to(tape, sr_estimate, ls.h, ls.w);
  auto residue = ops::sub(tape, lr_input, estimated_lr);
  if (ctx.config.refine == RefineMode::rbpb) {
    auto c = activation(ctx, "refine.act0", conv_layer(ctx, "refine.conv0", residue, 1, 1));
    c = activation(ctx, "refine.act1", conv_layer(ctx, "refine.conv1", c, 1, 0));
    residue = conv_layer(ctx, "refine.conv2", c, 1, 1);
  }
  return ops::add(tape, sr_estimate, resample_to(tape, residue, hs.h, hs.w));
}

template <class T>
Var<T> forward(ForwardContext<T>& ctx, const Var<T>& lr) {
  const NetworkConfig& cfg = ctx.config;
  auto note = [&ctx](std::string stage, const Var<T>& v) {
    if (ctx.shapes) ctx.shapes->push_back({std::move(stage), v->value.shape()});
  };
  note("input", lr);
  auto features = feature_extract(ctx, lr);
  note("feat", features);
  std::vector<Var<T>> hr_features;
  std::vector<Var<T>> lr_history{features};
  for (int t = 1; t <= cfg.stages; ++t) {
    const std::string stage = "stage" + std::to_string(t);
    auto hr = up_projection(ctx, stage + ".up", features);
    note(stage + ".up", hr);
    auto lr_raw = down_projection(ctx, stage + ".down", hr);
    note(stage + ".down", lr_raw);
    hr_features.push_back(hr);
    if (cfg.fusion == FusionMode::attention) {
      features = spatial_attention(ctx, stage + ".fuse", lr_raw, features);
    } else {
      lr_history.push_back(lr_raw);
      features = conv_layer(ctx, stage + ".fuse.compress", ops::concat_channels(ctx.tape, lr_history), 1, 0);
    }
    note(stage + ".fuse", features);
  }
  auto sr = reconstruct(ctx, hr_features, features);
  note("recon", sr);
  auto out = rbpb_refine(ctx, sr, lr);
  note("refine(" + to_string(cfg.refine) + ")", out);
  return out;
}

std::vector<ShapeTraceEntry> trace_shapes(const NetworkConfig& config, const ModelWeights<float>& weights,
                                          Shape probe) {
  Tape<float> tape;
  NoGradGuard<float> guard(tape);
  std::vector<ShapeTraceEntry> shapes;
  ForwardContext<float> ctx{tape, weights, config, nullptr, &shapes};
  forward(ctx, make_var(Tensor<float>(probe)));
  return shapes;
}

#define ABPN_INSTANTIATE_NETWORK(T)                                                                          \
  template Var<T> conv_layer(ForwardContext<T>&, const std::string&, const Var<T>&, int, int);              \
  template Var<T> deconv_layer(ForwardContext<T>&, const std::string&, const Var<T>&);                      \
  template Var<T> activation(ForwardContext<T>&, const std::string&, const Var<T>&);                        \
  template Var<T> feature_extract(ForwardContext<T>&, const Var<T>&);                                       \
  template Var<T> self_attention(ForwardContext<T>&, const std::string&, const Var<T>&);                    \
  template Var<T> spatial_attention(ForwardContext<T>&, const std::string&, const Var<T>&, const Var<T>&);  \
  template Var<T> up_projection(ForwardContext<T>&, const std::string&, const Var<T>&);                     \
  template Var<T> down_projection(ForwardContext<T>&, const std::string&, const Var<T>&);                   \
  template Var<T> reconstruct(ForwardContext<T>&, const std::vector<Var<T>>&, const Var<T>&);               \
  template Var<T> rbpb_refine(ForwardContext<T>&, const Var<T>&, const Var<T>&);                            \
  template Var<T> forward(ForwardContext<T>&, const Var<T>&);

ABPN_INSTANTIATE_NETWORK(float)
ABPN_INSTANTIATE_NETWORK(double)

}  // namespace abpn
