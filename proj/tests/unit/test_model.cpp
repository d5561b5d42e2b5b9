#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "abpn/error.hpp"
#include "abpn/gradcheck.hpp"
#include "abpn/gradient_suite.hpp"
#include "abpn/model.hpp"
#include "abpn/ops.hpp"
#include "abpn/weights_io.hpp"
#include "helpers.hpp"

using namespace abpn;
using abpn::testing::random_image;

namespace {

NetworkConfig small_config(int scale = 4, int channels = 2, int stages = 1,
                           FusionMode fusion = FusionMode::attention, RefineMode refine = RefineMode::rbpb) {
  return NetworkConfig{scale, channels, stages, fusion, refine};
}

template <class T>
void set(const ModelWeights<T>& w, const std::string& name, std::vector<T> values) {
  auto& t = w[name]->value;
  ASSERT_EQ(t.size(), values.size()) << name;
  std::copy(values.begin(), values.end(), t.data().begin());
}

template <class T>
void fill_random(const ModelWeights<T>& w, std::uint64_t seed, double stddev = 0.3) {
  for (const auto& p : w.parameters()) {
    const auto r = random_tensor<T>(p.var->value.shape(), seed++, stddev);
    std::copy(r.data().begin(), r.data().end(), p.var->value.data().begin());
  }
}

std::int64_t layer_params(const NetworkConfig& cfg, const std::string& layer) {
  std::int64_t total = 0;
  for (const auto& p : parameter_layout(cfg))
    if (p.name == layer + ".weight" || p.name == layer + ".bias") total += p.numel();
  return total;
}

std::vector<int> ranking(const Tensor<double>& a, std::int64_t row, std::int64_t cols) {
  std::vector<int> idx(static_cast<std::size_t>(cols));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int i, int j) { return a.at(0, 0, row, i) > a.at(0, 0, row, j); });
  return idx;
}

}  // namespace

TEST(Config, ProjectionGeometryPerScale) {
  EXPECT_EQ(projection_for_scale(2).kernel, 6);
  EXPECT_EQ(projection_for_scale(2).pad, 2);
  EXPECT_EQ(projection_for_scale(4).stride, 4);
  EXPECT_EQ(projection_for_scale(8).kernel, 10);
  EXPECT_EQ(projection_for_scale(8).stride, 8);
  EXPECT_THROW(projection_for_scale(3), ConfigError);
  for (int scale : {2, 4, 8}) EXPECT_NO_THROW(small_config(scale).validate());
  EXPECT_THROW((NetworkConfig{4, 0, 1}).validate(), ConfigError);
  EXPECT_THROW((NetworkConfig{4, 8, 0}).validate(), ConfigError);
}

TEST(Config, ModeNames) {
  EXPECT_EQ(parse_fusion_mode("attention"), FusionMode::attention);
  EXPECT_EQ(parse_refine_mode(to_string(RefineMode::post_bp)), RefineMode::post_bp);
  EXPECT_THROW(parse_refine_mode("bp"), ConfigError);
}

TEST(Counts, SingleLayers) {
  const NetworkConfig cfg;  // C = 32
  EXPECT_EQ(layer_params(cfg, "feat.conv1"), 1056);
  EXPECT_EQ(layer_params(cfg, "stage1.up.conv1"), 36896);
  EXPECT_EQ(layer_params(cfg, "stage1.down.conv0"), 36896);
}

TEST(Counts, FeatureExtraction) {
  const NetworkConfig cfg;
  std::int64_t convs = 0, slopes = 0;
  for (const auto& p : parameter_layout(cfg)) {
    if (!p.name.starts_with("feat.")) continue;
    (p.init == InitKind::slope ? slopes : convs) += p.numel();
  }
  EXPECT_EQ(convs, 5120);
  EXPECT_EQ(slopes, 2 * 32);  // one learnable slope per channel for each of the two activations
  EXPECT_EQ(count_parameters(cfg, "feat."), 5120 + 2 * 32);
}

TEST(Counts, ReconstructionConv) {
  EXPECT_EQ(layer_params(NetworkConfig{4, 32, 2}, "recon.conv"), 2595);
}

TEST(Counts, TotalIsSumOfLayout) {
  for (const auto& cfg : {NetworkConfig{}, NetworkConfig{8, 16, 3}, small_config(2, 3, 2, FusionMode::concatenation)}) {
    std::int64_t total = 0;
    for (const auto& p : parameter_layout(cfg)) {
      std::int64_t n = 1;
      for (auto d : p.dims) n *= d;
      total += n;
    }
    EXPECT_EQ(count_parameters(cfg), total);
    EXPECT_EQ(ModelWeights<float>::zeros(cfg).total_elements(), total);
  }
}

TEST(Counts, PostBpAddsNothing) {
  for (int scale : {2, 4, 8})
    EXPECT_EQ(count_parameters(NetworkConfig{scale, 32, 4, FusionMode::attention, RefineMode::post_bp}),
              count_parameters(NetworkConfig{scale, 32, 4, FusionMode::attention, RefineMode::none}));
}

TEST(Counts, AttentionFusionIsConstantPerStage) {
  for (int c : {4, 32})
    for (int t : {1, 2, 5}) {
      const NetworkConfig cfg{4, c, t};
      EXPECT_EQ(count_fusion_parameters(cfg), t * 3 * (c * c + c));
    }
}

TEST(Counts, ConcatenationFusionOvertakesAttention) {
  // Per stage t the compression conv maps (t+1)·C → C, so the concatenation
  // total is C²·(T²+3T)/2 + T·C against 3T·(C²+C).
  for (int c : {8, 32, 64})
    for (int t = 4; t <= 7; ++t) {
      const NetworkConfig att{4, c, t, FusionMode::attention};
      const NetworkConfig cat{4, c, t, FusionMode::concatenation};
      const std::int64_t expected_cat = static_cast<std::int64_t>(c) * c * (t * t + 3 * t) / 2 + t * c;
      EXPECT_EQ(count_fusion_parameters(cat), expected_cat);
      EXPECT_GE(count_fusion_parameters(cat), count_fusion_parameters(att)) << "C=" << c << " T=" << t;
    }
}

TEST(Counts, LayoutIsPureFunctionOfConfig) {
  const NetworkConfig cfg{8, 5, 3, FusionMode::concatenation, RefineMode::rbpb};
  const auto a = parameter_layout(cfg), b = parameter_layout(cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(a[i].dims, b[i].dims);
  }
}

TEST(Init, SeededAndStructured) {
  const NetworkConfig cfg = small_config(4, 4, 2);
  const auto a = ModelWeights<float>::initialize(cfg, 3), b = ModelWeights<float>::initialize(cfg, 3);
  const auto c = ModelWeights<float>::initialize(cfg, 4);
  bool differs = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto& pa = a.parameters()[i];
    const auto va = pa.var->value.data();
    const auto vb = b.parameters()[i].var->value.data();
    const auto vc = c.parameters()[i].var->value.data();
    EXPECT_TRUE(std::equal(va.begin(), va.end(), vb.begin())) << pa.name;
    differs = differs || !std::equal(va.begin(), va.end(), vc.begin());
    if (pa.name.ends_with(".slope"))
      for (float v : va) EXPECT_EQ(v, 0.25f);
    if (pa.name.ends_with(".bias"))
      for (float v : va) EXPECT_EQ(v, 0.0f);
  }
  EXPECT_TRUE(differs);
}

TEST(FeatureExtract, ShapeAndAnnihilation) {
  const NetworkConfig cfg = small_config(4, 5);
  Tape<float> tape;
  const auto zeros = ModelWeights<float>::zeros(cfg);
  ForwardContext<float> ctx{tape, zeros, cfg};
  auto out = feature_extract(ctx, make_var(random_tensor<float>({1, 3, 32, 32}, 1)));
  EXPECT_EQ(out->value.shape(), (Shape{1, 5, 32, 32}));
  for (float v : out->value.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(feature_extract(ctx, make_var(Tensor<float>({1, 4, 8, 8}))), DimensionError);
}

TEST(SelfAttention, ZeroLogitsAverageG) {
  const NetworkConfig cfg = small_config(4, 3);
  auto w = ModelWeights<double>::zeros(cfg);
  fill_random(w, 10);
  for (const char* n : {"feat.attn.theta.weight", "feat.attn.theta.bias", "feat.attn.phi.weight", "feat.attn.phi.bias"})
    w[n]->value.fill(0.0);
  Tape<double> tape;
  ForwardContext<double> ctx{tape, w, cfg};
  auto x = make_var(random_tensor<double>({2, 3, 4, 5}, 11));
  auto out = self_attention(ctx, "feat.attn", x);
  auto g = ops::conv2d(tape, x, w["feat.attn.g.weight"], w["feat.attn.g.bias"], 1, 0);
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t y = 0; y < 4; ++y)
        for (std::int64_t xx = 0; xx < 5; ++xx) {
          double mean = 0.0;
          for (std::int64_t k = 0; k < 3; ++k) mean += g->value.at(n, k, y, xx) / 3.0;
          EXPECT_NEAR(out->value.at(n, c, y, xx), x->value.at(n, c, y, xx) + mean, 1e-12);
        }
}

TEST(SelfAttention, HandEvaluatedTwoChannels) {
  const NetworkConfig cfg = small_config(4, 2);
  auto w = ModelWeights<double>::zeros(cfg);
  // θ(X) = [0, 1] and φ(X) = [0, ln 2] from biases alone, so the logits are
  // [[0, 0], [0, ln 2]]; g is the identity.
  set<double>(w, "feat.attn.theta.bias", {0.0, 1.0});
  set<double>(w, "feat.attn.phi.bias", {0.0, std::log(2.0)});
  set<double>(w, "feat.attn.g.weight", {1.0, 0.0, 0.0, 1.0});
  Tape<double> tape;
  AttentionTrace<double> trace;
  ForwardContext<double> ctx{tape, w, cfg, &trace};
  auto x = abpn::testing::leaf<double>({1, 2, 1, 1}, {3.0, -6.0}, false);
  auto out = self_attention(ctx, "feat.attn", x);
  ASSERT_EQ(trace.attention.size(), 1u);
  const auto& a = trace.attention[0];
  EXPECT_EQ(a.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_NEAR(a[0], 0.5, 1e-15);
  EXPECT_NEAR(a[1], 0.5, 1e-15);
  EXPECT_NEAR(a[2], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(a[3], 2.0 / 3.0, 1e-15);
  // Z = A·X = [0.5·3 + 0.5·(−6), 3/3 + 2·(−6)/3] = [−1.5, −3].
  EXPECT_NEAR(out->value[0], 3.0 - 1.5, 1e-14);
  EXPECT_NEAR(out->value[1], -6.0 - 3.0, 1e-14);
}

TEST(SpatialAttention, SaturatedRowsPickOneChannel) {
  const NetworkConfig cfg = small_config(4, 3);
  auto w = ModelWeights<double>::zeros(cfg);
  fill_random(w, 20);
  const std::string p = "stage1.fuse";
  // Rank-one logits hw·θ_i·φ_j: positive θ_i selects φ's largest channel (0),
  // negative θ_i its smallest (2).
  w[p + ".theta.weight"]->value.fill(0.0);
  w[p + ".phi.weight"]->value.fill(0.0);
  set<double>(w, p + ".theta.bias", {10.0, -10.0, 10.0});
  set<double>(w, p + ".phi.bias", {1.0, 0.0, -1.0});
  const int target[3] = {0, 2, 0};
  Tape<double> tape;
  AttentionTrace<double> trace;
  ForwardContext<double> ctx{tape, w, cfg, &trace};
  auto x = make_var(random_tensor<double>({1, 3, 2, 2}, 21));
  auto y = make_var(random_tensor<double>({1, 3, 2, 2}, 22));
  auto out = spatial_attention(ctx, p, x, y);
  const auto& a = trace.attention[0];
  const auto& g = trace.projected[0];
  for (int i = 0; i < 3; ++i) {
    EXPECT_GT(a.at(0, 0, i, target[i]), 0.999);
    for (std::int64_t yy = 0; yy < 2; ++yy)
      for (std::int64_t xx = 0; xx < 2; ++xx)
        EXPECT_NEAR(out->value.at(0, i, yy, xx), y->value.at(0, i, yy, xx) + g.at(0, target[i], yy, xx), 1e-3);
  }
  EXPECT_THROW(spatial_attention(ctx, p, x, make_var(Tensor<double>({1, 3, 2, 3}))), DimensionError);
}

TEST(SpatialAttention, SelfFusionEqualsSelfAttentionBitwise) {
  const NetworkConfig cfg = small_config(4, 4);
  auto w = ModelWeights<float>::initialize(cfg, 5);
  for (const char* b : {"theta", "phi", "g"}) {
    w[std::string("stage1.fuse.") + b + ".weight"]->value = w[std::string("feat.attn.") + b + ".weight"]->value;
    w[std::string("stage1.fuse.") + b + ".bias"]->value = random_tensor<float>({1, 4, 1, 1}, 6);
    w[std::string("feat.attn.") + b + ".bias"]->value = w[std::string("stage1.fuse.") + b + ".bias"]->value;
  }
  Tape<float> tape;
  ForwardContext<float> ctx{tape, w, cfg};
  auto x = make_var(random_tensor<float>({2, 4, 6, 6}, 7));
  auto a = self_attention(ctx, "feat.attn", x);
  auto b = spatial_attention(ctx, "stage1.fuse", x, x);
  EXPECT_TRUE(std::equal(a->value.data().begin(), a->value.data().end(), b->value.data().begin()));
}

TEST(Attention, RowStochasticAndChannelSquare) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const NetworkConfig cfg = small_config(2, 6, 2);
    auto w = ModelWeights<float>::initialize(cfg, seed);
    Tape<float> tape;
    NoGradGuard<float> guard(tape);
    AttentionTrace<float> trace;
    ForwardContext<float> ctx{tape, w, cfg, &trace};
    forward(ctx, make_var(random_tensor<float>({2, 3, 8, 8}, seed + 100, 2.0)));
    ASSERT_EQ(trace.attention.size(), 3u);  // feature extraction plus one per stage
    for (const auto& a : trace.attention) {
      ASSERT_EQ(a.shape(), (Shape{2, 1, 6, 6}));
      for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t r = 0; r < 6; ++r) {
          double total = 0.0;
          for (std::int64_t c = 0; c < 6; ++c) total += a.at(n, 0, r, c);
          EXPECT_NEAR(total, 1.0, 1e-5);
        }
    }
  }
}

TEST(Attention, SharpeningPreservesRowRanking) {
  const NetworkConfig cfg = small_config(4, 5);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto w = ModelWeights<double>::zeros(cfg);
    fill_random(w, seed * 50);
    auto x = make_var(random_tensor<double>({1, 5, 3, 3}, seed + 1));
    auto attention_of = [&](double factor) {
      auto scaled = w;
      for (const char* n : {"feat.attn.theta.weight", "feat.attn.theta.bias"}) {
        auto v = make_var(w[n]->value);
        for (auto& e : v->value.data()) e *= factor;
        for (auto& p : scaled.parameters())
          if (p.name == n) p.var = v;
      }
      // Rebuild the lookup with the swapped vars.
      ModelWeights<double> rebuilt;
      for (const auto& p : scaled.parameters()) rebuilt.add(p);
      Tape<double> tape;
      AttentionTrace<double> trace;
      ForwardContext<double> ctx{tape, rebuilt, cfg, &trace};
      self_attention(ctx, "feat.attn", x);
      return trace.attention[0];
    };
    const auto base = attention_of(1.0), sharp = attention_of(3.0);
    for (std::int64_t r = 0; r < 5; ++r) EXPECT_EQ(ranking(base, r, 5), ranking(sharp, r, 5)) << "seed " << seed;
  }
}

TEST(UpProjection, ShapesAndAnnihilation) {
  const NetworkConfig cfg = small_config(4, 3);
  auto w = ModelWeights<float>::initialize(cfg, 1);
  for (auto& p : w.parameters())
    if (p.name.ends_with(".bias")) p.var->value.fill(0.0f);
  Tape<float> tape;
  ForwardContext<float> ctx{tape, w, cfg};
  auto hr = up_projection(ctx, "stage1.up", make_var(random_tensor<float>({1, 3, 3, 3}, 2)));
  EXPECT_EQ(hr->value.shape(), (Shape{1, 3, 12, 12}));
  auto zero = up_projection(ctx, "stage1.up", make_var(Tensor<float>({1, 3, 3, 3})));
  for (float v : zero->value.data()) EXPECT_EQ(v, 0.0f);
  auto lr = down_projection(ctx, "stage1.down", hr);
  EXPECT_EQ(lr->value.shape(), (Shape{1, 3, 3, 3}));
  auto zero_lr = down_projection(ctx, "stage1.down", make_var(Tensor<float>({1, 3, 128, 128})));
  EXPECT_EQ(zero_lr->value.shape(), (Shape{1, 3, 32, 32}));
  for (float v : zero_lr->value.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(down_projection(ctx, "stage1.down", make_var(Tensor<float>({1, 3, 30, 32}))), DimensionError);
}

TEST(UpProjection, ErrorFeedbackFixedPoint) {
  // Per-channel kernels: deconv stamps a 4×4 block of ones (taps 1..4 of the
  // 6×6 kernel), conv averages the same block. conv(deconv(L)) = L, so the
  // residue vanishes and the block output is the first projection alone.
  const NetworkConfig cfg = small_config(4, 2);
  auto w = ModelWeights<double>::zeros(cfg);
  fill_random(w, 0);
  for (auto& p : w.parameters())
    if (p.name.starts_with("stage1.up.") && p.name != "stage1.up.deconv2.weight") p.var->value.fill(0.0);
  for (const char* n : {"stage1.up.act0.slope", "stage1.up.act1.slope", "stage1.up.act2.slope"}) w[n]->value.fill(0.25);
  auto& d0 = w["stage1.up.deconv0.weight"]->value;
  auto& c1 = w["stage1.up.conv1.weight"]->value;
  for (int ch = 0; ch < 2; ++ch)
    for (int i = 1; i <= 4; ++i)
      for (int j = 1; j <= 4; ++j) {
        d0.at(ch, ch, i, j) = 1.0;
        c1.at(ch, ch, i, j) = 1.0 / 16.0;
      }
  Tensor<double> lr_values = random_tensor<double>({1, 2, 3, 3}, 5);
  for (auto& v : lr_values.data()) v = std::abs(v);  // keep PReLU in its identity branch
  auto lr = make_var(lr_values);
  Tape<double> tape;
  ForwardContext<double> ctx{tape, w, cfg};
  auto h0 = ops::deconv2d(tape, lr, w["stage1.up.deconv0.weight"], Var<double>{}, 4, 1);
  auto l0 = ops::conv2d(tape, h0, w["stage1.up.conv1.weight"], Var<double>{}, 4, 1);
  for (std::size_t i = 0; i < lr_values.size(); ++i) ASSERT_NEAR(l0->value[i], lr_values[i], 1e-14);
  auto out = up_projection(ctx, "stage1.up", lr);
  for (std::size_t i = 0; i < out->value.size(); ++i) EXPECT_NEAR(out->value[i], h0->value[i], 1e-13);
  // H₀ is nearest-neighbour replication of L.
  EXPECT_EQ(h0->value.at(0, 1, 5, 9), lr_values.at(0, 1, 1, 2));
}

TEST(Forward, ShapeContract) {
  for (int scale : {2, 4, 8})
    for (std::int64_t n : {8, 16, 32}) {
      const NetworkConfig cfg = small_config(scale, 2, 1);
      const auto w = ModelWeights<float>::initialize(cfg, 1);
      Tape<float> tape;
      NoGradGuard<float> guard(tape);
      ForwardContext<float> ctx{tape, w, cfg};
      auto out = forward(ctx, make_var(random_tensor<float>({1, 3, n, n}, 2)));
      EXPECT_EQ(out->value.shape(), (Shape{1, 3, scale * n, scale * n}));
    }
}

TEST(Forward, DeterministicAcrossRuns) {
  const NetworkConfig cfg = small_config(4, 4, 2);
  auto run = [&] {
    const auto w = ModelWeights<float>::initialize(cfg, 9);
    return make_sr_function(cfg, w)(random_image(32, 32, 3));
  };
  const ImageBuffer a = run(), b = run();
  EXPECT_EQ(a.height(), 128);
  EXPECT_EQ(a.data(), b.data());
}

TEST(Forward, ConcurrentInferenceMatchesSerial) {
  const NetworkConfig cfg = small_config(4, 4, 2, FusionMode::concatenation);
  const auto sr = make_sr_function(cfg, ModelWeights<float>::initialize(cfg, 2));
  const ImageBuffer in1 = random_image(12, 12, 1), in2 = random_image(12, 12, 2);
  const ImageBuffer s1 = sr(in1), s2 = sr(in2);
  ImageBuffer p1, p2;
  std::thread t1([&] { p1 = sr(in1); });
  std::thread t2([&] { p2 = sr(in2); });
  t1.join();
  t2.join();
  EXPECT_EQ(p1.data(), s1.data());
  EXPECT_EQ(p2.data(), s2.data());
}

TEST(Forward, ShapeTraceForInspect) {
  const NetworkConfig cfg = small_config(4, 2, 2);
  const auto trace = trace_shapes(cfg, ModelWeights<float>::initialize(cfg, 0), Shape{1, 3, 8, 8});
  ASSERT_FALSE(trace.empty());
  EXPECT_EQ(trace.front().stage, "input");
  EXPECT_EQ(trace.back().shape, (Shape{1, 3, 32, 32}));
}

TEST(Refine, ZeroResidualIsFixedPoint) {
  const NetworkConfig cfg = small_config(4, 3, 1);
  auto w = ModelWeights<double>::zeros(cfg);
  fill_random(w, 30);
  for (auto& p : w.parameters())
    if (p.name.starts_with("refine.") && p.name.ends_with(".bias")) p.var->value.fill(0.0);
  auto sr = make_var(random_tensor<double>({1, 3, 16, 16}, 31));
  Tape<double> tape;
  auto lr = ops::resample(tape, sr, bicubic_matrix(16, 4), bicubic_matrix(16, 4));
  ForwardContext<double> ctx{tape, w, cfg};
  auto out = rbpb_refine(ctx, sr, lr);
  ASSERT_EQ(out->value.shape(), sr->value.shape());
  for (std::size_t i = 0; i < out->value.size(); ++i) EXPECT_NEAR(out->value[i], sr->value[i], 1e-12);
}

TEST(Refine, PostBpMatchesImageResampler) {
  const NetworkConfig cfg = small_config(4, 2, 1, FusionMode::attention, RefineMode::post_bp);
  const auto w = ModelWeights<double>::zeros(cfg);
  const ImageBuffer sr_img = random_image(16, 20, 40), lr_img = random_image(4, 5, 41);
  auto to_tensor = [](const ImageBuffer& img) {
    Tensor<double> t({1, 3, img.height(), img.width()});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) t.at(0, c, y, x) = img.at(y, x, c);
    return t;
  };
  Tape<double> tape;
  ForwardContext<double> ctx{tape, w, cfg};
  auto out = rbpb_refine(ctx, make_var(to_tensor(sr_img)), make_var(to_tensor(lr_img)));
  // Oracle: sr + up(lr − down(sr)) using the image-level resampler.
  const ImageBuffer down = bicubic_resize(sr_img, 4, 5);
  ImageBuffer residue(4, 5);
  for (std::size_t i = 0; i < residue.data().size(); ++i) residue.data()[i] = lr_img.data()[i] - down.data()[i];
  const ImageBuffer up = bicubic_resize(residue, 16, 20);
  const Tensor<double> up_t = to_tensor(up), sr_t = to_tensor(sr_img);
  for (std::size_t i = 0; i < out->value.size(); ++i) EXPECT_NEAR(out->value[i], sr_t[i] + up_t[i], 1e-12);
}

TEST(Refine, NoneIsIdentityAndShapesChecked) {
  const NetworkConfig cfg = small_config(4, 2, 1, FusionMode::attention, RefineMode::none);
  const auto w = ModelWeights<double>::zeros(cfg);
  Tape<double> tape;
  ForwardContext<double> ctx{tape, w, cfg};
  auto sr = make_var(random_tensor<double>({1, 3, 16, 16}, 1));
  EXPECT_EQ(rbpb_refine(ctx, sr, make_var(Tensor<double>({1, 3, 4, 4}))), sr);
  EXPECT_THROW(rbpb_refine(ctx, sr, make_var(Tensor<double>({1, 3, 5, 4}))), DimensionError);
}

TEST(Reconstruct, ConcatenatesStagesAndUpsampledLr) {
  const NetworkConfig cfg = small_config(4, 2, 2);
  const auto w = ModelWeights<float>::initialize(cfg, 3);
  Tape<float> tape;
  ForwardContext<float> ctx{tape, w, cfg};
  std::vector<Var<float>> hr{make_var(random_tensor<float>({1, 2, 16, 16}, 1)),
                             make_var(random_tensor<float>({1, 2, 16, 16}, 2))};
  auto out = reconstruct(ctx, hr, make_var(random_tensor<float>({1, 2, 4, 4}, 3)));
  EXPECT_EQ(out->value.shape(), (Shape{1, 3, 16, 16}));
  hr[1] = make_var(random_tensor<float>({1, 2, 12, 12}, 2));
  EXPECT_THROW(reconstruct(ctx, hr, make_var(random_tensor<float>({1, 2, 4, 4}, 3))), DimensionError);
}

TEST(WeightFile, RoundTripIsBitIdentical) {
  const NetworkConfig cfg = small_config(4, 3, 2);
  const auto w = ModelWeights<float>::initialize(cfg, 12);
  std::stringstream first;
  write_weights(first, w);
  const std::string bytes = first.str();
  EXPECT_EQ(bytes.substr(0, 4), "ABPN");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);  // version, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 0u);
  const auto count = parameter_layout(cfg).size();
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), count & 0xFF);
  std::stringstream in(bytes);
  const auto back = read_weights(in, cfg);
  std::stringstream second;
  write_weights(second, back);
  EXPECT_EQ(second.str(), bytes);
}

TEST(WeightFile, RejectsMismatches) {
  const NetworkConfig cfg = small_config(4, 3, 2);
  std::stringstream out;
  write_weights(out, ModelWeights<float>::initialize(cfg, 1));
  const std::string bytes = out.str();
  {
    std::stringstream in(bytes);
    EXPECT_THROW(read_weights(in, small_config(4, 4, 2)), FormatError);
  }
  {
    std::stringstream in(bytes);
    EXPECT_THROW(read_weights(in, small_config(4, 3, 3)), FormatError);
  }
  {
    std::stringstream in("ABPX" + bytes.substr(4));
    EXPECT_THROW(read_weights(in, cfg), FormatError);
  }
  {
    std::stringstream in(bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(read_weights(in, cfg), FormatError);
  }
}

TEST(GradientSuite, AllChecksPass) {
  const auto outcomes = gradient_suite(0);
  ASSERT_FALSE(outcomes.empty());
  bool saw_model = false;
  for (const auto& o : outcomes) {
    EXPECT_TRUE(o.passed) << o.name << " err " << o.max_rel_error;
    EXPECT_LE(o.tolerance, 1e-3);
    saw_model = saw_model || o.name.find("model") != std::string::npos;
  }
  EXPECT_TRUE(saw_model);
}

TEST(GradientSuite, InjectedFaultIsCaught) {
  const auto outcomes = gradient_suite(0, "conv2d");
  EXPECT_TRUE(std::any_of(outcomes.begin(), outcomes.end(), [](const CheckOutcome& o) { return !o.passed; }));
}
