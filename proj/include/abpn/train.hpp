#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "abpn/metrics.hpp"
#include "abpn/model.hpp"
#include "abpn/ops.hpp"

namespace abpn {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 8;
  int iterations = 1000;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int loss_order = 1;
  std::uint64_t seed = 0;
  int log_every = 10;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  bool augment = true;       // random dihedral transform per sample
  bool deterministic = false;  // log wall_ms as 0 so logs are reproducible

  /// Throws ConfigError on a non-positive lr/batch/iterations or r ∉ {1, 2}.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Adam first/second moments in parameter order, plus the step counter.
struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor<float>> m;
  std::vector<Tensor<float>> v;

  static AdamState zeros_like(const ModelWeights<float>& weights);
};

/// g ← grad + weight_decay·p, then a bias-corrected Adam update. Throws if a
/// parameter has no gradient buffer.
void adam_step(ModelWeights<float>& weights, AdamState& state, const TrainConfig& cfg);

/// mean |sr − hr|^r.
template <class T>
Var<T> pixel_loss(Tape<T>& tape, const Var<T>& sr, const Var<T>& hr, int order) {
  return ops::lp_loss(tape, sr, hr, order);
}

struct LogEntry {
  std::int64_t iteration = 0;
  double loss = 0.0;
  std::int64_t wall_ms = 0;
};

/// "iter, loss, wall_ms"
std::string format_log_line(const LogEntry& entry);

/// Patch pairs from every PNG in `hr_dir` (sorted by name), `per_image` each.
std::vector<PatchPair> load_patch_dataset(const std::string& hr_dir, const DegradationConfig& degradation, int patch,
                                          int per_image, std::uint64_t seed);

/// key=value echo of both configs (doubles printed round-trip exact).
std::map<std::string, std::string> config_metadata(const NetworkConfig& network, const TrainConfig& train);

/// Checkpoint contents. The file is the weight format followed by an "ADAM"
/// section (same tensor records, names adam.m.<p> / adam.v.<p>) and a "META"
/// section (u32 length + key=value lines).
struct Checkpoint {
  NetworkConfig network;
  TrainConfig train;
  ModelWeights<float> weights;
  AdamState adam;
  std::int64_t iteration = 0;
  std::map<std::string, std::string> meta;  // sampler and RNG state, echoes
};

Checkpoint read_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::string& path);

/// Network config and weights from either a checkpoint or a bare weight file
/// (the latter needs `fallback` for its layout).
std::pair<NetworkConfig, ModelWeights<float>> load_model(const std::string& path, const NetworkConfig& fallback);

class Trainer {
 public:
  Trainer(const NetworkConfig& network, const TrainConfig& config, std::vector<PatchPair> data);

  /// Restores the full state; `data` must be the same pair list.
  static Trainer resume(const Checkpoint& checkpoint, std::vector<PatchPair> data);

  /// One sample → forward → loss → backward → adam_step iteration.
  double step();

  /// Steps until config().iterations, appending log lines every log_every
  /// iterations (and on the last one). `on_checkpoint` fires every
  /// checkpoint_every iterations.
  void run(std::ostream* log = nullptr, const std::function<void(const Trainer&)>& on_checkpoint = {});

  void write_checkpoint(std::ostream& out) const;
  /// Writes to `path`.tmp then renames, so an interrupted save leaves the
  /// previous file intact.
  void save_checkpoint(const std::string& path) const;

  const NetworkConfig& network() const noexcept { return network_; }
  const TrainConfig& config() const noexcept { return config_; }
  void set_iterations(int iterations) { config_.iterations = iterations; }
  const ModelWeights<float>& weights() const noexcept { return weights_; }
  ModelWeights<float>& weights() noexcept { return weights_; }
  const AdamState& adam() const noexcept { return adam_; }
  std::int64_t iteration() const noexcept { return iteration_; }
  const std::vector<LogEntry>& history() const noexcept { return history_; }
  /// Extra key=value pairs echoed into the checkpoint metadata.
  void set_echo(std::map<std::string, std::string> echo) { echo_ = std::move(echo); }

 private:
  std::size_t next_index();

  NetworkConfig network_;
  TrainConfig config_;
  std::vector<PatchPair> data_;
  ModelWeights<float> weights_;
  AdamState adam_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::int64_t iteration_ = 0;
  std::vector<LogEntry> history_;
  std::map<std::string, std::string> echo_;
};

/// Mean PSNR (RGB, 0–255, no border) over the pairs, model vs bicubic.
struct PatchFit {
  double model_psnr = 0.0;
  double bicubic_psnr = 0.0;
};
PatchFit measure_patch_fit(const NetworkConfig& network, const ModelWeights<float>& weights,
                           const std::vector<PatchPair>& pairs);

// ---------------------------------------------------------------------------
// Ablation harnesses.

struct EvalImage {
  std::string name;
  ImageBuffer hr;
};

struct AblationResult {
  MetricsReport report;
  std::vector<std::string> soft_checks;  // "name: PASS|FAIL (detail)"
  bool soft_checks_passed = true;
};

/// Model-C (concatenation) and Model-A (attention) arms with identical seeds
/// and data order.
AblationResult ablation_fusion(const NetworkConfig& base, const TrainConfig& train, const std::vector<PatchPair>& data,
                               const std::string& dataset, const std::vector<EvalImage>& eval);

/// none / post_bp / rbpb arms.
AblationResult ablation_refine(const NetworkConfig& base, const TrainConfig& train, const std::vector<PatchPair>& data,
                               const std::string& dataset, const std::vector<EvalImage>& eval);

}  // namespace abpn
