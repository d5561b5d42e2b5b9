#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "abpn/error.hpp"
#include "abpn/train.hpp"
#include "checkpoint_sections.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace abpn {

namespace {

// Each step allocates and frees the same multi-megabyte activation buffers.
// glibc would serve those with mmap/munmap and trim the heap after every
// free, which costs more than the arithmetic at desk scale.
void keep_buffers_on_heap() {
#ifdef __GLIBC__
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 256 << 20);
  });
#endif
}

}  // namespace

std::string format_log_line(const LogEntry& entry) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%lld, %.9g, %lld", static_cast<long long>(entry.iteration), entry.loss,
                static_cast<long long>(entry.wall_ms));
  return buf;
}

std::vector<PatchPair> load_patch_dataset(const std::string& hr_dir, const DegradationConfig& degradation, int patch,
                                          int per_image, std::uint64_t seed) {
  std::vector<PatchPair> pairs;
  const auto files = list_png_files(hr_dir);
  for (std::size_t i = 0; i < files.size(); ++i) {
    DegradationConfig cfg = degradation;
    cfg.seed = degradation.seed + i;
    auto batch = extract_patch_pairs(png_read(files[i]), cfg, patch, per_image, seed + 7919 * i);
    for (auto& p : batch) pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw std::runtime_error("no training images in " + hr_dir);
  return pairs;
}

Trainer::Trainer(const NetworkConfig& network, const TrainConfig& config, std::vector<PatchPair> data)
    : network_(network), config_(config), data_(std::move(data)), rng_(config.seed ^ 0x5DEECE66DULL) {
  network_.validate();
  config_.validate();
  if (data_.empty()) throw std::invalid_argument("Trainer: empty dataset");
  keep_buffers_on_heap();
  weights_ = ModelWeights<float>::initialize(network_, config_.seed);
  adam_ = AdamState::zeros_like(weights_);
}

Trainer Trainer::resume(const Checkpoint& ck, std::vector<PatchPair> data) {
  Trainer t(ck.network, ck.train, std::move(data));
  t.weights_ = ck.weights.cast<float>();
  t.adam_ = ck.adam;
  t.iteration_ = ck.iteration;

  auto get = [&ck](const std::string& key) -> const std::string& {
    auto it = ck.meta.find(key);
    if (it == ck.meta.end()) throw FormatError("checkpoint metadata lacks '" + key + "'");
    return it->second;
  };
  if (std::stoull(get("data.pairs")) != t.data_.size())
    throw std::invalid_argument("resume: dataset has " + std::to_string(t.data_.size()) + " pairs, checkpoint expects " +
                                get("data.pairs"));
  std::istringstream(get("rng.state")) >> t.rng_;
  t.cursor_ = std::stoull(get("sampler.cursor"));
  std::istringstream order(get("sampler.order"));
  for (std::size_t v; order >> v;) t.order_.push_back(v);
  for (const auto& [key, value] : ck.meta)
    if (key.starts_with("echo.")) t.echo_[key.substr(5)] = value;
  return t;
}

std::size_t Trainer::next_index() {
  if (cursor_ >= order_.size()) {
    order_.resize(data_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    // Fisher-Yates with raw engine draws: portable across standard libraries.
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_() % i]);
    cursor_ = 0;
  }
  return order_[cursor_++];
}

double Trainer::step() {
  std::vector<ImageBuffer> lr, hr;
  for (int b = 0; b < config_.batch_size; ++b) {
    const PatchPair& pair = data_[next_index()];
    const int k = config_.augment ? static_cast<int>(rng_() % 8) : 0;
    lr.push_back(dihedral(pair.lr, k));
    hr.push_back(dihedral(pair.hr, k));
  }
  std::vector<const ImageBuffer*> lr_ptrs, hr_ptrs;
  for (std::size_t i = 0; i < lr.size(); ++i) {
    lr_ptrs.push_back(&lr[i]);
    hr_ptrs.push_back(&hr[i]);
  }

  Tape<float> tape;
  weights_.zero_grad();
  ForwardContext<float> ctx{tape, weights_, network_};
  auto sr = forward(ctx, make_var(images_to_tensor(lr_ptrs)));
  auto loss = pixel_loss(tape, sr, make_var(images_to_tensor(hr_ptrs)), config_.loss_order);
  const double value = loss->value[0];
  if (!std::isfinite(value))
    throw std::runtime_error("non-finite training loss at iteration " + std::to_string(iteration_ + 1) +
                             "; lower the learning rate or check the data");
  tape.backward(loss);
  adam_step(weights_, adam_, config_);
  ++iteration_;
  return value;
}

void Trainer::run(std::ostream* log, const std::function<void(const Trainer&)>& on_checkpoint) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  while (iteration_ < config_.iterations) {
    const double loss = step();
    if (iteration_ % config_.log_every == 0 || iteration_ == config_.iterations) {
      LogEntry entry{iteration_, loss, 0};
      if (!config_.deterministic)
        entry.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
      history_.push_back(entry);
      if (log) *log << format_log_line(entry) << "\n" << std::flush;
    }
    if (on_checkpoint && config_.checkpoint_every > 0 && iteration_ % config_.checkpoint_every == 0)
      on_checkpoint(*this);
  }
}

void Trainer::write_checkpoint(std::ostream& out) const {
  auto meta = config_metadata(network_, config_);
  meta["iteration"] = std::to_string(iteration_);
  meta["adam.step"] = std::to_string(adam_.step);
  meta["data.pairs"] = std::to_string(data_.size());
  std::ostringstream rng;
  rng << rng_;
  meta["rng.state"] = rng.str();
  meta["sampler.cursor"] = std::to_string(cursor_);
  std::string order;
  for (std::size_t i = 0; i < order_.size(); ++i) order += (i ? " " : "") + std::to_string(order_[i]);
  meta["sampler.order"] = order;
  for (const auto& [key, value] : echo_) meta["echo." + key] = value;
  write_checkpoint_sections(out, weights_, adam_, meta);
}

void Trainer::save_checkpoint(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + tmp + " for writing");
    write_checkpoint(out);
    if (!out) throw FormatError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

PatchFit measure_patch_fit(const NetworkConfig& network, const ModelWeights<float>& weights,
                           const std::vector<PatchPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("measure_patch_fit: no pairs");
  const SrFunction model = make_sr_function(network, weights);
  const SrFunction bicubic = make_bicubic_function(network.scale);
  auto rgb_psnr = [](const ImageBuffer& a, const ImageBuffer& b) {
    double sse = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
      const double d = 255.0 * (std::clamp(a.data()[i], 0.0, 1.0) - b.data()[i]);
      sse += d * d;
    }
    const double mse = sse / static_cast<double>(a.data().size());
    return mse == 0.0 ? kPsnrIdentical : 10.0 * std::log10(255.0 * 255.0 / mse);
  };
  PatchFit fit;
  for (const auto& p : pairs) {
    fit.model_psnr += rgb_psnr(model(p.lr), p.hr);
    fit.bicubic_psnr += rgb_psnr(bicubic(p.lr), p.hr);
  }
  fit.model_psnr /= static_cast<double>(pairs.size());
  fit.bicubic_psnr /= static_cast<double>(pairs.size());
  return fit;
}

}  // namespace abpn
