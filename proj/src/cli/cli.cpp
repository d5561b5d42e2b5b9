#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "abpn/error.hpp"
#include "abpn/gradient_suite.hpp"
#include "abpn/metrics.hpp"
#include "abpn/train.hpp"
#include "abpn/weights_io.hpp"
#include "config.hpp"

namespace abpn::cli {

namespace fs = std::filesystem;

namespace {

/// Verification failures (gradcheck) map to exit code 3.
struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Override {
  CLI::Option* option = nullptr;
  std::string key;
  std::string value;
  bool on = false;
};

/// Options shared by every subcommand: --config, --set and the per-key
/// shortcuts. Flags beat the environment, which beats the file.
class ConfigOptions {
 public:
  void attach(CLI::App* sub) {
    sub->add_option("-c,--config", file_, "INI config file ([network] [train] [degradation] [paths] [mode])")
        ->check(CLI::ExistingFile);
    sub->add_option("--set", sets_, "Override any key: section.key=value (repeatable)");
  }

  void shortcut(CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    overrides_.push_back({nullptr, key, {}});
    overrides_.back().option = sub->add_option(flag, overrides_.back().value, help + " [" + key + "]");
  }

  void switch_flag(CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    overrides_.push_back({nullptr, key, "true"});
    overrides_.back().option = sub->add_flag(flag, overrides_.back().on, help + " [" + key + "]");
  }

  bool given(const std::string& key) const {
    for (const auto& o : overrides_)
      if (o.key == key && o.option->count() > 0) return true;
    return false;
  }

  CliConfig build() const {
    CliConfig cfg;
    if (!file_.empty()) cfg.load_file(file_);
    if (const char* env = std::getenv("ABPN_OUTPUT_DIR"); env && *env) cfg.paths.output_dir = env;
    for (const auto& s : sets_) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& o : overrides_)
      if (o.option->count() > 0) cfg.set(o.key, o.value);
    cfg.validate();
    return cfg;
  }

 private:
  std::string file_;
  std::vector<std::string> sets_;
  std::deque<Override> overrides_;
};

void network_shortcuts(ConfigOptions& c, CLI::App* sub) {
  c.shortcut(sub, "--scale", "network.scale", "Upscaling factor 2, 4 or 8");
  c.shortcut(sub, "--channels", "network.channels", "Feature channels C");
  c.shortcut(sub, "--stages", "network.stages", "Back-projection stages T");
  c.shortcut(sub, "--fusion", "network.fusion", "attention | concatenation");
  c.shortcut(sub, "--refine", "network.refine", "none | post_bp | rbpb");
}

void train_shortcuts(ConfigOptions& c, CLI::App* sub) {
  c.shortcut(sub, "--iters", "train.iterations", "Training iterations");
  c.shortcut(sub, "--lr", "train.learning_rate", "Adam learning rate");
  c.shortcut(sub, "--batch", "train.batch_size", "Batch size");
  c.shortcut(sub, "--seed", "train.seed", "Seed for initialisation and sampling");
  c.shortcut(sub, "--noise", "degradation.noise_sigma", "Gaussian noise sigma on the [0,1] scale");
  c.shortcut(sub, "--dataset", "paths.dataset", "Dataset root (<root>/HR/*.png)");
  c.switch_flag(sub, "--deterministic", "mode.deterministic", "Log wall_ms as 0 for reproducible logs");
}

void output_shortcut(ConfigOptions& c, CLI::App* sub) {
  c.shortcut(sub, "-o,--output-dir", "paths.output_dir", "Output directory (env ABPN_OUTPUT_DIR)");
}

std::string hr_directory(const std::string& root) {
  if (root.empty()) throw ConfigError("paths.dataset is not set (use --dataset or the config file)");
  const fs::path p(root);
  if (fs::is_directory(p / "HR")) return (p / "HR").string();
  if (fs::is_directory(p)) return p.string();
  throw std::runtime_error("dataset directory not found: " + root);
}

std::string dataset_name(const std::string& root) {
  fs::path p(root);
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

fs::path prepare_output(const CliConfig& cfg) {
  fs::path dir(cfg.paths.output_dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<PatchPair> training_pairs(const CliConfig& cfg) {
  return load_patch_dataset(hr_directory(cfg.paths.dataset), cfg.degradation, cfg.patch, cfg.patches_per_image,
                            cfg.train.seed);
}

std::vector<EvalImage> eval_images(const CliConfig& cfg) {
  const std::string root = cfg.paths.eval_dataset.empty() ? cfg.paths.dataset : cfg.paths.eval_dataset;
  std::vector<EvalImage> out;
  for (const auto& f : list_png_files(hr_directory(root))) out.push_back({fs::path(f).filename().string(), png_read(f)});
  if (out.empty()) throw std::runtime_error("no evaluation images under " + root);
  return out;
}

std::map<std::string, std::string> png_echo(const CliConfig& cfg) { return {{"abpn.config", cfg.echo()}}; }

// ---------------------------------------------------------------------------

int cmd_train(const CliConfig& base, const std::string& resume, bool iters_given) {
  CliConfig cfg = base;
  const fs::path out_dir = prepare_output(cfg);
  auto pairs = training_pairs(cfg);

  std::optional<Trainer> trainer;
  if (!resume.empty()) {
    Checkpoint ck = load_checkpoint(resume);
    trainer.emplace(Trainer::resume(ck, std::move(pairs)));
    if (iters_given) trainer->set_iterations(cfg.train.iterations);
    cfg.network = trainer->network();
    cfg.train = trainer->config();
    std::cout << "resuming from " << resume << " at iteration " << trainer->iteration() << "\n";
  } else {
    trainer.emplace(cfg.network, cfg.train, std::move(pairs));
  }
  trainer->set_echo(cfg.echo_map());
  write_text(out_dir / "config.ini", cfg.echo());

  const fs::path log_path = out_dir / "train.log";
  std::ofstream log(log_path, resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw FormatError("cannot write " + log_path.string());
  const fs::path ckpt_path = out_dir / "checkpoint.abpn";
  std::cout << "training " << count_parameters(cfg.network) << " parameters for " << cfg.train.iterations
            << " iterations\n";
  trainer->run(&log, [&ckpt_path](const Trainer& t) { t.save_checkpoint(ckpt_path.string()); });
  trainer->save_checkpoint(ckpt_path.string());
  save_weights((out_dir / "weights.abpn").string(), trainer->weights());
  if (!trainer->history().empty())
    std::cout << "final loss " << format_log_line(trainer->history().back()) << "\n";
  std::cout << "wrote " << ckpt_path.string() << ", " << (out_dir / "weights.abpn").string() << ", "
            << log_path.string() << "\n";
  return kOk;
}

int cmd_sr(const CliConfig& base, const std::vector<std::string>& inputs, bool scale_twice, int requested_scale) {
  CliConfig cfg = base;
  if (cfg.paths.checkpoint.empty()) throw ConfigError("sr needs --checkpoint (weights or checkpoint file)");
  auto [network, weights] = load_model(cfg.paths.checkpoint, cfg.network);
  cfg.network = network;
  const int alpha = network.scale;
  const int effective = scale_twice ? alpha * alpha : alpha;
  if (requested_scale > 0 && requested_scale != effective)
    throw ConfigError("requested scale " + std::to_string(requested_scale) + " but the model is x" +
                      std::to_string(alpha) + (scale_twice ? " applied twice" : "") +
                      "; use --scale-twice for x" + std::to_string(alpha * alpha));

  const SrFunction model = make_sr_function(network, weights);
  auto once = [&](const ImageBuffer& img) { return cfg.mode.ensemble ? self_ensemble_sr(model, img) : model(img); };
  const fs::path out_dir = prepare_output(cfg);

  std::vector<std::string> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& f : list_png_files(in)) files.push_back(f);
    } else {
      files.push_back(in);
    }
  }
  if (files.empty()) throw ConfigError("sr: no input images");
  for (const auto& f : files) {
    ImageBuffer out = once(png_read(f));
    if (scale_twice) out = once(out);
    const fs::path target = out_dir / (fs::path(f).stem().string() + "_x" + std::to_string(effective) + ".png");
    png_write(target.string(), out, png_echo(cfg));
    std::cout << f << " -> " << target.string() << " (" << out.height() << "x" << out.width() << ")\n";
  }
  return kOk;
}

int cmd_eval(const CliConfig& base, const std::string& method) {
  CliConfig cfg = base;
  SrFunction sr;
  std::string label = method;
  if (method == "bicubic") {
    sr = make_bicubic_function(cfg.network.scale);
  } else if (method == "model") {
    if (cfg.paths.checkpoint.empty()) throw ConfigError("eval needs --checkpoint or --method bicubic");
    auto [network, weights] = load_model(cfg.paths.checkpoint, cfg.network);
    cfg.network = network;
    sr = make_sr_function(network, weights);
    label = "ABPN";
  } else {
    throw ConfigError("unknown method '" + method + "' (expected model or bicubic)");
  }
  if (cfg.mode.ensemble && method != "bicubic") label += "+";

  const std::string root = cfg.paths.eval_dataset.empty() ? cfg.paths.dataset : cfg.paths.eval_dataset;
  if (root.empty()) throw ConfigError("eval needs --dataset");
  MetricsReport report = evaluate(sr, label, root, cfg.network.scale, cfg.mode.ensemble);
  report.header.insert(report.header.begin(), "method: " + method);

  const fs::path out_dir = prepare_output(cfg);
  const std::string stem = "eval_" + dataset_name(root) + "_x" + std::to_string(cfg.network.scale) + "_" + method;
  std::string echo;
  for (const auto& [k, v] : cfg.echo_map()) echo += "# config " + k + " = " + v + "\n";
  write_text(out_dir / (stem + ".csv"), echo + report_csv(report));
  write_text(out_dir / (stem + "_per_image.csv"), report_per_image_csv(report));
  write_text(out_dir / (stem + ".txt"), report_table(report));
  std::cout << report_table(report);
  return kOk;
}

int cmd_inspect(const CliConfig& base, int probe) {
  CliConfig cfg = base;
  ModelWeights<float> weights;
  if (!cfg.paths.checkpoint.empty()) {
    auto loaded = load_model(cfg.paths.checkpoint, cfg.network);
    cfg.network = loaded.first;
    weights = std::move(loaded.second);
  } else {
    weights = ModelWeights<float>::zeros(cfg.network);
  }
  const NetworkConfig& net = cfg.network;
  const ProjectionGeometry g = net.projection();
  std::cout << "network: scale=" << net.scale << " channels=" << net.channels << " stages=" << net.stages
            << " fusion=" << to_string(net.fusion) << " refine=" << to_string(net.refine) << " projection=" << g.kernel
            << "/" << g.stride << "/" << g.pad << "\n\nparameters:\n";
  for (const auto& spec : parameter_layout(net)) {
    std::string dims;
    for (std::size_t i = 0; i < spec.dims.size(); ++i) dims += (i ? "x" : "") + std::to_string(spec.dims[i]);
    std::printf("  %-32s %-14s %10lld\n", spec.name.c_str(), dims.c_str(), static_cast<long long>(spec.numel()));
  }
  std::cout << "\nforward trace (probe 1x3x" << probe << "x" << probe << "):\n";
  for (const auto& e : trace_shapes(net, weights, Shape{1, 3, probe, probe}))
    std::printf("  %-20s %s\n", e.stage.c_str(), e.shape.str().c_str());
  std::ostringstream serialized;
  write_weights(serialized, weights);
  std::cout << "\ntotal parameters: " << count_parameters(net) << "\n"
            << "fusion parameters (" << to_string(net.fusion) << "): " << count_fusion_parameters(net) << "\n"
            << "serialized weight file: " << serialized.str().size() << " bytes\n";
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& fault) {
  const auto outcomes = gradient_suite(seed, fault);
  bool ok = true;
  for (const auto& o : outcomes) {
    std::printf("%-4s %-48s max_rel_error=%.3e (tol %.0e)\n", o.passed ? "ok" : "FAIL", o.name.c_str(),
                o.max_rel_error, o.tolerance);
    ok = ok && o.passed;
  }
  if (!fault.empty()) std::cout << "fault injected into backward of '" << fault << "'\n";
  if (!ok) throw VerificationFailure("gradient check failed");
  std::cout << "all " << outcomes.size() << " checks passed\n";
  return kOk;
}

int cmd_ablate(const CliConfig& cfg, bool fusion) {
  const auto pairs = training_pairs(cfg);
  const auto eval = eval_images(cfg);
  const std::string root = cfg.paths.eval_dataset.empty() ? cfg.paths.dataset : cfg.paths.eval_dataset;
  AblationResult r = fusion ? ablation_fusion(cfg.network, cfg.train, pairs, dataset_name(root), eval)
                            : ablation_refine(cfg.network, cfg.train, pairs, dataset_name(root), eval);
  const fs::path out_dir = prepare_output(cfg);
  const std::string stem = fusion ? "ablation_fusion" : "ablation_refine";
  std::string echo;
  for (const auto& [k, v] : cfg.echo_map()) echo += "# config " + k + " = " + v + "\n";
  write_text(out_dir / (stem + ".csv"), echo + report_csv(r.report));
  write_text(out_dir / (stem + "_per_image.csv"), report_per_image_csv(r.report));
  write_text(out_dir / (stem + ".txt"), report_table(r.report));
  std::cout << report_table(r.report);
  return kOk;
}

int cmd_prepare(const CliConfig& cfg, int synthetic, int size) {
  const std::string root = cfg.paths.dataset;
  if (root.empty()) throw ConfigError("prepare needs --dataset");
  const fs::path hr_dir = fs::path(root) / "HR";
  if (synthetic > 0) {
    fs::create_directories(hr_dir);
    for (int i = 0; i < synthetic; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "img%03d.png", i);
      png_write((hr_dir / name).string(), synthetic_image(size, size, cfg.train.seed + i, 6.0));
    }
    std::cout << "wrote " << synthetic << " synthetic HR images to " << hr_dir.string() << "\n";
  }
  const fs::path lr_dir = fs::path(root) / ("LRx" + std::to_string(cfg.network.scale));
  fs::create_directories(lr_dir);
  int n = 0;
  for (const auto& f : list_png_files(hr_directory(root))) {
    DegradationConfig d = cfg.degradation;
    d.seed = cfg.degradation.seed + n;
    const ImageBuffer lr = degrade(mod_crop(png_read(f), cfg.network.scale), d);
    png_write((lr_dir / fs::path(f).filename()).string(), lr, png_echo(cfg));
    ++n;
  }
  std::cout << "wrote " << n << " LR images to " << lr_dir.string() << "\n";
  return kOk;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"ABPN super-resolution: train, super-resolve, evaluate, inspect and verify"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "abpn 1.0");

  ConfigOptions train_opts, sr_opts, eval_opts, inspect_opts, fusion_opts, refine_opts, prepare_opts;

  auto* train = app.add_subcommand("train", "Train a model; writes checkpoint, weights and log");
  train_opts.attach(train);
  network_shortcuts(train_opts, train);
  train_shortcuts(train_opts, train);
  output_shortcut(train_opts, train);
  std::string resume;
  train->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

  auto* sr = app.add_subcommand("sr", "Super-resolve PNG images");
  sr_opts.attach(sr);
  std::vector<std::string> inputs;
  bool scale_twice = false;
  int requested_scale = 0;
  sr->add_option("inputs", inputs, "Input PNG files or directories")->required();
  sr_opts.shortcut(sr, "--checkpoint", "paths.checkpoint", "Checkpoint or weight file");
  sr_opts.switch_flag(sr, "--ensemble", "mode.ensemble", "Geometric self-ensemble over 8 transforms");
  sr->add_flag("--scale-twice", scale_twice, "Apply the model twice (x16 from a x4 model)");
  sr->add_option("--target-scale", requested_scale, "Expected overall factor; checked against the model");
  network_shortcuts(sr_opts, sr);
  output_shortcut(sr_opts, sr);

  auto* eval = app.add_subcommand("eval", "Y-channel PSNR/SSIM over <dataset>/HR");
  eval_opts.attach(eval);
  std::string method = "model";
  eval->add_option("--method", method, "model (needs --checkpoint) or bicubic")->capture_default_str();
  eval_opts.shortcut(eval, "--checkpoint", "paths.checkpoint", "Checkpoint or weight file");
  eval_opts.shortcut(eval, "--dataset", "paths.dataset", "Dataset root");
  eval_opts.switch_flag(eval, "--ensemble", "mode.ensemble", "Geometric self-ensemble");
  network_shortcuts(eval_opts, eval);
  output_shortcut(eval_opts, eval);

  auto* inspect = app.add_subcommand("inspect", "Layer table, shape trace and parameter count");
  inspect_opts.attach(inspect);
  inspect_opts.shortcut(inspect, "--checkpoint", "paths.checkpoint", "Checkpoint or weight file");
  int probe = 32;
  inspect->add_option("--probe", probe, "Probe input size n for the shape trace")->capture_default_str();
  network_shortcuts(inspect_opts, inspect);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  std::uint64_t seed = 0;
  std::string fault;
  gradcheck->add_option("--seed", seed, "Seed for the random inputs")->capture_default_str();
  gradcheck->add_option("--inject-fault", fault, "Corrupt the backward rule of this op (self-test)");

  auto* ablate_fusion = app.add_subcommand("ablate-fusion", "Attention vs concatenation fusion");
  fusion_opts.attach(ablate_fusion);
  network_shortcuts(fusion_opts, ablate_fusion);
  train_shortcuts(fusion_opts, ablate_fusion);
  output_shortcut(fusion_opts, ablate_fusion);

  auto* ablate_refine = app.add_subcommand("ablate-refine", "none vs post_bp vs rbpb refinement");
  refine_opts.attach(ablate_refine);
  network_shortcuts(refine_opts, ablate_refine);
  train_shortcuts(refine_opts, ablate_refine);
  output_shortcut(refine_opts, ablate_refine);

  auto* prepare = app.add_subcommand("prepare", "Generate <dataset>/LRx<scale> (and optionally synthetic HR)");
  prepare_opts.attach(prepare);
  int synthetic = 0, size = 128;
  prepare->add_option("--synthetic", synthetic, "Also write this many synthetic HR images");
  prepare->add_option("--size", size, "Synthetic image size")->capture_default_str();
  prepare_opts.shortcut(prepare, "--dataset", "paths.dataset", "Dataset root");
  prepare_opts.shortcut(prepare, "--seed", "train.seed", "Seed for synthetic images");
  prepare_opts.shortcut(prepare, "--noise", "degradation.noise_sigma", "Gaussian noise sigma");
  network_shortcuts(prepare_opts, prepare);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(train_opts.build(), resume, train_opts.given("train.iterations"));
    if (*sr) return cmd_sr(sr_opts.build(), inputs, scale_twice, requested_scale);
    if (*eval) return cmd_eval(eval_opts.build(), method);
    if (*inspect) return cmd_inspect(inspect_opts.build(), probe);
    if (*gradcheck) return cmd_gradcheck(seed, fault);
    if (*ablate_fusion) return cmd_ablate(fusion_opts.build(), true);
    if (*ablate_refine) return cmd_ablate(refine_opts.build(), false);
    if (*prepare) return cmd_prepare(prepare_opts.build(), synthetic, size);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const VerificationFailure& e) {
    std::cerr << "verification failed: " << e.what() << "\n";
    return kVerification;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

}  // namespace abpn::cli
