#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "abpn/error.hpp"
#include "abpn/train.hpp"
#include "abpn/weights_io.hpp"
#include "checkpoint_sections.hpp"

namespace abpn {

namespace {

constexpr char kAdamMagic[4] = {'A', 'D', 'A', 'M'};
constexpr char kMetaMagic[4] = {'M', 'E', 'T', 'A'};

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::string& require(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("checkpoint metadata lacks '" + key + "'");
  return it->second;
}

double to_double(const std::string& s) { return std::stod(s); }
long long to_int(const std::string& s) { return std::stoll(s); }
bool to_bool(const std::string& s) { return s == "true"; }

}  // namespace

std::map<std::string, std::string> config_metadata(const NetworkConfig& n, const TrainConfig& t) {
  return {
      {"network.scale", std::to_string(n.scale)},
      {"network.channels", std::to_string(n.channels)},
      {"network.stages", std::to_string(n.stages)},
      {"network.fusion", to_string(n.fusion)},
      {"network.refine", to_string(n.refine)},
      {"train.learning_rate", exact(t.learning_rate)},
      {"train.batch_size", std::to_string(t.batch_size)},
      {"train.iterations", std::to_string(t.iterations)},
      {"train.weight_decay", exact(t.weight_decay)},
      {"train.beta1", exact(t.beta1)},
      {"train.beta2", exact(t.beta2)},
      {"train.epsilon", exact(t.epsilon)},
      {"train.loss_order", std::to_string(t.loss_order)},
      {"train.seed", std::to_string(t.seed)},
      {"train.log_every", std::to_string(t.log_every)},
      {"train.checkpoint_every", std::to_string(t.checkpoint_every)},
      {"train.augment", t.augment ? "true" : "false"},
      {"train.deterministic", t.deterministic ? "true" : "false"},
  };
}

void write_checkpoint_sections(std::ostream& out, const ModelWeights<float>& weights, const AdamState& adam,
                               const std::map<std::string, std::string>& meta) {
  write_weights(out, weights);

  out.write(kAdamMagic, 4);
  std::vector<NamedTensor> records;
  const auto& params = weights.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto m = adam.m[i].data();
    records.push_back({"adam.m." + params[i].name, params[i].dims, std::vector<float>(m.begin(), m.end())});
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto v = adam.v[i].data();
    records.push_back({"adam.v." + params[i].name, params[i].dims, std::vector<float>(v.begin(), v.end())});
  }
  write_tensor_records(out, records);

  std::string text;
  for (const auto& [key, value] : meta) text += key + "=" + value + "\n";
  out.write(kMetaMagic, 4);
  wire::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

Checkpoint read_checkpoint(std::istream& in) {
  const auto weight_records = read_weight_records(in);
  char magic[4];
  wire::get_bytes(in, magic, 4);
  if (std::memcmp(magic, kAdamMagic, 4) != 0) throw FormatError("checkpoint: missing ADAM section");
  const auto adam_records = read_tensor_records(in);
  wire::get_bytes(in, magic, 4);
  if (std::memcmp(magic, kMetaMagic, 4) != 0) throw FormatError("checkpoint: missing META section");
  std::string text(wire::get_u32(in), '\0');
  wire::get_bytes(in, text.data(), text.size());

  Checkpoint ck;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint: malformed metadata line '" + line + "'");
    ck.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto& m = ck.meta;
  try {
    ck.network.scale = static_cast<int>(to_int(require(m, "network.scale")));
    ck.network.channels = static_cast<int>(to_int(require(m, "network.channels")));
    ck.network.stages = static_cast<int>(to_int(require(m, "network.stages")));
    ck.network.fusion = parse_fusion_mode(require(m, "network.fusion"));
    ck.network.refine = parse_refine_mode(require(m, "network.refine"));
    TrainConfig& t = ck.train;
    t.learning_rate = to_double(require(m, "train.learning_rate"));
    t.batch_size = static_cast<int>(to_int(require(m, "train.batch_size")));
    t.iterations = static_cast<int>(to_int(require(m, "train.iterations")));
    t.weight_decay = to_double(require(m, "train.weight_decay"));
    t.beta1 = to_double(require(m, "train.beta1"));
    t.beta2 = to_double(require(m, "train.beta2"));
    t.epsilon = to_double(require(m, "train.epsilon"));
    t.loss_order = static_cast<int>(to_int(require(m, "train.loss_order")));
    t.seed = std::stoull(require(m, "train.seed"));
    t.log_every = static_cast<int>(to_int(require(m, "train.log_every")));
    t.checkpoint_every = static_cast<int>(to_int(require(m, "train.checkpoint_every")));
    t.augment = to_bool(require(m, "train.augment"));
    t.deterministic = to_bool(require(m, "train.deterministic"));
    ck.iteration = to_int(require(m, "iteration"));
    ck.adam.step = to_int(require(m, "adam.step"));
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) throw FormatError(std::string("checkpoint: ") + e.what());
    throw FormatError(std::string("checkpoint: bad metadata value: ") + e.what());
  }

  ck.weights = weights_from_records(weight_records, ck.network);
  const auto& params = ck.weights.parameters();
  if (adam_records.size() != 2 * params.size()) throw FormatError("checkpoint: optimizer state size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& rm = adam_records[i];
    const auto& rv = adam_records[params.size() + i];
    if (rm.name != "adam.m." + params[i].name || rv.name != "adam.v." + params[i].name)
      throw FormatError("checkpoint: optimizer record order mismatch at " + params[i].name);
    const Shape s = params[i].var->value.shape();
    ck.adam.m.emplace_back(s, rm.values);
    ck.adam.v.emplace_back(s, rv.values);
  }
  return ck;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

std::pair<NetworkConfig, ModelWeights<float>> load_model(const std::string& path, const NetworkConfig& fallback) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  const auto records = read_weight_records(in);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() == 4 && std::memcmp(magic, kAdamMagic, 4) == 0) {
    in.clear();
    in.seekg(0);
    Checkpoint ck = read_checkpoint(in);
    return {ck.network, std::move(ck.weights)};
  }
  return {fallback, weights_from_records(records, fallback)};
}

}  // namespace abpn
