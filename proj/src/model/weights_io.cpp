#include "abpn/weights_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "abpn/error.hpp"

namespace abpn {

namespace wire {

namespace {
template <class U>
void put_le(std::ostream& out, U v) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

template <class U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  get_bytes(in, reinterpret_cast<char*>(bytes), sizeof(U));
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(bytes[i]) << (8 * i));
  return v;
}
}  // namespace

void put_u8(std::ostream& out, std::uint8_t v) { put_le(out, v); }
void put_u16(std::ostream& out, std::uint16_t v) { put_le(out, v); }
void put_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void put_u64(std::ostream& out, std::uint64_t v) { put_le(out, v); }
void put_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }

void get_bytes(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError("unexpected end of file");
}

std::uint8_t get_u8(std::istream& in) { return get_le<std::uint8_t>(in); }
std::uint16_t get_u16(std::istream& in) { return get_le<std::uint16_t>(in); }
std::uint32_t get_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
std::uint64_t get_u64(std::istream& in) { return get_le<std::uint64_t>(in); }
float get_f32(std::istream& in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }

}  // namespace wire

void write_tensor_records(std::ostream& out, const std::vector<NamedTensor>& records) {
  wire::put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    if (r.name.size() > std::numeric_limits<std::uint16_t>::max()) throw FormatError("parameter name too long");
    wire::put_u16(out, static_cast<std::uint16_t>(r.name.size()));
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    wire::put_u8(out, static_cast<std::uint8_t>(r.dims.size()));
    for (auto d : r.dims) wire::put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : r.values) wire::put_f32(out, v);
  }
}

std::vector<NamedTensor> read_tensor_records(std::istream& in) {
  const std::uint32_t count = wire::get_u32(in);
  std::vector<NamedTensor> records;
  records.reserve(std::min<std::uint32_t>(count, 4096));
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor r;
    r.name.resize(wire::get_u16(in));
    wire::get_bytes(in, r.name.data(), r.name.size());
    const std::uint8_t rank = wire::get_u8(in);
    std::int64_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      r.dims.push_back(wire::get_u32(in));
      numel *= r.dims.back();
    }
    if (numel > (std::int64_t{1} << 32)) throw FormatError("tensor '" + r.name + "' is implausibly large");
    r.values.resize(static_cast<std::size_t>(numel));
    for (auto& v : r.values) v = wire::get_f32(in);
    records.push_back(std::move(r));
  }
  return records;
}

void write_weights(std::ostream& out, const ModelWeights<float>& weights) {
  out.write(kWeightsMagic, 4);
  wire::put_u16(out, kWeightsVersion);
  std::vector<NamedTensor> records;
  for (const auto& p : weights.parameters()) {
    const auto data = p.var->value.data();
    records.push_back({p.name, p.dims, std::vector<float>(data.begin(), data.end())});
  }
  write_tensor_records(out, records);
}

void save_weights(const std::string& path, const ModelWeights<float>& weights) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  write_weights(out, weights);
  if (!out) throw FormatError("write failed: " + path);
}

std::vector<NamedTensor> read_weight_records(std::istream& in) {
  char magic[4];
  wire::get_bytes(in, magic, 4);
  if (std::memcmp(magic, kWeightsMagic, 4) != 0) throw FormatError("not an ABPN weight file (bad magic)");
  const std::uint16_t version = wire::get_u16(in);
  if (version != kWeightsVersion) throw FormatError("unsupported weight file version " + std::to_string(version));
  return read_tensor_records(in);
}

ModelWeights<float> read_weights(std::istream& in, const NetworkConfig& config) {
  return weights_from_records(read_weight_records(in), config);
}

ModelWeights<float> weights_from_records(const std::vector<NamedTensor>& records, const NetworkConfig& config) {
  const auto layout = parameter_layout(config);
  if (records.size() != layout.size())
    throw FormatError("weight file has " + std::to_string(records.size()) + " parameters, config expects " +
                      std::to_string(layout.size()));
  ModelWeights<float> weights = ModelWeights<float>::zeros(config);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& r = records[i];
    if (r.name != layout[i].name) throw FormatError("parameter " + std::to_string(i) + " is '" + r.name +
                                                    "', expected '" + layout[i].name + "'");
    if (r.dims != layout[i].dims) throw FormatError("parameter '" + r.name + "' has unexpected dims");
    auto dst = weights[r.name]->value.data();
    std::copy(r.values.begin(), r.values.end(), dst.begin());
  }
  return weights;
}

ModelWeights<float> load_weights(const std::string& path, const NetworkConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_weights(in, config);
}

}  // namespace abpn
