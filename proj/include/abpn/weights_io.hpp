#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "abpn/model.hpp"

namespace abpn {

/// Binary parameter file, little-endian:
///
///   "ABPN" | version u16 | count u32 |
///   count × ( name_len u16 | name utf-8 | rank u8 | dims u32[rank] | f32[numel] )
///
/// Everything after the last record is ignored by read_weights, which lets a
/// checkpoint append its own sections to the same stream.
inline constexpr char kWeightsMagic[4] = {'A', 'B', 'P', 'N'};
inline constexpr std::uint16_t kWeightsVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::int64_t> dims;
  std::vector<float> values;
};

void write_tensor_records(std::ostream& out, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> read_tensor_records(std::istream& in);

void write_weights(std::ostream& out, const ModelWeights<float>& weights);
void save_weights(const std::string& path, const ModelWeights<float>& weights);

/// Reads records and checks them against the layout of `config`.
ModelWeights<float> read_weights(std::istream& in, const NetworkConfig& config);
ModelWeights<float> load_weights(const std::string& path, const NetworkConfig& config);

/// Reads the records without a layout check.
std::vector<NamedTensor> read_weight_records(std::istream& in);

/// Builds weights from records, checking names, order and dims against the
/// layout of `config`.
ModelWeights<float> weights_from_records(const std::vector<NamedTensor>& records, const NetworkConfig& config);

// Little-endian primitives shared with the checkpoint writer.
namespace wire {
void put_u8(std::ostream& out, std::uint8_t v);
void put_u16(std::ostream& out, std::uint16_t v);
void put_u32(std::ostream& out, std::uint32_t v);
void put_u64(std::ostream& out, std::uint64_t v);
void put_f32(std::ostream& out, float v);
std::uint8_t get_u8(std::istream& in);
std::uint16_t get_u16(std::istream& in);
std::uint32_t get_u32(std::istream& in);
std::uint64_t get_u64(std::istream& in);
float get_f32(std::istream& in);
void get_bytes(std::istream& in, char* dst, std::size_t n);
}  // namespace wire

}  // namespace abpn
