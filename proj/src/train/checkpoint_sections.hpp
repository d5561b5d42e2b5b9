#pragma once

#include <map>
#include <ostream>
#include <string>

#include "abpn/train.hpp"

namespace abpn {

void write_checkpoint_sections(std::ostream& out, const ModelWeights<float>& weights, const AdamState& adam,
                               const std::map<std::string, std::string>& meta);

}  // namespace abpn
