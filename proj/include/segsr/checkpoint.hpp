#pragma once

#include <string>
#include <utility>
#include <vector>

#include "segsr/nn.hpp"

namespace segsr {

// SGSR checkpoint container:
//   "SGSR" | version u32 | tag_len u32 | tag | tensors... | crc32 u32
// tensor: name_len u32 | name | dtype u8 (0 = f32) | ndim u32 | dims u32[] | payload LE
// The CRC covers every byte before it. All integers little-endian.
struct NamedTensors {
  std::string tag;
  std::vector<std::pair<std::string, TensorF>> tensors;
};

void save_checkpoint(const std::string& path, const NamedTensors& nt);
NamedTensors load_checkpoint(const std::string& path);

// role-tagged convenience wrappers
void save_params(const std::string& path, const ParamStore& ps);
ParamStore load_params(const std::string& path, Role expect);

}  // namespace segsr
