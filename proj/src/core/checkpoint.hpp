// Versioned binary parameter container.
//
// Layout (all integers little-endian):
//   magic   "SGCG"            4 bytes
//   version u32               currently 1
//   tag     4 bytes           section tag: "GANS" translation, "LSNT" student
//   count   u32
//   per tensor:
//     name_len u16, name bytes
//     dtype    u8   (0 = f64, 1 = f32)
//     rank     u8
//     dims     u32 * rank
//     payload  dtype-sized values, little-endian
#pragma once

#include <map>
#include <string>

#include "nn.hpp"

namespace lab {

inline constexpr char kCheckpointMagic[4] = {'S', 'G', 'C', 'G'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedState {
  std::vector<Tensor> params;  // names carried by the tensors
  BufferList buffers;          // (name, vector<real>*) pairs
};

void save_checkpoint(const std::string& path, const char tag[4], const NamedState& state);

// Loads by name into the existing tensors/buffers; throws on a missing
// entry, a shape mismatch or a tag mismatch.
void load_checkpoint(const std::string& path, const char tag[4], NamedState& state);

// Peek at the section tag ("GANS"/"LSNT") without loading.
std::string checkpoint_tag(const std::string& path);

}  // namespace lab
