#pragma once

#include <iosfwd>
#include <string>

#include "sse/model.hpp"

namespace sse {

// Container layout (little-endian):
//   "SSE1"
//   u64   manifest length in bytes
//   text  manifest, one entry per line:
//           tensor <name> <rows> <cols> <byte offset into payload>
//           config <key>=<value>
//   f32[] tensor payloads in manifest order
// Values are stored as 32-bit floats; parameters kept at kFloat32 storage
// precision round-trip bit-exactly.
void save_checkpoint(std::ostream& out, const ModelParams& params);
void save_checkpoint(const std::string& path, const ModelParams& params);

ModelParams load_checkpoint(std::istream& in);
ModelParams load_checkpoint(const std::string& path);

}  // namespace sse
