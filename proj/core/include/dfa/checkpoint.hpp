#pragma once

#include <filesystem>
#include <istream>
#include <ostream>

#include "dfa/network.hpp"

namespace dfa::ad {

// Checkpoint layout (all integers little-endian):
//   "DFACKPT\0"  magic, 8 bytes
//   u32          format version
//   str          architecture descriptor (u32 length + bytes)
//   u32          parameter count
//   per parameter: str name, u32 rank, u64 extents[rank], f64 values[]
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const StageNetwork& net);
StageNetwork read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const StageNetwork& net);
StageNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace dfa::ad
