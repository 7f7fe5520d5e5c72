#pragma once

#include <filesystem>
#include <iosfwd>

#include "grpolab/policy.hpp"

namespace grpolab {

/// Flat binary checkpoint, all integers and floats little-endian:
///
///   offset  size  field
///   0       8     magic "GRPOLAB\0"
///   8       4     format version (u32, currently 1)
///   12      4     architecture tag (u32: 1 tabular-ngram, 2 mlp, 3 tiny-transformer)
///   16      4     vocabulary size (u32)
///   20      4     order (u32)
///   24      4     window (u32)
///   28      4     hidden (u32)
///   32      8     parameter count (u64)
///   40      8*N   parameters (IEEE-754 binary64)
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const PolicyParameters& params);
PolicyParameters read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const PolicyParameters& params);
PolicyParameters load_checkpoint(const std::filesystem::path& path);

}  // namespace grpolab
