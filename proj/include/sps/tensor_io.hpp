#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sps/tensor.hpp"

namespace sps {

// SPST binary tensor format, all integers little-endian:
//   offset  0: magic   "SPST"      (4 bytes)
//   offset  4: version u32 = 1
//   offset  8: h       u32         (patch rows)
//   offset 12: w       u32         (patch cols)
//   offset 16: d       u32         (channels)
//   offset 20: flags   u32         (bit 0: centered)
//   offset 24: payload N*D float64, row-major
// Round trips are bit-exact in both directions.

inline constexpr std::size_t kSpstHeaderBytes = 24;

std::vector<std::uint8_t> write_tensor(const DescriptorMatrix& f);
DescriptorMatrix read_tensor(const std::vector<std::uint8_t>& bytes);

void save_tensor(const std::string& path, const DescriptorMatrix& f);
DescriptorMatrix load_tensor(const std::string& path);

} // namespace sps
