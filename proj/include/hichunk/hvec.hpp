// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace hichunk {

// HVEC: the binary vector container shared by the index's vectors file
// and the embedding cache. Little-endian layout:
//   magic "HVEC" | u32 version = 1 | u32 dim | u64 row_count |
//   row_count * dim f32 values | u32 CRC32 of the f32 payload bytes
struct HvecData {
    std::uint32_t dim = 0;
    std::vector<float> values; // row-major, row_count * dim

    std::size_t row_count() const { return dim == 0 ? 0 : values.size() / dim; }
};

void write_hvec(const std::filesystem::path& path, const HvecData& data);

// Validates magic, version, length, and checksum; throws FormatError
// with a distinct message per failure mode.
HvecData read_hvec(const std::filesystem::path& path);

// CRC32 (zlib) of the payload, as stored in the trailer.
std::uint32_t hvec_payload_crc(const HvecData& data);

} // namespace hichunk
