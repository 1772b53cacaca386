// SPDX-License-Identifier: Apache-2.0
#include "hichunk/hvec.hpp"

#include "hichunk/errors.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace hichunk {

namespace {

constexpr char kMagic[4] = {'H', 'V', 'E', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::string& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
    }
}

template <typename T>
T get_le(const unsigned char* p) {
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        value |= static_cast<T>(p[i]) << (8 * i);
    }
    return value;
}

} // namespace

std::uint32_t hvec_payload_crc(const HvecData& data) {
    uLong crc = crc32(0L, Z_NULL, 0);
    if (!data.values.empty()) {
        crc = crc32(crc, reinterpret_cast<const Bytef*>(data.values.data()),
                    static_cast<uInt>(data.values.size() * sizeof(float)));
    }
    return static_cast<std::uint32_t>(crc);
}

void write_hvec(const std::filesystem::path& path, const HvecData& data) {
    if (data.dim == 0 || data.values.size() % data.dim != 0) {
        throw ContractError("hvec: values are not a whole number of rows");
    }
    std::string header;
    header.append(kMagic, 4);
    put_le<std::uint32_t>(header, kVersion);
    put_le<std::uint32_t>(header, data.dim);
    put_le<std::uint64_t>(header, static_cast<std::uint64_t>(data.row_count()));

    std::string trailer;
    put_le<std::uint32_t>(trailer, hvec_payload_crc(data));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("hvec: cannot open for writing: " + path.string());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(data.values.data()),
              static_cast<std::streamsize>(data.values.size() * sizeof(float)));
    out.write(trailer.data(), static_cast<std::streamsize>(trailer.size()));
    if (!out) throw FormatError("hvec: write failed: " + path.string());
}

HvecData read_hvec(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("hvec: missing file: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());

    constexpr std::size_t header_size = 4 + 4 + 4 + 8;
    if (bytes.size() < header_size + 4) {
        throw FormatError("hvec: truncated header: " + path.string());
    }
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("hvec: bad magic: " + path.string());
    }
    const auto version = get_le<std::uint32_t>(bytes.data() + 4);
    if (version != kVersion) {
        throw FormatError("hvec: unsupported version " + std::to_string(version) + ": " +
                          path.string());
    }
    HvecData data;
    data.dim = get_le<std::uint32_t>(bytes.data() + 8);
    const auto rows = get_le<std::uint64_t>(bytes.data() + 12);
    if (data.dim == 0) throw FormatError("hvec: zero dimension: " + path.string());

    const std::uint64_t payload_bytes = rows * data.dim * sizeof(float);
    if (bytes.size() != header_size + payload_bytes + 4) {
        throw FormatError("hvec: payload length mismatch: " + path.string());
    }
    data.values.resize(static_cast<std::size_t>(rows) * data.dim);
    std::memcpy(data.values.data(), bytes.data() + header_size,
                static_cast<std::size_t>(payload_bytes));

    const auto stored_crc = get_le<std::uint32_t>(bytes.data() + header_size + payload_bytes);
    if (stored_crc != hvec_payload_crc(data)) {
        throw FormatError("hvec: checksum mismatch: " + path.string());
    }
    return data;
}

} // namespace hichunk
