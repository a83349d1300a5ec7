#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace texadiff {

// One named slice of a checkpoint payload.
struct TnsrEntry {
    std::string name;
    std::uint64_t offset = 0;  // in floats, from the start of the payload
    std::vector<std::uint32_t> dims;
};

// TNSR container (all integers little-endian):
//   "TNSR" | u16 version=1 | u16 ndims | ndims x u32 dims | prod(dims) x f32 payload
//   [ u32 count | count x ( u16 name_len | name bytes | u64 offset | u16 ndims | ndims x u32 ) ]
// The bracketed name manifest is present only for checkpoints.
struct TnsrFile {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;
    std::vector<TnsrEntry> manifest;

    std::size_t element_count() const;
};

std::vector<std::uint8_t> encode_tnsr(const TnsrFile& file);
TnsrFile decode_tnsr(const std::vector<std::uint8_t>& bytes);

void write_tnsr(const std::filesystem::path& path, const TnsrFile& file);
TnsrFile read_tnsr(const std::filesystem::path& path);

}  // namespace texadiff
