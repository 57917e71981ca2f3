#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "ucl/errors.hpp"
#include "ucl/tensor.hpp"

namespace ucl {

// Binary container of named tensors / strings / integers with a trailing
// FNV-1a64 integrity hash. Used for checkpoints and extractor weight files.
// Layout (little-endian):
//   magic "UCLTNSR1" | u32 version | sections | u64 hash-of-everything-above
class TensorArchive {
public:
    static constexpr std::uint32_t kVersion = 1;

    std::map<std::string, Tensor> tensors;
    std::map<std::string, std::string> strings;
    std::map<std::string, std::int64_t> ints;

    // Writes to a temp file and renames into place.
    void save(const std::string& path) const;
    // Throws IntegrityError on hash mismatch / truncation, VersionError on
    // unknown version.
    static TensorArchive load(const std::string& path);

    std::uint64_t content_hash() const;
};

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 14695981039346656037ULL);

}  // namespace ucl
