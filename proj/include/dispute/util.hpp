#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace dispute {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

// FNV-1a 64-bit over raw bytes; used for corpus checksums in run manifests.
std::uint64_t fnv1a64(const std::string& bytes);
std::string fnv1a64_hex(const std::string& bytes);

std::string file_checksum(const std::filesystem::path& path);

// Current UTC time as ISO-8601; only ever written to manifest files, never
// into data outputs (those must be byte-identical across reruns).
std::string utc_timestamp();

}  // namespace dispute
