#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace asd::io {

std::vector<char> read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const char> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

std::uint32_t crc32(std::span<const char> bytes);
std::string hex32(std::uint32_t v);

std::vector<std::string> split(std::string_view s, char sep);

}  // namespace asd::io
