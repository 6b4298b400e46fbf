#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace distmatch::io {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// Parses a full decimal token; throws IoError on trailing garbage.
double parse_double(std::string_view text);

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_text(const std::filesystem::path& path);

}  // namespace distmatch::io
