#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace truncnet {

/// Writes `content` to a sibling temp file and renames it over `path`, so
/// readers never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// Appends one line (a trailing newline is added) and flushes.
void append_line(const std::filesystem::path& path, std::string_view line);

/// Git-style object id: SHA-1 over "blob <size>\0" followed by the content.
std::string git_blob_sha1(std::string_view content);

/// Hex SHA-256 of a file's bytes.
std::string file_sha256(const std::filesystem::path& path);

}  // namespace truncnet
