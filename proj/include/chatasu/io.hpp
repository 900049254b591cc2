#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>

namespace chatasu::io {

std::string read_file(const std::filesystem::path& path);

// Writes via a sibling temporary file and renames it into place, so readers
// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Calls fn(line_number, line) for every line; line numbers start at 1.
// Blank lines are skipped.
void for_each_line(std::istream& in,
                   const std::function<void(std::size_t, std::string_view)>& fn);

std::string sha256_hex(std::string_view data);

}  // namespace chatasu::io
