#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace adamrc::io {

// Writes via a sibling temp file and rename so readers never see partial output.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace adamrc::io
