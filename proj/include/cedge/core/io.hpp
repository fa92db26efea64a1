#pragma once

#include <string>

namespace cedge {

// Writes to "<path>.tmp" then renames over `path`; creates parent directories.
void atomic_write(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// "%.17g"
std::string format_double(double v);

}  // namespace cedge
