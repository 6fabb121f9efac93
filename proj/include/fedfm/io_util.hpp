#pragma once

#include <cstdint>
#include <string>

namespace fedfm {

/// Creates the directory (and parents) if needed.
void ensure_dir(const std::string& path);

/// Writes content to a temporary file in the target directory and renames it
/// into place, so readers never observe a partial file.
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

/// FNV-1a 64-bit hash as a fixed-width hex string.
std::string fnv1a_hex(const std::string& bytes);

/// Shortest round-trippable decimal form of a double; NaN prints as "nan".
std::string format_double(double v);

/// Joins a relative path under the FEDFM_OUT_ROOT env var when it is set;
/// absolute paths and unset env pass through.
std::string resolve_output_path(const std::string& path);

}  // namespace fedfm
