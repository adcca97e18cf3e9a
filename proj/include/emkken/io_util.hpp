#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace emkken::io {

bool file_exists(const std::string& path);

/// Whole file as bytes; throws ParseError naming the path if unreadable.
std::vector<unsigned char> read_bytes(const std::string& path);
std::string read_text(const std::string& path);

/// Writes to <path>.tmp then renames, so readers never see a torn file.
void write_atomic(const std::string& path, const std::string& content);
void write_atomic_bytes(const std::string& path, const void* data, std::size_t len);

/// Comma split, no quoting. Trims surrounding whitespace per field.
std::vector<std::string> split_csv_line(const std::string& line);

/// Strict numeric parsing; `where` goes into the error message.
double parse_double(const std::string& field, const std::string& where);
std::int64_t parse_int(const std::string& field, const std::string& where);

/// FNV-1a, used for artifact checksums in run manifests.
std::uint64_t fnv1a(const void* data, std::size_t len);
std::string fnv1a_hex(const std::string& path);

/// Fixed-format float for deterministic text artifacts (CSV, SVG):
/// shortest of %.12g, locale-independent.
std::string fmt_double(double v);

}  // namespace emkken::io
