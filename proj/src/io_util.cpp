#include "emkken/io_util.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "emkken/errors.hpp"

namespace emkken::io {

bool file_exists(const std::string& path) {
    std::error_code ec;
    return std::filesystem::exists(path, ec);
}

std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file: " + path);
    in.seekg(0, std::ios::end);
    const std::streamsize len = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<unsigned char> buf(static_cast<std::size_t>(len));
    if (len > 0) in.read(reinterpret_cast<char*>(buf.data()), len);
    if (!in) throw ParseError("short read: " + path);
    return buf;
}

std::string read_text(const std::string& path) {
    auto bytes = read_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_atomic_bytes(const std::string& path, const void* data, std::size_t len) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ParseError("cannot open for write: " + tmp);
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
        if (!out) throw ParseError("short write: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw ParseError("rename " + tmp + " -> " + path + ": " + ec.message());
}

void write_atomic(const std::string& path, const std::string& content) {
    write_atomic_bytes(path, content.data(), content.size());
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        std::string field = line.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
        std::size_t b = field.find_first_not_of(" \t\r");
        std::size_t e = field.find_last_not_of(" \t\r");
        fields.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return fields;
}

double parse_double(const std::string& field, const std::string& where) {
    double v = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw ParseError("bad number '" + field + "' at " + where);
    return v;
}

std::int64_t parse_int(const std::string& field, const std::string& where) {
    std::int64_t v = 0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw ParseError("bad integer '" + field + "' at " + where);
    return v;
}

std::uint64_t fnv1a(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string fnv1a_hex(const std::string& path) {
    auto bytes = read_bytes(path);
    const std::uint64_t h = fnv1a(bytes.data(), bytes.size());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return std::string(buf);
}

}  // namespace emkken::io
