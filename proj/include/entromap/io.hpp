#pragma once

// CSV point-cloud format and file plumbing. One point per row, d comma
// separated decimal fields, optional header (auto-detected: first row with
// any non-numeric field). Floats are written in the shortest form that
// parses back to the identical 64-bit value.

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unistd.h>
#include <vector>

#include "entromap/core.hpp"
#include "entromap/errors.hpp"

namespace entromap {

inline std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline bool parse_field(std::string_view field, double& out) {
    field = trim(field);
    if (field.empty()) return false;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), out);
    return res.ec == std::errc{} && res.ptr == field.data() + field.size();
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

}  // namespace detail

// Parses the cloud format. Returns raw rows (possibly zero of them) so that
// callers may treat an empty file as an empty query batch rather than an
// error. Throws parse_error with the 1-based offending line.
inline std::vector<std::vector<double>> read_point_rows(std::istream& in) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t dim = 0;
    bool first_data_candidate = true;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view stripped = detail::trim(line);
        if (stripped.empty()) continue;
        const auto fields = detail::split_fields(stripped);
        std::vector<double> row;
        row.reserve(fields.size());
        bool numeric = true;
        for (const auto f : fields) {
            double v;
            if (!detail::parse_field(f, v)) {
                numeric = false;
                break;
            }
            row.push_back(v);
        }
        if (!numeric) {
            if (first_data_candidate) {  // header row, skip
                first_data_candidate = false;
                continue;
            }
            throw parse_error("non-numeric field at line " + std::to_string(line_no),
                              line_no);
        }
        first_data_candidate = false;
        if (dim == 0)
            dim = row.size();
        else if (row.size() != dim)
            throw parse_error("expected " + std::to_string(dim) + " fields, got " +
                                  std::to_string(row.size()) + " at line " +
                                  std::to_string(line_no),
                              line_no);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline PointCloud cloud_from_csv(std::istream& in) {
    auto rows = read_point_rows(in);
    if (rows.empty()) throw parse_error("no data rows");
    return PointCloud::from_rows(rows);
}

inline PointCloud load_cloud(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open " + path.string());
    return cloud_from_csv(in);
}

inline void write_cloud_csv(std::ostream& out, const PointCloud& cloud) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto p = cloud.point(i);
        for (std::size_t j = 0; j < p.size(); ++j) {
            if (j) out.put(',');
            out << format_double(p[j]);
        }
        out.put('\n');
    }
}

// temp-then-rename in the destination directory; the target is never left
// half-written.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    namespace fs = std::filesystem;
    fs::path dir = path.parent_path();
    if (dir.empty()) dir = ".";
    fs::path tmp = dir / (path.filename().string() + ".tmp." +
                          std::to_string(static_cast<unsigned long>(::getpid())));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw std::runtime_error("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw std::runtime_error("rename to " + path.string() + " failed");
    }
}

}  // namespace entromap
