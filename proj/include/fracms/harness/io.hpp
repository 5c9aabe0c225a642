#pragma once

// CSV, legacy VTK and point-cloud writers. Floats are written in their
// shortest round-trip decimal form so identical runs give identical bytes.

#include "fracms/basis.hpp"
#include "fracms/cloud.hpp"
#include "fracms/geometry.hpp"
#include "fracms/harness/metrics.hpp"
#include "fracms/linalg.hpp"

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace fracms::harness {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string format_double(double v)
{
    std::array<char, 32> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) throw IoError("format_double: conversion failed");
    return {buf.data(), ptr};
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path)
{
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
}

} // namespace detail

struct ValueSample {
    double time = 0.0;
    double value = 0.0;
};

struct ErrorSample {
    double time = 0.0;
    RelativeError error;
};

inline void write_value_series(const std::vector<ValueSample>& series, const std::filesystem::path& path)
{
    auto out = detail::open_out(path);
    out << "time,value\n";
    for (const auto& s : series) out << format_double(s.time) << ',' << format_double(s.value) << '\n';
    detail::finish(out, path);
}

inline void write_error_series(const std::vector<ErrorSample>& series, const std::filesystem::path& path)
{
    auto out = detail::open_out(path);
    out << "time,l2_percent,h1_percent\n";
    for (const auto& s : series) {
        out << format_double(s.time) << ',' << format_double(s.error.l2_percent) << ','
            << format_double(s.error.h1_percent) << '\n';
    }
    detail::finish(out, path);
}

/// Header plus numeric rows.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

inline CsvTable read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) return t;
    std::stringstream hs(line);
    for (std::string cell; std::getline(hs, cell, ',');) t.header.push_back(cell);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream rs(line);
        for (std::string cell; std::getline(rs, cell, ',');) {
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
                throw IoError(path.string() + ":" + std::to_string(lineno) + ": not a number '" + cell + "'");
            }
            row.push_back(v);
        }
        if (row.size() != t.header.size()) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": column count mismatch");
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

/// Legacy ASCII VTK 3.0 unstructured grid of triangles with one point scalar.
inline void write_vtk(const FineMesh& mesh, const linalg::Vector& field, const std::filesystem::path& path,
                      const std::string& name = "pressure")
{
    if (field.size() != mesh.n_vertices()) throw IoError("write_vtk: field length differs from vertex count");
    auto out = detail::open_out(path);
    out << "# vtk DataFile Version 3.0\n";
    out << "fracms " << name << "\n";
    out << "ASCII\n";
    out << "DATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << mesh.n_vertices() << " double\n";
    for (const auto& v : mesh.vertices) out << format_double(v.x) << ' ' << format_double(v.y) << " 0\n";
    out << "CELLS " << mesh.n_triangles() << ' ' << 4 * mesh.n_triangles() << '\n';
    for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    out << "CELL_TYPES " << mesh.n_triangles() << '\n';
    for (int t = 0; t < mesh.n_triangles(); ++t) out << "5\n";
    out << "POINT_DATA " << mesh.n_vertices() << '\n';
    out << "SCALARS " << name << " double 1\n";
    out << "LOOKUP_TABLE default\n";
    for (linalg::Index i = 0; i < field.size(); ++i) out << format_double(field[i]) << '\n';
    detail::finish(out, path);
}

/// "index,x,y,radius,class" with class I (implicit) or E (explicit).
inline void write_cloud_csv(const PointCloud& cloud, const std::filesystem::path& path)
{
    auto out = detail::open_out(path);
    out << "index,x,y,radius,class\n";
    for (int i = 0; i < cloud.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        out << i << ',' << format_double(cloud.points[k].x) << ',' << format_double(cloud.points[k].y) << ','
            << format_double(cloud.radii[k]) << ',' << (cloud.implicit[k] ? 'I' : 'E') << '\n';
    }
    detail::finish(out, path);
}

/// Per-node local eigenvalues: "node,k,eigenvalue".
inline void write_eigenvalues_csv(const MultiscaleSpace& space, const std::filesystem::path& path)
{
    auto out = detail::open_out(path);
    out << "node,k,eigenvalue\n";
    for (std::size_t i = 0; i < space.local.size(); ++i) {
        const auto& ev = space.local[i].eigenvalues;
        for (linalg::Index k = 0; k < ev.size(); ++k) out << i << ',' << k << ',' << format_double(ev[k]) << '\n';
    }
    detail::finish(out, path);
}

} // namespace fracms::harness
