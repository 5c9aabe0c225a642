#pragma once

// Fine triangulation of the rectangular domain and the discrete fracture model
// substrate: fracture polylines are snapped onto chains of existing mesh edges.

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fracms {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Distance from p to the closed segment [a, b].
inline double distance_to_segment(Point p, Point a, Point b)
{
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    if (len2 == 0.0) return distance(p, a);
    const double t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
    return distance(p, {a.x + t * dx, a.y + t * dy});
}

using Polyline = std::vector<Point>;
using FracturePolylines = std::vector<Polyline>;

inline double distance_to_polyline(Point p, const Polyline& line)
{
    if (line.size() == 1) return distance(p, line.front());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < line.size(); ++k) {
        best = std::min(best, distance_to_segment(p, line[k], line[k + 1]));
    }
    return best;
}

inline double arclength(const Polyline& line)
{
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < line.size(); ++k) s += distance(line[k], line[k + 1]);
    return s;
}

enum class Side { left, right, bottom, top };
enum class BoundaryTag { dirichlet, neumann };

inline std::string_view to_string(Side s)
{
    switch (s) {
    case Side::left: return "left";
    case Side::right: return "right";
    case Side::bottom: return "bottom";
    case Side::top: return "top";
    }
    return "left";
}

inline Side side_from_string(std::string_view name)
{
    if (name == "left") return Side::left;
    if (name == "right") return Side::right;
    if (name == "bottom") return Side::bottom;
    if (name == "top") return Side::top;
    throw std::invalid_argument("unknown domain side '" + std::string(name) + "'");
}

using Edge = std::array<int, 2>;
using Triangle = std::array<int, 3>;

inline Edge make_edge(int a, int b) { return a < b ? Edge{a, b} : Edge{b, a}; }

struct BoundaryEdge {
    Edge vertices;
    Side side;
    BoundaryTag tag;
};

/// Structured grid layout of a mesh built by build_structured_trimesh; used for O(1) point location.
struct GridLayout {
    double lx = 0.0;
    double ly = 0.0;
    int nx = 0;
    int ny = 0;
};

struct FineMesh {
    std::vector<Point> vertices;
    std::vector<Triangle> triangles;
    std::vector<BoundaryEdge> boundary_edges;
    std::vector<Edge> fracture_edges;            ///< sorted, unique
    std::vector<std::vector<int>> fracture_chains; ///< vertex path per accepted polyline
    GridLayout grid;

    [[nodiscard]] int n_vertices() const { return static_cast<int>(vertices.size()); }
    [[nodiscard]] int n_triangles() const { return static_cast<int>(triangles.size()); }

    /// Signed area of triangle t (positive for counter-clockwise orientation).
    [[nodiscard]] double signed_area(int t) const
    {
        const auto& [a, b, c] = triangles[static_cast<std::size_t>(t)];
        const Point& pa = vertices[static_cast<std::size_t>(a)];
        const Point& pb = vertices[static_cast<std::size_t>(b)];
        const Point& pc = vertices[static_cast<std::size_t>(c)];
        return 0.5 * ((pb.x - pa.x) * (pc.y - pa.y) - (pc.x - pa.x) * (pb.y - pa.y));
    }

    [[nodiscard]] double total_area() const
    {
        double s = 0.0;
        for (int t = 0; t < n_triangles(); ++t) s += signed_area(t);
        return s;
    }

    [[nodiscard]] double edge_length(const Edge& e) const
    {
        return distance(vertices[static_cast<std::size_t>(e[0])], vertices[static_cast<std::size_t>(e[1])]);
    }

    [[nodiscard]] double fracture_length() const
    {
        double s = 0.0;
        for (const auto& e : fracture_edges) s += edge_length(e);
        return s;
    }

    /// Length of the longest edge of any triangle.
    [[nodiscard]] double cell_diameter() const
    {
        double h = 0.0;
        for (const auto& t : triangles) {
            h = std::max({h, edge_length(make_edge(t[0], t[1])), edge_length(make_edge(t[1], t[2])),
                          edge_length(make_edge(t[0], t[2]))});
        }
        return h;
    }

    [[nodiscard]] double diameter() const { return std::hypot(grid.lx, grid.ly); }

    [[nodiscard]] std::vector<int> dirichlet_nodes() const
    {
        std::vector<int> out;
        for (const auto& be : boundary_edges) {
            if (be.tag == BoundaryTag::dirichlet) {
                out.push_back(be.vertices[0]);
                out.push_back(be.vertices[1]);
            }
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    [[nodiscard]] std::vector<int> fracture_vertices() const
    {
        std::vector<int> out;
        for (const auto& e : fracture_edges) {
            out.push_back(e[0]);
            out.push_back(e[1]);
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    /// All unique triangle edges, sorted.
    [[nodiscard]] std::vector<Edge> edges() const
    {
        std::vector<Edge> out;
        out.reserve(triangles.size() * 3);
        for (const auto& t : triangles) {
            out.push_back(make_edge(t[0], t[1]));
            out.push_back(make_edge(t[1], t[2]));
            out.push_back(make_edge(t[0], t[2]));
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    /// Triangles sharing an edge with each triangle.
    [[nodiscard]] std::vector<std::vector<int>> triangle_neighbors() const
    {
        std::vector<std::pair<Edge, int>> keyed;
        keyed.reserve(triangles.size() * 3);
        for (int t = 0; t < n_triangles(); ++t) {
            const auto& tri = triangles[static_cast<std::size_t>(t)];
            keyed.emplace_back(make_edge(tri[0], tri[1]), t);
            keyed.emplace_back(make_edge(tri[1], tri[2]), t);
            keyed.emplace_back(make_edge(tri[0], tri[2]), t);
        }
        std::sort(keyed.begin(), keyed.end());
        std::vector<std::vector<int>> nb(triangles.size());
        for (std::size_t k = 0; k + 1 < keyed.size(); ++k) {
            if (keyed[k].first == keyed[k + 1].first) {
                nb[static_cast<std::size_t>(keyed[k].second)].push_back(keyed[k + 1].second);
                nb[static_cast<std::size_t>(keyed[k + 1].second)].push_back(keyed[k].second);
            }
        }
        return nb;
    }

    /// Triangle containing p and its barycentric coordinates; nullopt outside the grid.
    [[nodiscard]] std::optional<std::pair<int, std::array<double, 3>>> locate(Point p) const
    {
        if (grid.nx <= 0 || p.x < 0.0 || p.y < 0.0 || p.x > grid.lx || p.y > grid.ly) return std::nullopt;
        const double hx = grid.lx / grid.nx;
        const double hy = grid.ly / grid.ny;
        const int i = std::min(static_cast<int>(p.x / hx), grid.nx - 1);
        const int j = std::min(static_cast<int>(p.y / hy), grid.ny - 1);
        const double u = p.x / hx - i;
        const double v = p.y / hy - j;
        // Cell (i, j) holds triangles 2c (below the diagonal) and 2c+1 (above).
        const int cell = j * grid.nx + i;
        if (v <= u) {
            // (0,0), (1,0), (1,1)
            return std::pair{2 * cell, std::array{1.0 - u, u - v, v}};
        }
        // (0,0), (1,1), (0,1)
        return std::pair{2 * cell + 1, std::array{1.0 - v, u, v - u}};
    }

    /// Piecewise-linear interpolation of a nodal field at p (0 outside the grid).
    template <class Field>
    [[nodiscard]] double interpolate(const Field& nodal, Point p) const
    {
        const auto hit = locate(p);
        if (!hit) return 0.0;
        const auto& tri = triangles[static_cast<std::size_t>(hit->first)];
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += hit->second[static_cast<std::size_t>(k)] * nodal[tri[static_cast<std::size_t>(k)]];
        return s;
    }
};

/// Uniform nx × ny grid on [0, lx] × [0, ly], each cell split along its
/// lower-left to upper-right diagonal into two counter-clockwise triangles.
inline FineMesh build_structured_trimesh(double lx, double ly, int nx, int ny, Side dirichlet_side = Side::left)
{
    if (nx < 1 || ny < 1) throw std::invalid_argument("build_structured_trimesh: nx, ny must be >= 1");
    if (!(lx > 0.0) || !(ly > 0.0)) throw std::invalid_argument("build_structured_trimesh: extents must be positive");

    FineMesh mesh;
    mesh.grid = {lx, ly, nx, ny};
    const auto vid = [nx](int i, int j) { return j * (nx + 1) + i; };

    mesh.vertices.reserve(static_cast<std::size_t>((nx + 1) * (ny + 1)));
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) {
            mesh.vertices.push_back({lx * i / nx, ly * j / ny});
        }
    }
    mesh.triangles.reserve(static_cast<std::size_t>(2 * nx * ny));
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const int v00 = vid(i, j);
            const int v10 = vid(i + 1, j);
            const int v11 = vid(i + 1, j + 1);
            const int v01 = vid(i, j + 1);
            mesh.triangles.push_back({v00, v10, v11});
            mesh.triangles.push_back({v00, v11, v01});
        }
    }

    const auto tag = [dirichlet_side](Side s) {
        return s == dirichlet_side ? BoundaryTag::dirichlet : BoundaryTag::neumann;
    };
    for (int i = 0; i < nx; ++i) {
        mesh.boundary_edges.push_back({make_edge(vid(i, 0), vid(i + 1, 0)), Side::bottom, tag(Side::bottom)});
        mesh.boundary_edges.push_back({make_edge(vid(i, ny), vid(i + 1, ny)), Side::top, tag(Side::top)});
    }
    for (int j = 0; j < ny; ++j) {
        mesh.boundary_edges.push_back({make_edge(vid(0, j), vid(0, j + 1)), Side::left, tag(Side::left)});
        mesh.boundary_edges.push_back({make_edge(vid(nx, j), vid(nx, j + 1)), Side::right, tag(Side::right)});
    }
    return mesh;
}

class FractureFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parses one polyline per line, "x1,y1,x2,y2[,...]"; blank lines and lines
/// starting with '#' are skipped. Points must lie in [0, lx] × [0, ly].
inline FracturePolylines parse_fractures(std::istream& in, double lx, double ly, const std::string& source = "<stream>")
{
    FracturePolylines out;
    std::string line;
    int lineno = 0;
    const auto fail = [&](const std::string& what) {
        throw FractureFileError(source + ":" + std::to_string(lineno) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;

        std::vector<double> values;
        std::string_view rest(line);
        while (true) {
            const auto comma = rest.find(',');
            std::string_view tok = rest.substr(0, comma);
            while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
            while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t')) tok.remove_suffix(1);
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (tok.empty() || ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
                fail("malformed number '" + std::string(tok) + "'");
            }
            values.push_back(v);
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (values.size() < 4 || values.size() % 2 != 0) {
            fail("expected an even count of at least 4 coordinates, got " + std::to_string(values.size()));
        }
        Polyline poly;
        for (std::size_t k = 0; k < values.size(); k += 2) {
            const Point p{values[k], values[k + 1]};
            if (p.x < 0.0 || p.x > lx || p.y < 0.0 || p.y > ly) {
                fail("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") outside the domain");
            }
            poly.push_back(p);
        }
        out.push_back(std::move(poly));
    }
    return out;
}

inline FracturePolylines load_fractures(const std::filesystem::path& path, double lx, double ly)
{
    std::ifstream in(path);
    if (!in) throw FractureFileError("cannot open fracture file " + path.string());
    return parse_fractures(in, lx, ly, path.string());
}

namespace detail {

inline int nearest_vertex(const FineMesh& mesh, Point p)
{
    int best = 0;
    double dbest = std::numeric_limits<double>::infinity();
    for (int v = 0; v < mesh.n_vertices(); ++v) {
        const double d = distance(mesh.vertices[static_cast<std::size_t>(v)], p);
        if (d < dbest) {
            dbest = d;
            best = v;
        }
    }
    return best;
}

/// Cheapest vertex path from `from` to `to` where an edge costs the distance
/// from its midpoint to the segment [a, b], plus a small length term that
/// breaks ties between equally close paths in favour of fewer edges.
inline std::vector<int> edge_path(const FineMesh& mesh, const std::vector<std::vector<int>>& adjacency, int from,
                                  int to, Point a, Point b)
{
    const std::size_t n = mesh.vertices.size();
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::vector<int> prev(n, -1);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    dist[static_cast<std::size_t>(from)] = 0.0;
    queue.emplace(0.0, from);
    while (!queue.empty()) {
        const auto [d, u] = queue.top();
        queue.pop();
        if (d > dist[static_cast<std::size_t>(u)]) continue;
        if (u == to) break;
        const Point pu = mesh.vertices[static_cast<std::size_t>(u)];
        for (int w : adjacency[static_cast<std::size_t>(u)]) {
            const Point pw = mesh.vertices[static_cast<std::size_t>(w)];
            const Point mid{0.5 * (pu.x + pw.x), 0.5 * (pu.y + pw.y)};
            const double cost = distance_to_segment(mid, a, b) + 1e-3 * distance(pu, pw);
            if (d + cost < dist[static_cast<std::size_t>(w)]) {
                dist[static_cast<std::size_t>(w)] = d + cost;
                prev[static_cast<std::size_t>(w)] = u;
                queue.emplace(d + cost, w);
            }
        }
    }
    std::vector<int> path;
    for (int v = to; v != -1; v = prev[static_cast<std::size_t>(v)]) path.push_back(v);
    std::reverse(path.begin(), path.end());
    return path;
}

} // namespace detail

/// Embeds each polyline as a connected chain of mesh edges. Polyline vertices
/// snap to their nearest mesh vertex; consecutive snapped vertices are joined
/// by the edge path hugging the corresponding segment. Polylines that collapse
/// to a single vertex are dropped with a warning.
inline FineMesh snap_fractures(FineMesh mesh, const FracturePolylines& polylines)
{
    mesh.fracture_edges.clear();
    mesh.fracture_chains.clear();
    if (polylines.empty()) return mesh;

    std::vector<std::vector<int>> adjacency(mesh.vertices.size());
    for (const auto& e : mesh.edges()) {
        adjacency[static_cast<std::size_t>(e[0])].push_back(e[1]);
        adjacency[static_cast<std::size_t>(e[1])].push_back(e[0]);
    }

    for (std::size_t p = 0; p < polylines.size(); ++p) {
        const auto& line = polylines[p];
        std::vector<int> chain;
        for (std::size_t k = 0; k + 1 < line.size(); ++k) {
            const int from = chain.empty() ? detail::nearest_vertex(mesh, line[k]) : chain.back();
            const int to = detail::nearest_vertex(mesh, line[k + 1]);
            if (from == to) {
                if (chain.empty()) chain.push_back(from);
                continue;
            }
            auto piece = detail::edge_path(mesh, adjacency, from, to, line[k], line[k + 1]);
            chain.insert(chain.end(), chain.empty() ? piece.begin() : piece.begin() + 1, piece.end());
        }
        if (chain.size() < 2) {
            spdlog::warn("fracture {} collapses to a single mesh vertex after snapping; ignored", p);
            continue;
        }
        for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
            mesh.fracture_edges.push_back(make_edge(chain[k], chain[k + 1]));
        }
        mesh.fracture_chains.push_back(std::move(chain));
    }
    std::sort(mesh.fracture_edges.begin(), mesh.fracture_edges.end());
    mesh.fracture_edges.erase(std::unique(mesh.fracture_edges.begin(), mesh.fracture_edges.end()),
                              mesh.fracture_edges.end());
    return mesh;
}

} // namespace fracms
