#include "fracms/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

using namespace fracms;

namespace {

FracturePolylines parse(const std::string& text, double l = 80.0)
{
    std::istringstream in(text);
    return parse_fractures(in, l, l);
}

void expect_connected_chain(const FineMesh& mesh, const std::vector<int>& chain)
{
    const auto all = mesh.edges();
    const std::set<Edge> edges(all.begin(), all.end());
    for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
        EXPECT_TRUE(edges.count(make_edge(chain[k], chain[k + 1]))) << "chain step " << k << " is not a mesh edge";
    }
}

} // namespace

TEST(StructuredMesh, SingleCell)
{
    const auto m = build_structured_trimesh(1.0, 1.0, 1, 1);
    EXPECT_EQ(m.n_vertices(), 4);
    EXPECT_EQ(m.n_triangles(), 2);
}

TEST(StructuredMesh, CountsAreaAndOrientation)
{
    const auto small = build_structured_trimesh(80.0, 80.0, 2, 2);
    EXPECT_EQ(small.n_vertices(), 9);
    EXPECT_EQ(small.n_triangles(), 8);
    EXPECT_DOUBLE_EQ(small.total_area(), 6400.0);

    const auto m = build_structured_trimesh(80.0, 80.0, 100, 100);
    EXPECT_NEAR(m.total_area(), 6400.0, 6400.0 * 1e-9);
    for (int t = 0; t < m.n_triangles(); ++t) ASSERT_GT(m.signed_area(t), 0.0);
}

TEST(StructuredMesh, BoundaryTagging)
{
    const auto m = build_structured_trimesh(80.0, 40.0, 8, 4, Side::bottom);
    int dirichlet = 0;
    int neumann = 0;
    for (const auto& e : m.boundary_edges) {
        if (e.tag == BoundaryTag::dirichlet) {
            ++dirichlet;
            EXPECT_EQ(e.side, Side::bottom);
        } else {
            ++neumann;
        }
    }
    EXPECT_EQ(dirichlet, 8);
    EXPECT_EQ(dirichlet + neumann, 2 * (8 + 4));
    EXPECT_EQ(m.dirichlet_nodes().size(), 9u);

    // every boundary edge is an edge of exactly one triangle
    std::map<Edge, int> uses;
    for (const auto& t : m.triangles) {
        ++uses[make_edge(t[0], t[1])];
        ++uses[make_edge(t[1], t[2])];
        ++uses[make_edge(t[0], t[2])];
    }
    for (const auto& e : m.boundary_edges) EXPECT_EQ(uses[e.vertices], 1);
    int single = 0;
    for (const auto& [e, n] : uses) single += n == 1;
    EXPECT_EQ(single, static_cast<int>(m.boundary_edges.size()));
}

TEST(StructuredMesh, RejectsBadArguments)
{
    EXPECT_THROW(build_structured_trimesh(1.0, 1.0, 0, 1), std::invalid_argument);
    EXPECT_THROW(build_structured_trimesh(-1.0, 1.0, 1, 1), std::invalid_argument);
}

TEST(StructuredMesh, InterpolationReproducesLinearFields)
{
    const auto m = build_structured_trimesh(80.0, 80.0, 7, 5);
    std::vector<double> f(static_cast<std::size_t>(m.n_vertices()));
    for (int v = 0; v < m.n_vertices(); ++v) {
        const auto& p = m.vertices[static_cast<std::size_t>(v)];
        f[static_cast<std::size_t>(v)] = 3.0 * p.x - 2.0 * p.y + 1.0;
    }
    for (const Point p : {Point{0.0, 0.0}, Point{80.0, 80.0}, Point{13.7, 61.2}, Point{40.0, 0.5}}) {
        EXPECT_NEAR(m.interpolate(f, p), 3.0 * p.x - 2.0 * p.y + 1.0, 1e-10);
    }
    EXPECT_FALSE(m.locate({81.0, 1.0}).has_value());
}

TEST(FractureFile, ParsesPolylinesCommentsAndBlanks)
{
    const auto one = parse("0,40,80,40\n");
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].size(), 2u);
    EXPECT_DOUBLE_EQ(one[0][1].x, 80.0);

    EXPECT_TRUE(parse("").empty());
    const auto several = parse("# header\n\n1, 2, 3, 4, 5, 6\r\n  # indented comment\n10,10,20,20\n");
    ASSERT_EQ(several.size(), 2u);
    EXPECT_EQ(several[0].size(), 3u);
}

TEST(FractureFile, ErrorsCarryLineNumbers)
{
    try {
        (void)parse("0,0,1,1\n0,0,abc,1\n");
        FAIL() << "expected a parse error";
    } catch (const FractureFileError& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
    EXPECT_THROW((void)parse("0,0,1\n"), FractureFileError);
    EXPECT_THROW((void)parse("0,0,1,1,2\n"), FractureFileError);
    EXPECT_THROW((void)parse("0,0,1,\n"), FractureFileError);
    EXPECT_THROW((void)parse("0,0,90,1\n"), FractureFileError);
    EXPECT_THROW((void)load_fractures("/nonexistent/fractures.csv", 80, 80), FractureFileError);
}

TEST(FractureFile, BundledAssetsAreInsideTheDomain)
{
    for (const char* name : {"fractures_test1.csv", "fractures_test2.csv"}) {
        const auto lines = load_fractures(std::filesystem::path(FRACMS_DATA_DIR) / name, 80.0, 80.0);
        EXPECT_GE(lines.size(), 3u) << name;
        for (const auto& l : lines) EXPECT_GE(l.size(), 2u);
    }
}

TEST(Snapping, HorizontalGridLine)
{
    const auto mesh = snap_fractures(build_structured_trimesh(80.0, 80.0, 20, 20), parse("0,40,80,40\n"));
    EXPECT_EQ(mesh.fracture_edges.size(), 20u);
    EXPECT_NEAR(mesh.fracture_length(), 80.0, 1e-12);
    ASSERT_EQ(mesh.fracture_chains.size(), 1u);
    expect_connected_chain(mesh, mesh.fracture_chains[0]);
    for (int v : mesh.fracture_vertices()) EXPECT_DOUBLE_EQ(mesh.vertices[static_cast<std::size_t>(v)].y, 40.0);
}

TEST(Snapping, EmptyInput)
{
    const auto mesh = snap_fractures(build_structured_trimesh(80.0, 80.0, 4, 4), {});
    EXPECT_TRUE(mesh.fracture_edges.empty());
    EXPECT_TRUE(mesh.fracture_chains.empty());
}

TEST(Snapping, DiagonalAlongCellDiagonals)
{
    const auto mesh = snap_fractures(build_structured_trimesh(80.0, 80.0, 10, 10), parse("0,0,80,80\n"));
    const double h = mesh.cell_diameter();
    ASSERT_EQ(mesh.fracture_chains.size(), 1u);
    const auto& chain = mesh.fracture_chains[0];
    expect_connected_chain(mesh, chain);
    EXPECT_EQ(chain.front(), 0);
    EXPECT_EQ(chain.back(), mesh.n_vertices() - 1);
    // exhaustive distance check of every chain vertex against the segment
    for (int v : chain) {
        const auto& p = mesh.vertices[static_cast<std::size_t>(v)];
        const double d = std::abs(p.x - p.y) / std::sqrt(2.0);
        EXPECT_LE(d, h);
    }
    const double len = std::hypot(80.0, 80.0);
    EXPECT_GE(mesh.fracture_length(), len * (1.0 - 1e-12));
    EXPECT_LE(mesh.fracture_length(), len * std::sqrt(2.0));
}

TEST(Snapping, ObliqueSegmentStaysWithinOneCell)
{
    const auto mesh = snap_fractures(build_structured_trimesh(80.0, 80.0, 16, 16), parse("3,7,71,52,60,75\n"));
    const double h = mesh.cell_diameter();
    ASSERT_EQ(mesh.fracture_chains.size(), 1u);
    expect_connected_chain(mesh, mesh.fracture_chains[0]);
    const Polyline line{{3, 7}, {71, 52}, {60, 75}};
    for (const auto& e : mesh.fracture_edges) {
        const auto& a = mesh.vertices[static_cast<std::size_t>(e[0])];
        const auto& b = mesh.vertices[static_cast<std::size_t>(e[1])];
        EXPECT_LE(distance_to_polyline({0.5 * (a.x + b.x), 0.5 * (a.y + b.y)}, line), h);
    }
    EXPECT_GE(mesh.fracture_length(), arclength(line) * 0.95);
    EXPECT_LE(mesh.fracture_length(), arclength(line) * std::sqrt(2.0));
    // no duplicate edges
    std::set<Edge> unique(mesh.fracture_edges.begin(), mesh.fracture_edges.end());
    EXPECT_EQ(unique.size(), mesh.fracture_edges.size());
}

TEST(Snapping, DegeneratePolylineIsDropped)
{
    const auto mesh = snap_fractures(build_structured_trimesh(80.0, 80.0, 4, 4), parse("1,1,2,2\n0,40,80,40\n"));
    EXPECT_EQ(mesh.fracture_chains.size(), 1u);
    EXPECT_EQ(mesh.fracture_edges.size(), 4u);
}
