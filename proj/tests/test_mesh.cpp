#include <catch2/catch_amalgamated.hpp>

#include <fiberfit/mesh.hpp>

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

using namespace fiberfit;

namespace {

TriMesh two_triangle_square() {
    std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
    std::vector<std::array<int, 3>> t = {{0, 1, 2}, {0, 2, 3}};
    return TriMesh(v, t);
}

}  // namespace

TEST_CASE("unit grid mesh has the expected counts and extents") {
    SECTION("n = 2") {
        TriMesh m = build_unit_grid_mesh(2);
        REQUIRE(m.vertex_count() == 4);
        REQUIRE(m.triangle_count() == 2);
        CHECK(m.vertex(0).isApprox(Vec3(-1, -1, 0)));
        CHECK(m.vertex(1).isApprox(Vec3(1, -1, 0)));
        CHECK(m.vertex(2).isApprox(Vec3(-1, 1, 0)));
        CHECK(m.vertex(3).isApprox(Vec3(1, 1, 0)));
        CHECK(m.triangle(0) == std::array<int, 3>{0, 1, 3});
        CHECK(m.triangle(1) == std::array<int, 3>{0, 3, 2});
        CHECK(m.area(0) == Catch::Approx(2.0));
        CHECK(m.area(1) == Catch::Approx(2.0));
        CHECK(m.total_area() == Catch::Approx(4.0));
    }
    SECTION("n = 3") {
        TriMesh m = build_unit_grid_mesh(3);
        REQUIRE(m.vertex_count() == 9);
        REQUIRE(m.triangle_count() == 8);
    }
    SECTION("n = 35") {
        TriMesh m = build_unit_grid_mesh(35);
        REQUIRE(m.vertex_count() == 1225);
        REQUIRE(m.triangle_count() == 2312);
        REQUIRE(m.edge_count() == 3536);

        double h = 2.0 / 34.0;
        double expected_mean =
            (2380.0 * h + 1156.0 * h * std::sqrt(2.0)) / 3536.0;
        CHECK(m.mean_edge_length() == Catch::Approx(expected_mean));

        Vec3 lo, hi;
        m.bounding_box(lo, hi);
        CHECK(lo.isApprox(Vec3(-1, -1, 0)));
        CHECK(hi.isApprox(Vec3(1, 1, 0)));

        int boundary = 0;
        for (int i = 0; i < m.vertex_count(); ++i)
            if (m.is_boundary_vertex(i)) ++boundary;
        CHECK(boundary == 136);
        CHECK(m.total_area() == Catch::Approx(4.0));
    }
    SECTION("n < 2 is rejected") {
        CHECK_THROWS_AS(build_unit_grid_mesh(1), std::invalid_argument);
    }
}

TEST_CASE("mesh invariants are enforced on construction") {
    std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};

    SECTION("vertex index out of range") {
        CHECK_THROWS_AS(TriMesh(v, {{0, 1, 7}}), std::invalid_argument);
    }
    SECTION("repeated vertex in a triangle") {
        CHECK_THROWS_AS(TriMesh(v, {{0, 1, 1}}), std::invalid_argument);
    }
    SECTION("degenerate (collinear) triangle") {
        std::vector<Vec3> w = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
        CHECK_THROWS_WITH(TriMesh(w, {{0, 1, 2}}),
                          Catch::Matchers::ContainsSubstring("degenerate"));
    }
    SECTION("inconsistent winding") {
        // Both triangles traverse the shared edge as 2 -> 0.
        CHECK_THROWS_WITH(TriMesh(v, {{0, 1, 2}, {2, 0, 3}}),
                          Catch::Matchers::ContainsSubstring("orientation"));
    }
    SECTION("three triangles on one edge") {
        std::vector<Vec3> w = {
            {0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}};
        CHECK_THROWS_AS(TriMesh(w, {{0, 1, 2}, {1, 0, 3}, {0, 1, 4}}),
                        std::invalid_argument);
    }
    SECTION("a valid mesh passes validate()") {
        TriMesh m = two_triangle_square();
        CHECK_NOTHROW(m.validate());
        CHECK(m.edge_count() == 5);
        CHECK(m.normal(0).isApprox(Vec3(0, 0, 1)));
        CHECK(m.normal(1).isApprox(Vec3(0, 0, 1)));
    }
}

TEST_CASE("per-vertex quantities on the unit square") {
    TriMesh m = two_triangle_square();

    SECTION("lumped areas sum to the surface area") {
        double total = 0.0;
        for (int i = 0; i < m.vertex_count(); ++i) total += m.lumped_area(i);
        CHECK(total == Catch::Approx(1.0));
        // Vertices 0 and 2 touch both triangles, 1 and 3 only one.
        CHECK(m.lumped_area(0) == Catch::Approx(1.0 / 3.0));
        CHECK(m.lumped_area(1) == Catch::Approx(1.0 / 6.0));
    }
    SECTION("vertex normals on a flat mesh") {
        for (int i = 0; i < m.vertex_count(); ++i)
            CHECK(m.vertex_normal(i).isApprox(Vec3(0, 0, 1)));
    }
    SECTION("neighbor lists are sorted") {
        CHECK(m.neighbors_of(0) == std::vector<int>{1, 2, 3});
        CHECK(m.neighbors_of(1) == std::vector<int>{0, 2});
        CHECK(m.triangles_of(0) == std::vector<int>{0, 1});
        CHECK(m.triangles_of(1) == std::vector<int>{0});
    }
    SECTION("boundary flags") {
        for (int i = 0; i < m.vertex_count(); ++i)
            CHECK(m.is_boundary_vertex(i));
        TriMesh g = build_unit_grid_mesh(3);
        CHECK_FALSE(g.is_boundary_vertex(4));  // center vertex
    }
}

TEST_CASE("closest point on a triangle covers every Voronoi region") {
    Vec3 a(0, 0, 0), b(2, 0, 0), c(0, 2, 0);

    SECTION("interior projection") {
        Vec3 bary;
        Vec3 p = closest_point_on_triangle(Vec3(0.5, 0.5, 3.0), a, b, c, bary);
        CHECK((p - Vec3(0.5, 0.5, 0)).norm() < 1e-14);
        CHECK(bary.minCoeff() > 0.0);
        CHECK(bary.sum() == Catch::Approx(1.0));
    }
    SECTION("vertex region") {
        Vec3 bary;
        Vec3 p = closest_point_on_triangle(Vec3(-1, -1, 0), a, b, c, bary);
        CHECK((p - a).norm() < 1e-14);
        CHECK(bary.x() == Catch::Approx(1.0));
    }
    SECTION("edge region") {
        Vec3 bary;
        Vec3 p = closest_point_on_triangle(Vec3(1, -1, 0), a, b, c, bary);
        CHECK((p - Vec3(1, 0, 0)).norm() < 1e-14);
        CHECK(bary.z() == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("hypotenuse region") {
        Vec3 bary;
        Vec3 p = closest_point_on_triangle(Vec3(2, 2, 0), a, b, c, bary);
        CHECK((p - Vec3(1, 1, 0)).norm() < 1e-14);
    }
}

TEST_CASE("point projection and interpolation on a grid") {
    TriMesh m = build_unit_grid_mesh(9);

    SECTION("on-surface points project to themselves") {
        std::vector<Vec3> pts = {{0.13, -0.42, 0}, {-0.97, 0.88, 0}};
        auto proj = project_points(m, pts);
        REQUIRE(proj.size() == 2);
        for (std::size_t k = 0; k < pts.size(); ++k) {
            CHECK(proj[k].distance < 1e-12);
            CHECK((proj[k].sample.position - pts[k]).norm() < 1e-12);
            Vec3 from_bary = PointSample::at(m, proj[k].sample.triangle,
                                             proj[k].sample.bary)
                                 .position;
            CHECK((from_bary - pts[k]).norm() < 1e-12);
        }
    }
    SECTION("off-plane distance equals the height") {
        auto proj = project_points(m, {Vec3(0.25, 0.25, 0.7)});
        CHECK(proj[0].distance == Catch::Approx(0.7));
    }
    SECTION("nearest vertex") {
        CHECK(nearest_vertex(m, Vec3(-1, -1, 0)) == 0);
        CHECK(nearest_vertex(m, Vec3(1.2, 1.3, 0)) == 80);
    }
    SECTION("linear fields interpolate exactly") {
        std::vector<double> f(m.vertex_count());
        for (int i = 0; i < m.vertex_count(); ++i) {
            Vec3 p = m.vertex(i);
            f[i] = 2.0 * p.x() - 3.0 * p.y() + 1.0;
        }
        PointSample s = PointSample::at(m, 4, Vec3(0.2, 0.3, 0.5));
        double got = interpolate_vertex_values(m, f, s);
        CHECK(got ==
              Catch::Approx(2.0 * s.position.x() - 3.0 * s.position.y() + 1.0));
    }
}
