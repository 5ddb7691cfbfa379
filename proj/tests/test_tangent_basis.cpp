#include <catch2/catch_amalgamated.hpp>

#include <fiberfit/tangent_basis.hpp>

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

using namespace fiberfit;

namespace {

TriMesh build_cylinder(int n_around, int n_rows, double radius, double height) {
    std::vector<Vec3> verts;
    for (int j = 0; j < n_rows; ++j) {
        for (int i = 0; i < n_around; ++i) {
            const double ang = 2.0 * M_PI * i / n_around;
            verts.emplace_back(radius * std::cos(ang), radius * std::sin(ang),
                               height * j / (n_rows - 1));
        }
    }
    auto id = [&](int i, int j) { return j * n_around + (i % n_around); };
    std::vector<std::array<int, 3>> tris;
    for (int j = 0; j + 1 < n_rows; ++j) {
        for (int i = 0; i < n_around; ++i) {
            const int ll = id(i, j), lr = id(i + 1, j);
            const int ul = id(i, j + 1), ur = id(i + 1, j + 1);
            tris.push_back({ll, lr, ur});
            tris.push_back({ll, ur, ul});
        }
    }
    return TriMesh(std::move(verts), std::move(tris));
}

TriMesh build_icosphere(int subdivisions) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> verts = {
        {-1, t, 0}, {1, t, 0},   {-1, -t, 0}, {1, -t, 0},
        {0, -1, t}, {0, 1, t},   {0, -1, -t}, {0, 1, -t},
        {t, 0, -1}, {t, 0, 1},   {-t, 0, -1}, {-t, 0, 1}};
    for (Vec3& v : verts) v.normalize();
    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            verts.push_back(((verts[a] + verts[b]) / 2.0).normalized());
            const int id = static_cast<int>(verts.size()) - 1;
            midpoint[key] = id;
            return id;
        };
        std::vector<std::array<int, 3>> next;
        for (const auto& f : faces) {
            const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]),
                      ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }
    return TriMesh(std::move(verts), std::move(faces));
}

double angle_between(const Vec3& a, const Vec3& b) {
    return std::atan2(a.cross(b).norm(), a.dot(b));
}

}  // namespace

TEST_CASE("trivial planar basis") {
    TriMesh m = build_unit_grid_mesh(5);
    TangentBasis basis = trivial_planar_basis(m);
    REQUIRE(basis.v1.size() == static_cast<std::size_t>(m.vertex_count()));
    CHECK_NOTHROW(basis.validate());
    CHECK((basis.v1[7] - Vec3::UnitX()).norm() == 0.0);
    CHECK((basis.v2[7] - Vec3::UnitY()).norm() == 0.0);
    CHECK((basis.n[7] - Vec3::UnitZ()).norm() == 0.0);

    TriMesh curved = build_cylinder(12, 3, 1.0, 1.0);
    CHECK_THROWS_AS(trivial_planar_basis(curved), std::invalid_argument);
}

TEST_CASE("validate rejects broken frames") {
    TriMesh m = build_unit_grid_mesh(3);
    TangentBasis basis = trivial_planar_basis(m);
    basis.v1[2] = Vec3(1, 1, 0);  // not unit, not orthogonal bookkeeping
    CHECK_THROWS_AS(basis.validate(), std::logic_error);
}

TEST_CASE("vector heat transport keeps a flat sheet constant") {
    TriMesh m = build_unit_grid_mesh(20);

    SECTION("axis-aligned seed") {
        TangentBasis basis = vector_heat_basis(m, 21, Vec3::UnitX());
        basis.validate();
        for (int v = 0; v < m.vertex_count(); ++v) {
            CHECK(angle_between(basis.v1[v], Vec3::UnitX()) < 1e-6);
            CHECK((basis.v2[v] - Vec3::UnitY()).norm() < 1e-6);
        }
    }
    SECTION("oblique seed") {
        const Vec3 dir = Vec3(1, 2, 0).normalized();
        TangentBasis basis = vector_heat_basis(m, 21, dir);
        for (int v = 0; v < m.vertex_count(); ++v)
            CHECK(angle_between(basis.v1[v], dir) < 1e-6);
    }
    SECTION("the normal component of the seed is discarded") {
        TangentBasis basis = vector_heat_basis(m, 21, Vec3(1, 0, 0.5));
        CHECK(angle_between(basis.v1[0], Vec3::UnitX()) < 1e-6);
    }
}

TEST_CASE("vector heat transport follows a cylinder axis") {
    TriMesh m = build_cylinder(96, 21, 1.0, 2.0);
    TangentBasis basis = vector_heat_basis(m, 0, Vec3::UnitZ());
    basis.validate();
    double worst = 0.0;
    for (int v = 0; v < m.vertex_count(); ++v)
        worst = std::max(worst, angle_between(basis.v1[v], Vec3::UnitZ()));
    CHECK(worst < 1e-3);
}

TEST_CASE("vector heat frames vary smoothly on a sphere") {
    TriMesh m = build_icosphere(2);
    REQUIRE(m.vertex_count() == 162);
    REQUIRE(m.triangle_count() == 320);
    // Sanity: outward orientation.
    for (int t = 0; t < m.triangle_count(); ++t) {
        const auto& tri = m.triangle(t);
        const Vec3 c =
            (m.vertex(tri[0]) + m.vertex(tri[1]) + m.vertex(tri[2])) / 3.0;
        REQUIRE(m.normal(t).dot(c) > 0.0);
    }

    const int src = default_transport_source(m);
    TangentBasis basis =
        vector_heat_basis(m, src, default_transport_direction(m, src));
    basis.validate();
    // Neighboring frames should differ by roughly one step of parallel
    // transport. Restricted to the source hemisphere: the transported field
    // necessarily swirls around a singularity at the antipode.
    const Vec3 src_pos = m.vertex(src);
    for (const auto& e : m.edges()) {
        if (m.vertex(e.v0).dot(src_pos) < 0.0 ||
            m.vertex(e.v1).dot(src_pos) < 0.0)
            continue;
        const Vec3& a = basis.v1[e.v0];
        Vec3 b = basis.v1[e.v1];
        b -= b.dot(basis.n[e.v0]) * basis.n[e.v0];  // compare in one plane
        CHECK(angle_between(a, b.normalized()) < 0.35);
    }
}

TEST_CASE("vector heat input validation") {
    TriMesh m = build_unit_grid_mesh(6);
    CHECK_THROWS_AS(vector_heat_basis(m, -1, Vec3::UnitX()),
                    std::invalid_argument);
    CHECK_THROWS_AS(vector_heat_basis(m, 999, Vec3::UnitX()),
                    std::invalid_argument);
    // Seed with no tangential part.
    CHECK_THROWS_AS(vector_heat_basis(m, 7, Vec3::UnitZ()),
                    std::invalid_argument);

    // Disconnected surface.
    std::vector<Vec3> v = {{0, 0, 0},  {1, 0, 0},  {0, 1, 0},
                           {10, 0, 0}, {11, 0, 0}, {10, 1, 0}};
    std::vector<std::array<int, 3>> t = {{0, 1, 2}, {3, 4, 5}};
    TriMesh two(v, t);
    CHECK_THROWS_AS(vector_heat_basis(two, 0, Vec3::UnitX()),
                    std::invalid_argument);
}

TEST_CASE("deterministic transport seed defaults") {
    TriMesh m = build_unit_grid_mesh(10);
    // First interior vertex carries the most lumped area (ties go low).
    CHECK(default_transport_source(m) == 11);
    // Its lowest-indexed neighbor is the diagonal partner at the origin corner.
    CHECK((default_transport_direction(m, 11) + Vec3(1, 1, 0).normalized())
              .norm() < 1e-14);
}

TEST_CASE("frames interpolate into triangle interiors") {
    TriMesh m = build_unit_grid_mesh(4);
    TangentBasis basis = trivial_planar_basis(m);

    SECTION("constant fields stay constant") {
        PointSample s = PointSample::at(m, 3, Vec3(0.3, 0.3, 0.4));
        Vec3 v1, v2, n;
        interpolate_basis(m, basis, s, v1, v2, n);
        CHECK((v1 - Vec3::UnitX()).norm() < 1e-14);
        CHECK((v2 - Vec3::UnitY()).norm() < 1e-14);
        CHECK((n - Vec3::UnitZ()).norm() < 1e-14);
    }
    SECTION("a cancelling blend falls back to the first edge") {
        const auto& tri = m.triangle(0);
        basis.v1[tri[0]] = Vec3::UnitX();
        basis.v1[tri[1]] = -Vec3::UnitX();
        PointSample s = PointSample::at(m, 0, Vec3(0.5, 0.5, 0.0));
        Vec3 v1, v2, n;
        interpolate_basis(m, basis, s, v1, v2, n);
        CHECK(std::abs(v1.norm() - 1.0) < 1e-14);
        CHECK(std::abs(v1.dot(n)) < 1e-14);
    }
}
