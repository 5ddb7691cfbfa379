#include <catch2/catch_amalgamated.hpp>

#include <fiberfit/estimators.hpp>
#include <fiberfit/trainer.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>

using namespace fiberfit;

namespace {

// Gradient of the plane-wave solution T(x) = (p . x) / theta(p) for a
// constant tensor: exactly unit anisotropic speed in direction p.
Vec3 plane_wave_gradient(const Mat3& d, const Vec3& direction) {
    const Vec3 p = direction.normalized();
    return p / std::sqrt(p.dot(d * p));
}

Vec3 planar_dir(double angle_rad) {
    return Vec3(std::cos(angle_rad), std::sin(angle_rad), 0.0);
}

}  // namespace

TEST_CASE("fiber angle error treats directions as axes") {
    const Vec3 x = Vec3::UnitX();
    CHECK(fiber_angle_error(x, x) == 0.0);
    CHECK(fiber_angle_error(x, -x) == 0.0);
    CHECK(fiber_angle_error(x, Vec3::UnitY()) == Catch::Approx(90.0));
    CHECK(fiber_angle_error(x, Vec3(1, 1, 0)) == Catch::Approx(45.0));
    CHECK(fiber_angle_error(3.0 * x, Vec3(-2, 2, 0)) == Catch::Approx(45.0));
    CHECK_THROWS_AS(fiber_angle_error(Vec3::Zero(), x), std::invalid_argument);
}

TEST_CASE("rmse over a pair of maps") {
    CHECK(map_rmse({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == 0.0);
    CHECK(map_rmse({1.0, 2.0}, {2.0, 4.0}) ==
          Catch::Approx(std::sqrt(2.5)).epsilon(1e-15));
    CHECK_THROWS_AS(map_rmse({1.0}, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(map_rmse({}, {}), std::invalid_argument);
}

TEST_CASE("measurement noise is seeded gaussian jitter") {
    std::vector<SampleRow> rows(10000);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].time_ms = 5.0;

    auto jittered = rows;
    add_noise(jittered, 1.0, 42);
    double mean = 0.0;
    for (const auto& r : jittered) mean += r.time_ms - 5.0;
    mean /= jittered.size();
    double var = 0.0;
    for (const auto& r : jittered) {
        const double d = r.time_ms - 5.0 - mean;
        var += d * d;
    }
    var /= jittered.size() - 1;
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::sqrt(var) == Catch::Approx(1.0).margin(0.05));

    auto again = rows;
    add_noise(again, 1.0, 42);
    for (std::size_t i = 0; i < rows.size(); ++i)
        CHECK(again[i].time_ms == jittered[i].time_ms);

    auto silent = rows;
    add_noise(silent, 0.0, 7);
    for (std::size_t i = 0; i < rows.size(); ++i)
        CHECK(silent[i].time_ms == 5.0);

    CHECK_THROWS_AS(add_noise(rows, -0.1, 0), std::invalid_argument);
}

TEST_CASE("three plane waves pin the local tensor exactly") {
    const Vec3 v1 = Vec3::UnitX(), v2 = Vec3::UnitY();
    const FiberParams truth{std::cos(std::numbers::pi / 6.0), 2.0, 0.5};
    const Mat3 d = assemble_tensor(truth, v1, v2);

    std::vector<Vec3> grads;
    for (double deg : {0.0, 50.0, 100.0, 150.0})
        grads.push_back(plane_wave_gradient(d, planar_dir(deg * std::numbers::pi / 180.0)));

    const FitReport rep = fit_tensor_from_gradients(grads, v1, v2);
    CHECK(rep.used == 4);
    CHECK(rep.rank == 2);
    CHECK(rep.unique);
    CHECK(rep.residual < 1e-10);
    CHECK((rep.tensor - d).norm() < 1e-6);
    CHECK(fiber_angle_error(fiber_direction(rep.params, v1, v2),
                            fiber_direction(truth, v1, v2)) < 0.01);
}

TEST_CASE("the fit works in a rotated tangent frame") {
    const Vec3 v1 = Vec3(1, 1, 0).normalized(), v2 = Vec3(-1, 1, 0).normalized();
    const FiberParams truth{std::cos(1.1), 1.5, 0.4};
    const Mat3 d = assemble_tensor(truth, v1, v2);

    std::vector<Vec3> grads;
    for (double deg : {10.0, 70.0, 130.0})
        grads.push_back(plane_wave_gradient(d, planar_dir(deg * std::numbers::pi / 180.0)));

    const FitReport rep = fit_tensor_from_gradients(grads, v1, v2);
    CHECK(rep.unique);
    CHECK(rep.residual < 1e-10);
    CHECK((rep.tensor - d).norm() < 1e-6);
}

TEST_CASE("uniqueness requires three distinct directions and full rank") {
    const Vec3 v1 = Vec3::UnitX(), v2 = Vec3::UnitY();
    const Mat3 d = assemble_tensor({std::cos(0.4), 1.8, 0.6}, v1, v2);

    SECTION("a single map is never identifiable") {
        const FitReport rep =
            fit_tensor_from_gradients({plane_wave_gradient(d, planar_dir(0.3))}, v1, v2);
        CHECK(rep.used == 1);
        CHECK(rep.rank == 1);
        CHECK_FALSE(rep.unique);
        CHECK(rep.residual < 1e-10);  // one constraint is always satisfiable
    }
    SECTION("two maps stay ambiguous") {
        const FitReport rep = fit_tensor_from_gradients(
            {plane_wave_gradient(d, planar_dir(0.3)),
             plane_wave_gradient(d, planar_dir(1.4))},
            v1, v2);
        CHECK(rep.used == 2);
        CHECK_FALSE(rep.unique);
    }
    SECTION("parallel gradients count once") {
        const Vec3 g = plane_wave_gradient(d, planar_dir(0.7));
        const FitReport rep = fit_tensor_from_gradients({g, 2.0 * g, -0.5 * g}, v1, v2);
        CHECK(rep.used == 3);
        CHECK(rep.rank == 1);
        CHECK(rep.condition > 1e9);
        CHECK_FALSE(rep.unique);
    }
    SECTION("non-finite and vanishing gradients are dropped") {
        const Vec3 bad(std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0);
        const FitReport rep = fit_tensor_from_gradients(
            {plane_wave_gradient(d, planar_dir(0.2)), bad, Vec3::Zero(),
             plane_wave_gradient(d, planar_dir(1.0)),
             plane_wave_gradient(d, planar_dir(2.0))},
            v1, v2);
        CHECK(rep.used == 3);
        CHECK(rep.unique);
        CHECK((rep.tensor - d).norm() < 1e-6);
    }
    SECTION("no usable gradients yields an empty report") {
        const FitReport rep = fit_tensor_from_gradients({Vec3::Zero()}, v1, v2);
        CHECK(rep.used == 0);
        CHECK(rep.rank == 0);
        CHECK_FALSE(rep.unique);
        CHECK(rep.tensor.norm() == 0.0);
    }
}

TEST_CASE("isotropic speeds come back as a scaled tangential identity") {
    const Vec3 v1 = Vec3::UnitX(), v2 = Vec3::UnitY();
    const double c2 = 1.7;  // squared speed
    Mat3 d = Mat3::Zero();
    d(0, 0) = c2;
    d(1, 1) = c2;

    std::vector<Vec3> grads;
    for (double deg : {15.0, 75.0, 135.0, 160.0})
        grads.push_back(plane_wave_gradient(d, planar_dir(deg * std::numbers::pi / 180.0)));

    const FitReport rep = fit_tensor_from_gradients(grads, v1, v2);
    CHECK(rep.residual < 1e-10);
    CHECK(rep.params.e1 == Catch::Approx(c2).margin(1e-6));
    CHECK(rep.params.e2 == Catch::Approx(c2).margin(1e-6));
    CHECK((rep.tensor - d).norm() < 1e-6);
}

TEST_CASE("unseen-map validation replays the forward solver") {
    TriMesh mesh = build_unit_grid_mesh(15);
    auto field = ConductivityTensorField::isotropic(mesh, 1.0);
    const SourcePoint src{7, 0.0};
    const ActivationMap truth = solve_fim(mesh, field, {src});

    const UnseenMapReport same = validate_unseen_map(mesh, field, src, truth.times);
    CHECK(same.rmse < 1e-12);
    CHECK(same.predicted.times.size() == truth.times.size());

    std::vector<double> shifted = truth.times;
    for (double& t : shifted) t += 0.1;
    const UnseenMapReport off = validate_unseen_map(mesh, field, src, shifted);
    CHECK(off.rmse == Catch::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("fiber parameters are sampled at every vertex") {
    TriMesh mesh = build_unit_grid_mesh(4);
    TrainingConfig cfg;
    NeuralField dnet;
    dnet.spec = cfg.d_spec(2);
    dnet.params = MlpParams::zeros(dnet.spec);
    dnet.scaling = InputScaling::none(2);

    const auto params = eval_fiber_params(dnet, mesh);
    REQUIRE(static_cast<int>(params.size()) == mesh.vertex_count());
    for (const FiberParams& p : params) {
        CHECK(p.a == 0.0);  // tanh(0)
        CHECK(p.e1 == Catch::Approx(cfg.cap / 2.0).epsilon(1e-15));
        CHECK(p.e2 == Catch::Approx(cfg.cap / 2.0).epsilon(1e-15));
    }
}
