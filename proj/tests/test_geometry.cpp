#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hsflow/errors.hpp"
#include "hsflow/geometry.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace hsflow;

namespace {

constexpr double kPi = std::numbers::pi;

BoundaryCurve circle(std::size_t n, double r = 1.0) {
    return sample_polar_boundary({r, {}}, n);
}

}  // namespace

TEST_CASE("regular 256-gon measures") {
    const auto m = curve_measures(circle(256));
    const double n = 256.0;
    CHECK(m.perimeter == doctest::Approx(2.0 * n * std::sin(kPi / n)).epsilon(1e-14));
    CHECK(m.area == doctest::Approx(0.5 * n * std::sin(2.0 * kPi / n)).epsilon(1e-14));
    CHECK(m.perimeter == doctest::Approx(6.283030).epsilon(1e-6));
    CHECK(m.area == doctest::Approx(3.141277).epsilon(1e-6));
}

TEST_CASE("unit square") {
    BoundaryCurve sq({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
    const auto m = curve_measures(sq);
    CHECK(m.perimeter == doctest::Approx(4.0));
    CHECK(m.area == doctest::Approx(1.0));
    const Vec2 c = polygon_centroid(sq);
    CHECK(c.x() == doctest::Approx(0.5));
    CHECK(c.y() == doctest::Approx(0.5));
}

TEST_CASE("invalid curves are rejected") {
    CHECK_THROWS_AS(BoundaryCurve({{0, 0}, {0, 1}, {1, 1}, {1, 0}}), GeometryError);  // clockwise
    CHECK_THROWS_AS(BoundaryCurve({{0, 0}, {1, 0}}), GeometryError);
    CHECK_THROWS_AS(BoundaryCurve({{0, 0}, {2, 2}, {2, 0}, {0, 2}, {-1, 1}}), GeometryError);  // bow tie
    CHECK_THROWS_AS(BoundaryCurve({{0, 0}, {1, 0}, {1, 0}, {0, 1}}), GeometryError);
    CHECK_THROWS_AS(sample_polar_boundary({1.0, {}}, 7), GeometryError);
    CHECK_THROWS_AS(sample_polar_boundary({1.0, {{2, 1.5, 0.0}}}, 64), GeometryError);
}

TEST_CASE("Fourier decomposition recovers a single mode") {
    const auto curve = sample_polar_boundary({1.0, {{2, 0.05, 0.0}}}, 512);
    const auto f = fourier_decompose(curve, 6);
    CHECK(std::abs(f.c(2) - 0.05) < 1e-4);
    for (int m = 1; m <= 6; ++m) {
        CHECK(std::abs(f.s(m)) < 1e-4);
        if (m != 2) CHECK(std::abs(f.c(m)) < 1e-4);
    }
    const auto round = fourier_decompose(sample_polar_boundary({1.0, {}}, 256), 6);
    for (int m = 1; m <= 6; ++m) {
        CHECK(std::abs(round.c(m)) < 1e-12);
        CHECK(std::abs(round.s(m)) < 1e-12);
    }
}

TEST_CASE("Fourier decomposition of the mixed shape") {
    const auto curve =
        sample_polar_boundary({1.0, {{2, 0.03, 0.0}, {3, 0.0, -0.03}, {4, 0.0, 0.03}, {5, -0.03, 0.0}}}, 512);
    const auto f = fourier_decompose(curve, 6);
    CHECK(std::abs(f.c(2) - 0.03) < 1e-4);
    CHECK(std::abs(f.s(3) + 0.03) < 1e-4);
    CHECK(std::abs(f.s(4) - 0.03) < 1e-4);
    CHECK(std::abs(f.c(5) + 0.03) < 1e-4);
}

TEST_CASE("curvature of circles and a perturbed circle") {
    for (double r : {0.5, 1.0, 3.0}) {
        const auto curve = circle(128, r);
        const auto h = vertex_curvature_vector(curve);
        for (std::size_t i = 0; i < curve.size(); ++i) {
            const double kappa = h[i].dot(curve.normals()[i]);
            CHECK(kappa == doctest::Approx(1.0 / r).epsilon(1e-3));
        }
    }
    // kappa(0) = 1 + (m^2 - 1) eps + O(eps^2) for m = 2
    const double eps = 1e-3;
    const auto curve = sample_polar_boundary({1.0, {{2, eps, 0.0}}}, 1024);
    const auto h = vertex_curvature_vector(curve);
    CHECK(h[0].dot(curve.normals()[0]) == doctest::Approx(1.0 + 3.0 * eps).epsilon(1e-5));
}

TEST_CASE("second-order convergence on the unit circle") {
    std::vector<double> perr, herr;
    for (std::size_t n : {64u, 128u, 256u, 512u}) {
        const auto curve = circle(n);
        perr.push_back(std::abs(curve_measures(curve).perimeter - 2.0 * kPi));
        double hmax = 0.0;
        for (const Vec2& h : vertex_curvature_vector(curve)) hmax = std::max(hmax, h.norm());
        herr.push_back(std::abs(hmax - 1.0));
    }
    for (std::size_t k = 0; k + 1 < perr.size(); ++k) {
        CHECK(std::log2(perr[k] / perr[k + 1]) >= 1.9);
        // the chord-weighted turn is exact on regular polygons
        CHECK(herr[k] < 1e-12);
    }
}

TEST_CASE("perturbed curvature against the linearized formula") {
    for (int m : {2, 3}) {
        const double eps = 1e-3;
        const auto curve = sample_polar_boundary({1.0, {{m, eps, 0.0}}}, 1024);
        const auto h = vertex_curvature_vector(curve);
        double err = 0.0;
        for (std::size_t i = 0; i < curve.size(); ++i) {
            const double theta = 2.0 * kPi * static_cast<double>(i) / 1024.0;
            const double kappa = h[i].dot(curve.normals()[i]);
            err = std::max(err, std::abs(kappa - 1.0 - eps * (m * m - 1) * std::cos(m * theta)));
        }
        CHECK(err < 10.0 * (eps * eps + 1.0 / (1024.0 * 1024.0)) * m * m * m * m);
    }
}

TEST_CASE("polar area of the perturbed circle") {
    const auto curve = sample_polar_boundary({1.0, {{2, 0.05, 0.0}}}, 1024);
    CHECK(curve_measures(curve).area == doctest::Approx(kPi * (1.0 + 0.05 * 0.05 / 2.0)).epsilon(1e-4));
}

TEST_CASE("outward normals") {
    const auto curve = sample_polar_boundary({1.0, {{3, 0.1, 0.0}}}, 64);
    const Vec2 c = polygon_centroid(curve);
    for (std::size_t i = 0; i < curve.size(); ++i) {
        CHECK(curve.normals()[i].dot(c - curve.vertex(i)) < 0.0);
        CHECK(curve.normals()[i].norm() == doctest::Approx(1.0));
    }
}

TEST_CASE("center of mass velocity") {
    const auto curve = circle(256);
    std::vector<double> un(curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i) un[i] = curve.normals()[i].x();  // translation (1, 0)
    const Vec2 u = center_of_mass_velocity(curve, un);
    CHECK(u.x() == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(std::abs(u.y()) < 1e-12);

    std::vector<double> radial(curve.size(), 1.0);
    CHECK(center_of_mass_velocity(curve, radial).norm() < 1e-12);
    CHECK_THROWS_AS(center_of_mass_velocity(curve, std::vector<double>(3, 0.0)), GeometryError);
}

TEST_CASE("edge-exact center of mass velocity under affine fields") {
    const auto curve = sample_polar_boundary({1.0, {{2, 0.1, 0.0}, {3, 0.0, -0.07}}}, 37);
    const Vec2 a(0.3, -1.2);
    Eigen::Matrix2d b;
    b << 0.4, -0.9, 0.25, 0.15;
    std::vector<Vec2> u;
    for (const Vec2& x : curve.vertices()) u.push_back(a + b * x);
    // d/dt of the first moment is int (u + x div u)
    const Vec2 c = polygon_centroid(curve);
    const Vec2 expected = a + b * c + b.trace() * c;
    CHECK((center_of_mass_velocity(curve, u) - expected).norm() < 1e-13);
    CHECK_THROWS_AS(center_of_mass_velocity(curve, std::vector<Vec2>(3, Vec2::Zero())), GeometryError);
}

TEST_CASE("boundary CSV round trip is bit exact") {
    const auto curve = sample_polar_boundary({1.3, {{3, 0.04, 0.01}}}, 97);
    std::stringstream ss;
    write_boundary_csv(ss, curve);
    const auto back = read_boundary_csv(ss);
    REQUIRE(back.size() == curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
        CHECK(back.vertex(i).x() == curve.vertex(i).x());
        CHECK(back.vertex(i).y() == curve.vertex(i).y());
    }
}
