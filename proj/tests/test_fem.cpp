#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hsflow/errors.hpp"
#include "hsflow/fem.hpp"
#include "test_support.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <numbers>

using namespace hsflow;
using hsflow::testing::disk_mesh;
using hsflow::testing::random_vector;
using hsflow::testing::unit_disk;

namespace {

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

TriangleMesh reference_triangle() { return TriangleMesh({{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 2}}, {0, 1, 2}); }

TriangleMesh two_triangles() {
    return TriangleMesh({{0, 0}, {1, 0}, {1.2, 0.9}, {-0.1, 1.1}}, {{0, 1, 2}, {0, 2, 3}}, {0, 1, 2, 3});
}

}  // namespace

TEST_CASE("degree-6 rule integrates barycentric monomials exactly") {
    const auto& rule = triangle_rule_degree6();
    double wsum = 0.0;
    for (const auto& q : rule) wsum += q.weight;
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-14));
    for (int a = 0; a <= 6; ++a) {
        for (int b = 0; a + b <= 6; ++b) {
            for (int c = 0; a + b + c <= 6; ++c) {
                double v = 0.0;
                for (const auto& q : rule) {
                    v += q.weight * std::pow(q.bary[0], a) * std::pow(q.bary[1], b) * std::pow(q.bary[2], c);
                }
                // integral over a triangle of area A is 2A a! b! c! / (a+b+c+2)!
                const double exact = 2.0 * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2);
                CHECK(v == doctest::Approx(exact).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("mass matrix") {
    const auto mesh = unit_disk();
    const VelocitySpace vs(mesh);
    const SparseMatrix m = assemble_mass(vs);
    CHECK(asymmetry(m) <= 1e-14);
    const Vector ex = vs.interpolate([](const Vec2&) { return Vec2(1.0, 0.0); });
    const Vector e11 = vs.interpolate([](const Vec2&) { return Vec2(1.0, 1.0); });
    CHECK(ex.dot(m * ex) == doctest::Approx(mesh.area()).epsilon(1e-13));
    CHECK(e11.dot(m * e11) == doctest::Approx(2.0 * mesh.area()).epsilon(1e-13));

    const auto tri = reference_triangle();
    const SparseMatrix mt = assemble_mass(VelocitySpace(tri));
    CHECK(mt.coeff(0, 2) == doctest::Approx(0.5 / 12.0).epsilon(1e-14));
    CHECK(mt.coeff(1, 5) == doctest::Approx(0.5 / 12.0).epsilon(1e-14));
    CHECK(mt.coeff(0, 0) == doctest::Approx(0.5 / 6.0).epsilon(1e-14));
    CHECK(mt.coeff(0, 1) == 0.0);
    // bubble: 27^2 * 2A * 2!2!2!/8! = 81 A / 280
    CHECK(mt.coeff(6, 6) == doctest::Approx(81.0 * 0.5 / 280.0).epsilon(1e-13));
    // hat times bubble: 27 * 2A * 2!/6! = 3 A / 20
    CHECK(mt.coeff(0, 6) == doctest::Approx(3.0 * 0.5 / 20.0).epsilon(1e-13));
}

TEST_CASE("divergence matrix") {
    const auto mesh = disk_mesh({1.0, {{3, 0.05, 0.0}}}, 64, 0.15);
    const VelocitySpace vs(mesh);
    const PressureSpace ps(mesh);
    const SparseMatrix b = assemble_divergence(vs, ps);
    CHECK(b.rows() == static_cast<Eigen::Index>(mesh.num_vertices()));
    const Vector one = Vector::Ones(b.rows());
    const Vector x = vs.interpolate([](const Vec2& p) { return p; });
    CHECK(one.dot(b * x) == doctest::Approx(2.0 * mesh.area()).epsilon(1e-13));
    const Vector rot = vs.interpolate([](const Vec2& p) { return Vec2(-p.y(), p.x()); });
    CHECK((b * rot).lpNorm<Eigen::Infinity>() < 1e-14);
    Vector bubble = Vector::Zero(static_cast<Eigen::Index>(vs.ndofs()));
    bubble[vs.bubble_dof(5, 0)] = 1.0;
    CHECK(std::abs(one.dot(b * bubble)) < 1e-15);
    // a bubble tested against a linear q integrates to -int b dq/dx
    const Vector qx = ps.interpolate([](const Vec2& p) { return p.x(); });
    CHECK(qx.dot(b * bubble) == doctest::Approx(-9.0 / 20.0 * mesh.triangle_area(5)).epsilon(1e-12));
}

TEST_CASE("curl-curl matrix") {
    const auto mesh = unit_disk();
    const VelocitySpace vs(mesh);
    const SparseMatrix c = assemble_curl_curl(vs);
    CHECK(asymmetry(c) <= 1e-14);
    const Vector rot = vs.interpolate([](const Vec2& p) { return Vec2(-p.y(), p.x()); });
    CHECK(rot.dot(c * rot) == doctest::Approx(4.0 * mesh.area()).epsilon(1e-13));
    const Vector cst = vs.interpolate([](const Vec2&) { return Vec2(0.3, -1.0); });
    CHECK(std::abs(cst.dot(c * cst)) < 1e-13);
    const Vector x = vs.interpolate([](const Vec2& p) { return p; });
    CHECK(std::abs(x.dot(c * x)) < 1e-13);
}

TEST_CASE("deformed perimeter") {
    const auto mesh = disk_mesh({1.0, {{2, 0.05, 0.0}}}, 64, 0.15);
    const VelocitySpace vs(mesh);
    const double p0 = curve_measures(mesh.boundary_curve()).perimeter;
    CHECK(deformed_perimeter(mesh, FeField(SpaceKind::velocity, Vector::Zero(static_cast<Eigen::Index>(vs.ndofs())), mesh), 0.1) ==
          doctest::Approx(p0).epsilon(1e-15));
    const Vector x = vs.interpolate([](const Vec2& p) { return p; });
    CHECK(deformed_perimeter(mesh, x, 0.1) == doctest::Approx(1.1 * p0).epsilon(1e-14));
    const Vector t = vs.interpolate([](const Vec2&) { return Vec2(2.0, -1.0); });
    CHECK(deformed_perimeter(mesh, t, 0.1) == doctest::Approx(p0).epsilon(1e-14));
}

TEST_CASE("perimeter gradient") {
    const double sigma = 0.5;
    const auto mesh = unit_disk(128, 0.15);
    const VelocitySpace vs(mesh);
    const Vector zero = Vector::Zero(static_cast<Eigen::Index>(vs.ndofs()));
    const Vector g = assemble_perimeter_gradient(mesh, zero, 0.01, sigma);
    const auto curve = mesh.boundary_curve();

    // radial hat at one boundary vertex
    const int v = mesh.boundary_loop()[7];
    Vector hat = zero;
    hat[vs.vertex_dof(static_cast<std::size_t>(v), 0)] = curve.normals()[7].x();
    hat[vs.vertex_dof(static_cast<std::size_t>(v), 1)] = curve.normals()[7].y();
    const double kappa = vertex_curvature_vector(curve)[7].dot(curve.normals()[7]);
    CHECK(g.dot(hat) == doctest::Approx(sigma * kappa * curve.arc_weight(7)).epsilon(1e-12));
    CHECK(kappa == doctest::Approx(1.0).epsilon(1e-12));

    const Vector cst = vs.interpolate([](const Vec2&) { return Vec2(1.0, 2.0); });
    CHECK(std::abs(g.dot(cst)) < 1e-13);
    const Vector x = vs.interpolate([](const Vec2& p) { return p; });
    CHECK(g.dot(x) == doctest::Approx(sigma * curve_measures(curve).perimeter).epsilon(1e-13));

    // only boundary vertex dofs are touched
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
        if (i >= mesh.num_boundary()) {
            CHECK(g[vs.vertex_dof(i, 0)] == 0.0);
            CHECK(g[vs.vertex_dof(i, 1)] == 0.0);
        }
    }
    CHECK(g.tail(static_cast<Eigen::Index>(2 * mesh.num_triangles())).norm() == 0.0);
}

TEST_CASE("gradient matches central differences of the deformed perimeter") {
    std::mt19937_64 rng(7);
    const double sigma = 0.5;
    const double dt = 0.1;
    const auto mesh = disk_mesh({1.0, {{2, 0.05, 0.0}, {3, 0.0, 0.02}}}, 64, 0.2);
    const auto n = static_cast<Eigen::Index>(VelocitySpace(mesh).ndofs());
    for (int trial = 0; trial < 5; ++trial) {
        const Vector u = random_vector(rng, n, 0.3);
        const Vector v = random_vector(rng, n, 0.3);
        const double exact = dt / sigma * assemble_perimeter_gradient(mesh, u, dt, sigma).dot(v);
        std::vector<double> err;
        for (double eps : {1e-2, 1e-3}) {
            const double fd = (deformed_perimeter(mesh, u + eps * v, dt) - deformed_perimeter(mesh, u - eps * v, dt)) /
                              (2.0 * eps);
            err.push_back(std::abs(fd - exact));
        }
        CHECK(std::log10(err[0] / err[1]) >= 1.9);

        // second differences against the exact Hessian
        const double eps = 1e-3;
        const double second = (deformed_perimeter(mesh, u + eps * v, dt) - 2.0 * deformed_perimeter(mesh, u, dt) +
                               deformed_perimeter(mesh, u - eps * v, dt)) /
                              (eps * eps);
        const SparseMatrix h = assemble_perimeter_hessian(mesh, u, dt, sigma, HessianKind::exact);
        const double hv = dt / sigma * v.dot(h * v);
        CHECK(std::abs(second - hv) <= 0.05 * std::abs(hv));
    }
}

TEST_CASE("perimeter Hessians") {
    std::mt19937_64 rng(11);
    const double sigma = 0.5;
    const double dt = 0.05;
    const auto mesh = disk_mesh({1.0, {{2, 0.05, 0.0}}}, 64, 0.15);
    const VelocitySpace vs(mesh);
    const auto n = static_cast<Eigen::Index>(vs.ndofs());
    const Vector uk = random_vector(rng, n, 0.5);
    const FeField uf(SpaceKind::velocity, uk, mesh);
    const SparseMatrix he = assemble_perimeter_hessian_exact(mesh, uf, dt, sigma);
    const SparseMatrix hm = assemble_perimeter_hessian_majorant(mesh, uf, dt, sigma);
    CHECK(asymmetry(he) <= 1e-14);
    CHECK(asymmetry(hm) <= 1e-14);

    // v = x + dt u_k has edge differences parallel to the deformed tangent
    Vector along = vs.interpolate([](const Vec2& p) { return p; }) + dt * uk;
    CHECK(std::abs(along.dot(he * along)) < 1e-12 * along.dot(hm * along));

    const Vector cst = vs.interpolate([](const Vec2&) { return Vec2(-0.4, 0.7); });
    CHECK(std::abs(cst.dot(hm * cst)) < 1e-14);

    for (int trial = 0; trial < 100; ++trial) {
        const Vector v = random_vector(rng, n);
        const double ve = v.dot(he * v);
        const double vm = v.dot(hm * v);
        CHECK(ve >= -1e-14);
        CHECK(vm - ve >= -1e-12);
    }

    // circle, u_k = 0: the dilation field is invisible to the exact Hessian, not to the majorant
    const auto disk = unit_disk();
    const VelocitySpace ds(disk);
    const Vector z = Vector::Zero(static_cast<Eigen::Index>(ds.ndofs()));
    const Vector dil = ds.interpolate([](const Vec2& p) { return p; });
    const SparseMatrix he0 = assemble_perimeter_hessian(disk, z, dt, sigma, HessianKind::exact);
    const SparseMatrix hm0 = assemble_perimeter_hessian(disk, z, dt, sigma, HessianKind::majorant);
    CHECK(std::abs(dil.dot(he0 * dil)) < 1e-14);
    CHECK(dil.dot(hm0 * dil) > 1e-3);
    // a radial bump is seen by both
    Vector bump = z;
    const auto curve = disk.boundary_curve();
    for (int k = 10; k < 14; ++k) {
        const int v = disk.boundary_loop()[static_cast<std::size_t>(k)];
        bump[2 * v] = curve.normals()[static_cast<std::size_t>(k)].x();
        bump[2 * v + 1] = curve.normals()[static_cast<std::size_t>(k)].y();
    }
    CHECK(bump.dot(he0 * bump) > 0.0);
}

TEST_CASE("static condensation reproduces the full solve") {
    for (const auto& mesh : {reference_triangle(), two_triangles()}) {
        const VelocitySpace vs(mesh);
        const PressureSpace ps(mesh);
        const SparseMatrix m = assemble_mass(vs);
        const SparseMatrix b = assemble_divergence(vs, ps);
        const auto nu = static_cast<Eigen::Index>(vs.ndofs());
        const auto np = static_cast<Eigen::Index>(ps.ndofs());
        std::mt19937_64 rng(3);
        const Vector f = random_vector(rng, nu);
        const Vector g = Vector::Zero(np);

        // dense oracle with a pinned pressure
        Eigen::MatrixXd k = Eigen::MatrixXd::Zero(nu + np + 1, nu + np + 1);
        k.topLeftCorner(nu, nu) = Eigen::MatrixXd(m);
        k.block(nu, 0, np, nu) = Eigen::MatrixXd(b);
        k.block(0, nu, nu, np) = Eigen::MatrixXd(b).transpose();
        k(nu + np, nu) = 1.0;
        k(nu, nu + np) = 1.0;
        Vector rhs = Vector::Zero(nu + np + 1);
        rhs.head(nu) = f;
        const Vector full = k.fullPivLu().solve(rhs);

        const CondensedSystem cs = static_condense_bubbles(vs, m, b, SparseMatrix(), f, g);
        const auto nv = static_cast<Eigen::Index>(vs.num_vertex_dofs());
        CHECK(asymmetry(cs.A) <= 1e-13);
        Eigen::MatrixXd kc = Eigen::MatrixXd::Zero(nv + np + 1, nv + np + 1);
        kc.topLeftCorner(nv, nv) = Eigen::MatrixXd(cs.A);
        kc.block(nv, 0, np, nv) = Eigen::MatrixXd(cs.B);
        kc.block(0, nv, nv, np) = Eigen::MatrixXd(cs.B).transpose();
        kc.block(nv, nv, np, np) = Eigen::MatrixXd(cs.C);
        kc(nv + np, nv) = 1.0;
        kc(nv, nv + np) = 1.0;
        Vector rc = Vector::Zero(nv + np + 1);
        rc.head(nv) = cs.f;
        rc.segment(nv, np) = cs.g;
        const Vector red = kc.fullPivLu().solve(rc);
        const Vector u = cs.recover_velocity(vs, red.head(nv), red.segment(nv, np));
        CHECK((u - full.head(nu)).norm() <= 1e-10 * full.head(nu).norm());
        CHECK((red.segment(nv, np) - full.segment(nu, np)).norm() <= 1e-10 * (1.0 + full.segment(nu, np).norm()));
    }
}

TEST_CASE("condensation with zero bubble coupling is the identity") {
    const auto mesh = two_triangles();
    const VelocitySpace vs(mesh);
    const auto nu = static_cast<Eigen::Index>(vs.ndofs());
    const auto nv = static_cast<Eigen::Index>(vs.num_vertex_dofs());
    // A = identity, B couples vertex dofs only
    SparseMatrix a(nu, nu);
    a.setIdentity();
    SparseMatrix b(4, nu);
    b.insert(0, 0) = 1.0;
    b.insert(1, 3) = -2.0;
    b.insert(3, 5) = 0.5;
    Vector f = Vector::LinSpaced(nu, 1.0, 2.0);
    const CondensedSystem cs = static_condense_bubbles(vs, a, b, SparseMatrix(), f, Vector::Zero(4));
    CHECK((Eigen::MatrixXd(cs.A) - Eigen::MatrixXd::Identity(nv, nv)).norm() == 0.0);
    CHECK((Eigen::MatrixXd(cs.B) - Eigen::MatrixXd(b).leftCols(nv)).norm() == 0.0);
    CHECK(Eigen::MatrixXd(cs.C).norm() == 0.0);
    CHECK((cs.f - f.head(nv)).norm() == 0.0);
}

TEST_CASE("fields are tied to their mesh") {
    const auto mesh = unit_disk();
    const auto other = unit_disk();
    const VelocitySpace vs(mesh);
    const FeField u(SpaceKind::velocity, vs.interpolate([](const Vec2& p) { return Vec2(p.y(), 2.0 * p.x()); }),
                    mesh);
    CHECK_THROWS_AS(u.check_mesh(other), MeshError);
    CHECK_THROWS_AS(FeField(SpaceKind::pressure, Vector::Zero(3), mesh), MeshError);
    const Vec2 val = u.velocity_at(mesh, Vec2(0.3, -0.2));
    CHECK(val.x() == doctest::Approx(-0.2).epsilon(1e-12));
    CHECK(val.y() == doctest::Approx(0.6).epsilon(1e-12));
    const PressureSpace ps(mesh);
    const FeField p(SpaceKind::pressure, ps.interpolate([](const Vec2& x) { return 1.0 + x.x() - 2.0 * x.y(); }), mesh);
    CHECK(p.pressure_at(mesh, Vec2(0.1, 0.2)) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(ps.lumped_mass().sum() == doctest::Approx(mesh.area()).epsilon(1e-13));
}

TEST_CASE("MatrixMarket export") {
    const auto mesh = reference_triangle();
    const auto path = std::filesystem::temp_directory_path() / "hsflow_mass.mtx";
    write_matrix_market(path.string(), assemble_mass(VelocitySpace(mesh)));
    CHECK(std::filesystem::file_size(path) > 0);
    std::filesystem::remove(path);
}
