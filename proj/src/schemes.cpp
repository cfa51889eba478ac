#include "hsflow/schemes.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hsflow {

namespace {

Vector zeros(std::size_t n) { return Vector::Zero(static_cast<Eigen::Index>(n)); }

// Velocity-block operators of one mesh, condensed once per step.
struct BulkOperators {
    SparseMatrix mass;
    SparseMatrix neg_div;  // -B, so that the multiplier is the physical pressure
    CondensedSystem condensed;
};

BulkOperators build_bulk(const TriangleMesh& mesh, double alpha) {
    const VelocitySpace vs(mesh);
    const PressureSpace ps(mesh);
    BulkOperators ops;
    ops.mass = assemble_mass(vs);
    ops.neg_div = -assemble_divergence(vs, ps);
    SparseMatrix k = ops.mass;
    if (alpha > 0.0) k += alpha * assemble_curl_curl(vs);
    ops.condensed = static_condense_bubbles(vs, k, ops.neg_div, SparseMatrix(), zeros(vs.ndofs()),
                                            zeros(ps.ndofs()));
    return ops;
}

struct LinearSolve {
    Vector u;  // full velocity coefficients
    Vector p;
    double residual = 0.0;
};

// Solves the condensed system with an extra vertex-dof block `extra` added to A and the
// vertex right-hand side replaced by `f_vertex` (the bubble right-hand side is zero).
LinearSolve solve_condensed(const VelocitySpace& vs, const CondensedSystem& cs,
                            const std::vector<Triplet>& extra, const Vector& f_vertex, SaddleSolver& solver) {
    SaddleSystem sys;
    if (extra.empty()) {
        sys.A = cs.A;
    } else {
        SparseMatrix h(cs.A.rows(), cs.A.cols());
        h.setFromTriplets(extra.begin(), extra.end());
        sys.A = cs.A + h;
    }
    sys.B = cs.B;
    sys.C = cs.C;
    sys.f = f_vertex + cs.f;
    sys.g = cs.g;
    const SaddleSolution sol = solver.solve(sys);
    LinearSolve out;
    out.u = cs.recover_velocity(vs, sol.u, sol.p);
    out.p = sol.p;
    out.residual = sol.report.relative_residual;
    return out;
}

StepResult finish_step(const TriangleMesh& mesh, const SchemeConfig& cfg, LinearSolve sol, StepReport report) {
    FeField velocity(SpaceKind::velocity, std::move(sol.u), mesh);
    FeField pressure(SpaceKind::pressure, std::move(sol.p), mesh);
    const std::vector<Vec2> vv = velocity.vertex_velocities(mesh);
    TriangleMesh moved = advect_mesh(mesh, vv, cfg.dt);

    const CurveMeasures before = curve_measures(mesh.boundary_curve());
    const CurveMeasures after = curve_measures(moved.boundary_curve());
    report.perimeter_before = before.perimeter;
    report.perimeter_after = after.perimeter;
    report.area_before = before.area;
    report.area_after = after.area;
    double vmax = 0.0;
    for (const Vec2& v : vv) vmax = std::max(vmax, v.norm());
    report.max_displacement = cfg.dt * vmax;
    return StepResult{std::move(velocity), std::move(pressure), std::move(moved), std::move(report)};
}

double mass_norm2(const SparseMatrix& m, const Vector& v) { return v.dot(m * v); }

// Majorized Newton iteration shared by the newton and curl schemes.
StepResult newton_loop(const TriangleMesh& mesh, const SchemeConfig& cfg, double alpha, StepWorkspace* ws) {
    StepWorkspace local;
    SaddleSolver& solver = ws ? ws->solver() : local.solver();
    const VelocitySpace vs(mesh);
    const BulkOperators ops = build_bulk(mesh, alpha);
    const auto nv = static_cast<Eigen::Index>(vs.num_vertex_dofs());

    StepReport report;
    Vector u = zeros(vs.ndofs());
    LinearSolve sol;
    std::vector<Triplet> hess;
    for (int k = 1; k <= cfg.newton_max_iters; ++k) {
        hess.clear();
        append_perimeter_hessian(mesh, u, cfg.dt, cfg.sigma, HessianKind::majorant, hess);
        SparseMatrix h(nv, nv);
        h.setFromTriplets(hess.begin(), hess.end());
        const Vector g = assemble_perimeter_gradient(mesh, u, cfg.dt, cfg.sigma);
        const Vector f = -g.head(nv) + h * u.head(nv);
        sol = solve_condensed(vs, ops.condensed, hess, f, solver);
        const double inc = mass_norm2(ops.mass, sol.u - u);
        u = sol.u;
        report.increment_history.push_back(inc);
        report.newton_iterations = k;
        report.final_increment = inc;
        report.kkt_residual = sol.residual;
        if (inc < cfg.newton_tol) return finish_step(mesh, cfg, std::move(sol), std::move(report));
    }
    std::ostringstream msg;
    msg << "Newton iteration did not reach the increment tolerance " << cfg.newton_tol << " in "
        << cfg.newton_max_iters << " iterations (last increment " << report.final_increment << ")";
    throw ConvergenceError(msg.str(), report.increment_history);
}

// Per element: Cof(F) rows and det(F) at quadrature points for F = I + dt grad u.
struct DeformationAt {
    Eigen::Matrix2d cof;
    double det;
};

std::vector<DeformationAt> element_deformation(const ElementBasis& eb, const TriangleMesh& mesh, std::size_t t,
                                               const Vector& u, double dt) {
    const VelocitySpace vs(mesh);
    const auto& tri = mesh.triangle(t);
    double coef[2][4];
    for (int c = 0; c < 2; ++c) {
        for (int a = 0; a < 3; ++a) coef[c][a] = u[vs.vertex_dof(static_cast<std::size_t>(tri[a]), c)];
        coef[c][3] = u[vs.bubble_dof(t, c)];
    }
    std::vector<DeformationAt> out(eb.weight.size());
    for (std::size_t q = 0; q < eb.weight.size(); ++q) {
        Eigen::Matrix2d f = Eigen::Matrix2d::Identity();
        for (int c = 0; c < 2; ++c) {
            for (int a = 0; a < 4; ++a) f.row(c) += dt * coef[c][a] * eb.grad[q][a].transpose();
        }
        out[q].det = f.determinant();
        out[q].cof << f(1, 1), -f(1, 0), -f(0, 1), f(0, 0);
    }
    return out;
}

}  // namespace

std::string scheme_name(Scheme s) {
    switch (s) {
        case Scheme::explicit_curvature: return "explicit";
        case Scheme::newton: return "newton";
        case Scheme::curl: return "curl";
        case Scheme::nonlinear_det: return "nonlinear_det";
    }
    return "unknown";
}

Scheme parse_scheme(const std::string& name) {
    if (name == "explicit") return Scheme::explicit_curvature;
    if (name == "newton") return Scheme::newton;
    if (name == "curl") return Scheme::curl;
    if (name == "nonlinear_det") return Scheme::nonlinear_det;
    throw ConfigError("scheme", "unknown scheme '" + name + "' (expected explicit, newton, curl or nonlinear_det)");
}

void SchemeConfig::validate() const {
    if (!(sigma > 0.0)) throw ConfigError("sigma", "surface tension must be positive");
    if (!(dt > 0.0)) throw ConfigError("dt", "time step must be positive");
    if (!(t_end >= 0.0)) throw ConfigError("t_end", "final time must be non-negative");
    if (!(alpha >= 0.0)) throw ConfigError("alpha", "curl penalty must be non-negative");
    if (scheme == Scheme::curl && alpha == 0.0) {
        throw ConfigError("alpha", "the curl scheme needs alpha > 0; without the curl penalty the "
                                   "boundary-flux problem is ill-posed");
    }
    if (!(newton_tol > 0.0)) throw ConfigError("newton_tol", "must be positive");
    if (newton_max_iters < 1) throw ConfigError("newton_max_iters", "must be at least 1");
    if (output_stride < 1) throw ConfigError("output_stride", "must be at least 1");
    if (m_max < 1) throw ConfigError("m_max", "must be at least 1");
    try {
        mesh_policy.validate();
    } catch (const MeshError& e) {
        throw ConfigError("mesh", e.what());
    }
}

StepWorkspace::StepWorkspace() : solver_(std::make_unique<SaddleSolver>(SolverMethod::regularized_ldlt)) {}
StepWorkspace::~StepWorkspace() = default;
SaddleSolver& StepWorkspace::solver() { return *solver_; }

StepResult step_explicit(const TriangleMesh& mesh, const SchemeConfig& cfg, StepWorkspace* ws) {
    StepWorkspace local;
    SaddleSolver& solver = ws ? ws->solver() : local.solver();
    const VelocitySpace vs(mesh);
    const BulkOperators ops = build_bulk(mesh, 0.0);
    const auto nv = static_cast<Eigen::Index>(vs.num_vertex_dofs());
    const Vector g0 = assemble_perimeter_gradient(mesh, zeros(vs.ndofs()), cfg.dt, cfg.sigma);
    LinearSolve sol = solve_condensed(vs, ops.condensed, {}, -g0.head(nv), solver);
    StepReport report;
    report.newton_iterations = 1;
    report.final_increment = mass_norm2(ops.mass, sol.u);
    report.increment_history = {report.final_increment};
    report.kkt_residual = sol.residual;
    return finish_step(mesh, cfg, std::move(sol), std::move(report));
}

StepResult step_newton(const TriangleMesh& mesh, const SchemeConfig& cfg, StepWorkspace* ws) {
    return newton_loop(mesh, cfg, 0.0, ws);
}

StepResult step_curl(const TriangleMesh& mesh, const SchemeConfig& cfg, StepWorkspace* ws) {
    if (!(cfg.alpha > 0.0)) {
        throw ConfigError("alpha", "the curl scheme needs alpha > 0; without the curl penalty the "
                                   "boundary-flux problem is ill-posed");
    }
    return newton_loop(mesh, cfg, cfg.alpha, ws);
}

std::vector<double> deformation_determinants(const TriangleMesh& mesh, const Vector& u, double dt) {
    std::vector<double> dets;
    dets.reserve(mesh.num_triangles() * triangle_rule_degree6().size());
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const ElementBasis eb(mesh, t);
        for (const auto& d : element_deformation(eb, mesh, t, u, dt)) dets.push_back(d.det);
    }
    return dets;
}

StepResult step_nonlinear_det(const TriangleMesh& mesh, const SchemeConfig& cfg, StepWorkspace* ws) {
    StepWorkspace local;
    SaddleSolver& solver = ws ? ws->solver() : local.solver();
    const VelocitySpace vs(mesh);
    const PressureSpace ps(mesh);
    const SparseMatrix mass = assemble_mass(vs);
    const auto nv = static_cast<Eigen::Index>(vs.num_vertex_dofs());
    const auto nu = static_cast<Eigen::Index>(vs.ndofs());
    const auto np = static_cast<Eigen::Index>(ps.ndofs());
    std::vector<ElementBasis> basis;
    basis.reserve(mesh.num_triangles());
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) basis.emplace_back(mesh, t);

    StepReport report;
    Vector u = zeros(vs.ndofs());
    LinearSolve sol;
    std::vector<Triplet> hess;
    std::vector<Triplet> dtrip;
    for (int k = 1; k <= cfg.newton_max_iters; ++k) {
        // constraint c_i(u) = int (det F - 1)/dt l_i and its linearization D_i = int Cof(F):grad(.) l_i
        dtrip.clear();
        Vector c = Vector::Zero(np);
        for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
            const ElementBasis& eb = basis[t];
            const auto& tri = mesh.triangle(t);
            const auto def = element_deformation(eb, mesh, t, u, cfg.dt);
            double local[3][2][4] = {};
            for (std::size_t q = 0; q < def.size(); ++q) {
                if (!(def[q].det > 0.0)) {
                    std::ostringstream msg;
                    msg << "det(I + dt grad u) = " << def[q].det << " <= 0 in triangle " << t
                        << " at Newton iteration " << k << "; the map is no longer a diffeomorphism";
                    throw ConvergenceError(msg.str(), report.increment_history);
                }
                for (int i = 0; i < 3; ++i) {
                    const double wl = eb.weight[q] * eb.value[q][i];
                    c[tri[i]] += wl * (def[q].det - 1.0) / cfg.dt;
                    for (int comp = 0; comp < 2; ++comp) {
                        for (int a = 0; a < 4; ++a) {
                            local[i][comp][a] += wl * def[q].cof.row(comp).dot(eb.grad[q][a]);
                        }
                    }
                }
            }
            for (int i = 0; i < 3; ++i) {
                for (int comp = 0; comp < 2; ++comp) {
                    for (int a = 0; a < 4; ++a) {
                        const int dof = a < 3 ? vs.vertex_dof(static_cast<std::size_t>(tri[a]), comp)
                                              : vs.bubble_dof(t, comp);
                        dtrip.emplace_back(tri[i], dof, -local[i][comp][a]);
                    }
                }
            }
        }
        SparseMatrix neg_d(np, nu);
        neg_d.setFromTriplets(dtrip.begin(), dtrip.end());

        hess.clear();
        append_perimeter_hessian(mesh, u, cfg.dt, cfg.sigma, HessianKind::majorant, hess);
        SparseMatrix h(nv, nv);
        h.setFromTriplets(hess.begin(), hess.end());
        const Vector g = assemble_perimeter_gradient(mesh, u, cfg.dt, cfg.sigma);
        Vector f = zeros(vs.ndofs());
        f.head(nv) = -g.head(nv) + h * u.head(nv);
        // -D u_new = c(u) - D u
        const Vector rhs_p = c + neg_d * u;
        const CondensedSystem cs = static_condense_bubbles(vs, mass, neg_d, SparseMatrix(), f, rhs_p);
        sol = solve_condensed(vs, cs, hess, zeros(static_cast<std::size_t>(nv)), solver);

        const double inc = mass_norm2(mass, sol.u - u);
        u = sol.u;
        report.increment_history.push_back(inc);
        report.newton_iterations = k;
        report.final_increment = inc;
        report.kkt_residual = sol.residual;
        if (inc < cfg.newton_tol) {
            double worst = 0.0;
            for (double d : deformation_determinants(mesh, u, cfg.dt)) worst = std::max(worst, std::abs(d - 1.0));
            report.max_det_error = worst;
            return finish_step(mesh, cfg, std::move(sol), std::move(report));
        }
    }
    std::ostringstream msg;
    msg << "Newton iteration did not reach the increment tolerance " << cfg.newton_tol << " in "
        << cfg.newton_max_iters << " iterations (last increment " << report.final_increment << ")";
    throw ConvergenceError(msg.str(), report.increment_history);
}

StepResult step(const TriangleMesh& mesh, const SchemeConfig& cfg, StepWorkspace* ws) {
    switch (cfg.scheme) {
        case Scheme::explicit_curvature: return step_explicit(mesh, cfg, ws);
        case Scheme::newton: return step_newton(mesh, cfg, ws);
        case Scheme::curl: return step_curl(mesh, cfg, ws);
        case Scheme::nonlinear_det: return step_nonlinear_det(mesh, cfg, ws);
    }
    throw ConfigError("scheme", "unknown scheme");
}

std::vector<std::pair<double, double>> DiagnosticsSeries::mode_series(int m, bool is_sine) const {
    std::vector<std::pair<double, double>> out;
    out.reserve(records.size());
    for (const auto& r : records) out.emplace_back(r.t, is_sine ? r.fourier.s(m) : r.fourier.c(m));
    return out;
}

TangentialReport tangential_diagnostic(const TriangleMesh& mesh, const FeField& velocity, double sigma,
                                       double kappa_floor) {
    const auto vv = velocity.vertex_velocities(mesh);
    const BoundaryCurve curve = mesh.boundary_curve();
    const auto h = vertex_curvature_vector(curve);
    const std::size_t n = curve.size();
    std::vector<double> un(n);
    for (std::size_t i = 0; i < n; ++i) {
        un[i] = vv[static_cast<std::size_t>(mesh.boundary_loop()[i])].dot(curve.normals()[i]);
    }
    TangentialReport out;
    for (std::size_t i = 0; i < n; ++i) {
        const double kappa = h[i].dot(curve.normals()[i]);
        if (std::abs(kappa) <= kappa_floor) continue;
        const std::size_t prev = (i + n - 1) % n;
        const std::size_t next = (i + 1) % n;
        const double dun_ds = (un[next] - un[prev]) / (curve.segment_lengths()[prev] + curve.segment_lengths()[i]);
        const double ut = vv[static_cast<std::size_t>(mesh.boundary_loop()[i])].dot(curve.tangents()[i]);
        out.boundary_index.push_back(static_cast<int>(i));
        out.residual_sigma.push_back(std::abs(ut - dun_ds / (sigma * kappa)));
        out.residual_unit.push_back(std::abs(ut - dun_ds / kappa));
    }
    return out;
}

DiagnosticsRecord make_record(const TriangleMesh& mesh, const FeField& velocity, int step, double t, int m_max,
                              double base_radius) {
    const BoundaryCurve curve = mesh.boundary_curve();
    const auto vv = velocity.vertex_velocities(mesh);
    std::vector<Vec2> ub(curve.size());
    std::vector<double> un(curve.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
        ub[i] = vv[static_cast<std::size_t>(mesh.boundary_loop()[i])];
        un[i] = ub[i].dot(curve.normals()[i]);
    }
    DiagnosticsRecord r;
    r.step = step;
    r.t = t;
    const CurveMeasures m = curve_measures(curve);
    r.area = m.area;
    r.perimeter = m.perimeter;
    r.u_cm = center_of_mass_velocity(curve, std::span<const Vec2>(ub));
    r.u_cm_trapezoid = center_of_mass_velocity(curve, std::span<const double>(un));
    if (base_radius == 1.0) {
        r.fourier = fourier_decompose(curve, m_max);
    } else {
        std::vector<Vec2> scaled(curve.vertices());
        for (auto& p : scaled) p /= base_radius;
        r.fourier = fourier_decompose(BoundaryCurve(std::move(scaled)), m_max);
    }
    return r;
}

SimulationResult run_simulation(const PolarShapeSpec& spec, const SchemeConfig& cfg,
                                const SnapshotCallback& on_record) {
    cfg.validate();
    const BoundaryCurve curve = sample_polar_boundary(spec, cfg.mesh_policy.boundary_vertex_count);
    return run_simulation(generate_mesh(curve, cfg.mesh_policy), cfg, spec.base_radius, on_record);
}

SimulationResult run_simulation(const TriangleMesh& initial, const SchemeConfig& cfg, double base_radius,
                                const SnapshotCallback& on_record) {
    cfg.validate();
    SimulationResult result;
    result.config = cfg;
    const long long n_steps = std::llround(cfg.t_end / cfg.dt);
    StepWorkspace ws;
    auto mesh = std::make_shared<const TriangleMesh>(initial);
    for (long long n = 0; n <= n_steps; ++n) {
        const double t = static_cast<double>(n) * cfg.dt;
        const int step_index = static_cast<int>(n);
        try {
            bool remeshed = false;
            if (n > 0) {
                auto [fresh, flag] = maybe_remesh(*mesh, cfg.mesh_policy);
                if (flag) {
                    mesh = std::make_shared<const TriangleMesh>(std::move(fresh));
                    remeshed = true;
                }
            }
            StepResult res = step(*mesh, cfg, &ws);
            res.report.remeshed = remeshed;
            if (n % cfg.output_stride == 0 || n == n_steps) {
                result.series.records.push_back(make_record(*mesh, res.velocity, step_index, t, cfg.m_max, base_radius));
                if (on_record) on_record(SimulationSnapshot{step_index, t, *mesh, res.velocity, res.pressure});
            }
            if (n < n_steps) {
                result.step_reports.push_back(std::move(res.report));
                mesh = std::make_shared<const TriangleMesh>(std::move(res.mesh));
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            result.final_mesh = mesh;
            std::ostringstream msg;
            msg << "step " << step_index << " (t = " << t << ") failed: " << e.what();
            throw SimulationError(msg.str(), step_index, mesh, std::move(result), true);
        }
    }
    result.final_mesh = mesh;
    return result;
}

}  // namespace hsflow
