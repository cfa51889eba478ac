#pragma once

#include "hsflow/errors.hpp"
#include "hsflow/fem.hpp"
#include "hsflow/mesh.hpp"
#include "hsflow/solver.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hsflow {

enum class Scheme { explicit_curvature, newton, curl, nonlinear_det };

std::string scheme_name(Scheme s);
/// Accepts "explicit", "newton", "curl", "nonlinear_det"; throws ConfigError.
Scheme parse_scheme(const std::string& name);

struct SchemeConfig {
    double sigma = 0.5;
    double dt = 1e-3;
    Scheme scheme = Scheme::newton;
    double alpha = 1e-3;  // curl penalty
    double newton_tol = 1e-5;
    int newton_max_iters = 50;
    double t_end = 0.0;
    MeshPolicy mesh_policy;
    int output_stride = 1;
    int m_max = 6;

    /// Throws ConfigError naming the offending key.
    void validate() const;
};

struct StepReport {
    int newton_iterations = 0;
    double final_increment = 0.0;  // mass-weighted integral of |du|^2
    double kkt_residual = 0.0;
    double perimeter_before = 0.0;
    double perimeter_after = 0.0;
    double area_before = 0.0;
    double area_after = 0.0;
    double max_displacement = 0.0;
    /// max |det(I + dt grad u) - 1| over quadrature points (nonlinear_det only).
    double max_det_error = 0.0;
    bool remeshed = false;
    std::vector<double> increment_history;

    /// Perimeter did not grow by more than `rel_tol` of its previous value.
    bool perimeter_monotone(double rel_tol = 1e-10) const {
        return perimeter_after <= perimeter_before * (1.0 + rel_tol);
    }
};

struct StepResult {
    FeField velocity;
    FeField pressure;
    TriangleMesh mesh;  // advected
    StepReport report;
};

/// Reusable factorization state for consecutive solves on one topology.
class StepWorkspace {
public:
    StepWorkspace();
    ~StepWorkspace();
    SaddleSolver& solver();

private:
    std::unique_ptr<SaddleSolver> solver_;
};

StepResult step_explicit(const TriangleMesh& mesh, const SchemeConfig& cfg, StepWorkspace* ws = nullptr);
StepResult step_newton(const TriangleMesh& mesh, const SchemeConfig& cfg, StepWorkspace* ws = nullptr);
StepResult step_curl(const TriangleMesh& mesh, const SchemeConfig& cfg, StepWorkspace* ws = nullptr);
StepResult step_nonlinear_det(const TriangleMesh& mesh, const SchemeConfig& cfg, StepWorkspace* ws = nullptr);
/// Dispatches on cfg.scheme.
StepResult step(const TriangleMesh& mesh, const SchemeConfig& cfg, StepWorkspace* ws = nullptr);

/// det(I + dt grad u) at every degree-6 quadrature point, triangle-major.
std::vector<double> deformation_determinants(const TriangleMesh& mesh, const Vector& u, double dt);

struct DiagnosticsRecord {
    int step = 0;
    double t = 0.0;
    double area = 0.0;
    double perimeter = 0.0;
    Vec2 u_cm = Vec2::Zero();            // edge-exact boundary integral
    Vec2 u_cm_trapezoid = Vec2::Zero();  // vertex normals, trapezoidal rule
    FourierCoefficients fourier;
};

struct DiagnosticsSeries {
    std::vector<DiagnosticsRecord> records;

    /// (t, amplitude) of the cosine (is_sine = false) or sine coefficient of mode m.
    std::vector<std::pair<double, double>> mode_series(int m, bool is_sine) const;
};

struct TangentialReport {
    std::vector<int> boundary_index;
    std::vector<double> residual_sigma;  // |u_t - (sigma kappa)^-1 du_n/ds|
    std::vector<double> residual_unit;   // |u_t - kappa^-1 du_n/ds|
};

/// Observational check of the small-displacement relation between tangential velocity and
/// the arc-length derivative of the normal velocity. Vertices with |kappa| <= kappa_floor
/// are skipped.
TangentialReport tangential_diagnostic(const TriangleMesh& mesh, const FeField& velocity, double sigma,
                                       double kappa_floor = 1e-3);

struct SimulationSnapshot {
    int step;
    double t;
    const TriangleMesh& mesh;
    const FeField& velocity;
    const FeField& pressure;
};

struct SimulationResult {
    SchemeConfig config;
    DiagnosticsSeries series;
    std::vector<StepReport> step_reports;
    std::shared_ptr<const TriangleMesh> final_mesh;
};

/// Step failure inside run_simulation; keeps the failing state and the partial result.
class SimulationError : public Error {
public:
    SimulationError(const std::string& what, int step, std::shared_ptr<const TriangleMesh> mesh,
                    SimulationResult partial, bool numerical)
        : Error(what), step_(step), mesh_(std::move(mesh)), partial_(std::move(partial)), numerical_(numerical) {}

    int step() const noexcept { return step_; }
    const std::shared_ptr<const TriangleMesh>& mesh() const noexcept { return mesh_; }
    const SimulationResult& partial() const noexcept { return partial_; }
    bool numerical() const noexcept { return numerical_; }

private:
    int step_;
    std::shared_ptr<const TriangleMesh> mesh_;
    SimulationResult partial_;
    bool numerical_;
};

using SnapshotCallback = std::function<void(const SimulationSnapshot&)>;

/// Diagnostics of one state: area, perimeter, u_cm from the velocity trace, Fourier modes.
DiagnosticsRecord make_record(const TriangleMesh& mesh, const FeField& velocity, int step, double t,
                              int m_max, double base_radius);

/// Runs N = round(t_end / dt) steps. Diagnostics are recorded every output_stride steps and
/// at the final time; `on_record` sees the same states.
SimulationResult run_simulation(const PolarShapeSpec& spec, const SchemeConfig& cfg,
                                const SnapshotCallback& on_record = {});

/// Same, starting from a given mesh.
SimulationResult run_simulation(const TriangleMesh& initial, const SchemeConfig& cfg, double base_radius,
                                const SnapshotCallback& on_record = {});

}  // namespace hsflow
