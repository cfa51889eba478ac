#pragma once

#include "hsflow/mesh.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace hsflow {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct QuadraturePoint {
    std::array<double, 3> bary;
    double weight;  // weights sum to 1; multiply by the element area
};

/// Symmetric 12-point rule, exact for polynomials of degree 6.
const std::vector<QuadraturePoint>& triangle_rule_degree6();

/// Continuous P1 velocity enriched with one bubble 27*l0*l1*l2 per triangle and component.
/// Dof layout: vertex v component c -> 2v + c, bubble of triangle t -> 2 NV + 2t + c.
class VelocitySpace {
public:
    explicit VelocitySpace(const TriangleMesh& mesh) : mesh_(&mesh) {}

    const TriangleMesh& mesh() const { return *mesh_; }
    std::size_t ndofs() const { return 2 * (mesh_->num_vertices() + mesh_->num_triangles()); }
    std::size_t num_vertex_dofs() const { return 2 * mesh_->num_vertices(); }
    int vertex_dof(std::size_t v, int c) const { return static_cast<int>(2 * v) + c; }
    int bubble_dof(std::size_t t, int c) const {
        return static_cast<int>(2 * (mesh_->num_vertices() + t)) + c;
    }

    /// Interpolates a vector field: vertex values, bubbles set to zero.
    template <class F>
    Vector interpolate(F&& f) const {
        Vector c = Vector::Zero(static_cast<Eigen::Index>(ndofs()));
        for (std::size_t v = 0; v < mesh_->num_vertices(); ++v) {
            const Vec2 val = f(mesh_->vertex(v));
            c[vertex_dof(v, 0)] = val.x();
            c[vertex_dof(v, 1)] = val.y();
        }
        return c;
    }

private:
    const TriangleMesh* mesh_;
};

class PressureSpace {
public:
    explicit PressureSpace(const TriangleMesh& mesh) : mesh_(&mesh) {}

    const TriangleMesh& mesh() const { return *mesh_; }
    std::size_t ndofs() const { return mesh_->num_vertices(); }

    template <class F>
    Vector interpolate(F&& f) const {
        Vector c(static_cast<Eigen::Index>(ndofs()));
        for (std::size_t v = 0; v < ndofs(); ++v) c[static_cast<Eigen::Index>(v)] = f(mesh_->vertex(v));
        return c;
    }

    /// Row sums of the P1 mass matrix (integral of each hat function).
    Vector lumped_mass() const;

private:
    const TriangleMesh* mesh_;
};

enum class SpaceKind { velocity, pressure };

/// Coefficients tied to one mesh snapshot.
class FeField {
public:
    FeField(SpaceKind kind, Vector coeffs, const TriangleMesh& mesh);

    SpaceKind kind() const { return kind_; }
    const Vector& coeffs() const { return coeffs_; }
    std::uint64_t mesh_id() const { return mesh_id_; }

    /// Throws MeshError when `mesh` is not the snapshot the field lives on.
    void check_mesh(const TriangleMesh& mesh) const;

    /// Barycentric interpolation (including the bubble) at a point of the mesh.
    Vec2 velocity_at(const TriangleMesh& mesh, const Vec2& x) const;
    double pressure_at(const TriangleMesh& mesh, const Vec2& x) const;

    /// Velocity at every mesh vertex (bubbles vanish there).
    std::vector<Vec2> vertex_velocities(const TriangleMesh& mesh) const;

private:
    SpaceKind kind_;
    Vector coeffs_;
    std::uint64_t mesh_id_;
};

/// Local quantities of one triangle evaluated at the degree-6 quadrature points.
/// Scalar basis index a: 0..2 vertex hats, 3 bubble.
struct ElementBasis {
    double area = 0.0;
    std::array<Vec2, 3> grad_lambda;
    // [q][a]
    std::vector<std::array<double, 4>> value;
    std::vector<std::array<Vec2, 4>> grad;
    std::vector<double> weight;  // quadrature weight times area

    ElementBasis(const TriangleMesh& mesh, std::size_t t);
};

SparseMatrix assemble_mass(const VelocitySpace& space);
/// Rows: pressure dofs, columns: velocity dofs; q^T B c = integral of div(u_c) q.
SparseMatrix assemble_divergence(const VelocitySpace& vel, const PressureSpace& pres);
SparseMatrix assemble_curl_curl(const VelocitySpace& space);

/// Perimeter of the boundary vertices displaced by dt * u.
double deformed_perimeter(const TriangleMesh& mesh, const FeField& u, double dt);
double deformed_perimeter(const TriangleMesh& mesh, const Vector& u, double dt);

/// g with g^T v = sigma * sum_e (v_j - v_i) . T_e (length = velocity dofs).
Vector assemble_perimeter_gradient(const TriangleMesh& mesh, const FeField& u_k, double dt, double sigma);
Vector assemble_perimeter_gradient(const TriangleMesh& mesh, const Vector& u_k, double dt, double sigma);

enum class HessianKind { exact, majorant };

SparseMatrix assemble_perimeter_hessian_exact(const TriangleMesh& mesh, const FeField& u_k, double dt,
                                              double sigma);
SparseMatrix assemble_perimeter_hessian_majorant(const TriangleMesh& mesh, const FeField& u_k,
                                                 double dt, double sigma);
SparseMatrix assemble_perimeter_hessian(const TriangleMesh& mesh, const Vector& u_k, double dt,
                                        double sigma, HessianKind kind);

/// Appends the Hessian entries on vertex dofs (2v + c) to `out`.
void append_perimeter_hessian(const TriangleMesh& mesh, const Vector& u_k, double dt, double sigma,
                              HessianKind kind, std::vector<Triplet>& out);

/// Saddle blocks [A B^T; B C] after elimination of the bubble dofs.
struct CondensedSystem {
    SparseMatrix A;  // vertex velocity dofs
    SparseMatrix B;  // pressure x vertex velocity dofs
    SparseMatrix C;  // pressure x pressure
    Vector f;
    Vector g;

    // Per triangle: bubble = bubble_rhs[t] - bubble_op[t] * [u on 6 vertex dofs; p on 3 vertices]
    std::vector<Eigen::Matrix<double, 2, 9>> bubble_op;
    std::vector<Eigen::Vector2d> bubble_rhs;

    /// Full velocity coefficient vector from the condensed solution.
    Vector recover_velocity(const VelocitySpace& space, const Vector& u_vertex, const Vector& p) const;
};

/// Eliminates bubbles from [A B^T; B C] u = [f; g] (full velocity dofs). `C` may be empty.
CondensedSystem static_condense_bubbles(const VelocitySpace& space, const SparseMatrix& A,
                                        const SparseMatrix& B, const SparseMatrix& C,
                                        const Vector& f, const Vector& g);

void write_matrix_market(const std::string& path, const SparseMatrix& m);

/// Relative asymmetry max|A - A^T| / max|A|.
double asymmetry(const SparseMatrix& m);

}  // namespace hsflow
