#include "hsflow/fem.hpp"

#include "hsflow/errors.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/SparseExtra>

#include <algorithm>
#include <cmath>

namespace hsflow {

namespace {

std::vector<QuadraturePoint> build_rule() {
    std::vector<QuadraturePoint> rule;
    auto add_orbit3 = [&](double w, double a, double b) {
        rule.push_back({{a, b, b}, w});
        rule.push_back({{b, a, b}, w});
        rule.push_back({{b, b, a}, w});
    };
    auto add_orbit6 = [&](double w, double a, double b, double c) {
        rule.push_back({{a, b, c}, w});
        rule.push_back({{a, c, b}, w});
        rule.push_back({{b, a, c}, w});
        rule.push_back({{b, c, a}, w});
        rule.push_back({{c, a, b}, w});
        rule.push_back({{c, b, a}, w});
    };
    add_orbit3(0.116786275726379, 0.501426509658179, 0.249286745170910);
    add_orbit3(0.050844906370207, 0.873821971016996, 0.063089014491502);
    add_orbit6(0.082851075618374, 0.053145049844817, 0.310352451033784, 0.636502499121399);
    return rule;
}

// Local dof of scalar basis a (0..3) and component c inside the triangle.
int element_dof(const VelocitySpace& space, std::size_t t, const Triangle& tri, int a, int c) {
    return a < 3 ? space.vertex_dof(static_cast<std::size_t>(tri[a]), c) : space.bubble_dof(t, c);
}

SparseMatrix from_triplets(Eigen::Index rows, Eigen::Index cols, const std::vector<Triplet>& trips) {
    SparseMatrix m(rows, cols);
    m.setFromTriplets(trips.begin(), trips.end());
    m.makeCompressed();
    return m;
}

// Per boundary edge e = (loop[k], loop[k+1]).
struct EdgeFrame {
    int i = 0;
    int j = 0;
    double deformed_length = 0.0;  // |x_j - x_i + dt (u_j - u_i)|
    Vec2 tangent;                  // pulled-back unit tangent T
};

std::vector<EdgeFrame> edge_frames(const TriangleMesh& mesh, const Vector& u, double dt) {
    if (static_cast<std::size_t>(u.size()) < 2 * mesh.num_vertices()) {
        throw MeshError("velocity vector shorter than the vertex dofs of the mesh");
    }
    const auto& loop = mesh.boundary_loop();
    const std::size_t nb = loop.size();
    std::vector<EdgeFrame> frames(nb);
    for (std::size_t k = 0; k < nb; ++k) {
        EdgeFrame& e = frames[k];
        e.i = loop[k];
        e.j = loop[(k + 1) % nb];
        const Vec2 ui(u[2 * e.i], u[2 * e.i + 1]);
        const Vec2 uj(u[2 * e.j], u[2 * e.j + 1]);
        const Vec2 w = mesh.vertex(e.j) - mesh.vertex(e.i) + dt * (uj - ui);
        e.deformed_length = w.norm();
        if (!(e.deformed_length > 0.0)) {
            throw MeshError("zero-length boundary edge " + std::to_string(k));
        }
        e.tangent = w / e.deformed_length;
    }
    return frames;
}

}  // namespace

const std::vector<QuadraturePoint>& triangle_rule_degree6() {
    static const std::vector<QuadraturePoint> rule = build_rule();
    return rule;
}

Vector PressureSpace::lumped_mass() const {
    Vector w = Vector::Zero(static_cast<Eigen::Index>(ndofs()));
    for (std::size_t t = 0; t < mesh_->num_triangles(); ++t) {
        const double a = mesh_->triangle_area(t) / 3.0;
        for (int v : mesh_->triangle(t)) w[v] += a;
    }
    return w;
}

FeField::FeField(SpaceKind kind, Vector coeffs, const TriangleMesh& mesh)
    : kind_(kind), coeffs_(std::move(coeffs)), mesh_id_(mesh.id()) {
    const std::size_t expected = kind == SpaceKind::velocity
                                     ? VelocitySpace(mesh).ndofs()
                                     : PressureSpace(mesh).ndofs();
    if (static_cast<std::size_t>(coeffs_.size()) != expected) {
        throw MeshError("field length " + std::to_string(coeffs_.size()) +
                        " does not match the space dimension " + std::to_string(expected));
    }
}

void FeField::check_mesh(const TriangleMesh& mesh) const {
    if (mesh.id() != mesh_id_) {
        throw MeshError("field belongs to mesh " + std::to_string(mesh_id_) + ", not mesh " +
                        std::to_string(mesh.id()));
    }
}

namespace {

// Triangle containing x and its barycentric coordinates; throws when outside.
std::pair<std::size_t, std::array<double, 3>> locate(const TriangleMesh& mesh, const Vec2& x) {
    constexpr double kTol = 1e-12;
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangle(t);
        const Vec2& a = mesh.vertex(tri[0]);
        const Vec2& b = mesh.vertex(tri[1]);
        const Vec2& c = mesh.vertex(tri[2]);
        const double twice = cross(b - a, c - a);
        const double l1 = cross(x - a, c - a) / twice;
        const double l2 = cross(b - a, x - a) / twice;
        const double l0 = 1.0 - l1 - l2;
        if (l0 >= -kTol && l1 >= -kTol && l2 >= -kTol) return {t, {l0, l1, l2}};
    }
    throw MeshError("point lies outside the mesh");
}

}  // namespace

Vec2 FeField::velocity_at(const TriangleMesh& mesh, const Vec2& x) const {
    check_mesh(mesh);
    if (kind_ != SpaceKind::velocity) throw MeshError("not a velocity field");
    const VelocitySpace space(mesh);
    const auto [t, l] = locate(mesh, x);
    const auto& tri = mesh.triangle(t);
    const double bubble = 27.0 * l[0] * l[1] * l[2];
    Vec2 out = Vec2::Zero();
    for (int c = 0; c < 2; ++c) {
        double v = bubble * coeffs_[space.bubble_dof(t, c)];
        for (int a = 0; a < 3; ++a) v += l[a] * coeffs_[space.vertex_dof(tri[a], c)];
        out[c] = v;
    }
    return out;
}

double FeField::pressure_at(const TriangleMesh& mesh, const Vec2& x) const {
    check_mesh(mesh);
    if (kind_ != SpaceKind::pressure) throw MeshError("not a pressure field");
    const auto [t, l] = locate(mesh, x);
    const auto& tri = mesh.triangle(t);
    return l[0] * coeffs_[tri[0]] + l[1] * coeffs_[tri[1]] + l[2] * coeffs_[tri[2]];
}

std::vector<Vec2> FeField::vertex_velocities(const TriangleMesh& mesh) const {
    check_mesh(mesh);
    if (kind_ != SpaceKind::velocity) throw MeshError("not a velocity field");
    std::vector<Vec2> out(mesh.num_vertices());
    for (std::size_t v = 0; v < out.size(); ++v) out[v] = Vec2(coeffs_[2 * v], coeffs_[2 * v + 1]);
    return out;
}

ElementBasis::ElementBasis(const TriangleMesh& mesh, std::size_t t) {
    const auto& tri = mesh.triangle(t);
    const Vec2 x[3] = {mesh.vertex(tri[0]), mesh.vertex(tri[1]), mesh.vertex(tri[2])};
    area = mesh.triangle_area(t);
    for (int i = 0; i < 3; ++i) {
        const Vec2 e = x[(i + 2) % 3] - x[(i + 1) % 3];
        grad_lambda[i] = Vec2(-e.y(), e.x()) / (2.0 * area);
    }
    const auto& rule = triangle_rule_degree6();
    value.resize(rule.size());
    grad.resize(rule.size());
    weight.resize(rule.size());
    for (std::size_t q = 0; q < rule.size(); ++q) {
        const auto& l = rule[q].bary;
        weight[q] = rule[q].weight * area;
        for (int a = 0; a < 3; ++a) {
            value[q][a] = l[a];
            grad[q][a] = grad_lambda[a];
        }
        value[q][3] = 27.0 * l[0] * l[1] * l[2];
        grad[q][3] = 27.0 * (l[1] * l[2] * grad_lambda[0] + l[0] * l[2] * grad_lambda[1] +
                             l[0] * l[1] * grad_lambda[2]);
    }
}

SparseMatrix assemble_mass(const VelocitySpace& space) {
    const TriangleMesh& mesh = space.mesh();
    std::vector<Triplet> trips;
    trips.reserve(mesh.num_triangles() * 32);
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const ElementBasis eb(mesh, t);
        const auto& tri = mesh.triangle(t);
        for (int a = 0; a < 4; ++a) {
            for (int b = 0; b < 4; ++b) {
                double m = 0.0;
                for (std::size_t q = 0; q < eb.weight.size(); ++q) m += eb.weight[q] * eb.value[q][a] * eb.value[q][b];
                for (int c = 0; c < 2; ++c) {
                    trips.emplace_back(element_dof(space, t, tri, a, c), element_dof(space, t, tri, b, c), m);
                }
            }
        }
    }
    const auto n = static_cast<Eigen::Index>(space.ndofs());
    return from_triplets(n, n, trips);
}

SparseMatrix assemble_divergence(const VelocitySpace& vel, const PressureSpace& pres) {
    const TriangleMesh& mesh = vel.mesh();
    std::vector<Triplet> trips;
    trips.reserve(mesh.num_triangles() * 24);
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const ElementBasis eb(mesh, t);
        const auto& tri = mesh.triangle(t);
        for (int i = 0; i < 3; ++i) {
            for (int a = 0; a < 4; ++a) {
                for (int c = 0; c < 2; ++c) {
                    double b = 0.0;
                    for (std::size_t q = 0; q < eb.weight.size(); ++q) {
                        b += eb.weight[q] * eb.value[q][i] * eb.grad[q][a][c];
                    }
                    trips.emplace_back(tri[i], element_dof(vel, t, tri, a, c), b);
                }
            }
        }
    }
    return from_triplets(static_cast<Eigen::Index>(pres.ndofs()), static_cast<Eigen::Index>(vel.ndofs()),
                         trips);
}

SparseMatrix assemble_curl_curl(const VelocitySpace& space) {
    const TriangleMesh& mesh = space.mesh();
    std::vector<Triplet> trips;
    trips.reserve(mesh.num_triangles() * 64);
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const ElementBasis eb(mesh, t);
        const auto& tri = mesh.triangle(t);
        Eigen::Matrix<double, 8, 8> local = Eigen::Matrix<double, 8, 8>::Zero();
        for (std::size_t q = 0; q < eb.weight.size(); ++q) {
            Eigen::Matrix<double, 8, 1> curl;
            for (int a = 0; a < 4; ++a) {
                curl[a] = -eb.grad[q][a].y();
                curl[4 + a] = eb.grad[q][a].x();
            }
            local.noalias() += eb.weight[q] * curl * curl.transpose();
        }
        for (int r = 0; r < 8; ++r) {
            for (int s = 0; s < 8; ++s) {
                trips.emplace_back(element_dof(space, t, tri, r % 4, r / 4),
                                   element_dof(space, t, tri, s % 4, s / 4), local(r, s));
            }
        }
    }
    const auto n = static_cast<Eigen::Index>(space.ndofs());
    return from_triplets(n, n, trips);
}

double deformed_perimeter(const TriangleMesh& mesh, const Vector& u, double dt) {
    double p = 0.0;
    for (const EdgeFrame& e : edge_frames(mesh, u, dt)) p += e.deformed_length;
    return p;
}

double deformed_perimeter(const TriangleMesh& mesh, const FeField& u, double dt) {
    u.check_mesh(mesh);
    return deformed_perimeter(mesh, u.coeffs(), dt);
}

Vector assemble_perimeter_gradient(const TriangleMesh& mesh, const Vector& u_k, double dt, double sigma) {
    Vector g = Vector::Zero(u_k.size());
    for (const EdgeFrame& e : edge_frames(mesh, u_k, dt)) {
        for (int c = 0; c < 2; ++c) {
            g[2 * e.j + c] += sigma * e.tangent[c];
            g[2 * e.i + c] -= sigma * e.tangent[c];
        }
    }
    return g;
}

Vector assemble_perimeter_gradient(const TriangleMesh& mesh, const FeField& u_k, double dt, double sigma) {
    u_k.check_mesh(mesh);
    return assemble_perimeter_gradient(mesh, u_k.coeffs(), dt, sigma);
}

void append_perimeter_hessian(const TriangleMesh& mesh, const Vector& u_k, double dt, double sigma,
                              HessianKind kind, std::vector<Triplet>& out) {
    for (const EdgeFrame& e : edge_frames(mesh, u_k, dt)) {
        const double scale = sigma * dt / e.deformed_length;
        // Edge block acting on the difference (v_j - v_i).
        Eigen::Matrix2d block;
        if (kind == HessianKind::exact) {
            const Vec2 n = rotate_cw(e.tangent);
            block = scale * n * n.transpose();
        } else {
            block = scale * Eigen::Matrix2d::Identity();
        }
        const int ends[2] = {e.i, e.j};
        const double sign[2] = {-1.0, 1.0};
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
                for (int c = 0; c < 2; ++c) {
                    for (int d = 0; d < 2; ++d) {
                        const double v = sign[a] * sign[b] * block(c, d);
                        if (v != 0.0) out.emplace_back(2 * ends[a] + c, 2 * ends[b] + d, v);
                    }
                }
            }
        }
    }
}

SparseMatrix assemble_perimeter_hessian(const TriangleMesh& mesh, const Vector& u_k, double dt,
                                        double sigma, HessianKind kind) {
    std::vector<Triplet> trips;
    append_perimeter_hessian(mesh, u_k, dt, sigma, kind, trips);
    return from_triplets(u_k.size(), u_k.size(), trips);
}

SparseMatrix assemble_perimeter_hessian_exact(const TriangleMesh& mesh, const FeField& u_k, double dt,
                                              double sigma) {
    u_k.check_mesh(mesh);
    return assemble_perimeter_hessian(mesh, u_k.coeffs(), dt, sigma, HessianKind::exact);
}

SparseMatrix assemble_perimeter_hessian_majorant(const TriangleMesh& mesh, const FeField& u_k,
                                                 double dt, double sigma) {
    u_k.check_mesh(mesh);
    return assemble_perimeter_hessian(mesh, u_k.coeffs(), dt, sigma, HessianKind::majorant);
}

Vector CondensedSystem::recover_velocity(const VelocitySpace& space, const Vector& u_vertex,
                                         const Vector& p) const {
    const TriangleMesh& mesh = space.mesh();
    Vector full = Vector::Zero(static_cast<Eigen::Index>(space.ndofs()));
    full.head(u_vertex.size()) = u_vertex;
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangle(t);
        Eigen::Matrix<double, 9, 1> known;
        for (int a = 0; a < 3; ++a) {
            for (int c = 0; c < 2; ++c) known[2 * a + c] = u_vertex[space.vertex_dof(tri[a], c)];
            known[6 + a] = p.size() > 0 ? p[tri[a]] : 0.0;
        }
        const Eigen::Vector2d b = bubble_rhs[t] - bubble_op[t] * known;
        full[space.bubble_dof(t, 0)] = b[0];
        full[space.bubble_dof(t, 1)] = b[1];
    }
    return full;
}

CondensedSystem static_condense_bubbles(const VelocitySpace& space, const SparseMatrix& A,
                                        const SparseMatrix& B, const SparseMatrix& C,
                                        const Vector& f, const Vector& g) {
    const TriangleMesh& mesh = space.mesh();
    const auto nu = static_cast<Eigen::Index>(space.ndofs());
    const auto nv = static_cast<Eigen::Index>(space.num_vertex_dofs());
    const Eigen::Index np = B.rows();
    if (A.rows() != nu || A.cols() != nu || B.cols() != nu || f.size() != nu || g.size() != np) {
        throw SolverError("static_condense_bubbles: block dimensions do not match the velocity space");
    }
    const bool has_c = C.rows() != 0 || C.cols() != 0;
    if (has_c && (C.rows() != np || C.cols() != np)) {
        throw SolverError("static_condense_bubbles: pressure block has wrong dimensions");
    }

    CondensedSystem out;
    out.f = f.head(nv);
    out.g = g;
    out.bubble_op.resize(mesh.num_triangles());
    out.bubble_rhs.resize(mesh.num_triangles());

    std::vector<Triplet> a_corr;
    std::vector<Triplet> b_corr;
    std::vector<Triplet> c_corr;
    a_corr.reserve(mesh.num_triangles() * 36);
    b_corr.reserve(mesh.num_triangles() * 18);
    c_corr.reserve(mesh.num_triangles() * 9);

    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangle(t);
        int vd[6];
        int bd[2];
        for (int a = 0; a < 3; ++a) {
            for (int c = 0; c < 2; ++c) vd[2 * a + c] = space.vertex_dof(tri[a], c);
        }
        for (int c = 0; c < 2; ++c) bd[c] = space.bubble_dof(t, c);

        Eigen::Matrix2d abb;
        Eigen::Matrix<double, 2, 10> rhs;
        Eigen::Matrix<double, 6, 2> avb;
        Eigen::Matrix<double, 3, 2> bb;
        for (int r = 0; r < 2; ++r) {
            for (int s = 0; s < 2; ++s) abb(r, s) = A.coeff(bd[r], bd[s]);
            for (int s = 0; s < 6; ++s) rhs(r, s) = A.coeff(bd[r], vd[s]);
            for (int a = 0; a < 3; ++a) rhs(r, 6 + a) = B.coeff(tri[a], bd[r]);
            rhs(r, 9) = f[bd[r]];
        }
        for (int s = 0; s < 6; ++s) {
            for (int r = 0; r < 2; ++r) avb(s, r) = A.coeff(vd[s], bd[r]);
        }
        for (int a = 0; a < 3; ++a) {
            for (int r = 0; r < 2; ++r) bb(a, r) = B.coeff(tri[a], bd[r]);
        }
        const double det = abb.determinant();
        if (!(std::abs(det) > 0.0)) {
            throw SolverError("singular bubble block in triangle " + std::to_string(t));
        }
        const Eigen::Matrix<double, 2, 10> y = abb.inverse() * rhs;
        out.bubble_op[t] = y.leftCols<9>();
        out.bubble_rhs[t] = y.col(9);

        const Eigen::Matrix<double, 6, 6> da = avb * y.leftCols<6>();
        const Eigen::Matrix<double, 3, 6> db = bb * y.leftCols<6>();
        const Eigen::Matrix3d dc = bb * y.middleCols<3>(6);
        const Eigen::Matrix<double, 6, 1> df = avb * y.col(9);
        const Eigen::Vector3d dg = bb * y.col(9);
        for (int r = 0; r < 6; ++r) {
            for (int s = 0; s < 6; ++s) a_corr.emplace_back(vd[r], vd[s], -da(r, s));
            out.f[vd[r]] -= df[r];
        }
        for (int a = 0; a < 3; ++a) {
            for (int s = 0; s < 6; ++s) b_corr.emplace_back(tri[a], vd[s], -db(a, s));
            for (int b = 0; b < 3; ++b) c_corr.emplace_back(tri[a], tri[b], -dc(a, b));
            out.g[tri[a]] -= dg[a];
        }
    }

    SparseMatrix corr(nv, nv);
    corr.setFromTriplets(a_corr.begin(), a_corr.end());
    out.A = SparseMatrix(A.topLeftCorner(nv, nv)) + corr;
    out.A.makeCompressed();

    SparseMatrix bcorr(np, nv);
    bcorr.setFromTriplets(b_corr.begin(), b_corr.end());
    out.B = SparseMatrix(B.leftCols(nv)) + bcorr;
    out.B.makeCompressed();

    SparseMatrix ccorr(np, np);
    ccorr.setFromTriplets(c_corr.begin(), c_corr.end());
    out.C = has_c ? SparseMatrix(C + ccorr) : ccorr;
    out.C.makeCompressed();
    return out;
}

void write_matrix_market(const std::string& path, const SparseMatrix& m) {
    if (!Eigen::saveMarket(m, path)) throw SolverError("cannot write MatrixMarket file " + path);
}

double asymmetry(const SparseMatrix& m) {
    if (m.rows() != m.cols()) return std::numeric_limits<double>::infinity();
    const SparseMatrix d = m - SparseMatrix(m.transpose());
    double dmax = 0.0;
    double amax = 0.0;
    for (Eigen::Index k = 0; k < d.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(d, k); it; ++it) dmax = std::max(dmax, std::abs(it.value()));
    }
    for (Eigen::Index k = 0; k < m.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(m, k); it; ++it) amax = std::max(amax, std::abs(it.value()));
    }
    return amax > 0.0 ? dmax / amax : 0.0;
}

}  // namespace hsflow
