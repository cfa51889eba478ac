#include "hsflow/solver.hpp"

#include "hsflow/errors.hpp"

#include <cmath>
#include <sstream>

namespace hsflow {

namespace {

bool has_block(const SparseMatrix& m) { return m.rows() != 0 || m.cols() != 0; }

void append(std::vector<Triplet>& out, const SparseMatrix& m, Eigen::Index r0, Eigen::Index c0,
            bool transpose) {
    for (Eigen::Index k = 0; k < m.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
            if (transpose) {
                out.emplace_back(r0 + it.col(), c0 + it.row(), it.value());
            } else {
                out.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
            }
        }
    }
}

// Names the first structurally empty row of the KKT matrix, by block.
std::string diagnose_structure(const SaddleSystem& sys) {
    const Eigen::Index nu = sys.A.rows();
    const Eigen::Index np = sys.B.rows();
    std::vector<int> a_count(static_cast<std::size_t>(nu), 0);
    std::vector<int> p_count(static_cast<std::size_t>(np), 0);
    for (Eigen::Index k = 0; k < sys.A.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(sys.A, k); it; ++it) {
            if (it.value() != 0.0) ++a_count[static_cast<std::size_t>(it.row())];
        }
    }
    for (Eigen::Index k = 0; k < sys.B.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(sys.B, k); it; ++it) {
            if (it.value() != 0.0) {
                ++a_count[static_cast<std::size_t>(it.col())];
                ++p_count[static_cast<std::size_t>(it.row())];
            }
        }
    }
    if (has_block(sys.C)) {
        for (Eigen::Index k = 0; k < sys.C.outerSize(); ++k) {
            for (SparseMatrix::InnerIterator it(sys.C, k); it; ++it) {
                if (it.value() != 0.0) ++p_count[static_cast<std::size_t>(it.row())];
            }
        }
    }
    for (Eigen::Index i = 0; i < nu; ++i) {
        if (a_count[static_cast<std::size_t>(i)] == 0) {
            return "velocity block (A) row " + std::to_string(i) + " is structurally empty";
        }
    }
    for (Eigen::Index i = 0; i < np; ++i) {
        if (p_count[static_cast<std::size_t>(i)] == 0) {
            return "constraint block (B/C) row " + std::to_string(i) + " is structurally empty";
        }
    }
    if (sys.gauge == GaugeMode::none && np > 0) {
        return "no structurally empty row; the constraint block (B) is likely rank deficient "
               "(consider a pressure gauge)";
    }
    return "no structurally empty row; the velocity block (A) is likely singular on ker(B)";
}

}  // namespace

void SaddleSystem::validate() const {
    const Eigen::Index nu = A.rows();
    const Eigen::Index np = B.rows();
    if (A.cols() != nu) throw SolverError("A must be square");
    if (np > 0 && B.cols() != nu) throw SolverError("B column count must equal the size of A");
    if (f.size() != nu) throw SolverError("f has wrong length");
    if (g.size() != np) throw SolverError("g has wrong length");
    if (has_block(C) && (C.rows() != np || C.cols() != np)) throw SolverError("C has wrong dimensions");
    if (gauge == GaugeMode::zero_mean && pressure_weights.size() != 0 && pressure_weights.size() != np) {
        throw SolverError("pressure weights have wrong length");
    }
    if (gauge != GaugeMode::none && np == 0) throw SolverError("gauge requested without pressure");
    if (gauge == GaugeMode::pin_one_dof && (pinned_dof < 0 || pinned_dof >= np)) {
        throw SolverError("pinned pressure dof out of range");
    }
}

SparseMatrix assemble_kkt(const SaddleSystem& sys) {
    sys.validate();
    const Eigen::Index nu = sys.A.rows();
    const Eigen::Index np = sys.B.rows();
    const Eigen::Index ng = sys.gauge == GaugeMode::none ? 0 : 1;
    const Eigen::Index n = nu + np + ng;

    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(sys.A.nonZeros() + 2 * sys.B.nonZeros() + sys.C.nonZeros() +
                                           2 * np));
    append(trips, sys.A, 0, 0, false);
    append(trips, sys.B, nu, 0, false);
    append(trips, sys.B, 0, nu, true);
    if (has_block(sys.C)) append(trips, sys.C, nu, nu, false);
    if (sys.gauge == GaugeMode::zero_mean) {
        for (Eigen::Index i = 0; i < np; ++i) {
            const double w = sys.pressure_weights.size() ? sys.pressure_weights[i] : 1.0;
            trips.emplace_back(nu + np, nu + i, w);
            trips.emplace_back(nu + i, nu + np, w);
        }
    } else if (sys.gauge == GaugeMode::pin_one_dof) {
        trips.emplace_back(nu + np, nu + sys.pinned_dof, 1.0);
        trips.emplace_back(nu + sys.pinned_dof, nu + np, 1.0);
    }
    SparseMatrix k(n, n);
    k.setFromTriplets(trips.begin(), trips.end());
    k.makeCompressed();
    return k;
}

struct SaddleSolver::Impl {
    SolverMethod method = SolverMethod::sparse_lu;
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt;
    std::vector<int> outer;
    std::vector<int> inner;
    bool analyzed = false;
    SparseMatrix last;
};

SaddleSolver::SaddleSolver(SolverMethod method) : impl_(std::make_unique<Impl>()) { impl_->method = method; }
SaddleSolver::~SaddleSolver() = default;

SaddleSolution SaddleSolver::solve(const SaddleSystem& sys, double residual_tol) {
    const Eigen::Index nu = sys.A.rows();
    const Eigen::Index np = sys.B.rows();
    SparseMatrix kkt = assemble_kkt(sys);
    const Eigen::Index n = kkt.rows();

    SolveReport report;
    const bool same_pattern =
        impl_->analyzed && static_cast<std::size_t>(kkt.outerSize() + 1) == impl_->outer.size() &&
        static_cast<std::size_t>(kkt.nonZeros()) == impl_->inner.size() &&
        std::equal(impl_->outer.begin(), impl_->outer.end(), kkt.outerIndexPtr()) &&
        std::equal(impl_->inner.begin(), impl_->inner.end(), kkt.innerIndexPtr());
    if (!same_pattern) {
        if (impl_->method == SolverMethod::sparse_lu) impl_->lu.analyzePattern(kkt);
        impl_->outer.assign(kkt.outerIndexPtr(), kkt.outerIndexPtr() + kkt.outerSize() + 1);
        impl_->inner.assign(kkt.innerIndexPtr(), kkt.innerIndexPtr() + kkt.nonZeros());
        impl_->analyzed = true;
    }
    report.pattern_reused = same_pattern;
    Vector rhs = Vector::Zero(n);
    rhs.head(nu) = sys.f;
    rhs.segment(nu, np) = sys.g;
    Vector x;
    if (impl_->method == SolverMethod::sparse_lu) {
        impl_->lu.factorize(kkt);
        if (impl_->lu.info() != Eigen::Success) {
            impl_->analyzed = false;
            throw SolverError("singular KKT factorization: " + diagnose_structure(sys) + " (" +
                              impl_->lu.lastErrorMessage() + ")");
        }
        x = impl_->lu.solve(rhs);
    } else {
        double scale = 0.0;
        for (Eigen::Index i = 0; i < nu; ++i) scale = std::max(scale, std::abs(kkt.coeff(i, i)));
        const double eps = 1e-10 * (scale > 0.0 ? scale : 1.0);
        SparseMatrix shift(n, n);
        std::vector<Triplet> diag;
        for (Eigen::Index i = nu; i < n; ++i) diag.emplace_back(i, i, -eps);
        shift.setFromTriplets(diag.begin(), diag.end());
        const SparseMatrix reg = kkt + shift;
        if (!same_pattern) impl_->ldlt.analyzePattern(reg);
        impl_->ldlt.factorize(reg);
        if (impl_->ldlt.info() != Eigen::Success) {
            impl_->analyzed = false;
            throw SolverError("regularized LDL^T factorization failed: " + diagnose_structure(sys));
        }
        x = impl_->ldlt.solve(rhs);
        const double bnorm = rhs.norm();
        for (int it = 0; it < 50; ++it) {
            const Vector r = rhs - kkt * x;
            if (!(r.norm() > 1e-3 * residual_tol * bnorm)) break;
            x += impl_->ldlt.solve(r);
            report.refinement_steps = it + 1;
        }
    }
    impl_->last = kkt;

    SaddleSolution sol;
    sol.u = x.head(nu);
    sol.p = x.segment(nu, np);

    // Residual of the system as assembled by the caller, without the gauge row.
    Vector ru = sys.A * sol.u - sys.f;
    Vector rp = -sys.g;
    if (np > 0) {
        ru += sys.B.transpose() * sol.p;
        rp += sys.B * sol.u;
        if (has_block(sys.C)) rp += sys.C * sol.p;
    }
    const double rnorm = std::sqrt(ru.squaredNorm() + rp.squaredNorm());
    const double bnorm = std::sqrt(sys.f.squaredNorm() + sys.g.squaredNorm());
    report.relative_residual = bnorm > 0.0 ? rnorm / bnorm : rnorm;
    report.pivots_healthy = x.allFinite();
    sol.report = report;

    if (!report.pivots_healthy) {
        throw SolverError("KKT solve produced non-finite values: " + diagnose_structure(sys));
    }
    if (!(report.relative_residual <= residual_tol)) {
        std::ostringstream msg;
        msg << "KKT relative residual " << report.relative_residual << " exceeds " << residual_tol;
        throw SolverError(msg.str());
    }
    return sol;
}

void SaddleSolver::dump_last_matrix(const std::string& path) const { write_matrix_market(path, impl_->last); }

SaddleSolution solve_saddle(const SaddleSystem& sys, double residual_tol) {
    SaddleSolver solver;
    return solver.solve(sys, residual_tol);
}

}  // namespace hsflow
