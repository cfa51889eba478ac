#pragma once

#include "hsflow/fem.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <memory>
#include <string>

namespace hsflow {

enum class GaugeMode { none, pin_one_dof, zero_mean };

/// [A B^T; B C] [u; p] = [f; g]. C is optional (empty means zero).
struct SaddleSystem {
    SparseMatrix A;
    SparseMatrix B;
    SparseMatrix C;
    Vector f;
    Vector g;
    GaugeMode gauge = GaugeMode::none;
    /// Weights of the zero-mean gauge; empty means all ones.
    Vector pressure_weights;
    /// Pinned dof of the pin gauge.
    Eigen::Index pinned_dof = 0;

    void validate() const;
};

struct SolveReport {
    double relative_residual = 0.0;
    bool pivots_healthy = true;
    bool pattern_reused = false;
    int refinement_steps = 0;
};

struct SaddleSolution {
    Vector u;
    Vector p;
    SolveReport report;
};

enum class SolverMethod {
    sparse_lu,
    /// LDL^T of the KKT matrix with -eps on the multiplier diagonal (quasi-definite), followed by
    /// iterative refinement against the unregularized matrix. Needs a symmetric system with SPD A.
    regularized_ldlt
};

/// Direct solve of the assembled KKT matrix. Keeps the symbolic analysis as long as the sparsity
/// pattern of successive systems is unchanged.
class SaddleSolver {
public:
    explicit SaddleSolver(SolverMethod method = SolverMethod::sparse_lu);
    ~SaddleSolver();
    SaddleSolver(const SaddleSolver&) = delete;
    SaddleSolver& operator=(const SaddleSolver&) = delete;

    SaddleSolution solve(const SaddleSystem& sys, double residual_tol = 1e-10);

    /// Writes the last assembled KKT matrix (MatrixMarket).
    void dump_last_matrix(const std::string& path) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

SaddleSolution solve_saddle(const SaddleSystem& sys, double residual_tol = 1e-10);

/// Assembles [A B^T; B C] plus the gauge row/column if any.
SparseMatrix assemble_kkt(const SaddleSystem& sys);

}  // namespace hsflow
