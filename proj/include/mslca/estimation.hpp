#pragma once

// Empirical MSLCA: sample covariance blocks (divisor n), the plug-in
// operator T_n, its spectrum, and the whitening used by the asymptotic
// machinery.

#include "mslca/block_ops.hpp"
#include "mslca/population.hpp"

namespace mslca {

// n observations of X, one per row. Entries must be finite.
struct Dataset {
    Dataset(BlockStructure structure, Eigen::MatrixXd rows);

    Index n() const noexcept { return rows.rows(); }

    BlockStructure structure;
    Eigen::MatrixXd rows;
};

struct CenteredData {
    Dataset data;
    Eigen::VectorXd means;
};

CenteredData center(const Dataset& data);

// (1/n) sum_i (x_i - xbar)(x_i - xbar)^T over all blocks at once.
CovarianceModel empirical_cov(const Dataset& data);

struct MslcaFit {
    Index n;
    BlockVector means;
    CovarianceModel vhat;
    BlockMatrix that;
    MslcaSolution solution;
};

// Throws InsufficientSample for n < 2 and NearSingular(k) when the sample
// covariance of block k fails the condition floor.
MslcaFit fit_mslca(const Dataset& data, const SolveOptions& options = {});

// sign(<bhat, b>) * bhat with sign(0) = +1.
Eigen::VectorXd align_sign(const Eigen::VectorXd& bhat, const Eigen::VectorXd& b);

// ‖A A^T - B B^T‖_F for orthonormal column sets spanning two subspaces.
double projector_gap(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Rows y_i with blocks Vhat_k^{-1/2} (x_ik - xbar_k).
Dataset whiten(const Dataset& data, double cond_floor = kDefaultCondFloor);

}  // namespace mslca
