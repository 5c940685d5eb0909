#pragma once

// Population multiple-set linear canonical analysis: from an exact covariance
// model, build Phi (within-set), Psi (between-set) and
// T = Phi^{-1/2} Psi Phi^{-1/2}, and read the canonical coefficients and
// directions off the spectrum of T.

#include "mslca/block_ops.hpp"

#include <vector>

namespace mslca {

// Full covariance of X, stored densely; block (k, l) is V_kl.
class CovarianceModel {
public:
    // Checks shape and symmetry only; positive definiteness of the diagonal
    // blocks is checked where inverses are taken (see validate()).
    CovarianceModel(BlockStructure structure, Eigen::MatrixXd v);

    const BlockStructure& structure() const noexcept { return v_.structure; }
    const BlockMatrix& matrix() const noexcept { return v_; }
    Eigen::MatrixXd block(Index k, Index l) const { return v_.block(k, l); }

    // Throws NearSingular(k) for the first diagonal block failing the
    // condition floor and Error if V is not positive semidefinite.
    void validate(double cond_floor = kDefaultCondFloor) const;

    // True when every off-diagonal block is exactly zero.
    bool mutually_uncorrelated() const;

private:
    BlockMatrix v_;
};

struct MultiplicityGroup {
    std::vector<Index> indices;
    double value = 0.0;
    // False for the zero eigenspace, whose basis is the solver's arbitrary choice.
    bool identifiable = true;
};

struct MslcaSolution {
    BlockStructure structure;
    Eigen::VectorXd rho;    // canonical coefficients, nonincreasing
    Eigen::MatrixXd beta;   // column j: orthonormal eigenvector of T for rho(j)
    Eigen::MatrixXd alpha;  // column j: Phi^{-1/2} beta.col(j)
    std::vector<MultiplicityGroup> groups;

    BlockVector beta_vector(Index j) const { return {structure, beta.col(j)}; }
    BlockVector alpha_vector(Index j) const { return {structure, alpha.col(j)}; }
    bool simple_spectrum() const noexcept { return groups.size() == static_cast<std::size_t>(rho.size()); }
};

struct SolveOptions {
    double group_tol = 1e-8;
    double cond_floor = kDefaultCondFloor;
};

BlockMatrix build_phi(const CovarianceModel& model, double cond_floor = kDefaultCondFloor);
BlockMatrix build_psi(const CovarianceModel& model);
// Block diagonal with blocks V_k^{-1/2}; NearSingular names the block.
BlockMatrix build_phi_inv_sqrt(const CovarianceModel& model, double cond_floor = kDefaultCondFloor);
BlockMatrix build_t(const CovarianceModel& model, double cond_floor = kDefaultCondFloor);

// Consecutive sorted eigenvalues join a group while
// |rho_i - lead| <= tol * max(1, |lead|), lead being the group's first value.
std::vector<MultiplicityGroup> group_eigenvalues(const Eigen::VectorXd& rho, double tol);

// Spectral solve of a prebuilt T; alpha = phi_inv_sqrt * beta.
MslcaSolution solve_from_t(const BlockMatrix& t, const BlockMatrix& phi_inv_sqrt, double group_tol);

MslcaSolution solve_mslca(const CovarianceModel& model, const SolveOptions& options = {});

// The model with covariance Phi^{-1/2} V Phi^{-1/2} = I + T: identity
// diagonal blocks, same T and same canonical coefficients.
CovarianceModel whitened_model(const CovarianceModel& model, double cond_floor = kDefaultCondFloor);

// sum_k sum_{l != k} <a_k, V_kl a_l>.
double varphi(const CovarianceModel& model, const BlockVector& a);

struct ConstraintDiagnostics {
    double unit_variance_violation = 0.0;  // max_j |sum_k <a_k^j, V_k a_k^j> - 1|
    double orthogonality_violation = 0.0;  // max_{i != j} |sum_k <a_k^i, V_k a_k^j>|
};

// Columns of `alpha` are candidate canonical directions.
ConstraintDiagnostics verify_constraints(const CovarianceModel& model, const Eigen::MatrixXd& alpha);
ConstraintDiagnostics verify_constraints(const CovarianceModel& model, const MslcaSolution& solution);

// Two-set case: MSLCA against classical canonical correlation analysis.
struct CcaEquivalence {
    Eigen::VectorXd canonical_correlations;  // singular values of S, nonincreasing
    Eigen::VectorXd r_eigenvalues;           // eigenvalues of R = S S^T, nonincreasing
    Eigen::MatrixXd left;                    // column j: sqrt(2) tau_1 beta^(j)
    Eigen::MatrixXd right;                   // column j: sqrt(2) tau_2 beta^(j)
    Eigen::VectorXd rho;                     // spectrum of T
    double pairing_error = 0.0;     // T spectrum vs (+s, 0..., -s) built from S
    double norm_split_error = 0.0;  // max |‖tau_l beta‖ - 1/sqrt(2)| over rho != 0
};

CcaEquivalence cca_equivalence(const CovarianceModel& model, const SolveOptions& options = {});

}  // namespace mslca
