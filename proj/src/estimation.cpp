#include "mslca/estimation.hpp"

#include "mslca/errors.hpp"

namespace mslca {

Dataset::Dataset(BlockStructure s, Eigen::MatrixXd r) : structure(std::move(s)), rows(std::move(r)) {
    if (rows.cols() != structure.dim()) throw ShapeError("dataset column count does not match block structure");
    if (!rows.allFinite()) throw Error("dataset contains non-finite entries");
}

CenteredData center(const Dataset& data) {
    if (data.n() < 2) throw InsufficientSample("at least two observations are required");
    Eigen::VectorXd means = data.rows.colwise().mean().transpose();
    Eigen::MatrixXd centered = data.rows.rowwise() - means.transpose();
    return {Dataset(data.structure, std::move(centered)), std::move(means)};
}

CovarianceModel empirical_cov(const Dataset& data) {
    const CenteredData c = center(data);
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(data.structure.dim(), data.structure.dim());
    v.selfadjointView<Eigen::Lower>().rankUpdate(c.data.rows.transpose(), 1.0 / static_cast<double>(data.n()));
    v.triangularView<Eigen::StrictlyUpper>() = v.transpose();
    return CovarianceModel(data.structure, std::move(v));
}

MslcaFit fit_mslca(const Dataset& data, const SolveOptions& options) {
    const CenteredData c = center(data);
    CovarianceModel vhat = empirical_cov(data);
    const BlockMatrix w = build_phi_inv_sqrt(vhat, options.cond_floor);
    BlockMatrix that = build_t(vhat, options.cond_floor);
    MslcaSolution sol = solve_from_t(that, w, options.group_tol);
    return MslcaFit{data.n(), BlockVector(data.structure, c.means), std::move(vhat), std::move(that),
                    std::move(sol)};
}

Eigen::VectorXd align_sign(const Eigen::VectorXd& bhat, const Eigen::VectorXd& b) {
    if (bhat.size() != b.size()) throw ShapeError("align_sign: length mismatch");
    return bhat.dot(b) < 0.0 ? Eigen::VectorXd(-bhat) : bhat;
}

double projector_gap(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows()) throw ShapeError("projector_gap: ambient dimension mismatch");
    return (a * a.transpose() - b * b.transpose()).norm();
}

Dataset whiten(const Dataset& data, double cond_floor) {
    const CenteredData c = center(data);
    const CovarianceModel vhat = empirical_cov(data);
    const BlockMatrix w = build_phi_inv_sqrt(vhat, cond_floor);
    // Block diagonal w is symmetric, so row-wise application is a right multiply.
    return Dataset(data.structure, c.data.rows * w.entries);
}

}  // namespace mslca
