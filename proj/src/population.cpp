#include "mslca/population.hpp"

#include "mslca/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mslca {

CovarianceModel::CovarianceModel(BlockStructure structure, Eigen::MatrixXd v)
    : v_(std::move(structure), std::move(v), true) {}

void CovarianceModel::validate(double cond_floor) const {
    const BlockStructure& s = structure();
    for (Index k = 0; k < s.blocks(); ++k) {
        const SymmetricEig eig = sym_eig(Eigen::MatrixXd(v_.block(k, k)));
        const double lmax = eig.values(0);
        const double lmin = eig.values(eig.values.size() - 1);
        if (!(lmin > 0.0) || !(lmin > cond_floor * lmax))
            throw NearSingular(lmin, lmax, static_cast<std::size_t>(k));
    }
    const SymmetricEig full = sym_eig(v_.entries);
    const double scale = 1.0 + v_.entries.cwiseAbs().maxCoeff();
    if (full.values(full.values.size() - 1) < -1e-10 * scale)
        throw Error("covariance model is not positive semidefinite");
}

bool CovarianceModel::mutually_uncorrelated() const {
    const BlockStructure& s = structure();
    for (Index k = 0; k < s.blocks(); ++k) {
        for (Index l = 0; l < s.blocks(); ++l) {
            if (k != l && !v_.block(k, l).isZero(0.0)) return false;
        }
    }
    return true;
}

BlockMatrix build_phi(const CovarianceModel& model, double cond_floor) {
    model.validate(cond_floor);
    const BlockStructure& s = model.structure();
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(s.dim(), s.dim());
    for (Index k = 0; k < s.blocks(); ++k) {
        phi.block(s.offset(k), s.offset(k), s.size(k), s.size(k)) = model.block(k, k);
    }
    return BlockMatrix(s, std::move(phi), true);
}

BlockMatrix build_psi(const CovarianceModel& model) {
    const BlockStructure& s = model.structure();
    Eigen::MatrixXd psi = model.matrix().entries;
    for (Index k = 0; k < s.blocks(); ++k) {
        psi.block(s.offset(k), s.offset(k), s.size(k), s.size(k)).setZero();
    }
    return BlockMatrix(s, std::move(psi), true);
}

BlockMatrix build_phi_inv_sqrt(const CovarianceModel& model, double cond_floor) {
    const BlockStructure& s = model.structure();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(s.dim(), s.dim());
    for (Index k = 0; k < s.blocks(); ++k) {
        try {
            out.block(s.offset(k), s.offset(k), s.size(k), s.size(k)) =
                sym_power(model.block(k, k), Power::InverseSqrt, cond_floor);
        } catch (const NearSingular& e) {
            throw NearSingular(e.lambda_min(), e.lambda_max(), static_cast<std::size_t>(k));
        }
    }
    return BlockMatrix(s, std::move(out), true);
}

namespace {

// Off-diagonal blocks W_k V_kl W_l with W = Phi^{-1/2}; lower blocks are
// exact transposes of the upper ones and diagonal blocks stay exactly zero.
BlockMatrix assemble_t(const CovarianceModel& model, const BlockMatrix& w) {
    const BlockStructure& s = model.structure();
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(s.dim(), s.dim());
    for (Index k = 0; k < s.blocks(); ++k) {
        for (Index l = k + 1; l < s.blocks(); ++l) {
            const Eigen::MatrixXd b = w.block(k, k) * model.block(k, l) * w.block(l, l);
            t.block(s.offset(k), s.offset(l), s.size(k), s.size(l)) = b;
            t.block(s.offset(l), s.offset(k), s.size(l), s.size(k)) = b.transpose();
        }
    }
    return BlockMatrix(s, std::move(t), true);
}

}  // namespace

BlockMatrix build_t(const CovarianceModel& model, double cond_floor) {
    return assemble_t(model, build_phi_inv_sqrt(model, cond_floor));
}

std::vector<MultiplicityGroup> group_eigenvalues(const Eigen::VectorXd& rho, double tol) {
    if (!(tol > 0.0)) throw Error("group tolerance must be positive");
    std::vector<MultiplicityGroup> groups;
    for (Index j = 0; j < rho.size(); ++j) {
        if (!groups.empty()) {
            const double lead = groups.back().value;
            if (std::abs(rho(j) - lead) <= tol * std::max(1.0, std::abs(lead))) {
                groups.back().indices.push_back(j);
                continue;
            }
        }
        groups.push_back(MultiplicityGroup{{j}, rho(j), true});
    }
    for (auto& g : groups) {
        double mean = 0.0;
        for (Index i : g.indices) mean += rho(i);
        mean /= static_cast<double>(g.indices.size());
        g.identifiable = std::abs(mean) > tol;
    }
    return groups;
}

MslcaSolution solve_from_t(const BlockMatrix& t, const BlockMatrix& phi_inv_sqrt, double group_tol) {
    const SymmetricEig eig = sym_eig(t);
    MslcaSolution sol{t.structure, eig.values, eig.vectors, phi_inv_sqrt.entries * eig.vectors, {}};
    sol.groups = group_eigenvalues(sol.rho, group_tol);
    return sol;
}

MslcaSolution solve_mslca(const CovarianceModel& model, const SolveOptions& options) {
    const BlockMatrix w = build_phi_inv_sqrt(model, options.cond_floor);
    return solve_from_t(assemble_t(model, w), w, options.group_tol);
}

CovarianceModel whitened_model(const CovarianceModel& model, double cond_floor) {
    const BlockMatrix t = build_t(model, cond_floor);
    return CovarianceModel(model.structure(),
                           t.entries + Eigen::MatrixXd::Identity(t.entries.rows(), t.entries.cols()));
}

double varphi(const CovarianceModel& model, const BlockVector& a) {
    const BlockStructure& s = model.structure();
    if (!(a.structure == s)) throw ShapeError("varphi: vector structure does not match model");
    double total = 0.0;
    for (Index k = 0; k < s.blocks(); ++k) {
        for (Index l = 0; l < s.blocks(); ++l) {
            if (k == l) continue;
            total += a.block(k).dot(model.matrix().block(k, l) * a.block(l));
        }
    }
    return total;
}

ConstraintDiagnostics verify_constraints(const CovarianceModel& model, const Eigen::MatrixXd& alpha) {
    const BlockStructure& s = model.structure();
    if (alpha.rows() != s.dim()) throw ShapeError("verify_constraints: direction length mismatch");
    const Index m = alpha.cols();
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m, m);
    for (Index k = 0; k < s.blocks(); ++k) {
        const auto ak = alpha.middleRows(s.offset(k), s.size(k));
        gram += ak.transpose() * model.matrix().block(k, k) * ak;
    }
    ConstraintDiagnostics d;
    for (Index i = 0; i < m; ++i) {
        d.unit_variance_violation = std::max(d.unit_variance_violation, std::abs(gram(i, i) - 1.0));
        for (Index j = 0; j < m; ++j) {
            if (i != j) d.orthogonality_violation = std::max(d.orthogonality_violation, std::abs(gram(i, j)));
        }
    }
    return d;
}

ConstraintDiagnostics verify_constraints(const CovarianceModel& model, const MslcaSolution& solution) {
    return verify_constraints(model, solution.alpha);
}

CcaEquivalence cca_equivalence(const CovarianceModel& model, const SolveOptions& options) {
    const BlockStructure& s = model.structure();
    if (s.blocks() != 2) throw ShapeError("cca_equivalence is defined for two blocks only");

    const BlockMatrix w = build_phi_inv_sqrt(model, options.cond_floor);
    const Eigen::MatrixXd sm = w.block(0, 0) * model.block(0, 1) * w.block(1, 1);
    const Eigen::MatrixXd r = sm * sm.transpose();

    const MslcaSolution sol = solve_from_t(assemble_t(model, w), w, options.group_tol);
    const Index p1 = s.size(0);
    const Index c = std::min(p1, s.size(1));
    const Index q = s.dim();

    CcaEquivalence out;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sm);
    out.canonical_correlations = svd.singularValues().head(c);  // already nonincreasing
    out.r_eigenvalues = sym_eig(0.5 * (r + r.transpose())).values;
    out.rho = sol.rho;
    out.left = std::sqrt(2.0) * sol.beta.topRows(p1).leftCols(c);
    out.right = std::sqrt(2.0) * sol.beta.bottomRows(q - p1).leftCols(c);

    Eigen::VectorXd expected = Eigen::VectorXd::Zero(q);
    for (Index j = 0; j < c; ++j) {
        expected(j) = out.canonical_correlations(j);
        expected(q - 1 - j) = -out.canonical_correlations(j);
    }
    out.pairing_error = (expected - sol.rho).cwiseAbs().maxCoeff();

    const double half = 1.0 / std::sqrt(2.0);
    for (Index j = 0; j < q; ++j) {
        if (std::abs(sol.rho(j)) <= options.group_tol) continue;
        const double n1 = sol.beta.col(j).head(p1).norm();
        const double n2 = sol.beta.col(j).tail(q - p1).norm();
        out.norm_split_error = std::max({out.norm_split_error, std::abs(n1 - half), std::abs(n2 - half)});
    }
    return out;
}

}  // namespace mslca
