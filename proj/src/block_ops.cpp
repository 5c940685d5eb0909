#include "mslca/block_ops.hpp"

#include "mslca/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mslca {

namespace {

std::string describe_singular(double lambda_min, double lambda_max, std::optional<std::size_t> block) {
    std::ostringstream os;
    os << "near-singular matrix";
    if (block) os << " in block " << *block;
    os << " (lambda_min=" << lambda_min << ", lambda_max=" << lambda_max << ")";
    return os.str();
}

double symmetry_tolerance(const Eigen::Ref<const Eigen::MatrixXd>& a) {
    const double scale = a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
    return 1e-12 * (1.0 + scale);
}

}  // namespace

NearSingular::NearSingular(double lambda_min, double lambda_max, std::optional<std::size_t> block)
    : Error(describe_singular(lambda_min, lambda_max, block)),
      lambda_min_(lambda_min),
      lambda_max_(lambda_max),
      block_(block) {}

BlockStructure::BlockStructure(std::vector<Index> dims) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw ShapeError("block structure needs at least two blocks");
    offsets_.reserve(dims_.size());
    for (Index p : dims_) {
        if (p < 1) throw ShapeError("every block must have dimension >= 1");
        offsets_.push_back(total_);
        total_ += p;
    }
}

Index BlockStructure::size(Index k) const {
    if (k < 0 || k >= blocks()) throw ShapeError("block index out of range");
    return dims_[static_cast<std::size_t>(k)];
}

Index BlockStructure::offset(Index k) const {
    if (k < 0 || k >= blocks()) throw ShapeError("block index out of range");
    return offsets_[static_cast<std::size_t>(k)];
}

Index BlockStructure::block_of(Index i) const {
    if (i < 0 || i >= total_) throw ShapeError("coordinate index out of range");
    auto it = std::upper_bound(offsets_.begin(), offsets_.end(), i);
    return static_cast<Index>(it - offsets_.begin()) - 1;
}

BlockVector::BlockVector(BlockStructure s, Eigen::VectorXd v) : structure(std::move(s)), values(std::move(v)) {
    if (values.size() != structure.dim()) throw ShapeError("block vector length does not match structure");
}

BlockMatrix::BlockMatrix(BlockStructure s, Eigen::MatrixXd e, bool sym)
    : structure(std::move(s)), entries(std::move(e)), symmetric(sym) {
    if (entries.rows() != structure.dim() || entries.cols() != structure.dim())
        throw ShapeError("block matrix shape does not match structure");
    if (symmetric) {
        if (!is_symmetric(entries)) throw NotSymmetric("matrix flagged symmetric is not symmetric");
        Eigen::MatrixXd sym_part = 0.5 * (entries + entries.transpose());
        entries = std::move(sym_part);
    }
}

BlockMatrix BlockMatrix::zero(const BlockStructure& structure, bool symmetric) {
    return BlockMatrix(structure, Eigen::MatrixXd::Zero(structure.dim(), structure.dim()), symmetric);
}

BlockMatrix BlockMatrix::identity(const BlockStructure& structure) {
    return BlockMatrix(structure, Eigen::MatrixXd::Identity(structure.dim(), structure.dim()), true);
}

Eigen::MatrixXd block_extract(const BlockMatrix& a, Index k, Index l) {
    return a.block(k, l);
}

BlockMatrix block_embed(const Eigen::MatrixXd& b, Index k, Index l, const BlockStructure& structure) {
    if (b.rows() != structure.size(k) || b.cols() != structure.size(l))
        throw ShapeError("embedded block shape does not match structure");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(structure.dim(), structure.dim());
    out.block(structure.offset(k), structure.offset(l), b.rows(), b.cols()) = b;
    return BlockMatrix(structure, std::move(out), false);
}

bool is_symmetric(const Eigen::Ref<const Eigen::MatrixXd>& a) {
    if (a.rows() != a.cols()) return false;
    if (a.size() == 0) return true;
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= symmetry_tolerance(a);
}

SymmetricEig sym_eig(const Eigen::Ref<const Eigen::MatrixXd>& a) {
    if (!is_symmetric(a)) throw NotSymmetric("sym_eig: input is not symmetric");
    const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) throw ConvergenceFailure("sym_eig: eigensolver did not converge");

    const Index n = sym.rows();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    const Eigen::VectorXd& raw = solver.eigenvalues();
    std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return raw(i) > raw(j); });

    SymmetricEig out{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
    for (Index j = 0; j < n; ++j) {
        const Index src = order[static_cast<std::size_t>(j)];
        out.values(j) = raw(src);
        Eigen::VectorXd v = solver.eigenvectors().col(src);
        Index lead = 0;
        for (Index i = 1; i < n; ++i) {
            if (std::abs(v(i)) > std::abs(v(lead))) lead = i;
        }
        if (v(lead) < 0.0) v = -v;
        out.vectors.col(j) = v;
    }
    return out;
}

SymmetricEig sym_eig(const BlockMatrix& a) {
    if (!a.symmetric) throw NotSymmetric("sym_eig: block matrix is not flagged symmetric");
    return sym_eig(a.entries);
}

double exponent_of(Power p) noexcept {
    switch (p) {
        case Power::Inverse: return -1.0;
        case Power::InverseSqrt: return -0.5;
        case Power::Sqrt: return 0.5;
    }
    return 0.0;
}

Eigen::MatrixXd sym_power(const Eigen::Ref<const Eigen::MatrixXd>& a, Power power, double cond_floor) {
    const SymmetricEig eig = sym_eig(a);
    const Index n = eig.values.size();
    const double lmax = eig.values(0);
    const double lmin = eig.values(n - 1);
    if (!(lmin > 0.0) || !(lmin > cond_floor * lmax)) throw NearSingular(lmin, lmax);

    const double e = exponent_of(power);
    Eigen::VectorXd scaled(n);
    for (Index i = 0; i < n; ++i) scaled(i) = std::pow(eig.values(i), e);
    Eigen::MatrixXd out = eig.vectors * scaled.asDiagonal() * eig.vectors.transpose();
    return 0.5 * (out + out.transpose());
}

BlockMatrix sym_power(const BlockMatrix& a, Power power, double cond_floor) {
    if (!a.symmetric) throw NotSymmetric("sym_power: block matrix is not flagged symmetric");
    return BlockMatrix(a.structure, sym_power(a.entries, power, cond_floor), true);
}

double frobenius_sq(const Eigen::Ref<const Eigen::MatrixXd>& b) {
    return b.squaredNorm();
}

}  // namespace mslca
