#pragma once

// Block-structured vectors and matrices over X = X_1 x ... x X_K, plus the
// symmetric eigendecomposition and matrix powers the rest of the library
// builds on. Block indices are zero-based throughout.

#include <Eigen/Dense>

#include <vector>

namespace mslca {

using Index = Eigen::Index;

inline constexpr double kDefaultCondFloor = 1e-10;

class BlockStructure {
public:
    // Throws ShapeError unless there are at least two blocks, each of size >= 1.
    explicit BlockStructure(std::vector<Index> dims);

    Index blocks() const noexcept { return static_cast<Index>(dims_.size()); }
    Index dim() const noexcept { return total_; }
    Index size(Index k) const;
    Index offset(Index k) const;
    const std::vector<Index>& dims() const noexcept { return dims_; }

    // Block that owns global coordinate `i`.
    Index block_of(Index i) const;

    bool operator==(const BlockStructure& other) const { return dims_ == other.dims_; }

private:
    std::vector<Index> dims_;
    std::vector<Index> offsets_;
    Index total_ = 0;
};

struct BlockVector {
    BlockVector(BlockStructure structure, Eigen::VectorXd values);

    auto block(Index k) const { return values.segment(structure.offset(k), structure.size(k)); }

    BlockStructure structure;
    Eigen::VectorXd values;
};

struct BlockMatrix {
    // With `symmetric` set, the entries must be symmetric up to
    // 1e-12 * (1 + max|A|); they are then symmetrized exactly.
    BlockMatrix(BlockStructure structure, Eigen::MatrixXd entries, bool symmetric = false);

    static BlockMatrix zero(const BlockStructure& structure, bool symmetric = true);
    static BlockMatrix identity(const BlockStructure& structure);

    auto block(Index k, Index l) const {
        return entries.block(structure.offset(k), structure.offset(l), structure.size(k),
                             structure.size(l));
    }

    BlockStructure structure;
    Eigen::MatrixXd entries;
    bool symmetric = false;
};

// Eigenvalues in nonincreasing order; column j of `vectors` pairs with
// values(j). Each column has its largest-magnitude entry positive (lowest
// index wins ties).
struct SymmetricEig {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
};

// pi_kl(A) = tau_k A tau_l^*.
Eigen::MatrixXd block_extract(const BlockMatrix& a, Index k, Index l);

// tau_k^* B tau_l: zero everywhere except block (k, l).
BlockMatrix block_embed(const Eigen::MatrixXd& b, Index k, Index l, const BlockStructure& structure);

bool is_symmetric(const Eigen::Ref<const Eigen::MatrixXd>& a);

SymmetricEig sym_eig(const Eigen::Ref<const Eigen::MatrixXd>& a);
// Requires the symmetric flag to be set.
SymmetricEig sym_eig(const BlockMatrix& a);

enum class Power { Inverse, InverseSqrt, Sqrt };

double exponent_of(Power p) noexcept;

// Q diag(lambda^e) Q^T. Throws NearSingular unless
// lambda_min > cond_floor * lambda_max and lambda_min > 0.
Eigen::MatrixXd sym_power(const Eigen::Ref<const Eigen::MatrixXd>& a, Power power,
                          double cond_floor = kDefaultCondFloor);
BlockMatrix sym_power(const BlockMatrix& a, Power power, double cond_floor = kDefaultCondFloor);

// tr(B B^T).
double frobenius_sq(const Eigen::Ref<const Eigen::MatrixXd>& b);

}  // namespace mslca
