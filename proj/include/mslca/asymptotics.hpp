#pragma once

// Limit laws of the empirical MSLCA: the random operator Z whose covariance
// drives sqrt(n)(T_n - T), the fourth-moment coefficients C(m,r,s,t) and the
// covariance of the canonical-coefficient estimators, the Gamma matrix of
// the non-correlation statistic, and weighted chi-square tail probabilities.

#include "mslca/block_ops.hpp"
#include "mslca/estimation.hpp"
#include "mslca/population.hpp"

#include <cstdint>
#include <vector>

namespace mslca {

// Z(x) for a model with V_k = I: zero diagonal blocks and, for k != l,
// block (k, l) = x_k x_l^T - (x_k x_k^T V_kl + V_kl x_l x_l^T) / 2.
BlockMatrix z_operator(const BlockVector& x, const CovarianceModel& model);

// Moments of one centered, block-whitened sample. The constructor whitens
// the raw data it is given.
class MomentAccumulator {
public:
    explicit MomentAccumulator(const Dataset& raw, double cond_floor = kDefaultCondFloor);

    const Dataset& whitened() const noexcept { return whitened_; }
    const BlockStructure& structure() const noexcept { return whitened_.structure; }
    Index n() const noexcept { return whitened_.n(); }

    // Sample covariance of the whitened data: identity diagonal blocks,
    // off-diagonal blocks equal to those of the empirical T.
    const CovarianceModel& second_moments() const noexcept { return second_; }

    // Sample mean of y_a y_b y_c y_d over global whitened coordinates.
    double fourth_moment(Index a, Index b, Index c, Index d) const;

private:
    Dataset whitened_;
    CovarianceModel second_;
};

// One coordinate of the vectorized off-diagonal blocks: entry (i, j) of
// block pair (k, l), k > l.
struct PairCoordinate {
    Index k, l, i, j;
};

// Pairs (1,0), (2,0), (2,1), ..., (K-1, K-2); inside a pair, i runs fastest.
std::vector<PairCoordinate> gamma_index(const BlockStructure& structure);

// d = sum_{k > l} p_k p_l.
Index degrees_of_freedom(const BlockStructure& structure);

struct GammaMatrix {
    Eigen::MatrixXd matrix;
    std::vector<PairCoordinate> index;
};

// Entry [(k,l,i,j), (r,s,p,q)] = E_n(y_{k,i} y_{r,p} y_{l,j} y_{s,q}); exactly symmetric.
GammaMatrix build_gamma(const MomentAccumulator& acc);

// All C(m,r,s,t) for the directions in the columns of `basis`, with the
// gamma, theta and lambda block sums available separately.
class CoefficientTable {
public:
    CoefficientTable(const MomentAccumulator& acc, const Eigen::MatrixXd& basis, const CovarianceModel& model);

    Index dim() const noexcept { return p_; }
    const Eigen::MatrixXd& basis() const noexcept { return basis_; }

    // sum over k != l, j != q of gamma^{a,b,c,d}_{k l j q} (weight 1/4).
    double gamma_term(Index a, Index b, Index c, Index d) const;
    // Same for theta (weight 1/2).
    double theta_term(Index a, Index b, Index c, Index d) const;
    // Same for lambda, the plain fourth moment.
    double lambda_term(Index a, Index b, Index c, Index d) const;

    double operator()(Index m, Index r, Index s, Index t) const;

private:
    Index pair(Index a, Index b) const { return a * p_ + b; }

    Index p_;
    Eigen::MatrixXd basis_;
    Eigen::MatrixXd gg_;  // E_n(G_ab G_cd)
    Eigen::MatrixXd gl_;  // E_n(G_ab L_cd)
    Eigen::MatrixXd ll_;  // E_n(L_ab L_cd)
};

// Single plug-in coefficient, streaming over the sample.
double c_coefficient(const MomentAccumulator& acc, const Eigen::MatrixXd& basis, const CovarianceModel& model,
                     Index m, Index r, Index s, Index t);
double c_coefficient(const MomentAccumulator& acc, const MslcaSolution& solution, const CovarianceModel& model,
                     Index m, Index r, Index s, Index t);

// sigma_ij = sum_{m,r,s,t} b^(i)_m b^(i)_r b^(j)_s b^(j)_t C(m,r,s,t), where
// b^(i) holds the coordinates of beta^(i) in the table's (orthonormal) basis.
// Throws RepeatedEigenvalues unless every multiplicity group is a singleton.
Eigen::MatrixXd sigma_matrix(const CoefficientTable& table, const MslcaSolution& solution);

struct MonteCarloSettings {
    std::int64_t draws = 200000;
    std::uint64_t seed = 0;
};

// Law of sum_i w_i chi2_1 with independent terms.
class EigenChiSquareDist {
public:
    // Weights below -1e-8 throw NegativeWeight; smaller negatives clamp to 0.
    EigenChiSquareDist(const Eigen::VectorXd& weights, MonteCarloSettings mc = {});

    static EigenChiSquareDist from_gamma(const GammaMatrix& gamma, MonteCarloSettings mc = {});

    const Eigen::VectorXd& weights() const noexcept { return weights_; }
    const MonteCarloSettings& settings() const noexcept { return mc_; }

private:
    Eigen::VectorXd weights_;  // nonincreasing
    MonteCarloSettings mc_;
};

// Seeded Monte Carlo estimate of P(Q > observed).
double quad_form_pvalue(const EigenChiSquareDist& dist, double observed);

// Average over whitened coordinates of m4 / 3: estimates 4 h''(0).
double elliptical_scale_plugin(const Dataset& whitened);

}  // namespace mslca
