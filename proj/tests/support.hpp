#pragma once

// Seeded generators and small oracles shared by the test binaries.

#include "mslca/population.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace mslca::testing {

using Gen = std::mt19937_64;

inline Eigen::MatrixXd gaussian_matrix(Index rows, Index cols, Gen& g) {
    std::normal_distribution<double> nd;
    Eigen::MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = nd(g);
    return m;
}

inline Eigen::MatrixXd random_symmetric(Index q, Gen& g) {
    const Eigen::MatrixXd a = gaussian_matrix(q, q, g);
    return 0.5 * (a + a.transpose());
}

// Well-conditioned SPD matrix: B B^T / q plus a ridge.
inline Eigen::MatrixXd random_spd(Index q, Gen& g, double ridge = 0.5) {
    const Eigen::MatrixXd b = gaussian_matrix(q, q, g);
    Eigen::MatrixXd a = b * b.transpose() / static_cast<double>(q);
    a.diagonal().array() += ridge;
    return 0.5 * (a + a.transpose());
}

// K in [2, max_blocks], sizes in [1, max_size], total at most max_q.
inline std::vector<Index> random_dims(Gen& g, Index max_q = 10, Index max_blocks = 4, Index max_size = 4) {
    std::uniform_int_distribution<Index> kd(2, max_blocks);
    std::uniform_int_distribution<Index> pd(1, max_size);
    for (;;) {
        std::vector<Index> dims(static_cast<std::size_t>(kd(g)));
        Index q = 0;
        for (auto& p : dims) q += (p = pd(g));
        if (q <= max_q) return dims;
    }
}

// Random SPD covariance; `mix` in [0, 1) scales the cross-block part.
inline CovarianceModel random_model(const std::vector<Index>& dims, Gen& g, double mix = 1.0) {
    const BlockStructure s(dims);
    Eigen::MatrixXd v = random_spd(s.dim(), g, 0.3);
    for (Index k = 0; k < s.blocks(); ++k)
        for (Index l = 0; l < s.blocks(); ++l)
            if (k != l) v.block(s.offset(k), s.offset(l), s.size(k), s.size(l)) *= mix;
    return CovarianceModel(s, v);
}

inline CovarianceModel scalar_model(const Eigen::MatrixXd& v) {
    return CovarianceModel(BlockStructure(std::vector<Index>(static_cast<std::size_t>(v.rows()), 1)), v);
}

inline CovarianceModel equicorrelation(Index k, double r) {
    Eigen::MatrixXd v = Eigen::MatrixXd::Constant(k, k, r);
    v.diagonal().setOnes();
    return scalar_model(v);
}

// Real roots of x^3 + a x^2 + b x + c (all three real), trigonometric form.
inline std::vector<double> cubic_roots(double a, double b, double c) {
    const double p = b - a * a / 3.0;
    const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    std::vector<double> roots;
    if (std::abs(p) < 1e-300) {
        const double r = std::cbrt(-q) - a / 3.0;
        return {r, r, r};
    }
    const double m = 2.0 * std::sqrt(-p / 3.0);
    const double arg = std::clamp(3.0 * q / (p * m), -1.0, 1.0);
    const double theta = std::acos(arg) / 3.0;
    for (int k = 0; k < 3; ++k) roots.push_back(m * std::cos(theta - 2.0 * M_PI * k / 3.0) - a / 3.0);
    std::sort(roots.rbegin(), roots.rend());
    return roots;
}

// Eigenvalues of a symmetric 3x3 matrix from its characteristic polynomial.
inline std::vector<double> charpoly_eigenvalues(const Eigen::Matrix3d& m) {
    const double tr = m.trace();
    const double minors = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0) + m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0) +
                          m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1);
    return cubic_roots(-tr, minors, -m.determinant());
}

}  // namespace mslca::testing
