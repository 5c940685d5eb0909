#include "mslca/asymptotics.hpp"
#include "mslca/distributions.hpp"
#include "mslca/errors.hpp"
#include "mslca/simulate.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mslca;
using namespace mslca::testing;

namespace {

// Y^{m,r}(x) = beta_r^T Z(x) beta_m written as x^T A x (A symmetric).
Eigen::MatrixXd y_form(const CovarianceModel& white, const Eigen::VectorXd& bm, const Eigen::VectorXd& br) {
    const BlockStructure& s = white.structure();
    const Index q = s.dim();
    Eigen::MatrixXd off = Eigen::MatrixXd::Ones(q, q);
    for (Index k = 0; k < s.blocks(); ++k) off.block(s.offset(k), s.offset(k), s.size(k), s.size(k)).setZero();
    const Eigen::MatrixXd on = Eigen::MatrixXd::Ones(q, q) - off;
    const Eigen::MatrixXd psi = white.matrix().entries.cwiseProduct(off);
    const Eigen::MatrixXd m = off.cwiseProduct(br * bm.transpose()) -
                              0.5 * on.cwiseProduct(br * (psi * bm).transpose()) -
                              0.5 * on.cwiseProduct((psi * br) * bm.transpose());
    return 0.5 * (m + m.transpose());
}

// Gaussian x ~ N(0, V): E[x^T A x x^T B x] = 2 tr(AVBV) + tr(AV) tr(BV).
double isserlis_c(const CovarianceModel& white, const Eigen::MatrixXd& basis, Index m, Index r, Index s, Index t) {
    const Eigen::MatrixXd& v = white.matrix().entries;
    const Eigen::MatrixXd a = y_form(white, basis.col(m), basis.col(r));
    const Eigen::MatrixXd b = y_form(white, basis.col(s), basis.col(t));
    return 2.0 * (a * v * b * v).trace() + (a * v).trace() * (b * v).trace();
}

// Mean of Y^{m,r} Y^{s,t} over the whitened sample, through z_operator.
double brute_force_c(const MomentAccumulator& acc, const Eigen::MatrixXd& basis, const CovarianceModel& white,
                     Index m, Index r, Index s, Index t) {
    const auto& y = acc.whitened().rows;
    double sum = 0.0;
    for (Index i = 0; i < y.rows(); ++i) {
        const BlockMatrix z = z_operator(BlockVector(acc.structure(), y.row(i).transpose()), white);
        sum += basis.col(r).dot(z.entries * basis.col(m)) * basis.col(t).dot(z.entries * basis.col(s));
    }
    return sum / static_cast<double>(y.rows());
}

CovarianceModel simple_three_scalar() {
    Eigen::Matrix3d v;
    v << 1, 0.6, 0.3, 0.6, 1, 0.1, 0.3, 0.1, 1;
    return scalar_model(v);
}

// Composite Simpson integral of the chi-square density on [0, x], after
// u = v^2 so the integrand is smooth at the origin.
double chi2_cdf_quadrature(double x, double dof) {
    const int n = 20000;
    const double top = std::sqrt(x);
    const double h = top / n;
    auto f = [dof](double v) {
        if (v <= 0.0) return dof == 1.0 ? 2.0 / (std::sqrt(2.0) * std::tgamma(0.5)) : 0.0;
        const double u = v * v;
        return 2.0 * v *
               std::exp((dof / 2.0 - 1.0) * std::log(u) - u / 2.0 - (dof / 2.0) * std::log(2.0) - std::lgamma(dof / 2.0));
    };
    double sum = f(0.0) + f(top);
    for (int i = 1; i < n; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(i * h);
    return sum * h / 3.0;
}

}  // namespace

TEST(ZOperator, Examples) {
    const CovarianceModel id(BlockStructure({2, 1}), Eigen::Matrix3d::Identity());
    const Eigen::Vector3d x(1.5, -2, 0.5);
    const BlockMatrix z = z_operator(BlockVector(id.structure(), x), id);
    EXPECT_TRUE(z.block(0, 1).isApprox(x.head(2) * x.tail(1).transpose(), 0.0));
    EXPECT_TRUE(z.block(0, 0).isZero(0.0));

    const double r = 0.4, a = 1.3, b = -0.7;
    Eigen::Matrix2d v;
    v << 1, r, r, 1;
    const CovarianceModel m = scalar_model(v);
    const BlockMatrix z2 = z_operator(BlockVector(m.structure(), Eigen::Vector2d(a, b)), m);
    EXPECT_NEAR(z2.entries(0, 1), a * b - 0.5 * (a * a * r + r * b * b), 1e-15);
    EXPECT_EQ(z2.entries(1, 0), z2.entries(0, 1));

    const CovarianceModel raw(BlockStructure({1, 1}), (Eigen::Matrix2d() << 2, 0.1, 0.1, 1).finished());
    EXPECT_THROW(z_operator(BlockVector(raw.structure(), Eigen::Vector2d(1, 1)), raw), Error);
}

TEST(ZOperator, MeanZeroOverLargeSample) {
    const CovarianceModel white = whitened_model(simple_three_scalar());
    const Index n = 100000;
    const Dataset data = sample_gaussian(white, n, 41);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(3, 3), sq = Eigen::MatrixXd::Zero(3, 3);
    for (Index i = 0; i < n; ++i) {
        const Eigen::MatrixXd z = z_operator(BlockVector(white.structure(), data.rows.row(i).transpose()), white).entries;
        sum += z;
        sq += z.cwiseProduct(z);
    }
    const Eigen::MatrixXd mean = sum / n;
    const Eigen::MatrixXd se = ((sq / n - mean.cwiseProduct(mean)) / n).cwiseSqrt();
    for (Index a = 0; a < 3; ++a)
        for (Index b = a + 1; b < 3; ++b) EXPECT_LT(std::abs(mean(a, b)), 3.0 * se(a, b));
}

TEST(FourthMoment, GaussianValues) {
    const CovarianceModel id(BlockStructure({1, 1, 1, 1}), Eigen::Matrix4d::Identity());
    const MomentAccumulator acc(sample_gaussian(id, 200000, 42));
    const auto& y = acc.whitened().rows;
    auto se_of = [&](Index a, Index b, Index c, Index d) {
        const Eigen::ArrayXd p = y.col(a).array() * y.col(b).array() * y.col(c).array() * y.col(d).array();
        return std::sqrt((p - p.mean()).square().mean() / static_cast<double>(y.rows()));
    };
    EXPECT_LT(std::abs(acc.fourth_moment(0, 1, 2, 3)), 4.0 * se_of(0, 1, 2, 3));
    EXPECT_LT(std::abs(acc.fourth_moment(1, 1, 1, 1) - 3.0), 4.0 * se_of(1, 1, 1, 1));
    EXPECT_LT(std::abs(acc.fourth_moment(0, 0, 2, 2) - 1.0), 4.0 * se_of(0, 0, 2, 2));
    EXPECT_NEAR(acc.fourth_moment(0, 1, 2, 3), acc.fourth_moment(3, 2, 1, 0), 1e-15);
    EXPECT_THROW(acc.fourth_moment(0, 1, 2, 4), ShapeError);
}

TEST(FourthMoment, SampleIsWhitened) {
    Gen g(43);
    const MomentAccumulator acc(sample_gaussian(random_model({2, 3}, g), 500, 1));
    const CovarianceModel& m2 = acc.second_moments();
    for (Index k = 0; k < 2; ++k)
        EXPECT_TRUE(m2.block(k, k).isApprox(Eigen::MatrixXd::Identity(m2.block(k, k).rows(), m2.block(k, k).rows()), 1e-9));
}

TEST(GammaIndex, OrderAndDegrees) {
    const BlockStructure s({2, 1, 2});
    const auto idx = gamma_index(s);
    ASSERT_EQ(idx.size(), 2u + 4u + 2u);
    EXPECT_EQ(idx[0].k, 1);
    EXPECT_EQ(idx[0].l, 0);
    EXPECT_EQ(idx[0].i, 0);
    EXPECT_EQ(idx[0].j, 0);
    EXPECT_EQ(idx[1].j, 1);  // p_1 = 1, so the second entry moves j
    EXPECT_EQ(idx[2].k, 2);
    EXPECT_EQ(idx[2].l, 0);
    EXPECT_EQ(idx[3].i, 1);  // i runs fastest
    EXPECT_EQ(idx[3].j, 0);
    EXPECT_EQ(idx[6].l, 1);
    EXPECT_EQ(degrees_of_freedom(BlockStructure({1, 1})), 1);
    EXPECT_EQ(degrees_of_freedom(BlockStructure({2, 2, 2})), 12);
    EXPECT_EQ(degrees_of_freedom(BlockStructure({3, 2})), 6);
}

TEST(BuildGamma, EntriesMatchFourthMoments) {
    Gen g(44);
    const MomentAccumulator acc(sample_gaussian(random_model({2, 1, 2}, g), 300, 2));
    const GammaMatrix gm = build_gamma(acc);
    const BlockStructure& s = acc.structure();
    const auto d = static_cast<Index>(gm.index.size());
    ASSERT_EQ(gm.matrix.rows(), d);
    EXPECT_EQ(gm.matrix, gm.matrix.transpose());
    for (Index u = 0; u < d; ++u) {
        for (Index v = 0; v < d; ++v) {
            const auto& a = gm.index[static_cast<std::size_t>(u)];
            const auto& b = gm.index[static_cast<std::size_t>(v)];
            const double expected = acc.fourth_moment(s.offset(a.k) + a.i, s.offset(b.k) + b.i, s.offset(a.l) + a.j,
                                                      s.offset(b.l) + b.j);
            EXPECT_NEAR(gm.matrix(u, v), expected, 1e-12);
        }
    }
    EXPECT_GE(sym_eig(gm.matrix).values.minCoeff(), -1e-8);
}

TEST(BuildGamma, GaussianNullIsIdentity) {
    const CovarianceModel id(BlockStructure({2, 2, 2}), Eigen::MatrixXd::Identity(6, 6));
    const GammaMatrix gm = build_gamma(MomentAccumulator(sample_gaussian(id, 100000, 3)));
    EXPECT_LT((gm.matrix - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff(), 0.05);

    const CovarianceModel two(BlockStructure({1, 1}), Eigen::Matrix2d::Identity());
    const GammaMatrix g1 = build_gamma(MomentAccumulator(sample_gaussian(two, 100000, 4)));
    ASSERT_EQ(g1.matrix.rows(), 1);
    EXPECT_NEAR(g1.matrix(0, 0), 1.0, 0.03);
}

TEST(BuildGamma, StudentTDiagonal) {
    const CovarianceModel id(BlockStructure({2, 2}), Eigen::MatrixXd::Identity(4, 4));
    const GammaMatrix gm = build_gamma(MomentAccumulator(sample_student_t(id, 10.0, 400000, 5)));
    for (Index i = 0; i < gm.matrix.rows(); ++i) EXPECT_NEAR(gm.matrix(i, i), 4.0 / 3.0, 0.06);
}

TEST(CoefficientTable, MatchesStreamingAndBruteForce) {
    const CovarianceModel model = simple_three_scalar();
    const CovarianceModel white = whitened_model(model);
    const MslcaSolution sol = solve_mslca(model);
    const MomentAccumulator acc(sample_gaussian(model, 2000, 6));
    const CoefficientTable table(acc, sol.beta, white);
    for (Index m = 0; m < 3; ++m)
        for (Index r = 0; r < 3; ++r)
            for (Index s = 0; s < 3; ++s)
                for (Index t = 0; t < 3; ++t) {
                    const double c = table(m, r, s, t);
                    EXPECT_NEAR(c, c_coefficient(acc, sol, white, m, r, s, t), 1e-10);
                    EXPECT_NEAR(c, brute_force_c(acc, sol.beta, white, m, r, s, t), 1e-10);
                    EXPECT_NEAR(c, table(r, m, s, t), 1e-9);
                    EXPECT_NEAR(c, table(m, r, t, s), 1e-9);
                    EXPECT_NEAR(c, table(s, t, m, r), 1e-9);
                }
    EXPECT_THROW(table(0, 0, 0, 3), ShapeError);
}

TEST(CoefficientTable, BlockVectorModelsProperty) {
    Gen g(45);
    for (int trial = 0; trial < 5; ++trial) {
        const CovarianceModel model = random_model(random_dims(g, 6, 3, 3), g, 0.6);
        const CovarianceModel white = whitened_model(model);
        const MslcaSolution sol = solve_mslca(model);
        const MomentAccumulator acc(sample_gaussian(model, 300, static_cast<std::uint64_t>(trial)));
        const CoefficientTable table(acc, sol.beta, white);
        const Index q = table.dim();
        std::uniform_int_distribution<Index> id(0, q - 1);
        for (int pick = 0; pick < 20; ++pick) {
            const Index m = id(g), r = id(g), s = id(g), t = id(g);
            EXPECT_NEAR(table(m, r, s, t), brute_force_c(acc, sol.beta, white, m, r, s, t), 1e-10);
        }
    }
}

TEST(CoefficientTable, NullModelReducesToLambda) {
    const CovarianceModel id(BlockStructure({2, 1, 1}), Eigen::Matrix4d::Identity());
    Gen g(46);
    const Eigen::MatrixXd basis = Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian_matrix(4, 4, g)).householderQ();
    const MomentAccumulator acc(sample_gaussian(id, 500, 7));
    const CoefficientTable table(acc, basis, id);
    for (Index m = 0; m < 4; ++m)
        for (Index s = 0; s < 4; ++s) {
            EXPECT_EQ(table.gamma_term(m, 1, s, 2), 0.0);
            EXPECT_EQ(table.theta_term(m, 1, s, 2), 0.0);
            EXPECT_NEAR(table(m, 1, s, 2), table.lambda_term(m, 1, s, 2), 1e-14);
        }
}

TEST(CoefficientTable, PlugInApproachesGaussianPopulationValue) {
    const CovarianceModel model = simple_three_scalar();
    const CovarianceModel white = whitened_model(model);
    const MslcaSolution sol = solve_mslca(model);
    const MomentAccumulator acc(sample_gaussian(model, 400000, 8));
    const CoefficientTable table(acc, sol.beta, white);
    double worst = 0.0, scale = 0.0;
    for (Index m = 0; m < 3; ++m)
        for (Index r = 0; r < 3; ++r)
            for (Index s = 0; s < 3; ++s)
                for (Index t = 0; t < 3; ++t) {
                    const double exact = isserlis_c(white, sol.beta, m, r, s, t);
                    worst = std::max(worst, std::abs(table(m, r, s, t) - exact));
                    scale = std::max(scale, std::abs(exact));
                }
    EXPECT_LT(worst, 0.03 * scale);
}

TEST(SigmaMatrix, BasisChoiceDoesNotMatter) {
    const CovarianceModel model = simple_three_scalar();
    const CovarianceModel white = whitened_model(model);
    const MslcaSolution sol = solve_mslca(model);
    const MomentAccumulator acc(sample_gaussian(model, 3000, 9));
    const Eigen::MatrixXd in_beta = sigma_matrix(CoefficientTable(acc, sol.beta, white), sol);
    const Eigen::MatrixXd in_e = sigma_matrix(CoefficientTable(acc, Eigen::Matrix3d::Identity(), white), sol);
    EXPECT_LE((in_beta - in_e).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((in_beta - in_beta.transpose()).cwiseAbs().maxCoeff(), 1e-9);
    for (Index j = 0; j < 3; ++j) {
        EXPECT_GE(in_beta(j, j), 0.0);
        // With C in the eigenbasis, sigma_jj is the (j,j,j,j) coefficient.
        const CoefficientTable t(acc, sol.beta, white);
        EXPECT_NEAR(in_beta(j, j), t(j, j, j, j), 1e-10);
    }
}

TEST(SigmaMatrix, MatchesGaussianPopulationValue) {
    const CovarianceModel model = simple_three_scalar();
    const CovarianceModel white = whitened_model(model);
    const MslcaSolution sol = solve_mslca(model);
    const Eigen::MatrixXd sigma =
        sigma_matrix(CoefficientTable(MomentAccumulator(sample_gaussian(model, 400000, 10)), sol.beta, white), sol);
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 3; ++j) {
            const double exact = isserlis_c(white, sol.beta, i, i, j, j);
            EXPECT_NEAR(sigma(i, j), exact, 0.03 * std::max(1.0, std::abs(exact)));
        }
}

TEST(SigmaMatrix, RepeatedEigenvaluesRejected) {
    const CovarianceModel model = equicorrelation(3, 0.5);
    const MslcaSolution sol = solve_mslca(model);
    const MomentAccumulator acc(sample_gaussian(model, 200, 11));
    EXPECT_THROW(sigma_matrix(CoefficientTable(acc, sol.beta, whitened_model(model)), sol), RepeatedEigenvalues);
}

TEST(EigenChiSquareDist, WeightHandling) {
    EXPECT_THROW(EigenChiSquareDist(Eigen::Vector3d(1, -1e-6, 0.5)), NegativeWeight);
    const EigenChiSquareDist d(Eigen::Vector3d(0.5, -1e-10, 2.0));
    EXPECT_EQ(d.weights(), Eigen::Vector3d(2.0, 0.5, 0.0));
}

TEST(QuadFormPvalue, Examples) {
    const EigenChiSquareDist ones(Eigen::VectorXd::Ones(12), {200000, 1});
    EXPECT_EQ(quad_form_pvalue(ones, 0.0), 1.0);
    EXPECT_NEAR(quad_form_pvalue(ones, 21.0261), 0.05, 0.005);
    EXPECT_EQ(quad_form_pvalue(ones, 15.0), quad_form_pvalue(ones, 15.0));

    const double lambda = 2.5, x = 4.0;
    const double p = quad_form_pvalue(EigenChiSquareDist(Eigen::VectorXd::Constant(1, lambda), {200000, 2}), x);
    const double expected = 1.0 - chi2_cdf(x / lambda, 1.0);
    EXPECT_NEAR(p, expected, 3.0 * std::sqrt(expected * (1 - expected) / 200000));
}

TEST(QuadFormPvalue, EqualWeightsFollowChiSquareGrid) {
    const Index d = 5;
    const EigenChiSquareDist dist(Eigen::VectorXd::Ones(d), {200000, 3});
    for (double u : {0.1, 0.25, 0.5, 0.75, 0.9, 0.99}) {
        // Bisection for the chi-square quantile.
        double lo = 0.0, hi = 100.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (chi2_cdf(mid, d) < u ? lo : hi) = mid;
        }
        const double p = quad_form_pvalue(dist, lo);
        EXPECT_NEAR(p, 1.0 - u, 3.0 * std::sqrt(u * (1 - u) / 200000)) << u;
    }
}

TEST(ChiSquare, CdfMatchesQuadrature) {
    EXPECT_NEAR(chi2_cdf_quadrature(21.0261, 12), 0.95, 1e-5);
    EXPECT_NEAR(chi2_cdf(21.0261, 12), 0.95, 1e-5);
    for (double dof : {1.0, 3.0, 4.0, 12.0})
        for (double x : {0.5, 2.0, 7.5, 20.0}) EXPECT_NEAR(chi2_cdf(x, dof), chi2_cdf_quadrature(x, dof), 1e-9);
    EXPECT_NEAR(chi2_cdf(3.0, 4) + chi2_sf(3.0, 4), 1.0, 1e-15);
}

TEST(KsDistance, SmallSamples) {
    EXPECT_NEAR(ks_uniform({0.5}), 0.5, 1e-15);
    EXPECT_NEAR(ks_uniform({0.25, 0.75}), 0.25, 1e-15);
    EXPECT_NEAR(ks_distance({1.0, 2.0, 3.0}, [](double x) { return x / 4.0; }), 0.25, 1e-15);
}

TEST(EllipticalScalePlugin, Examples) {
    Eigen::MatrixXd pm(40, 2);
    for (Index i = 0; i < 40; ++i) pm.row(i) << (i % 2 ? 1.0 : -1.0), (i % 4 < 2 ? 1.0 : -1.0);
    EXPECT_NEAR(elliptical_scale_plugin(Dataset(BlockStructure({1, 1}), pm)), 1.0 / 3.0, 1e-15);
    EXPECT_THROW(elliptical_scale_plugin(Dataset(BlockStructure({1, 1}), pm.topRows(29))), InsufficientSample);

    const CovarianceModel id(BlockStructure({2, 2}), Eigen::Matrix4d::Identity());
    EXPECT_NEAR(elliptical_scale_plugin(whiten(sample_gaussian(id, 200000, 12))), 1.0, 0.02);
    EXPECT_NEAR(elliptical_scale_plugin(whiten(sample_student_t(id, 10.0, 400000, 13))), 4.0 / 3.0, 0.06);
}
