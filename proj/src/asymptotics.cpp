#include "mslca/asymptotics.hpp"

#include "mslca/errors.hpp"
#include "mslca/random.hpp"

#include <algorithm>
#include <cmath>

namespace mslca {

namespace {

void require_whitened_model(const CovarianceModel& model) {
    const BlockStructure& s = model.structure();
    for (Index k = 0; k < s.blocks(); ++k) {
        const Eigen::MatrixXd vk = model.block(k, k);
        if (!vk.isApprox(Eigen::MatrixXd::Identity(vk.rows(), vk.cols()), 1e-8))
            throw Error("model is not whitened: diagonal block " + std::to_string(k) + " differs from identity");
    }
}

// Per-observation factors behind the gamma/theta/lambda sums. For one
// observation y and basis B:
//   G_ab = sum_{k != l} <y_k, B_k e_a> <y_k, V_kl B_l e_b>
//   L_ab = sum_{k != l} <y_k, B_k e_a> <y_l, B_l e_b>
class ProjectionFactors {
public:
    ProjectionFactors(const BlockStructure& s, const Eigen::MatrixXd& basis, const CovarianceModel& model)
        : s_(s), basis_(basis), psi_basis_(build_psi(model).entries * basis) {}

    Index width() const { return basis_.cols(); }

    void compute(const Eigen::Ref<const Eigen::RowVectorXd>& y, Eigen::MatrixXd& g, Eigen::MatrixXd& l) const {
        const Index p = basis_.cols();
        g.setZero(p, p);
        Eigen::RowVectorXd total = Eigen::RowVectorXd::Zero(p);
        Eigen::MatrixXd own = Eigen::MatrixXd::Zero(p, p);
        for (Index k = 0; k < s_.blocks(); ++k) {
            const auto yk = y.segment(s_.offset(k), s_.size(k));
            const Eigen::RowVectorXd u = yk * basis_.middleRows(s_.offset(k), s_.size(k));
            const Eigen::RowVectorXd w = yk * psi_basis_.middleRows(s_.offset(k), s_.size(k));
            g.noalias() += u.transpose() * w;
            own.noalias() += u.transpose() * u;
            total += u;
        }
        l = total.transpose() * total - own;
    }

private:
    const BlockStructure& s_;
    Eigen::MatrixXd basis_;
    Eigen::MatrixXd psi_basis_;
};

void check_basis(const MomentAccumulator& acc, const Eigen::MatrixXd& basis, const CovarianceModel& model) {
    if (basis.rows() != acc.structure().dim()) throw ShapeError("basis length does not match structure");
    if (!(model.structure() == acc.structure())) throw ShapeError("model structure does not match sample");
    require_whitened_model(model);
}

}  // namespace

BlockMatrix z_operator(const BlockVector& x, const CovarianceModel& model) {
    const BlockStructure& s = model.structure();
    if (!(x.structure == s)) throw ShapeError("z_operator: vector structure does not match model");
    require_whitened_model(model);
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(s.dim(), s.dim());
    for (Index k = 0; k < s.blocks(); ++k) {
        for (Index l = k + 1; l < s.blocks(); ++l) {
            const Eigen::VectorXd xk = x.block(k);
            const Eigen::VectorXd xl = x.block(l);
            const Eigen::MatrixXd vkl = model.block(k, l);
            const Eigen::MatrixXd b =
                xk * xl.transpose() - 0.5 * (xk * (xk.transpose() * vkl) + (vkl * xl) * xl.transpose());
            z.block(s.offset(k), s.offset(l), s.size(k), s.size(l)) = b;
            z.block(s.offset(l), s.offset(k), s.size(l), s.size(k)) = b.transpose();
        }
    }
    return BlockMatrix(s, std::move(z), true);
}

MomentAccumulator::MomentAccumulator(const Dataset& raw, double cond_floor)
    : whitened_(whiten(raw, cond_floor)), second_(empirical_cov(whitened_)) {}

double MomentAccumulator::fourth_moment(Index a, Index b, Index c, Index d) const {
    const Index q = structure().dim();
    for (Index i : {a, b, c, d}) {
        if (i < 0 || i >= q) throw ShapeError("fourth_moment: coordinate out of range");
    }
    const auto& y = whitened_.rows;
    return (y.col(a).array() * y.col(b).array() * y.col(c).array() * y.col(d).array()).mean();
}

std::vector<PairCoordinate> gamma_index(const BlockStructure& s) {
    std::vector<PairCoordinate> index;
    for (Index k = 1; k < s.blocks(); ++k) {
        for (Index l = 0; l < k; ++l) {
            for (Index j = 0; j < s.size(l); ++j) {
                for (Index i = 0; i < s.size(k); ++i) index.push_back({k, l, i, j});
            }
        }
    }
    return index;
}

Index degrees_of_freedom(const BlockStructure& s) {
    Index d = 0;
    for (Index k = 1; k < s.blocks(); ++k) {
        for (Index l = 0; l < k; ++l) d += s.size(k) * s.size(l);
    }
    return d;
}

GammaMatrix build_gamma(const MomentAccumulator& acc) {
    const BlockStructure& s = acc.structure();
    GammaMatrix out{Eigen::MatrixXd::Zero(0, 0), gamma_index(s)};
    const Index d = static_cast<Index>(out.index.size());
    const auto& y = acc.whitened().rows;

    // Column c holds y_{k,i} y_{l,j} for coordinate c; Gamma = F^T F / n.
    Eigen::MatrixXd products(y.rows(), d);
    for (Index c = 0; c < d; ++c) {
        const PairCoordinate& pc = out.index[static_cast<std::size_t>(c)];
        products.col(c) = y.col(s.offset(pc.k) + pc.i).cwiseProduct(y.col(s.offset(pc.l) + pc.j));
    }
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d, d);
    g.selfadjointView<Eigen::Lower>().rankUpdate(products.transpose(), 1.0 / static_cast<double>(y.rows()));
    g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
    out.matrix = std::move(g);
    return out;
}

CoefficientTable::CoefficientTable(const MomentAccumulator& acc, const Eigen::MatrixXd& basis,
                                   const CovarianceModel& model)
    : p_(basis.cols()), basis_(basis) {
    check_basis(acc, basis, model);
    const ProjectionFactors factors(acc.structure(), basis, model);
    const Index p2 = p_ * p_;
    gg_ = Eigen::MatrixXd::Zero(p2, p2);
    gl_ = Eigen::MatrixXd::Zero(p2, p2);
    ll_ = Eigen::MatrixXd::Zero(p2, p2);

    const auto& y = acc.whitened().rows;
    constexpr Index kChunk = 4096;
    Eigen::MatrixXd gs(kChunk, p2);
    Eigen::MatrixXd ls(kChunk, p2);
    Eigen::MatrixXd g, l;
    for (Index start = 0; start < y.rows(); start += kChunk) {
        const Index rows = std::min(kChunk, y.rows() - start);
        for (Index i = 0; i < rows; ++i) {
            factors.compute(y.row(start + i), g, l);
            gs.row(i) = Eigen::Map<const Eigen::RowVectorXd>(g.data(), p2);
            ls.row(i) = Eigen::Map<const Eigen::RowVectorXd>(l.data(), p2);
        }
        gg_.noalias() += gs.topRows(rows).transpose() * gs.topRows(rows);
        gl_.noalias() += gs.topRows(rows).transpose() * ls.topRows(rows);
        ll_.noalias() += ls.topRows(rows).transpose() * ls.topRows(rows);
    }
    const double inv_n = 1.0 / static_cast<double>(y.rows());
    gg_ *= inv_n;
    gl_ *= inv_n;
    ll_ *= inv_n;
}

// Column-major vec: G_ab sits at a + b * p.
double CoefficientTable::gamma_term(Index a, Index b, Index c, Index d) const {
    return 0.25 * gg_(a + b * p_, c + d * p_);
}

double CoefficientTable::theta_term(Index a, Index b, Index c, Index d) const {
    return 0.5 * gl_(a + b * p_, c + d * p_);
}

double CoefficientTable::lambda_term(Index a, Index b, Index c, Index d) const {
    return ll_(a + b * p_, c + d * p_);
}

double CoefficientTable::operator()(Index m, Index r, Index s, Index t) const {
    for (Index i : {m, r, s, t}) {
        if (i < 0 || i >= p_) throw ShapeError("coefficient index out of range");
    }
    return gamma_term(m, r, s, t) + gamma_term(m, r, t, s) + gamma_term(r, m, s, t) + gamma_term(r, m, t, s) -
           theta_term(m, r, s, t) - theta_term(r, m, s, t) - theta_term(s, t, m, r) - theta_term(t, s, m, r) +
           lambda_term(m, r, s, t);
}

double c_coefficient(const MomentAccumulator& acc, const Eigen::MatrixXd& basis, const CovarianceModel& model,
                     Index m, Index r, Index s, Index t) {
    check_basis(acc, basis, model);
    for (Index i : {m, r, s, t}) {
        if (i < 0 || i >= basis.cols()) throw ShapeError("coefficient index out of range");
    }
    const ProjectionFactors factors(acc.structure(), basis, model);
    const auto& y = acc.whitened().rows;
    Eigen::MatrixXd g, l;
    double sum = 0.0;
    for (Index i = 0; i < y.rows(); ++i) {
        factors.compute(y.row(i), g, l);
        sum += 0.25 * (g(m, r) * g(s, t) + g(m, r) * g(t, s) + g(r, m) * g(s, t) + g(r, m) * g(t, s)) -
               0.5 * (g(m, r) * l(s, t) + g(r, m) * l(s, t) + g(s, t) * l(m, r) + g(t, s) * l(m, r)) +
               l(m, r) * l(s, t);
    }
    return sum / static_cast<double>(y.rows());
}

double c_coefficient(const MomentAccumulator& acc, const MslcaSolution& solution, const CovarianceModel& model,
                     Index m, Index r, Index s, Index t) {
    return c_coefficient(acc, solution.beta, model, m, r, s, t);
}

Eigen::MatrixXd sigma_matrix(const CoefficientTable& table, const MslcaSolution& solution) {
    if (!solution.simple_spectrum())
        throw RepeatedEigenvalues("sigma_matrix requires simple eigenvalues");
    const Index p = table.dim();
    const Eigen::MatrixXd& b = table.basis();
    if (b.rows() != p || !(b.transpose() * b).isApprox(Eigen::MatrixXd::Identity(p, p), 1e-8))
        throw ShapeError("sigma_matrix: coefficient basis must be orthonormal and complete");
    if (solution.beta.rows() != p) throw ShapeError("sigma_matrix: dimension mismatch");

    const Eigen::MatrixXd coords = b.transpose() * solution.beta;
    const Index q = coords.cols();
    Eigen::MatrixXd c(p * p, p * p);
    for (Index t = 0; t < p; ++t)
        for (Index s = 0; s < p; ++s)
            for (Index r = 0; r < p; ++r)
                for (Index m = 0; m < p; ++m) c(m + r * p, s + t * p) = table(m, r, s, t);

    Eigen::MatrixXd outer(p * p, q);
    for (Index i = 0; i < q; ++i) {
        const Eigen::MatrixXd o = coords.col(i) * coords.col(i).transpose();
        outer.col(i) = Eigen::Map<const Eigen::VectorXd>(o.data(), p * p);
    }
    Eigen::MatrixXd sigma = outer.transpose() * c * outer;
    return 0.5 * (sigma + sigma.transpose());
}

EigenChiSquareDist::EigenChiSquareDist(const Eigen::VectorXd& weights, MonteCarloSettings mc)
    : weights_(weights), mc_(mc) {
    if (mc_.draws < 1) throw Error("Monte Carlo draw count must be positive");
    for (Index i = 0; i < weights_.size(); ++i) {
        if (!std::isfinite(weights_(i))) throw NegativeWeight("non-finite quadratic-form weight");
        if (weights_(i) < -1e-8) throw NegativeWeight("quadratic-form weight " + std::to_string(weights_(i)) + " < -1e-8");
        weights_(i) = std::max(0.0, weights_(i));
    }
    std::sort(weights_.data(), weights_.data() + weights_.size(), std::greater<>());
}

EigenChiSquareDist EigenChiSquareDist::from_gamma(const GammaMatrix& gamma, MonteCarloSettings mc) {
    return EigenChiSquareDist(sym_eig(gamma.matrix).values, mc);
}

double quad_form_pvalue(const EigenChiSquareDist& dist, double observed) {
    if (std::isnan(observed)) throw Error("quad_form_pvalue: observed value is NaN");
    if (observed <= 0.0) return 1.0;

    std::vector<double> w;
    for (Index i = 0; i < dist.weights().size(); ++i) {
        if (dist.weights()(i) > 0.0) w.push_back(dist.weights()(i));
    }
    if (w.empty()) return 0.0;

    constexpr std::int64_t kChunk = 8192;
    const std::int64_t draws = dist.settings().draws;
    const auto chunks = static_cast<std::size_t>((draws + kChunk - 1) / kChunk);
    std::vector<std::int64_t> exceed(chunks, 0);
    parallel_for(chunks, [&](std::size_t c) {
        Rng rng = make_stream(dist.settings().seed, {static_cast<std::uint64_t>(c)});
        std::normal_distribution<double> normal;
        const std::int64_t begin = static_cast<std::int64_t>(c) * kChunk;
        const std::int64_t end = std::min(draws, begin + kChunk);
        std::int64_t count = 0;
        for (std::int64_t i = begin; i < end; ++i) {
            double q = 0.0;
            for (double wi : w) {
                const double z = normal(rng);
                q += wi * z * z;
            }
            if (q > observed) ++count;
        }
        exceed[c] = count;
    });
    std::int64_t total = 0;
    for (auto e : exceed) total += e;
    return static_cast<double>(total) / static_cast<double>(draws);
}

double elliptical_scale_plugin(const Dataset& whitened) {
    if (whitened.n() < 30) throw InsufficientSample("elliptical_scale_plugin needs at least 30 observations");
    const Eigen::ArrayXXd y = whitened.rows.array();
    return (y.square().square().colwise().mean() / 3.0).mean();
}

}  // namespace mslca
