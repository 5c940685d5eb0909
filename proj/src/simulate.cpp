#include "mslca/simulate.hpp"

#include "mslca/distributions.hpp"
#include "mslca/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

namespace mslca {

namespace {

// Stream paths: replications use {size index, replication}; auxiliary draws
// use three-element paths so they never collide with replication streams.
constexpr std::uint64_t kZStreamTag = 0x5a;
constexpr std::uint64_t kSigmaStreamTag = 0x51;
constexpr Index kAuxChunk = 4096;

double median(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v) {
    if (v.size() < 2) return std::nan("");
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

double rate_below(const std::vector<double>& v, double alpha) {
    double hits = 0.0;
    for (double x : v) hits += x < alpha ? 1.0 : 0.0;
    return hits / static_cast<double>(v.size());
}

std::string alpha_key(const std::string& prefix, double alpha) {
    std::ostringstream os;
    os << prefix << '@' << alpha;
    return os.str();
}

Eigen::MatrixXd column_covariance(const Eigen::MatrixXd& m) {
    const Eigen::MatrixXd c = m.rowwise() - m.colwise().mean();
    return (c.transpose() * c) / static_cast<double>(m.rows() - 1);
}

using ReplicationFn = std::function<std::vector<double>(std::size_t size_index, Index n, Rng& rng)>;

ExperimentResult run_replications(const SimulationPlan& plan, std::vector<std::string> fields,
                                  const ReplicationFn& fn) {
    ExperimentResult result{plan, std::move(fields), {}, {}, {}, {}, 0.0};
    const auto reps = static_cast<std::size_t>(plan.replications);
    const std::size_t total = plan.sizes.size() * reps;
    result.records.resize(total, Record{0, 0, {}});
    parallel_for(total, [&](std::size_t task) {
        const std::size_t si = task / reps;
        const std::size_t r = task % reps;
        Rng rng = make_stream(plan.seed, {static_cast<std::uint64_t>(si), static_cast<std::uint64_t>(r)});
        const Index n = plan.sizes[si];
        result.records[task] = Record{n, static_cast<Index>(r), fn(si, n, rng)};
    });
    for (Index n : plan.sizes) result.per_size.push_back(SizeSummary{n, {}});
    return result;
}

std::vector<std::pair<Index, Index>> cross_block_entries(const BlockStructure& s) {
    std::vector<std::pair<Index, Index>> entries;
    for (Index a = 0; a < s.dim(); ++a) {
        for (Index b = a + 1; b < s.dim(); ++b) {
            if (s.block_of(a) != s.block_of(b)) entries.emplace_back(a, b);
        }
    }
    return entries;
}

MultivariateSampler sampler_for(const SimulationPlan& plan) {
    return MultivariateSampler(plan.model, plan.sampler, plan.nu);
}

template <typename Clock>
double seconds_since(typename Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

std::string to_string(SamplerKind k) {
    return k == SamplerKind::Gaussian ? "gaussian" : "student-t";
}

std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Consistency: return "consistency";
        case ExperimentKind::CltCheck: return "clt-check";
        case ExperimentKind::CoeffClt: return "coeff-clt";
        case ExperimentKind::NullDist: return "null-dist";
        case ExperimentKind::Power: return "power";
    }
    return "unknown";
}

MultivariateSampler::MultivariateSampler(const CovarianceModel& model, SamplerKind kind, double nu)
    : structure_(model.structure()), kind_(kind), nu_(nu) {
    if (kind == SamplerKind::StudentT && !(nu > 4.0))
        throw NuTooSmall("student-t sampler needs nu > 4 for finite fourth moments");
    const SymmetricEig eig = sym_eig(model.matrix());
    const double scale = 1.0 + model.matrix().entries.cwiseAbs().maxCoeff();
    if (eig.values(eig.values.size() - 1) < -1e-10 * scale)
        throw Error("sampler: covariance is not positive semidefinite");
    const Eigen::VectorXd root = eig.values.cwiseMax(0.0).cwiseSqrt();
    root_ = eig.vectors * root.asDiagonal() * eig.vectors.transpose();
}

Dataset MultivariateSampler::draw(Index n, Rng& rng) const {
    const Index q = structure_.dim();
    std::normal_distribution<double> normal;
    Eigen::MatrixXd g(n, q);
    if (kind_ == SamplerKind::Gaussian) {
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < q; ++j) g(i, j) = normal(rng);
    } else {
        std::chi_squared_distribution<double> chi2(nu_);
        const double adjust = std::sqrt((nu_ - 2.0) / nu_);
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < q; ++j) g(i, j) = normal(rng);
            const double w = chi2(rng);
            g.row(i) *= adjust / std::sqrt(w / nu_);
        }
    }
    // root_ is symmetric, so row i becomes (V^{1/2} g_i)^T.
    return Dataset(structure_, g * root_);
}

Dataset sample_gaussian(const CovarianceModel& model, Index n, std::uint64_t seed) {
    Rng rng = make_stream(seed, {});
    return MultivariateSampler(model, SamplerKind::Gaussian).draw(n, rng);
}

Dataset sample_student_t(const CovarianceModel& model, double nu, Index n, std::uint64_t seed) {
    Rng rng = make_stream(seed, {});
    return MultivariateSampler(model, SamplerKind::StudentT, nu).draw(n, rng);
}

double true_elliptical_scale(const SimulationPlan& plan) {
    return plan.sampler == SamplerKind::Gaussian ? 1.0 : (plan.nu - 2.0) / (plan.nu - 4.0);
}

std::vector<double> ExperimentResult::column(std::size_t size_index, const std::string& field) const {
    const auto it = std::find(fields.begin(), fields.end(), field);
    if (it == fields.end()) throw Error("unknown result field: " + field);
    const auto f = static_cast<std::size_t>(it - fields.begin());
    const auto reps = static_cast<std::size_t>(plan.replications);
    std::vector<double> out;
    out.reserve(reps);
    for (std::size_t r = 0; r < reps; ++r) out.push_back(records[size_index * reps + r].values[f]);
    return out;
}

void validate(const SimulationPlan& plan) {
    if (plan.replications < 1) throw PlanError("replications must be >= 1");
    if (plan.sizes.empty()) throw PlanError("at least one sample size is required");
    for (Index n : plan.sizes) {
        if (n < 2) throw PlanError("sample sizes must be >= 2");
    }
    if (plan.sampler == SamplerKind::StudentT && !(plan.nu > 4.0))
        throw NuTooSmall("student-t sampler needs nu > 4 for finite fourth moments");
    if (plan.alphas.empty()) throw PlanError("at least one alpha level is required");
    for (double a : plan.alphas) {
        if (!(a > 0.0 && a < 1.0)) throw PlanError("alpha levels must lie in (0, 1)");
    }
    if (plan.methods.empty()) throw PlanError("at least one test method is required");
    if (plan.mc_draws < 1 || plan.z_draws < 2 || plan.sigma_sample < 30)
        throw PlanError("Monte Carlo sizes are too small");
    if (const auto* e = std::get_if<ExplicitScale>(&plan.scale); e && !(e->value > 0.0))
        throw PlanError("scale must be positive");
    try {
        plan.model.validate(plan.cond_floor);
    } catch (const Error& e) {
        throw PlanError(std::string("invalid model: ") + e.what());
    }
    switch (plan.kind) {
        case ExperimentKind::CltCheck: {
            const BlockStructure& s = plan.model.structure();
            for (Index k = 0; k < s.blocks(); ++k) {
                if (!plan.model.block(k, k).isIdentity(1e-12))
                    throw PlanError("clt-check needs a whitened model (identity diagonal blocks)");
            }
            break;
        }
        case ExperimentKind::NullDist:
            if (!plan.model.mutually_uncorrelated())
                throw PlanError("null-dist needs a model with zero cross-covariance blocks");
            break;
        case ExperimentKind::CoeffClt:
            if (!solve_mslca(plan.model, {plan.group_tol, plan.cond_floor}).simple_spectrum())
                throw RepeatedEigenvalues("coeff-clt needs a model with simple canonical coefficients");
            break;
        default:
            break;
    }
}

ExperimentResult run_consistency(const SimulationPlan& plan) {
    const auto start = std::chrono::steady_clock::now();
    validate(plan);
    const SolveOptions opts{plan.group_tol, plan.cond_floor};
    const MslcaSolution pop = solve_mslca(plan.model, opts);
    const BlockMatrix t = build_t(plan.model, plan.cond_floor);
    const MultivariateSampler sampler = sampler_for(plan);
    const Index q = plan.model.structure().dim();

    std::vector<std::string> fields{"t_error"};
    for (Index j = 0; j < q; ++j) fields.push_back("rho_error_" + std::to_string(j));
    for (Index j = 0; j < q; ++j) fields.push_back("beta_error_" + std::to_string(j));

    ExperimentResult result = run_replications(plan, fields, [&](std::size_t, Index n, Rng& rng) {
        const MslcaFit fit = fit_mslca(sampler.draw(n, rng), opts);
        std::vector<double> v{(fit.that.entries - t.entries).norm()};
        for (Index j = 0; j < q; ++j) v.push_back(std::abs(fit.solution.rho(j) - pop.rho(j)));
        std::vector<double> beta_err(static_cast<std::size_t>(q));
        for (const auto& g : pop.groups) {
            if (g.indices.size() == 1) {
                const Index j = g.indices.front();
                beta_err[static_cast<std::size_t>(j)] =
                    (align_sign(fit.solution.beta.col(j), pop.beta.col(j)) - pop.beta.col(j)).norm();
            } else {
                const Index first = g.indices.front();
                const auto width = static_cast<Index>(g.indices.size());
                const double gap = projector_gap(fit.solution.beta.middleCols(first, width),
                                                 pop.beta.middleCols(first, width));
                for (Index j : g.indices) beta_err[static_cast<std::size_t>(j)] = gap;
            }
        }
        v.insert(v.end(), beta_err.begin(), beta_err.end());
        return v;
    });

    for (std::size_t si = 0; si < plan.sizes.size(); ++si) {
        for (const auto& f : result.fields) result.per_size[si].stats["median_" + f] = median(result.column(si, f));
    }
    for (std::size_t si = 0; si + 1 < plan.sizes.size(); ++si) {
        result.overall["t_error_ratio_" + std::to_string(si)] =
            result.per_size[si].stats["median_t_error"] / result.per_size[si + 1].stats["median_t_error"];
    }
    result.wall_seconds = seconds_since<std::chrono::steady_clock>(start);
    return result;
}

ExperimentResult run_clt_check(const SimulationPlan& plan) {
    const auto start = std::chrono::steady_clock::now();
    validate(plan);
    const SolveOptions opts{plan.group_tol, plan.cond_floor};
    const BlockStructure& s = plan.model.structure();
    const BlockMatrix t = build_t(plan.model, plan.cond_floor);
    const MultivariateSampler sampler = sampler_for(plan);
    const auto entries = cross_block_entries(s);

    std::vector<std::string> fields;
    for (const auto& [a, b] : entries) fields.push_back("t_" + std::to_string(a) + "_" + std::to_string(b));
    fields.push_back("max_diagonal_block_entry");

    ExperimentResult result = run_replications(plan, fields, [&](std::size_t, Index n, Rng& rng) {
        const MslcaFit fit = fit_mslca(sampler.draw(n, rng), opts);
        const double root_n = std::sqrt(static_cast<double>(n));
        std::vector<double> v;
        for (const auto& [a, b] : entries) v.push_back(root_n * (fit.that.entries(a, b) - t.entries(a, b)));
        double diag = 0.0;
        for (Index k = 0; k < s.blocks(); ++k) diag = std::max(diag, fit.that.block(k, k).cwiseAbs().maxCoeff());
        v.push_back(diag);
        return v;
    });

    // Fresh single draws of Z(x).
    const auto m = static_cast<Index>(entries.size());
    const Index z_total = plan.z_draws;
    Eigen::MatrixXd z_entries(z_total, m);
    const auto chunks = static_cast<std::size_t>((z_total + kAuxChunk - 1) / kAuxChunk);
    parallel_for(chunks, [&](std::size_t c) {
        Rng rng = make_stream(plan.seed, {kZStreamTag, 0, static_cast<std::uint64_t>(c)});
        const Index begin = static_cast<Index>(c) * kAuxChunk;
        const Index rows = std::min(kAuxChunk, z_total - begin);
        const Dataset x = sampler.draw(rows, rng);
        for (Index i = 0; i < rows; ++i) {
            const BlockMatrix z = z_operator(BlockVector(s, x.rows.row(i).transpose()), plan.model);
            for (Index e = 0; e < m; ++e) {
                const auto& [a, b] = entries[static_cast<std::size_t>(e)];
                z_entries(begin + i, e) = z.entries(a, b);
            }
        }
    });
    const Eigen::MatrixXd cov_z = column_covariance(z_entries);
    result.matrices["cov_z"] = cov_z;

    double max_diag = 0.0;
    for (std::size_t si = 0; si < plan.sizes.size(); ++si) {
        Eigen::MatrixXd scaled(plan.replications, m);
        for (Index e = 0; e < m; ++e) {
            const auto col = result.column(si, fields[static_cast<std::size_t>(e)]);
            scaled.col(e) = Eigen::Map<const Eigen::VectorXd>(col.data(), static_cast<Index>(col.size()));
        }
        const auto diag = result.column(si, "max_diagonal_block_entry");
        max_diag = std::max(max_diag, *std::max_element(diag.begin(), diag.end()));
        const Eigen::MatrixXd cov_t =
            plan.replications > 1 ? column_covariance(scaled) : Eigen::MatrixXd::Constant(m, m, std::nan(""));
        result.matrices["cov_t_" + std::to_string(si)] = cov_t;
        auto& st = result.per_size[si].stats;
        st["relative_discrepancy"] = (cov_t - cov_z).norm() / cov_z.norm();
        st["max_diagonal_relative_discrepancy"] =
            ((cov_t.diagonal() - cov_z.diagonal()).array() / cov_z.diagonal().array()).abs().maxCoeff();
    }
    result.overall["max_diagonal_block_entry"] = max_diag;
    result.wall_seconds = seconds_since<std::chrono::steady_clock>(start);
    return result;
}

ExperimentResult run_coeff_clt(const SimulationPlan& plan) {
    const auto start = std::chrono::steady_clock::now();
    validate(plan);
    const SolveOptions opts{plan.group_tol, plan.cond_floor};
    const MslcaSolution pop = solve_mslca(plan.model, opts);
    const CovarianceModel white = whitened_model(plan.model, plan.cond_floor);
    const MultivariateSampler sampler = sampler_for(plan);
    const Index q = plan.model.structure().dim();

    std::vector<std::string> fields;
    for (Index j = 0; j < q; ++j) fields.push_back("scaled_rho_error_" + std::to_string(j));
    fields.push_back("sort_violations");

    ExperimentResult result = run_replications(plan, fields, [&](std::size_t, Index n, Rng& rng) {
        const MslcaFit fit = fit_mslca(sampler.draw(n, rng), opts);
        const double root_n = std::sqrt(static_cast<double>(n));
        std::vector<double> v;
        for (Index j = 0; j < q; ++j) v.push_back(root_n * (fit.solution.rho(j) - pop.rho(j)));
        double violations = 0.0;
        for (Index j = 0; j + 1 < q; ++j) violations += fit.solution.rho(j) < fit.solution.rho(j + 1) ? 1.0 : 0.0;
        v.push_back(violations);
        return v;
    });

    Rng rng = make_stream(plan.seed, {kSigmaStreamTag, 0, 0});
    const MomentAccumulator acc(sampler.draw(plan.sigma_sample, rng), plan.cond_floor);
    const CoefficientTable table(acc, pop.beta, white);
    const Eigen::MatrixXd sigma = sigma_matrix(table, pop);
    result.matrices["sigma"] = sigma;

    double violations = 0.0;
    for (std::size_t si = 0; si < plan.sizes.size(); ++si) {
        auto& st = result.per_size[si].stats;
        for (Index j = 0; j < q; ++j) {
            const auto col = result.column(si, fields[static_cast<std::size_t>(j)]);
            const double var = sample_variance(col);
            st["mean_" + std::to_string(j)] = mean(col);
            st["variance_" + std::to_string(j)] = var;
            st["sigma_" + std::to_string(j)] = sigma(j, j);
            st["variance_ratio_" + std::to_string(j)] = var / sigma(j, j);
        }
        for (double x : result.column(si, "sort_violations")) violations += x;
    }
    result.overall["sort_violations"] = violations;
    result.wall_seconds = seconds_since<std::chrono::steady_clock>(start);
    return result;
}

namespace {

bool has_method(const SimulationPlan& plan, TestMethod m) {
    return std::find(plan.methods.begin(), plan.methods.end(), m) != plan.methods.end();
}

ExperimentResult run_test_replications(const SimulationPlan& plan) {
    const SolveOptions opts{plan.group_tol, plan.cond_floor};
    const MultivariateSampler sampler = sampler_for(plan);
    const bool chi2 = has_method(plan, TestMethod::Chi2);
    const bool general = has_method(plan, TestMethod::General);

    std::vector<std::string> fields{"ns", "plugin_scale"};
    if (chi2) fields.push_back("p_chi2");
    if (general) fields.push_back("p_general");

    const double alpha = plan.alphas.front();
    return run_replications(plan, fields, [&](std::size_t, Index n, Rng& rng) {
        const Dataset data = sampler.draw(n, rng);
        const std::uint64_t mc_seed = rng();
        const MslcaFit fit = fit_mslca(data, opts);
        std::vector<double> v{static_cast<double>(n) * s_statistic(fit.that),
                              elliptical_scale_plugin(whiten(data, plan.cond_floor))};
        if (chi2) v.push_back(test_chi2(fit, data, plan.scale, alpha, plan.cond_floor).p_value);
        if (general)
            v.push_back(test_general(fit, data, alpha, {plan.mc_draws, mc_seed}, plan.cond_floor).p_value);
        return v;
    });
}

}  // namespace

ExperimentResult run_null_dist(const SimulationPlan& plan) {
    const auto start = std::chrono::steady_clock::now();
    validate(plan);
    ExperimentResult result = run_test_replications(plan);
    const double d = static_cast<double>(degrees_of_freedom(plan.model.structure()));
    const double scale = true_elliptical_scale(plan);
    result.overall["d"] = d;
    result.overall["true_scale"] = scale;

    for (std::size_t si = 0; si < plan.sizes.size(); ++si) {
        auto& st = result.per_size[si].stats;
        std::vector<double> ns = result.column(si, "ns");
        st["mean_ns"] = mean(ns);
        st["variance_ns"] = sample_variance(ns);
        st["mean_plugin_scale"] = mean(result.column(si, "plugin_scale"));
        for (double& x : ns) x /= scale;
        st["ks_chi2"] = ks_distance(ns, [d](double x) { return chi2_cdf(x, d); });
        for (const char* method : {"chi2", "general"}) {
            const std::string field = std::string("p_") + method;
            if (std::find(result.fields.begin(), result.fields.end(), field) == result.fields.end()) continue;
            const auto p = result.column(si, field);
            st[std::string("ks_uniform_") + field] = ks_uniform(p);
            for (double a : plan.alphas) st[alpha_key(std::string("size_") + method, a)] = rate_below(p, a);
        }
    }
    result.wall_seconds = seconds_since<std::chrono::steady_clock>(start);
    return result;
}

ExperimentResult run_power(const SimulationPlan& plan) {
    const auto start = std::chrono::steady_clock::now();
    validate(plan);
    ExperimentResult result = run_test_replications(plan);
    for (std::size_t si = 0; si < plan.sizes.size(); ++si) {
        auto& st = result.per_size[si].stats;
        st["mean_ns"] = mean(result.column(si, "ns"));
        for (const char* method : {"chi2", "general"}) {
            const std::string field = std::string("p_") + method;
            if (std::find(result.fields.begin(), result.fields.end(), field) == result.fields.end()) continue;
            const auto p = result.column(si, field);
            for (double a : plan.alphas) st[alpha_key(std::string("rejection_") + method, a)] = rate_below(p, a);
        }
    }
    result.wall_seconds = seconds_since<std::chrono::steady_clock>(start);
    return result;
}

ExperimentResult run_experiment(const SimulationPlan& plan) {
    switch (plan.kind) {
        case ExperimentKind::Consistency: return run_consistency(plan);
        case ExperimentKind::CltCheck: return run_clt_check(plan);
        case ExperimentKind::CoeffClt: return run_coeff_clt(plan);
        case ExperimentKind::NullDist: return run_null_dist(plan);
        case ExperimentKind::Power: return run_power(plan);
    }
    throw Error("unknown experiment kind");
}

}  // namespace mslca
