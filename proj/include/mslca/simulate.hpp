#pragma once

// Samplers and seeded Monte Carlo experiments checking the large-sample
// behaviour of the empirical MSLCA and of the non-correlation test.

#include "mslca/asymptotics.hpp"
#include "mslca/estimation.hpp"
#include "mslca/noncorr_test.hpp"
#include "mslca/population.hpp"
#include "mslca/random.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mslca {

enum class SamplerKind { Gaussian, StudentT };
enum class ExperimentKind { Consistency, CltCheck, CoeffClt, NullDist, Power };

std::string to_string(SamplerKind k);
std::string to_string(ExperimentKind k);

// Draws rows V^{1/2} g (Gaussian) or sqrt((nu-2)/nu) V^{1/2} g / sqrt(w/nu)
// with w ~ chi2_nu (Student t); both have covariance V.
class MultivariateSampler {
public:
    MultivariateSampler(const CovarianceModel& model, SamplerKind kind, double nu = 0.0);

    Dataset draw(Index n, Rng& rng) const;

private:
    BlockStructure structure_;
    SamplerKind kind_;
    double nu_;
    Eigen::MatrixXd root_;
};

Dataset sample_gaussian(const CovarianceModel& model, Index n, std::uint64_t seed);
// Throws NuTooSmall unless nu > 4.
Dataset sample_student_t(const CovarianceModel& model, double nu, Index n, std::uint64_t seed);

struct SimulationPlan {
    CovarianceModel model;
    ExperimentKind kind = ExperimentKind::Consistency;
    SamplerKind sampler = SamplerKind::Gaussian;
    double nu = 0.0;
    std::vector<Index> sizes;
    Index replications = 1;
    std::uint64_t seed = 0;
    std::string output;

    // Test experiments (null-dist, power).
    std::vector<double> alphas{0.05};
    std::vector<TestMethod> methods{TestMethod::Chi2};
    ScaleSpec scale = GaussianScale{};
    std::int64_t mc_draws = 200000;

    // clt-check: fresh draws of Z; coeff-clt: sample size for the plug-in sigma.
    std::int64_t z_draws = 200000;
    Index sigma_sample = 1000000;

    double group_tol = 1e-8;
    double cond_floor = kDefaultCondFloor;
};

// Throws PlanError (or NuTooSmall) for plans that cannot run.
void validate(const SimulationPlan& plan);

struct Record {
    Index n;
    Index replication;
    std::vector<double> values;  // ordered as ExperimentResult::fields
};

struct SizeSummary {
    Index n;
    std::map<std::string, double> stats;
};

struct ExperimentResult {
    SimulationPlan plan;
    std::vector<std::string> fields;
    std::vector<Record> records;  // size-major, then replication
    std::vector<SizeSummary> per_size;
    std::map<std::string, double> overall;
    std::map<std::string, Eigen::MatrixXd> matrices;
    double wall_seconds = 0.0;

    // Column of one field across the replications of size index `size_index`.
    std::vector<double> column(std::size_t size_index, const std::string& field) const;
};

ExperimentResult run_consistency(const SimulationPlan& plan);
ExperimentResult run_clt_check(const SimulationPlan& plan);
ExperimentResult run_coeff_clt(const SimulationPlan& plan);
ExperimentResult run_null_dist(const SimulationPlan& plan);
ExperimentResult run_power(const SimulationPlan& plan);

ExperimentResult run_experiment(const SimulationPlan& plan);

// 4h''(0) of the plan's sampler: 1 for Gaussian, (nu-2)/(nu-4) for Student t.
double true_elliptical_scale(const SimulationPlan& plan);

}  // namespace mslca
