// Command-line front end: fit, test, simulate.
//
// Exit codes: 0 ok, 1 internal error, 2 bad input or flags, 3 near-singular
// covariance block, 4 simulation plan precondition violated.

#include "mslca/errors.hpp"
#include "mslca/io.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <iostream>

namespace {

using namespace mslca;

enum Exit { kOk = 0, kInternal = 1, kBadInput = 2, kNearSingular = 3, kPlan = 4 };

struct DataFlags {
    std::string data;
    std::string blocks;
    std::string out;
    double group_tol = 1e-8;
    double cond_floor = kDefaultCondFloor;
};

void add_data_flags(CLI::App& cmd, DataFlags& f) {
    cmd.add_option("--data", f.data, "CSV file, one observation per row")->required();
    cmd.add_option("--blocks", f.blocks, "block sizes, e.g. 2,3,2")->required();
    cmd.add_option("--out", f.out, "JSON output path")->required();
    cmd.add_option("--group-tol", f.group_tol, "relative tolerance for equal eigenvalues");
    cmd.add_option("--cond-floor", f.cond_floor, "minimum eigenvalue ratio of covariance blocks");
}

void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

int run_fit(const DataFlags& f) {
    const Dataset data = load_dataset(f.data, parse_block_spec(f.blocks));
    const MslcaFit fit = fit_mslca(data, {f.group_tol, f.cond_floor});
    write_json(f.out, fit_json(fit));
    return kOk;
}

struct TestFlags {
    std::string method = "chi2";
    std::string scale;
    double alpha = 0.05;
    std::int64_t mc_reps = 200000;
    std::uint64_t seed = 0;
};

ScaleSpec parse_scale(const std::string& s) {
    if (s.empty() || s == "gaussian") return GaussianScale{};
    if (s == "plugin") return PluginScale{};
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw InputError("--scale: expected gaussian, plugin or a number");
    if (!(v > 0.0) || !std::isfinite(v)) throw InputError("--scale must be positive");
    return ExplicitScale{v};
}

int run_test(const DataFlags& f, const TestFlags& t) {
    if (t.method != "chi2" && t.method != "general") throw InputError("--method must be chi2 or general");
    if (t.method == "general" && !t.scale.empty()) throw InputError("--scale applies to --method chi2 only");
    if (!(t.alpha > 0.0 && t.alpha < 1.0)) throw InputError("--alpha must lie in (0, 1)");
    if (t.mc_reps < 1) throw InputError("--mc-reps must be positive");
    const ScaleSpec scale = parse_scale(t.scale);

    const Dataset data = load_dataset(f.data, parse_block_spec(f.blocks));
    const MslcaFit fit = fit_mslca(data, {f.group_tol, f.cond_floor});
    const TestReport report = t.method == "chi2"
                                  ? test_chi2(fit, data, scale, t.alpha, f.cond_floor)
                                  : test_general(fit, data, t.alpha, {t.mc_reps, t.seed}, f.cond_floor);
    Json j = report_json(report);
    const Json fj = fit_json(fit);
    for (const char* key : {"rho", "beta", "alpha_directions"}) j[key] = fj[key];
    write_json(f.out, j);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "nS=" << Json(report.ns).dump() << " d=" << report.d << " p=" << Json(report.p_value).dump()
              << " reject=" << (report.reject ? "true" : "false") << "\n";
    return kOk;
}

int run_simulate(const std::string& config, const std::string& out) {
    SimulationPlan plan = read_plan(config);
    if (!out.empty()) plan.output = out;
    if (plan.output.empty()) throw InputError("no output path: pass --out or set \"output\"");
    const ExperimentResult result = run_experiment(plan);
    write_json(plan.output, result_json(result));
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multiple-set linear canonical analysis and a test of mutual non-correlation"};
    app.require_subcommand(1);

    DataFlags fit_flags;
    auto* fit = app.add_subcommand("fit", "estimate canonical coefficients and directions");
    add_data_flags(*fit, fit_flags);

    DataFlags test_data;
    TestFlags test_flags;
    auto* test = app.add_subcommand("test", "test mutual non-correlation of the blocks");
    add_data_flags(*test, test_data);
    test->add_option("--method", test_flags.method, "chi2 or general");
    test->add_option("--scale", test_flags.scale, "gaussian, plugin or a positive number (chi2 only)");
    test->add_option("--alpha", test_flags.alpha, "significance level");
    test->add_option("--mc-reps", test_flags.mc_reps, "Monte Carlo draws for the general route");
    test->add_option("--seed", test_flags.seed, "Monte Carlo seed");

    std::string config;
    std::string sim_out;
    auto* sim = app.add_subcommand("simulate", "run a Monte Carlo experiment from a JSON config");
    sim->add_option("--config", config, "flat JSON plan")->required();
    sim->add_option("--out", sim_out, "JSON output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kBadInput;
    }

    try {
        if (*fit) return run_fit(fit_flags);
        if (*test) return run_test(test_data, test_flags);
        return run_simulate(config, sim_out);
    } catch (const NearSingular& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNearSingular;
    } catch (const PlanError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kPlan;
    } catch (const NuTooSmall& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kPlan;
    } catch (const RepeatedEigenvalues& e) {
        std::cerr << "error: " << e.what() << "\n";
        return *sim ? kPlan : kBadInput;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kBadInput;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInternal;
    }
}
