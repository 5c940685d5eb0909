#include "mslca/io.hpp"

#include "mslca/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace mslca {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

bool parse_number(const std::string& cell, double& out) {
    const std::string t = trim(cell);
    if (t.empty()) return false;
    const char* begin = t.data();
    const char* end = t.data() + t.size();
    if (*begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, out, std::chars_format::general);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

// RFC-4180 records: comma separated, double quotes escape commas, newlines
// and "" inside a field.
std::vector<std::vector<std::string>> split_records(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    auto end_row = [&] {
        row.push_back(field);
        field.clear();
        const bool blank = row.size() == 1 && trim(row.front()).empty() && !any;
        if (!blank) records.push_back(row);
        row.clear();
        any = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(field);
            field.clear();
            any = true;
        } else if (c == '\n') {
            end_row();
        } else if (c == '\r') {
            if (i + 1 < text.size() && text[i + 1] == '\n') continue;
            end_row();
        } else {
            field += c;
        }
    }
    if (quoted) throw InputError("csv: unterminated quoted field");
    if (!field.empty() || !row.empty() || any) end_row();
    return records;
}

template <typename T>
T take(const Json& j, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw InputError("config: bad value for \"" + key + "\"");
    }
}

Index take_count(const Json& j, const std::string& key) {
    const Json& v = j.at(key);
    if (!v.is_number_integer()) throw InputError("config: \"" + key + "\" must be an integer");
    return v.get<Index>();
}

std::vector<Index> take_counts(const Json& j, const std::string& key) {
    const Json& v = j.at(key);
    if (!v.is_array()) throw InputError("config: \"" + key + "\" must be an array of integers");
    std::vector<Index> out;
    for (const Json& e : v) {
        if (!e.is_number_integer()) throw InputError("config: \"" + key + "\" must be an array of integers");
        out.push_back(e.get<Index>());
    }
    return out;
}

TestMethod parse_method(const std::string& s) {
    if (s == "chi2") return TestMethod::Chi2;
    if (s == "general") return TestMethod::General;
    throw InputError("unknown test method: " + s);
}

ExperimentKind parse_kind(const std::string& s) {
    for (ExperimentKind k : {ExperimentKind::Consistency, ExperimentKind::CltCheck, ExperimentKind::CoeffClt,
                             ExperimentKind::NullDist, ExperimentKind::Power}) {
        if (to_string(k) == s) return k;
    }
    throw InputError("config: unknown experiment \"" + s + "\"");
}

Json scale_json(const ScaleSpec& scale) {
    if (std::holds_alternative<GaussianScale>(scale)) return "gaussian";
    if (std::holds_alternative<PluginScale>(scale)) return "plugin";
    return std::get<ExplicitScale>(scale).value;
}

Json columns_json(const Eigen::MatrixXd& m) {
    Json out = Json::array();
    for (Index j = 0; j < m.cols(); ++j) out.push_back(vector_json(m.col(j)));
    return out;
}

}  // namespace

BlockStructure parse_block_spec(const std::string& spec) {
    std::vector<Index> dims;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const std::string t = trim(part);
        Index v = 0;
        const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || v < 1)
            throw InputError("blocks: \"" + spec + "\" is not a list of positive integers");
        dims.push_back(v);
    }
    if (!spec.empty() && spec.back() == ',') throw InputError("blocks: trailing comma in \"" + spec + "\"");
    if (dims.size() < 2) throw InputError("blocks: at least two blocks are required");
    return BlockStructure(std::move(dims));
}

Eigen::MatrixXd parse_csv(const std::string& text) {
    const auto records = split_records(text);
    if (records.empty()) throw InputError("csv: no data");
    std::size_t first = 0;
    double scratch = 0.0;
    if (!std::all_of(records[0].begin(), records[0].end(), [&](const std::string& c) { return parse_number(c, scratch); }))
        first = 1;
    if (first >= records.size()) throw InputError("csv: header row but no data");
    const std::size_t cols = records[first].size();
    Eigen::MatrixXd out(static_cast<Index>(records.size() - first), static_cast<Index>(cols));
    for (std::size_t r = first; r < records.size(); ++r) {
        if (records[r].size() != cols)
            throw InputError("csv: row " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                             " columns, expected " + std::to_string(cols));
        for (std::size_t c = 0; c < cols; ++c) {
            double v = 0.0;
            if (!parse_number(records[r][c], v))
                throw InputError("csv: non-numeric value \"" + records[r][c] + "\" at row " + std::to_string(r + 1) +
                                 ", column " + std::to_string(c + 1));
            out(static_cast<Index>(r - first), static_cast<Index>(c)) = v;
        }
    }
    return out;
}

Eigen::MatrixXd read_csv(const std::string& path) { return parse_csv(read_text(path)); }

Dataset load_dataset(const std::string& path, const BlockStructure& structure) {
    Eigen::MatrixXd rows = read_csv(path);
    if (rows.cols() != structure.dim())
        throw InputError("blocks sum to " + std::to_string(structure.dim()) + " but the csv has " +
                         std::to_string(rows.cols()) + " columns");
    return Dataset(structure, std::move(rows));
}

Json matrix_json(const Eigen::MatrixXd& m) {
    Json out = Json::array();
    for (Index i = 0; i < m.rows(); ++i) out.push_back(vector_json(m.row(i).transpose()));
    return out;
}

Json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::MatrixXd matrix_from_json(const Json& j) {
    if (!j.is_array() || j.empty()) throw InputError("matrix: expected a nonempty array of rows");
    const auto rows = static_cast<Index>(j.size());
    const auto cols = static_cast<Index>(j[0].is_array() ? j[0].size() : 0);
    Eigen::MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const Json& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Index>(row.size()) != cols)
            throw InputError("matrix: rows must be arrays of equal length");
        for (Index c = 0; c < cols; ++c) {
            const Json& e = row[static_cast<std::size_t>(c)];
            if (!e.is_number()) throw InputError("matrix: entries must be numbers");
            m(i, c) = e.get<double>();
        }
    }
    return m;
}

Json fit_json(const MslcaFit& fit) {
    const BlockStructure& s = fit.vhat.structure();
    Json out;
    out["n"] = fit.n;
    out["q"] = s.dim();
    out["blocks"] = s.dims();
    Json means = Json::array();
    for (Index k = 0; k < s.blocks(); ++k) means.push_back(vector_json(fit.means.block(k)));
    out["means"] = means;
    out["vhat"] = matrix_json(fit.vhat.matrix().entries);
    Json blocks = Json::array();
    for (Index k = 0; k < s.blocks(); ++k) {
        for (Index l = 0; l < s.blocks(); ++l)
            blocks.push_back({{"k", k}, {"l", l}, {"matrix", matrix_json(fit.vhat.block(k, l))}});
    }
    out["vhat_blocks"] = blocks;
    out["rho"] = vector_json(fit.solution.rho);
    out["beta"] = columns_json(fit.solution.beta);
    out["alpha_directions"] = columns_json(fit.solution.alpha);
    Json groups = Json::array();
    for (const auto& g : fit.solution.groups)
        groups.push_back({{"indices", g.indices}, {"value", g.value}, {"identifiable", g.identifiable}});
    out["groups"] = groups;
    const ConstraintDiagnostics c = verify_constraints(fit.vhat, fit.solution);
    const Index q = s.dim();
    out["diagnostics"] = {
        {"rho_sum", fit.solution.rho.sum()},
        {"trace_t", fit.that.entries.trace()},
        {"beta_orthonormality_error",
         (fit.solution.beta.transpose() * fit.solution.beta - Eigen::MatrixXd::Identity(q, q)).cwiseAbs().maxCoeff()},
        {"unit_variance_violation", c.unit_variance_violation},
        {"orthogonality_violation", c.orthogonality_violation},
        {"simple_spectrum", fit.solution.simple_spectrum()},
    };
    return out;
}

Json report_json(const TestReport& r) {
    Json out;
    out["n"] = r.n;
    out["d"] = r.d;
    out["S"] = r.s;
    out["nS"] = r.ns;
    out["method"] = to_string(r.method);
    out["scale"] = r.scale ? Json(*r.scale) : Json(nullptr);
    out["scale_provenance"] = r.scale_provenance;
    out["p_value"] = r.p_value;
    out["alpha"] = r.alpha;
    out["reject"] = r.reject;
    out["gamma_eigenvalues"] = vector_json(r.gamma_eigenvalues);
    out["mc"] = r.mc ? Json{{"draws", r.mc->draws}, {"seed", r.mc->seed}} : Json(nullptr);
    out["warnings"] = r.warnings;
    return out;
}

Json plan_json(const SimulationPlan& p) {
    Json out;
    out["experiment"] = to_string(p.kind);
    out["blocks"] = p.model.structure().dims();
    out["covariance"] = matrix_json(p.model.matrix().entries);
    out["sampler"] = to_string(p.sampler);
    out["nu"] = p.nu;
    out["sizes"] = p.sizes;
    out["replications"] = p.replications;
    out["seed"] = p.seed;
    out["output"] = p.output;
    out["alphas"] = p.alphas;
    Json methods = Json::array();
    for (TestMethod m : p.methods) methods.push_back(to_string(m));
    out["methods"] = methods;
    out["scale"] = scale_json(p.scale);
    out["mc_draws"] = p.mc_draws;
    out["z_draws"] = p.z_draws;
    out["sigma_sample"] = p.sigma_sample;
    out["group_tol"] = p.group_tol;
    out["cond_floor"] = p.cond_floor;
    return out;
}

Json result_json(const ExperimentResult& r) {
    Json out;
    out["plan"] = plan_json(r.plan);
    out["fields"] = r.fields;
    Json records = Json::array();
    for (const Record& rec : r.records)
        records.push_back({{"n", rec.n}, {"replication", rec.replication}, {"values", rec.values}});
    out["records"] = records;
    Json per_size = Json::array();
    for (const SizeSummary& s : r.per_size) per_size.push_back({{"n", s.n}, {"stats", s.stats}});
    out["summary"] = {{"per_size", per_size}, {"overall", r.overall}};
    Json matrices = Json::object();
    for (const auto& [name, m] : r.matrices) matrices[name] = matrix_json(m);
    out["matrices"] = matrices;
    out["metadata"] = {{"wall_seconds", r.wall_seconds},
                       {"threads", std::max(1u, std::thread::hardware_concurrency())},
                       {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                             "." + std::to_string(EIGEN_MINOR_VERSION)}};
    return out;
}

SimulationPlan plan_from_json(const Json& j) {
    static const std::set<std::string> known{
        "experiment", "blocks",  "covariance", "sampler",  "nu",      "sizes",        "replications",
        "seed",       "output",  "alphas",     "alpha",    "methods", "method",       "scale",
        "mc_draws",   "z_draws", "sigma_sample", "group_tol", "cond_floor"};
    if (!j.is_object()) throw InputError("config: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw InputError("config: unknown key \"" + key + "\"");
    }
    for (const char* key : {"experiment", "blocks", "sizes"}) {
        if (!j.contains(key)) throw InputError(std::string("config: missing \"") + key + "\"");
    }

    const std::vector<Index> dims = take_counts(j, "blocks");
    if (dims.size() < 2 || std::any_of(dims.begin(), dims.end(), [](Index p) { return p < 1; }))
        throw InputError("config: \"blocks\" needs at least two positive sizes");
    BlockStructure structure(dims);
    const Index q = structure.dim();

    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(q, q);
    if (j.contains("covariance")) {
        const Json& c = j.at("covariance");
        if (c.is_array() && !c.empty() && c[0].is_array()) {
            v = matrix_from_json(c);
        } else if (c.is_array() && static_cast<Index>(c.size()) == q * q) {
            for (Index i = 0; i < q * q; ++i) {
                const Json& e = c[static_cast<std::size_t>(i)];
                if (!e.is_number()) throw InputError("config: covariance entries must be numbers");
                v(i / q, i % q) = e.get<double>();
            }
        } else {
            throw InputError("config: \"covariance\" must be q rows or q*q row-major numbers");
        }
        if (v.rows() != q || v.cols() != q) throw InputError("config: covariance is not q x q");
    }

    std::optional<CovarianceModel> model;
    try {
        model.emplace(structure, v);
    } catch (const Error& e) {
        throw InputError(std::string("config: covariance: ") + e.what());
    }
    SimulationPlan plan{*model};
    plan.kind = parse_kind(take<std::string>(j, "experiment"));
    if (j.contains("sampler")) {
        const auto s = take<std::string>(j, "sampler");
        if (s == "gaussian") {
            plan.sampler = SamplerKind::Gaussian;
        } else if (s == "student-t" || s == "t") {
            plan.sampler = SamplerKind::StudentT;
        } else {
            throw InputError("config: unknown sampler \"" + s + "\"");
        }
    }
    if (j.contains("nu")) plan.nu = take<double>(j, "nu");
    if (plan.sampler == SamplerKind::StudentT && !j.contains("nu"))
        throw InputError("config: student-t sampler needs \"nu\"");
    plan.sizes = take_counts(j, "sizes");
    if (j.contains("replications")) plan.replications = take_count(j, "replications");
    if (j.contains("seed")) {
        const Json& s = j.at("seed");
        if (!s.is_number_unsigned()) throw InputError("config: \"seed\" must be a nonnegative integer");
        plan.seed = s.get<std::uint64_t>();
    }
    if (j.contains("output")) plan.output = take<std::string>(j, "output");
    if (j.contains("alphas")) plan.alphas = take<std::vector<double>>(j, "alphas");
    if (j.contains("alpha")) plan.alphas = {take<double>(j, "alpha")};
    if (j.contains("methods")) {
        plan.methods.clear();
        for (const auto& m : take<std::vector<std::string>>(j, "methods")) plan.methods.push_back(parse_method(m));
    }
    if (j.contains("method")) plan.methods = {parse_method(take<std::string>(j, "method"))};
    if (j.contains("scale")) {
        const Json& s = j.at("scale");
        if (s == "gaussian") {
            plan.scale = GaussianScale{};
        } else if (s == "plugin") {
            plan.scale = PluginScale{};
        } else if (s.is_number()) {
            plan.scale = ExplicitScale{s.get<double>()};
        } else {
            throw InputError("config: \"scale\" must be \"gaussian\", \"plugin\" or a number");
        }
    }
    if (j.contains("mc_draws")) plan.mc_draws = take_count(j, "mc_draws");
    if (j.contains("z_draws")) plan.z_draws = take_count(j, "z_draws");
    if (j.contains("sigma_sample")) plan.sigma_sample = take_count(j, "sigma_sample");
    if (j.contains("group_tol")) plan.group_tol = take<double>(j, "group_tol");
    if (j.contains("cond_floor")) plan.cond_floor = take<double>(j, "cond_floor");
    return plan;
}

SimulationPlan read_plan(const std::string& path) {
    Json j;
    try {
        j = Json::parse(read_text(path));
    } catch (const Json::parse_error& e) {
        throw InputError(std::string("config: ") + e.what());
    }
    return plan_from_json(j);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << text;
    if (!out) throw InputError("failed writing " + path);
}

}  // namespace mslca
