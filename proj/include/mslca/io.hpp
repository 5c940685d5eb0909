#pragma once

// File formats: CSV data, JSON reports and the JSON simulation config.

#include "mslca/estimation.hpp"
#include "mslca/noncorr_test.hpp"
#include "mslca/simulate.hpp"

#include <json.hpp>

#include <string>

namespace mslca {

using Json = nlohmann::json;

// "2,3,2" -> dims {2, 3, 2}. Throws InputError.
BlockStructure parse_block_spec(const std::string& spec);

// Numeric CSV with an optional header row, detected when the first row is
// not entirely numeric. Quoted fields are accepted. Throws InputError naming
// the (1-based) row and column of the first bad cell.
Eigen::MatrixXd parse_csv(const std::string& text);
Eigen::MatrixXd read_csv(const std::string& path);

// Throws InputError when the column count disagrees with the blocks.
Dataset load_dataset(const std::string& path, const BlockStructure& structure);

Json matrix_json(const Eigen::MatrixXd& m);  // array of rows
Json vector_json(const Eigen::VectorXd& v);
Eigen::MatrixXd matrix_from_json(const Json& j);

Json fit_json(const MslcaFit& fit);
Json report_json(const TestReport& report);
Json plan_json(const SimulationPlan& plan);
// Everything but "metadata" is a deterministic function of the plan.
Json result_json(const ExperimentResult& result);

// Flat JSON object mirroring SimulationPlan. Throws InputError for anything
// that does not parse; plan preconditions are left to validate().
SimulationPlan plan_from_json(const Json& j);
SimulationPlan read_plan(const std::string& path);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace mslca
