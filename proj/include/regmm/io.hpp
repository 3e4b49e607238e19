#pragma once

#include "regmm/harness.hpp"
#include "regmm/measures.hpp"
#include "regmm/potential.hpp"
#include "regmm/solver.hpp"

#include <json.hpp>

#include <string>

namespace regmm {

using Json = nlohmann::ordered_json;

/// Parses JSON text; syntax errors are reported with line and column.
Json parse_json(const std::string& text, const std::string& source);
Json read_json_file(const std::string& path);

/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

/// Pretty-printed JSON with a trailing newline.
std::string dump(const Json& j);

/// {"dim", "points", "weights"}. Field errors name the offending entry.
DiscreteMeasure measure_from_json(const Json& j);
Json to_json(const DiscreteMeasure& m);

/// {"dim", "support", "phi", "logZ", "alpha"}.
Json potential_to_json(const Potential& p, double log_z, double alpha);
Potential potential_from_json(const Json& j);

/// Stored form of a solve: the documented keys plus the quadrature settings,
/// moments and warnings needed to re-evaluate it.
Json report_to_json(const SolveReport& r);

struct StoredReport {
  double alpha = 1.0;
  DiscreteMeasure target;
  Vector phi;
  double log_z = 0.0;
  Vector cell_masses;
  double residual_linf = 0.0;
  int iterations = 0;
  bool converged = false;
  double radius = 0.0;
  int resolution = 512;
};

StoredReport report_from_json(const Json& j);

/// Unknown keys are rejected.
ExperimentConfig experiment_from_json(const Json& j);
Json to_json(const ExperimentConfig& cfg);

}  // namespace regmm
