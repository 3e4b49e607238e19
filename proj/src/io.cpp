#include "regmm/io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

namespace regmm {
namespace {

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::InvalidMeasure, "field '" + field + "': " + what);
}

const Json& require_key(const Json& j, const std::string& key, const std::string& where) {
  if (!j.is_object()) field_error(where, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) field_error(where.empty() ? key : where + "." + key, "missing");
  return *it;
}

double number_at(const Json& j, const std::string& field) {
  if (!j.is_number()) field_error(field, "expected a number");
  return j.get<double>();
}

int integer_at(const Json& j, const std::string& field) {
  if (!j.is_number_integer()) field_error(field, "expected an integer");
  return j.get<int>();
}

Vector vector_at(const Json& j, const std::string& field) {
  if (!j.is_array()) field_error(field, "expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number_at(j[i], field + "[" + std::to_string(i) + "]");
  return v;
}

PointMatrix points_at(const Json& j, int dim, const std::string& field) {
  if (!j.is_array()) field_error(field, "expected an array of points");
  PointMatrix p(static_cast<Eigen::Index>(j.size()), dim);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string name = field + "[" + std::to_string(i) + "]";
    if (!j[i].is_array() || j[i].size() != static_cast<std::size_t>(dim)) {
      field_error(name, "expected " + std::to_string(dim) + " coordinates");
    }
    for (int k = 0; k < dim; ++k) p(static_cast<Eigen::Index>(i), k) = number_at(j[i][k], name + "[" + std::to_string(k) + "]");
  }
  return p;
}

Json array_of(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json array_of(const PointMatrix& p) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < p.cols(); ++k) row.push_back(p(i, k));
    a.push_back(std::move(row));
  }
  return a;
}

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw Error(ErrorCode::InvalidParams, "unknown key '" + it.key() + "' in " + where);
    }
  }
}

}  // namespace

Json parse_json(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw Error(ErrorCode::Io, source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": malformed JSON");
  }
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_json(buf.str(), path);
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::Io, "cannot replace '" + path + "': " + ec.message());
  }
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

DiscreteMeasure measure_from_json(const Json& j) {
  const int dim = integer_at(require_key(j, "dim", ""), "dim");
  if (dim != 1 && dim != 2) field_error("dim", "must be 1 or 2");
  PointMatrix points = points_at(require_key(j, "points", ""), dim, "points");
  Vector weights = vector_at(require_key(j, "weights", ""), "weights");
  if (weights.size() != points.rows()) field_error("weights", "length differs from points");
  return DiscreteMeasure(std::move(points), std::move(weights));
}

Json to_json(const DiscreteMeasure& m) {
  Json j;
  j["dim"] = m.dim();
  j["points"] = array_of(m.points());
  j["weights"] = array_of(m.weights());
  return j;
}

Json potential_to_json(const Potential& p, double log_z, double alpha) {
  Json j;
  j["dim"] = p.dim();
  j["support"] = array_of(p.support());
  j["phi"] = array_of(p.phi());
  j["logZ"] = log_z;
  j["alpha"] = alpha;
  return j;
}

Potential potential_from_json(const Json& j) {
  const int dim = integer_at(require_key(j, "dim", ""), "dim");
  if (dim != 1 && dim != 2) field_error("dim", "must be 1 or 2");
  PointMatrix support = points_at(require_key(j, "support", ""), dim, "support");
  Vector phi = vector_at(require_key(j, "phi", ""), "phi");
  if (phi.size() != support.rows()) field_error("phi", "length differs from support");
  return Potential(std::move(support), std::move(phi));
}

Json report_to_json(const SolveReport& r) {
  Json j;
  j["alpha"] = r.alpha;
  j["dim"] = r.target.dim();
  j["points"] = array_of(r.target.points());
  j["weights"] = array_of(r.target.weights());
  j["phi"] = array_of(r.potential.phi());
  j["logZ"] = r.log_z;
  j["cell_masses"] = array_of(r.cell_mass);
  j["residual_linf"] = r.residual_linf;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["radius"] = r.quadrature.radius;
  j["resolution"] = r.quadrature.resolution;
  j["barycenter"] = array_of(r.density_moments.barycenter);
  j["m2"] = r.density_moments.m2;
  j["dual_value"] = r.dual_value;
  Json warnings = Json::array();
  for (const std::string& w : r.warnings) warnings.push_back(w);
  j["warnings"] = std::move(warnings);
  return j;
}

StoredReport report_from_json(const Json& j) {
  int dim = 1;
  if (j.contains("dim")) dim = integer_at(j["dim"], "dim");
  if (dim != 1 && dim != 2) field_error("dim", "must be 1 or 2");
  PointMatrix points = points_at(require_key(j, "points", ""), dim, "points");
  Vector weights = vector_at(require_key(j, "weights", ""), "weights");
  if (weights.size() != points.rows()) field_error("weights", "length differs from points");
  StoredReport r{number_at(require_key(j, "alpha", ""), "alpha"),
                 DiscreteMeasure(std::move(points), std::move(weights)),
                 vector_at(require_key(j, "phi", ""), "phi"),
                 number_at(require_key(j, "logZ", ""), "logZ"),
                 vector_at(require_key(j, "cell_masses", ""), "cell_masses"),
                 number_at(require_key(j, "residual_linf", ""), "residual_linf"),
                 integer_at(require_key(j, "iterations", ""), "iterations"),
                 false,
                 0.0,
                 512};
  const Json& conv = require_key(j, "converged", "");
  if (!conv.is_boolean()) field_error("converged", "expected a boolean");
  r.converged = conv.get<bool>();
  if (r.phi.size() != r.target.size()) field_error("phi", "length differs from points");
  if (j.contains("radius")) r.radius = number_at(j["radius"], "radius");
  if (j.contains("resolution")) r.resolution = integer_at(j["resolution"], "resolution");
  return r;
}

ExperimentConfig experiment_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidParams, "experiment config must be an object");
  reject_unknown(j,
                 {"alpha", "dim", "family", "ladder", "tolerance", "grid_resolution", "tol_mass", "max_iter", "jobs",
                  "output"},
                 "experiment config");
  ExperimentConfig cfg;
  if (j.contains("alpha")) cfg.alpha = number_at(j["alpha"], "alpha");
  if (j.contains("dim")) cfg.dim = integer_at(j["dim"], "dim");
  const Json& fam = require_key(j, "family", "");
  reject_unknown(fam,
                 {"kind", "seed", "shifts", "splits", "cloud_count", "cloud_size", "radius", "max_m2",
                  "max_barycenter"},
                 "family");
  const Json& kind = require_key(fam, "kind", "family");
  if (!kind.is_string()) field_error("family.kind", "expected a string");
  cfg.family = family_kind_from_string(kind.get<std::string>());
  if (fam.contains("seed")) {
    if (!fam["seed"].is_number_unsigned()) field_error("family.seed", "expected a nonnegative integer");
    cfg.seed = fam["seed"].get<std::uint64_t>();
  }
  auto list = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  if (fam.contains("shifts")) cfg.params.shifts = list(vector_at(fam["shifts"], "family.shifts"));
  if (fam.contains("splits")) cfg.params.splits = list(vector_at(fam["splits"], "family.splits"));
  if (fam.contains("cloud_count")) cfg.params.cloud_count = integer_at(fam["cloud_count"], "family.cloud_count");
  if (fam.contains("cloud_size")) cfg.params.cloud_size = integer_at(fam["cloud_size"], "family.cloud_size");
  if (fam.contains("radius")) cfg.params.radius = number_at(fam["radius"], "family.radius");
  if (fam.contains("max_m2")) cfg.params.max_m2 = number_at(fam["max_m2"], "family.max_m2");
  if (fam.contains("max_barycenter")) {
    cfg.params.max_barycenter = number_at(fam["max_barycenter"], "family.max_barycenter");
  }
  cfg.ladder = list(vector_at(require_key(j, "ladder", ""), "ladder"));
  if (j.contains("tolerance")) cfg.tolerance = number_at(j["tolerance"], "tolerance");
  if (j.contains("grid_resolution")) cfg.grid_resolution = integer_at(j["grid_resolution"], "grid_resolution");
  if (j.contains("tol_mass")) cfg.tol_mass = number_at(j["tol_mass"], "tol_mass");
  if (j.contains("max_iter")) cfg.max_iter = integer_at(j["max_iter"], "max_iter");
  if (j.contains("jobs")) cfg.jobs = integer_at(j["jobs"], "jobs");
  if (j.contains("output")) {
    if (!j["output"].is_string()) field_error("output", "expected a string");
    cfg.output = j["output"].get<std::string>();
  }
  cfg.params.dim = cfg.dim;
  validate(cfg);
  return cfg;
}

Json to_json(const ExperimentConfig& cfg) {
  Json fam;
  fam["kind"] = to_string(cfg.family);
  fam["seed"] = cfg.seed;
  if (!cfg.params.shifts.empty()) fam["shifts"] = cfg.params.shifts;
  if (!cfg.params.splits.empty()) fam["splits"] = cfg.params.splits;
  if (cfg.family == FamilyKind::RandomCloud) {
    fam["cloud_count"] = cfg.params.cloud_count;
    fam["cloud_size"] = cfg.params.cloud_size;
    fam["radius"] = cfg.params.radius;
  }
  if (std::isfinite(cfg.params.max_m2)) fam["max_m2"] = cfg.params.max_m2;
  if (std::isfinite(cfg.params.max_barycenter)) fam["max_barycenter"] = cfg.params.max_barycenter;
  Json j;
  j["alpha"] = cfg.alpha;
  j["dim"] = cfg.dim;
  j["family"] = std::move(fam);
  j["ladder"] = cfg.ladder;
  j["tolerance"] = cfg.tolerance;
  j["grid_resolution"] = cfg.grid_resolution;
  j["tol_mass"] = cfg.tol_mass;
  j["max_iter"] = cfg.max_iter;
  j["jobs"] = cfg.jobs;
  j["output"] = cfg.output;
  return j;
}

}  // namespace regmm
