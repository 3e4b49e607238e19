#include "regmm/cli.hpp"
#include "regmm/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace regmm;
namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("regmm_io_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "regmm");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("measure files round trip and validate") {
  PointMatrix y(3, 2);
  y << 0.0, 1.0, -1.5, 0.25, 2.0, -0.75;
  const DiscreteMeasure mu(y, Vector::Constant(3, 1.0 / 3.0));
  const DiscreteMeasure back = measure_from_json(parse_json(dump(to_json(mu)), "mem"));
  CHECK(back.points() == mu.points());
  CHECK(back.weights() == mu.weights());

  const DiscreteMeasure near =
      measure_from_json(parse_json(R"({"dim":1,"points":[[0],[1]],"weights":[0.5,0.5000000001]})", "mem"));
  CHECK(near.weights().sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(measure_from_json(parse_json(R"({"dim":1,"points":[[0],[1]],"weights":[0.5,0.6]})", "mem")),
                  Error);

  CHECK(error_of([] { measure_from_json(parse_json(R"({"dim":1,"points":[[0],[1]]})", "mem")); })
            .find("weights") != std::string::npos);
  CHECK(error_of([] { measure_from_json(parse_json(R"({"dim":2,"points":[[0,1],[1]],"weights":[0.5,0.5]})", "mem")); })
            .find("points[1]") != std::string::npos);
  CHECK(error_of([] { parse_json("{\n  \"dim\": 1,\n  \"points\": [[0]\n  \"weights\": [1]\n}", "mu.json"); })
            .find("mu.json:4:") != std::string::npos);
}

TEST_CASE("potential files round trip") {
  PointMatrix y(2, 1);
  y << -1.0, 2.0;
  Vector phi(2);
  phi << 0.25, -0.125;
  const Json j = potential_to_json(Potential(y, phi), 1.5, 0.5);
  CHECK(j["logZ"].get<double>() == 1.5);
  CHECK(j["alpha"].get<double>() == 0.5);
  const Potential back = potential_from_json(parse_json(dump(j), "mem"));
  CHECK(back.support() == y);
  CHECK(back.phi() == phi);
}

TEST_CASE("stored reports reproduce their residuals") {
  std::mt19937_64 rng(21);
  for (int dim : {1, 2}) {
    const int n = dim == 1 ? 12 : 5;
    PointMatrix y(n, dim);
    Vector w(n);
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < dim; ++k) y(j, k) = 2.0 * uniform01(rng) - 1.0;
      w[j] = 0.5 + uniform01(rng);
    }
    const DiscreteMeasure mu(y, w / w.sum());
    SolverConfig cfg;
    cfg.alpha = 0.8;
    cfg.quadrature.resolution = 256;
    const SolveReport r = solve(mu, cfg);
    REQUIRE(r.converged);
    const StoredReport s = report_from_json(parse_json(dump(report_to_json(r)), "mem"));
    CHECK(s.alpha == r.alpha);
    CHECK(s.phi == r.potential.phi());
    CHECK(s.converged);
    CHECK(s.iterations == r.iterations);
    SolverConfig again;
    again.alpha = s.alpha;
    again.quadrature.radius = s.radius;
    again.quadrature.resolution = s.resolution;
    const SolveReport e = evaluate_report(s.target, s.phi, again);
    CHECK(std::abs(e.residual_linf - s.residual_linf) <= 1e-12);
    CHECK(std::abs(e.log_z - s.log_z) <= 1e-12);
  }
}

TEST_CASE("experiment configs round trip and reject unknown keys") {
  ExperimentConfig cfg;
  cfg.alpha = 0.5;
  cfg.family = FamilyKind::RandomCloud;
  cfg.params.cloud_count = 4;
  cfg.params.cloud_size = 9;
  cfg.params.radius = 1.5;
  cfg.params.max_m2 = 4.0;
  cfg.params.max_barycenter = 1.0;
  cfg.seed = 17;
  cfg.ladder = {0.3, 0.1};
  cfg.jobs = 2;
  cfg.output = "rows.csv";
  const std::string text = dump(to_json(cfg));
  const ExperimentConfig back = experiment_from_json(parse_json(text, "mem"));
  CHECK(dump(to_json(back)) == text);
  CHECK(back.seed == 17);
  CHECK(back.params.cloud_size == 9);

  CHECK_THROWS_AS(experiment_from_json(parse_json(R"({"family":{"kind":"dirac-shift","shifts":[0]},"ladder":[0.1],"bogus":1})", "mem")),
                  Error);
  CHECK_THROWS_AS(experiment_from_json(parse_json(R"({"family":{"kind":"dirac-shift","shifts":[0]},"ladder":[0.1,0.2]})", "mem")),
                  Error);
}

TEST_CASE("atomic writes replace the file and leave no temporaries") {
  Scratch s;
  const std::string path = s.path("out.txt");
  write_file_atomic(path, "first\n");
  write_file_atomic(path, "second\n");
  CHECK(slurp(path) == "second\n");
  int entries = 0;
  for (const auto& e : fs::directory_iterator(s.dir)) {
    (void)e;
    ++entries;
  }
  CHECK(entries == 1);
  CHECK_THROWS_AS(write_file_atomic(s.path("missing/dir/out.txt"), "x"), Error);
}

TEST_CASE("cli solve and verify on a single Dirac") {
  Scratch s;
  const std::string mu = s.write("mu.json", R"({"dim":1,"points":[[2.0]],"weights":[1.0]})");
  const std::string report = s.path("report.json");
  CHECK(run({"solve", "--input", mu, "--alpha", "1.0", "--out", report}) == kExitOk);
  const Json j = read_json_file(report);
  CHECK(j["barycenter"][0].get<double>() == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(j["converged"].get<bool>());
  for (const char* key : {"alpha", "points", "weights", "phi", "logZ", "cell_masses", "residual_linf", "iterations",
                          "converged"}) {
    CHECK(j.contains(key));
  }
  CHECK(run({"verify", "--report", report}) == kExitOk);
  CHECK(run({"verify", "--input", report}) == kExitOk);
}

TEST_CASE("cli verify rejects a tampered report") {
  Scratch s;
  const std::string mu = s.write("mu.json", R"({"dim":1,"points":[[-1.0],[0.5],[2.0]],"weights":[0.2,0.5,0.3]})");
  const std::string report = s.path("report.json");
  REQUIRE(run({"solve", "--input", mu, "--out", report}) == kExitOk);
  Json j = read_json_file(report);
  j["phi"][1] = j["phi"][1].get<double>() + 1e-3;
  write_file_atomic(report, dump(j));
  CHECK(run({"verify", "--report", report}) == kExitCheckFailed);
}

TEST_CASE("cli exit codes for usage errors and non-convergence") {
  Scratch s;
  const std::string mu = s.write("mu.json", R"({"dim":1,"points":[[-1.3],[-0.2],[0.1],[0.9],[2.2]],"weights":[0.1,0.3,0.2,0.25,0.15]})");
  CHECK(run({}) == kExitUsage);
  CHECK(run({"solve", "--input", mu}) == kExitUsage);
  CHECK(run({"solve", "--input", mu, "--out", s.path("r.json"), "--unknown", "1"}) == kExitUsage);
  CHECK(run({"solve", "--input", mu, "--out", s.path("r.json"), "--alpha", "-1"}) == kExitUsage);
  CHECK(run({"solve", "--input", s.path("absent.json"), "--out", s.path("r.json")}) == kExitUsage);
  const std::string bad = s.write("bad.json", R"({"dim":1,"points":[[0],[1]],"weights":[0.5,0.7]})");
  CHECK(run({"solve", "--input", bad, "--out", s.path("r.json")}) == kExitUsage);
  CHECK(run({"solve", "--input", mu, "--out", s.path("r.json"), "--max-iter", "1"}) == kExitNotConverged);
  CHECK(fs::exists(s.path("r.json")));
  CHECK(run({"verify", "--report", s.path("r.json")}) == kExitNotConverged);
}

TEST_CASE("cli stability output is byte-identical across reruns") {
  Scratch s;
  const std::string config = s.write("exp.json", R"({
    "alpha": 1.0, "dim": 1,
    "family": {"kind": "two-point-split", "splits": [0.5, 1.0], "max_m2": 4.0, "max_barycenter": 1.0},
    "ladder": [0.1, 0.01]
  })");
  const std::string a = s.path("a.csv");
  const std::string b = s.path("b.csv");
  CHECK(run({"stability", "--config", config, "--out", a}) == kExitOk);
  CHECK(run({"stability", "--config", config, "--out", b, "--jobs", "2"}) == kExitOk);
  const std::string text = slurp(a);
  CHECK(text == slurp(b));
  CHECK(text.rfind("w2_inputs,w2_outputs,gap_sum,cross_sum,bound_C,slack_strongconv,slack_triangle,slack_theorem,"
                   "converged_mu,converged_nu\n",
                   0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  CHECK(run({"stability", "--config", config}) == kExitUsage);
}

TEST_CASE("cli sweep and roundtrip write their tables") {
  Scratch s;
  const std::string mu = s.write("mu.json", R"({"dim":1,"points":[[-1.0],[1.0]],"weights":[0.5,0.5]})");
  CHECK(run({"sweep", "--input", mu, "--out", s.path("sweep.csv"), "2", "1", "0.5"}) == kExitOk);
  const std::string sweep = slurp(s.path("sweep.csv"));
  CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 4);
  CHECK(run({"sweep", "--input", mu, "--out", s.path("sweep.csv"), "1", "2"}) == kExitUsage);
  CHECK(run({"roundtrip", "quadratic", "--out", s.path("rt.csv")}) == kExitOk);
  const std::string first = slurp(s.path("rt.csv"));
  CHECK(first.rfind("n,w2_density,w2_target,converged,iterations\n25,", 0) == 0);
  CHECK(run({"roundtrip", "quadratic", "--out", s.path("rt.csv")}) == kExitOk);
  CHECK(slurp(s.path("rt.csv")) == first);
  CHECK(run({"roundtrip", "cubic", "--out", s.path("rt.csv")}) == kExitUsage);
}
