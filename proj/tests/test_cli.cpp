#include "tvirt/cli.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using tvirt::cli::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("tvirt_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("usage errors", "[cli]") {
  CHECK(cli({"frobnicate"}).code == tvirt::cli::usage);
  CHECK(cli({}).code == tvirt::cli::usage);
  CHECK(cli({"fit", "--out", "x"}).code == tvirt::cli::usage);
  CHECK(cli({"--help"}).code == tvirt::cli::ok);
  const auto dir = scratch("usage");
  CHECK(cli({"mask", "--regime", "zigzag", "--out", dir.string()}).code == tvirt::cli::usage);
}

TEST_CASE("data errors and infeasibility", "[cli]") {
  const auto dir = scratch("errors");
  fs::create_directories(dir);
  CHECK(cli({"fit", "--matrix", (dir / "missing.csv").string(), "--out", dir.string()}).code == tvirt::cli::data);
  {
    std::ofstream bad(dir / "bad.csv");
    bad << "agent,x,y\na,0.5,1.7\n";
  }
  const auto r = cli({"fit", "--matrix", (dir / "bad.csv").string(), "--out", dir.string()});
  CHECK(r.code == tvirt::cli::data);
  CHECK(r.err.find("bad.csv:2:3") != std::string::npos);
  // Item columns of height 2 cannot reach degree 3.
  const auto inf = cli({"mask", "--k", "2", "--j", "5", "--holdout-fraction", "0", "--out", dir.string()});
  CHECK(inf.code == tvirt::cli::infeasible);
  CHECK(inf.err.find("starved") != std::string::npos);
}

TEST_CASE("curl on an additive matrix reports zero identity median", "[cli]") {
  const auto dir = scratch("curl");
  REQUIRE(cli({"synth", "--noise-sd", "0", "--saturation", "0", "--seed", "4", "--out", (dir / "syn").string()}).code ==
          0);
  const auto r = cli({"curl", "--matrix", (dir / "syn" / "matrix.csv").string(), "--links", "identity", "--n-boot",
                      "0", "--n-rect", "2000", "--out", (dir / "curl").string()});
  REQUIRE(r.code == 0);
  const auto doc = nlohmann::json::parse(slurp(dir / "curl" / "curl.json"));
  CHECK(doc["links"][0]["link"] == "identity");
  CHECK(doc["links"][0]["median"].get<double>() < 5e-16);
  CHECK(doc["manifest"] == "manifest.json");
}

TEST_CASE("pipeline outputs are deterministic and reference their manifest", "[cli]") {
  const auto dir = scratch("pipeline");
  const auto m = (dir / "syn" / "matrix.csv").string();
  REQUIRE(cli({"synth", "--k", "12", "--j", "40", "--seed", "2", "--problematic-fraction", "0.25", "--out",
               (dir / "syn").string()})
              .code == 0);
  REQUIRE(cli({"mask", "--matrix", m, "--regime", "hybrid", "--alpha", "0.5", "--beta", "0.6", "--seed", "3", "--out",
               (dir / "mask").string()})
              .code == 0);
  const auto holdout = (dir / "mask" / "holdout.csv").string();
  const auto labels = (dir / "syn" / "labels.csv").string();
  REQUIRE(cli({"fit", "--matrix", m, "--mask", (dir / "mask" / "mask.csv").string(), "--method", "uv", "--out",
               (dir / "fit").string()})
              .code == 0);
  for (const auto* name : {"a", "b"}) {
    const auto out = dir / "sweep" / name;
    const auto r = cli({"sweep", "--matrix", m, "--holdout", holdout, "--labels", labels, "--preset", "grid",
                        "--methods", "clipped_linear,svd", "--seed", "7", "--out", out.string()});
    REQUIRE(r.code == 0);
  }
  const auto a = slurp(dir / "sweep" / "a" / "sweep.csv");
  CHECK(a == slurp(dir / "sweep" / "b" / "sweep.csv"));
  CHECK(slurp(dir / "sweep" / "a" / "sweep.json") == slurp(dir / "sweep" / "b" / "sweep.json"));
  CHECK(a.rfind("# manifest=manifest.json config_digest=", 0) == 0);

  // One row per (regime, parameter, method) plus one dense row per method.
  std::size_t lines = 0;
  std::istringstream in(a);
  for (std::string line; std::getline(in, line);) lines += !line.empty() && line[0] != '#';
  CHECK(lines == 1 + 2 * (1 + 3 + 3 + 9 + 5));

  const auto manifest = nlohmann::json::parse(slurp(dir / "sweep" / "a" / "manifest.json"));
  CHECK(manifest["command"] == "sweep");
  CHECK(manifest["inputs"]["matrix"]["sha256"].get<std::string>().size() == 64);
  CHECK(manifest["seeds"]["seed"] == 7);

  REQUIRE(cli({"eval", "--matrix", m, "--holdout", holdout, "--labels", labels, "--n-boot", "20", "--out",
               (dir / "eval").string()})
              .code == 0);
  const auto rep = cli({"report", "--sweep", "syn=" + (dir / "sweep" / "a" / "sweep.csv").string(), "--out",
                        (dir / "report").string()});
  REQUIRE(rep.code == 0);
  const auto tables = slurp(dir / "report" / "tables.md");
  CHECK(tables.find("| syn | nlogn | C=0.5 |") != std::string::npos);
  CHECK(tables.find("## Baselines") != std::string::npos);
}

TEST_CASE("aggregate writes training and full matrices", "[cli]") {
  const auto dir = scratch("aggregate");
  fs::create_directories(dir);
  {
    std::ofstream rec(dir / "records.csv");
    rec << "agent_i,agent_j,item,tpr,fpr\n";
    const char* agents[] = {"a", "b", "c"};
    for (int k = 0; k < 6; ++k)
      for (auto* i : agents)
        for (auto* j : agents)
          if (std::string(i) != j) rec << i << ',' << j << ",item" << k << ",0.8,0." << (k + 1) << '\n';
  }
  const auto r = cli({"aggregate", "--records", (dir / "records.csv").string(), "--holdout-fraction", "0.2", "--seed",
                      "1", "--out", (dir / "out").string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "out" / "matrix.csv"));
  CHECK(fs::exists(dir / "out" / "full_matrix.csv"));
  CHECK(fs::exists(dir / "out" / "holdout.csv"));
  const auto summary = nlohmann::json::parse(slurp(dir / "out" / "aggregate.json"));
  CHECK(summary["holdout_pairs"] == 4);
  CHECK(summary["observed_training_cells"] == 14);
}
