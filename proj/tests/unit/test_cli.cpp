#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "catch_amalgamated.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

class Workspace {
 public:
  explicit Workspace(const std::string& name) : dir_(fs::temp_directory_path() / ("recurctl_cli_" + name)) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Workspace() { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& content) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << content;
    return p;
  }

  Run run(const std::string& args, const std::string& out = "out") const {
    const fs::path o = dir_ / "stdout.txt", e = dir_ / "stderr.txt";
    const std::string cmd = std::string(RECURCTL_BINARY) + " " + args + " --out " + (dir_ / out).string() + " > " +
                            o.string() + " 2> " + e.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
  }

  Run bare(const std::string& args) const {
    const fs::path o = dir_ / "stdout.txt", e = dir_ / "stderr.txt";
    const std::string cmd = std::string(RECURCTL_BINARY) + " " + args + " > " + o.string() + " 2> " + e.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
  }

  Json json(const std::string& rel) const { return Json::parse(slurp(dir_ / rel)); }
  std::string text(const std::string& rel) const { return slurp(dir_ / rel); }
  bool exists(const std::string& rel) const { return fs::exists(dir_ / rel); }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
};

const char* kHarmonic = R"J({"modes": 1, "truncation": {"dim": 32, "buffer": 8},
  "hamiltonian": "0.5*(q1^2 + p1^2)", "delta": 1e-3,
  "tail": {"mode": "pointwise", "state": {"kind": "coherent", "alpha": [1.0]}},
  "search": {"tau_min": 1}})J";

}  // namespace

TEST_CASE("closure reports the su(1,1) dimension", "[cli]") {
  Workspace ws("closure");
  const auto cfg = ws.write("c.json", R"J({"modes": 1, "generators": ["i*q1^2", "i*p1^2"]})J");
  const Run r = ws.run("closure --config " + cfg.string());
  REQUIRE(r.code == 0);
  const Json j = ws.json("out/closure.json");
  CHECK(j["dimension"] == 3);
  CHECK(j["saturated"] == true);
}

TEST_CASE("recur finds 4 pi for the harmonic oscillator", "[cli]") {
  Workspace ws("recur");
  const auto cfg = ws.write("r.json", kHarmonic);
  const Run r = ws.run("recur --config " + cfg.string());
  REQUIRE(r.code == 0);
  const Json j = ws.json("out/plan.json");
  CHECK(std::abs(j["plan"]["T"].get<double>() - 4.0 * std::numbers::pi) < 1e-9);
  CHECK(j["plan"]["certified"] == true);
  CHECK(j["plan"]["mode"] == "pointwise");
}

TEST_CASE("invert returns the forward time", "[cli]") {
  Workspace ws("invert");
  std::string text = kHarmonic;
  text.insert(text.rfind('}'), R"(, "s": 1.0)");
  const auto cfg = ws.write("i.json", text);
  const Run r = ws.run("invert --config " + cfg.string());
  REQUIRE(r.code == 0);
  const Json j = ws.json("out/invert.json");
  CHECK(std::abs(j["t_star"].get<double>() - (4.0 * std::numbers::pi - 1.0)) < 1e-9);
}

TEST_CASE("usage errors exit with 2", "[cli]") {
  Workspace ws("usage");
  const Run bogus = ws.bare("bogus --config x.json");
  CHECK(bogus.code == 2);
  CHECK(bogus.err.find("unknown subcommand 'bogus'") != std::string::npos);
  CHECK(bogus.err.find("usage:") != std::string::npos);
  CHECK(ws.bare("").code == 2);
  CHECK(ws.bare("closure").code == 2);
}

TEST_CASE("config errors name the offending key and exit with 3", "[cli]") {
  Workspace ws("config");
  const auto bad = ws.write("b.json", R"J({"modes": 1, "truncation": {"dim": 32, "bufer": 8},
    "hamiltonian": "q1^2", "tail": {"mode": "pointwise", "state": {"kind": "vacuum"}}})J");
  const Run r = ws.run("recur --config " + bad.string());
  CHECK(r.code == 3);
  CHECK(r.err.find("/truncation/bufer") != std::string::npos);

  const auto op = ws.write("o.json", R"J({"modes": 1, "generators": ["i*q2"]})J");
  const Run r2 = ws.run("closure --config " + op.string());
  CHECK(r2.code == 3);
  CHECK(r2.err.find("/generators/0") != std::string::npos);

  CHECK(ws.run("closure --config " + (ws.dir() / "missing.json").string()).code == 3);
  const auto broken = ws.write("x.json", "{\"modes\": ");
  CHECK(ws.run("closure --config " + broken.string()).code == 3);
}

TEST_CASE("compile reports are reproducible for a fixed seed", "[cli]") {
  Workspace ws("compile");
  const auto cfg = ws.write("c.json", R"J({"modes": 1, "truncation": {"dim": 12},
    "generators": ["0.5*(q1^2 + p1^2)", "q1^2 + p1^2"],
    "state": {"kind": "random", "max_level": 6},
    "targets": [{"name": "bracket", "expr": "[H1, H2]", "t": 0.5}, {"name": "sum", "expr": "(H1 + H2)", "t": 0.3}],
    "epsilon": 1e-4, "inverter": {"kind": "recurrence", "mode": "pointwise", "delta": 1e-7}})J");
  const Run a = ws.run("compile --seed 42 --config " + cfg.string(), "a");
  const Run b = ws.run("compile --seed 42 --config " + cfg.string(), "b");
  INFO(a.err);
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(ws.text("a/report.json") == ws.text("b/report.json"));
  CHECK(ws.text("a/summary.csv") == ws.text("b/summary.csv"));
  CHECK(ws.text("a/sequences/bracket.json") == ws.text("b/sequences/bracket.json"));

  const Json rep = ws.json("a/report.json");
  CHECK(rep["failures"] == 0);
  CHECK_FALSE(rep["entries"][0].contains("wall_seconds"));
  const Json seq = ws.json("a/sequences/bracket.json");
  CHECK(seq["physical"] == true);
  for (const auto& s : seq["segments"]) {
    CHECK(s["k"].get<int>() >= 1);
    CHECK(s["t"].get<double>() >= 0.0);
  }

  const Run c = ws.run("compile --seed 7 --config " + cfg.string(), "c");
  REQUIRE(c.code == 0);
  CHECK(ws.text("a/report.json") != ws.text("c/report.json"));

  const Run w = ws.run("compile --seed 42 --wall-clock --config " + cfg.string(), "w");
  REQUIRE(w.code == 0);
  CHECK(ws.json("w/report.json")["entries"][0].contains("wall_seconds"));
}

TEST_CASE("random states need a seed", "[cli]") {
  Workspace ws("seed");
  const auto cfg = ws.write("c.json", R"J({"modes": 1, "truncation": {"dim": 8},
    "generators": ["q1"], "state": {"kind": "random", "max_level": 4},
    "targets": [{"name": "a", "expr": "H1", "t": 0.1}]})J");
  const Run r = ws.run("compile --config " + cfg.string());
  CHECK(r.code == 3);
  CHECK(r.err.find("seed") != std::string::npos);
}

TEST_CASE("chain demo moves an excitation", "[cli]") {
  Workspace ws("chain");
  const auto cfg = ws.write("c.json", R"J({"chain": {"n_modes": 2, "omega": 1.0, "couplings": [[1, 2, 1.0]],
      "controls": ["1.5*(q1^2 + p1^2)"]},
    "dim_per_mode": 8, "state": {"kind": "fock", "levels": [1, 0]}, "epsilon": 0.1,
    "targets": [{"name": "swap", "expr": "[H2, H1]", "t": 0.5}],
    "inverter": {"kind": "recurrence", "mode": "pointwise", "delta": 1e-5}})J");
  const Run r = ws.run("chain-demo --config " + cfg.string());
  INFO(r.err << r.out);
  REQUIRE(r.code == 0);
  const Json rep = ws.json("out/report.json");
  CHECK(rep["entries"][0]["success"] == true);
  CHECK(rep["entries"][0]["result"]["fidelity"].get<double>() >= 0.99);
  CHECK(rep.contains("chain"));
  CHECK(rep.contains("controllability"));
  CHECK(ws.exists("out/sequences/swap.json"));
}
