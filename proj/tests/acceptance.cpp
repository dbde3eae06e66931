// Acceptance runner: one PASS/FAIL/SKIP line per criterion.
//
// Criteria 1-5 run the matching unit test cases in-process; the end-to-end
// criteria drive the hgnn command-line tool and inspect what it writes.

#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  bool skipped = false;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Runs the named unit test cases (or a whole suite); passes when every one
// of them ran and passed.
Outcome run_cases(const std::vector<std::string>& names, const std::string& suite = "") {
  doctest::Context ctx;
  std::string filter;
  for (const auto& n : names) filter += (filter.empty() ? "" : ",") + n;
  if (!filter.empty()) ctx.setOption("test-case", filter.c_str());
  if (!suite.empty()) ctx.setOption("test-suite", suite.c_str());
  ctx.setOption("no-version", true);
  std::ostringstream sink;
  ctx.setCout(&sink);
  const int rc = ctx.run();
  const auto text = sink.str();
  std::smatch m;
  const int ran = std::regex_search(text, m, std::regex(R"(test cases:\s*(\d+))")) ? std::stoi(m[1]) : 0;
  Outcome o;
  o.pass = rc == 0 && ran > 0 && (names.empty() || ran == static_cast<int>(names.size()));
  o.detail = std::to_string(ran) + " test cases";
  if (!o.pass) o.detail += "\n" + text.substr(0, std::min<std::size_t>(text.size(), 2000));
  return o;
}

struct Cli {
  fs::path exe;
  fs::path log;

  int operator()(const std::string& args) const {
    const std::string cmd = "\"" + exe.string() + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }
};

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

struct StudyRun {
  int cases, classes;
  double ratio;
  std::string rule, policy, arch, op;
  int trials, epochs;
  std::uint64_t seed;
};

// Generates the log and runs one study into `dir`; returns the exit code.
int run_study(const Cli& cli, const StudyRun& s, const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const Cli local{cli.exe, dir / "run.log"};
  int rc = local("synth --cases " + std::to_string(s.cases) + " --classes " + std::to_string(s.classes) +
                 " --ratio " + fixed(s.ratio, 6) + " --rule " + s.rule + " --seed " + std::to_string(s.seed) +
                 " --out " + q(dir / "log.csv") + " --schema-out " + q(dir / "schema.json") + " --bins-out " +
                 q(dir / "bins.json"));
  if (rc != 0) return rc;
  return local("tune --data " + q(dir / "log.csv") + " --schema " + q(dir / "schema.json") + " --bins " +
               q(dir / "bins.json") + " --arch " + s.arch + " --op " + s.op + " --trials " +
               std::to_string(s.trials) + " --epochs " + std::to_string(s.epochs) + " --seed " +
               std::to_string(s.seed) + " --policy " + s.policy + " --out " + q(dir / "out"));
}

Outcome check_study(const Cli& cli, const StudyRun& s, const fs::path& dir, const std::string& metric,
                    double threshold) {
  const int rc = run_study(cli, s, dir);
  if (rc != 0) return {false, "tune exited with " + std::to_string(rc) + ", see " + (dir / "run.log").string()};
  const json m = json::parse(read_file(dir / "out" / "retrained_metrics.json"));
  if (!m.contains("retrained")) return {false, "retraining did not complete"};
  const double v = m["retrained"][metric].get<double>();
  return {v >= threshold, metric + " " + fixed(v, 4) + " (need >= " + fixed(threshold, 2) + ")"};
}

std::map<std::string, std::vector<std::string>> csv_rows(const std::string& text) {
  std::map<std::string, std::vector<std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
    if (f.size() == 6) out[f[0] + "/" + f[1]] = f;
  }
  return out;
}

// Every data-value in the figures must equal the CSV cell it comes from.
std::string compare_figures(const fs::path& dir) {
  const auto rows = csv_rows(read_file(dir / "grid.csv"));
  if (rows.size() != 24) return "grid.csv has " + std::to_string(rows.size()) + " rows";
  const std::regex tag(R"re(<(rect|circle) [^>]*data-value="[^"]*"[^>]*>)re");
  const std::regex attr(R"re(data-([a-z]+)="([^"]*)")re");
  auto check = [&](const fs::path& file, std::size_t expected) -> std::string {
    const auto svg = read_file(file);
    std::size_t n = 0;
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), tag); it != std::sregex_iterator(); ++it) {
      std::map<std::string, std::string> a;
      const std::string t = it->str();
      for (auto m = std::sregex_iterator(t.begin(), t.end(), attr); m != std::sregex_iterator(); ++m) {
        a[(*m)[1].str()] = (*m)[2].str();
      }
      const auto row = rows.find(a["architecture"] + "/" + a["operator"]);
      if (row == rows.end()) return file.filename().string() + ": unknown cell";
      const std::string series = a.count("series") ? a["series"] : a["metric"];
      const std::size_t col = series == "accuracy" ? 2 : 3;
      if (row->second[col] != a["value"]) {
        return file.filename().string() + ": " + row->first + " shows " + a["value"] + ", csv has " + row->second[col];
      }
      ++n;
    }
    if (n != expected) return file.filename().string() + ": " + std::to_string(n) + " values";
    return "";
  };
  if (auto e = check(dir / "heatmap.svg", 24); !e.empty()) return e;
  for (const char* op : {"gcn", "graph", "sage", "tag", "cheb", "gin"}) {
    if (auto e = check(dir / (std::string("radar_") + op + ".svg"), 8); !e.empty()) return e;
  }
  return "";
}

int run_grid(const Cli& cli, const fs::path& dir, std::uint64_t seed) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const Cli local{cli.exe, dir / "run.log"};
  int rc = local("synth --cases 100 --classes 2 --rule presence --seed " + std::to_string(seed) + " --out " +
                 q(dir / "log.csv") + " --schema-out " + q(dir / "schema.json") + " --bins-out " +
                 q(dir / "bins.json"));
  if (rc != 0) return rc;
  return local("grid --data " + q(dir / "log.csv") + " --schema " + q(dir / "schema.json") + " --bins " +
               q(dir / "bins.json") + " --trials 2 --epochs 20 --patience 5 --seed " + std::to_string(seed) +
               " --out " + q(dir / "out"));
}

// Files whose bytes must repeat across identical runs (logs excluded).
std::map<std::string, std::string> artifacts(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "run.log") continue;
    out[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return out;
}

std::string compare_dirs(const fs::path& a, const fs::path& b) {
  const auto x = artifacts(a), y = artifacts(b);
  if (x.size() != y.size()) return a.filename().string() + ": file sets differ";
  for (const auto& [name, bytes] : x) {
    const auto it = y.find(name);
    if (it == y.end()) return name + " missing in the re-run";
    if (it->second != bytes) return name + " differs";
  }
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path work = fs::temp_directory_path() / "hgnn_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a.rfind("--only=", 0) == 0) {
      std::stringstream ss(a.substr(7));
      for (std::string x; std::getline(ss, x, ',');) only.insert(std::stoi(x));
    } else if (a.rfind("--work=", 0) == 0) {
      work = a.substr(7);
    }
  }
  const Cli cli{HGNN_CLI_PATH, work / "cli.log"};
  fs::create_directories(work);

  int failures = 0;
  auto criterion = [&](int id, const std::string& name, double limit_seconds, const std::function<Outcome()>& body) {
    if (!only.empty() && !only.count(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o = body();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_seconds > 0 && secs >= limit_seconds) {
      o.pass = false;
      o.detail += (o.detail.empty() ? "" : "; ") + std::string("over the ") + fixed(limit_seconds, 0) + " s limit";
    }
    if (!o.pass) ++failures;
    std::cout << (o.skipped ? "SKIP" : o.pass ? "PASS" : "FAIL") << "  " << id << ". " << name << " [" << fixed(secs, 1) << " s]";
    if (!o.detail.empty()) std::cout << ": " << o.detail;
    std::cout << std::endl;
  };

  criterion(1, "gradient checks for operators, activations and architecture blocks", 60, [] {
    return run_cases({"every op matches finite differences", "all activations match finite differences",
                      "operator gradients match finite differences", "loss gradients match finite differences",
                      "gradients of every architecture match finite differences",
                      "two-level embedding: shared rows and gradient into the table"});
  });
  criterion(2, "operator oracles and the order-0 identity", 0, [] {
    return run_cases({"gcn examples", "graph conv examples", "sage examples", "tag examples", "cheb examples",
                      "cheb second order matches dense polynomial evaluation",
                      "cheb K=0* tag K=0 and the dense transform agree exactly", "gin examples",
                      "gin aggregation matches a loop over the edge list"});
  });
  criterion(3, "encoding: edge weights, imputation, bin totality, masking", 0, [] {
    auto o = run_cases({}, "eventlog");
    if (!o.pass) return o;
    auto masked = run_cases({"masked raw values never reach the logits"});
    if (masked.pass) masked.detail = o.detail + " plus masking";
    return masked;
  });
  criterion(4, "trainer: losses, schedules, early stopping", 0, [] { return run_cases({}, "trainer"); });
  criterion(5, "hpo: space fuzz, pruner cases, tpe versus random", 120, [] { return run_cases({}, "hpo"); });

  const StudyRun balanced{500, 2, 1.0, "presence", "balanced", "one", "gcn", 20, 60, 6};
  const StudyRun imbalanced{600, 4, 20.0, "duration", "imbalanced", "one", "graph", 20, 60, 7};
  criterion(6, "balanced end-to-end study", 600,
            [&] { return check_study(cli, balanced, work / "c6a", "accuracy", 0.95); });
  criterion(7, "imbalanced end-to-end study", 900,
            [&] { return check_study(cli, imbalanced, work / "c7a", "weighted_f1", 0.70); });
  criterion(8, "grid plumbing with figures matching the csv", 600, [&]() -> Outcome {
    const auto dir = work / "c8a";
    const int rc = run_grid(cli, dir, 8);
    if (rc != 0) return {false, "grid exited with " + std::to_string(rc)};
    const auto rows = csv_rows(read_file(dir / "out" / "grid.csv"));
    int done = 0;
    for (const auto& [k, r] : rows) done += r[2] != "failed";
    if (done != 24) return {false, std::to_string(done) + " of 24 cells completed"};
    const auto e = compare_figures(dir / "out");
    return {e.empty(), e.empty() ? "24 cells, heatmap and 6 radars match the csv" : e};
  });
  criterion(9, "dataset reproduction", 0, [&]() -> Outcome {
    const char* csv = std::getenv("HGNN_DATASET_CSV");
    const char* schema = std::getenv("HGNN_DATASET_SCHEMA");
    if (!csv || !schema) return {true, "set HGNN_DATASET_CSV and HGNN_DATASET_SCHEMA to run", true};
    const auto dir = work / "c9";
    fs::remove_all(dir);
    const Cli local{cli.exe, work / "c9.log"};
    const int rc = local(std::string("tune --data ") + q(csv) + " --schema " + q(schema) +
                         " --trials 50 --epochs 100 --seed 9 --out " + q(dir));
    if (rc != 0) return {false, "tune exited with " + std::to_string(rc)};
    const json m = json::parse(read_file(dir / "retrained_metrics.json"));
    const double acc = m.contains("retrained") ? m["retrained"]["accuracy"].get<double>() : 0.0;
    return {acc >= 0.97, "accuracy " + fixed(acc, 4)};
  });
  criterion(10, "identical seeds reproduce trial logs and reports byte for byte", 0, [&]() -> Outcome {
    std::vector<std::string> problems;
    auto pair = [&](const fs::path& a, const fs::path& b, const std::function<int(const fs::path&)>& run) {
      if (!fs::exists(a / "out") && run(a) != 0) return problems.push_back(a.filename().string() + " failed");
      if (run(b) != 0) return problems.push_back(b.filename().string() + " failed");
      if (auto e = compare_dirs(a, b); !e.empty()) problems.push_back(e);
    };
    pair(work / "c6a", work / "c6b", [&](const fs::path& d) { return run_study(cli, balanced, d); });
    pair(work / "c7a", work / "c7b", [&](const fs::path& d) { return run_study(cli, imbalanced, d); });
    pair(work / "c8a", work / "c8b", [&](const fs::path& d) { return run_grid(cli, d, 8); });
    std::string detail;
    for (const auto& p : problems) detail += (detail.empty() ? "" : "; ") + p;
    return {problems.empty(), problems.empty() ? "studies and grid repeat exactly" : detail};
  });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
