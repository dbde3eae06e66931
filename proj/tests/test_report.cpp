#include "doctest.h"
#include "fixtures.hpp"

#include "hgnn/report.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

using namespace hgnn;
namespace fs = std::filesystem;

namespace {

struct Mark {
  std::string arch, op, series, value;
};

// Every element carrying data-architecture/data-operator/data-value.
std::vector<Mark> marks(const std::string& svg, const std::string& element) {
  std::vector<Mark> out;
  const std::regex tag("<" + element + " [^>]*>");
  const std::regex attr(R"re(data-([a-z]+)="([^"]*)")re");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), tag); it != std::sregex_iterator(); ++it) {
    const std::string t = it->str();
    Mark m;
    for (auto a = std::sregex_iterator(t.begin(), t.end(), attr); a != std::sregex_iterator(); ++a) {
      const auto key = (*a)[1].str(), val = (*a)[2].str();
      if (key == "architecture") m.arch = val;
      if (key == "operator") m.op = val;
      if (key == "series") m.series = val;
      if (key == "value") m.value = val;
    }
    out.push_back(m);
  }
  return out;
}

std::map<std::string, std::vector<std::string>> csv_rows(const std::string& csv) {
  std::istringstream in(csv);
  const auto rows = read_csv(in);
  std::map<std::string, std::vector<std::string>> out;
  for (std::size_t r = 1; r < rows.size(); ++r) out[rows[r][0] + "/" + rows[r][1]] = rows[r];
  return out;
}

GridReport sample_grid(const RankingPolicy& policy) {
  GridReport g = GridReport::empty(policy);
  int i = 0;
  for (auto& c : g.cells) {
    ++i;
    if (i == 7) continue;  // one failed cell
    MetricsReport m;
    m.accuracy = 0.5 + i / 97.0;
    m.weighted_f1 = 0.4 + i / 83.0;
    m.mean_loss = 1.0 / (i + 1.0);
    m.loss_std = 0.01 * i;
    c.metrics = m;
  }
  return g;
}

std::string cell_text(const std::string& svg, const std::string& arch, const std::string& op) {
  const std::regex re("<text class=\"cell-text\" data-architecture=\"" + arch + "\" data-operator=\"" + op +
                      "\"[^>]*>([^<]*)</text>");
  std::smatch m;
  return std::regex_search(svg, m, re) ? m[1].str() : std::string("<missing>");
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("csv has every cell and marks failures") {
  const auto grid = sample_grid(balanced_policy());
  std::ostringstream out;
  write_grid_csv(grid, out);
  const auto csv = out.str();
  CHECK(csv.substr(0, csv.find('\n')) == "architecture,operator,accuracy,weighted_f1,mean_loss,loss_std");
  const auto rows = csv_rows(csv);
  CHECK(rows.size() == 24);
  int failed = 0;
  for (const auto& [key, row] : rows) {
    REQUIRE(row.size() == 6);
    if (row[2] == "failed") {
      ++failed;
      CHECK(row[3] == "failed");
      CHECK(row[5] == "failed");
    }
  }
  CHECK(failed == 1);

  std::istringstream in(csv);
  const auto back = read_grid_csv(in, balanced_policy());
  CHECK(back.completed() == 23);
  std::ostringstream again;
  write_grid_csv(back, again);
  CHECK(again.str() == csv);
}

TEST_CASE("csv reader rejects malformed input") {
  std::istringstream bad_header("a,b\n");
  CHECK_THROWS_AS(read_grid_csv(bad_header, balanced_policy()), SchemaError);
  std::istringstream bad_value("architecture,operator,accuracy,weighted_f1,mean_loss,loss_std\none_level,gcn,x,1,1,1\n");
  CHECK_THROWS_AS(read_grid_csv(bad_value, balanced_policy()), ParseError);
}

TEST_CASE("heatmap values equal the csv values") {
  for (const auto& policy : {balanced_policy(), imbalanced_policy()}) {
    const auto grid = sample_grid(policy);
    std::ostringstream out;
    write_grid_csv(grid, out);
    const auto rows = csv_rows(out.str());
    const std::size_t column = policy.primary == PrimaryMetric::accuracy ? 2 : 3;
    const auto svg = heatmap_svg(grid);
    const auto cells = marks(svg, "rect");
    REQUIRE(cells.size() == 24);
    for (const auto& m : cells) {
      CAPTURE(m.arch + "/" + m.op);
      const auto& row = rows.at(m.arch + "/" + m.op);
      CHECK(m.value == row[column]);
      const std::string text = cell_text(svg, m.arch, m.op);
      if (row[column] == "failed") {
        CHECK(text == "failed");
      } else {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", std::stod(row[column]));
        CHECK(text == buf);
      }
    }
  }
}

TEST_CASE("radar points equal the csv values") {
  const auto grid = sample_grid(balanced_policy());
  std::ostringstream out;
  write_grid_csv(grid, out);
  const auto rows = csv_rows(out.str());
  for (auto op : kAllOperators) {
    const auto points = marks(radar_svg(grid, op), "circle");
    REQUIRE(points.size() == 8);
    for (const auto& m : points) {
      CHECK(m.op == to_string(op));
      const auto& row = rows.at(m.arch + "/" + m.op);
      CHECK(m.value == row[m.series == "accuracy" ? 2 : 3]);
    }
  }
}

TEST_CASE("figures are written to disk") {
  const auto dir = fs::temp_directory_path() / "hgnn_report_figures";
  fs::remove_all(dir);
  const auto paths = write_figures(sample_grid(balanced_policy()), dir);
  CHECK(paths.size() == 7);
  for (const auto& p : paths) CHECK(fs::file_size(p) > 0);
  CHECK(fs::exists(dir / "radar_cheb.svg"));
}

TEST_CASE("grid runs one study per cell") {
  const auto data = hgnn::testing::tiny_dataset(24, 2, 4);
  GridOptions o;
  o.base.max_epochs = 1;
  o.base.patience = 0;
  o.base.seed = 9;
  o.trials_per_cell = 1;
  o.out_dir = fs::temp_directory_path() / "hgnn_report_grid";
  fs::remove_all(o.out_dir);
  int seen = 0;
  const auto grid = run_grid(o, data, [&](const GridCell&) { ++seen; });
  CHECK(seen == 24);
  CHECK(grid.cells.size() == 24);
  for (const auto& c : grid.cells) {
    CAPTURE(c.error);
    CHECK(c.metrics.has_value());
  }
  CHECK(fs::exists(o.out_dir / "trials_two_level_embedding_gin.jsonl"));
  CHECK(fs::exists(o.out_dir / "config_one_level_sage.json"));
}

}  // TEST_SUITE
