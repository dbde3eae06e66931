#include "hgnn/report.hpp"

#include "hgnn/eventlog.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

namespace hgnn {

GridReport GridReport::empty(const RankingPolicy& policy) {
  GridReport g;
  g.policy = policy;
  for (auto a : kAllArchitectures) {
    for (auto op : kAllOperators) g.cells.push_back({a, op, std::nullopt, ""});
  }
  return g;
}

GridCell& GridReport::at(Architecture a, OperatorKind op) {
  for (auto& c : cells) {
    if (c.architecture == a && c.op == op) return c;
  }
  throw ContractError("grid: missing cell " + to_string(a) + "/" + to_string(op));
}

const GridCell& GridReport::at(Architecture a, OperatorKind op) const {
  return const_cast<GridReport*>(this)->at(a, op);
}

int GridReport::completed() const {
  return static_cast<int>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return c.metrics.has_value(); }));
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string format_cell_text(const std::string& csv_value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", std::stod(csv_value));
  return buf;
}

void write_grid_csv(const GridReport& grid, std::ostream& out) {
  for (std::size_t i = 0; i < std::size(kGridColumns); ++i) out << (i ? "," : "") << kGridColumns[i];
  out << '\n';
  for (const auto& c : grid.cells) {
    out << to_string(c.architecture) << ',' << to_string(c.op);
    if (c.metrics) {
      out << ',' << format_value(c.metrics->accuracy) << ',' << format_value(c.metrics->weighted_f1) << ','
          << format_value(c.metrics->mean_loss) << ',' << format_value(c.metrics->loss_std);
    } else {
      out << ",failed,failed,failed,failed";
    }
    out << '\n';
  }
}

GridReport read_grid_csv(std::istream& in, const RankingPolicy& policy) {
  const auto rows = read_csv(in);
  if (rows.empty()) throw SchemaError("grid csv: empty file");
  const std::vector<std::string> header(std::begin(kGridColumns), std::end(kGridColumns));
  if (rows[0] != header) throw SchemaError("grid csv: unexpected header");
  GridReport g = GridReport::empty(policy);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) throw ParseError(static_cast<int>(r + 1), "expected 6 fields");
    GridCell& cell = g.at(architecture_from_string(row[0]), operator_from_string(row[1]));
    if (row[2] == "failed") {
      cell.metrics.reset();
      continue;
    }
    MetricsReport m;
    try {
      m.accuracy = std::stod(row[2]);
      m.weighted_f1 = std::stod(row[3]);
      m.mean_loss = std::stod(row[4]);
      m.loss_std = std::stod(row[5]);
    } catch (const std::exception&) {
      throw ParseError(static_cast<int>(r + 1), "non-numeric metric");
    }
    cell.metrics = m;
  }
  return g;
}

namespace {

// Two-stop ramp from a pale to a dark blue.
constexpr int kLow[3] = {0xf7, 0xfb, 0xff};
constexpr int kHigh[3] = {0x08, 0x30, 0x6b};

std::string ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  char buf[16];
  int c[3];
  for (int i = 0; i < 3; ++i) c[i] = static_cast<int>(std::lround(kLow[i] + (kHigh[i] - kLow[i]) * t));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string metric_name(const RankingPolicy& p) { return to_string(p.primary); }

double metric_of(const MetricsReport& m, const RankingPolicy& p) { return primary_value(m, p.primary); }

}  // namespace

std::string heatmap_svg(const GridReport& grid) {
  const double cell_w = 90, cell_h = 44, left = 170, top = 60;
  const double width = left + cell_w * std::size(kAllOperators) + 20;
  const double height = top + cell_h * std::size(kAllArchitectures) + 40;
  const std::string metric = metric_name(grid.policy);

  double lo = 1e300, hi = -1e300;
  for (const auto& c : grid.cells) {
    if (!c.metrics) continue;
    const double v = std::stod(format_value(metric_of(*c.metrics, grid.policy)));
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
    << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\" font-family=\"sans-serif\">\n";
  s << "  <title>" << metric << " heatmap</title>\n";
  s << "  <text x=\"" << num(width / 2) << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\">" << metric
    << " by architecture and operator</text>\n";
  for (std::size_t j = 0; j < std::size(kAllOperators); ++j) {
    s << "  <text class=\"col-label\" x=\"" << num(left + cell_w * (j + 0.5)) << "\" y=\"" << num(top - 8)
      << "\" text-anchor=\"middle\" font-size=\"12\">" << operator_display_name(kAllOperators[j]) << "</text>\n";
  }
  for (std::size_t i = 0; i < std::size(kAllArchitectures); ++i) {
    const auto arch = kAllArchitectures[i];
    s << "  <text class=\"row-label\" x=\"" << num(left - 8) << "\" y=\"" << num(top + cell_h * (i + 0.5) + 4)
      << "\" text-anchor=\"end\" font-size=\"12\">" << to_string(arch) << "</text>\n";
    for (std::size_t j = 0; j < std::size(kAllOperators); ++j) {
      const auto op = kAllOperators[j];
      const auto& cell = grid.at(arch, op);
      const double x = left + cell_w * j, y = top + cell_h * i;
      std::string fill = "#cccccc", text = "failed", value = "failed", ink = "#000000";
      if (cell.metrics) {
        value = format_value(metric_of(*cell.metrics, grid.policy));
        const double t = hi > lo ? (std::stod(value) - lo) / (hi - lo) : 1.0;
        fill = ramp(t);
        text = format_cell_text(value);
        if (t > 0.5) ink = "#ffffff";
      }
      s << "  <rect class=\"cell\" data-architecture=\"" << to_string(arch) << "\" data-operator=\""
        << to_string(op) << "\" data-metric=\"" << metric << "\" data-value=\"" << value << "\" x=\"" << num(x)
        << "\" y=\"" << num(y) << "\" width=\"" << num(cell_w) << "\" height=\"" << num(cell_h) << "\" fill=\""
        << fill << "\" stroke=\"#ffffff\"/>\n";
      s << "  <text class=\"cell-text\" data-architecture=\"" << to_string(arch) << "\" data-operator=\""
        << to_string(op) << "\" x=\"" << num(x + cell_w / 2) << "\" y=\"" << num(y + cell_h / 2 + 4)
        << "\" text-anchor=\"middle\" font-size=\"12\" fill=\"" << ink << "\">" << text << "</text>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

std::string radar_svg(const GridReport& grid, OperatorKind op) {
  const double size = 420, cx = size / 2, cy = size / 2 + 10, radius = 140;
  const std::size_t spokes = std::size(kAllArchitectures);
  auto point = [&](std::size_t k, double r) {
    const double angle = -std::numbers::pi / 2 + 2 * std::numbers::pi * static_cast<double>(k) / spokes;
    return std::pair{cx + r * std::cos(angle), cy + r * std::sin(angle)};
  };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(size) << "\" height=\"" << num(size + 20)
    << "\" viewBox=\"0 0 " << num(size) << ' ' << num(size + 20) << "\" font-family=\"sans-serif\">\n";
  s << "  <title>" << operator_display_name(op) << " radar</title>\n";
  s << "  <text x=\"" << num(cx) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
    << operator_display_name(op) << "</text>\n";
  for (double ring : {0.25, 0.5, 0.75, 1.0}) {
    std::string pts;
    for (std::size_t k = 0; k < spokes; ++k) {
      const auto [x, y] = point(k, radius * ring);
      pts += (k ? " " : "") + num(x) + "," + num(y);
    }
    s << "  <polygon class=\"grid\" points=\"" << pts << "\" fill=\"none\" stroke=\"#dddddd\"/>\n";
  }
  for (std::size_t k = 0; k < spokes; ++k) {
    const auto [x, y] = point(k, radius);
    const auto [lx, ly] = point(k, radius + 22);
    s << "  <line class=\"spoke\" x1=\"" << num(cx) << "\" y1=\"" << num(cy) << "\" x2=\"" << num(x) << "\" y2=\""
      << num(y) << "\" stroke=\"#bbbbbb\"/>\n";
    s << "  <text class=\"spoke-label\" x=\"" << num(lx) << "\" y=\"" << num(ly + 4)
      << "\" text-anchor=\"middle\" font-size=\"12\">" << short_label(kAllArchitectures[k]) << "</text>\n";
  }

  struct Series {
    const char* name;
    const char* color;
    double (*get)(const MetricsReport&);
  };
  const Series series[] = {{"accuracy", "#1f77b4", [](const MetricsReport& m) { return m.accuracy; }},
                           {"weighted_f1", "#d62728", [](const MetricsReport& m) { return m.weighted_f1; }}};
  for (const auto& ser : series) {
    std::string pts;
    std::ostringstream dots;
    for (std::size_t k = 0; k < spokes; ++k) {
      const auto arch = kAllArchitectures[k];
      const auto& cell = grid.at(arch, op);
      std::string value = "failed";
      double r = 0;
      if (cell.metrics) {
        value = format_value(ser.get(*cell.metrics));
        r = radius * std::clamp(std::stod(value), 0.0, 1.0);
      }
      const auto [x, y] = point(k, r);
      pts += (k ? " " : "") + num(x) + "," + num(y);
      dots << "  <circle class=\"point\" data-series=\"" << ser.name << "\" data-architecture=\"" << to_string(arch)
           << "\" data-operator=\"" << to_string(op) << "\" data-value=\"" << value << "\" cx=\"" << num(x)
           << "\" cy=\"" << num(y) << "\" r=\"3\" fill=\"" << ser.color << "\"/>\n";
    }
    s << "  <polygon class=\"series\" data-series=\"" << ser.name << "\" points=\"" << pts << "\" fill=\""
      << ser.color << "\" fill-opacity=\"0.15\" stroke=\"" << ser.color << "\"/>\n";
    s << dots.str();
  }
  s << "  <text x=\"12\" y=\"" << num(size + 12) << "\" font-size=\"11\" fill=\"#1f77b4\">accuracy</text>\n";
  s << "  <text x=\"90\" y=\"" << num(size + 12) << "\" font-size=\"11\" fill=\"#d62728\">weighted_f1</text>\n";
  s << "</svg>\n";
  return s.str();
}

GridReport run_grid(const GridOptions& options, const EncodedDataset& data,
                    const std::function<void(const GridCell&)>& progress) {
  GridReport grid = GridReport::empty(options.base.policy);
  const int n_cells = static_cast<int>(grid.cells.size());
  const int per_cell = options.total_budget > 0 ? std::max(1, options.total_budget / n_cells) : options.trials_per_cell;
  if (!options.out_dir.empty()) std::filesystem::create_directories(options.out_dir);

  auto run_cell = [&](std::size_t i) {
    GridCell& cell = grid.cells[i];
    StudyConfig sc = options.base;
    sc.architecture = cell.architecture;
    sc.op = cell.op;
    sc.n_trials = per_cell;
    sc.workers = 1;
    sc.seed = derive_seed(options.base.seed, i, 5);
    const std::string stem = to_string(cell.architecture) + "_" + to_string(cell.op);
    if (!options.out_dir.empty()) sc.trials_path = (options.out_dir / ("trials_" + stem + ".jsonl")).string();
    try {
      const StudyResult r = run_study(sc, data);
      if (r.retrained && r.retrained->status == TrainStatus::completed) {
        cell.metrics = r.retrained->best_metrics;
      } else {
        cell.metrics = r.tuned_metrics;
      }
      if (!options.out_dir.empty()) {
        save_model_config(r.best_config, (options.out_dir / ("config_" + stem + ".json")).string());
      }
    } catch (const std::exception& e) {
      cell.metrics.reset();
      cell.error = e.what();
    }
  };

  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&]() {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next >= grid.cells.size()) return;
        i = next++;
      }
      run_cell(i);
      if (progress) {
        std::lock_guard lock(mu);
        progress(grid.cells[i]);
      }
    }
  };
  const int workers = std::max(1, options.cell_workers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return grid;
}

std::vector<std::filesystem::path> write_figures(const GridReport& grid, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out;
  auto write = [&](const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
    f << text;
    out.push_back(p);
  };
  write(dir / "heatmap.svg", heatmap_svg(grid));
  for (auto op : kAllOperators) write(dir / ("radar_" + to_string(op) + ".svg"), radar_svg(grid, op));
  return out;
}

}  // namespace hgnn
