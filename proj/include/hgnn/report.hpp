#pragma once

// Grid results table and SVG figures (heatmap, per-operator radar charts).

#include "hgnn/config.hpp"
#include "hgnn/study.hpp"
#include "hgnn/trainer.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace hgnn {

struct GridCell {
  Architecture architecture = Architecture::one_level;
  OperatorKind op = OperatorKind::gcn;
  std::optional<MetricsReport> metrics;  // empty when the cell failed
  std::string error;
};

/// Always 24 cells in architecture-major order.
struct GridReport {
  RankingPolicy policy;
  std::vector<GridCell> cells;

  static GridReport empty(const RankingPolicy& policy);
  GridCell& at(Architecture a, OperatorKind op);
  const GridCell& at(Architecture a, OperatorKind op) const;
  int completed() const;
};

inline constexpr const char* kGridColumns[] = {"architecture", "operator", "accuracy",
                                               "weighted_f1",  "mean_loss", "loss_std"};

/// The one formatting used for every number written to the CSV and SVGs.
std::string format_value(double v);
/// Rounded cell text shown in the heatmap.
std::string format_cell_text(const std::string& csv_value);

void write_grid_csv(const GridReport& grid, std::ostream& out);
/// Failed cells carry the literal "failed" in every metric column.
GridReport read_grid_csv(std::istream& in, const RankingPolicy& policy);

std::string heatmap_svg(const GridReport& grid);
std::string radar_svg(const GridReport& grid, OperatorKind op);

struct GridOptions {
  StudyConfig base;          // architecture and operator are overwritten per cell
  int trials_per_cell = 200;
  int total_budget = 0;      // > 0 divides this many trials evenly over the cells
  int cell_workers = 1;      // cells run concurrently; each study stays sequential
  std::filesystem::path out_dir;
};

/// Runs one study per cell, writing trials_<arch>_<op>.jsonl and
/// config_<arch>_<op>.json under out_dir. A cell reports its retrained
/// winner's best-epoch metrics.
GridReport run_grid(const GridOptions& options, const EncodedDataset& data,
                    const std::function<void(const GridCell&)>& progress = {});

/// Writes heatmap.svg and radar_<op>.svg into `dir`; returns the paths.
std::vector<std::filesystem::path> write_figures(const GridReport& grid, const std::filesystem::path& dir);

}  // namespace hgnn
