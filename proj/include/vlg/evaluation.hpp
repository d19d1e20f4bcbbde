// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vlg/model.hpp"
#include "vlg/snare.hpp"
#include "vlg/stats.hpp"

namespace vlg {

// Reference-game accuracy stratified by description category. Percentages
// are in [0, 100]; a category with no instances is reported as absent and
// "all" covers the union of whatever is present.
struct CategoryAccuracy {
  long visual_correct = 0;
  long visual_count = 0;
  long blind_correct = 0;
  long blind_count = 0;

  bool has_visual() const { return visual_count > 0; }
  bool has_blind() const { return blind_count > 0; }
  double visual() const;
  double blind() const;
  double all() const;
  std::string to_line() const;  // "visual=.. blind=.. all=.."
};

// predictions[i] is the predicted candidate index for instances[i]
// (0 = target). Lengths must match.
CategoryAccuracy accuracy(const std::vector<int>& predictions,
                          const std::vector<ReferenceInstance>& instances);

// Runs the model over every instance of the split.
CategoryAccuracy evaluate_split(const ParameterSet& params,
                                const std::vector<ReferenceInstance>& instances,
                                Split split, const FeatureArchive& archive);

struct AggregateAccuracy {
  std::optional<MeanStd> visual, blind, all;
  int runs = 0;
};

// Mean and sample (n-1) standard deviation per field over per-seed runs.
AggregateAccuracy aggregate_runs(const std::vector<CategoryAccuracy>& runs);

struct ResultRow {
  std::string name;
  std::string split_tag;  // e.g. "val" / "test"; used for filtering
  std::optional<MeanStd> visual, blind, all;
};

// Fixed-width text table. Cells render as "91.2" or "91.2 (0.4)" (one
// decimal place for both mean and std). Columns are left-justified and
// padded to the widest cell in the column plus a two-space separator; the
// last column carries no padding. Byte-deterministic.
std::string render_table(const std::vector<ResultRow>& rows,
                         const std::string& split_filter = "");

// Inverse of render_table for round-trip tests and report ingestion; the
// split tag of every parsed row is set from the argument.
std::vector<ResultRow> parse_table(const std::string& text,
                                   const std::string& split_tag);

// Structured-text persistence, one '|'-separated key=value row per line.
void save_result_rows(const std::vector<ResultRow>& rows,
                      const std::string& path);
std::vector<ResultRow> load_result_rows(const std::string& path);

// Two-column CSV dump for external plotting.
void save_plot_csv(const std::vector<std::pair<double, double>>& points,
                   const std::string& path);

}  // namespace vlg
