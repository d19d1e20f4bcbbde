// SPDX-License-Identifier: Apache-2.0
#include "vlg/evaluation.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace vlg {

namespace {

double percent(long correct, long count) {
  return 100.0 * static_cast<double>(correct) / static_cast<double>(count);
}

std::string format1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

std::string cell_text(const std::optional<MeanStd>& ms) {
  if (!ms) return "-";
  std::string s = format1(ms->mean);
  if (ms->stddev) s += " (" + format1(*ms->stddev) + ")";
  return s;
}

}  // namespace

double CategoryAccuracy::visual() const {
  if (!has_visual()) throw ValidationError("no visual instances");
  return percent(visual_correct, visual_count);
}

double CategoryAccuracy::blind() const {
  if (!has_blind()) throw ValidationError("no blind instances");
  return percent(blind_correct, blind_count);
}

double CategoryAccuracy::all() const {
  const long count = visual_count + blind_count;
  if (count == 0) throw ValidationError("no instances");
  return percent(visual_correct + blind_correct, count);
}

std::string CategoryAccuracy::to_line() const {
  std::ostringstream os;
  os << "visual=" << (has_visual() ? format1(visual()) : "absent");
  os << " blind=" << (has_blind() ? format1(blind()) : "absent");
  os << " all=" << format1(all());
  return os.str();
}

CategoryAccuracy accuracy(const std::vector<int>& predictions,
                          const std::vector<ReferenceInstance>& instances) {
  if (predictions.size() != instances.size())
    throw ValidationError("got " + std::to_string(predictions.size()) +
                          " predictions for " +
                          std::to_string(instances.size()) + " instances");
  CategoryAccuracy acc;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const bool correct = predictions[i] == 0;
    if (instances[i].category == Category::visual) {
      acc.visual_count += 1;
      acc.visual_correct += correct ? 1 : 0;
    } else {
      acc.blind_count += 1;
      acc.blind_correct += correct ? 1 : 0;
    }
  }
  return acc;
}

CategoryAccuracy evaluate_split(const ParameterSet& params,
                                const std::vector<ReferenceInstance>& instances,
                                Split split, const FeatureArchive& archive) {
  std::vector<ReferenceInstance> subset;
  for (const auto& inst : instances)
    if (inst.split == split) subset.push_back(inst);
  if (subset.empty())
    throw ValidationError(std::string("empty split '") + to_string(split) +
                          "' in evaluation");
  std::vector<int> predictions;
  predictions.reserve(subset.size());
  for (const auto& inst : subset)
    predictions.push_back(forward_instance(inst, archive, params).predicted_index);
  return accuracy(predictions, subset);
}

AggregateAccuracy aggregate_runs(const std::vector<CategoryAccuracy>& runs) {
  if (runs.empty()) throw ValidationError("aggregate_runs over zero runs");
  AggregateAccuracy out;
  out.runs = static_cast<int>(runs.size());
  std::vector<double> visual, blind, all;
  for (const auto& run : runs) {
    if (run.has_visual()) visual.push_back(run.visual());
    if (run.has_blind()) blind.push_back(run.blind());
    all.push_back(run.all());
  }
  if (!visual.empty()) out.visual = mean_std(visual);
  if (!blind.empty()) out.blind = mean_std(blind);
  out.all = mean_std(all);
  return out;
}

std::string render_table(const std::vector<ResultRow>& rows,
                         const std::string& split_filter) {
  std::vector<ResultRow> selected;
  for (const auto& row : rows)
    if (split_filter.empty() || row.split_tag == split_filter)
      selected.push_back(row);

  const std::array<std::string, 4> headers = {"Model", "Visual", "Blind", "All"};
  std::vector<std::array<std::string, 4>> cells;
  for (const auto& row : selected)
    cells.push_back({row.name, cell_text(row.visual), cell_text(row.blind),
                     cell_text(row.all)});

  std::array<std::size_t, 4> widths;
  for (std::size_t c = 0; c < 4; ++c) {
    widths[c] = headers[c].size();
    for (const auto& row : cells) widths[c] = std::max(widths[c], row[c].size());
  }

  std::ostringstream os;
  auto emit = [&](const std::array<std::string, 4>& row) {
    for (std::size_t c = 0; c < 4; ++c) {
      os << row[c];
      if (c + 1 < 4)
        os << std::string(widths[c] - row[c].size() + 2, ' ');
    }
    os << "\n";
  };
  emit(headers);
  for (const auto& row : cells) emit(row);
  return os.str();
}

namespace {

std::optional<MeanStd> parse_cell(const std::string& cell) {
  if (cell == "-") return std::nullopt;
  MeanStd ms;
  const auto paren = cell.find(" (");
  if (paren == std::string::npos) {
    ms.mean = std::stod(cell);
  } else {
    ms.mean = std::stod(cell.substr(0, paren));
    const auto close = cell.find(')', paren);
    if (close == std::string::npos)
      throw ParseError("unterminated std in table cell '" + cell + "'");
    ms.stddev = std::stod(cell.substr(paren + 2, close - paren - 2));
  }
  return ms;
}

std::vector<std::string> split_columns(const std::string& line) {
  // Columns are separated by runs of two or more spaces.
  std::vector<std::string> cols;
  std::size_t i = 0;
  while (i < line.size()) {
    std::size_t j = i;
    while (j < line.size() &&
           !(line[j] == ' ' && j + 1 < line.size() && line[j + 1] == ' '))
      ++j;
    cols.push_back(line.substr(i, j - i));
    while (j < line.size() && line[j] == ' ') ++j;
    i = j;
  }
  return cols;
}

}  // namespace

std::vector<ResultRow> parse_table(const std::string& text,
                                   const std::string& split_tag) {
  std::istringstream is(text);
  std::string line;
  std::vector<ResultRow> rows;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cols = split_columns(line);
    if (!header_seen) {
      if (cols.size() != 4 || cols[0] != "Model")
        throw ParseError("table header not recognized: '" + line + "'");
      header_seen = true;
      continue;
    }
    if (cols.size() != 4)
      throw ParseError("table row with " + std::to_string(cols.size()) +
                       " columns: '" + line + "'");
    ResultRow row;
    row.name = cols[0];
    row.split_tag = split_tag;
    row.visual = parse_cell(cols[1]);
    row.blind = parse_cell(cols[2]);
    row.all = parse_cell(cols[3]);
    rows.push_back(std::move(row));
  }
  if (!header_seen) throw ParseError("table text has no header line");
  return rows;
}

namespace {

void append_field(std::string& line, const char* key,
                  const std::optional<MeanStd>& ms) {
  if (!ms) return;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "|%s=%.17g", key, ms->mean);
  line += buf;
  if (ms->stddev) {
    std::snprintf(buf, sizeof(buf), "|%s_std=%.17g", key, *ms->stddev);
    line += buf;
  }
}

}  // namespace

void save_result_rows(const std::vector<ResultRow>& rows,
                      const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& row : rows) {
    std::string line = "name=" + row.name + "|split=" + row.split_tag;
    append_field(line, "visual", row.visual);
    append_field(line, "blind", row.blind);
    append_field(line, "all", row.all);
    os << line << "\n";
  }
  if (!os) throw IoError("write to '" + path + "' failed");
}

std::vector<ResultRow> load_result_rows(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open result rows '" + path + "'");
  std::vector<ResultRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    ResultRow row;
    std::map<std::string, std::string> kv;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, '|')) {
      const auto eq = field.find('=');
      if (eq == std::string::npos)
        throw ParseError("result row line " + std::to_string(lineno) +
                         ": field '" + field + "' is not key=value");
      kv[field.substr(0, eq)] = field.substr(eq + 1);
    }
    if (!kv.count("name"))
      throw ParseError("result row line " + std::to_string(lineno) +
                       " is missing 'name'");
    row.name = kv["name"];
    row.split_tag = kv.count("split") ? kv["split"] : "";
    auto grab = [&kv](const char* key) -> std::optional<MeanStd> {
      if (!kv.count(key)) return std::nullopt;
      MeanStd ms;
      ms.mean = std::stod(kv[key]);
      const std::string std_key = std::string(key) + "_std";
      if (kv.count(std_key)) ms.stddev = std::stod(kv[std_key]);
      return ms;
    };
    row.visual = grab("visual");
    row.blind = grab("blind");
    row.all = grab("all");
    rows.push_back(std::move(row));
  }
  return rows;
}

void save_plot_csv(const std::vector<std::pair<double, double>>& points,
                   const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "x,y\n";
  for (const auto& [x, y] : points) {
    char buf[80];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", x, y);
    os << buf;
  }
  if (!os) throw IoError("write to '" + path + "' failed");
}

}  // namespace vlg
