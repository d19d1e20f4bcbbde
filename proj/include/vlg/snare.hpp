// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vlg/common.hpp"

namespace vlg {

enum class Category { visual, blind };
enum class Split { train, valid, test };

const char* to_string(Category c);
const char* to_string(Split s);
Category category_from_string(const std::string& s);
Split split_from_string(const std::string& s);

// One round of the reference game: pick the target against the distractor
// given the description.
struct ReferenceInstance {
  std::string target_id;
  std::string distractor_id;
  std::string description_id;
  Category category = Category::visual;
  Split split = Split::train;
};

struct SplitCounts {
  long pairings = 0;            // annotation rows
  long pairings_unordered = 0;  // unique (unordered pair, description)
  long unique_objects = 0;
  long categories = -1;  // -1 when no object-category map was provided
};

struct SplitStats {
  SplitCounts train, valid, test;

  const SplitCounts& of(Split s) const;
  SplitCounts& of(Split s);
  std::string to_text() const;  // key=value lines
};

// object_id -> split membership.
using SplitAssignment = std::map<std::string, Split>;

// Loads annotation records from a JSON file. Accepted record shapes:
//   {"target": id, "distractor": id, ...}
//   {"objects": [id, id], "ans": 0|1, ...}  (exactly two candidates)
// description:  "description_id" or "annotation" (used verbatim as the id)
// category:     "category": "visual"|"blind"  or  "visual": bool|0|1
// split:        "split": "train"|"valid"|"val"|"test"; when absent, inferred
//               from the file name (train/valid/val/test substring).
// Any malformed record aborts the whole load with its record index.
std::vector<ReferenceInstance> load_annotations(const std::string& path);

// Same mapping applied to a parsed JSON text; default_split applies to
// records without an explicit split field.
std::vector<ReferenceInstance> parse_annotations(
    const std::string& json_text, std::optional<Split> default_split);

void write_annotations(const std::vector<ReferenceInstance>& instances,
                       const std::string& path);

// Optional sidecar mapping object_id -> category name, key=value lines.
std::map<std::string, std::string> load_category_map(const std::string& path);

SplitStats compute_stats(
    const std::vector<ReferenceInstance>& instances,
    const std::map<std::string, std::string>* category_map = nullptr);

struct CountsCheck {
  SplitStats stats;
  bool pass = false;
  std::string report;  // one line per checked constant
};

// Compares computed statistics against the reference dataset constants:
// pairings (39104 / 2304 / 8751), unique objects (6153 / 371 / 1357),
// categories (207 / 7 / 48) for train/valid/test.
CountsCheck validate_counts(
    const std::vector<ReferenceInstance>& instances,
    const std::map<std::string, std::string>* category_map = nullptr);

// Aligns reconstruction-pretraining split membership with the reference-game
// assignment: ids present in both take the reference split, ids only in the
// pretraining table keep theirs, ids only in the reference table are dropped.
SplitAssignment reassign_split(const SplitAssignment& pretrain,
                               const SplitAssignment& snare);

// Deterministic epoch batching over the instances of one split. The shuffle
// is a pure function of (seed, epoch); batches carry indices into the
// original instance vector, with the final short batch emitted.
class BatchIterator {
 public:
  BatchIterator(const std::vector<ReferenceInstance>& instances, Split split,
                std::uint64_t seed, int batch_size);

  std::vector<std::vector<std::size_t>> epoch_batches(int epoch) const;
  std::size_t instance_count() const { return indices_.size(); }

 private:
  std::vector<std::size_t> indices_;
  std::uint64_t seed_;
  int batch_size_;
};

}  // namespace vlg
