// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "vlg/snare.hpp"

using namespace vlg;

namespace {

std::string write_temp(const char* name, const std::string& content) {
  const std::string path =
      (std::filesystem::temp_directory_path() / name).string();
  std::ofstream os(path);
  os << content;
  return path;
}

std::vector<ReferenceInstance> fixture_instances() {
  std::vector<ReferenceInstance> out;
  out.push_back({"a", "b", "d1", Category::visual, Split::train});
  out.push_back({"b", "c", "d2", Category::visual, Split::train});
  out.push_back({"a", "c", "d3", Category::blind, Split::train});
  out.push_back({"d", "e", "d4", Category::blind, Split::valid});
  return out;
}

}  // namespace

TEST_CASE("parse_annotations: named-field record shape") {
  const char* text = R"([
    {"target": "chair1", "distractor": "chair2", "description_id": "d0",
     "category": "visual", "split": "train"}
  ])";
  auto instances = parse_annotations(text, std::nullopt);
  REQUIRE(instances.size() == 1);
  CHECK(instances[0].target_id == "chair1");
  CHECK(instances[0].distractor_id == "chair2");
  CHECK(instances[0].description_id == "d0");
  CHECK(instances[0].category == Category::visual);
  CHECK(instances[0].split == Split::train);
}

TEST_CASE("parse_annotations: candidate-list record shape") {
  const char* text = R"([
    {"objects": ["x", "y"], "ans": 1, "annotation": "the squat one",
     "visual": 0}
  ])";
  auto instances = parse_annotations(text, Split::test);
  REQUIRE(instances.size() == 1);
  CHECK(instances[0].target_id == "y");
  CHECK(instances[0].distractor_id == "x");
  CHECK(instances[0].description_id == "the squat one");
  CHECK(instances[0].category == Category::blind);
  CHECK(instances[0].split == Split::test);
}

TEST_CASE("parse_annotations: identical candidates are rejected by record") {
  const char* text = R"([
    {"target": "same", "distractor": "same", "description_id": "d",
     "category": "blind", "split": "train"}
  ])";
  try {
    parse_annotations(text, std::nullopt);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("record 0") != std::string::npos);
    CHECK(std::string(e.what()).find("same") != std::string::npos);
  }
}

TEST_CASE("parse_annotations: more than two candidates are rejected") {
  const char* text = R"([
    {"objects": ["x", "y", "z"], "ans": 0, "annotation": "a",
     "visual": 1, "split": "train"}
  ])";
  CHECK_THROWS_AS(parse_annotations(text, std::nullopt), ParseError);
}

TEST_CASE("parse_annotations: load is atomic on a malformed record") {
  const char* text = R"([
    {"target": "a", "distractor": "b", "description_id": "d0",
     "category": "visual", "split": "train"},
    {"target": "a", "distractor": "c", "category": "visual", "split": "train"}
  ])";
  try {
    parse_annotations(text, std::nullopt);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("record 1") != std::string::npos);
  }
}

TEST_CASE("parse_annotations: category counts on a small fixture") {
  const char* text = R"([
    {"target": "a", "distractor": "b", "description_id": "1", "category": "visual", "split": "train"},
    {"target": "a", "distractor": "c", "description_id": "2", "category": "visual", "split": "train"},
    {"target": "b", "distractor": "c", "description_id": "3", "category": "blind", "split": "train"},
    {"target": "c", "distractor": "a", "description_id": "4", "category": "blind", "split": "train"}
  ])";
  auto instances = parse_annotations(text, std::nullopt);
  int visual = 0, blind = 0;
  for (const auto& inst : instances)
    (inst.category == Category::visual ? visual : blind) += 1;
  CHECK(visual == 2);
  CHECK(blind == 2);
}

TEST_CASE("load_annotations: split inferred from file name") {
  const std::string path = write_temp(
      "vlg_valid.json",
      R"([{"objects": ["p", "q"], "ans": 0, "annotation": "t", "visual": 1}])");
  auto instances = load_annotations(path);
  REQUIRE(instances.size() == 1);
  CHECK(instances[0].split == Split::valid);
  std::remove(path.c_str());
}

TEST_CASE("load_annotations: missing file raises IoError") {
  CHECK_THROWS_AS(load_annotations("/nonexistent/file.json"), IoError);
}

TEST_CASE("annotations round-trip through write and load") {
  auto instances = fixture_instances();
  const std::string path = write_temp("vlg_roundtrip_ann.json", "");
  write_annotations(instances, path);
  auto back = load_annotations(path);
  REQUIRE(back.size() == instances.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].target_id == instances[i].target_id);
    CHECK(back[i].distractor_id == instances[i].distractor_id);
    CHECK(back[i].description_id == instances[i].description_id);
    CHECK(back[i].category == instances[i].category);
    CHECK(back[i].split == instances[i].split);
  }
  std::remove(path.c_str());
}

TEST_CASE("compute_stats: pairings, unique objects, and both conventions") {
  auto instances = fixture_instances();
  // Add a swapped duplicate of instance 0 with the same description.
  instances.push_back({"b", "a", "d1", Category::visual, Split::train});
  SplitStats stats = compute_stats(instances);
  CHECK(stats.train.pairings == 4);
  CHECK(stats.train.pairings_unordered == 3);
  CHECK(stats.train.unique_objects == 3);
  CHECK(stats.valid.pairings == 1);
  CHECK(stats.valid.unique_objects == 2);
  CHECK(stats.test.pairings == 0);
  CHECK(stats.train.categories == -1);

  std::map<std::string, std::string> cats{
      {"a", "chair"}, {"b", "chair"}, {"c", "lamp"}, {"d", "mug"}, {"e", "mug"}};
  SplitStats with_cats = compute_stats(instances, &cats);
  CHECK(with_cats.train.categories == 2);
  CHECK(with_cats.valid.categories == 1);
}

TEST_CASE("validate_counts: small fixture fails with per-field diff") {
  CountsCheck check = validate_counts(fixture_instances());
  CHECK_FALSE(check.pass);
  CHECK(check.report.find("train_pairings expected=39104 actual=3 MISMATCH") !=
        std::string::npos);
  CHECK(check.report.find("valid_unique_objects expected=371 actual=2 MISMATCH") !=
        std::string::npos);
  CHECK(check.report.find("test_pairings expected=8751 actual=0 MISMATCH") !=
        std::string::npos);
}

TEST_CASE("reassign_split: reference membership wins for shared ids") {
  SplitAssignment pretrain{{"a", Split::train}, {"b", Split::train},
                           {"c", Split::test}};
  SplitAssignment snare{{"a", Split::valid}, {"z", Split::train}};
  SplitAssignment out = reassign_split(pretrain, snare);
  CHECK(out.at("a") == Split::valid);   // shared: reference split wins
  CHECK(out.at("b") == Split::train);   // only in pretrain: unchanged
  CHECK(out.at("c") == Split::test);    // only in pretrain: unchanged
  CHECK(out.count("z") == 0);           // only in reference: absent

  SplitAssignment empty_snare;
  CHECK(reassign_split(pretrain, empty_snare) == pretrain);

  // Idempotent.
  CHECK(reassign_split(out, snare) == out);
}

TEST_CASE("batch iterator: sizes, determinism, and partition") {
  std::vector<ReferenceInstance> instances;
  for (int i = 0; i < 5; ++i)
    instances.push_back({"t" + std::to_string(i), "d" + std::to_string(i),
                         "desc" + std::to_string(i), Category::visual,
                         Split::train});
  BatchIterator it(instances, Split::train, 11, 2);
  auto batches = it.epoch_batches(0);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 2);
  CHECK(batches[1].size() == 2);
  CHECK(batches[2].size() == 1);

  // Same (seed, epoch) -> identical order.
  auto again = it.epoch_batches(0);
  CHECK(batches == again);

  // Epoch partition: union of batches is the split, disjoint.
  std::set<std::size_t> seen;
  for (const auto& b : batches)
    for (std::size_t idx : b) CHECK(seen.insert(idx).second);
  CHECK(seen.size() == 5);

  // Different epochs reshuffle (checked once for this fixture).
  CHECK(it.epoch_batches(0) != it.epoch_batches(1));
}

TEST_CASE("batch iterator: different seeds give different orders") {
  std::vector<ReferenceInstance> instances;
  for (int i = 0; i < 12; ++i)
    instances.push_back({"t" + std::to_string(i), "d" + std::to_string(i),
                         "desc" + std::to_string(i), Category::blind,
                         Split::train});
  BatchIterator a(instances, Split::train, 1, 4);
  BatchIterator b(instances, Split::train, 2, 4);
  // Verified once by enumeration when this fixture was fixed: the orders for
  // seeds 1 and 2 differ.
  CHECK(a.epoch_batches(0) != b.epoch_batches(0));
}

TEST_CASE("batch iterator: empty split is an explicit error") {
  auto instances = fixture_instances();
  CHECK_THROWS_WITH_AS(BatchIterator(instances, Split::test, 1, 2),
                       doctest::Contains("empty split"), ValidationError);
  CHECK_THROWS_AS(BatchIterator(instances, Split::train, 1, 0),
                  ValidationError);
}

TEST_CASE("category map loader") {
  const std::string path = write_temp("vlg_cats.txt",
                                      "# comment\nobj1=chair\nobj2=bench\n");
  auto cats = load_category_map(path);
  CHECK(cats.size() == 2);
  CHECK(cats.at("obj1") == "chair");
  CHECK(cats.at("obj2") == "bench");
  std::remove(path.c_str());

  const std::string bad = write_temp("vlg_cats_bad.txt", "no separator here\n");
  CHECK_THROWS_AS(load_category_map(bad), ParseError);
  std::remove(bad.c_str());
}
