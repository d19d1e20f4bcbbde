// SPDX-License-Identifier: Apache-2.0
#include "vlg/snare.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace vlg {

using nlohmann::json;

const char* to_string(Category c) {
  return c == Category::visual ? "visual" : "blind";
}

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

Category category_from_string(const std::string& s) {
  if (s == "visual") return Category::visual;
  if (s == "blind" || s == "blindfolded") return Category::blind;
  throw ParseError("unknown category '" + s + "' (expected visual|blind)");
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "valid" || s == "val" || s == "validation") return Split::valid;
  if (s == "test") return Split::test;
  throw ParseError("unknown split '" + s + "' (expected train|valid|test)");
}

const SplitCounts& SplitStats::of(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::valid: return valid;
    case Split::test: return test;
  }
  return train;
}

SplitCounts& SplitStats::of(Split s) {
  switch (s) {
    case Split::train: return train;
    case Split::valid: return valid;
    case Split::test: return test;
  }
  return train;
}

std::string SplitStats::to_text() const {
  std::ostringstream os;
  for (Split s : {Split::train, Split::valid, Split::test}) {
    const SplitCounts& c = of(s);
    os << to_string(s) << "_pairings=" << c.pairings << "\n";
    if (c.pairings_unordered != c.pairings)
      os << to_string(s) << "_pairings_unordered=" << c.pairings_unordered
         << "\n";
    os << to_string(s) << "_unique_objects=" << c.unique_objects << "\n";
    if (c.categories >= 0)
      os << to_string(s) << "_categories=" << c.categories << "\n";
  }
  return os.str();
}

namespace {

ReferenceInstance parse_record(const json& rec, std::size_t index,
                               std::optional<Split> default_split) {
  auto fail = [index](const std::string& msg) -> ParseError {
    return ParseError("record " + std::to_string(index) + ": " + msg);
  };
  if (!rec.is_object()) throw fail("not a JSON object");

  ReferenceInstance inst;

  if (rec.contains("target") && rec.contains("distractor")) {
    if (!rec["target"].is_string() || !rec["distractor"].is_string())
      throw fail("'target'/'distractor' must be strings");
    inst.target_id = rec["target"].get<std::string>();
    inst.distractor_id = rec["distractor"].get<std::string>();
  } else if (rec.contains("objects")) {
    const json& objs = rec["objects"];
    if (!objs.is_array() || objs.size() != 2)
      throw fail("'objects' must list exactly two candidates, got " +
                 std::to_string(objs.is_array() ? objs.size() : 0));
    if (!rec.contains("ans")) throw fail("missing 'ans' target index");
    if (!rec["ans"].is_number_integer()) throw fail("'ans' must be an integer");
    const int ans = rec["ans"].get<int>();
    if (ans != 0 && ans != 1) throw fail("'ans' must be 0 or 1");
    if (!objs[0].is_string() || !objs[1].is_string())
      throw fail("candidate ids must be strings");
    inst.target_id = objs[static_cast<std::size_t>(ans)].get<std::string>();
    inst.distractor_id = objs[static_cast<std::size_t>(1 - ans)].get<std::string>();
  } else {
    throw fail("missing candidates: need 'target'+'distractor' or 'objects'+'ans'");
  }

  if (inst.target_id == inst.distractor_id)
    throw ValidationError("record " + std::to_string(index) +
                          ": target and distractor are the same object '" +
                          inst.target_id + "'");

  if (rec.contains("description_id") && rec["description_id"].is_string())
    inst.description_id = rec["description_id"].get<std::string>();
  else if (rec.contains("annotation") && rec["annotation"].is_string())
    inst.description_id = rec["annotation"].get<std::string>();
  else
    throw fail("missing 'description_id' or 'annotation'");

  if (rec.contains("category")) {
    if (!rec["category"].is_string()) throw fail("'category' must be a string");
    try {
      inst.category = category_from_string(rec["category"].get<std::string>());
    } catch (const ParseError& e) {
      throw fail(e.what());
    }
  } else if (rec.contains("visual")) {
    const json& v = rec["visual"];
    if (v.is_boolean())
      inst.category = v.get<bool>() ? Category::visual : Category::blind;
    else if (v.is_number_integer())
      inst.category = v.get<int>() != 0 ? Category::visual : Category::blind;
    else
      throw fail("'visual' must be a boolean or 0/1");
  } else {
    throw fail("missing 'category' or 'visual' field");
  }

  if (rec.contains("split")) {
    if (!rec["split"].is_string()) throw fail("'split' must be a string");
    try {
      inst.split = split_from_string(rec["split"].get<std::string>());
    } catch (const ParseError& e) {
      throw fail(e.what());
    }
  } else if (default_split) {
    inst.split = *default_split;
  } else {
    throw fail("missing 'split' and no default split for this file");
  }
  return inst;
}

std::optional<Split> split_from_filename(const std::string& path) {
  std::string name = path;
  const auto slash = name.find_last_of('/');
  if (slash != std::string::npos) name = name.substr(slash + 1);
  // "valid"/"val" must be probed before "train" to keep "validation_train..."
  // style names unambiguous; real asset names contain exactly one tag.
  if (name.find("valid") != std::string::npos ||
      name.find("val") != std::string::npos)
    return Split::valid;
  if (name.find("train") != std::string::npos) return Split::train;
  if (name.find("test") != std::string::npos) return Split::test;
  return std::nullopt;
}

}  // namespace

std::vector<ReferenceInstance> parse_annotations(
    const std::string& json_text, std::optional<Split> default_split) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("annotation JSON parse error: ") + e.what());
  }
  if (!doc.is_array())
    throw ParseError("annotation file must contain a JSON array of records");
  std::vector<ReferenceInstance> instances;
  instances.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i)
    instances.push_back(parse_record(doc[i], i, default_split));
  return instances;
}

std::vector<ReferenceInstance> load_annotations(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open annotation file '" + path + "'");
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_annotations(buf.str(), split_from_filename(path));
}

void write_annotations(const std::vector<ReferenceInstance>& instances,
                       const std::string& path) {
  json doc = json::array();
  for (const auto& inst : instances) {
    doc.push_back({{"target", inst.target_id},
                   {"distractor", inst.distractor_id},
                   {"description_id", inst.description_id},
                   {"category", to_string(inst.category)},
                   {"split", to_string(inst.split)}});
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << doc.dump(2) << "\n";
  if (!os) throw IoError("write to '" + path + "' failed");
}

std::map<std::string, std::string> load_category_map(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open category map '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("category map line " + std::to_string(lineno) +
                       ": expected object_id=category");
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

SplitStats compute_stats(
    const std::vector<ReferenceInstance>& instances,
    const std::map<std::string, std::string>* category_map) {
  SplitStats stats;
  std::map<Split, std::unordered_set<std::string>> objects;
  std::map<Split, std::set<std::string>> cats;
  std::map<Split, std::set<std::string>> unordered;
  for (const auto& inst : instances) {
    SplitCounts& c = stats.of(inst.split);
    c.pairings += 1;
    objects[inst.split].insert(inst.target_id);
    objects[inst.split].insert(inst.distractor_id);
    const std::string lo = std::min(inst.target_id, inst.distractor_id);
    const std::string hi = std::max(inst.target_id, inst.distractor_id);
    unordered[inst.split].insert(lo + "\x1f" + hi + "\x1f" +
                                 inst.description_id);
    if (category_map) {
      auto t = category_map->find(inst.target_id);
      if (t != category_map->end()) cats[inst.split].insert(t->second);
      auto d = category_map->find(inst.distractor_id);
      if (d != category_map->end()) cats[inst.split].insert(d->second);
    }
  }
  for (Split s : {Split::train, Split::valid, Split::test}) {
    stats.of(s).unique_objects = static_cast<long>(objects[s].size());
    stats.of(s).pairings_unordered = static_cast<long>(unordered[s].size());
    stats.of(s).categories =
        category_map ? static_cast<long>(cats[s].size()) : -1;
  }
  return stats;
}

CountsCheck validate_counts(
    const std::vector<ReferenceInstance>& instances,
    const std::map<std::string, std::string>* category_map) {
  // Reference constants for the full dataset, train/valid/test.
  constexpr long kPairings[3] = {39104, 2304, 8751};
  constexpr long kUniqueObjects[3] = {6153, 371, 1357};
  constexpr long kCategories[3] = {207, 7, 48};

  CountsCheck out;
  out.stats = compute_stats(instances, category_map);
  out.pass = true;
  std::ostringstream os;
  const Split splits[3] = {Split::train, Split::valid, Split::test};
  auto line = [&](const char* field, Split s, long expected, long actual) {
    const bool ok = expected == actual && actual >= 0;
    if (actual < 0) {
      os << to_string(s) << "_" << field << " expected=" << expected
         << " actual=unavailable SKIP\n";
      out.pass = false;
    } else {
      os << to_string(s) << "_" << field << " expected=" << expected
         << " actual=" << actual << (ok ? " MATCH" : " MISMATCH") << "\n";
      if (!ok) out.pass = false;
    }
  };
  for (int i = 0; i < 3; ++i) {
    const SplitCounts& c = out.stats.of(splits[i]);
    line("pairings", splits[i], kPairings[i], c.pairings);
    if (c.pairings_unordered != c.pairings)
      os << to_string(splits[i])
         << "_pairings_unordered actual=" << c.pairings_unordered
         << " (duplicate-swap convention differs)\n";
    line("unique_objects", splits[i], kUniqueObjects[i], c.unique_objects);
    line("categories", splits[i], kCategories[i], c.categories);
  }
  out.report = os.str();
  return out;
}

SplitAssignment reassign_split(const SplitAssignment& pretrain,
                               const SplitAssignment& snare) {
  SplitAssignment out;
  for (const auto& [id, split] : pretrain) {
    auto it = snare.find(id);
    out[id] = it != snare.end() ? it->second : split;
  }
  return out;
}

BatchIterator::BatchIterator(const std::vector<ReferenceInstance>& instances,
                             Split split, std::uint64_t seed, int batch_size)
    : seed_(seed), batch_size_(batch_size) {
  if (batch_size < 1)
    throw ValidationError("batch_size must be >= 1, got " +
                          std::to_string(batch_size));
  for (std::size_t i = 0; i < instances.size(); ++i)
    if (instances[i].split == split) indices_.push_back(i);
  if (indices_.empty())
    throw ValidationError(std::string("empty split '") + to_string(split) +
                          "': no instances to iterate");
}

std::vector<std::vector<std::size_t>> BatchIterator::epoch_batches(
    int epoch) const {
  std::vector<std::size_t> order = indices_;
  Rng rng(mix_seed(seed_, 0x45504f43ULL /* "EPOC" */, static_cast<std::uint64_t>(epoch)));
  // Fisher-Yates with the portable generator.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(batch_size_)) {
    const std::size_t end =
        std::min(order.size(), start + static_cast<std::size_t>(batch_size_));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace vlg
