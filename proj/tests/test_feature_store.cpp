// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vlg/feature_store.hpp"

using namespace vlg;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.n_views = 4;
  cfg.d_v = 64;
  cfg.d_t = 64;
  cfg.num_colors = 8;
  cfg.num_shapes = 8;
  cfg.max_parts = 4;
  return cfg;
}

FeatureArchive small_archive() {
  SynthConfig cfg = small_config();
  ArchiveManifest manifest;
  manifest.n_views = cfg.n_views;
  manifest.d_v = cfg.d_v;
  manifest.d_t = cfg.d_t;
  manifest.provenance = "synthetic generator, unit fixture";
  FeatureArchive archive(manifest);
  archive.add_object(synth_object(1, {0, 1, 2}, cfg));
  archive.add_object(synth_object(2, {3, 0, 1}, cfg));
  archive.add_description(
      synth_description(10, {0, 1, 2}, DescriptionStyle::visual, cfg));
  archive.add_description(
      synth_description(11, {3, 0, 1}, DescriptionStyle::blind, cfg));
  archive.add_description(
      synth_description(12, {3, 0, 1}, DescriptionStyle::visual, cfg));
  return archive;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

bool same_object(const ObjectFeatures& a, const ObjectFeatures& b) {
  if (a.object_id != b.object_id) return false;
  if (a.view_embeddings != b.view_embeddings) return false;
  for (int k = 0; k < kFactorCount; ++k) {
    if (a.factors.factors[k].x != b.factors.factors[k].x) return false;
    if (a.factors.factors[k].y != b.factors.factors[k].y) return false;
    if (a.factors.factors[k].z != b.factors.factors[k].z) return false;
  }
  return true;
}

// Ridge-regression probe to one-hot targets; returns held-out accuracy.
double linear_probe_accuracy(const Matrix& train_x, const std::vector<int>& train_y,
                             const Matrix& eval_x, const std::vector<int>& eval_y,
                             int classes) {
  Matrix targets = Matrix::Zero(train_x.rows(), classes);
  for (Eigen::Index i = 0; i < train_x.rows(); ++i)
    targets(i, train_y[static_cast<std::size_t>(i)]) = 1.0;
  const Matrix gram = train_x.transpose() * train_x +
                      1e-3 * Matrix::Identity(train_x.cols(), train_x.cols());
  const Matrix weights = gram.ldlt().solve(train_x.transpose() * targets);
  const Matrix scores = eval_x * weights;
  int correct = 0;
  for (Eigen::Index i = 0; i < eval_x.rows(); ++i) {
    Eigen::Index best;
    scores.row(i).maxCoeff(&best);
    if (static_cast<int>(best) == eval_y[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(eval_x.rows());
}

Vector flatten_factors(const FactorSet& fs) {
  Vector v(kFactorCount * kFactorTokenDim);
  const Matrix tokens = factor_tokens(fs);
  for (int k = 0; k < kFactorCount; ++k)
    v.segment(k * kFactorTokenDim, kFactorTokenDim) = tokens.row(k).transpose();
  return v;
}

}  // namespace

TEST_CASE("archive round-trip is bit-exact") {
  FeatureArchive archive = small_archive();
  const std::string path = temp_path("vlg_roundtrip.vlgf");
  write_archive(archive, path);
  FeatureArchive back = read_archive(path);

  CHECK(back.manifest().n_views == archive.manifest().n_views);
  CHECK(back.manifest().d_v == archive.manifest().d_v);
  CHECK(back.manifest().d_t == archive.manifest().d_t);
  CHECK(back.manifest().provenance == archive.manifest().provenance);
  REQUIRE(back.objects().size() == archive.objects().size());
  REQUIRE(back.descriptions().size() == archive.descriptions().size());
  for (std::size_t i = 0; i < archive.objects().size(); ++i)
    CHECK(same_object(back.objects()[i], archive.objects()[i]));
  for (std::size_t i = 0; i < archive.descriptions().size(); ++i) {
    CHECK(back.descriptions()[i].description_id ==
          archive.descriptions()[i].description_id);
    CHECK(back.descriptions()[i].sentence_embedding ==
          archive.descriptions()[i].sentence_embedding);
    CHECK(back.descriptions()[i].word_embeddings ==
          archive.descriptions()[i].word_embeddings);
    CHECK(back.descriptions()[i].text == archive.descriptions()[i].text);
  }

  // Write the reloaded archive again: byte-identical files.
  const std::string path2 = temp_path("vlg_roundtrip2.vlgf");
  write_archive(back, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("read rejects wrong magic without partial results") {
  const std::string path = temp_path("vlg_badmagic.vlgf");
  std::ofstream os(path, std::ios::binary);
  os << "NOPE this is not an archive";
  os.close();
  CHECK_THROWS_AS(read_archive(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("read rejects unsupported version") {
  const std::string path = temp_path("vlg_badver.vlgf");
  std::ofstream os(path, std::ios::binary);
  os.write("VLGF", 4);
  const unsigned char ver[2] = {9, 0};
  os.write(reinterpret_cast<const char*>(ver), 2);
  os.close();
  CHECK_THROWS_AS(read_archive(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("read reports truncated payloads") {
  FeatureArchive archive = small_archive();
  const std::string path = temp_path("vlg_trunc.vlgf");
  write_archive(archive, path);
  const auto full_size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full_size / 2);
  CHECK_THROWS_AS(read_archive(path), TruncatedError);
  std::remove(path.c_str());
}

TEST_CASE("write refuses dimension mismatch naming the offending id") {
  FeatureArchive archive = small_archive();
  FeatureArchive bad(archive.manifest());
  ObjectFeatures obj = archive.objects()[0];
  obj.object_id = "obj-bad-dv";
  obj.view_embeddings.resize(archive.manifest().n_views,
                             archive.manifest().d_v + 3);
  obj.view_embeddings.setZero();
  bad.add_object(obj);
  const std::string path = temp_path("vlg_baddim.vlgf");
  try {
    write_archive(bad, path);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("obj-bad-dv") != std::string::npos);
  }
  CHECK_FALSE(std::filesystem::exists(path));
}

TEST_CASE("duplicate ids are rejected") {
  FeatureArchive archive = small_archive();
  CHECK_THROWS_AS(archive.add_object(archive.objects()[0]), ValidationError);
}

TEST_CASE("lookup by id and not-found errors") {
  FeatureArchive archive = small_archive();
  CHECK(archive.object("obj-1").object_id == "obj-1");
  CHECK(archive.description("desc-10").description_id == "desc-10");
  CHECK_THROWS_AS(archive.object("obj-999"), NotFoundError);
  CHECK_THROWS_AS(archive.description("nope"), NotFoundError);

  const std::string path = temp_path("vlg_lookup.vlgf");
  write_archive(archive, path);
  FeatureArchive back = read_archive(path);
  CHECK(same_object(back.object("obj-2"), archive.object("obj-2")));
  std::remove(path.c_str());
}

TEST_CASE("manifest text lists dims and counts as key=value") {
  FeatureArchive archive = small_archive();
  const std::string text = archive.manifest_text();
  CHECK(text.find("n_views=4") != std::string::npos);
  CHECK(text.find("d_v=64") != std::string::npos);
  CHECK(text.find("object_count=2") != std::string::npos);
  CHECK(text.find("description_count=3") != std::string::npos);
}

TEST_CASE("synth_object: deterministic in (seed, attrs)") {
  SynthConfig cfg = small_config();
  ObjectFeatures a = synth_object(7, {2, 3, 2}, cfg);
  ObjectFeatures b = synth_object(7, {2, 3, 2}, cfg);
  CHECK(same_object(a, b));
  ObjectFeatures c = synth_object(8, {2, 3, 2}, cfg);
  CHECK_FALSE(same_object(a, c));
}

TEST_CASE("synth_object: part_count controls the non-zero factors") {
  SynthConfig cfg = small_config();
  ObjectFeatures obj = synth_object(5, {1, 2, 3}, cfg);
  int nonzero = 0;
  for (const auto& f : obj.factors.factors)
    if ((f.x.array() != 0.0).any() || (f.y.array() != 0.0).any() ||
        (f.z.array() != 0.0).any())
      ++nonzero;
  CHECK(nonzero == 3);
}

TEST_CASE("synth_object: color changes views only") {
  SynthConfig cfg = small_config();
  ObjectFeatures a = synth_object(9, {1, 4, 2}, cfg);
  ObjectFeatures b = synth_object(9, {6, 4, 2}, cfg);
  for (int k = 0; k < kFactorCount; ++k) {
    CHECK(a.factors.factors[k].x == b.factors.factors[k].x);
    CHECK(a.factors.factors[k].y == b.factors.factors[k].y);
    CHECK(a.factors.factors[k].z == b.factors.factors[k].z);
  }
  CHECK(a.view_embeddings != b.view_embeddings);
}

TEST_CASE("synth_object: out-of-range attributes are rejected") {
  SynthConfig cfg = small_config();
  CHECK_THROWS_AS(synth_object(1, {cfg.num_colors, 0, 1}, cfg), ValidationError);
  CHECK_THROWS_AS(synth_object(1, {0, -1, 1}, cfg), ValidationError);
  CHECK_THROWS_AS(synth_object(1, {0, 0, cfg.max_parts + 1}, cfg),
                  ValidationError);
}

TEST_CASE("synth_description: blind style avoids the color vocabulary") {
  SynthConfig cfg = small_config();
  const Matrix colors =
      synth_vocab_table(cfg, VocabKind::word_color, cfg.num_colors, cfg.d_t);
  DescriptionFeatures blind =
      synth_description(3, {2, 5, 4}, DescriptionStyle::blind, cfg);
  // No word row may be within noise range of any color row.
  for (int w = 0; w < blind.word_embeddings.rows(); ++w)
    for (int c = 0; c < cfg.num_colors; ++c)
      CHECK((blind.word_embeddings.row(w) - colors.row(c)).norm() > 0.5);
}

TEST_CASE("synth_description: deterministic and style-dependent") {
  SynthConfig cfg = small_config();
  DescriptionFeatures a =
      synth_description(4, {1, 2, 3}, DescriptionStyle::visual, cfg);
  DescriptionFeatures b =
      synth_description(4, {1, 2, 3}, DescriptionStyle::visual, cfg);
  CHECK(a.word_embeddings == b.word_embeddings);
  CHECK(a.sentence_embedding == b.sentence_embedding);
  CHECK(a.text == b.text);
  DescriptionFeatures c =
      synth_description(4, {1, 2, 3}, DescriptionStyle::blind, cfg);
  CHECK(a.word_embeddings != c.word_embeddings);
}

TEST_CASE("synth_description: color swap changes exactly the color row") {
  SynthConfig cfg = small_config();
  DescriptionFeatures a =
      synth_description(4, {2, 3, 2}, DescriptionStyle::visual, cfg);
  DescriptionFeatures b =
      synth_description(4, {5, 3, 2}, DescriptionStyle::visual, cfg);
  CHECK(a.word_embeddings.row(0) != b.word_embeddings.row(0));
  CHECK(a.word_embeddings.row(1) == b.word_embeddings.row(1));
}

TEST_CASE("synth_description: sentence embedding is the word mean") {
  SynthConfig cfg = small_config();
  DescriptionFeatures d =
      synth_description(6, {1, 1, 1}, DescriptionStyle::blind, cfg);
  const Vector mean = d.word_embeddings.colwise().mean().transpose();
  CHECK((d.sentence_embedding - mean).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("information separation: linear probes") {
  SynthConfig cfg = small_config();
  const int train_n = 256, eval_n = 256;
  Matrix views_train(train_n, cfg.d_v), views_eval(eval_n, cfg.d_v);
  Matrix factors_train(train_n, kFactorCount * kFactorTokenDim);
  Matrix factors_eval(eval_n, kFactorCount * kFactorTokenDim);
  std::vector<int> color_train(train_n), color_eval(eval_n);
  std::vector<int> shape_train(train_n), shape_eval(eval_n);

  Rng attr_rng(2024);
  auto fill = [&](int n, Matrix& views, Matrix& factors, std::vector<int>& colors,
                  std::vector<int>& shapes, std::uint64_t base) {
    for (int i = 0; i < n; ++i) {
      SynthAttributes attrs;
      attrs.color_id = static_cast<int>(attr_rng.uniform_index(cfg.num_colors));
      attrs.shape_id = static_cast<int>(attr_rng.uniform_index(cfg.num_shapes));
      attrs.part_count =
          1 + static_cast<int>(attr_rng.uniform_index(cfg.max_parts));
      ObjectFeatures obj = synth_object(base + i, attrs, cfg);
      views.row(i) = obj.view_embeddings.row(0);
      factors.row(i) = flatten_factors(obj.factors).transpose();
      colors[static_cast<std::size_t>(i)] = attrs.color_id;
      shapes[static_cast<std::size_t>(i)] = attrs.shape_id;
    }
  };
  fill(train_n, views_train, factors_train, color_train, shape_train, 100000);
  fill(eval_n, views_eval, factors_eval, color_eval, shape_eval, 200000);

  const double chance_color = 1.0 / cfg.num_colors;
  const double chance_shape = 1.0 / cfg.num_shapes;

  // Views reveal color, not shape.
  CHECK(linear_probe_accuracy(views_train, color_train, views_eval, color_eval,
                              cfg.num_colors) >= 0.9);
  CHECK(linear_probe_accuracy(views_train, shape_train, views_eval, shape_eval,
                              cfg.num_shapes) <= chance_shape + 0.1);

  // Factors reveal shape, not color.
  CHECK(linear_probe_accuracy(factors_train, shape_train, factors_eval,
                              shape_eval, cfg.num_shapes) >= 0.9);
  CHECK(linear_probe_accuracy(factors_train, color_train, factors_eval,
                              color_eval, cfg.num_colors) <= chance_color + 0.1);
}
