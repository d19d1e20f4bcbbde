// SPDX-License-Identifier: Apache-2.0
#include "vlg/feature_store.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vlg/binio.hpp"

namespace vlg {

namespace {

constexpr char kMagic[4] = {'V', 'L', 'G', 'F'};
constexpr std::uint16_t kVersion = 1;

// Stream tags for seed derivation; arbitrary but fixed.
enum : std::uint64_t {
  kTagVocab = 1,
  kTagShapeTemplate = 2,
  kTagViewNoise = 3,
  kTagFactorNoise = 4,
  kTagWordNoise = 5,
};

void round_f32_inplace(Matrix& m) {
  m = m.cast<float>().cast<double>();
}

void round_f32_inplace(Vector& v) {
  v = v.cast<float>().cast<double>();
}

void check_finite(const Matrix& m, const std::string& what,
                  const std::string& id) {
  if (!m.allFinite())
    throw ValidationError(what + " contains non-finite entries in record '" +
                          id + "'");
}

void write_matrix_f32(std::ostream& os, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      binio::write_f32(os, static_cast<float>(m(r, c)));
}

Matrix read_matrix_f32(std::istream& is, Eigen::Index rows, Eigen::Index cols,
                       const char* what) {
  std::vector<float> buf(static_cast<std::size_t>(rows * cols));
  binio::read_f32_array(is, buf.data(), buf.size(), what);
  Matrix m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = buf[i++];
  return m;
}

}  // namespace

void FeatureArchive::add_object(ObjectFeatures obj) {
  if (object_index_.count(obj.object_id))
    throw ValidationError("duplicate object id '" + obj.object_id + "'");
  object_index_[obj.object_id] = objects_.size();
  objects_.push_back(std::move(obj));
}

void FeatureArchive::add_description(DescriptionFeatures desc) {
  if (description_index_.count(desc.description_id))
    throw ValidationError("duplicate description id '" + desc.description_id +
                          "'");
  description_index_[desc.description_id] = descriptions_.size();
  descriptions_.push_back(std::move(desc));
}

bool FeatureArchive::has_object(const std::string& id) const {
  return object_index_.count(id) > 0;
}

bool FeatureArchive::has_description(const std::string& id) const {
  return description_index_.count(id) > 0;
}

const ObjectFeatures& FeatureArchive::object(const std::string& id) const {
  auto it = object_index_.find(id);
  if (it == object_index_.end())
    throw NotFoundError("unknown object id '" + id + "'");
  return objects_[it->second];
}

const DescriptionFeatures& FeatureArchive::description(
    const std::string& id) const {
  auto it = description_index_.find(id);
  if (it == description_index_.end())
    throw NotFoundError("unknown description id '" + id + "'");
  return descriptions_[it->second];
}

void FeatureArchive::validate() const {
  for (const auto& obj : objects_) {
    if (obj.view_embeddings.rows() != manifest_.n_views ||
        obj.view_embeddings.cols() != manifest_.d_v)
      throw ValidationError(
          "object '" + obj.object_id + "' has view embeddings " +
          std::to_string(obj.view_embeddings.rows()) + "x" +
          std::to_string(obj.view_embeddings.cols()) + ", manifest declares " +
          std::to_string(manifest_.n_views) + "x" +
          std::to_string(manifest_.d_v));
    if (obj.view_embeddings.rows() < 1)
      throw ValidationError("object '" + obj.object_id + "' has no views");
    check_finite(obj.view_embeddings, "view embeddings", obj.object_id);
    try {
      obj.factors.validate();
    } catch (const ValidationError& e) {
      throw ValidationError("object '" + obj.object_id + "': " + e.what());
    }
  }
  for (const auto& desc : descriptions_) {
    if (desc.sentence_embedding.size() != manifest_.d_t)
      throw ValidationError("description '" + desc.description_id +
                            "' has sentence embedding length " +
                            std::to_string(desc.sentence_embedding.size()) +
                            ", manifest declares " +
                            std::to_string(manifest_.d_t));
    if (desc.word_embeddings.rows() < 1)
      throw ValidationError("description '" + desc.description_id +
                            "' has no word embeddings");
    if (desc.word_embeddings.cols() != manifest_.d_t)
      throw ValidationError("description '" + desc.description_id +
                            "' has word embedding width " +
                            std::to_string(desc.word_embeddings.cols()) +
                            ", manifest declares " +
                            std::to_string(manifest_.d_t));
    check_finite(desc.word_embeddings, "word embeddings", desc.description_id);
    if (!desc.sentence_embedding.allFinite())
      throw ValidationError("description '" + desc.description_id +
                            "' sentence embedding is non-finite");
  }
}

std::string FeatureArchive::manifest_text() const {
  std::ostringstream os;
  os << "n_views=" << manifest_.n_views << "\n";
  os << "d_v=" << manifest_.d_v << "\n";
  os << "d_t=" << manifest_.d_t << "\n";
  os << "object_count=" << objects_.size() << "\n";
  os << "description_count=" << descriptions_.size() << "\n";
  os << "provenance=" << manifest_.provenance << "\n";
  return os.str();
}

void write_archive(const FeatureArchive& archive, const std::string& path) {
  archive.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");

  os.write(kMagic, 4);
  binio::write_u16(os, kVersion);
  binio::write_u32(os, static_cast<std::uint32_t>(archive.manifest().n_views));
  binio::write_u32(os, static_cast<std::uint32_t>(archive.manifest().d_v));
  binio::write_u32(os, static_cast<std::uint32_t>(archive.manifest().d_t));
  binio::write_u32(os, static_cast<std::uint32_t>(archive.objects().size()));
  binio::write_u32(os,
                   static_cast<std::uint32_t>(archive.descriptions().size()));
  binio::write_str(os, archive.manifest().provenance);

  for (const auto& obj : archive.objects()) {
    binio::write_str(os, obj.object_id);
    write_matrix_f32(os, obj.view_embeddings);
    for (const auto& f : obj.factors.factors) {
      write_matrix_f32(os, f.x);
      write_matrix_f32(os, f.y);
      write_matrix_f32(os, f.z);
    }
  }
  for (const auto& desc : archive.descriptions()) {
    binio::write_str(os, desc.description_id);
    binio::write_u32(os, static_cast<std::uint32_t>(desc.word_embeddings.rows()));
    write_matrix_f32(os, desc.sentence_embedding);
    write_matrix_f32(os, desc.word_embeddings);
    binio::write_str(os, desc.text);
  }
  os.flush();
  if (!os) throw IoError("write to '" + path + "' failed");
}

FeatureArchive read_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "' for reading");

  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("'" + path + "' is not a VLGF archive (bad magic)");
  const std::uint16_t version = binio::read_u16(is, "version");
  if (version != kVersion)
    throw FormatError("unsupported VLGF version " + std::to_string(version));

  ArchiveManifest manifest;
  manifest.n_views = static_cast<int>(binio::read_u32(is, "n_views"));
  manifest.d_v = static_cast<int>(binio::read_u32(is, "d_v"));
  manifest.d_t = static_cast<int>(binio::read_u32(is, "d_t"));
  const std::uint32_t object_count = binio::read_u32(is, "object_count");
  const std::uint32_t description_count =
      binio::read_u32(is, "description_count");
  if (manifest.n_views < 1 || manifest.d_v < 1 || manifest.d_t < 1)
    throw FormatError("corrupt VLGF header: non-positive dimensions");
  manifest.provenance = binio::read_str(is, "provenance");

  FeatureArchive archive(manifest);
  for (std::uint32_t i = 0; i < object_count; ++i) {
    ObjectFeatures obj;
    obj.object_id = binio::read_str(is, "object id");
    obj.view_embeddings =
        read_matrix_f32(is, manifest.n_views, manifest.d_v, "view embeddings");
    obj.factors.factors.resize(kFactorCount);
    for (auto& f : obj.factors.factors) {
      f.x = read_matrix_f32(is, kFactorDim, 1, "factor x");
      f.y = read_matrix_f32(is, kFactorDim, 1, "factor y");
      f.z = read_matrix_f32(is, kFactorDim, 1, "factor z");
    }
    archive.add_object(std::move(obj));
  }
  for (std::uint32_t i = 0; i < description_count; ++i) {
    DescriptionFeatures desc;
    desc.description_id = binio::read_str(is, "description id");
    const std::uint32_t words = binio::read_u32(is, "word count");
    if (words < 1)
      throw FormatError("description '" + desc.description_id +
                        "' declares zero words");
    desc.sentence_embedding =
        read_matrix_f32(is, manifest.d_t, 1, "sentence embedding");
    desc.word_embeddings =
        read_matrix_f32(is, words, manifest.d_t, "word embeddings");
    desc.text = binio::read_str(is, "description text");
    archive.add_description(std::move(desc));
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw FormatError("'" + path + "' has trailing bytes after declared records");
  return archive;
}

// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
  if (n_views < 1 || d_v < 1 || d_t < 1)
    throw ValidationError("synthetic config dimensions must be >= 1");
  if (num_colors < 1 || num_shapes < 1)
    throw ValidationError("synthetic vocabularies must be non-empty");
  if (max_parts < 1 || max_parts > kFactorCount)
    throw ValidationError("max_parts must lie in [1, " +
                          std::to_string(kFactorCount) + "]");
  if (view_noise < 0 || factor_noise < 0 || word_noise < 0)
    throw ValidationError("noise levels must be non-negative");
}

void SynthConfig::check_attrs(const SynthAttributes& attrs) const {
  if (attrs.color_id < 0 || attrs.color_id >= num_colors)
    throw ValidationError("color_id " + std::to_string(attrs.color_id) +
                          " outside [0, " + std::to_string(num_colors) + ")");
  if (attrs.shape_id < 0 || attrs.shape_id >= num_shapes)
    throw ValidationError("shape_id " + std::to_string(attrs.shape_id) +
                          " outside [0, " + std::to_string(num_shapes) + ")");
  if (attrs.part_count < 1 || attrs.part_count > max_parts)
    throw ValidationError("part_count " + std::to_string(attrs.part_count) +
                          " outside [1, " + std::to_string(max_parts) + "]");
}

Matrix synth_vocab_table(const SynthConfig& cfg, VocabKind kind, int count,
                         int dim) {
  Matrix table(count, dim);
  for (int r = 0; r < count; ++r) {
    Rng rng(mix_seed(cfg.vocab_seed, kTagVocab,
                     static_cast<std::uint64_t>(kind), r));
    for (int c = 0; c < dim; ++c) table(r, c) = rng.normal();
    table.row(r) /= table.row(r).norm();
  }
  return table;
}

FactorTriplet synth_shape_template(const SynthConfig& cfg, int shape_id,
                                   int factor_index) {
  Rng rng(mix_seed(cfg.vocab_seed, kTagShapeTemplate, shape_id, factor_index));
  FactorTriplet f;
  for (int i = 0; i < kFactorDim; ++i) f.x[i] = rng.uniform();
  for (int i = 0; i < kFactorDim; ++i) f.y[i] = rng.uniform();
  for (int i = 0; i < kFactorDim; ++i) f.z[i] = rng.uniform();
  return f;
}

ObjectFeatures synth_object(std::uint64_t seed, const SynthAttributes& attrs,
                            const SynthConfig& cfg) {
  cfg.validate();
  cfg.check_attrs(attrs);

  const Matrix view_colors =
      synth_vocab_table(cfg, VocabKind::view_color, cfg.num_colors, cfg.d_v);

  ObjectFeatures obj;
  obj.object_id = "obj-" + std::to_string(seed);
  obj.view_embeddings.resize(cfg.n_views, cfg.d_v);
  for (int v = 0; v < cfg.n_views; ++v) {
    Rng rng(mix_seed(seed, kTagViewNoise, v));
    for (int c = 0; c < cfg.d_v; ++c)
      obj.view_embeddings(v, c) =
          view_colors(attrs.color_id, c) + cfg.view_noise * rng.normal();
  }
  round_f32_inplace(obj.view_embeddings);

  obj.factors = FactorSet::zeros();
  for (int k = 0; k < attrs.part_count; ++k) {
    FactorTriplet f = synth_shape_template(cfg, attrs.shape_id, k);
    Rng rng(mix_seed(seed, kTagFactorNoise, k));
    for (int i = 0; i < kFactorDim; ++i) f.x[i] += cfg.factor_noise * rng.normal();
    for (int i = 0; i < kFactorDim; ++i) f.y[i] += cfg.factor_noise * rng.normal();
    for (int i = 0; i < kFactorDim; ++i) f.z[i] += cfg.factor_noise * rng.normal();
    round_f32_inplace(f.x);
    round_f32_inplace(f.y);
    round_f32_inplace(f.z);
    obj.factors.factors[k] = std::move(f);
  }
  return obj;
}

namespace {

const std::array<const char*, 8> kColorNames = {
    "red", "green", "blue", "yellow", "purple", "orange", "teal", "gray"};
const std::array<const char*, 8> kShapeNames = {
    "boxy", "rounded", "slender", "flat", "arched", "spiky", "hollow", "stout"};

std::string color_word(int id) {
  return id < static_cast<int>(kColorNames.size())
             ? kColorNames[static_cast<std::size_t>(id)]
             : "color" + std::to_string(id);
}

std::string shape_word(int id) {
  return id < static_cast<int>(kShapeNames.size())
             ? kShapeNames[static_cast<std::size_t>(id)]
             : "shape" + std::to_string(id);
}

}  // namespace

DescriptionFeatures synth_description(std::uint64_t seed,
                                      const SynthAttributes& attrs,
                                      DescriptionStyle style,
                                      const SynthConfig& cfg) {
  cfg.validate();
  cfg.check_attrs(attrs);

  const Matrix word_colors =
      synth_vocab_table(cfg, VocabKind::word_color, cfg.num_colors, cfg.d_t);
  const Matrix word_shapes =
      synth_vocab_table(cfg, VocabKind::word_shape, cfg.num_shapes, cfg.d_t);
  const Matrix word_parts =
      synth_vocab_table(cfg, VocabKind::word_part, cfg.max_parts, cfg.d_t);

  DescriptionFeatures desc;
  desc.description_id = "desc-" + std::to_string(seed);
  desc.word_embeddings.resize(2, cfg.d_t);
  if (style == DescriptionStyle::visual) {
    desc.word_embeddings.row(0) = word_colors.row(attrs.color_id);
    desc.word_embeddings.row(1) = word_shapes.row(attrs.shape_id);
    desc.text = "a " + color_word(attrs.color_id) + " " +
                shape_word(attrs.shape_id) + " object";
  } else {
    desc.word_embeddings.row(0) = word_shapes.row(attrs.shape_id);
    desc.word_embeddings.row(1) = word_parts.row(attrs.part_count - 1);
    desc.text = "a " + shape_word(attrs.shape_id) + " object with " +
                std::to_string(attrs.part_count) + " parts";
  }
  // Word-slot jitter is a function of (seed, slot) only, never of the
  // attributes, so records with the same seed differ exactly where their
  // word identities differ.
  for (int w = 0; w < desc.word_embeddings.rows(); ++w) {
    Rng rng(mix_seed(seed, kTagWordNoise, w));
    for (int c = 0; c < cfg.d_t; ++c)
      desc.word_embeddings(w, c) += cfg.word_noise * rng.normal();
  }
  round_f32_inplace(desc.word_embeddings);
  desc.sentence_embedding = desc.word_embeddings.colwise().mean().transpose();
  round_f32_inplace(desc.sentence_embedding);
  return desc;
}

const char* to_string(DescriptionStyle style) {
  return style == DescriptionStyle::visual ? "visual" : "blind";
}

}  // namespace vlg
