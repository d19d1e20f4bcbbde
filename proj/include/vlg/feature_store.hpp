// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "vlg/common.hpp"
#include "vlg/voxel.hpp"

// Persistence layer for precomputed embeddings. Upstream encoders are frozen
// and external to this project, so everything the model consumes arrives
// through a feature archive: per-object view embeddings and voxel factors,
// per-description sentence and word embeddings. A deterministic synthetic
// generator manufactures archives with known ground-truth attributes for
// desk-scale experiments.
//
// VLGF binary format, version 1 (little-endian):
//   magic "VLGF" | u16 version
//   u32 n_views | u32 d_v | u32 d_t | u32 object_count | u32 description_count
//   provenance string (u16 length + UTF-8 bytes)
//   object records:      id | views (n_views * d_v f32, view-major)
//                        | factors (12 * [x(32) y(32) z(32)] f32)
//   description records: id | u32 m | sentence (d_t f32)
//                        | words (m * d_t f32, word-major) | text string
// All float payloads are float32; in-memory doubles produced by this module
// are float32-representable, so round-trips are bit-exact.

namespace vlg {

struct ObjectFeatures {
  std::string object_id;
  Matrix view_embeddings;  // n_views x d_v
  FactorSet factors;
};

struct DescriptionFeatures {
  std::string description_id;
  Vector sentence_embedding;  // d_t
  Matrix word_embeddings;     // m x d_t
  std::string text;           // optional, for reports
};

struct ArchiveManifest {
  int n_views = 8;
  int d_v = 512;
  int d_t = 512;
  std::string provenance;  // free-form note on how the embeddings were made
};

class FeatureArchive {
 public:
  FeatureArchive() = default;
  explicit FeatureArchive(ArchiveManifest manifest)
      : manifest_(std::move(manifest)) {}

  const ArchiveManifest& manifest() const { return manifest_; }
  ArchiveManifest& manifest() { return manifest_; }

  void add_object(ObjectFeatures obj);
  void add_description(DescriptionFeatures desc);

  const std::vector<ObjectFeatures>& objects() const { return objects_; }
  const std::vector<DescriptionFeatures>& descriptions() const {
    return descriptions_;
  }

  bool has_object(const std::string& id) const;
  bool has_description(const std::string& id) const;
  const ObjectFeatures& object(const std::string& id) const;
  const DescriptionFeatures& description(const std::string& id) const;

  // Checks every record against the manifest dims; throws ValidationError
  // naming the first offending id.
  void validate() const;

  // key=value lines: dims, counts, provenance.
  std::string manifest_text() const;

 private:
  ArchiveManifest manifest_;
  std::vector<ObjectFeatures> objects_;
  std::vector<DescriptionFeatures> descriptions_;
  std::unordered_map<std::string, std::size_t> object_index_;
  std::unordered_map<std::string, std::size_t> description_index_;
};

void write_archive(const FeatureArchive& archive, const std::string& path);
FeatureArchive read_archive(const std::string& path);

// ---------------------------------------------------------------------------
// Synthetic generator.
//
// Attributes are split across modalities by construction: color appears only
// in view embeddings, geometry (shape template + number of active factors)
// only in the voxel factors. Descriptions reference attributes through
// separate word-vocabulary tables, so any cross-modal association has to be
// learned by the model rather than read off shared vectors.

enum class DescriptionStyle { visual, blind };

struct SynthAttributes {
  int color_id = 0;
  int shape_id = 0;
  int part_count = 1;  // number of active voxel factors, 1..max_parts
};

struct SynthConfig {
  int n_views = 8;
  int d_v = 512;
  int d_t = 512;
  int num_colors = 8;
  int num_shapes = 8;
  int max_parts = 4;          // <= kFactorCount
  double view_noise = 0.1;    // sigma added to each view embedding
  double factor_noise = 0.05; // sigma added to active factors
  double word_noise = 0.01;   // sigma added to each word embedding
  std::uint64_t vocab_seed = 1234;  // fixed global seed for vocabulary tables

  void validate() const;
  void check_attrs(const SynthAttributes& attrs) const;
};

enum class VocabKind { view_color, word_color, word_shape, word_part };

// Row r is a unit-norm pseudo-random direction; rows are deterministic in
// (vocab_seed, kind, r) only.
Matrix synth_vocab_table(const SynthConfig& cfg, VocabKind kind, int count,
                         int dim);

// Template factor triplet k for a shape; entries uniform [0,1).
FactorTriplet synth_shape_template(const SynthConfig& cfg, int shape_id,
                                   int factor_index);

ObjectFeatures synth_object(std::uint64_t seed, const SynthAttributes& attrs,
                            const SynthConfig& cfg);
DescriptionFeatures synth_description(std::uint64_t seed,
                                      const SynthAttributes& attrs,
                                      DescriptionStyle style,
                                      const SynthConfig& cfg);

const char* to_string(DescriptionStyle style);

}  // namespace vlg
