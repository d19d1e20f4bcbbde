// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shared test fixtures: a tiny synthetic archive with paired instances and a
// central-difference gradient checker. Test-only code; the library never
// includes this.

#include <string>
#include <vector>

#include "vlg/feature_store.hpp"
#include "vlg/model.hpp"
#include "vlg/snare.hpp"

namespace vlg::testsupport {

inline SynthConfig tiny_synth_config() {
  SynthConfig cfg;
  cfg.n_views = 2;
  cfg.d_v = 12;
  cfg.d_t = 10;
  cfg.num_colors = 4;
  cfg.num_shapes = 4;
  cfg.max_parts = 3;
  return cfg;
}

inline ModelConfig tiny_model_config(Variant variant = Variant::full) {
  ModelConfig cfg;
  cfg.d_v = 12;
  cfg.d_t = 10;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  cfg.d_ff = 24;
  cfg.mlp_hidden = 12;
  cfg.fusion_dim = 8;
  cfg.max_words = 4;
  cfg.variant = variant;
  return cfg;
}

struct TinyFixture {
  FeatureArchive archive;
  std::vector<ReferenceInstance> instances;
};

// Two instances over three objects and two descriptions.
inline TinyFixture tiny_fixture() {
  const SynthConfig scfg = tiny_synth_config();
  ArchiveManifest manifest;
  manifest.n_views = scfg.n_views;
  manifest.d_v = scfg.d_v;
  manifest.d_t = scfg.d_t;
  manifest.provenance = "tiny unit fixture";
  TinyFixture fx;
  fx.archive = FeatureArchive(manifest);
  fx.archive.add_object(synth_object(1, {0, 1, 2}, scfg));
  fx.archive.add_object(synth_object(2, {1, 2, 1}, scfg));
  fx.archive.add_object(synth_object(3, {2, 0, 3}, scfg));
  fx.archive.add_description(
      synth_description(10, {0, 1, 2}, DescriptionStyle::visual, scfg));
  fx.archive.add_description(
      synth_description(11, {2, 0, 3}, DescriptionStyle::blind, scfg));
  fx.instances.push_back(
      {"obj-1", "obj-2", "desc-10", Category::visual, Split::train});
  fx.instances.push_back(
      {"obj-3", "obj-1", "desc-11", Category::blind, Split::train});
  return fx;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
};

// Central differences (h, float64) against the analytic batch gradient.
// The relative error is per tensor: max |analytic - fd| over the larger of
// the two gradient magnitudes.
inline GradCheckResult finite_difference_check(
    const ParameterSet& params, const std::vector<ReferenceInstance>& batch,
    const FeatureArchive& archive, const LossConfig& loss, double h = 1e-4) {
  const BatchGradients analytic = gradients(params, batch, archive, loss);

  ParameterSet probe = params;
  auto probe_tensors = probe.named_tensors();
  auto grad_tensors = analytic.grads.named_tensors();

  GradCheckResult result;
  for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
    Matrix& theta = *probe_tensors[t].tensor;
    const Matrix& g = *grad_tensors[t].tensor;
    double max_diff = 0.0, max_mag = 0.0;
    for (Eigen::Index r = 0; r < theta.rows(); ++r)
      for (Eigen::Index c = 0; c < theta.cols(); ++c) {
        const double saved = theta(r, c);
        theta(r, c) = saved + h;
        const double up = batch_loss(probe, batch, archive, loss);
        theta(r, c) = saved - h;
        const double down = batch_loss(probe, batch, archive, loss);
        theta(r, c) = saved;
        const double fd = (up - down) / (2.0 * h);
        max_diff = std::max(max_diff, std::abs(fd - g(r, c)));
        max_mag = std::max({max_mag, std::abs(fd), std::abs(g(r, c))});
      }
    if (max_mag < 1e-10) continue;  // tensor with no signal either way
    const double rel = max_diff / max_mag;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_tensor = probe_tensors[t].name;
    }
  }
  return result;
}

}  // namespace vlg::testsupport
