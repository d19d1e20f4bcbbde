// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vlg/common.hpp"
#include "vlg/feature_store.hpp"
#include "vlg/loss.hpp"
#include "vlg/snare.hpp"
#include "vlg/voxel.hpp"

// Two-branch scoring network for the pairwise reference game.
//
// Visiolinguistic branch: view embeddings are pooled elementwise (max by
// default), concatenated to the sentence embedding, and passed through a
// one-hidden-layer MLP -> e_vw.
//
// Voxel-language branch: word embeddings and the 12 projected factor tokens
// are encoded together with a learned CLS token by a pre-norm transformer;
// a linear head maps the contextual CLS to e_ow. Word tokens carry learned
// positions and a language modality embedding; factor tokens carry a factor
// modality embedding only (no positions).
//
// Scoring head: sigmoid(MLP(z)) where z depends on the variant:
//   full                 z = [e_vw ; e_ow]
//   visiolinguistic_only z = e_vw
//   voxel_only           z = e_ow
//   mlp_fusion           z = [e_vw ; elementwise max over factor tokens]
//
// Feature inputs are constants: gradients flow to parameters only.

namespace vlg {

enum class Variant { full, visiolinguistic_only, mlp_fusion, voxel_only };
enum class ViewPooling { max, mean };

const char* to_string(Variant v);
const char* to_string(ViewPooling p);
Variant variant_from_string(const std::string& s);
ViewPooling view_pooling_from_string(const std::string& s);

struct ModelConfig {
  int d_v = 512;
  int d_t = 512;
  int d_model = 512;
  int n_heads = 8;
  int n_layers = 2;
  int d_ff = 1024;
  int mlp_hidden = 512;
  int fusion_dim = 512;
  int max_words = 32;  // longer word sequences are truncated with a warning
  Variant variant = Variant::full;
  ViewPooling view_pooling = ViewPooling::max;

  void validate() const;
  int head_dim() const { return d_model / n_heads; }
  bool uses_visiolinguistic() const { return variant != Variant::voxel_only; }
  bool uses_transformer() const {
    return variant == Variant::full || variant == Variant::voxel_only;
  }
  int score_input_dim() const;
};

struct NamedTensor {
  std::string name;
  Matrix* tensor;
};

struct EncoderLayerParams {
  Matrix w_q, w_k, w_v, w_o;  // d_model x d_model; applied as y = x * W
  Matrix b_q, b_k, b_v, b_o;  // d_model x 1
  Matrix ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;  // d_model x 1
  Matrix w_ff1, w_ff2;        // d_model x d_ff, d_ff x d_model
  Matrix b_ff1, b_ff2;        // d_ff x 1, d_model x 1
};

// All learnable weights. Only the tensors used by config.variant are
// allocated; named_tensors() enumerates them in a fixed order.
struct ParameterSet {
  ModelConfig config;

  // voxel-language branch
  Matrix word_proj_w, word_proj_b;      // d_t x d_model, d_model x 1
  Matrix factor_proj_w, factor_proj_b;  // 96 x d_model, d_model x 1
  Matrix cls_token;                     // d_model x 1
  Matrix word_pos;                      // max_words x d_model
  Matrix modality_lang, modality_factor;  // d_model x 1
  std::vector<EncoderLayerParams> layers;
  Matrix final_ln_gamma, final_ln_beta;  // d_model x 1
  Matrix head_w, head_b;                 // d_model x fusion_dim, fusion_dim x 1

  // visiolinguistic branch
  Matrix vl_w1, vl_b1, vl_w2, vl_b2;  // (d_v+d_t) x mlp_hidden -> fusion_dim

  // scoring head
  Matrix score_w1, score_b1, score_w2, score_b2;  // input x hidden -> 1

  std::vector<NamedTensor> named_tensors();
  std::vector<NamedTensor> named_tensors() const;
  std::size_t parameter_count() const;
};

ParameterSet init_params(const ModelConfig& config, std::uint64_t seed);
ParameterSet zeros_like(const ParameterSet& params);

struct ScorePair {
  double s_target = 0.0;
  double s_distractor = 0.0;
  int predicted_index = 0;  // 0 = target, 1 = distractor
  bool tie = false;
};

// --- forward caches (exposed for backward passes and white-box tests) ---

struct LayerNormCache {
  Matrix xhat;      // normalized pre-scale values
  Vector inv_std;   // per row
};

struct EncoderLayerCache {
  Matrix input;
  LayerNormCache ln1;
  Matrix ln1_out, q, k, v;
  std::vector<Matrix> attn_weights;  // per head, T x T rows summing to 1
  Matrix attn_concat;
  Matrix after_attn;
  LayerNormCache ln2;
  Matrix ln2_out, ff_pre, ff_act;
};

struct EncoderCache {
  std::vector<EncoderLayerCache> layers;
  Matrix final_in;
  LayerNormCache final_ln;
  Matrix output;
};

struct VlCache {
  Vector fused_in;  // [pooled views ; sentence]
  Vector h_pre, h_act;
  Vector e_vw;
};

struct OwCache {
  int words_used = 0;
  Matrix word_slice;    // the (possibly truncated) word embeddings
  Matrix factor_tokens; // 12 x 96
  Matrix tokens;        // (1 + words + 12) x d_model
  EncoderCache encoder;
  Vector e_ow;
};

struct ScoreCache {
  Vector input;
  Vector h_pre, h_act;
  double logit = 0.0;
  double score = 0.5;
};

struct CandidateCache {
  VlCache vl;
  OwCache ow;
  ScoreCache scoring;
};

// --- spec-level operations ---

Vector visiolinguistic_forward(const Vector& sentence_embedding,
                               const Matrix& view_embeddings,
                               const ParameterSet& params,
                               VlCache* cache = nullptr);

Matrix transformer_encode(const Matrix& tokens, const ParameterSet& params,
                          EncoderCache* cache = nullptr);

Vector voxel_language_forward(const Matrix& word_embeddings,
                              const Matrix& factor_token_matrix,
                              const ParameterSet& params,
                              OwCache* cache = nullptr);

// Scoring MLP over [e_vw ; e_ow]; requires variant == full.
double score(const Vector& e_vw, const Vector& e_ow,
             const ParameterSet& params, ScoreCache* cache = nullptr);

double score_candidate(const DescriptionFeatures& description,
                       const ObjectFeatures& object, const ParameterSet& params,
                       CandidateCache* cache = nullptr);

ScorePair forward_instance(const ReferenceInstance& instance,
                           const FeatureArchive& archive,
                           const ParameterSet& params);

// Mean loss over the batch without gradients.
double batch_loss(const ParameterSet& params,
                  const std::vector<ReferenceInstance>& batch,
                  const FeatureArchive& archive, const LossConfig& loss);

struct BatchGradients {
  double loss = 0.0;
  ParameterSet grads;
};

// Analytic gradient of the mean batch loss w.r.t. every parameter tensor.
// Feature inputs receive no gradient. Throws NumericError on non-finite loss.
BatchGradients gradients(const ParameterSet& params,
                         const std::vector<ReferenceInstance>& batch,
                         const FeatureArchive& archive,
                         const LossConfig& loss);

// --- checkpoints: named-tensor container with f32 payloads ---

void save_checkpoint(const std::string& path, const ParameterSet& params,
                     std::uint64_t step);

struct Checkpoint {
  ParameterSet params;
  std::uint64_t step = 0;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace vlg
