// SPDX-License-Identifier: Apache-2.0
#include "vlg/model.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "vlg/binio.hpp"

namespace vlg {

namespace {

constexpr double kLnEps = 1e-5;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

Matrix gelu(const Matrix& x) { return x.unaryExpr([](double v) { return gelu(v); }); }

Matrix gelu_grad(const Matrix& x) {
  return x.unaryExpr([](double v) { return gelu_grad(v); });
}

// y = x * W + b^T, rows are samples/tokens.
Matrix linear(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = x * w;
  y.rowwise() += b.col(0).transpose();
  return y;
}

// Accumulates dW, db for y = x * W + b^T and returns dX.
Matrix linear_backward(const Matrix& x, const Matrix& w, const Matrix& dy,
                       Matrix& dw, Matrix& db) {
  dw.noalias() += x.transpose() * dy;
  db.col(0).noalias() += dy.colwise().sum().transpose();
  return dy * w.transpose();
}

Vector linear_vec(const Vector& x, const Matrix& w, const Matrix& b) {
  return w.transpose() * x + b.col(0);
}

// Accumulates dW, db for y = W^T x + b; the input gradient is not needed by
// any caller (feature inputs are constants), so it is not returned.
void linear_vec_backward_params(const Vector& x, const Vector& dy, Matrix& dw,
                                Matrix& db) {
  dw.noalias() += x * dy.transpose();
  db.col(0) += dy;
}

Matrix layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                  LayerNormCache* cache) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  Matrix xhat(rows, cols);
  Vector inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    inv_std[r] = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(r) = (x.row(r).array() - mu) * inv_std[r];
  }
  Matrix y = xhat.array().rowwise() * gamma.col(0).transpose().array();
  y.rowwise() += beta.col(0).transpose();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix layer_norm_backward(const LayerNormCache& cache, const Matrix& gamma,
                           const Matrix& dy, Matrix& dgamma, Matrix& dbeta) {
  dgamma.col(0).noalias() +=
      (dy.array() * cache.xhat.array()).colwise().sum().matrix().transpose();
  dbeta.col(0).noalias() += dy.colwise().sum().transpose();
  const Matrix dxhat = dy.array().rowwise() * gamma.col(0).transpose().array();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double m1 = dxhat.row(r).mean();
    const double m2 = (dxhat.row(r).array() * cache.xhat.row(r).array()).mean();
    dx.row(r) = cache.inv_std[r] *
                (dxhat.row(r).array() - m1 - cache.xhat.row(r).array() * m2);
  }
  return dx;
}

Matrix softmax_rows(const Matrix& s) {
  Matrix w(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double m = s.row(r).maxCoeff();
    w.row(r) = (s.row(r).array() - m).exp();
    w.row(r) /= w.row(r).sum();
  }
  return w;
}

// dS for W = softmax_rows(S) given dW.
Matrix softmax_rows_backward(const Matrix& w, const Matrix& dw) {
  Matrix ds(w.rows(), w.cols());
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    const double dot = dw.row(r).dot(w.row(r));
    ds.row(r) = (dw.row(r).array() - dot) * w.row(r).array();
  }
  return ds;
}

std::atomic<bool> g_truncation_warned{false};

void warn_truncation(Eigen::Index words, int max_words) {
  if (!g_truncation_warned.exchange(true))
    std::fprintf(stderr,
                 "vlg: word sequence of length %ld truncated to %d tokens "
                 "(further truncations not reported)\n",
                 static_cast<long>(words), max_words);
}

}  // namespace

const char* to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::visiolinguistic_only: return "visiolinguistic_only";
    case Variant::mlp_fusion: return "mlp_fusion";
    case Variant::voxel_only: return "voxel_only";
  }
  return "?";
}

const char* to_string(ViewPooling p) {
  return p == ViewPooling::max ? "max" : "mean";
}

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "visiolinguistic_only") return Variant::visiolinguistic_only;
  if (s == "mlp_fusion") return Variant::mlp_fusion;
  if (s == "voxel_only") return Variant::voxel_only;
  throw ValidationError(
      "unknown variant '" + s +
      "' (expected full|visiolinguistic_only|mlp_fusion|voxel_only)");
}

ViewPooling view_pooling_from_string(const std::string& s) {
  if (s == "max") return ViewPooling::max;
  if (s == "mean") return ViewPooling::mean;
  throw ValidationError("unknown view pooling '" + s + "' (expected max|mean)");
}

void ModelConfig::validate() const {
  if (d_v < 1 || d_t < 1 || d_model < 1 || n_heads < 1 || n_layers < 1 ||
      d_ff < 1 || mlp_hidden < 1 || fusion_dim < 1 || max_words < 1)
    throw ValidationError("all model dimensions must be >= 1");
  if (d_model % n_heads != 0)
    throw ValidationError("d_model (" + std::to_string(d_model) +
                          ") must be divisible by n_heads (" +
                          std::to_string(n_heads) + ")");
}

int ModelConfig::score_input_dim() const {
  switch (variant) {
    case Variant::full: return 2 * fusion_dim;
    case Variant::visiolinguistic_only: return fusion_dim;
    case Variant::voxel_only: return fusion_dim;
    case Variant::mlp_fusion: return fusion_dim + kFactorTokenDim;
  }
  return fusion_dim;
}

namespace {

enum class TensorRole { weight, bias, embedding, gain };

struct TensorEntry {
  std::string name;
  Matrix* tensor;
  TensorRole role;
};

std::vector<TensorEntry> enumerate(ParameterSet& ps) {
  std::vector<TensorEntry> out;
  auto add = [&out](const std::string& name, Matrix& m, TensorRole role) {
    if (m.size() > 0) out.push_back({name, &m, role});
  };
  add("word_proj_w", ps.word_proj_w, TensorRole::weight);
  add("word_proj_b", ps.word_proj_b, TensorRole::bias);
  add("factor_proj_w", ps.factor_proj_w, TensorRole::weight);
  add("factor_proj_b", ps.factor_proj_b, TensorRole::bias);
  add("cls_token", ps.cls_token, TensorRole::embedding);
  add("word_pos", ps.word_pos, TensorRole::embedding);
  add("modality_lang", ps.modality_lang, TensorRole::embedding);
  add("modality_factor", ps.modality_factor, TensorRole::embedding);
  for (std::size_t l = 0; l < ps.layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    EncoderLayerParams& lp = ps.layers[l];
    add(prefix + "w_q", lp.w_q, TensorRole::weight);
    add(prefix + "b_q", lp.b_q, TensorRole::bias);
    add(prefix + "w_k", lp.w_k, TensorRole::weight);
    add(prefix + "b_k", lp.b_k, TensorRole::bias);
    add(prefix + "w_v", lp.w_v, TensorRole::weight);
    add(prefix + "b_v", lp.b_v, TensorRole::bias);
    add(prefix + "w_o", lp.w_o, TensorRole::weight);
    add(prefix + "b_o", lp.b_o, TensorRole::bias);
    add(prefix + "ln1_gamma", lp.ln1_gamma, TensorRole::gain);
    add(prefix + "ln1_beta", lp.ln1_beta, TensorRole::bias);
    add(prefix + "ln2_gamma", lp.ln2_gamma, TensorRole::gain);
    add(prefix + "ln2_beta", lp.ln2_beta, TensorRole::bias);
    add(prefix + "w_ff1", lp.w_ff1, TensorRole::weight);
    add(prefix + "b_ff1", lp.b_ff1, TensorRole::bias);
    add(prefix + "w_ff2", lp.w_ff2, TensorRole::weight);
    add(prefix + "b_ff2", lp.b_ff2, TensorRole::bias);
  }
  add("final_ln_gamma", ps.final_ln_gamma, TensorRole::gain);
  add("final_ln_beta", ps.final_ln_beta, TensorRole::bias);
  add("head_w", ps.head_w, TensorRole::weight);
  add("head_b", ps.head_b, TensorRole::bias);
  add("vl_w1", ps.vl_w1, TensorRole::weight);
  add("vl_b1", ps.vl_b1, TensorRole::bias);
  add("vl_w2", ps.vl_w2, TensorRole::weight);
  add("vl_b2", ps.vl_b2, TensorRole::bias);
  add("score_w1", ps.score_w1, TensorRole::weight);
  add("score_b1", ps.score_b1, TensorRole::bias);
  add("score_w2", ps.score_w2, TensorRole::weight);
  add("score_b2", ps.score_b2, TensorRole::bias);
  return out;
}

}  // namespace

std::vector<NamedTensor> ParameterSet::named_tensors() {
  std::vector<NamedTensor> out;
  for (auto& e : enumerate(*this)) out.push_back({e.name, e.tensor});
  return out;
}

std::vector<NamedTensor> ParameterSet::named_tensors() const {
  // Read-only callers receive the same pointers; the const_cast is contained
  // here so both overloads share one enumeration.
  return const_cast<ParameterSet*>(this)->named_tensors();
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : named_tensors()) n += static_cast<std::size_t>(t.tensor->size());
  return n;
}

ParameterSet init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ParameterSet ps;
  ps.config = config;

  if (config.uses_visiolinguistic()) {
    ps.vl_w1.resize(config.d_v + config.d_t, config.mlp_hidden);
    ps.vl_b1.resize(config.mlp_hidden, 1);
    ps.vl_w2.resize(config.mlp_hidden, config.fusion_dim);
    ps.vl_b2.resize(config.fusion_dim, 1);
  }
  if (config.uses_transformer()) {
    ps.word_proj_w.resize(config.d_t, config.d_model);
    ps.word_proj_b.resize(config.d_model, 1);
    ps.factor_proj_w.resize(kFactorTokenDim, config.d_model);
    ps.factor_proj_b.resize(config.d_model, 1);
    ps.cls_token.resize(config.d_model, 1);
    ps.word_pos.resize(config.max_words, config.d_model);
    ps.modality_lang.resize(config.d_model, 1);
    ps.modality_factor.resize(config.d_model, 1);
    ps.layers.resize(static_cast<std::size_t>(config.n_layers));
    for (auto& lp : ps.layers) {
      lp.w_q.resize(config.d_model, config.d_model);
      lp.b_q.resize(config.d_model, 1);
      lp.w_k.resize(config.d_model, config.d_model);
      lp.b_k.resize(config.d_model, 1);
      lp.w_v.resize(config.d_model, config.d_model);
      lp.b_v.resize(config.d_model, 1);
      lp.w_o.resize(config.d_model, config.d_model);
      lp.b_o.resize(config.d_model, 1);
      lp.ln1_gamma.resize(config.d_model, 1);
      lp.ln1_beta.resize(config.d_model, 1);
      lp.ln2_gamma.resize(config.d_model, 1);
      lp.ln2_beta.resize(config.d_model, 1);
      lp.w_ff1.resize(config.d_model, config.d_ff);
      lp.b_ff1.resize(config.d_ff, 1);
      lp.w_ff2.resize(config.d_ff, config.d_model);
      lp.b_ff2.resize(config.d_model, 1);
    }
    ps.final_ln_gamma.resize(config.d_model, 1);
    ps.final_ln_beta.resize(config.d_model, 1);
    ps.head_w.resize(config.d_model, config.fusion_dim);
    ps.head_b.resize(config.fusion_dim, 1);
  }
  ps.score_w1.resize(config.score_input_dim(), config.mlp_hidden);
  ps.score_b1.resize(config.mlp_hidden, 1);
  ps.score_w2.resize(config.mlp_hidden, 1);
  ps.score_b2.resize(1, 1);

  for (auto& e : enumerate(ps)) {
    Rng rng(mix_seed(seed, hash_string(e.name)));
    Matrix& m = *e.tensor;
    switch (e.role) {
      case TensorRole::weight: {
        // fan_in is the input dimension (rows, since y = x * W).
        const double bound = 1.0 / std::sqrt(static_cast<double>(m.rows()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
          for (Eigen::Index c = 0; c < m.cols(); ++c)
            m(r, c) = rng.uniform(-bound, bound);
        break;
      }
      case TensorRole::bias:
        m.setZero();
        break;
      case TensorRole::embedding:
        for (Eigen::Index r = 0; r < m.rows(); ++r)
          for (Eigen::Index c = 0; c < m.cols(); ++c)
            m(r, c) = 0.02 * rng.normal();
        break;
      case TensorRole::gain:
        m.setOnes();
        break;
    }
  }
  return ps;
}

ParameterSet zeros_like(const ParameterSet& params) {
  ParameterSet out = params;
  for (auto& t : out.named_tensors()) t.tensor->setZero();
  return out;
}

// ---------------------------------------------------------------------------
// Visiolinguistic branch

Vector visiolinguistic_forward(const Vector& sentence_embedding,
                               const Matrix& view_embeddings,
                               const ParameterSet& params, VlCache* cache) {
  const ModelConfig& cfg = params.config;
  if (!cfg.uses_visiolinguistic())
    throw ValidationError("variant voxel_only has no visiolinguistic branch");
  if (view_embeddings.rows() < 1)
    throw ValidationError("visiolinguistic branch needs at least one view");
  if (view_embeddings.cols() != cfg.d_v)
    throw ValidationError("view embedding width " +
                          std::to_string(view_embeddings.cols()) +
                          " does not match d_v=" + std::to_string(cfg.d_v));
  if (sentence_embedding.size() != cfg.d_t)
    throw ValidationError("sentence embedding length " +
                          std::to_string(sentence_embedding.size()) +
                          " does not match d_t=" + std::to_string(cfg.d_t));

  Vector pooled(cfg.d_v);
  if (cfg.view_pooling == ViewPooling::max)
    pooled = view_embeddings.colwise().maxCoeff().transpose();
  else
    pooled = view_embeddings.colwise().mean().transpose();

  Vector fused(cfg.d_v + cfg.d_t);
  fused << pooled, sentence_embedding;

  const Vector h_pre = linear_vec(fused, params.vl_w1, params.vl_b1);
  const Vector h_act = h_pre.unaryExpr([](double v) { return gelu(v); });
  Vector e_vw = linear_vec(h_act, params.vl_w2, params.vl_b2);
  if (cache) {
    cache->fused_in = fused;
    cache->h_pre = h_pre;
    cache->h_act = h_act;
    cache->e_vw = e_vw;
  }
  return e_vw;
}

namespace {

void visiolinguistic_backward(const VlCache& cache, const Vector& d_e_vw,
                              const ParameterSet& params, ParameterSet& grads) {
  linear_vec_backward_params(cache.h_act, d_e_vw, grads.vl_w2, grads.vl_b2);
  Vector d_h_act = params.vl_w2 * d_e_vw;
  Vector d_h_pre =
      d_h_act.array() *
      cache.h_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
  linear_vec_backward_params(cache.fused_in, d_h_pre, grads.vl_w1, grads.vl_b1);
  // Pooled views and the sentence embedding are inputs; no gradient beyond.
}

}  // namespace

// ---------------------------------------------------------------------------
// Transformer encoder (pre-norm, GELU feed-forward, final layer norm)

Matrix transformer_encode(const Matrix& tokens, const ParameterSet& params,
                          EncoderCache* cache) {
  const ModelConfig& cfg = params.config;
  if (!cfg.uses_transformer())
    throw ValidationError("variant " + std::string(to_string(cfg.variant)) +
                          " has no transformer encoder");
  if (tokens.rows() < 1)
    throw ValidationError("encoder needs at least one token");
  if (tokens.cols() != cfg.d_model)
    throw ValidationError("token width " + std::to_string(tokens.cols()) +
                          " does not match d_model=" +
                          std::to_string(cfg.d_model));

  const int n_heads = cfg.n_heads;
  const int dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix x = tokens;
  if (cache) cache->layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const EncoderLayerParams& lp = params.layers[l];
    EncoderLayerCache* lc = cache ? &cache->layers[l] : nullptr;
    if (lc) lc->input = x;

    LayerNormCache ln1;
    const Matrix a = layer_norm(x, lp.ln1_gamma, lp.ln1_beta, &ln1);
    const Matrix q = linear(a, lp.w_q, lp.b_q);
    const Matrix k = linear(a, lp.w_k, lp.b_k);
    const Matrix v = linear(a, lp.w_v, lp.b_v);

    Matrix attn_concat(x.rows(), cfg.d_model);
    std::vector<Matrix> weights(static_cast<std::size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
      const auto qh = q.middleCols(h * dh, dh);
      const auto kh = k.middleCols(h * dh, dh);
      const auto vh = v.middleCols(h * dh, dh);
      const Matrix scores = scale * (qh * kh.transpose());
      weights[static_cast<std::size_t>(h)] = softmax_rows(scores);
      attn_concat.middleCols(h * dh, dh).noalias() =
          weights[static_cast<std::size_t>(h)] * vh;
    }
    const Matrix attn_out = linear(attn_concat, lp.w_o, lp.b_o);
    Matrix x1 = x + attn_out;

    LayerNormCache ln2;
    const Matrix b = layer_norm(x1, lp.ln2_gamma, lp.ln2_beta, &ln2);
    const Matrix ff_pre = linear(b, lp.w_ff1, lp.b_ff1);
    const Matrix ff_act = gelu(ff_pre);
    const Matrix ff_out = linear(ff_act, lp.w_ff2, lp.b_ff2);
    Matrix x2 = x1 + ff_out;

    if (lc) {
      lc->ln1 = std::move(ln1);
      lc->ln1_out = a;
      lc->q = q;
      lc->k = k;
      lc->v = v;
      lc->attn_weights = std::move(weights);
      lc->attn_concat = attn_concat;
      lc->after_attn = x1;
      lc->ln2 = std::move(ln2);
      lc->ln2_out = b;
      lc->ff_pre = ff_pre;
      lc->ff_act = ff_act;
    }
    x = std::move(x2);
  }

  LayerNormCache final_ln;
  Matrix out = layer_norm(x, params.final_ln_gamma, params.final_ln_beta,
                          &final_ln);
  if (cache) {
    cache->final_in = std::move(x);
    cache->final_ln = std::move(final_ln);
    cache->output = out;
  }
  return out;
}

namespace {

// Returns the gradient w.r.t. the input tokens.
Matrix transformer_backward(const EncoderCache& cache, const Matrix& d_out,
                            const ParameterSet& params, ParameterSet& grads) {
  const ModelConfig& cfg = params.config;
  const int n_heads = cfg.n_heads;
  const int dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dx = layer_norm_backward(cache.final_ln, params.final_ln_gamma, d_out,
                                  grads.final_ln_gamma, grads.final_ln_beta);

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const EncoderLayerParams& lp = params.layers[li];
    const EncoderLayerCache& lc = cache.layers[li];
    EncoderLayerParams& lg = grads.layers[li];

    // Feed-forward block: x2 = x1 + W2(gelu(W1 ln2(x1))).
    const Matrix d_ff_act =
        linear_backward(lc.ff_act, lp.w_ff2, dx, lg.w_ff2, lg.b_ff2);
    const Matrix d_ff_pre = d_ff_act.array() * gelu_grad(lc.ff_pre).array();
    const Matrix d_ln2_out =
        linear_backward(lc.ln2_out, lp.w_ff1, d_ff_pre, lg.w_ff1, lg.b_ff1);
    Matrix dx1 = dx + layer_norm_backward(lc.ln2, lp.ln2_gamma, d_ln2_out,
                                          lg.ln2_gamma, lg.ln2_beta);

    // Attention block: x1 = x0 + Wo(attn(ln1(x0))).
    const Matrix d_attn_concat =
        linear_backward(lc.attn_concat, lp.w_o, dx1, lg.w_o, lg.b_o);
    Matrix dq = Matrix::Zero(dx1.rows(), cfg.d_model);
    Matrix dk = Matrix::Zero(dx1.rows(), cfg.d_model);
    Matrix dv = Matrix::Zero(dx1.rows(), cfg.d_model);
    for (int h = 0; h < n_heads; ++h) {
      const auto d_oh = d_attn_concat.middleCols(h * dh, dh);
      const Matrix& wh = lc.attn_weights[static_cast<std::size_t>(h)];
      const auto qh = lc.q.middleCols(h * dh, dh);
      const auto kh = lc.k.middleCols(h * dh, dh);
      const auto vh = lc.v.middleCols(h * dh, dh);
      const Matrix dwh = d_oh * vh.transpose();
      dv.middleCols(h * dh, dh).noalias() = wh.transpose() * d_oh;
      const Matrix ds = softmax_rows_backward(wh, dwh);
      dq.middleCols(h * dh, dh).noalias() = scale * (ds * kh);
      dk.middleCols(h * dh, dh).noalias() = scale * (ds.transpose() * qh);
    }
    Matrix d_ln1_out =
        linear_backward(lc.ln1_out, lp.w_q, dq, lg.w_q, lg.b_q);
    d_ln1_out += linear_backward(lc.ln1_out, lp.w_k, dk, lg.w_k, lg.b_k);
    d_ln1_out += linear_backward(lc.ln1_out, lp.w_v, dv, lg.w_v, lg.b_v);
    dx = dx1 + layer_norm_backward(lc.ln1, lp.ln1_gamma, d_ln1_out,
                                   lg.ln1_gamma, lg.ln1_beta);
  }
  return dx;
}

}  // namespace

// ---------------------------------------------------------------------------
// Voxel-language branch

Vector voxel_language_forward(const Matrix& word_embeddings,
                              const Matrix& factor_token_matrix,
                              const ParameterSet& params, OwCache* cache) {
  const ModelConfig& cfg = params.config;
  if (!cfg.uses_transformer())
    throw ValidationError("variant " + std::string(to_string(cfg.variant)) +
                          " has no voxel-language branch");
  if (word_embeddings.rows() < 1)
    throw ValidationError("voxel-language branch needs at least one word");
  if (word_embeddings.cols() != cfg.d_t)
    throw ValidationError("word embedding width " +
                          std::to_string(word_embeddings.cols()) +
                          " does not match d_t=" + std::to_string(cfg.d_t));
  if (factor_token_matrix.rows() != kFactorCount ||
      factor_token_matrix.cols() != kFactorTokenDim)
    throw ValidationError("factor token matrix must be " +
                          std::to_string(kFactorCount) + "x" +
                          std::to_string(kFactorTokenDim) + ", got " +
                          std::to_string(factor_token_matrix.rows()) + "x" +
                          std::to_string(factor_token_matrix.cols()));

  int words_used = static_cast<int>(word_embeddings.rows());
  if (words_used > cfg.max_words) {
    warn_truncation(word_embeddings.rows(), cfg.max_words);
    words_used = cfg.max_words;
  }
  const Matrix word_slice = word_embeddings.topRows(words_used);

  const int t = 1 + words_used + kFactorCount;
  Matrix tokens(t, cfg.d_model);
  tokens.row(0) = params.cls_token.col(0).transpose();
  Matrix word_tok = linear(word_slice, params.word_proj_w, params.word_proj_b);
  word_tok += params.word_pos.topRows(words_used);
  word_tok.rowwise() += params.modality_lang.col(0).transpose();
  tokens.middleRows(1, words_used) = word_tok;
  Matrix factor_tok =
      linear(factor_token_matrix, params.factor_proj_w, params.factor_proj_b);
  factor_tok.rowwise() += params.modality_factor.col(0).transpose();
  tokens.middleRows(1 + words_used, kFactorCount) = factor_tok;

  EncoderCache local;
  EncoderCache* enc = cache ? &cache->encoder : &local;
  const Matrix contextual = transformer_encode(tokens, params, enc);
  const Vector cls_ctx = contextual.row(0).transpose();
  Vector e_ow = linear_vec(cls_ctx, params.head_w, params.head_b);

  if (cache) {
    cache->words_used = words_used;
    cache->word_slice = word_slice;
    cache->factor_tokens = factor_token_matrix;
    cache->tokens = std::move(tokens);
    cache->e_ow = e_ow;
  }
  return e_ow;
}

namespace {

void voxel_language_backward(const OwCache& cache, const Vector& d_e_ow,
                             const ParameterSet& params, ParameterSet& grads) {
  const Vector cls_ctx = cache.encoder.output.row(0).transpose();
  linear_vec_backward_params(cls_ctx, d_e_ow, grads.head_w, grads.head_b);

  Matrix d_ctx = Matrix::Zero(cache.tokens.rows(), params.config.d_model);
  d_ctx.row(0) = (params.head_w * d_e_ow).transpose();
  const Matrix d_tokens =
      transformer_backward(cache.encoder, d_ctx, params, grads);

  const int words_used = cache.words_used;
  grads.cls_token.col(0) += d_tokens.row(0).transpose();

  const Matrix d_word_tok = d_tokens.middleRows(1, words_used);
  grads.word_proj_w.noalias() += cache.word_slice.transpose() * d_word_tok;
  grads.word_proj_b.col(0) += d_word_tok.colwise().sum().transpose();
  grads.word_pos.topRows(words_used) += d_word_tok;
  grads.modality_lang.col(0) += d_word_tok.colwise().sum().transpose();

  const Matrix d_factor_tok = d_tokens.middleRows(1 + words_used, kFactorCount);
  grads.factor_proj_w.noalias() +=
      cache.factor_tokens.transpose() * d_factor_tok;
  grads.factor_proj_b.col(0) += d_factor_tok.colwise().sum().transpose();
  grads.modality_factor.col(0) += d_factor_tok.colwise().sum().transpose();
  // Word embeddings and factor tokens are inputs; no gradient beyond.
}

}  // namespace

// ---------------------------------------------------------------------------
// Scoring head

namespace {

double score_head_forward(const Vector& z, const ParameterSet& params,
                          ScoreCache* cache) {
  if (z.size() != params.config.score_input_dim())
    throw ValidationError("scoring input length " + std::to_string(z.size()) +
                          " does not match variant input dim " +
                          std::to_string(params.config.score_input_dim()));
  const Vector h_pre = linear_vec(z, params.score_w1, params.score_b1);
  const Vector h_act = h_pre.unaryExpr([](double v) { return gelu(v); });
  const double logit =
      (params.score_w2.col(0).dot(h_act)) + params.score_b2(0, 0);
  const double s = sigmoid(logit);
  if (cache) {
    cache->input = z;
    cache->h_pre = h_pre;
    cache->h_act = h_act;
    cache->logit = logit;
    cache->score = s;
  }
  return s;
}

void score_head_backward(const ScoreCache& cache, double d_score,
                         const ParameterSet& params, ParameterSet& grads,
                         Vector& d_input) {
  const double d_logit = d_score * cache.score * (1.0 - cache.score);
  grads.score_w2.col(0) += cache.h_act * d_logit;
  grads.score_b2(0, 0) += d_logit;
  Vector d_h_act = params.score_w2.col(0) * d_logit;
  Vector d_h_pre =
      d_h_act.array() *
      cache.h_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
  linear_vec_backward_params(cache.input, d_h_pre, grads.score_w1,
                             grads.score_b1);
  d_input = params.score_w1 * d_h_pre;
}

}  // namespace

double score(const Vector& e_vw, const Vector& e_ow, const ParameterSet& params,
             ScoreCache* cache) {
  if (params.config.variant != Variant::full)
    throw ValidationError(
        "score(e_vw, e_ow) joins both branches; configured variant is " +
        std::string(to_string(params.config.variant)));
  Vector z(e_vw.size() + e_ow.size());
  z << e_vw, e_ow;
  return score_head_forward(z, params, cache);
}

double score_candidate(const DescriptionFeatures& description,
                       const ObjectFeatures& object, const ParameterSet& params,
                       CandidateCache* cache) {
  const ModelConfig& cfg = params.config;
  Vector e_vw, z;
  switch (cfg.variant) {
    case Variant::full: {
      e_vw = visiolinguistic_forward(description.sentence_embedding,
                                     object.view_embeddings, params,
                                     cache ? &cache->vl : nullptr);
      const Vector e_ow = voxel_language_forward(
          description.word_embeddings, factor_tokens(object.factors), params,
          cache ? &cache->ow : nullptr);
      z.resize(e_vw.size() + e_ow.size());
      z << e_vw, e_ow;
      break;
    }
    case Variant::visiolinguistic_only: {
      z = visiolinguistic_forward(description.sentence_embedding,
                                  object.view_embeddings, params,
                                  cache ? &cache->vl : nullptr);
      break;
    }
    case Variant::voxel_only: {
      z = voxel_language_forward(description.word_embeddings,
                                 factor_tokens(object.factors), params,
                                 cache ? &cache->ow : nullptr);
      break;
    }
    case Variant::mlp_fusion: {
      e_vw = visiolinguistic_forward(description.sentence_embedding,
                                     object.view_embeddings, params,
                                     cache ? &cache->vl : nullptr);
      const Matrix tokens = factor_tokens(object.factors);
      const Vector pooled = tokens.colwise().maxCoeff().transpose();
      z.resize(e_vw.size() + pooled.size());
      z << e_vw, pooled;
      break;
    }
  }
  return score_head_forward(z, params, cache ? &cache->scoring : nullptr);
}

namespace {

void candidate_backward(const CandidateCache& cache, double d_score,
                        const ParameterSet& params, ParameterSet& grads) {
  const ModelConfig& cfg = params.config;
  Vector d_z;
  score_head_backward(cache.scoring, d_score, params, grads, d_z);
  switch (cfg.variant) {
    case Variant::full: {
      const Vector d_e_vw = d_z.head(cfg.fusion_dim);
      const Vector d_e_ow = d_z.tail(cfg.fusion_dim);
      visiolinguistic_backward(cache.vl, d_e_vw, params, grads);
      voxel_language_backward(cache.ow, d_e_ow, params, grads);
      break;
    }
    case Variant::visiolinguistic_only:
      visiolinguistic_backward(cache.vl, d_z, params, grads);
      break;
    case Variant::voxel_only:
      voxel_language_backward(cache.ow, d_z, params, grads);
      break;
    case Variant::mlp_fusion:
      // The tail of d_z covers the max-pooled factor tokens, which are
      // constants.
      visiolinguistic_backward(cache.vl, d_z.head(cfg.fusion_dim), params,
                               grads);
      break;
  }
}

}  // namespace

ScorePair forward_instance(const ReferenceInstance& instance,
                           const FeatureArchive& archive,
                           const ParameterSet& params) {
  const DescriptionFeatures& desc = archive.description(instance.description_id);
  const ObjectFeatures& target = archive.object(instance.target_id);
  const ObjectFeatures& distractor = archive.object(instance.distractor_id);

  ScorePair pair;
  pair.s_target = score_candidate(desc, target, params);
  pair.s_distractor = score_candidate(desc, distractor, params);
  pair.tie = std::fabs(pair.s_target - pair.s_distractor) <= 1e-12;
  pair.predicted_index = pair.tie ? 0 : (pair.s_target >= pair.s_distractor ? 0 : 1);
  return pair;
}

double batch_loss(const ParameterSet& params,
                  const std::vector<ReferenceInstance>& batch,
                  const FeatureArchive& archive, const LossConfig& loss) {
  if (batch.empty()) throw ValidationError("batch must be non-empty");
  double total = 0.0;
  for (const auto& inst : batch) {
    const DescriptionFeatures& desc = archive.description(inst.description_id);
    const double s_t = score_candidate(desc, archive.object(inst.target_id), params);
    const double s_d =
        score_candidate(desc, archive.object(inst.distractor_id), params);
    total += pair_loss(s_t, s_d, loss);
  }
  const double mean = total / static_cast<double>(batch.size());
  if (!std::isfinite(mean))
    throw NumericError("non-finite batch loss: " + std::to_string(mean));
  return mean;
}

BatchGradients gradients(const ParameterSet& params,
                         const std::vector<ReferenceInstance>& batch,
                         const FeatureArchive& archive,
                         const LossConfig& loss) {
  if (batch.empty()) throw ValidationError("batch must be non-empty");
  BatchGradients out;
  out.grads = zeros_like(params);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& inst : batch) {
    const DescriptionFeatures& desc = archive.description(inst.description_id);
    const ObjectFeatures& target = archive.object(inst.target_id);
    const ObjectFeatures& distractor = archive.object(inst.distractor_id);

    CandidateCache target_cache, distractor_cache;
    const double s_t = score_candidate(desc, target, params, &target_cache);
    const double s_d =
        score_candidate(desc, distractor, params, &distractor_cache);
    const PairLossGrad plg = pair_loss_grad(s_t, s_d, loss);
    total += plg.loss;
    candidate_backward(target_cache, plg.d_target * inv_n, params, out.grads);
    candidate_backward(distractor_cache, plg.d_distractor * inv_n, params,
                       out.grads);
  }
  out.loss = total * inv_n;
  if (!std::isfinite(out.loss))
    throw NumericError("non-finite batch loss: " + std::to_string(out.loss));
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCkptMagic[4] = {'V', 'L', 'G', 'C'};
constexpr std::uint16_t kCkptVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const ParameterSet& params,
                     std::uint64_t step) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  const ModelConfig& cfg = params.config;
  os.write(kCkptMagic, 4);
  binio::write_u16(os, kCkptVersion);
  for (int v : {cfg.d_v, cfg.d_t, cfg.d_model, cfg.n_heads, cfg.n_layers,
                cfg.d_ff, cfg.mlp_hidden, cfg.fusion_dim, cfg.max_words})
    binio::write_u32(os, static_cast<std::uint32_t>(v));
  binio::write_u16(os, static_cast<std::uint16_t>(cfg.variant));
  binio::write_u16(os, static_cast<std::uint16_t>(cfg.view_pooling));
  binio::write_u64(os, step);

  const auto tensors = params.named_tensors();
  binio::write_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    binio::write_str(os, t.name);
    binio::write_u32(os, static_cast<std::uint32_t>(t.tensor->rows()));
    binio::write_u32(os, static_cast<std::uint32_t>(t.tensor->cols()));
    for (Eigen::Index r = 0; r < t.tensor->rows(); ++r)
      for (Eigen::Index c = 0; c < t.tensor->cols(); ++c)
        binio::write_f32(os, static_cast<float>((*t.tensor)(r, c)));
  }
  os.flush();
  if (!os) throw IoError("write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw FormatError("'" + path + "' is not a VLGC checkpoint (bad magic)");
  if (binio::read_u16(is, "version") != kCkptVersion)
    throw FormatError("unsupported checkpoint version");

  ModelConfig cfg;
  cfg.d_v = static_cast<int>(binio::read_u32(is, "d_v"));
  cfg.d_t = static_cast<int>(binio::read_u32(is, "d_t"));
  cfg.d_model = static_cast<int>(binio::read_u32(is, "d_model"));
  cfg.n_heads = static_cast<int>(binio::read_u32(is, "n_heads"));
  cfg.n_layers = static_cast<int>(binio::read_u32(is, "n_layers"));
  cfg.d_ff = static_cast<int>(binio::read_u32(is, "d_ff"));
  cfg.mlp_hidden = static_cast<int>(binio::read_u32(is, "mlp_hidden"));
  cfg.fusion_dim = static_cast<int>(binio::read_u32(is, "fusion_dim"));
  cfg.max_words = static_cast<int>(binio::read_u32(is, "max_words"));
  const std::uint16_t variant_tag = binio::read_u16(is, "variant");
  if (variant_tag > static_cast<std::uint16_t>(Variant::voxel_only))
    throw FormatError("checkpoint declares unknown variant tag " +
                      std::to_string(variant_tag));
  cfg.variant = static_cast<Variant>(variant_tag);
  const std::uint16_t pooling_tag = binio::read_u16(is, "pooling");
  if (pooling_tag > static_cast<std::uint16_t>(ViewPooling::mean))
    throw FormatError("checkpoint declares unknown pooling tag " +
                      std::to_string(pooling_tag));
  cfg.view_pooling = static_cast<ViewPooling>(pooling_tag);

  Checkpoint ckpt;
  ckpt.params = init_params(cfg, 0);
  ckpt.step = binio::read_u64(is, "step");

  auto tensors = ckpt.params.named_tensors();
  std::unordered_map<std::string, Matrix*> by_name;
  for (auto& t : tensors) by_name[t.name] = t.tensor;

  const std::uint32_t count = binio::read_u32(is, "tensor count");
  if (count != tensors.size())
    throw FormatError("checkpoint lists " + std::to_string(count) +
                      " tensors, configuration expects " +
                      std::to_string(tensors.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = binio::read_str(is, "tensor name");
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw FormatError("checkpoint tensor '" + name + "' is not recognized");
    const auto rows = static_cast<Eigen::Index>(binio::read_u32(is, "rows"));
    const auto cols = static_cast<Eigen::Index>(binio::read_u32(is, "cols"));
    if (rows != it->second->rows() || cols != it->second->cols())
      throw FormatError("checkpoint tensor '" + name + "' has shape " +
                        std::to_string(rows) + "x" + std::to_string(cols) +
                        ", expected " + std::to_string(it->second->rows()) +
                        "x" + std::to_string(it->second->cols()));
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        (*it->second)(r, c) = binio::read_f32(is, "tensor payload");
  }
  return ckpt;
}

}  // namespace vlg
