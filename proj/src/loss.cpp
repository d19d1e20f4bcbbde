// SPDX-License-Identifier: Apache-2.0
#include "vlg/loss.hpp"

#include <algorithm>
#include <cmath>

namespace vlg {

const char* to_string(LossKind k) {
  return k == LossKind::smoothed_bce ? "smoothed_bce" : "paired_softmax";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "smoothed_bce") return LossKind::smoothed_bce;
  if (s == "paired_softmax") return LossKind::paired_softmax;
  throw ValidationError("unknown loss '" + s +
                        "' (expected smoothed_bce|paired_softmax)");
}

namespace {

void check_eps(double eps) {
  if (!(eps >= 0.0 && eps < 0.5))
    throw ValidationError("smoothing must lie in [0, 0.5), got " +
                          std::to_string(eps));
}

struct Clipped {
  double value;
  bool clipped;
};

Clipped clip_score(double s) {
  if (s < kScoreClip) return {kScoreClip, true};
  if (s > 1.0 - kScoreClip) return {1.0 - kScoreClip, true};
  return {s, false};
}

double bce(double p, double y) {
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

// dBCE/dp at clipped p; zero if the score sat outside the clip band.
double bce_grad(const Clipped& p, double y) {
  if (p.clipped) return 0.0;
  return -y / p.value + (1.0 - y) / (1.0 - p.value);
}

}  // namespace

double smoothed_bce(double s_target, double s_distractor, double eps) {
  check_eps(eps);
  const Clipped t = clip_score(s_target);
  const Clipped d = clip_score(s_distractor);
  return bce(t.value, 1.0 - eps) + bce(d.value, eps);
}

PairLossGrad smoothed_bce_grad(double s_target, double s_distractor,
                               double eps) {
  check_eps(eps);
  const Clipped t = clip_score(s_target);
  const Clipped d = clip_score(s_distractor);
  PairLossGrad out;
  out.loss = bce(t.value, 1.0 - eps) + bce(d.value, eps);
  out.d_target = bce_grad(t, 1.0 - eps);
  out.d_distractor = bce_grad(d, eps);
  return out;
}

double paired_softmax_loss(double s_target, double s_distractor, double eps) {
  return paired_softmax_grad(s_target, s_distractor, eps).loss;
}

PairLossGrad paired_softmax_grad(double s_target, double s_distractor,
                                 double eps) {
  check_eps(eps);
  const Clipped t = clip_score(s_target);
  const Clipped d = clip_score(s_distractor);
  const double z_t = std::log(t.value / (1.0 - t.value));
  const double z_d = std::log(d.value / (1.0 - d.value));
  const double m = std::max(z_t, z_d);
  const double e_t = std::exp(z_t - m);
  const double e_d = std::exp(z_d - m);
  const double p_t = e_t / (e_t + e_d);
  const double p_d = 1.0 - p_t;

  PairLossGrad out;
  out.loss = -((1.0 - eps) * std::log(std::max(p_t, kScoreClip)) +
               eps * std::log(std::max(p_d, kScoreClip)));
  // dL/dz through the softmax, then dz/ds = 1 / (s (1-s)).
  const double dz_t = p_t - (1.0 - eps);
  const double dz_d = p_d - eps;
  out.d_target = t.clipped ? 0.0 : dz_t / (t.value * (1.0 - t.value));
  out.d_distractor = d.clipped ? 0.0 : dz_d / (d.value * (1.0 - d.value));
  return out;
}

double pair_loss(double s_target, double s_distractor, const LossConfig& cfg) {
  return cfg.kind == LossKind::smoothed_bce
             ? smoothed_bce(s_target, s_distractor, cfg.smoothing)
             : paired_softmax_loss(s_target, s_distractor, cfg.smoothing);
}

PairLossGrad pair_loss_grad(double s_target, double s_distractor,
                            const LossConfig& cfg) {
  return cfg.kind == LossKind::smoothed_bce
             ? smoothed_bce_grad(s_target, s_distractor, cfg.smoothing)
             : paired_softmax_grad(s_target, s_distractor, cfg.smoothing);
}

}  // namespace vlg
