// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "vlg/common.hpp"

namespace vlg {

enum class LossKind { smoothed_bce, paired_softmax };

const char* to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

struct LossConfig {
  LossKind kind = LossKind::smoothed_bce;
  double smoothing = 0.2;  // epsilon in [0, 0.5)
};

// Scores at exactly 0 or 1 are clipped to this band before any logarithm.
inline constexpr double kScoreClip = 1e-7;

// Per-pair loss with smoothed targets (1-eps for the target score, eps for
// the distractor score) and its gradient w.r.t. the two scores.
struct PairLossGrad {
  double loss = 0.0;
  double d_target = 0.0;
  double d_distractor = 0.0;
};

double smoothed_bce(double s_target, double s_distractor, double eps);
PairLossGrad smoothed_bce_grad(double s_target, double s_distractor,
                               double eps);

// Alternative: cross-entropy of the softmax over the two score logits
// against the smoothed target distribution (1-eps, eps).
double paired_softmax_loss(double s_target, double s_distractor, double eps);
PairLossGrad paired_softmax_grad(double s_target, double s_distractor,
                                 double eps);

double pair_loss(double s_target, double s_distractor, const LossConfig& cfg);
PairLossGrad pair_loss_grad(double s_target, double s_distractor,
                            const LossConfig& cfg);

}  // namespace vlg
