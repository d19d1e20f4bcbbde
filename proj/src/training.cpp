// SPDX-License-Identifier: Apache-2.0
#include "vlg/training.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace vlg {

void TrainConfig::validate() const {
  if (!(smoothing >= 0.0 && smoothing < 0.5))
    throw ValidationError("smoothing must lie in [0, 0.5), got " +
                          std::to_string(smoothing));
  if (warmup_steps < 0) throw ValidationError("warmup_steps must be >= 0");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (base_lr <= 0.0) throw ValidationError("base_lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ValidationError("betas must lie in [0, 1)");
  if (eps <= 0.0) throw ValidationError("eps must be positive");
  if (weight_decay < 0.0) throw ValidationError("weight_decay must be >= 0");
  if (grad_clip < 0.0) throw ValidationError("grad_clip must be >= 0");
  if (threads < 1) throw ValidationError("threads must be >= 1");
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "train.base_lr=" << base_lr << "\n";
  os << "train.warmup_steps=" << warmup_steps << "\n";
  os << "train.epochs=" << epochs << "\n";
  os << "train.batch_size=" << batch_size << "\n";
  os << "train.smoothing=" << smoothing << "\n";
  os << "train.weight_decay=" << weight_decay << "\n";
  os << "train.beta1=" << beta1 << "\n";
  os << "train.beta2=" << beta2 << "\n";
  os << "train.eps=" << eps << "\n";
  os << "train.seed=" << seed << "\n";
  os << "train.loss=" << to_string(loss) << "\n";
  os << "train.grad_clip=" << grad_clip << "\n";
  os << "train.threads=" << threads << "\n";
  return os.str();
}

std::string model_config_text(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "model.d_v=" << cfg.d_v << "\n";
  os << "model.d_t=" << cfg.d_t << "\n";
  os << "model.d_model=" << cfg.d_model << "\n";
  os << "model.n_heads=" << cfg.n_heads << "\n";
  os << "model.n_layers=" << cfg.n_layers << "\n";
  os << "model.d_ff=" << cfg.d_ff << "\n";
  os << "model.mlp_hidden=" << cfg.mlp_hidden << "\n";
  os << "model.fusion_dim=" << cfg.fusion_dim << "\n";
  os << "model.max_words=" << cfg.max_words << "\n";
  os << "model.variant=" << to_string(cfg.variant) << "\n";
  os << "model.view_pooling=" << to_string(cfg.view_pooling) << "\n";
  return os.str();
}

double lr_at(long step, const TrainConfig& cfg) {
  if (step < 0) throw ValidationError("lr_at step must be >= 0");
  if (cfg.warmup_steps == 0) return cfg.base_lr;
  const double ramp =
      std::min(1.0, static_cast<double>(step) /
                        static_cast<double>(cfg.warmup_steps));
  return cfg.base_lr * ramp;
}

AdamState init_adam_state(const ParameterSet& params) {
  AdamState state;
  state.m = zeros_like(params);
  state.v = zeros_like(params);
  state.step = 0;
  return state;
}

void adamw_step(ParameterSet& params, const ParameterSet& grads,
                AdamState& state, const TrainConfig& cfg) {
  auto pt = params.named_tensors();
  auto gt = grads.named_tensors();
  auto mt = state.m.named_tensors();
  auto vt = state.v.named_tensors();
  if (pt.size() != gt.size())
    throw ValidationError("gradient tensor list does not match parameters");

  for (const auto& g : gt)
    if (!g.tensor->allFinite())
      throw NumericError("non-finite gradient in tensor '" + g.name +
                         "'; step refused");

  state.step += 1;
  const double lr = lr_at(static_cast<long>(state.step), cfg);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < pt.size(); ++i) {
    Matrix& theta = *pt[i].tensor;
    const Matrix& g = *gt[i].tensor;
    Matrix& m = *mt[i].tensor;
    Matrix& v = *vt[i].tensor;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.array().square().matrix();
    const Matrix m_hat = m / bc1;
    const Matrix v_hat = v / bc2;
    theta -= lr * (m_hat.array() / (v_hat.array().sqrt() + cfg.eps) +
                   cfg.weight_decay * theta.array())
                      .matrix();
  }
}

namespace {

double global_grad_norm(const ParameterSet& grads) {
  double ss = 0.0;
  for (const auto& t : grads.named_tensors()) ss += t.tensor->squaredNorm();
  return std::sqrt(ss);
}

void scale_grads(ParameterSet& grads, double factor) {
  for (auto& t : grads.named_tensors()) *t.tensor *= factor;
}

// Gradient of one batch with optional striped fan-out. Threads accumulate
// into private buffers over fixed instance stripes; buffers are reduced in
// thread order, so the result is deterministic for a given thread count.
BatchGradients batch_gradients(const ParameterSet& params,
                               const std::vector<ReferenceInstance>& batch,
                               const FeatureArchive& archive,
                               const LossConfig& loss, int threads) {
  if (threads <= 1 || batch.size() < 2)
    return gradients(params, batch, archive, loss);

  const int workers =
      std::min<int>(threads, static_cast<int>(batch.size()));
  std::vector<BatchGradients> partial(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  std::vector<std::vector<ReferenceInstance>> stripes(
      static_cast<std::size_t>(workers));
  for (std::size_t i = 0; i < batch.size(); ++i)
    stripes[i % static_cast<std::size_t>(workers)].push_back(batch[i]);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w]() {
      partial[static_cast<std::size_t>(w)] =
          gradients(params, stripes[static_cast<std::size_t>(w)], archive, loss);
    });
  for (auto& th : pool) th.join();

  BatchGradients out;
  out.grads = zeros_like(params);
  auto out_tensors = out.grads.named_tensors();
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (int w = 0; w < workers; ++w) {
    const auto& part = partial[static_cast<std::size_t>(w)];
    const double stripe_n =
        static_cast<double>(stripes[static_cast<std::size_t>(w)].size());
    out.loss += part.loss * stripe_n * inv_n;
    auto part_tensors = part.grads.named_tensors();
    for (std::size_t i = 0; i < out_tensors.size(); ++i)
      *out_tensors[i].tensor += stripe_n * inv_n * (*part_tensors[i].tensor);
  }
  if (!std::isfinite(out.loss))
    throw NumericError("non-finite batch loss: " + std::to_string(out.loss));
  return out;
}

}  // namespace

RunRecord train(const TrainConfig& train_cfg, const ModelConfig& model_cfg,
                const std::vector<ReferenceInstance>& instances,
                const FeatureArchive& archive, const std::string& out_dir,
                std::ostream* progress) {
  train_cfg.validate();
  model_cfg.validate();
  std::filesystem::create_directories(out_dir);

  BatchIterator batches(instances, Split::train, train_cfg.seed,
                        train_cfg.batch_size);
  bool has_valid = false;
  for (const auto& inst : instances)
    if (inst.split == Split::valid) { has_valid = true; break; }
  if (!has_valid)
    throw ValidationError("empty split 'valid': training requires validation "
                          "instances for checkpoint selection");

  ParameterSet params = init_params(model_cfg, train_cfg.seed);
  AdamState state = init_adam_state(params);
  const LossConfig loss = train_cfg.loss_config();

  RunRecord record;
  record.seed = train_cfg.seed;
  record.model_config_text = model_config_text(model_cfg);
  record.train_config_text = train_cfg.to_text();
  record.checkpoint_path =
      (std::filesystem::path(out_dir) / "best.vlgc").string();

  double best_all = -1.0;
  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t steps_in_epoch = 0;
    for (const auto& batch_indices : batches.epoch_batches(epoch)) {
      std::vector<ReferenceInstance> batch;
      batch.reserve(batch_indices.size());
      for (std::size_t idx : batch_indices) batch.push_back(instances[idx]);
      BatchGradients bg =
          batch_gradients(params, batch, archive, loss, train_cfg.threads);
      if (train_cfg.grad_clip > 0.0) {
        const double norm = global_grad_norm(bg.grads);
        if (norm > train_cfg.grad_clip)
          scale_grads(bg.grads, train_cfg.grad_clip / norm);
      }
      adamw_step(params, bg.grads, state, train_cfg);
      epoch_loss += bg.loss;
      ++steps_in_epoch;
    }
    epoch_loss /= static_cast<double>(steps_in_epoch);

    EpochRecord er;
    er.train_loss = epoch_loss;
    er.val_accuracy = evaluate_split(params, instances, Split::valid, archive);
    record.epochs.push_back(er);

    if (er.val_accuracy.all() > best_all) {
      best_all = er.val_accuracy.all();
      record.best_epoch = epoch;
      save_checkpoint(record.checkpoint_path, params, state.step);
    }
    if (progress)
      (*progress) << "epoch=" << epoch << " train_loss=" << epoch_loss
                  << " val_all=" << er.val_accuracy.all()
                  << (record.best_epoch == epoch ? " *" : "") << "\n";
  }
  record.total_steps = state.step;
  return record;
}

void save_run_record(const RunRecord& record, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os << "seed=" << record.seed << "\n";
  os << "best_epoch=" << record.best_epoch << "\n";
  os << "checkpoint=" << record.checkpoint_path << "\n";
  os << "total_steps=" << record.total_steps << "\n";
  os << record.model_config_text;
  os << record.train_config_text;
  char buf[256];
  for (std::size_t e = 0; e < record.epochs.size(); ++e) {
    const EpochRecord& er = record.epochs[e];
    const CategoryAccuracy& a = er.val_accuracy;
    std::snprintf(buf, sizeof(buf),
                  "epoch=%zu train_loss=%.17g vc=%ld vn=%ld bc=%ld bn=%ld\n", e,
                  er.train_loss, a.visual_correct, a.visual_count,
                  a.blind_correct, a.blind_count);
    os << buf;
  }
  if (!os) throw IoError("write to '" + path + "' failed");
}

RunRecord load_run_record(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open run record '" + path + "'");
  RunRecord record;
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("seed=", 0) == 0)
      record.seed = std::stoull(line.substr(5));
    else if (line.rfind("best_epoch=", 0) == 0)
      record.best_epoch = std::stoi(line.substr(11));
    else if (line.rfind("checkpoint=", 0) == 0)
      record.checkpoint_path = line.substr(11);
    else if (line.rfind("total_steps=", 0) == 0)
      record.total_steps = std::stoull(line.substr(12));
    else if (line.rfind("model.", 0) == 0)
      record.model_config_text += line + "\n";
    else if (line.rfind("train.", 0) == 0)
      record.train_config_text += line + "\n";
    else if (line.rfind("epoch=", 0) == 0) {
      EpochRecord er;
      CategoryAccuracy& a = er.val_accuracy;
      std::size_t epoch_index = 0;
      if (std::sscanf(line.c_str(),
                      "epoch=%zu train_loss=%lg vc=%ld vn=%ld bc=%ld bn=%ld",
                      &epoch_index, &er.train_loss, &a.visual_correct,
                      &a.visual_count, &a.blind_correct, &a.blind_count) != 6)
        throw ParseError("bad epoch row in run record: '" + line + "'");
      record.epochs.push_back(er);
    }
  }
  return record;
}

}  // namespace vlg
