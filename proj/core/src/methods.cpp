// Copyright 2026 The ntlkit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ntl/methods.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "ntl/errors.hpp"
#include "ntl/metrics.hpp"
#include "ntl/optim.hpp"

namespace ntl::methods {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

const std::map<MethodName, std::set<std::string>>& allowed_params() {
  static const std::map<MethodName, std::set<std::string>> table = {
      {MethodName::sl, {}},
      {MethodName::ntl, {"defense_perturb_magnitude"}},
      {MethodName::cuti_style, {"cuti_noise_std", "defense_perturb_magnitude"}},
      {MethodName::dso, {"dso_radius", "dso_ascent_steps"}},
      {MethodName::sophon,
       {"sophon_inner_steps", "sophon_inner_lr", "sophon_meta_lr", "sophon_risk", "sophon_second_order",
        "sophon_meta_steps"}},
      {MethodName::source_only_wrapper,
       {"aux_strategy", "aux_magnitude", "aux_ops_per_sample", "cuti_noise_std", "defense_perturb_magnitude"}},
  };
  return table;
}

// Cycling shuffled index stream over a split.
class BatchStream {
 public:
  BatchStream(const std::vector<int64_t>& split, uint64_t seed) : split_(&split), rng_(seed) {
    if (split.empty()) throw ValidationError("empty training split");
    reshuffle();
  }

  std::vector<int64_t> next(int64_t batch_size) {
    std::vector<int64_t> out;
    out.reserve(static_cast<size_t>(batch_size));
    while (static_cast<int64_t>(out.size()) < batch_size) {
      if (cursor_ == order_.size()) reshuffle();
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    order_.assign(split_->begin(), split_->end());
    rng_.shuffle(order_);
    cursor_ = 0;
  }
  const std::vector<int64_t>* split_;
  Rng rng_;
  std::vector<int64_t> order_;
  size_t cursor_ = 0;
};

int batch_correct(const Tensor& logits, const std::vector<int>& labels) {
  int64_t n = logits.dim(0), c = logits.dim(1);
  int correct = 0;
  for (int64_t i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (logits.at2(i, j) > logits.at2(i, best)) best = j;
    if (best == labels[static_cast<size_t>(i)]) correct++;
  }
  return correct;
}

void collect_grads(const std::vector<ad::VarPtr>& leaves, std::vector<const Tensor*>& out) {
  out.clear();
  for (const auto& l : leaves) {
    l->ensure_grad();
    out.push_back(&l->grad);
  }
}

void check_finite(double loss) {
  if (!std::isfinite(loss)) throw DivergenceError("divergence detected");
}

struct EpochStats {
  double loss_sum = 0.0;
  int64_t correct = 0;
  int64_t seen = 0;

  void note(double loss, int correct_in_batch, int64_t batch) {
    loss_sum += loss * static_cast<double>(batch);
    correct += correct_in_batch;
    seen += batch;
  }
  double mean_loss() const { return loss_sum / static_cast<double>(seen); }
  double accuracy() const { return 100.0 * static_cast<double>(correct) / static_cast<double>(seen); }
};

ProvenanceCounters delta(const ProvenanceCounters& now, const ProvenanceCounters& before) {
  return {now.image_reads - before.image_reads, now.label_reads - before.label_reads};
}

}  // namespace

double MethodSpec::param(const std::string& key, double fallback) const {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

void MethodSpec::validate() const {
  const auto& allowed = allowed_params().at(name);
  for (const auto& [key, value] : params) {
    (void)value;
    if (!allowed.count(key))
      throw ValidationError(std::string("method '") + to_string(name) + "' does not accept param '" + key + "'");
  }
  objective.validate();
  if (defense_consistency_weight < 0.0) throw ValidationError("defense_consistency_weight must be nonnegative");
}

// ---------------------------------------------------------------------------
// supervised reference
// ---------------------------------------------------------------------------

TrainResult train_supervised(const ModelBundle& model0, const Dataset& source, const SplitTriple& split,
                             const RunConfig& cfg) {
  cfg.validate();
  if (cfg.epochs > 0 && split.train.empty()) throw ValidationError("empty training split");
  TrainResult res;
  res.model = model0;
  ProvenanceCounters src_before = source.counters();

  auto params = trainable_params(res.model, true, true, false);
  auto opt = make_optimizer(cfg.optimizer_name, cfg.learning_rate);
  Rng order_rng(derive_seed(cfg.seed, "source_batches"));
  std::vector<const Tensor*> grads;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int64_t> order = split.train;
    order_rng.shuffle(order);
    EpochStats stats;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      Batch b = source.gather(std::span<const int64_t>(order.data() + start, stop - start));
      auto tm = TapeModel::bind(res.model, true, true, false);
      auto logits = tm.logits(ad::constant(b.images));
      auto root = ad::nll_mean(ad::row_log_softmax(logits), b.labels);
      check_finite(root->value.item());
      ad::backward(root);
      collect_grads(tm.trainable_leaves(), grads);
      opt->step(params, grads);
      stats.note(root->value.item(), batch_correct(logits->value, b.labels), b.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = stats.mean_loss();
    rec.train_acc = stats.accuracy();
    rec.source_val_acc = evaluate_accuracy(res.model, source, split.val);
    rec.target_val_acc = kNan;
    res.history.epochs.push_back(rec);
  }

  res.history.source_reads = delta(source.counters(), src_before);
  return res;
}

// ---------------------------------------------------------------------------
// target-specified training
// ---------------------------------------------------------------------------

TrainResult train_ntl(const ModelBundle& model0, const DomainPair& pair, const SplitTriple& source_split,
                      const SplitTriple& target_split, const MethodSpec& spec, const RunConfig& cfg) {
  cfg.validate();
  spec.validate();
  const objectives::ObjectiveSpec& obj = spec.objective;
  if (obj.lambda > 0.0 && !obj.has_regularizer()) throw ValidationError("no target regularizer configured");
  bool use_aux = obj.feature_reg == objectives::FeatureReg::domain_confusion;
  if (use_aux && !model0.has_aux_head()) throw ValidationError("no domain head configured");
  if (cfg.epochs > 0 && obj.lambda > 0.0 && target_split.train.empty())
    throw ValidationError("empty target train split");

  TrainResult res;
  res.model = model0;
  ProvenanceCounters src_before = pair.source->counters();
  ProvenanceCounters tgt_before = pair.target->counters();

  auto params = trainable_params(res.model, true, true, use_aux);
  auto opt = make_optimizer(cfg.optimizer_name, cfg.learning_rate);
  Rng order_rng(derive_seed(cfg.seed, "source_batches"));
  Rng defense_rng(derive_seed(cfg.seed, "defense_perturb"));
  std::unique_ptr<BatchStream> target_stream;
  if (obj.lambda > 0.0 && cfg.epochs > 0)
    target_stream = std::make_unique<BatchStream>(target_split.train, derive_seed(cfg.seed, "target_batches"));

  std::vector<auxgen::Augmentation> pset;
  if (spec.defense_consistency_weight > 0.0)
    pset = auxgen::perturbation_set(auxgen::PerturbationKind::transntl_default,
                                    spec.param("defense_perturb_magnitude", 0.25));

  std::vector<const Tensor*> grads;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int64_t> order = source_split.train;
    order_rng.shuffle(order);
    EpochStats stats;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      Batch sb = pair.source->gather(std::span<const int64_t>(order.data() + start, stop - start));
      Batch tb;
      if (target_stream) tb = pair.target->gather(target_stream->next(cfg.batch_size));

      auto tm = TapeModel::bind(res.model, true, true, use_aux);
      auto root = objectives::composite_node(tm, sb, tb, obj);
      if (spec.defense_consistency_weight > 0.0)
        root = ad::add(root, ad::scale(transntl_defense_node(tm, sb.images, pset, defense_rng),
                                       spec.defense_consistency_weight));
      check_finite(root->value.item());
      ad::backward(root);
      collect_grads(tm.trainable_leaves(), grads);
      opt->step(params, grads);
      stats.note(root->value.item(), batch_correct(res.model.logits(sb.images), sb.labels), sb.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = stats.mean_loss();
    rec.train_acc = stats.accuracy();
    rec.source_val_acc = evaluate_accuracy(res.model, *pair.source, source_split.val);
    rec.target_val_acc =
        target_split.val.empty() ? kNan : evaluate_accuracy(res.model, *pair.target, target_split.val);
    res.history.epochs.push_back(rec);
  }

  res.history.source_reads = delta(pair.source->counters(), src_before);
  res.history.target_reads = delta(pair.target->counters(), tgt_before);
  return res;
}

// ---------------------------------------------------------------------------
// style remix (CUTI-style)
// ---------------------------------------------------------------------------

Batch make_cuti_style_batch(const Batch& source_batch, double noise_std, Rng& rng, bool clip) {
  if (source_batch.size() < 1) throw ValidationError("make_cuti_style_batch: empty batch");
  Batch out;
  out.images = auxgen::style_remix(source_batch.images, noise_std, rng, clip);
  out.labels = source_batch.labels;
  return out;
}

TrainResult train_cuti_style(const ModelBundle& model0, const Dataset& source, const SplitTriple& split,
                             const MethodSpec& spec, const RunConfig& cfg) {
  cfg.validate();
  spec.validate();
  const objectives::ObjectiveSpec& obj = spec.objective;
  if (obj.lambda > 0.0 && !obj.has_regularizer()) throw ValidationError("no target regularizer configured");
  const double noise_std = spec.param("cuti_noise_std", 0.5);

  TrainResult res;
  res.model = model0;
  ProvenanceCounters src_before = source.counters();

  bool use_aux = obj.feature_reg == objectives::FeatureReg::domain_confusion;
  if (use_aux && !model0.has_aux_head()) throw ValidationError("no domain head configured");
  auto params = trainable_params(res.model, true, true, use_aux);
  auto opt = make_optimizer(cfg.optimizer_name, cfg.learning_rate);
  Rng order_rng(derive_seed(cfg.seed, "source_batches"));
  Rng style_rng(derive_seed(cfg.seed, "cuti_style"));
  Rng defense_rng(derive_seed(cfg.seed, "defense_perturb"));

  std::vector<auxgen::Augmentation> pset;
  if (spec.defense_consistency_weight > 0.0)
    pset = auxgen::perturbation_set(auxgen::PerturbationKind::transntl_default,
                                    spec.param("defense_perturb_magnitude", 0.25));

  std::vector<const Tensor*> grads;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int64_t> order = split.train;
    order_rng.shuffle(order);
    EpochStats stats;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      Batch sb = source.gather(std::span<const int64_t>(order.data() + start, stop - start));
      Batch tb;
      if (obj.lambda > 0.0) tb = make_cuti_style_batch(sb, noise_std, style_rng);

      auto tm = TapeModel::bind(res.model, true, true, use_aux);
      auto root = objectives::composite_node(tm, sb, tb, obj);
      if (spec.defense_consistency_weight > 0.0)
        root = ad::add(root, ad::scale(transntl_defense_node(tm, sb.images, pset, defense_rng),
                                       spec.defense_consistency_weight));
      check_finite(root->value.item());
      ad::backward(root);
      collect_grads(tm.trainable_leaves(), grads);
      opt->step(params, grads);
      stats.note(root->value.item(), batch_correct(res.model.logits(sb.images), sb.labels), sb.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = stats.mean_loss();
    rec.train_acc = stats.accuracy();
    rec.source_val_acc = evaluate_accuracy(res.model, source, split.val);
    rec.target_val_acc = kNan;
    res.history.epochs.push_back(rec);
  }

  res.history.source_reads = delta(source.counters(), src_before);
  return res;
}

// ---------------------------------------------------------------------------
// DSO: worst-case risk over crafted perturbations
// ---------------------------------------------------------------------------

Tensor dso_craft_perturbation(const ModelBundle& model, const Batch& batch, double radius, int ascent_steps) {
  if (radius < 0.0) throw ValidationError("dso radius must be nonnegative");
  if (ascent_steps < 1) throw ValidationError("dso ascent steps must be positive");
  Tensor delta(batch.images.shape());
  if (radius == 0.0) return delta;
  const double step = radius / static_cast<double>(ascent_steps);
  Tensor err_rows = objectives::error_label_rows(batch.labels, model.arch().num_classes);
  for (int k = 0; k < ascent_steps; ++k) {
    Tensor perturbed = batch.images;
    perturbed.add_(delta);
    auto x = ad::leaf(perturbed, true);
    auto tm = TapeModel::bind(model, false, false, false);
    auto loss = ad::kl_rows_mean(ad::row_log_softmax(tm.logits(x)), err_rows);
    ad::backward(loss);
    x->ensure_grad();
    for (int64_t i = 0; i < delta.numel(); ++i) {
      double g = x->grad[i];
      double d = delta[i] + step * (g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0));
      delta[i] = std::clamp(d, -radius, radius);
    }
  }
  return delta;
}

TrainResult train_dso(const ModelBundle& model0, const Dataset& source, const SplitTriple& split,
                      const MethodSpec& spec, const RunConfig& cfg) {
  cfg.validate();
  spec.validate();
  const double radius = spec.param("dso_radius", 0.1);
  const int ascent_steps = static_cast<int>(spec.param("dso_ascent_steps", 3));
  const double lambda = spec.objective.lambda;

  TrainResult res;
  res.model = model0;
  ProvenanceCounters src_before = source.counters();

  auto params = trainable_params(res.model, true, true, false);
  auto opt = make_optimizer(cfg.optimizer_name, cfg.learning_rate);
  Rng order_rng(derive_seed(cfg.seed, "source_batches"));
  const int num_classes = res.model.arch().num_classes;

  std::vector<const Tensor*> grads;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int64_t> order = split.train;
    order_rng.shuffle(order);
    EpochStats stats;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      Batch b = source.gather(std::span<const int64_t>(order.data() + start, stop - start));

      Tensor deltas = dso_craft_perturbation(res.model, b, radius, ascent_steps);
      Tensor perturbed = b.images;
      perturbed.add_(deltas);
      Tensor err_rows = objectives::error_label_rows(b.labels, num_classes);

      auto tm = TapeModel::bind(res.model, true, true, false);
      auto clean_lp = ad::row_log_softmax(tm.logits(ad::constant(b.images)));
      auto pert_lp = ad::row_log_softmax(tm.logits(ad::constant(perturbed)));
      auto root =
          ad::add(ad::nll_mean(clean_lp, b.labels), ad::scale(ad::kl_rows_mean(pert_lp, err_rows), lambda));
      check_finite(root->value.item());
      ad::backward(root);
      collect_grads(tm.trainable_leaves(), grads);
      opt->step(params, grads);
      stats.note(root->value.item(), batch_correct(res.model.logits(b.images), b.labels), b.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = stats.mean_loss();
    rec.train_acc = stats.accuracy();
    rec.source_val_acc = evaluate_accuracy(res.model, source, split.val);
    rec.target_val_acc = kNan;
    res.history.epochs.push_back(rec);
  }

  res.history.source_reads = delta(source.counters(), src_before);
  return res;
}

// ---------------------------------------------------------------------------
// simulated fine-tuning with meta-gradients
// ---------------------------------------------------------------------------

namespace {

std::vector<ad::VarPtr> wrap_leaves(const std::vector<Tensor>& params) {
  std::vector<ad::VarPtr> leaves;
  leaves.reserve(params.size());
  for (const auto& t : params) leaves.push_back(ad::leaf(t, true));
  return leaves;
}

std::pair<double, std::vector<Tensor>> value_and_grads(const LossBuilder& builder, const std::vector<Tensor>& at,
                                                       int step) {
  auto leaves = wrap_leaves(at);
  auto root = builder(leaves, step);
  ad::backward(root);
  std::vector<Tensor> gs;
  gs.reserve(leaves.size());
  for (auto& l : leaves) {
    l->ensure_grad();
    gs.push_back(l->grad);
  }
  return {root->value.item(), std::move(gs)};
}

}  // namespace

MetaResult simulate_finetune_meta(const std::vector<Tensor>& base_params, const LossBuilder& inner_loss,
                                  const LossBuilder& step_loss, int steps, double inner_lr, bool second_order,
                                  double hvp_eps) {
  if (steps < 1) throw ValidationError("sophon requires inner steps");
  if (inner_lr <= 0.0) throw ValidationError("inner learning rate must be positive");

  MetaResult res;
  res.grads.reserve(base_params.size());
  for (const auto& t : base_params) res.grads.emplace_back(t.shape());

  std::vector<Tensor> theta = base_params;
  std::vector<std::vector<Tensor>> pre_step_points;  // theta_k, for the unrolled pass
  std::vector<std::vector<Tensor>> step_grads;       // grad of step_loss at theta_{k+1}

  for (int k = 0; k < steps; ++k) {
    if (second_order) pre_step_points.push_back(theta);
    auto [inner_value, inner_grads] = value_and_grads(inner_loss, theta, k);
    check_finite(inner_value);
    for (size_t i = 0; i < theta.size(); ++i) theta[i].add_(inner_grads[i], -inner_lr);
    auto [risk_value, risk_grads] = value_and_grads(step_loss, theta, k);
    check_finite(risk_value);
    res.accumulated_loss += risk_value;
    if (second_order) {
      step_grads.push_back(std::move(risk_grads));
    } else {
      for (size_t i = 0; i < res.grads.size(); ++i) res.grads[i].add_(risk_grads[i]);
    }
  }
  res.adapted_params = theta;

  if (second_order) {
    // Reverse unroll: v <- grad r_k + (I - lr * H_k) v, with Hessian-vector
    // products by central differences of the inner gradient.
    std::vector<Tensor> v;
    for (const auto& t : base_params) v.emplace_back(t.shape());
    for (int k = steps - 1; k >= 0; --k) {
      for (size_t i = 0; i < v.size(); ++i) v[i].add_(step_grads[static_cast<size_t>(k)][i]);
      double vnorm = 0.0;
      for (const auto& t : v)
        for (int64_t i = 0; i < t.numel(); ++i) vnorm = std::max(vnorm, std::abs(t[i]));
      if (vnorm == 0.0) continue;
      double h = hvp_eps / std::max(1.0, vnorm);
      std::vector<Tensor> plus = pre_step_points[static_cast<size_t>(k)];
      std::vector<Tensor> minus = pre_step_points[static_cast<size_t>(k)];
      for (size_t i = 0; i < v.size(); ++i) {
        plus[i].add_(v[i], h);
        minus[i].add_(v[i], -h);
      }
      auto [pv, pg] = value_and_grads(inner_loss, plus, k);
      auto [mv, mg] = value_and_grads(inner_loss, minus, k);
      (void)pv;
      (void)mv;
      for (size_t i = 0; i < v.size(); ++i) {
        Tensor hvp = pg[i];
        hvp.add_(mg[i], -1.0);
        hvp.scale_(1.0 / (2.0 * h));
        v[i].add_(hvp, -inner_lr);
      }
    }
    res.grads = std::move(v);
  }
  return res;
}

// ---------------------------------------------------------------------------
// SOPHON: fine-tuning-aware training
// ---------------------------------------------------------------------------

TrainResult train_sophon(const ModelBundle& model0, const DomainPair& pair, const SplitTriple& source_split,
                         const SplitTriple& target_split, const MethodSpec& spec, const RunConfig& cfg) {
  cfg.validate();
  spec.validate();
  const int inner_steps = static_cast<int>(spec.param("sophon_inner_steps", 3));
  if (inner_steps < 1) throw ValidationError("sophon requires inner steps");
  const double inner_lr = spec.param("sophon_inner_lr", cfg.learning_rate);
  const double meta_lr = spec.param("sophon_meta_lr", cfg.learning_rate);
  const bool uniform_risk = spec.param("sophon_risk", 0.0) != 0.0;
  const bool second_order = spec.param("sophon_second_order", 0.0) != 0.0;
  if (cfg.epochs > 0 && target_split.train.empty()) throw ValidationError("empty target train split");

  TrainResult res;
  res.model = model0;
  ProvenanceCounters src_before = pair.source->counters();
  ProvenanceCounters tgt_before = pair.target->counters();
  const ArchSpec& arch = res.model.arch();
  const int num_classes = arch.num_classes;

  auto params = trainable_params(res.model, true, true, res.model.has_aux_head());
  auto opt_maint = make_optimizer(cfg.optimizer_name, cfg.learning_rate);
  auto opt_meta = make_optimizer(cfg.optimizer_name, meta_lr);
  Rng order_rng(derive_seed(cfg.seed, "source_batches"));
  std::unique_ptr<BatchStream> target_stream;
  if (cfg.epochs > 0)
    target_stream = std::make_unique<BatchStream>(target_split.train, derive_seed(cfg.seed, "target_batches"));

  const int64_t default_meta_steps =
      (static_cast<int64_t>(target_split.train.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const int meta_steps = static_cast<int>(spec.param("sophon_meta_steps", static_cast<double>(default_meta_steps)));

  std::vector<const Tensor*> grads;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // (a) non-fine-tunability block: simulate fine-tuning on the target, then
    // meta-update the base so the adapted model still predicts wrongly.
    for (int ms = 0; ms < meta_steps; ++ms) {
      std::vector<Batch> batches;
      batches.reserve(static_cast<size_t>(inner_steps));
      for (int k = 0; k < inner_steps; ++k)
        batches.push_back(pair.target->gather(target_stream->next(cfg.batch_size)));

      LossBuilder inner = [&](const std::vector<ad::VarPtr>& leaves, int k) {
        auto tm = TapeModel::from_leaves(arch, leaves);
        auto lp = ad::row_log_softmax(tm.logits(ad::constant(batches[static_cast<size_t>(k)].images)));
        return ad::nll_mean(lp, batches[static_cast<size_t>(k)].labels);
      };
      LossBuilder risk = [&](const std::vector<ad::VarPtr>& leaves, int k) {
        const Batch& b = batches[static_cast<size_t>(k)];
        auto tm = TapeModel::from_leaves(arch, leaves);
        auto lp = ad::row_log_softmax(tm.logits(ad::constant(b.images)));
        Tensor target_rows = uniform_risk ? objectives::uniform_rows(b.size(), num_classes)
                                          : objectives::inverse_label_rows(b.labels, num_classes);
        return ad::kl_rows_mean(lp, target_rows);
      };

      MetaResult meta =
          simulate_finetune_meta(snapshot_params(res.model), inner, risk, inner_steps, inner_lr, second_order);
      grads.clear();
      for (const auto& g : meta.grads) grads.push_back(&g);
      opt_meta->step(params, grads);
    }

    // (b) maintenance epoch: plain source cross-entropy.
    std::vector<int64_t> order = source_split.train;
    order_rng.shuffle(order);
    EpochStats stats;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      Batch b = pair.source->gather(std::span<const int64_t>(order.data() + start, stop - start));
      auto tm = TapeModel::bind(res.model, true, true, res.model.has_aux_head());
      auto logits = tm.logits(ad::constant(b.images));
      auto root = ad::nll_mean(ad::row_log_softmax(logits), b.labels);
      check_finite(root->value.item());
      ad::backward(root);
      collect_grads(tm.trainable_leaves(), grads);
      opt_maint->step(params, grads);
      stats.note(root->value.item(), batch_correct(logits->value, b.labels), b.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = stats.mean_loss();
    rec.train_acc = stats.accuracy();
    rec.source_val_acc = evaluate_accuracy(res.model, *pair.source, source_split.val);
    rec.target_val_acc =
        target_split.val.empty() ? kNan : evaluate_accuracy(res.model, *pair.target, target_split.val);
    res.history.epochs.push_back(rec);
  }

  res.history.source_reads = delta(pair.source->counters(), src_before);
  res.history.target_reads = delta(pair.target->counters(), tgt_before);
  return res;
}

// ---------------------------------------------------------------------------
// source-only wrapper
// ---------------------------------------------------------------------------

TrainResult train_source_only(const ModelBundle& model0, const Dataset& source, const SplitTriple& split,
                              const MethodSpec& spec, const RunConfig& cfg) {
  spec.validate();
  auxgen::AuxStrategy strategy = spec.param("aux_strategy", 0.0) == 0.0 ? auxgen::AuxStrategy::strong_augment
                                                                        : auxgen::AuxStrategy::cuti_style;
  auxgen::AuxDomainParams aux_params;
  aux_params.augment.magnitude = spec.param("aux_magnitude", 0.7);
  aux_params.augment.ops_per_sample = static_cast<int>(spec.param("aux_ops_per_sample", 2));
  aux_params.cuti_noise_std = spec.param("cuti_noise_std", 0.5);

  ProvenanceCounters src_before = source.counters();
  auto aux = std::make_shared<Dataset>(
      auxgen::build_auxiliary_domain(source, strategy, aux_params, derive_seed(cfg.seed, "aux_domain")));
  // The auxiliary domain mirrors the source index-for-index, so the source
  // split indices stay valid for it.
  auto source_view = std::make_shared<Dataset>(source.raw_images(), source.raw_labels(), source.num_classes(),
                                               source.name(), source.provenance());
  DomainPair aux_pair = DomainPair::make(
      source_view, aux,
      std::string("auxiliary:") + (strategy == auxgen::AuxStrategy::strong_augment ? "strong_augment" : "cuti_style"));

  MethodSpec inner = spec;
  inner.name = MethodName::ntl;
  inner.params.clear();
  if (auto it = spec.params.find("defense_perturb_magnitude"); it != spec.params.end())
    inner.params["defense_perturb_magnitude"] = it->second;

  TrainResult res = train_ntl(model0, aux_pair, split, split, inner, cfg);
  res.history.source_reads.image_reads += source.counters().image_reads - src_before.image_reads +
                                          source_view->counters().image_reads;
  res.history.source_reads.label_reads += source.counters().label_reads - src_before.label_reads +
                                          source_view->counters().label_reads;
  res.history.target_reads = {};  // the real target domain is never touched
  return res;
}

// ---------------------------------------------------------------------------
// TransNTL defense term
// ---------------------------------------------------------------------------

ad::VarPtr transntl_defense_node(const TapeModel& model, const Tensor& source_images,
                                 const std::vector<auxgen::Augmentation>& pset, Rng& rng) {
  if (pset.empty()) throw ValidationError("empty perturbation set");
  // Teacher distribution: the current model on clean inputs, gradient stopped.
  auto clean_logits = model.logits(ad::constant(source_images));
  Tensor q = ad::softmax_rows(clean_logits->value);
  ad::VarPtr sum;
  for (const auto& aug : pset) {
    Tensor perturbed = auxgen::apply_augmentation(source_images, aug, rng);
    auto lp = ad::row_log_softmax(model.logits(ad::constant(perturbed)));
    auto term = ad::kl_rows_mean(lp, q);
    sum = sum ? ad::add(sum, term) : term;
  }
  return ad::scale(sum, 1.0 / static_cast<double>(pset.size()));
}

double transntl_defense_term(const ModelBundle& model, const Tensor& source_images,
                             const std::vector<auxgen::Augmentation>& pset, uint64_t seed) {
  Rng rng(derive_seed(seed, "defense_perturb"));
  auto tm = TapeModel::bind(model, false, false, false);
  return transntl_defense_node(tm, source_images, pset, rng)->value.item();
}

// ---------------------------------------------------------------------------
// dispatcher
// ---------------------------------------------------------------------------

TrainResult train_method(const MethodSpec& spec, const ModelBundle& model, const DomainPair& pair,
                         const SplitTriple& source_split, const SplitTriple& target_split, const RunConfig& cfg) {
  switch (spec.name) {
    case MethodName::sl:
      return train_supervised(model, *pair.source, source_split, cfg);
    case MethodName::ntl:
      return train_ntl(model, pair, source_split, target_split, spec, cfg);
    case MethodName::cuti_style:
      return train_cuti_style(model, *pair.source, source_split, spec, cfg);
    case MethodName::dso:
      return train_dso(model, *pair.source, source_split, spec, cfg);
    case MethodName::sophon:
      return train_sophon(model, pair, source_split, target_split, spec, cfg);
    case MethodName::source_only_wrapper:
      return train_source_only(model, *pair.source, source_split, spec, cfg);
  }
  throw ValidationError("unknown method");
}

const char* to_string(MethodName m) {
  switch (m) {
    case MethodName::sl: return "sl";
    case MethodName::ntl: return "ntl";
    case MethodName::cuti_style: return "cuti_style";
    case MethodName::dso: return "dso";
    case MethodName::sophon: return "sophon";
    case MethodName::source_only_wrapper: return "source_only_wrapper";
  }
  return "?";
}

MethodName method_from_string(const std::string& s) {
  if (s == "sl") return MethodName::sl;
  if (s == "ntl") return MethodName::ntl;
  if (s == "cuti_style") return MethodName::cuti_style;
  if (s == "dso") return MethodName::dso;
  if (s == "sophon") return MethodName::sophon;
  if (s == "source_only_wrapper") return MethodName::source_only_wrapper;
  throw ValidationError("unknown method '" + s + "'");
}

}  // namespace ntl::methods
