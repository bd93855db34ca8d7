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

#include "ntl/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "ntl/errors.hpp"
#include "ntl/objectives.hpp"
#include "ntl/optim.hpp"
#include "ntl/rng.hpp"

namespace ntl::attacks {

namespace {

constexpr int64_t kAttackBatch = 32;

void check_finite(double loss) {
  if (!std::isfinite(loss)) throw DivergenceError("divergence detected");
}

void collect_grads(const std::vector<ad::VarPtr>& leaves, std::vector<const Tensor*>& out) {
  out.clear();
  for (const auto& l : leaves) {
    l->ensure_grad();
    out.push_back(&l->grad);
  }
}

}  // namespace

void AttackSpec::validate() const {
  if (budget_fraction <= 0.0 || budget_fraction > 1.0) throw ValidationError("attack budget_fraction must lie in (0,1]");
  if (epochs < 0) throw ValidationError("attack epochs must be nonnegative");
  if (learning_rate <= 0.0) throw ValidationError("attack learning_rate must be positive");
  bool basic = strategy == Strategy::initFC_all || strategy == Strategy::initFC_FC ||
               strategy == Strategy::direct_FC || strategy == Strategy::direct_all;
  switch (family) {
    case ThreatFamily::source_ft:
      if (!basic && strategy != Strategy::transntl)
        throw ValidationError("source_ft accepts the basic strategies or transntl");
      break;
    case ThreatFamily::target_ft:
      if (!basic) throw ValidationError("target_ft accepts only the basic fine-tuning strategies");
      break;
    case ThreatFamily::sfda:
      if (strategy != Strategy::shot) throw ValidationError("sfda accepts only shot");
      break;
  }
  if (strategy == Strategy::transntl && (perturb_magnitude <= 0.0 || perturb_magnitude > 1.0))
    throw ValidationError("transntl perturb_magnitude must lie in (0,1]");
}

std::vector<int64_t> attack_subset(std::span<const int64_t> split, double fraction, uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0) throw ValidationError("attack budget_fraction must lie in (0,1]");
  int64_t k = static_cast<int64_t>(std::floor(fraction * static_cast<double>(split.size())));
  if (k < 1) throw ValidationError("attack budget too small");
  std::vector<int64_t> pool(split.begin(), split.end());
  Rng rng(derive_seed(seed, "attack_subset"));
  rng.shuffle(pool);
  pool.resize(static_cast<size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

// ---------------------------------------------------------------------------
// basic fine-tuning strategies
// ---------------------------------------------------------------------------

namespace {

void finetune_cross_entropy(ModelBundle& model, const Dataset& data, std::span<const int64_t> subset,
                            bool tune_phi, const AttackSpec& cfg) {
  auto params = trainable_params(model, tune_phi, true, tune_phi && model.has_aux_head());
  auto opt = make_optimizer(cfg.optimizer, cfg.learning_rate);
  Rng order_rng(derive_seed(cfg.seed, "attack_batches"));
  std::vector<const Tensor*> grads;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int64_t> order(subset.begin(), subset.end());
    order_rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += kAttackBatch) {
      size_t stop = std::min(order.size(), start + kAttackBatch);
      Batch b = data.gather(std::span<const int64_t>(order.data() + start, stop - start));
      auto tm = TapeModel::bind(model, tune_phi, true, tune_phi && model.has_aux_head());
      auto root = ad::nll_mean(ad::row_log_softmax(tm.logits(ad::constant(b.images))), b.labels);
      check_finite(root->value.item());
      ad::backward(root);
      collect_grads(tm.trainable_leaves(), grads);
      opt->step(params, grads);
    }
  }
}

}  // namespace

ModelBundle finetune_attack(const ModelBundle& model, const Dataset& data, std::span<const int64_t> subset,
                            Strategy strategy, const AttackSpec& cfg) {
  if (subset.empty()) throw ValidationError("empty attack subset");
  bool basic = strategy == Strategy::initFC_all || strategy == Strategy::initFC_FC ||
               strategy == Strategy::direct_FC || strategy == Strategy::direct_all;
  if (!basic) throw ValidationError("finetune_attack expects one of the basic strategies");

  ModelBundle attacked = model;
  if (strategy == Strategy::initFC_all || strategy == Strategy::initFC_FC)
    attacked.reinit_omega(derive_seed(cfg.seed, "attack_reinit"));
  bool tune_phi = strategy == Strategy::initFC_all || strategy == Strategy::direct_all;
  finetune_cross_entropy(attacked, data, subset, tune_phi, cfg);
  return attacked;
}

// ---------------------------------------------------------------------------
// TransNTL: impairment-repair self-distillation
// ---------------------------------------------------------------------------

ModelBundle transntl_attack(const ModelBundle& model, const Dataset& source, std::span<const int64_t> subset,
                            const std::vector<auxgen::Augmentation>& pset, const AttackSpec& cfg) {
  if (subset.empty()) throw ValidationError("empty attack subset");
  if (pset.empty()) throw ValidationError("empty perturbation set");

  const ModelBundle teacher = model;  // frozen pre-attack copy
  ModelBundle attacked = model;
  auto params = trainable_params(attacked, true, true, attacked.has_aux_head());
  auto opt = make_optimizer(cfg.optimizer, cfg.learning_rate);
  Rng order_rng(derive_seed(cfg.seed, "attack_batches"));
  Rng perturb_rng(derive_seed(cfg.seed, "attack_perturb"));

  std::vector<const Tensor*> grads;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int64_t> order(subset.begin(), subset.end());
    order_rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += kAttackBatch) {
      size_t stop = std::min(order.size(), start + kAttackBatch);
      Batch b = source.gather(std::span<const int64_t>(order.data() + start, stop - start));
      Tensor q = teacher.probs(b.images);  // clean-source teacher distribution

      auto tm = TapeModel::bind(attacked, true, true, attacked.has_aux_head());
      auto root = ad::nll_mean(ad::row_log_softmax(tm.logits(ad::constant(b.images))), b.labels);
      for (const auto& aug : pset) {
        Tensor perturbed = auxgen::apply_augmentation(b.images, aug, perturb_rng);
        auto lp = ad::row_log_softmax(tm.logits(ad::constant(perturbed)));
        root = ad::add(root, ad::kl_rows_mean(lp, q));
      }
      check_finite(root->value.item());
      ad::backward(root);
      collect_grads(tm.trainable_leaves(), grads);
      opt->step(params, grads);
    }
  }
  return attacked;
}

// ---------------------------------------------------------------------------
// SHOT: source-free adaptation
// ---------------------------------------------------------------------------

std::vector<int> nearest_centroid_pseudo_labels(const Tensor& features, const Tensor& probs) {
  if (features.ndim() != 2 || probs.ndim() != 2 || features.dim(0) != probs.dim(0))
    throw ValidationError("pseudo-labels: feature/prob shape mismatch");
  const int64_t n = features.dim(0), d = features.dim(1), c = probs.dim(1);
  constexpr double kEps = 1e-8;
  Tensor centroids({c, d});
  std::vector<double> weight(static_cast<size_t>(c), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t k = 0; k < c; ++k) {
      double p = probs.at2(i, k);
      weight[static_cast<size_t>(k)] += p;
      for (int64_t t = 0; t < d; ++t) centroids.at2(k, t) += p * features.at2(i, t);
    }
  for (int64_t k = 0; k < c; ++k)
    for (int64_t t = 0; t < d; ++t) centroids.at2(k, t) /= (weight[static_cast<size_t>(k)] + kEps);

  std::vector<int> pseudo(static_cast<size_t>(n), 0);
  for (int64_t i = 0; i < n; ++i) {
    double best = -1.0;
    int best_k = 0;
    for (int64_t k = 0; k < c; ++k) {
      double dist = 0.0;
      for (int64_t t = 0; t < d; ++t) {
        double diff = features.at2(i, t) - centroids.at2(k, t);
        dist += diff * diff;
      }
      if (best < 0.0 || dist < best) {
        best = dist;
        best_k = static_cast<int>(k);
      }
    }
    pseudo[static_cast<size_t>(i)] = best_k;
  }
  return pseudo;
}

ModelBundle shot_attack(const ModelBundle& model, const UnlabeledView& target_images, const AttackSpec& cfg) {
  const int num_classes = model.arch().num_classes;
  if (target_images.size() < num_classes) throw ValidationError("insufficient adaptation data");
  constexpr double kPseudoWeight = 0.3;

  ModelBundle attacked = model;
  auto params = trainable_params(attacked, true, false, false);  // omega frozen
  auto opt = make_optimizer(cfg.optimizer, cfg.learning_rate);
  Rng order_rng(derive_seed(cfg.seed, "attack_batches"));
  std::vector<const Tensor*> grads;

  const int64_t n = target_images.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Epoch-level pseudo-labels from the current feature space.
    Tensor all = target_images.all_images();
    Tensor feats = attacked.features(all);
    Tensor probs = ad::softmax_rows(attacked.logits(all));
    std::vector<int> pseudo = nearest_centroid_pseudo_labels(feats, probs);

    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    order_rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += kAttackBatch) {
      size_t stop = std::min(order.size(), start + kAttackBatch);
      std::span<const int64_t> chunk(order.data() + start, stop - start);
      Tensor images = target_images.gather_images(chunk);
      std::vector<int> batch_pseudo(chunk.size());
      for (size_t i = 0; i < chunk.size(); ++i) batch_pseudo[i] = pseudo[static_cast<size_t>(chunk[i])];

      auto tm = TapeModel::bind(attacked, true, false, false);
      auto lp = ad::row_log_softmax(tm.logits(ad::constant(images)));
      // information maximization: mean per-sample entropy minus entropy of
      // the mean prediction
      auto p = ad::exp_(lp);
      auto mean_entropy = ad::scale(ad::sum_all(ad::hadamard(p, lp)), -1.0 / static_cast<double>(chunk.size()));
      auto pbar = ad::colmean(p);
      auto entropy_of_mean = ad::neg(ad::sum_all(ad::hadamard(pbar, ad::log_eps(pbar, 1e-12))));
      auto im = ad::sub(mean_entropy, entropy_of_mean);
      auto root = ad::add(im, ad::scale(ad::nll_mean(lp, batch_pseudo), kPseudoWeight));
      check_finite(root->value.item());
      ad::backward(root);
      collect_grads(tm.trainable_leaves(), grads);
      opt->step(params, grads);
    }
  }
  return attacked;
}

// ---------------------------------------------------------------------------
// battery
// ---------------------------------------------------------------------------

std::vector<AttackOutcome> run_threat_battery(const ModelBundle& model, const DomainPair& pair,
                                              const SplitTriple& source_split, const SplitTriple& target_split,
                                              const std::vector<AttackSpec>& specs) {
  std::vector<AttackOutcome> results;
  if (specs.empty()) return results;
  const uint64_t model_checksum = model.parameter_checksum();
  const Metrics pre = evaluate_pair(model, pair, source_split.test, target_split.test);

  for (const AttackSpec& spec : specs) {
    spec.validate();
    ModelBundle fresh = model;  // each attack starts from a fresh copy
    AttackOutcome row;
    row.spec = spec;
    row.pre = pre;

    ProvenanceCounters tgt_before = pair.target->counters();
    ModelBundle attacked;
    switch (spec.family) {
      case ThreatFamily::source_ft: {
        auto subset = attack_subset(source_split.train, spec.budget_fraction, spec.seed);
        if (spec.strategy == Strategy::transntl) {
          auto pset = auxgen::perturbation_set(auxgen::PerturbationKind::transntl_default, spec.perturb_magnitude);
          attacked = transntl_attack(fresh, *pair.source, subset, pset, spec);
          ProvenanceCounters now = pair.target->counters();
          if (now.image_reads != tgt_before.image_reads || now.label_reads != tgt_before.label_reads)
            throw ProvenanceError("transntl attack read target-domain data");
        } else {
          attacked = finetune_attack(fresh, *pair.source, subset, spec.strategy, spec);
        }
        break;
      }
      case ThreatFamily::target_ft: {
        auto subset = attack_subset(target_split.train, spec.budget_fraction, spec.seed);
        attacked = finetune_attack(fresh, *pair.target, subset, spec.strategy, spec);
        break;
      }
      case ThreatFamily::sfda: {
        auto subset = attack_subset(target_split.train, spec.budget_fraction, spec.seed);
        uint64_t labels_before = pair.target->counters().label_reads;
        UnlabeledView view(pair.target, subset);
        attacked = shot_attack(fresh, view, spec);
        if (pair.target->counters().label_reads != labels_before)
          throw ProvenanceError("sfda attack read target-domain labels");
        break;
      }
    }
    ProvenanceCounters tgt_now = pair.target->counters();
    row.target_reads = {tgt_now.image_reads - tgt_before.image_reads, tgt_now.label_reads - tgt_before.label_reads};
    row.post = evaluate_pair(attacked, pair, source_split.test, target_split.test);
    // Evaluation reads from the line above are excluded from the attack's
    // provenance delta by taking the counter snapshot first.
    results.push_back(std::move(row));
  }

  if (model.parameter_checksum() != model_checksum) throw ProvenanceError("battery mutated the input model");
  return results;
}

const char* to_string(ThreatFamily f) {
  switch (f) {
    case ThreatFamily::source_ft: return "source_ft";
    case ThreatFamily::target_ft: return "target_ft";
    case ThreatFamily::sfda: return "sfda";
  }
  return "?";
}

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::initFC_all: return "initFC_all";
    case Strategy::initFC_FC: return "initFC_FC";
    case Strategy::direct_FC: return "direct_FC";
    case Strategy::direct_all: return "direct_all";
    case Strategy::transntl: return "transntl";
    case Strategy::shot: return "shot";
  }
  return "?";
}

ThreatFamily family_from_string(const std::string& s) {
  if (s == "source_ft") return ThreatFamily::source_ft;
  if (s == "target_ft") return ThreatFamily::target_ft;
  if (s == "sfda") return ThreatFamily::sfda;
  throw ValidationError("unknown threat family '" + s + "'");
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "initFC_all") return Strategy::initFC_all;
  if (s == "initFC_FC") return Strategy::initFC_FC;
  if (s == "direct_FC") return Strategy::direct_FC;
  if (s == "direct_all") return Strategy::direct_all;
  if (s == "transntl") return Strategy::transntl;
  if (s == "shot") return Strategy::shot;
  throw ValidationError("unknown attack strategy '" + s + "'");
}

}  // namespace ntl::attacks
