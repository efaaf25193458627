#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "kfh/shake.hpp"

namespace kfh {

enum class OptimizerKind { SgdMomentum, AdamW };

inline std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::SgdMomentum ? "sgd-momentum" : "adamw";
}

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd-momentum" || s == "sgd") return OptimizerKind::SgdMomentum;
  if (s == "adamw") return OptimizerKind::AdamW;
  throw std::invalid_argument("unknown optimizer: " + s);
}

struct TrainConfig {
  int batch_size = 256;
  double learning_rate = 0.005;
  double weight_decay = 1e-5;
  std::uint64_t seed = 42;
  int max_epochs = 100;
  int early_stop_patience = 10;
  double early_stop_min_delta = 0.001;
  OptimizerKind optimizer = OptimizerKind::AdamW;
};

struct SplitIndices {
  std::vector<int> train, val, test;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0, train_acc = 0.0;
  double val_loss = 0.0, val_acc = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  ModelParams params;  // best-validation parameters
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double test_loss = 0.0, test_acc = 0.0;
};

/// Forward-only metrics (mean cross-entropy, accuracy) over the indexed
/// subset.
inline std::pair<double, double> evaluate(const HierarchyDataset& data, const std::vector<int>& idx,
                                          const ModelParams& p) {
  detail::require(!idx.empty(), "evaluation split must be nonempty");
  double loss = 0.0;
  int correct = 0;
  for (int i : idx) {
    const LabeledHierarchy& item = data[i];
    detail::require(item.label >= 0 && item.label < p.config.o_y, "label out of range");
    Vector logits = forward(item.hierarchy, p);
    const double zmax = logits.maxCoeff();
    Vector shifted = (logits.array() - zmax).exp();
    loss += std::log(shifted.sum()) + zmax - logits[item.label];
    int argmax = 0;
    logits.maxCoeff(&argmax);
    correct += (argmax == item.label);
  }
  return {loss / idx.size(), static_cast<double>(correct) / idx.size()};
}

namespace train_detail {

/// Optimizer state over the flattened parameter vector. Weight decay is
/// decoupled and applied as a pure shrink factor (independent of the
/// learning rate) to weight matrices only, never biases.
struct Optimizer {
  OptimizerKind kind;
  double lr, wd;
  std::vector<double> m, v;
  long long t = 0;

  Optimizer(OptimizerKind kind, double lr, double wd, std::size_t n)
      : kind(kind), lr(lr), wd(wd), m(n, 0.0), v(n, 0.0) {}

  void step(const std::vector<TensorView>& params, const std::vector<TensorView>& grads) {
    ++t;
    std::size_t off = 0;
    for (std::size_t k = 0; k < params.size(); ++k) {
      double* p = params[k].data;
      const double* g = grads[k].data;
      const std::ptrdiff_t n = params[k].size;
      if (!params[k].is_bias && wd > 0.0)
        for (std::ptrdiff_t i = 0; i < n; ++i) p[i] *= (1.0 - wd);
      if (kind == OptimizerKind::SgdMomentum) {
        for (std::ptrdiff_t i = 0; i < n; ++i) {
          m[off + i] = 0.9 * m[off + i] + g[i];
          p[i] -= lr * m[off + i];
        }
      } else {
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::ptrdiff_t i = 0; i < n; ++i) {
          m[off + i] = b1 * m[off + i] + (1.0 - b1) * g[i];
          v[off + i] = b2 * v[off + i] + (1.0 - b2) * g[i] * g[i];
          p[i] -= lr * (m[off + i] / bc1) / (std::sqrt(v[off + i] / bc2) + eps);
        }
      }
      off += n;
    }
  }
};

}  // namespace train_detail

/// Mini-batch training with constant learning rate, decoupled weight
/// decay and early stopping on validation loss (patience epochs without
/// an improvement larger than min_delta). Returns the best-validation
/// parameters plus the per-epoch metric history; test metrics are
/// computed with the returned parameters.
inline TrainResult train(const HierarchyDataset& data, const SplitIndices& split, const TrainConfig& cfg,
                         const ModelParams& p0) {
  detail::require(!split.train.empty() && !split.val.empty() && !split.test.empty(),
                  "all splits must be nonempty");
  detail::require(cfg.batch_size >= 1 && cfg.max_epochs >= 1, "batch size and epochs must be positive");
  detail::require(cfg.learning_rate >= 0.0 && cfg.weight_decay >= 0.0, "rates must be nonnegative");
  detail::require(cfg.early_stop_patience >= 1, "patience must be >= 1");

  TrainResult result;
  ModelParams params = p0;
  const std::vector<TensorView> tensors = tensors_of(params);
  std::size_t total = 0;
  for (const TensorView& tv : tensors) total += tv.size;
  train_detail::Optimizer opt(cfg.optimizer, cfg.learning_rate, cfg.weight_decay, total);

  Pcg32 rng = Pcg32::from_stream(cfg.seed, 0);
  std::vector<int> order = split.train;
  ModelParams best = params;
  double best_tracked = std::numeric_limits<double>::infinity();  // patience reference
  int patience_used = 0;
  const auto start = std::chrono::steady_clock::now();

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double train_loss = 0.0, train_acc = 0.0;
    for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
      const std::size_t len = std::min<std::size_t>(cfg.batch_size, order.size() - pos);
      LossGrad lg = loss_and_grad(data, {order.data() + pos, len}, params);
      std::vector<TensorView> gviews = tensors_of(lg.grads);
      opt.step(tensors, gviews);
      train_loss += lg.loss * len;
      train_acc += lg.accuracy * len;
    }
    train_loss /= order.size();
    train_acc /= order.size();
    auto [val_loss, val_acc] = evaluate(data, split.val, params);

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = train_loss;
    em.train_acc = train_acc;
    em.val_loss = val_loss;
    em.val_acc = val_acc;
    em.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(em);

    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      best = params;
    }
    if (best_tracked - val_loss > cfg.early_stop_min_delta) {
      best_tracked = val_loss;
      patience_used = 0;
    } else if (++patience_used >= cfg.early_stop_patience) {
      break;
    }
  }

  result.params = std::move(best);
  auto [test_loss, test_acc] = evaluate(data, split.test, result.params);
  result.test_loss = test_loss;
  result.test_acc = test_acc;
  return result;
}

/// Deterministic shuffled split by fractions (rounded down for val and
/// test, remainder to train).
inline SplitIndices make_split(int n_items, double val_frac, double test_frac, std::uint64_t seed) {
  detail::require(n_items >= 3, "need at least three items to split");
  detail::require(val_frac > 0.0 && test_frac > 0.0 && val_frac + test_frac < 1.0,
                  "split fractions must be positive and leave room for training");
  std::vector<int> order(n_items);
  for (int i = 0; i < n_items; ++i) order[i] = i;
  Pcg32 rng = Pcg32::from_stream(seed, 1);
  rng.shuffle(order);
  SplitIndices s;
  const int n_val = std::max(1, static_cast<int>(n_items * val_frac));
  const int n_test = std::max(1, static_cast<int>(n_items * test_frac));
  detail::require(n_val + n_test < n_items, "split leaves no training data");
  s.val.assign(order.begin(), order.begin() + n_val);
  s.test.assign(order.begin() + n_val, order.begin() + n_val + n_test);
  s.train.assign(order.begin() + n_val + n_test, order.end());
  return s;
}

}  // namespace kfh
