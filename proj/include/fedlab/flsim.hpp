#pragma once

// Federated learning testbed: Dirichlet partitioning, benign client training
// (FedAvg weight deltas or FedSGD single-batch gradients), and server-side
// aggregation. All randomness funnels through named derived streams so runs
// replay bit-exact.

#include "fedlab/dataset.hpp"
#include "fedlab/defenses.hpp"
#include "fedlab/nn.hpp"
#include "fedlab/rng.hpp"
#include "fedlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedlab::flsim {

enum class Mode { fedavg, fedsgd };

inline const char* mode_name(Mode m) { return m == Mode::fedavg ? "fedavg" : "fedsgd"; }

inline Mode mode_from_name(const std::string& name) {
  if (name == "fedavg") return Mode::fedavg;
  if (name == "fedsgd") return Mode::fedsgd;
  throw std::invalid_argument("mode must be \"fedavg\" or \"fedsgd\": " + name);
}

struct FLConfig {
  int n_clients = 20;
  double alpha = 0.6;
  Mode mode = Mode::fedavg;
  int rounds = 20;
  int local_epochs = 10;
  int batch_size = 32;
  double lr = 0.1;
  double lr_decay = 0.9;  // per local epoch, reset each round
  double weight_decay = 0.001;
  double client_fraction = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_clients <= 0) throw std::invalid_argument("fl: n_clients must be positive");
    if (alpha <= 0) throw std::invalid_argument("fl: alpha must be > 0");
    if (client_fraction <= 0 || client_fraction > 1) {
      throw std::invalid_argument("fl: client_fraction must be in (0, 1]");
    }
    if (rounds < 0 || local_epochs < 0) {
      throw std::invalid_argument("fl: rounds and local_epochs must be >= 0");
    }
    if (batch_size <= 0) throw std::invalid_argument("fl: batch_size must be positive");
    if (lr <= 0 || lr_decay <= 0) throw std::invalid_argument("fl: lr and lr_decay must be > 0");
  }
};

enum class UpdateKind { weight_delta, gradient };

struct ClientUpdate {
  UpdateKind kind = UpdateKind::weight_delta;
  int client_id = -1;
  std::size_t sample_count = 0;
  TensorMap tensors;
  std::vector<double> loss_trace;  // per local epoch (fedavg) or single batch
  std::vector<std::string> flags;
};

struct PartitionResult {
  std::vector<std::vector<std::size_t>> shards;
  int seed_bumps = 0;  // degenerate draws discarded before this partition
};

inline constexpr int kMaxPartitionResamples = 100;

// Per-class Dirichlet proportions across clients, realized by cutting each
// class's shuffled index list at the cumulative proportions. A draw that
// leaves any client completely empty is discarded and redrawn from a bumped
// stream, up to kMaxPartitionResamples.
inline PartitionResult dirichlet_partition(const std::vector<int>& labels, int n_clients,
                                           double alpha, std::uint64_t seed) {
  if (n_clients <= 0) throw std::invalid_argument("partition: n_clients must be positive");
  if (alpha <= 0) throw std::invalid_argument("partition: alpha must be > 0");
  if (std::size_t(n_clients) > labels.size()) {
    throw std::invalid_argument("partition: more clients than samples");
  }
  int classes = 0;
  for (int lbl : labels) classes = std::max(classes, lbl + 1);

  std::vector<std::vector<std::size_t>> by_class;
  by_class.resize(std::size_t(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[std::size_t(labels[i])].push_back(i);
  }

  PartitionResult res;
  for (int attempt = 0; attempt <= kMaxPartitionResamples; ++attempt) {
    res.shards.assign(std::size_t(n_clients), {});
    for (int k = 0; k < classes; ++k) {
      std::vector<std::size_t> idx = by_class[std::size_t(k)];
      Rng shuffle_rng = derive_rng(seed, "partition.shuffle", std::uint64_t(k),
                                   std::uint64_t(attempt));
      shuffle_rng.shuffle(idx);
      Rng dir_rng = derive_rng(seed, "partition.dirichlet", std::uint64_t(k),
                               std::uint64_t(attempt));
      std::vector<double> prop = dir_rng.dirichlet(alpha, std::size_t(n_clients));
      double cum = 0.0;
      std::size_t taken = 0;
      for (int cl = 0; cl < n_clients; ++cl) {
        cum += prop[std::size_t(cl)];
        std::size_t until = cl == n_clients - 1
                                ? idx.size()
                                : std::min(idx.size(), std::size_t(std::llround(
                                                           cum * double(idx.size()))));
        for (; taken < until; ++taken) res.shards[std::size_t(cl)].push_back(idx[taken]);
      }
    }
    bool any_empty = false;
    for (const auto& shard : res.shards) any_empty = any_empty || shard.empty();
    if (!any_empty || attempt == kMaxPartitionResamples) {
      res.seed_bumps = attempt;
      break;
    }
  }
  for (auto& shard : res.shards) std::sort(shard.begin(), shard.end());
  return res;
}

inline TensorMap model_snapshot(nn::Sequential& model) {
  TensorMap snap;
  for (nn::Param* p : model.params()) snap.push_back({p->name, p->shape, p->w});
  return snap;
}

inline void model_restore(nn::Sequential& model, const TensorMap& snap) {
  auto params = model.params();
  if (params.size() != snap.size()) {
    throw std::runtime_error("restore: tensor count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->name != snap[i].name || params[i]->shape != snap[i].shape) {
      throw std::runtime_error("restore: tensor " + snap[i].name + " does not match model");
    }
    params[i]->w = snap[i].v;
  }
}

namespace detail {

inline TensorMap grads_of(nn::Sequential& model) {
  TensorMap g;
  for (nn::Param* p : model.params()) g.push_back({p->name, p->shape, p->g});
  return g;
}

inline void set_grads(nn::Sequential& model, const TensorMap& g) {
  auto params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->g = g[i].v;
}

// Platform-side per-step defenses: transform this step's gradients in place.
inline void defend_step(nn::Sequential& model, const defenses::DefenseConfig* defense,
                        std::uint64_t noise_seed) {
  if (defense == nullptr || defense->apply_to != defenses::ApplyTo::steps ||
      !defense->any_transform()) {
    return;
  }
  set_grads(model, defenses::apply_defenses(grads_of(model), *defense, noise_seed));
}

}  // namespace detail

// One client's local work for one round. FedAvg: local_epochs of SGD with the
// epoch-decayed learning rate, reporting the weight delta. FedSGD: a single
// batch's gradient, no local step. An empty shard is flagged and skipped.
inline ClientUpdate benign_client_train(const TensorMap& global, nn::Sequential& model,
                                        const dataset::Dataset& data,
                                        const std::vector<std::size_t>& shard,
                                        const FLConfig& cfg,
                                        const defenses::DefenseConfig* defense, int round,
                                        int client_id) {
  ClientUpdate up;
  up.kind = cfg.mode == Mode::fedavg ? UpdateKind::weight_delta : UpdateKind::gradient;
  up.client_id = client_id;
  up.sample_count = shard.size();
  if (shard.empty()) {
    up.flags.push_back("empty_shard");
    return up;
  }

  model_restore(model, global);
  Rng order_rng = derive_rng(cfg.seed, "client.order", std::uint64_t(round),
                             std::uint64_t(client_id));

  if (cfg.mode == Mode::fedsgd) {
    std::vector<std::size_t> idx = shard;
    order_rng.shuffle(idx);
    idx.resize(std::min<std::size_t>(idx.size(), std::size_t(cfg.batch_size)));
    Tensor x = data.batch(idx);
    std::vector<int> y;
    for (std::size_t i : idx) y.push_back(data.labels[i]);
    Tensor logits = model.forward(x, true);
    nn::SoftmaxCrossEntropy ce;
    auto [loss, dlogits] = ce.loss_and_grad(logits, y);
    model.zero_grad();
    model.backward(dlogits);
    detail::defend_step(model, defense,
                        derive_rng(cfg.seed, "defense.step",
                                   (std::uint64_t(round) << 20) | std::uint64_t(client_id), 0)
                            .next_u64());
    up.loss_trace.push_back(loss);
    up.sample_count = idx.size();
    up.tensors = detail::grads_of(model);
    return up;
  }

  std::uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    float lr = float(cfg.lr * std::pow(cfg.lr_decay, epoch));
    nn::Sgd opt(lr, float(cfg.weight_decay));
    std::vector<std::size_t> idx = shard;
    order_rng.shuffle(idx);
    double loss_sum = 0.0;
    for (std::size_t at = 0; at < idx.size(); at += std::size_t(cfg.batch_size)) {
      std::size_t take = std::min(std::size_t(cfg.batch_size), idx.size() - at);
      std::vector<std::size_t> batch_idx(idx.begin() + long(at), idx.begin() + long(at + take));
      Tensor x = data.batch(batch_idx);
      std::vector<int> y;
      for (std::size_t i : batch_idx) y.push_back(data.labels[i]);
      Tensor logits = model.forward(x, true);
      nn::SoftmaxCrossEntropy ce;
      auto [loss, dlogits] = ce.loss_and_grad(logits, y);
      model.zero_grad();
      model.backward(dlogits);
      detail::defend_step(model, defense,
                          derive_rng(cfg.seed, "defense.step",
                                     (std::uint64_t(round) << 20) | std::uint64_t(client_id),
                                     step)
                              .next_u64());
      opt.step(model.params());
      loss_sum += loss * double(take);
      ++step;
    }
    up.loss_trace.push_back(loss_sum / double(idx.size()));
  }

  TensorMap now = model_snapshot(model);
  up.tensors = now;
  for (std::size_t t = 0; t < now.size(); ++t) {
    for (std::size_t i = 0; i < now[t].v.size(); ++i) {
      up.tensors[t].v[i] = now[t].v[i] - global[t].v[i];
    }
  }
  return up;
}

// FedAvg: global + sample-weighted mean of deltas. FedSGD: global - lr * mean
// gradient. Accumulates in double with a fixed client order for determinism.
inline TensorMap aggregate(const TensorMap& global, const std::vector<ClientUpdate>& updates,
                           Mode mode, double server_lr) {
  std::vector<const ClientUpdate*> used;
  for (const auto& u : updates) {
    if (u.sample_count == 0) continue;
    if (u.tensors.size() != global.size()) {
      throw std::runtime_error("aggregate: client " + std::to_string(u.client_id) +
                               " sent " + std::to_string(u.tensors.size()) + " tensors, " +
                               std::to_string(global.size()) + " expected");
    }
    for (std::size_t t = 0; t < global.size(); ++t) {
      if (u.tensors[t].name != global[t].name || u.tensors[t].shape != global[t].shape) {
        throw std::runtime_error("aggregate: client " + std::to_string(u.client_id) +
                                 " tensor " + u.tensors[t].name + " has a mismatched shape");
      }
    }
    used.push_back(&u);
  }
  if (used.empty()) throw std::runtime_error("aggregate: no usable updates");

  TensorMap out = global;
  double total = 0.0;
  for (const auto* u : used) total += double(u->sample_count);

  for (std::size_t t = 0; t < global.size(); ++t) {
    for (std::size_t i = 0; i < global[t].v.size(); ++i) {
      double acc = 0.0;
      for (const auto* u : used) {
        double w = mode == Mode::fedavg ? double(u->sample_count) / total
                                        : 1.0 / double(used.size());
        acc += w * double(u->tensors[t].v[i]);
      }
      double base = double(global[t].v[i]);
      out[t].v[i] = float(mode == Mode::fedavg ? base + acc : base - server_lr * acc);
    }
  }
  return out;
}

inline double evaluate_accuracy(nn::Sequential& model, const dataset::Dataset& data,
                                int batch_size) {
  if (data.size() == 0) return 0.0;
  double hits = 0.0;
  for (std::size_t at = 0; at < data.size(); at += std::size_t(batch_size)) {
    std::size_t take = std::min(std::size_t(batch_size), data.size() - at);
    std::vector<std::size_t> idx(take);
    std::iota(idx.begin(), idx.end(), at);
    Tensor x = data.batch(idx);
    std::vector<int> y;
    for (std::size_t i : idx) y.push_back(data.labels[i]);
    Tensor logits = model.forward(x, false);
    hits += nn::accuracy(logits, y) * double(take);
  }
  return hits / double(data.size());
}

}  // namespace fedlab::flsim
