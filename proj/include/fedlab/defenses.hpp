#pragma once

// Server-side countermeasures applied to client updates: gradient pruning,
// norm clipping, Gaussian perturbation, dominance detection over per-example
// gradients, and loss-trace monitoring. All transforms are pure functions of
// the update plus config.

#include "fedlab/rng.hpp"
#include "fedlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fedlab::defenses {

enum class ApplyTo { steps, update };

inline const char* apply_to_name(ApplyTo a) {
  return a == ApplyTo::steps ? "steps" : "update";
}

inline ApplyTo apply_to_from_name(const std::string& name) {
  if (name == "steps") return ApplyTo::steps;
  if (name == "update") return ApplyTo::update;
  throw std::invalid_argument("defense apply_to must be \"steps\" or \"update\": " + name);
}

struct DefenseConfig {
  bool prune_enabled = false;
  double prune_tau = 1e-6;
  bool clip_enabled = false;
  double clip_max_norm = 1.0;
  bool noise_enabled = false;
  double noise_eps = 1e-3;
  bool dsnr_enabled = false;
  double dsnr_threshold = 10.0;
  bool loss_monitor_enabled = false;
  double loss_spike_factor = 2.0;
  ApplyTo apply_to = ApplyTo::steps;

  bool any_transform() const { return prune_enabled || clip_enabled || noise_enabled; }

  void validate() const {
    if (prune_tau < 0) throw std::invalid_argument("defense: prune_tau must be >= 0");
    if (noise_eps < 0) throw std::invalid_argument("defense: noise_eps must be >= 0");
    if (dsnr_threshold < 0) throw std::invalid_argument("defense: dsnr_threshold must be >= 0");
    if (loss_spike_factor < 0) {
      throw std::invalid_argument("defense: loss_spike_factor must be >= 0");
    }
    if (clip_enabled && clip_max_norm <= 0) {
      throw std::invalid_argument("defense: clip_max_norm must be > 0");
    }
  }
};

// Channel-granularity pruning for 2D+ tensors (leading dim indexes output
// channels); element-wise for 1D tensors such as biases.
inline TensorMap prune(TensorMap update, double tau) {
  for (auto& t : update) {
    if (t.shape.size() >= 2 && t.shape[0] > 0) {
      std::size_t channels = std::size_t(t.shape[0]);
      std::size_t block = t.v.size() / channels;
      for (std::size_t c = 0; c < channels; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < block; ++i) acc += std::abs(double(t.v[c * block + i]));
        double mean = block ? acc / double(block) : 0.0;
        if (mean < tau) {
          std::fill(t.v.begin() + long(c * block), t.v.begin() + long((c + 1) * block), 0.0f);
        }
      }
    } else {
      for (auto& v : t.v) {
        if (std::abs(double(v)) < tau) v = 0.0f;
      }
    }
  }
  return update;
}

inline TensorMap clip(TensorMap update, double max_norm) {
  double norm = l2_norm(update);
  if (norm > max_norm) {
    float scale = float(max_norm / norm);
    for (auto& t : update)
      for (auto& v : t.v) v *= scale;
  }
  return update;
}

inline TensorMap add_noise(TensorMap update, double eps, std::uint64_t seed) {
  if (eps == 0.0) return update;
  Rng rng = derive_rng(seed, "defenses.noise");
  for (auto& t : update)
    for (auto& v : t.v) v += float(rng.normal(0.0, eps));
  return update;
}

struct DsnrResult {
  std::vector<std::pair<std::string, double>> scores;  // per layer, in tensor order
  bool flagged = false;
};

// Dominance score per layer: the largest single-example gradient norm over
// the norm of the sum of all the others. An all-zero layer scores 0; a lone
// nonzero example has nothing to hide behind and scores infinity.
inline DsnrResult dsnr_score(const std::vector<TensorMap>& batch, double threshold) {
  if (batch.empty()) throw std::invalid_argument("dsnr: empty batch");
  const TensorMap& first = batch[0];
  for (const auto& g : batch) {
    if (g.size() != first.size()) throw std::invalid_argument("dsnr: ragged batch");
  }
  DsnrResult res;
  for (std::size_t l = 0; l < first.size(); ++l) {
    std::size_t n = first[l].v.size();
    std::size_t best = 0;
    double best_norm = -1.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (batch[i][l].v.size() != n) throw std::invalid_argument("dsnr: ragged batch");
      double acc = 0.0;
      for (float v : batch[i][l].v) acc += double(v) * double(v);
      double norm = std::sqrt(acc);
      if (norm > best_norm) {
        best_norm = norm;
        best = i;
      }
    }
    double score;
    if (best_norm == 0.0) {
      score = 0.0;
    } else {
      std::vector<double> rest(n, 0.0);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (i == best) continue;
        for (std::size_t d = 0; d < n; ++d) rest[d] += double(batch[i][l].v[d]);
      }
      double acc = 0.0;
      for (double v : rest) acc += v * v;
      double denom = std::sqrt(acc);
      score = denom == 0.0 ? std::numeric_limits<double>::infinity() : best_norm / denom;
    }
    res.scores.emplace_back(first[l].name, score);
    if (score > threshold) res.flagged = true;
  }
  return res;
}

// Flags every epoch whose loss exceeds spike_factor times the running median
// of all prior epochs. Even-length prefixes use the midpoint average.
inline std::vector<std::size_t> loss_monitor(const std::vector<double>& trace,
                                             double spike_factor) {
  std::vector<std::size_t> flags;
  if (trace.size() < 2) return flags;
  std::vector<double> prior;
  prior.reserve(trace.size());
  for (std::size_t e = 0; e < trace.size(); ++e) {
    if (e > 0) {
      std::vector<double> sorted(prior);
      std::sort(sorted.begin(), sorted.end());
      std::size_t m = sorted.size();
      double median =
          m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
      if (trace[e] > spike_factor * median) flags.push_back(e);
    }
    prior.push_back(trace[e]);
  }
  return flags;
}

inline TensorMap apply_defenses(TensorMap update, const DefenseConfig& cfg, std::uint64_t seed) {
  if (cfg.prune_enabled) update = prune(std::move(update), cfg.prune_tau);
  if (cfg.clip_enabled) update = clip(std::move(update), cfg.clip_max_norm);
  if (cfg.noise_enabled) update = add_noise(std::move(update), cfg.noise_eps, seed);
  return update;
}

}  // namespace fedlab::defenses
