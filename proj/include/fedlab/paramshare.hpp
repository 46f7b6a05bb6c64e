#pragma once

// Parameter sharing between a host model and a hidden secret model: the
// secret's parameters live at selected positions of the host's flattened
// parameter vector. Five position-selection strategies, gather/scatter
// between the two views, and the server-side rebuild that mirrors the
// client-side gather.

#include "fedlab/nn.hpp"
#include "fedlab/rng.hpp"
#include "fedlab/tensor.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedlab::paramshare {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct LayerSpan {
  std::string name;
  std::size_t start = 0;
  std::size_t length = 0;
};

// Flat view of all model parameters, tensor by tensor in definition order,
// each tensor row-major. Spans cover the vector exactly with no gaps.
struct ParameterVector {
  std::vector<float> values;
  std::vector<LayerSpan> spans;
};

inline ParameterVector flatten_tensors(const TensorMap& tensors) {
  ParameterVector pv;
  for (const auto& nt : tensors) {
    LayerSpan span{nt.name, pv.values.size(), nt.v.size()};
    pv.values.insert(pv.values.end(), nt.v.begin(), nt.v.end());
    pv.spans.push_back(std::move(span));
  }
  return pv;
}

inline ParameterVector flatten_params(nn::Sequential& model) {
  ParameterVector pv;
  for (nn::Param* p : model.params()) {
    LayerSpan span{p->name, pv.values.size(), p->w.size()};
    pv.values.insert(pv.values.end(), p->w.begin(), p->w.end());
    pv.spans.push_back(std::move(span));
  }
  return pv;
}

inline void unflatten_params(nn::Sequential& model, const std::vector<float>& values) {
  std::size_t total = 0;
  for (nn::Param* p : model.params()) total += p->w.size();
  if (total != values.size()) {
    throw Error("unflatten: value count " + std::to_string(values.size()) +
                " does not match model parameter count " + std::to_string(total));
  }
  std::size_t off = 0;
  for (nn::Param* p : model.params()) {
    std::copy(values.begin() + long(off), values.begin() + long(off + p->w.size()),
              p->w.begin());
    off += p->w.size();
  }
}

enum class Strategy { random, random_constrained, systematic, layerwise, importance };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::random: return "random";
    case Strategy::random_constrained: return "random_constrained";
    case Strategy::systematic: return "systematic";
    case Strategy::layerwise: return "layerwise";
    case Strategy::importance: return "importance";
  }
  return "?";
}

inline Strategy strategy_from_name(const std::string& name) {
  for (Strategy s : {Strategy::random, Strategy::random_constrained, Strategy::systematic,
                     Strategy::layerwise, Strategy::importance}) {
    if (name == strategy_name(s)) return s;
  }
  throw Error("unknown selection strategy: " + name);
}

struct SelectionParams {
  std::uint64_t seed = 0;
  std::uint32_t k = 2;  // systematic stride
  std::uint32_t r = 1;  // systematic offset, one-based
  double layer_cap = 0.5;
  const std::vector<double>* scores = nullptr;  // per-parameter, length = total
};

struct SelectionMap {
  Strategy strategy = Strategy::systematic;
  std::vector<std::size_t> positions;  // zero-based, strictly increasing
  std::uint64_t seed = 0;
  std::uint32_t k = 0;
  std::uint32_t r = 0;
  double layer_cap = 0.0;
  std::uint64_t scores_hash = 0;

  std::vector<std::size_t> one_based() const {
    std::vector<std::size_t> out(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) out[i] = positions[i] + 1;
    return out;
  }
};

// Fully connected secret model: input_dim -> hidden... -> output_dim, with a
// sigmoid on the output so predictions stay in [0,1]. Bias terms are counted.
struct SecretModelSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims = {256, 512};
  std::size_t output_dim = 0;
  std::string activation = "relu";

  std::size_t param_count() const {
    std::size_t count = 0, prev = input_dim;
    for (std::size_t h : hidden_dims) {
      count += prev * h + h;
      prev = h;
    }
    count += prev * output_dim + output_dim;
    return count;
  }
};

inline nn::Sequential build_secret_model(const SecretModelSpec& spec, Rng& rng) {
  std::vector<int> hidden(spec.hidden_dims.begin(), spec.hidden_dims.end());
  return nn::build_mlp(int(spec.input_dim), hidden, int(spec.output_dim), spec.activation, rng);
}

namespace detail {

inline std::vector<double> score_ref(const SelectionParams& params, std::size_t total,
                                     Strategy strategy) {
  if (params.scores == nullptr) {
    throw Error(std::string(strategy_name(strategy)) +
                " selection needs a per-parameter score vector");
  }
  if (params.scores->size() != total) {
    throw Error("score vector length " + std::to_string(params.scores->size()) +
                " does not match parameter count " + std::to_string(total));
  }
  return *params.scores;
}

inline std::vector<std::size_t> shuffled_indices(std::size_t total, std::uint64_t seed,
                                                 Strategy strategy) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = derive_rng(seed, "paramshare.select", std::uint64_t(strategy));
  rng.shuffle(idx);
  return idx;
}

}  // namespace detail

inline SelectionMap select_positions(std::size_t total, std::size_t size, Strategy strategy,
                                     const SelectionParams& params,
                                     const std::vector<LayerSpan>* spans = nullptr) {
  if (size > total) {
    throw Error("secret parameter count " + std::to_string(size) +
                " exceeds the capacity of a host with " + std::to_string(total) +
                " parameters");
  }
  SelectionMap map;
  map.strategy = strategy;
  map.seed = params.seed;

  switch (strategy) {
    case Strategy::random: {
      std::vector<std::size_t> idx = detail::shuffled_indices(total, params.seed, strategy);
      map.positions.assign(idx.begin(), idx.begin() + long(size));
      break;
    }
    case Strategy::random_constrained: {
      if (spans == nullptr || spans->empty()) {
        throw Error("random_constrained selection needs layer spans");
      }
      map.layer_cap = params.layer_cap;
      std::vector<std::size_t> quota(spans->size());
      std::size_t feasible = 0;
      for (std::size_t s = 0; s < spans->size(); ++s) {
        quota[s] = std::size_t(std::ceil(params.layer_cap * double((*spans)[s].length)));
        feasible += quota[s];
      }
      if (feasible < size) {
        throw Error("capacity: per-layer cap " + std::to_string(params.layer_cap) +
                    " admits only " + std::to_string(feasible) + " positions, " +
                    std::to_string(size) + " needed");
      }
      std::vector<std::size_t> owner(total);
      for (std::size_t s = 0; s < spans->size(); ++s) {
        for (std::size_t i = 0; i < (*spans)[s].length; ++i) owner[(*spans)[s].start + i] = s;
      }
      std::vector<std::size_t> idx = detail::shuffled_indices(total, params.seed, strategy);
      for (std::size_t p : idx) {
        if (map.positions.size() == size) break;
        if (quota[owner[p]] == 0) continue;
        quota[owner[p]]--;
        map.positions.push_back(p);
      }
      break;
    }
    case Strategy::systematic: {
      if (params.k == 0 || params.r == 0 || params.r > params.k) {
        throw Error("systematic selection needs 1 <= r <= k");
      }
      map.k = params.k;
      map.r = params.r;
      // one-based positions r, r+k, r+2k, ... within the vector
      std::size_t available =
          total >= params.r ? (total - params.r) / params.k + 1 : 0;
      if (available < size) {
        throw Error("capacity: stride " + std::to_string(params.k) + " offset " +
                    std::to_string(params.r) + " over " + std::to_string(total) +
                    " parameters yields " + std::to_string(available) +
                    " positions, " + std::to_string(size) + " needed");
      }
      map.positions.reserve(size);
      for (std::size_t i = 0; i < size; ++i) {
        map.positions.push_back(params.r - 1 + i * params.k);
      }
      break;
    }
    case Strategy::layerwise: {
      if (spans == nullptr || spans->empty()) {
        throw Error("layerwise selection needs layer spans");
      }
      std::vector<double> scores = detail::score_ref(params, total, strategy);
      map.scores_hash = fnv1a64(scores.data(), scores.size() * sizeof(double));
      std::vector<std::size_t> order(spans->size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::vector<double> mean(spans->size(), 0.0);
      for (std::size_t s = 0; s < spans->size(); ++s) {
        double acc = 0.0;
        for (std::size_t i = 0; i < (*spans)[s].length; ++i) {
          acc += std::abs(scores[(*spans)[s].start + i]);
        }
        mean[s] = (*spans)[s].length ? acc / double((*spans)[s].length) : 0.0;
      }
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return mean[a] < mean[b]; });
      for (std::size_t s : order) {
        for (std::size_t i = 0; i < (*spans)[s].length && map.positions.size() < size; ++i) {
          map.positions.push_back((*spans)[s].start + i);
        }
        if (map.positions.size() == size) break;
      }
      break;
    }
    case Strategy::importance: {
      std::vector<double> scores = detail::score_ref(params, total, strategy);
      map.scores_hash = fnv1a64(scores.data(), scores.size() * sizeof(double));
      std::vector<std::size_t> idx(total);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
      });
      map.positions.assign(idx.begin(), idx.begin() + long(size));
      break;
    }
  }

  std::sort(map.positions.begin(), map.positions.end());
  if (map.positions.size() != size) {
    throw Error("capacity: selected " + std::to_string(map.positions.size()) +
                " positions, " + std::to_string(size) + " needed");
  }
  return map;
}

inline SelectionMap select_positions(std::size_t total, const SecretModelSpec& spec,
                                     Strategy strategy, const SelectionParams& params,
                                     const std::vector<LayerSpan>* spans = nullptr) {
  return select_positions(total, spec.param_count(), strategy, params, spans);
}

inline std::vector<float> load_secret(const ParameterVector& local, const SelectionMap& sel) {
  std::vector<float> secret;
  secret.reserve(sel.positions.size());
  for (std::size_t p : sel.positions) {
    if (p >= local.values.size()) {
      throw Error("selection position " + std::to_string(p + 1) +
                  " outside a vector of length " + std::to_string(local.values.size()));
    }
    secret.push_back(local.values[p]);
  }
  return secret;
}

inline void load_secret_into(const ParameterVector& local, const SelectionMap& sel,
                             nn::Sequential& secret_model) {
  unflatten_params(secret_model, load_secret(local, sel));
}

inline ParameterVector backfill(const std::vector<float>& secret, const SelectionMap& sel,
                                ParameterVector local) {
  if (secret.size() != sel.positions.size()) {
    throw Error("backfill: " + std::to_string(secret.size()) + " secret values for " +
                std::to_string(sel.positions.size()) + " selected positions");
  }
  for (std::size_t i = 0; i < sel.positions.size(); ++i) {
    std::size_t p = sel.positions[i];
    if (p >= local.values.size()) {
      throw Error("selection position " + std::to_string(p + 1) +
                  " outside a vector of length " + std::to_string(local.values.size()));
    }
    local.values[p] = secret[i];
  }
  return local;
}

// Server side: knowing (strategy, params, spec), regenerate the selection and
// gather the secret out of uploaded weights. Identical rule to the client.
inline nn::Sequential rebuild_server(const ParameterVector& uploaded, Strategy strategy,
                                     const SelectionParams& params, const SecretModelSpec& spec,
                                     Rng& init_rng) {
  SelectionMap sel =
      select_positions(uploaded.values.size(), spec.param_count(), strategy, params,
                       &uploaded.spans);
  nn::Sequential secret = build_secret_model(spec, init_rng);
  load_secret_into(uploaded, sel, secret);
  return secret;
}

inline std::string dump_selection(const SelectionMap& map) {
  std::ostringstream os;
  os << "strategy=" << strategy_name(map.strategy) << " seed=" << map.seed;
  if (map.strategy == Strategy::systematic) os << " k=" << map.k << " r=" << map.r;
  if (map.strategy == Strategy::random_constrained) os << " cap=" << map.layer_cap;
  if (map.scores_hash) os << " scores=" << hex64(map.scores_hash);
  os << " count=" << map.positions.size() << "\n";
  bool first = true;
  for (std::size_t p : map.one_based()) {
    if (!first) os << ' ';
    os << p;
    first = false;
  }
  os << "\n";
  return os.str();
}

}  // namespace fedlab::paramshare
