// fedlab/experiment.hpp - experiment orchestration: config, round loop,
// attack/defense wiring, extraction checkpoints, round records.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedlab/attack.hpp"
#include "fedlab/dataset.hpp"
#include "fedlab/defenses.hpp"
#include "fedlab/flsim.hpp"
#include "fedlab/metrics.hpp"
#include "fedlab/nn.hpp"
#include "fedlab/paramshare.hpp"
#include "fedlab/rng.hpp"
#include "fedlab/tensor.hpp"

namespace fedlab::experiment {

using json = nlohmann::ordered_json;

struct ExperimentConfig {
  int version = 1;
  std::string name = "experiment";
  std::uint64_t seed = 0;
  dataset::DatasetSpec data;
  nn::ModelSpec model;
  flsim::FLConfig fl;
  bool attack_enabled = false;
  attack::AttackConfig atk;
  int malicious_client = -1;  // -1 = auto: the client with the largest shard
  bool defense_enabled = false;
  defenses::DefenseConfig defense;
  double leak_threshold = 0.6;  // SSIM threshold for a leaked sample
  int extract_every = 1;        // extraction checkpoint cadence in rounds

  void validate() const {
    if (version != 1) throw std::invalid_argument("config: unsupported version");
    if (data.name != "shapes" && data.name != "cifar10") {
      throw std::invalid_argument("config: dataset.name must be \"shapes\" or \"cifar10\", got \"" +
                                  data.name + "\"");
    }
    if (extract_every < 1) throw std::invalid_argument("config: extract_every must be >= 1");
    if (leak_threshold < 0.0 || leak_threshold > 1.0) {
      throw std::invalid_argument("config: leak_threshold must be in [0, 1]");
    }
    if (malicious_client < -1 || malicious_client >= fl.n_clients) {
      throw std::invalid_argument("config: malicious_client outside client range");
    }
    fl.validate();
    if (defense_enabled) defense.validate();
    if (attack_enabled) {
      attack::AttackConfig withgeo = atk;
      if (withgeo.img_h == 0) withgeo.img_h = data.resolution;
      if (withgeo.img_w == 0) withgeo.img_w = data.resolution;
      withgeo.validate();
      if (atk.N > data.subset) {
        throw std::invalid_argument("config: attack.N exceeds the dataset subset");
      }
    }
  }
};

// ---- JSON round trip ----------------------------------------------------

namespace detail {

inline json selection_to_json(const paramshare::SelectionParams& p) {
  return json{{"seed", p.seed}, {"k", p.k}, {"r", p.r}};
}

inline void selection_from_json(const json& j, paramshare::SelectionParams& p) {
  p.seed = j.value("seed", p.seed);
  p.k = j.value("k", p.k);
  p.r = j.value("r", p.r);
}

inline std::string scheme_name(codec::Scheme s) {
  switch (s) {
    case codec::Scheme::fibonacci: return "fibonacci";
    case codec::Scheme::binary: return "binary";
    default: return "gray_onehot";
  }
}

inline codec::Scheme scheme_from_name(const std::string& s) {
  if (s == "fibonacci" || s == "fib") return codec::Scheme::fibonacci;
  if (s == "binary") return codec::Scheme::binary;
  if (s == "gray_onehot" || s == "gray") return codec::Scheme::gray_onehot;
  throw std::invalid_argument("config: unknown code scheme: " + s);
}

inline std::string strategy_name(paramshare::Strategy s) {
  switch (s) {
    case paramshare::Strategy::random: return "random";
    case paramshare::Strategy::random_constrained: return "random_constrained";
    case paramshare::Strategy::systematic: return "systematic";
    case paramshare::Strategy::layerwise: return "layerwise";
    default: return "importance";
  }
}

inline paramshare::Strategy strategy_from_name(const std::string& s) {
  if (s == "random") return paramshare::Strategy::random;
  if (s == "random_constrained") return paramshare::Strategy::random_constrained;
  if (s == "systematic") return paramshare::Strategy::systematic;
  if (s == "layerwise") return paramshare::Strategy::layerwise;
  if (s == "importance") return paramshare::Strategy::importance;
  throw std::invalid_argument("config: unknown selection strategy: " + s);
}

}  // namespace detail

inline json to_json(const ExperimentConfig& cfg) {
  json j;
  j["version"] = cfg.version;
  j["name"] = cfg.name;
  j["seed"] = cfg.seed;
  j["dataset"] = {{"name", cfg.data.name},
                  {"classes", cfg.data.classes},
                  {"resolution", cfg.data.resolution},
                  {"subset", cfg.data.subset},
                  {"normalization", cfg.data.normalization},
                  {"source_dir", cfg.data.source_dir}};
  j["model"] = {{"preset", cfg.model.preset},
                {"in_ch", cfg.model.in_ch},
                {"in_h", cfg.model.in_h},
                {"in_w", cfg.model.in_w},
                {"classes", cfg.model.classes},
                {"conv_channels", cfg.model.conv_channels},
                {"fc_hidden", cfg.model.fc_hidden}};
  j["fl"] = {{"n_clients", cfg.fl.n_clients},
             {"alpha", cfg.fl.alpha},
             {"mode", cfg.fl.mode == flsim::Mode::fedavg ? "fedavg" : "fedsgd"},
             {"rounds", cfg.fl.rounds},
             {"local_epochs", cfg.fl.local_epochs},
             {"batch_size", cfg.fl.batch_size},
             {"lr", cfg.fl.lr},
             {"lr_decay", cfg.fl.lr_decay},
             {"weight_decay", cfg.fl.weight_decay},
             {"client_fraction", cfg.fl.client_fraction},
             {"seed", cfg.fl.seed}};
  j["attack"] = {{"enabled", cfg.attack_enabled},
                 {"N", cfg.atk.N},
                 {"s", cfg.atk.s},
                 {"scheme", detail::scheme_name(cfg.atk.scheme)},
                 {"sample_len", cfg.atk.sample_len},
                 {"block_len", cfg.atk.block_len},
                 {"include_class", cfg.atk.include_class},
                 {"lambda", cfg.atk.lambda},
                 {"mem_steps", cfg.atk.mem_steps},
                 {"mem_lr", cfg.atk.mem_lr},
                 {"mem_lr_decay", cfg.atk.mem_lr_decay},
                 {"mem_batch_cap", cfg.atk.mem_batch_cap},
                 {"victim_seed", cfg.atk.victim_seed},
                 {"strategy", detail::strategy_name(cfg.atk.strategy)},
                 {"selection", detail::selection_to_json(cfg.atk.selection)},
                 {"hidden_dims", cfg.atk.spec.hidden_dims},
                 {"malicious_client", cfg.malicious_client}};
  j["defense"] = {{"enabled", cfg.defense_enabled},
                  {"prune_enabled", cfg.defense.prune_enabled},
                  {"prune_tau", cfg.defense.prune_tau},
                  {"clip_enabled", cfg.defense.clip_enabled},
                  {"clip_max_norm", cfg.defense.clip_max_norm},
                  {"noise_enabled", cfg.defense.noise_enabled},
                  {"noise_eps", cfg.defense.noise_eps},
                  {"dsnr_enabled", cfg.defense.dsnr_enabled},
                  {"dsnr_threshold", cfg.defense.dsnr_threshold},
                  {"loss_monitor_enabled", cfg.defense.loss_monitor_enabled},
                  {"loss_spike_factor", cfg.defense.loss_spike_factor},
                  {"apply_to", defenses::apply_to_name(cfg.defense.apply_to)}};
  j["metrics"] = {{"leak_threshold", cfg.leak_threshold}, {"extract_every", cfg.extract_every}};
  return j;
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  cfg.version = j.value("version", 1);
  cfg.name = j.value("name", cfg.name);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    cfg.data.name = d.value("name", cfg.data.name);
    cfg.data.classes = d.value("classes", cfg.data.classes);
    cfg.data.resolution = d.value("resolution", cfg.data.resolution);
    cfg.data.subset = d.value("subset", cfg.data.subset);
    cfg.data.normalization = d.value("normalization", cfg.data.normalization);
    cfg.data.source_dir = d.value("source_dir", cfg.data.source_dir);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    cfg.model.preset = m.value("preset", cfg.model.preset);
    cfg.model.in_ch = m.value("in_ch", cfg.model.in_ch);
    cfg.model.in_h = m.value("in_h", cfg.data.resolution);
    cfg.model.in_w = m.value("in_w", cfg.data.resolution);
    cfg.model.classes = m.value("classes", cfg.data.classes);
    cfg.model.conv_channels = m.value("conv_channels", cfg.model.conv_channels);
    cfg.model.fc_hidden = m.value("fc_hidden", cfg.model.fc_hidden);
  } else {
    cfg.model.in_h = cfg.data.resolution;
    cfg.model.in_w = cfg.data.resolution;
    cfg.model.classes = cfg.data.classes;
  }
  if (j.contains("fl")) {
    const json& f = j.at("fl");
    cfg.fl.n_clients = f.value("n_clients", cfg.fl.n_clients);
    cfg.fl.alpha = f.value("alpha", cfg.fl.alpha);
    const std::string mode = f.value("mode", std::string("fedavg"));
    if (mode == "fedavg") {
      cfg.fl.mode = flsim::Mode::fedavg;
    } else if (mode == "fedsgd") {
      cfg.fl.mode = flsim::Mode::fedsgd;
    } else {
      throw std::invalid_argument("config: fl.mode must be \"fedavg\" or \"fedsgd\": " + mode);
    }
    cfg.fl.rounds = f.value("rounds", cfg.fl.rounds);
    cfg.fl.local_epochs = f.value("local_epochs", cfg.fl.local_epochs);
    cfg.fl.batch_size = f.value("batch_size", cfg.fl.batch_size);
    cfg.fl.lr = f.value("lr", cfg.fl.lr);
    cfg.fl.lr_decay = f.value("lr_decay", cfg.fl.lr_decay);
    cfg.fl.weight_decay = f.value("weight_decay", cfg.fl.weight_decay);
    cfg.fl.client_fraction = f.value("client_fraction", cfg.fl.client_fraction);
    cfg.fl.seed = f.value("seed", cfg.seed);
  } else {
    cfg.fl.seed = cfg.seed;
  }
  if (j.contains("attack")) {
    const json& a = j.at("attack");
    cfg.attack_enabled = a.value("enabled", false);
    cfg.atk.N = a.value("N", cfg.atk.N);
    cfg.atk.s = a.value("s", cfg.atk.s);
    cfg.atk.scheme = detail::scheme_from_name(a.value("scheme", std::string("fibonacci")));
    cfg.atk.sample_len = a.value("sample_len", cfg.atk.sample_len);
    cfg.atk.block_len = a.value("block_len", cfg.atk.block_len);
    cfg.atk.include_class = a.value("include_class", cfg.atk.include_class);
    cfg.atk.lambda = a.value("lambda", cfg.atk.lambda);
    cfg.atk.mem_steps = a.value("mem_steps", cfg.atk.mem_steps);
    cfg.atk.mem_lr = a.value("mem_lr", cfg.atk.mem_lr);
    cfg.atk.mem_lr_decay = a.value("mem_lr_decay", cfg.atk.mem_lr_decay);
    cfg.atk.mem_batch_cap = a.value("mem_batch_cap", cfg.atk.mem_batch_cap);
    cfg.atk.victim_seed = a.value("victim_seed", cfg.atk.victim_seed);
    cfg.atk.strategy = detail::strategy_from_name(a.value("strategy", std::string("systematic")));
    if (a.contains("selection")) detail::selection_from_json(a.at("selection"), cfg.atk.selection);
    cfg.atk.spec.hidden_dims =
        a.value("hidden_dims", cfg.atk.spec.hidden_dims);
    cfg.malicious_client = a.value("malicious_client", cfg.malicious_client);
  }
  if (j.contains("defense")) {
    const json& d = j.at("defense");
    cfg.defense_enabled = d.value("enabled", false);
    cfg.defense.prune_enabled = d.value("prune_enabled", cfg.defense.prune_enabled);
    cfg.defense.prune_tau = d.value("prune_tau", cfg.defense.prune_tau);
    cfg.defense.clip_enabled = d.value("clip_enabled", cfg.defense.clip_enabled);
    cfg.defense.clip_max_norm = d.value("clip_max_norm", cfg.defense.clip_max_norm);
    cfg.defense.noise_enabled = d.value("noise_enabled", cfg.defense.noise_enabled);
    cfg.defense.noise_eps = d.value("noise_eps", cfg.defense.noise_eps);
    cfg.defense.dsnr_enabled = d.value("dsnr_enabled", cfg.defense.dsnr_enabled);
    cfg.defense.dsnr_threshold = d.value("dsnr_threshold", cfg.defense.dsnr_threshold);
    cfg.defense.loss_monitor_enabled =
        d.value("loss_monitor_enabled", cfg.defense.loss_monitor_enabled);
    cfg.defense.loss_spike_factor = d.value("loss_spike_factor", cfg.defense.loss_spike_factor);
    cfg.defense.apply_to =
        defenses::apply_to_from_name(d.value("apply_to", std::string("steps")));
  }
  if (j.contains("metrics")) {
    const json& m = j.at("metrics");
    cfg.leak_threshold = m.value("leak_threshold", cfg.leak_threshold);
    cfg.extract_every = m.value("extract_every", cfg.extract_every);
  }
  return cfg;
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
  return to_json(cfg).dump(2) + "\n";
}

inline ExperimentConfig parse_config(const std::string& text) {
  json j = json::parse(text);
  return config_from_json(j);
}

// ---- Round records -------------------------------------------------------

struct RoundRecord {
  int round = 0;
  std::vector<int> participants;
  std::uint64_t model_hash = 0;
  std::vector<std::vector<double>> client_loss;  // participant order, per epoch
  double mean_loss = 0.0;                        // mean over participants of epoch means
  double test_accuracy = 0.0;
  std::vector<std::string> defense_flags;
};

inline std::uint64_t hash_record(const RoundRecord& rec) {
  std::uint64_t h = fnv1a64(&rec.round, sizeof rec.round);
  for (int c : rec.participants) h = fnv1a64(&c, sizeof c, h);
  h = fnv1a64(&rec.model_hash, sizeof rec.model_hash, h);
  for (const auto& trace : rec.client_loss) {
    for (double l : trace) h = fnv1a64(&l, sizeof l, h);
  }
  h = fnv1a64(&rec.mean_loss, sizeof rec.mean_loss, h);
  h = fnv1a64(&rec.test_accuracy, sizeof rec.test_accuracy, h);
  for (const auto& f : rec.defense_flags) h = fnv1a64(f, h);
  return h;
}

struct ExtractionCheckpoint {
  int round = 0;
  std::vector<attack::Reconstruction> recons;
  metrics::MetricsReport report;
  std::vector<float> uploaded;  // flat defended upload the extraction ran on
};

struct RunResult {
  ExperimentConfig cfg;  // resolved: malicious client id, attack geometry
  std::vector<RoundRecord> rounds;
  std::vector<std::size_t> loss_flags;  // rounds flagged by the loss monitor
  TensorMap final_global;
  double final_accuracy = 0.0;
  int malicious_client = -1;
  std::vector<std::size_t> shard_sizes;
  // attack payload (empty when the attack is disabled)
  std::vector<std::size_t> victim_ids;
  std::vector<blockgrid::ImageD> victim_images;
  std::vector<ExtractionCheckpoint> extractions;
};

struct RunHooks {
  std::function<void(const RoundRecord&)> on_round;
  std::function<void(const ExtractionCheckpoint&)> on_extraction;
};

namespace detail {

inline blockgrid::ImageD image_of(const dataset::Dataset& ds, std::size_t i) {
  Tensor t = ds.image(i);
  blockgrid::ImageD img(ds.c, ds.h, ds.w);
  for (std::size_t j = 0; j < t.v.size(); ++j) img.v[j] = double(t.v[j]);
  return img;
}

inline int resolve_malicious(int configured, const std::vector<std::vector<std::size_t>>& shards) {
  if (configured >= 0) return configured;
  int best = 0;
  for (int c = 1; c < int(shards.size()); ++c) {
    if (shards[std::size_t(c)].size() > shards[std::size_t(best)].size()) best = c;
  }
  return best;
}

inline std::vector<int> sample_participants(const flsim::FLConfig& fl, int round) {
  std::vector<int> ids(std::size_t(fl.n_clients));
  std::iota(ids.begin(), ids.end(), 0);
  if (fl.client_fraction >= 1.0) return ids;
  std::size_t take = std::max<std::size_t>(
      1, std::size_t(fl.client_fraction * double(fl.n_clients)));
  Rng rng = derive_rng(fl.seed, "round.sample", std::uint64_t(round));
  rng.shuffle(ids);
  ids.resize(take);
  std::sort(ids.begin(), ids.end());
  return ids;
}

// The weights the server would see from this client once its update is
// applied to the round's starting model; extraction reads these.
inline TensorMap implied_upload(const TensorMap& global, const flsim::ClientUpdate& up,
                                double lr) {
  TensorMap out = global;
  for (std::size_t t = 0; t < out.size(); ++t) {
    for (std::size_t i = 0; i < out[t].v.size(); ++i) {
      if (up.kind == flsim::UpdateKind::weight_delta) {
        out[t].v[i] = float(double(out[t].v[i]) + double(up.tensors[t].v[i]));
      } else {
        out[t].v[i] = float(double(out[t].v[i]) - lr * double(up.tensors[t].v[i]));
      }
    }
  }
  return out;
}

}  // namespace detail

// Resolve config fields that depend on the dataset: attack geometry, victim
// classes, and the model's input geometry.
inline void resolve_config(ExperimentConfig& cfg) {
  cfg.model.in_h = cfg.data.resolution;
  cfg.model.in_w = cfg.data.resolution;
  cfg.model.classes = cfg.data.classes;
  if (cfg.attack_enabled) {
    if (cfg.atk.img_h == 0) cfg.atk.img_h = cfg.data.resolution;
    if (cfg.atk.img_w == 0) cfg.atk.img_w = cfg.data.resolution;
    cfg.atk.img_c = 3;
  }
}

inline RunResult run_experiment(ExperimentConfig cfg, const dataset::DatasetBundle& bundle,
                                const RunHooks* hooks = nullptr) {
  resolve_config(cfg);
  cfg.validate();

  RunResult result;

  flsim::PartitionResult part = flsim::dirichlet_partition(bundle.train.labels, cfg.fl.n_clients,
                                                           cfg.fl.alpha, cfg.fl.seed);
  for (const auto& s : part.shards) result.shard_sizes.push_back(s.size());

  Rng init_rng = derive_rng(cfg.seed, "model.init");
  nn::Sequential global_model = nn::build_model(cfg.model, init_rng);
  TensorMap global = flsim::model_snapshot(global_model);
  // per-client scratch; every training call restores the round's weights first
  Rng scratch_rng = derive_rng(cfg.seed, "model.scratch");
  nn::Sequential worker = nn::build_model(cfg.model, scratch_rng);

  // Attack state: the memory dataset is fixed for the run; the secret model
  // object is scratch (each round reloads it from the received weights).
  attack::MemoryDataset mem;
  paramshare::SelectionMap sel;
  nn::Sequential secret;
  int mal_client = -1;
  if (cfg.attack_enabled) {
    mal_client = detail::resolve_malicious(cfg.malicious_client, part.shards);
    const std::vector<std::size_t>& shard = part.shards[std::size_t(mal_client)];
    dataset::Dataset local = dataset::take(bundle.train, shard);
    mem = attack::build_memory_dataset(local, cfg.atk);
    // record victims by their global ids and images
    for (std::size_t k = 0; k < mem.source_ids.size(); ++k) {
      std::size_t global_id = shard[mem.source_ids[k]];
      result.victim_ids.push_back(global_id);
      result.victim_images.push_back(detail::image_of(bundle.train, global_id));
    }
    cfg.atk.victim_classes.assign(mem.classes.begin(), mem.classes.end());
    paramshare::SecretModelSpec sspec = attack::resolved_spec(cfg.atk);
    sel = paramshare::select_positions(paramshare::flatten_tensors(global).values.size(),
                                       sspec.param_count(), cfg.atk.strategy, cfg.atk.selection);
    Rng srng = derive_rng(cfg.atk.selection.seed, "attack.secret.init");
    secret = paramshare::build_secret_model(sspec, srng);
  }
  result.malicious_client = mal_client;

  std::vector<double> round_loss_trace;
  for (int round = 0; round < cfg.fl.rounds; ++round) {
    RoundRecord rec;
    rec.round = round;
    rec.participants = detail::sample_participants(cfg.fl, round);

    std::vector<flsim::ClientUpdate> updates;
    std::optional<flsim::ClientUpdate> malicious_update;
    const defenses::DefenseConfig* dcfg = cfg.defense_enabled ? &cfg.defense : nullptr;
    for (int client : rec.participants) {
      const std::vector<std::size_t>& shard = part.shards[std::size_t(client)];
      if (shard.empty()) {
        rec.defense_flags.push_back("client_skipped:" + std::to_string(client));
        continue;
      }
      flsim::ClientUpdate up;
      if (cfg.attack_enabled && client == mal_client) {
        if (cfg.fl.mode == flsim::Mode::fedavg) {
          up = attack::malicious_train_round(global, worker, bundle.train, shard, cfg.fl, dcfg,
                                             round, client, cfg.atk, mem, sel, secret);
        } else {
          up = attack::fedsgd_malicious_update(global, worker, bundle.train, shard, cfg.fl, dcfg,
                                               round, client, cfg.atk, mem, sel, secret);
        }
      } else {
        up = flsim::benign_client_train(global, worker, bundle.train, shard, cfg.fl, dcfg, round,
                                        client);
      }
      up.client_id = client;
      if (dcfg != nullptr && dcfg->apply_to == defenses::ApplyTo::update &&
          dcfg->any_transform()) {
        std::uint64_t dseed = derive_rng(cfg.fl.seed, "defense.update",
                                         (std::uint64_t(round) << 20) | std::uint64_t(client))
                                  .next_u64();
        up.tensors = defenses::apply_defenses(std::move(up.tensors), *dcfg, dseed);
      }
      if (cfg.attack_enabled && client == mal_client) malicious_update = up;
      updates.push_back(std::move(up));
    }
    if (updates.empty()) {
      throw std::runtime_error("round " + std::to_string(round) + ": no usable client updates");
    }

    if (dcfg != nullptr && dcfg->dsnr_enabled) {
      std::vector<TensorMap> batch;
      for (const auto& u : updates) batch.push_back(u.tensors);
      defenses::DsnrResult ds = defenses::dsnr_score(batch, dcfg->dsnr_threshold);
      if (ds.flagged) rec.defense_flags.push_back("dsnr:" + std::to_string(round));
    }

    double loss_acc = 0.0;
    for (const auto& u : updates) {
      rec.client_loss.push_back(u.loss_trace);
      double m = 0.0;
      for (double l : u.loss_trace) m += l;
      loss_acc += u.loss_trace.empty() ? 0.0 : m / double(u.loss_trace.size());
      for (const auto& f : u.flags) rec.defense_flags.push_back(f);
    }
    rec.mean_loss = loss_acc / double(updates.size());
    round_loss_trace.push_back(rec.mean_loss);

    // extraction checkpoint reads the malicious upload before aggregation
    if (malicious_update.has_value() &&
        (round % cfg.extract_every == 0 || round == cfg.fl.rounds - 1)) {
      ExtractionCheckpoint ck;
      ck.round = round;
      TensorMap uploaded = detail::implied_upload(global, *malicious_update, cfg.fl.lr);
      ck.uploaded = paramshare::flatten_tensors(uploaded).values;
      ck.recons = attack::extract(uploaded, cfg.atk);
      std::vector<blockgrid::ImageD> images;
      for (const auto& r : ck.recons) images.push_back(r.image);
      ck.report = metrics::leakage(images, result.victim_images, cfg.leak_threshold);
      if (hooks != nullptr && hooks->on_extraction) hooks->on_extraction(ck);
      result.extractions.push_back(std::move(ck));
    }

    global = flsim::aggregate(global, updates, cfg.fl.mode, cfg.fl.lr);
    rec.model_hash = hash_tensors(global);

    flsim::model_restore(worker, global);
    rec.test_accuracy = flsim::evaluate_accuracy(worker, bundle.test, cfg.fl.batch_size);

    if (hooks != nullptr && hooks->on_round) hooks->on_round(rec);
    result.rounds.push_back(std::move(rec));
  }

  if (cfg.defense_enabled && cfg.defense.loss_monitor_enabled) {
    result.loss_flags = defenses::loss_monitor(round_loss_trace, cfg.defense.loss_spike_factor);
    for (std::size_t r : result.loss_flags) {
      if (r < result.rounds.size()) {
        result.rounds[r].defense_flags.push_back("loss_spike:" + std::to_string(r));
      }
    }
  }

  result.final_global = global;
  result.final_accuracy =
      result.rounds.empty() ? 0.0 : result.rounds.back().test_accuracy;
  result.cfg = cfg;
  return result;
}

}  // namespace fedlab::experiment
