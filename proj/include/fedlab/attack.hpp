// fedlab/attack.hpp - the injected training hook: alternates benign local
// training with memory-task training of the parameter-shared secret model,
// plus the server-side extractor that recovers images by index code.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedlab/blockgrid.hpp"
#include "fedlab/codec.hpp"
#include "fedlab/dataset.hpp"
#include "fedlab/defenses.hpp"
#include "fedlab/flsim.hpp"
#include "fedlab/nn.hpp"
#include "fedlab/paramshare.hpp"
#include "fedlab/rng.hpp"
#include "fedlab/tensor.hpp"

namespace fedlab::attack {

struct AttackConfig {
  std::size_t N = 16;        // theft quantity (images)
  int s = 0;                 // block edge; 0 = whole-image mode
  codec::Scheme scheme = codec::Scheme::fibonacci;
  std::size_t sample_len = 9;
  std::size_t block_len = 5;
  bool include_class = false;  // insert the class id into block codes
  double lambda = 0.0;         // seam-loss weight, block mode only
  int mem_steps = 200;         // memory iterations per round; 0 disables
  double mem_lr = 0.1;
  double mem_lr_decay = 0.995;     // per memory step
  std::size_t mem_batch_cap = 512; // pairs per memory sub-batch
  std::uint64_t victim_seed = 0;   // orders the victim shuffle
  int img_c = 3, img_h = 0, img_w = 0;
  paramshare::Strategy strategy = paramshare::Strategy::systematic;
  paramshare::SelectionParams selection;
  paramshare::SecretModelSpec spec;  // hidden_dims/activation; io dims derived
  std::vector<int> victim_classes;   // server-side copy, gray codes only

  std::size_t blocks_per_image() const {
    if (s <= 0) return 1;
    std::size_t rows = (std::size_t(img_h) + std::size_t(s) - 1) / std::size_t(s);
    std::size_t cols = (std::size_t(img_w) + std::size_t(s) - 1) / std::size_t(s);
    return rows * cols;
  }

  std::size_t code_length() const {
    if (s <= 0) return sample_len;
    return sample_len + block_len + (include_class ? 1 : 0);
  }

  void validate() const {
    if (N < 1) throw std::invalid_argument("attack: N must be >= 1");
    if (mem_steps < 0) throw std::invalid_argument("attack: mem_steps must be >= 0");
    if (lambda < 0) throw std::invalid_argument("attack: lambda must be >= 0");
    if (mem_lr <= 0) throw std::invalid_argument("attack: mem_lr must be positive");
    if (mem_lr_decay <= 0 || mem_lr_decay > 1)
      throw std::invalid_argument("attack: mem_lr_decay must be in (0,1]");
    if (mem_batch_cap < 1) throw std::invalid_argument("attack: mem_batch_cap must be >= 1");
    if (sample_len < 1) throw std::invalid_argument("attack: sample_len must be >= 1");
    if (img_c < 1 || img_h < 1 || img_w < 1)
      throw std::invalid_argument("attack: image geometry is unset");
    if (s > 0 && (s > img_h || s > img_w))
      throw std::invalid_argument("attack: block size exceeds the image");
    if (s > 0 && block_len < 1)
      throw std::invalid_argument("attack: block_len must be >= 1 in block mode");
    if (s > 0 && scheme == codec::Scheme::gray_onehot)
      throw std::invalid_argument("attack: block codes use fibonacci or binary payloads");
  }
};

// The secret decoder's io dimensions follow from the code and the target
// geometry; hidden layout comes from the config.
inline paramshare::SecretModelSpec resolved_spec(const AttackConfig& cfg) {
  paramshare::SecretModelSpec spec = cfg.spec;
  spec.input_dim = cfg.code_length();
  std::size_t out = std::size_t(cfg.img_c);
  out *= cfg.s > 0 ? std::size_t(cfg.s) * std::size_t(cfg.s)
                   : std::size_t(cfg.img_h) * std::size_t(cfg.img_w);
  spec.output_dim = out;
  return spec;
}

struct MemoryPair {
  codec::CodeVector code;
  std::vector<float> target;  // one block (c*s*s) or one image (c*h*w)
  std::uint64_t sample = 0;   // one-based victim index n
  std::uint64_t block = 0;    // one-based block index p, 0 in whole-image mode
};

struct MemoryDataset {
  std::vector<MemoryPair> pairs;        // n-major, then block order
  std::vector<std::size_t> source_ids;  // victim dataset rows, assignment order
  std::vector<int> classes;             // label per victim, assignment order
  int s = 0;
  int c = 0, bh = 0, bw = 0;  // target geometry per pair
  int img_h = 0, img_w = 0;
  std::size_t blocks_per_image = 1;
  std::size_t code_len = 0;
};

namespace detail {

// Index code for sample n (block p when s > 0). Gray codes address samples by
// class slot plus intra-class ordinal, so they need the victim's label.
inline codec::CodeVector make_code(const AttackConfig& cfg, std::uint64_t n, std::uint64_t p,
                                   int cls, std::uint64_t ordinal) {
  if (cfg.s > 0) {
    codec::BlockCodeSpec bspec;
    bspec.scheme = cfg.scheme;
    bspec.sample_len = cfg.sample_len;
    bspec.block_len = cfg.block_len;
    bspec.include_class = cfg.include_class;
    return codec::build_block_code(n, p, bspec, std::uint32_t(cls));
  }
  switch (cfg.scheme) {
    case codec::Scheme::fibonacci: return codec::fib_encode(n, cfg.sample_len);
    case codec::Scheme::binary: return codec::binary_index(n, cfg.sample_len);
    case codec::Scheme::gray_onehot:
      return codec::gray_onehot_index(ordinal, std::uint32_t(cls), cfg.sample_len);
  }
  throw std::invalid_argument("attack: unknown code scheme");
}

inline blockgrid::BlockLayout make_layout(const AttackConfig& cfg) {
  blockgrid::BlockLayout lay;
  lay.c = cfg.img_c;
  lay.orig_h = cfg.img_h;
  lay.orig_w = cfg.img_w;
  lay.s = cfg.s;
  lay.padded_h = ((cfg.img_h + cfg.s - 1) / cfg.s) * cfg.s;
  lay.padded_w = ((cfg.img_w + cfg.s - 1) / cfg.s) * cfg.s;
  lay.rows = lay.padded_h / cfg.s;
  lay.cols = lay.padded_w / cfg.s;
  return lay;
}

}  // namespace detail

// Picks the N victims by seeded shuffle, indexes them 1..N in draw order, and
// pairs every code with its normalized target block or image.
inline MemoryDataset build_memory_dataset(const dataset::Dataset& victim,
                                          const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.N > victim.size()) {
    throw std::invalid_argument("attack: cannot steal " + std::to_string(cfg.N) +
                                " samples from a dataset of " + std::to_string(victim.size()));
  }
  if (victim.c != cfg.img_c || victim.h != cfg.img_h || victim.w != cfg.img_w) {
    throw std::invalid_argument("attack: dataset geometry does not match the config");
  }
  if (cfg.scheme == codec::Scheme::gray_onehot && cfg.sample_len < std::size_t(victim.classes)) {
    throw std::invalid_argument("attack: gray codes need sample_len >= class count");
  }

  std::vector<std::size_t> order(victim.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = derive_rng(cfg.victim_seed, "attack.victims");
  rng.shuffle(order);
  order.resize(cfg.N);

  MemoryDataset mem;
  mem.source_ids = order;
  mem.s = cfg.s;
  mem.c = cfg.img_c;
  mem.img_h = cfg.img_h;
  mem.img_w = cfg.img_w;
  mem.blocks_per_image = cfg.blocks_per_image();
  mem.code_len = cfg.code_length();
  mem.bh = cfg.s > 0 ? cfg.s : cfg.img_h;
  mem.bw = cfg.s > 0 ? cfg.s : cfg.img_w;

  std::vector<std::uint64_t> per_class_seen(std::size_t(victim.classes), 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::uint64_t n = i + 1;
    const int cls = victim.labels[order[i]];
    mem.classes.push_back(cls);
    const std::uint64_t ordinal = ++per_class_seen[std::size_t(cls)];
    Tensor img = victim.image(order[i]);
    if (cfg.s <= 0) {
      MemoryPair pair;
      pair.code = detail::make_code(cfg, n, 0, cls, ordinal);
      pair.target = img.v;
      pair.sample = n;
      mem.pairs.push_back(std::move(pair));
      continue;
    }
    blockgrid::ImageD imgd(victim.c, victim.h, victim.w);
    for (std::size_t j = 0; j < img.v.size(); ++j) imgd.v[j] = double(img.v[j]);
    blockgrid::BlockSet bs = blockgrid::partition(imgd, cfg.s);
    for (std::size_t p = 0; p < bs.blocks.size(); ++p) {
      MemoryPair pair;
      pair.code = detail::make_code(cfg, n, p + 1, cls, ordinal);
      pair.target.resize(bs.blocks[p].v.size());
      for (std::size_t j = 0; j < pair.target.size(); ++j)
        pair.target[j] = float(bs.blocks[p].v[j]);
      pair.sample = n;
      pair.block = p + 1;
      mem.pairs.push_back(std::move(pair));
    }
  }
  return mem;
}

// Memory objective: mean absolute plus mean squared error over the assembled
// prediction batch, plus the weighted seam penalty in block mode. pred and
// target are image batches [B, C, H, W] (any equal shape when lambda is 0).
inline double memory_loss(const Tensor& pred, const Tensor& target, double lambda, int s) {
  if (pred.shape != target.shape)
    throw std::invalid_argument("memory_loss: shape mismatch");
  auto [l, grad] = nn::l1l2_loss_and_grad(pred, target);
  (void)grad;
  if (lambda > 0 && s > 0) {
    if (pred.shape.size() != 4)
      throw std::invalid_argument("memory_loss: seam term needs an image batch [B,C,H,W]");
    const int B = pred.shape[0], C = pred.shape[1], H = pred.shape[2], W = pred.shape[3];
    std::vector<blockgrid::ImageD> imgs;
    imgs.reserve(std::size_t(B));
    const std::size_t numel = std::size_t(C) * H * W;
    for (int b = 0; b < B; ++b) {
      blockgrid::ImageD img(C, H, W);
      for (std::size_t j = 0; j < numel; ++j) img.v[j] = double(pred.v[std::size_t(b) * numel + j]);
      imgs.push_back(std::move(img));
    }
    l += blockgrid::variation_loss(imgs, s, lambda);
  }
  return l;
}

namespace detail {

// One sub-batch of whole images: code rows, assembled target image tensor,
// and the pair range it covers.
struct MemBatch {
  Tensor codes;    // [pairs, code_len]
  Tensor targets;  // [images, C, H, W]
  std::size_t first_pair = 0;
  std::size_t images = 0;
};

inline std::vector<MemBatch> make_mem_batches(const MemoryDataset& mem,
                                              const AttackConfig& cfg) {
  const std::size_t bpi = mem.blocks_per_image;
  const std::size_t total_images = mem.source_ids.size();
  const std::size_t images_per_batch = std::max<std::size_t>(1, cfg.mem_batch_cap / bpi);
  const std::size_t numel_img = std::size_t(mem.c) * mem.img_h * mem.img_w;

  blockgrid::BlockLayout lay;
  if (mem.s > 0) lay = make_layout(cfg);

  std::vector<MemBatch> batches;
  for (std::size_t at = 0; at < total_images; at += images_per_batch) {
    const std::size_t n_img = std::min(images_per_batch, total_images - at);
    MemBatch mb;
    mb.first_pair = at * bpi;
    mb.images = n_img;
    mb.codes = Tensor({int(n_img * bpi), int(mem.code_len)});
    mb.targets = Tensor({int(n_img), mem.c, mem.img_h, mem.img_w});
    for (std::size_t r = 0; r < n_img * bpi; ++r) {
      const MemoryPair& pair = mem.pairs[mb.first_pair + r];
      for (std::size_t j = 0; j < mem.code_len; ++j)
        mb.codes.v[r * mem.code_len + j] = float(pair.code[j]);
    }
    if (mem.s <= 0) {
      for (std::size_t i = 0; i < n_img; ++i) {
        const MemoryPair& pair = mem.pairs[mb.first_pair + i];
        std::copy(pair.target.begin(), pair.target.end(),
                  mb.targets.v.begin() + long(i * numel_img));
      }
    } else {
      for (std::size_t i = 0; i < n_img; ++i) {
        blockgrid::BlockSet bs;
        bs.layout = lay;
        for (std::size_t p = 0; p < bpi; ++p) {
          const MemoryPair& pair = mem.pairs[mb.first_pair + i * bpi + p];
          blockgrid::ImageD blk(mem.c, mem.bh, mem.bw);
          for (std::size_t j = 0; j < pair.target.size(); ++j) blk.v[j] = double(pair.target[j]);
          bs.blocks.push_back(std::move(blk));
        }
        blockgrid::ImageD img = blockgrid::reassemble(bs);
        for (std::size_t j = 0; j < numel_img; ++j)
          mb.targets.v[i * numel_img + j] = float(img.v[j]);
      }
    }
    batches.push_back(std::move(mb));
  }
  return batches;
}

}  // namespace detail

// Fits the secret model to the memory pairs: full-batch SGD in sub-batches of
// whole images, per-step decayed learning rate, no weight decay. Per-step
// platform defenses transform the secret gradients exactly like main-task
// steps. Returns the per-step mean loss trace. Deterministic.
inline std::vector<double> memory_train(nn::Sequential& secret, const MemoryDataset& mem,
                                        const AttackConfig& cfg,
                                        const defenses::DefenseConfig* defense,
                                        std::uint64_t noise_seed, std::uint64_t noise_salt) {
  if (mem.pairs.empty()) throw std::invalid_argument("memory_train: empty memory dataset");
  std::vector<detail::MemBatch> batches = detail::make_mem_batches(mem, cfg);
  const std::size_t bpi = mem.blocks_per_image;
  const std::size_t total_images = mem.source_ids.size();
  const std::size_t numel_img = std::size_t(mem.c) * mem.img_h * mem.img_w;
  const std::size_t numel_blk = std::size_t(mem.c) * mem.bh * mem.bw;
  blockgrid::BlockLayout lay;
  if (mem.s > 0) lay = detail::make_layout(cfg);

  std::vector<double> trace;
  trace.reserve(std::size_t(cfg.mem_steps));
  for (int step = 0; step < cfg.mem_steps; ++step) {
    double loss_sum = 0.0;
    for (const detail::MemBatch& mb : batches) {
      Tensor pred_rows = secret.forward(mb.codes, true);

      // assemble predicted rows into whole images
      Tensor pred_imgs({int(mb.images), mem.c, mem.img_h, mem.img_w});
      std::vector<blockgrid::ImageD> pred_d;
      if (mem.s <= 0) {
        pred_imgs.v = pred_rows.v;
      } else {
        pred_d.reserve(mb.images);
        for (std::size_t i = 0; i < mb.images; ++i) {
          blockgrid::BlockSet bs;
          bs.layout = lay;
          for (std::size_t p = 0; p < bpi; ++p) {
            blockgrid::ImageD blk(mem.c, mem.bh, mem.bw);
            const float* row = pred_rows.v.data() + (i * bpi + p) * numel_blk;
            for (std::size_t j = 0; j < numel_blk; ++j) blk.v[j] = double(row[j]);
            bs.blocks.push_back(std::move(blk));
          }
          blockgrid::ImageD img = blockgrid::reassemble(bs);
          for (std::size_t j = 0; j < numel_img; ++j)
            pred_imgs.v[i * numel_img + j] = float(img.v[j]);
          pred_d.push_back(std::move(img));
        }
      }

      auto [l1l2, g_img] = nn::l1l2_loss_and_grad(pred_imgs, mb.targets);
      double loss = l1l2;
      std::vector<blockgrid::ImageD> vgrad;
      if (cfg.lambda > 0 && mem.s > 0) {
        if (pred_d.empty()) {
          pred_d.reserve(mb.images);
          for (std::size_t i = 0; i < mb.images; ++i) {
            blockgrid::ImageD img(mem.c, mem.img_h, mem.img_w);
            for (std::size_t j = 0; j < numel_img; ++j)
              img.v[j] = double(pred_imgs.v[i * numel_img + j]);
            pred_d.push_back(std::move(img));
          }
        }
        loss += blockgrid::variation_loss(pred_d, mem.s, cfg.lambda);
        vgrad = blockgrid::variation_loss_grad(pred_d, mem.s, cfg.lambda);
      }

      // scatter image gradients back onto prediction rows; padded cells get 0
      Tensor d_rows(pred_rows.shape);
      if (mem.s <= 0) {
        d_rows.v = g_img.v;
        if (!vgrad.empty()) {
          for (std::size_t i = 0; i < mb.images; ++i)
            for (std::size_t j = 0; j < numel_img; ++j)
              d_rows.v[i * numel_img + j] += float(vgrad[i].v[j]);
        }
      } else {
        for (std::size_t i = 0; i < mb.images; ++i) {
          for (int by = 0; by < lay.rows; ++by)
            for (int bx = 0; bx < lay.cols; ++bx) {
              const std::size_t p = std::size_t(by) * lay.cols + bx;
              float* drow = d_rows.v.data() + (i * bpi + p) * numel_blk;
              for (int c = 0; c < mem.c; ++c)
                for (int y = 0; y < mem.bh; ++y) {
                  const int sy = by * mem.bh + y;
                  if (sy >= mem.img_h) break;
                  for (int x = 0; x < mem.bw; ++x) {
                    const int sx = bx * mem.bw + x;
                    if (sx >= mem.img_w) break;
                    const std::size_t at =
                        (std::size_t(c) * mem.img_h + sy) * std::size_t(mem.img_w) + sx;
                    double g = double(g_img.v[i * numel_img + at]);
                    if (!vgrad.empty()) g += vgrad[i].v[at];
                    drow[(std::size_t(c) * mem.bh + y) * std::size_t(mem.bw) + x] = float(g);
                  }
                }
            }
        }
      }

      secret.zero_grad();
      secret.backward(d_rows);
      if (defense != nullptr && defense->apply_to == defenses::ApplyTo::steps &&
          defense->any_transform()) {
        flsim::detail::set_grads(
            secret, defenses::apply_defenses(
                        flsim::detail::grads_of(secret), *defense,
                        derive_rng(noise_seed, "defense.mem", noise_salt, std::uint64_t(step))
                            .next_u64()));
      }
      nn::Sgd opt(float(cfg.mem_lr * std::pow(cfg.mem_lr_decay, step)), 0.0f);
      opt.step(secret.params());
      loss_sum += loss * double(mb.images);
    }
    trace.push_back(loss_sum / double(total_images));
  }
  return trace;
}

// One malicious client round, FedAvg mode. Phase A is the unmodified benign
// local pass; phase B lifts the secret out of the trained weights, runs the
// memory task, and backfills. The reported update keeps benign shapes.
inline flsim::ClientUpdate malicious_train_round(
    const TensorMap& global, nn::Sequential& model, const dataset::Dataset& data,
    const std::vector<std::size_t>& shard, const flsim::FLConfig& fl,
    const defenses::DefenseConfig* defense, int round, int client_id, const AttackConfig& cfg,
    const MemoryDataset& mem, const paramshare::SelectionMap& sel, nn::Sequential& secret,
    std::vector<double>* mem_trace = nullptr) {
  if (fl.mode != flsim::Mode::fedavg)
    throw std::invalid_argument("malicious_train_round: fedavg only; use the fedsgd path");
  const std::size_t need = resolved_spec(cfg).param_count();
  if (sel.positions.size() != need) {
    throw paramshare::Error("attack: selection holds " + std::to_string(sel.positions.size()) +
                            " positions but the secret model needs " + std::to_string(need));
  }

  flsim::ClientUpdate up =
      flsim::benign_client_train(global, model, data, shard, fl, defense, round, client_id);
  if (cfg.mem_steps <= 0 || shard.empty()) return up;

  paramshare::ParameterVector pv = paramshare::flatten_params(model);
  paramshare::load_secret_into(pv, sel, secret);
  std::vector<double> trace =
      memory_train(secret, mem, cfg, defense, fl.seed,
                   (std::uint64_t(round) << 20) | std::uint64_t(client_id));
  if (mem_trace != nullptr) *mem_trace = trace;
  pv = paramshare::backfill(paramshare::flatten_params(secret).values, sel, std::move(pv));
  paramshare::unflatten_params(model, pv.values);

  TensorMap now = flsim::model_snapshot(model);
  up.tensors = now;
  for (std::size_t t = 0; t < now.size(); ++t)
    for (std::size_t i = 0; i < now[t].v.size(); ++i)
      up.tensors[t].v[i] = now[t].v[i] - global[t].v[i];
  return up;
}

// FedSGD adaptation: run phase B from the current global weights and report
// the pseudo-gradient (old - new)/lr, so the server's step lands on the
// memorized weights. With the memory task disabled this is exactly the benign
// single-batch gradient.
inline flsim::ClientUpdate fedsgd_malicious_update(
    const TensorMap& global, nn::Sequential& model, const dataset::Dataset& data,
    const std::vector<std::size_t>& shard, const flsim::FLConfig& fl,
    const defenses::DefenseConfig* defense, int round, int client_id, const AttackConfig& cfg,
    const MemoryDataset& mem, const paramshare::SelectionMap& sel, nn::Sequential& secret,
    std::vector<double>* mem_trace = nullptr) {
  if (fl.lr == 0.0)
    throw std::invalid_argument("fedsgd_malicious_update: lr must be nonzero");
  flsim::FLConfig sgd_cfg = fl;
  sgd_cfg.mode = flsim::Mode::fedsgd;
  if (cfg.mem_steps <= 0) {
    return flsim::benign_client_train(global, model, data, shard, sgd_cfg, defense, round,
                                      client_id);
  }
  const std::size_t need = resolved_spec(cfg).param_count();
  if (sel.positions.size() != need) {
    throw paramshare::Error("attack: selection holds " + std::to_string(sel.positions.size()) +
                            " positions but the secret model needs " + std::to_string(need));
  }

  flsim::ClientUpdate up;
  up.kind = flsim::UpdateKind::gradient;
  up.client_id = client_id;
  up.sample_count = shard.size();
  if (shard.empty()) {
    up.flags.push_back("empty_shard");
    return up;
  }

  // report the plausible benign loss for this round's batch
  flsim::model_restore(model, global);
  {
    Rng order_rng = derive_rng(fl.seed, "client.order", std::uint64_t(round),
                               std::uint64_t(client_id));
    std::vector<std::size_t> idx = shard;
    order_rng.shuffle(idx);
    idx.resize(std::min<std::size_t>(idx.size(), std::size_t(fl.batch_size)));
    Tensor x = data.batch(idx);
    std::vector<int> y;
    for (std::size_t i : idx) y.push_back(data.labels[i]);
    Tensor logits = model.forward(x, true);
    nn::SoftmaxCrossEntropy ce;
    auto [loss, dlogits] = ce.loss_and_grad(logits, y);
    (void)dlogits;
    up.loss_trace.push_back(loss);
    up.sample_count = idx.size();
  }

  paramshare::ParameterVector pv = paramshare::flatten_params(model);
  paramshare::load_secret_into(pv, sel, secret);
  std::vector<double> trace =
      memory_train(secret, mem, cfg, defense, fl.seed,
                   (std::uint64_t(round) << 20) | std::uint64_t(client_id));
  if (mem_trace != nullptr) *mem_trace = trace;
  pv = paramshare::backfill(paramshare::flatten_params(secret).values, sel, std::move(pv));
  paramshare::unflatten_params(model, pv.values);

  TensorMap now = flsim::model_snapshot(model);
  up.tensors = now;
  for (std::size_t t = 0; t < now.size(); ++t)
    for (std::size_t i = 0; i < now[t].v.size(); ++i)
      up.tensors[t].v[i] =
          float((double(global[t].v[i]) - double(now[t].v[i])) / fl.lr);
  if (defense != nullptr && defense->apply_to == defenses::ApplyTo::steps &&
      defense->any_transform()) {
    up.tensors = defenses::apply_defenses(
        up.tensors, *defense,
        derive_rng(fl.seed, "defense.step",
                   (std::uint64_t(round) << 20) | std::uint64_t(client_id), 0)
            .next_u64());
  }
  return up;
}

struct Reconstruction {
  std::uint64_t index = 0;  // one-based sample index n
  blockgrid::ImageD image;
};

// Server-side recovery: regenerate the selection, rebuild the secret model
// from the uploaded weights, and decode images 1..N in index order, clipped
// to [0,1]. A pure function of (weights, config).
inline std::vector<Reconstruction> extract(const TensorMap& uploaded, const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.scheme == codec::Scheme::gray_onehot && cfg.victim_classes.size() != cfg.N) {
    throw std::invalid_argument("attack: gray extraction needs victim_classes for all N samples");
  }
  paramshare::ParameterVector pv = paramshare::flatten_tensors(uploaded);
  paramshare::SecretModelSpec spec = resolved_spec(cfg);
  Rng init_rng = derive_rng(cfg.selection.seed, "attack.secret.init");
  nn::Sequential secret =
      paramshare::rebuild_server(pv, cfg.strategy, cfg.selection, spec, init_rng);

  const std::size_t bpi = cfg.blocks_per_image();
  const std::size_t code_len = cfg.code_length();
  Tensor codes({int(cfg.N * bpi), int(code_len)});
  std::vector<std::uint64_t> per_class_seen(
      cfg.victim_classes.empty()
          ? 0
          : std::size_t(*std::max_element(cfg.victim_classes.begin(), cfg.victim_classes.end())) +
                1,
      0);
  for (std::size_t i = 0; i < cfg.N; ++i) {
    const int cls = cfg.victim_classes.empty() ? 0 : cfg.victim_classes[i];
    std::uint64_t ordinal = 1;
    if (!per_class_seen.empty()) ordinal = ++per_class_seen[std::size_t(cls)];
    for (std::size_t p = 0; p < bpi; ++p) {
      codec::CodeVector code =
          detail::make_code(cfg, i + 1, cfg.s > 0 ? p + 1 : 0, cls, ordinal);
      for (std::size_t j = 0; j < code_len; ++j)
        codes.v[(i * bpi + p) * code_len + j] = float(code[j]);
    }
  }

  Tensor out = secret.forward(codes, false);
  for (float& v : out.v) v = std::clamp(v, 0.0f, 1.0f);

  const std::size_t numel_blk =
      std::size_t(cfg.img_c) * (cfg.s > 0 ? std::size_t(cfg.s) * cfg.s
                                          : std::size_t(cfg.img_h) * cfg.img_w);
  std::vector<Reconstruction> recons;
  recons.reserve(cfg.N);
  if (cfg.s <= 0) {
    for (std::size_t i = 0; i < cfg.N; ++i) {
      Reconstruction rec;
      rec.index = i + 1;
      rec.image = blockgrid::ImageD(cfg.img_c, cfg.img_h, cfg.img_w);
      const float* row = out.v.data() + i * numel_blk;
      for (std::size_t j = 0; j < numel_blk; ++j) rec.image.v[j] = double(row[j]);
      recons.push_back(std::move(rec));
    }
    return recons;
  }
  blockgrid::BlockLayout lay = detail::make_layout(cfg);
  for (std::size_t i = 0; i < cfg.N; ++i) {
    blockgrid::BlockSet bs;
    bs.layout = lay;
    bs.source_index = i + 1;
    for (std::size_t p = 0; p < bpi; ++p) {
      blockgrid::ImageD blk(cfg.img_c, cfg.s, cfg.s);
      const float* row = out.v.data() + (i * bpi + p) * numel_blk;
      for (std::size_t j = 0; j < numel_blk; ++j) blk.v[j] = double(row[j]);
      bs.blocks.push_back(std::move(blk));
    }
    Reconstruction rec;
    rec.index = i + 1;
    rec.image = blockgrid::reassemble(bs);
    recons.push_back(std::move(rec));
  }
  return recons;
}

}  // namespace fedlab::attack
