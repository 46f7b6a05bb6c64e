// fedlab/cli.hpp - command line front end: prepare / run / extract / report /
// codec subcommands over the experiment pipeline.
#pragma once

#include <algorithm>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedlab/experiment.hpp"
#include "fedlab/runio.hpp"

namespace fedlab::cli {

namespace fs = std::filesystem;

namespace detail {

// Dotted-key overrides ("--defense.noise_eps 4e-3") applied to the parsed
// config JSON before validation, so they land in the persisted config.json.
inline void apply_override(nlohmann::json& root, const std::string& key,
                           const std::string& value) {
  nlohmann::json* node = &root;
  std::size_t start = 0;
  while (true) {
    std::size_t dot = key.find('.', start);
    std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) throw std::invalid_argument("override: empty key segment in " + key);
    if (dot == std::string::npos) {
      nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
      (*node)[part] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

inline void apply_overrides(nlohmann::json& root, const std::vector<std::string>& extras) {
  std::size_t i = 0;
  while (i < extras.size()) {
    std::string tok = extras[i];
    if (tok.rfind("--", 0) != 0 || tok.size() <= 2) {
      throw std::invalid_argument("override: expected --section.key, got \"" + tok + "\"");
    }
    tok = tok.substr(2);
    std::size_t eq = tok.find('=');
    if (eq != std::string::npos) {
      apply_override(root, tok.substr(0, eq), tok.substr(eq + 1));
      ++i;
    } else {
      if (i + 1 >= extras.size()) {
        throw std::invalid_argument("override: missing value for --" + tok);
      }
      apply_override(root, tok, extras[i + 1]);
      i += 2;
    }
  }
}

inline nlohmann::json load_config_json(const std::string& path) {
  if (!fs::exists(path)) throw std::invalid_argument("config file not found: " + path);
  return nlohmann::json::parse(runio::read_text(path));
}

inline dataset::DatasetBundle ensure_dataset(const experiment::ExperimentConfig& cfg,
                                             const fs::path& run_dir) {
  fs::path ddir = run_dir / "dataset";
  if (fs::exists(ddir / "manifest.json")) {
    nlohmann::json man = nlohmann::json::parse(runio::read_text(ddir / "manifest.json"));
    if (man.value("name", std::string()) == cfg.data.name &&
        man.value("seed", std::uint64_t(0)) == cfg.seed &&
        man.value("subset", std::size_t(0)) == cfg.data.subset &&
        man.value("resolution", 0) == cfg.data.resolution &&
        man.value("classes", 0) == cfg.data.classes) {
      return dataset::load_prepared(ddir.string());
    }
  }
  return dataset::prepare_dataset(cfg.data, cfg.seed, ddir.string());
}

struct AttackContext {
  int malicious_client = -1;
  attack::MemoryDataset mem;
  std::vector<std::size_t> victim_ids;
  std::vector<blockgrid::ImageD> victim_images;
};

// Rebuilds the victim set and attack geometry exactly as the online run does;
// extraction offline must see the same targets.
inline AttackContext attack_context(experiment::ExperimentConfig& cfg,
                                    const dataset::DatasetBundle& bundle) {
  experiment::resolve_config(cfg);
  cfg.validate();
  flsim::PartitionResult part = flsim::dirichlet_partition(bundle.train.labels, cfg.fl.n_clients,
                                                           cfg.fl.alpha, cfg.fl.seed);
  AttackContext ctx;
  ctx.malicious_client = experiment::detail::resolve_malicious(cfg.malicious_client, part.shards);
  const std::vector<std::size_t>& shard = part.shards[std::size_t(ctx.malicious_client)];
  dataset::Dataset local = dataset::take(bundle.train, shard);
  ctx.mem = attack::build_memory_dataset(local, cfg.atk);
  for (std::size_t k = 0; k < ctx.mem.source_ids.size(); ++k) {
    std::size_t global_id = shard[ctx.mem.source_ids[k]];
    ctx.victim_ids.push_back(global_id);
    ctx.victim_images.push_back(experiment::detail::image_of(bundle.train, global_id));
  }
  cfg.atk.victim_classes.assign(ctx.mem.classes.begin(), ctx.mem.classes.end());
  return ctx;
}

inline std::vector<int> list_weight_rounds(const fs::path& run_dir) {
  std::vector<int> rounds;
  fs::path wdir = run_dir / "weights";
  if (!fs::exists(wdir)) return rounds;
  for (const auto& entry : fs::directory_iterator(wdir)) {
    std::string name = entry.path().filename().string();
    if (name.rfind("round_", 0) == 0 && entry.path().extension() == ".f32") {
      rounds.push_back(std::stoi(name.substr(6, 4)));
    }
  }
  std::sort(rounds.begin(), rounds.end());
  return rounds;
}

}  // namespace detail

// ---- subcommand bodies -----------------------------------------------------

inline int cmd_prepare(const std::string& config_path, const std::string& out_dir,
                       const std::vector<std::string>& extras, std::ostream& out) {
  nlohmann::json j = detail::load_config_json(config_path);
  detail::apply_overrides(j, extras);
  experiment::ExperimentConfig cfg = experiment::config_from_json(j);
  experiment::resolve_config(cfg);
  cfg.validate();
  dataset::DatasetBundle bundle =
      dataset::prepare_dataset(cfg.data, cfg.seed, (fs::path(out_dir) / "dataset").string());
  out << "prepared " << bundle.train.size() << " train / " << bundle.test.size()
      << " test samples in " << (fs::path(out_dir) / "dataset").string() << "\n";
  return 0;
}

inline int cmd_run(const std::string& config_path, const std::string& out_dir,
                   const std::vector<std::string>& extras, std::ostream& out) {
  nlohmann::json j = detail::load_config_json(config_path);
  detail::apply_overrides(j, extras);
  experiment::ExperimentConfig cfg = experiment::config_from_json(j);
  experiment::resolve_config(cfg);
  cfg.validate();

  fs::path root(out_dir);
  dataset::DatasetBundle bundle = detail::ensure_dataset(cfg, root);

  runio::RunWriter writer(root);
  experiment::RunHooks hooks;
  hooks.on_round = [&](const experiment::RoundRecord& rec) {
    writer.on_round(rec);
    out << "round " << rec.round << ": loss " << runio::format_g9(rec.mean_loss) << ", acc "
        << runio::format_g9(rec.test_accuracy) << "\n";
  };
  hooks.on_extraction = [&](const experiment::ExtractionCheckpoint& ck) {
    writer.on_extraction(ck);
    out << "  extraction @ round " << ck.round << ": leakage " << ck.report.leakage_count
        << ", ssim " << runio::format_g9(ck.report.ssim_mean) << "\n";
  };

  experiment::RunResult res = experiment::run_experiment(cfg, bundle, &hooks);
  writer.write_config(res.cfg);
  writer.finalize(res);
  out << "run complete: " << res.rounds.size() << " rounds, final accuracy "
      << runio::format_g9(res.final_accuracy);
  if (!res.extractions.empty()) {
    out << ", final leakage " << res.extractions.back().report.leakage_count << "/"
        << res.cfg.atk.N;
  }
  out << "\nwrote " << root.string() << "\n";
  return 0;
}

inline int cmd_extract(const std::string& run_dir, std::optional<int> round_opt,
                       std::ostream& out) {
  fs::path root(run_dir);
  if (!fs::exists(root / "config.json")) {
    throw std::invalid_argument("extract: " + run_dir + " is not a run directory (no config.json)");
  }
  experiment::ExperimentConfig cfg = experiment::parse_config(runio::read_text(root / "config.json"));
  if (!cfg.attack_enabled) {
    throw std::invalid_argument("extract: run " + run_dir +
                                " was benign (attack.enabled = false); nothing to extract");
  }

  std::vector<int> rounds = detail::list_weight_rounds(root);
  if (rounds.empty()) {
    throw std::invalid_argument("extract: no persisted weights under " +
                                (root / "weights").string());
  }
  int round = round_opt.value_or(rounds.back());
  if (std::find(rounds.begin(), rounds.end(), round) == rounds.end()) {
    std::string avail;
    for (int r : rounds) avail += (avail.empty() ? "" : ", ") + std::to_string(r);
    throw std::invalid_argument("extract: round " + std::to_string(round) +
                                " has no persisted weights (available: " + avail + ")");
  }

  dataset::DatasetBundle bundle = detail::ensure_dataset(cfg, root);
  detail::AttackContext ctx = detail::attack_context(cfg, bundle);

  std::vector<float> flat =
      runio::read_floats(root / "weights" / (runio::round_dir_name(round) + ".f32"));
  Rng rng = derive_rng(cfg.seed, "model.init");
  nn::Sequential model = nn::build_model(cfg.model, rng);
  paramshare::unflatten_params(model, flat);
  TensorMap uploaded = flsim::model_snapshot(model);

  std::vector<attack::Reconstruction> recons = attack::extract(uploaded, cfg.atk);
  std::vector<blockgrid::ImageD> images;
  for (const auto& r : recons) images.push_back(r.image);
  metrics::MetricsReport report = metrics::leakage(images, ctx.victim_images, cfg.leak_threshold);

  fs::path dir = root / "extractions" / runio::round_dir_name(round);
  fs::create_directories(dir);
  for (const auto& rec : recons) {
    runio::write_bytes(dir / runio::index_png_name(int(rec.index)),
                       runio::encode_png(rec.image));
  }
  nlohmann::ordered_json mj;
  mj["round"] = round;
  mj["leakage_count"] = report.leakage_count;
  mj["leakage_rate"] = report.leakage_rate;
  mj["ssim_mean"] = report.ssim_mean;
  mj["ssim_std"] = report.ssim_std;
  mj["psnr_mean"] = report.psnr_mean;
  mj["psnr_std"] = report.psnr_std;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"index", row.index},
                    {"ssim", row.ssim},
                    {"psnr", row.psnr},
                    {"leaked", row.leaked}});
  }
  mj["rows"] = rows;
  runio::write_text(dir / "metrics.json", mj.dump(2) + "\n");

  out << "extracted round " << round << ": leakage " << report.leakage_count << "/"
      << recons.size() << ", ssim " << runio::format_g9(report.ssim_mean) << ", psnr "
      << runio::format_g9(report.psnr_mean) << "\nwrote " << dir.string() << "\n";
  return 0;
}

inline int cmd_report(const std::vector<std::string>& run_dirs, std::string out_path,
                      std::ostream& out) {
  std::vector<runio::RunSummary> summaries;
  for (const auto& d : run_dirs) {
    if (!fs::exists(fs::path(d) / "metrics.json")) {
      throw std::invalid_argument("report: " + d + " has no metrics.json (not a completed run)");
    }
    summaries.push_back(runio::load_summary(d));
  }
  if (out_path.empty()) {
    fs::path p = fs::path(run_dirs.front()) / "report" / "combined.md";
    fs::create_directories(p.parent_path());
    out_path = p.string();
  } else {
    fs::path p(out_path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
  }
  runio::write_text(out_path, runio::combined_report(summaries));
  out << "wrote " << out_path << "\n";
  return 0;
}

inline int cmd_codec(const std::string& scheme, std::uint64_t value, std::size_t min_length,
                     std::uint32_t cls, std::optional<std::uint64_t> block,
                     std::size_t sample_len, std::size_t block_len, bool include_class,
                     std::ostream& out) {
  codec::CodeVector code;
  if (block.has_value()) {
    codec::BlockCodeSpec spec;
    if (scheme == "fib" || scheme == "fibonacci") {
      spec.scheme = codec::Scheme::fibonacci;
    } else if (scheme == "binary") {
      spec.scheme = codec::Scheme::binary;
    } else {
      throw std::invalid_argument("codec: block codes support fib or binary, got " + scheme);
    }
    spec.sample_len = sample_len;
    spec.block_len = block_len;
    spec.include_class = include_class;
    code = codec::build_block_code(value, *block, spec, cls);
  } else if (scheme == "fib" || scheme == "fibonacci") {
    code = codec::fib_encode(value, min_length);
  } else if (scheme == "binary") {
    code = codec::binary_index(value, min_length);
  } else if (scheme == "gray") {
    if (min_length == 0) {
      throw std::invalid_argument("codec: gray scheme needs --min-length (total code width)");
    }
    code = codec::gray_onehot_index(value, cls, min_length);
  } else {
    throw std::invalid_argument("codec: unknown scheme " + scheme +
                                " (expected fib, binary, or gray)");
  }
  for (std::size_t i = 0; i < code.size(); ++i) out << (i ? " " : "") << code[i];
  out << "\n";
  return 0;
}

// ---- entry point -----------------------------------------------------------

// Exit codes: 0 success, 2 configuration or usage error, 3 runtime failure.
inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"fedlab: federated learning attack simulation laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  auto* prepare = app.add_subcommand("prepare", "materialize the dataset for a config");
  prepare->add_option("--config", config_path, "experiment config JSON")->required();
  prepare->add_option("--out", out_dir, "output directory")->required();
  prepare->allow_extras();

  auto* run = app.add_subcommand("run", "run an experiment into a run directory");
  run->add_option("--config", config_path, "experiment config JSON")->required();
  run->add_option("--out", out_dir, "run directory to create")->required();
  run->allow_extras();

  std::string run_dir;
  int round = -1;
  auto* extract = app.add_subcommand("extract", "re-run extraction offline from stored weights");
  extract->add_option("--run", run_dir, "run directory")->required();
  extract->add_option("--round", round, "round to extract (default: last checkpoint)");

  std::vector<std::string> report_dirs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "summarize one or more run directories");
  report->add_option("dirs", report_dirs, "run directories")->required();
  report->add_option("--out", report_out, "output markdown path");

  std::string scheme = "fib";
  std::uint64_t value = 0;
  std::size_t min_length = 0;
  std::uint32_t cls = 0;
  std::int64_t block = -1;
  std::size_t sample_len = 9, block_len = 5;
  bool include_class = false;
  auto* codec_cmd = app.add_subcommand("codec", "print a code vector");
  codec_cmd->add_option("--scheme", scheme, "fib | binary | gray");
  codec_cmd->add_option("--value", value, "sample index (1-based)")->required();
  codec_cmd->add_option("--min-length", min_length, "pad code to this length");
  codec_cmd->add_option("--class", cls, "class id (gray / block codes)");
  codec_cmd->add_option("--block", block, "block index: emit a block code");
  codec_cmd->add_option("--sample-len", sample_len, "block code sample half width");
  codec_cmd->add_option("--block-len", block_len, "block code block half width");
  codec_cmd->add_flag("--include-class", include_class, "insert class slot in block code");

  try {
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(config_path, out_dir, prepare->remaining(), out);
    if (run->parsed()) return cmd_run(config_path, out_dir, run->remaining(), out);
    if (extract->parsed()) {
      return cmd_extract(run_dir, round >= 0 ? std::optional<int>(round) : std::nullopt, out);
    }
    if (report->parsed()) return cmd_report(report_dirs, report_out, out);
    if (codec_cmd->parsed()) {
      return cmd_codec(scheme, value, min_length, cls,
                       block >= 0 ? std::optional<std::uint64_t>(std::uint64_t(block))
                                  : std::nullopt,
                       sample_len, block_len, include_class, out);
    }
  } catch (const paramshare::Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::length_error& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace fedlab::cli
