// fedlab/runio.hpp - run-directory persistence: deterministic PNG encoding,
// CSV/JSON emission, SVG plots, and the report generator.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedlab/experiment.hpp"

namespace fedlab::runio {

namespace fs = std::filesystem;

// ---- formatting -----------------------------------------------------------

inline std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string hex_u64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---- PNG (truecolor 8-bit, zlib stored blocks; fully deterministic) -------

namespace detail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t n, std::uint32_t crc = 0) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc ^= 0xffffffffu;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

inline std::uint32_t adler32(const unsigned char* data, std::size_t n) {
  std::uint32_t a = 1, b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    a = (a + data[i]) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

inline void push_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back((unsigned char)(v >> 24));
  out.push_back((unsigned char)(v >> 16));
  out.push_back((unsigned char)(v >> 8));
  out.push_back((unsigned char)v);
}

inline void push_chunk(std::vector<unsigned char>& out, const char type[4],
                       const std::vector<unsigned char>& body) {
  push_u32(out, std::uint32_t(body.size()));
  std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), body.begin(), body.end());
  push_u32(out, crc32(out.data() + start, out.size() - start));
}

// zlib stream with stored (uncompressed) deflate blocks: deterministic and
// dependency-free; reconstructions are small so size is a non-issue
inline std::vector<unsigned char> zlib_store(const std::vector<unsigned char>& raw) {
  std::vector<unsigned char> z;
  z.push_back(0x78);
  z.push_back(0x01);
  std::size_t pos = 0;
  do {
    std::size_t take = std::min<std::size_t>(raw.size() - pos, 65535);
    bool last = pos + take == raw.size();
    z.push_back(last ? 1 : 0);
    z.push_back((unsigned char)(take & 0xff));
    z.push_back((unsigned char)(take >> 8));
    z.push_back((unsigned char)(~take & 0xff));
    z.push_back((unsigned char)((~take >> 8) & 0xff));
    z.insert(z.end(), raw.begin() + long(pos), raw.begin() + long(pos + take));
    pos += take;
  } while (pos < raw.size());
  push_u32(z, adler32(raw.data(), raw.size()));
  return z;
}

inline unsigned char quantize(double v) {
  double c = std::clamp(v, 0.0, 1.0);
  return (unsigned char)std::lround(c * 255.0);
}

}  // namespace detail

// Encodes a [0,1] image as an 8-bit RGB PNG; 1-channel images are replicated
// across RGB. Identical pixels always produce identical bytes.
inline std::vector<unsigned char> encode_png(const blockgrid::ImageD& img) {
  if (img.c != 1 && img.c != 3) {
    throw std::invalid_argument("png: image must have 1 or 3 channels");
  }
  std::vector<unsigned char> raw;
  raw.reserve(std::size_t(img.h) * (std::size_t(img.w) * 3 + 1));
  const std::size_t plane = std::size_t(img.h) * img.w;
  for (int y = 0; y < img.h; ++y) {
    raw.push_back(0);  // filter: none
    for (int x = 0; x < img.w; ++x) {
      const std::size_t px = std::size_t(y) * img.w + x;
      for (int ch = 0; ch < 3; ++ch) {
        const int src = img.c == 3 ? ch : 0;
        raw.push_back(detail::quantize(img.v[std::size_t(src) * plane + px]));
      }
    }
  }

  std::vector<unsigned char> png = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<unsigned char> ihdr;
  detail::push_u32(ihdr, std::uint32_t(img.w));
  detail::push_u32(ihdr, std::uint32_t(img.h));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);   // deflate
  ihdr.push_back(0);   // adaptive filters
  ihdr.push_back(0);   // no interlace
  detail::push_chunk(png, "IHDR", ihdr);
  detail::push_chunk(png, "IDAT", detail::zlib_store(raw));
  detail::push_chunk(png, "IEND", {});
  return png;
}

inline void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), long(bytes.size()));
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline void write_floats(const fs::path& path, const std::vector<float>& values) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(values.data()), long(values.size() * sizeof(float)));
}

inline std::vector<float> read_floats(const fs::path& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::streamsize bytes = f.tellg();
  if (bytes % std::streamsize(sizeof(float)) != 0) {
    throw std::runtime_error("corrupt float file: " + path.string());
  }
  std::vector<float> values(std::size_t(bytes) / sizeof(float));
  f.seekg(0);
  f.read(reinterpret_cast<char*>(values.data()), bytes);
  return values;
}

// Side-by-side grid: one column per sample, target row above reconstruction
// row, 2px gutters.
inline blockgrid::ImageD recon_grid(const std::vector<blockgrid::ImageD>& targets,
                                    const std::vector<blockgrid::ImageD>& recons) {
  if (targets.empty() || targets.size() != recons.size()) {
    throw std::invalid_argument("recon_grid: need matching nonempty target/recon lists");
  }
  const int h = targets[0].h, w = targets[0].w, gap = 2;
  const int cols = int(targets.size());
  blockgrid::ImageD grid(3, 2 * h + gap, cols * w + (cols - 1) * gap);
  std::fill(grid.v.begin(), grid.v.end(), 1.0);
  auto blit = [&](const blockgrid::ImageD& src, int y0, int x0) {
    const std::size_t plane = std::size_t(src.h) * src.w;
    for (int c = 0; c < 3; ++c) {
      const int sc = src.c == 3 ? c : 0;
      for (int y = 0; y < src.h; ++y)
        for (int x = 0; x < src.w; ++x)
          grid.at(c, y0 + y, x0 + x) = src.v[std::size_t(sc) * plane + std::size_t(y) * src.w + x];
    }
  };
  for (int i = 0; i < cols; ++i) {
    blit(targets[std::size_t(i)], 0, i * (w + gap));
    blit(recons[std::size_t(i)], h + gap, i * (w + gap));
  }
  return grid;
}

// ---- SVG line plot ---------------------------------------------------------

struct PlotSeries {
  std::string label;
  std::vector<double> values;
};

inline std::string line_plot_svg(const std::vector<PlotSeries>& series, const std::string& title,
                                 const std::string& ylabel) {
  const int W = 640, H = 360, ml = 60, mr = 16, mt = 32, mb = 40;
  double lo = 0.0, hi = 1e-9;
  std::size_t n = 0;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (n < 2) n = 2;
  if (hi <= lo) hi = lo + 1.0;
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(W) +
                    "\" height=\"" + std::to_string(H) + "\" viewBox=\"0 0 " + std::to_string(W) +
                    " " + std::to_string(H) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + std::to_string(W / 2) + "\" y=\"20\" text-anchor=\"middle\" " +
         "font-family=\"sans-serif\" font-size=\"14\">" + title + "</text>\n";
  auto xmap = [&](std::size_t i) {
    return double(ml) + double(i) / double(n - 1) * double(W - ml - mr);
  };
  auto ymap = [&](double v) {
    return double(H - mb) - (v - lo) / (hi - lo) * double(H - mt - mb);
  };
  for (int t = 0; t <= 4; ++t) {
    double v = lo + (hi - lo) * t / 4.0;
    double y = ymap(v);
    svg += "<line x1=\"" + std::to_string(ml) + "\" y1=\"" + format_g9(y) + "\" x2=\"" +
           std::to_string(W - mr) + "\" y2=\"" + format_g9(y) +
           "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + std::to_string(ml - 6) + "\" y=\"" + format_g9(y + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
           format_g9(v) + "</text>\n";
  }
  svg += "<text x=\"14\" y=\"" + std::to_string(H / 2) + "\" text-anchor=\"middle\" " +
         "font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 " +
         std::to_string(H / 2) + ")\">" + ylabel + "</text>\n";
  svg += "<text x=\"" + std::to_string((W + ml) / 2) + "\" y=\"" + std::to_string(H - 8) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">round</text>\n";
  int ci = 0;
  for (const auto& s : series) {
    std::string pts;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      pts += format_g9(xmap(i)) + "," + format_g9(ymap(s.values[i])) + " ";
    }
    const char* color = colors[ci % 6];
    svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"1.5\"/>\n";
    svg += "<text x=\"" + std::to_string(W - mr) + "\" y=\"" +
           std::to_string(mt + 14 * ci) + "\" text-anchor=\"end\" " +
           "font-family=\"sans-serif\" font-size=\"11\" fill=\"" + color + "\">" + s.label +
           "</text>\n";
    ++ci;
  }
  svg += "</svg>\n";
  return svg;
}

// ---- run directory writer --------------------------------------------------

inline std::string round_dir_name(int round) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "round_%04d", round);
  return buf;
}

inline std::string index_png_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d.png", index);
  return buf;
}

inline nlohmann::ordered_json record_to_json(const experiment::RoundRecord& rec) {
  nlohmann::ordered_json j;
  j["round"] = rec.round;
  j["participants"] = rec.participants;
  j["model_hash"] = hex_u64(rec.model_hash);
  j["record_hash"] = hex_u64(experiment::hash_record(rec));
  j["mean_loss"] = rec.mean_loss;
  j["test_accuracy"] = rec.test_accuracy;
  j["client_loss"] = rec.client_loss;
  j["defense_flags"] = rec.defense_flags;
  return j;
}

class RunWriter {
 public:
  explicit RunWriter(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_);
    fs::create_directories(root_ / "rounds");
    fs::create_directories(root_ / "report");
  }

  const fs::path& root() const { return root_; }

  void write_config(const experiment::ExperimentConfig& cfg) {
    write_text(root_ / "config.json", experiment::serialize_config(cfg));
  }

  void on_round(const experiment::RoundRecord& rec) {
    write_text(root_ / "rounds" / (round_dir_name(rec.round) + ".json"),
               record_to_json(rec).dump(2) + "\n");
    rounds_csv_ += std::to_string(rec.round) + "," + format_g9(rec.mean_loss) + "," +
                   format_g9(rec.test_accuracy) + "," + hex_u64(rec.model_hash) + "," +
                   hex_u64(experiment::hash_record(rec)) + "," + join(rec.participants) + "," +
                   join(rec.defense_flags) + "\n";
    write_text(root_ / "rounds.csv", rounds_csv_header() + rounds_csv_);
  }

  void on_extraction(const experiment::ExtractionCheckpoint& ck) {
    fs::path dir = root_ / "extractions" / round_dir_name(ck.round);
    fs::create_directories(dir);
    for (const auto& rec : ck.recons) {
      write_bytes(dir / index_png_name(int(rec.index)), encode_png(rec.image));
    }
    fs::create_directories(root_ / "weights");
    write_floats(root_ / "weights" / (round_dir_name(ck.round) + ".f32"), ck.uploaded);
    for (const auto& row : ck.report.rows) {
      metrics_csv_ += std::to_string(ck.round) + "," + std::to_string(row.index) + "," +
                      format_g9(row.ssim) + "," + format_g9(row.psnr) + "," +
                      (row.leaked ? "1" : "0") + "\n";
    }
    write_text(root_ / "metrics.csv", metrics_csv_header() + metrics_csv_);
  }

  void finalize(const experiment::RunResult& res) {
    // metrics.json: the machine-readable summary, deterministic by design
    nlohmann::ordered_json j;
    j["name"] = res.cfg.name;
    j["final_accuracy"] = res.final_accuracy;
    j["rounds"] = res.rounds.size();
    j["malicious_client"] = res.malicious_client;
    nlohmann::ordered_json hashes = nlohmann::ordered_json::array();
    for (const auto& rec : res.rounds) hashes.push_back(hex_u64(experiment::hash_record(rec)));
    j["record_hashes"] = hashes;
    j["loss_flags"] = res.loss_flags;
    if (!res.extractions.empty()) {
      const auto& last = res.extractions.back().report;
      j["attack"] = {{"N", res.cfg.atk.N},
                     {"victim_ids", res.victim_ids},
                     {"leak_threshold", res.cfg.leak_threshold},
                     {"final_round", res.extractions.back().round},
                     {"leakage_count", last.leakage_count},
                     {"leakage_rate", last.leakage_rate},
                     {"ssim_mean", last.ssim_mean},
                     {"ssim_std", last.ssim_std},
                     {"psnr_mean", last.psnr_mean},
                     {"psnr_std", last.psnr_std}};
      nlohmann::ordered_json per_round = nlohmann::ordered_json::array();
      for (const auto& ck : res.extractions) {
        per_round.push_back({{"round", ck.round},
                             {"leakage_count", ck.report.leakage_count},
                             {"ssim_mean", ck.report.ssim_mean},
                             {"psnr_mean", ck.report.psnr_mean}});
      }
      j["attack"]["per_round"] = per_round;
    }
    write_text(root_ / "metrics.json", j.dump(2) + "\n");

    // report assets
    std::vector<PlotSeries> loss_series(1);
    loss_series[0].label = "mean train loss";
    for (const auto& rec : res.rounds) loss_series[0].values.push_back(rec.mean_loss);
    write_text(root_ / "report" / "loss.svg",
               line_plot_svg(loss_series, "Training loss per round", "loss"));

    std::vector<PlotSeries> acc_series(1);
    acc_series[0].label = "test accuracy";
    for (const auto& rec : res.rounds) acc_series[0].values.push_back(rec.test_accuracy);
    write_text(root_ / "report" / "accuracy.svg",
               line_plot_svg(acc_series, "Test accuracy per round", "accuracy"));

    if (!res.extractions.empty()) {
      std::vector<PlotSeries> ssim_series(1);
      ssim_series[0].label = "mean SSIM";
      for (const auto& ck : res.extractions) {
        ssim_series[0].values.push_back(ck.report.ssim_mean);
      }
      write_text(root_ / "report" / "ssim.svg",
                 line_plot_svg(ssim_series, "Reconstruction SSIM per checkpoint", "SSIM"));
      std::vector<blockgrid::ImageD> recs;
      for (const auto& r : res.extractions.back().recons) recs.push_back(r.image);
      write_bytes(root_ / "report" / "recon_grid.png",
                  encode_png(recon_grid(res.victim_images, recs)));
    }

    write_text(root_ / "report.md", report_markdown(res));
  }

 private:
  static std::string rounds_csv_header() {
    return "round,mean_loss,test_accuracy,model_hash,record_hash,participants,defense_flags\n";
  }
  static std::string metrics_csv_header() { return "round,index,ssim,psnr,leaked\n"; }

  static std::string join(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      out += std::to_string(v[i]);
      if (i + 1 < v.size()) out += "|";
    }
    return out;
  }
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      out += v[i];
      if (i + 1 < v.size()) out += "|";
    }
    return out;
  }

  static std::string report_markdown(const experiment::RunResult& res) {
    std::string md = "# Run report: " + res.cfg.name + "\n\n";
    md += "- rounds: " + std::to_string(res.rounds.size()) + "\n";
    md += "- final test accuracy: " + format_g9(res.final_accuracy) + "\n";
    md += "- loss monitor flags: " + std::to_string(res.loss_flags.size()) + "\n";
    if (!res.extractions.empty()) {
      const auto& last = res.extractions.back().report;
      md += "- malicious client: " + std::to_string(res.malicious_client) + "\n\n";
      md += "| N | leakage | SSIM | PSNR |\n|---|---------|------|------|\n";
      md += "| " + std::to_string(res.cfg.atk.N) + " | " + std::to_string(last.leakage_count) +
            "/" + std::to_string(res.cfg.atk.N) + " | " + format_g9(last.ssim_mean) + " ± " +
            format_g9(last.ssim_std) + " | " + format_g9(last.psnr_mean) + " ± " +
            format_g9(last.psnr_std) + " |\n\n";
      md += "![reconstructions](report/recon_grid.png)\n\n";
      md += "![ssim](report/ssim.svg)\n\n";
    } else {
      md += "\nBenign run: no attack configured, no extractions.\n\n";
    }
    md += "![loss](report/loss.svg)\n\n![accuracy](report/accuracy.svg)\n";
    return md;
  }

  fs::path root_;
  std::string rounds_csv_;
  std::string metrics_csv_;
};

// ---- multi-run report ------------------------------------------------------

struct RunSummary {
  std::string dir;
  std::string name;
  std::size_t n = 0;
  bool attacked = false;
  int leakage_count = 0;
  double ssim_mean = 0.0;
  double psnr_mean = 0.0;
  double final_accuracy = 0.0;
  std::string defense_signature;
};

inline RunSummary load_summary(const fs::path& dir) {
  nlohmann::json j = nlohmann::json::parse(read_text(dir / "metrics.json"));
  nlohmann::json cfg = nlohmann::json::parse(read_text(dir / "config.json"));
  RunSummary s;
  s.dir = dir.string();
  s.name = j.value("name", std::string("run"));
  s.final_accuracy = j.value("final_accuracy", 0.0);
  s.attacked = j.contains("attack");
  if (s.attacked) {
    s.n = j["attack"].value("N", std::size_t(0));
    s.leakage_count = j["attack"].value("leakage_count", 0);
    s.ssim_mean = j["attack"].value("ssim_mean", 0.0);
    s.psnr_mean = j["attack"].value("psnr_mean", 0.0);
  }
  const auto& d = cfg.at("defense");
  if (d.value("enabled", false)) {
    if (d.value("prune_enabled", false)) {
      s.defense_signature += "prune(" + format_g9(d.value("prune_tau", 0.0)) + ") ";
    }
    if (d.value("clip_enabled", false)) {
      s.defense_signature += "clip(" + format_g9(d.value("clip_max_norm", 0.0)) + ") ";
    }
    if (d.value("noise_enabled", false)) {
      s.defense_signature += "noise(" + format_g9(d.value("noise_eps", 0.0)) + ") ";
    }
  }
  if (s.defense_signature.empty()) s.defense_signature = "none";
  while (!s.defense_signature.empty() && s.defense_signature.back() == ' ') {
    s.defense_signature.pop_back();
  }
  return s;
}

// Aggregated table across run dirs: one row per (N, defense) cell with
// mean +- std across repetitions; incompatible attack shapes get their own
// rows with a warning note.
inline std::string combined_report(const std::vector<RunSummary>& runs) {
  std::map<std::pair<std::size_t, std::string>, std::vector<const RunSummary*>> cells;
  std::vector<const RunSummary*> benign;
  for (const auto& r : runs) {
    if (r.attacked) {
      cells[{r.n, r.defense_signature}].push_back(&r);
    } else {
      benign.push_back(&r);
    }
  }
  std::string md = "# Combined report\n\n";
  md += std::to_string(runs.size()) + " run(s).\n\n";
  if (!cells.empty()) {
    md += "| N | defense | runs | leakage | SSIM | PSNR | accuracy |\n";
    md += "|---|---------|------|---------|------|------|----------|\n";
    for (const auto& [key, rs] : cells) {
      auto stat = [&](auto get) {
        double m = 0, m2 = 0;
        for (const auto* r : rs) {
          double v = get(*r);
          m += v;
          m2 += v * v;
        }
        m /= double(rs.size());
        double var = std::max(0.0, m2 / double(rs.size()) - m * m);
        return std::pair<double, double>(m, std::sqrt(var));
      };
      auto [lm, ls] = stat([](const RunSummary& r) { return double(r.leakage_count); });
      auto [sm, ss] = stat([](const RunSummary& r) { return r.ssim_mean; });
      auto [pm, ps] = stat([](const RunSummary& r) { return r.psnr_mean; });
      auto [am, as] = stat([](const RunSummary& r) { return r.final_accuracy; });
      md += "| " + std::to_string(key.first) + " | " + key.second + " | " +
            std::to_string(rs.size()) + " | " + format_g9(lm) + " ± " + format_g9(ls) + " | " +
            format_g9(sm) + " ± " + format_g9(ss) + " | " + format_g9(pm) + " ± " +
            format_g9(ps) + " | " + format_g9(am) + " ± " + format_g9(as) + " |\n";
    }
    md += "\n";
  }
  if (!benign.empty()) {
    md += "Benign runs:\n\n| name | accuracy |\n|------|----------|\n";
    for (const auto* r : benign) {
      md += "| " + r->name + " | " + format_g9(r->final_accuracy) + " |\n";
    }
    md += "\n";
  }
  std::map<std::string, int> names;
  for (const auto& r : runs) names[r.name]++;
  if (names.size() > 1 && runs.size() > 1) {
    md += "Note: runs carry different experiment names; cells above group strictly by (N, defense).\n";
  }
  return md;
}

}  // namespace fedlab::runio
