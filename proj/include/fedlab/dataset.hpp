#pragma once

// Datasets for the simulator: a procedural shapes generator (no downloads,
// fully seeded), a compact binary container, and an offline CIFAR-10 reader.

#include "fedlab/rng.hpp"
#include "fedlab/tensor.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedlab::dataset {

static_assert(std::endian::native == std::endian::little,
              "dataset files are little-endian");

struct Dataset {
  int classes = 0;
  int c = 0, h = 0, w = 0;
  std::vector<float> data;  // n * c * h * w, row-major per image
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_numel() const { return std::size_t(c) * h * w; }

  Tensor image(std::size_t i) const {
    Tensor t({c, h, w});
    std::copy_n(data.begin() + long(i * image_numel()), image_numel(), t.v.begin());
    return t;
  }

  Tensor batch(const std::vector<std::size_t>& indices) const {
    Tensor t({int(indices.size()), c, h, w});
    for (std::size_t b = 0; b < indices.size(); ++b) {
      std::copy_n(data.begin() + long(indices[b] * image_numel()), image_numel(),
                  t.v.begin() + long(b * image_numel()));
    }
    return t;
  }
};

struct DatasetBundle {
  Dataset train;
  Dataset test;
};

// Procedural "shapes" images: a tinted geometric figure over a soft vertical
// gradient, lightly noised. Classes cycle by index, so histograms are exactly
// balanced. 2-class mode uses the two most separable figures.
inline Dataset make_shapes(std::size_t n, int classes, int resolution, std::uint64_t seed) {
  if (classes != 2 && classes != 4) {
    throw std::invalid_argument("shapes: classes must be 2 or 4");
  }
  if (resolution < 8) throw std::invalid_argument("shapes: resolution too small");
  Dataset ds;
  ds.classes = classes;
  ds.c = 3;
  ds.h = resolution;
  ds.w = resolution;
  ds.labels.resize(n);
  ds.data.resize(n * ds.image_numel());

  const int d = resolution;
  for (std::size_t i = 0; i < n; ++i) {
    int label = int(i % std::size_t(classes));
    ds.labels[i] = label;
    int kind = classes == 2 ? (label == 0 ? 0 : 2) : label;
    Rng rng = derive_rng(seed, "shapes", i);

    double bg_top = rng.uniform(0.10, 0.40), bg_bot = rng.uniform(0.10, 0.40);
    double fg = rng.uniform(0.60, 0.90);
    double tint[3], back[3];
    for (int ch = 0; ch < 3; ++ch) tint[ch] = rng.uniform(0.70, 1.00);
    for (int ch = 0; ch < 3; ++ch) back[ch] = rng.uniform(0.80, 1.00);

    double cx = rng.uniform(0.30, 0.70) * d, cy = rng.uniform(0.30, 0.70) * d;
    double radius = rng.uniform(0.15, 0.30) * d;
    double half = rng.uniform(0.15, 0.28) * d;
    int period = 2 + int(rng.uniform_int(4));  // 2..5 rows per band
    int phase = int(rng.uniform_int(std::uint64_t(2 * period)));
    double router = rng.uniform(0.20, 0.35) * d;
    double rinner = router - rng.uniform(0.06, 0.14) * d;

    float* img = ds.data.data() + i * ds.image_numel();
    for (int y = 0; y < d; ++y) {
      for (int x = 0; x < d; ++x) {
        bool inside = false;
        double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        switch (kind) {
          case 0: inside = dx * dx + dy * dy <= radius * radius; break;
          case 1: inside = std::abs(dx) <= half && std::abs(dy) <= half; break;
          case 2: inside = ((y + phase) / period) % 2 == 0; break;
          default: {
            double r2 = dx * dx + dy * dy;
            inside = r2 <= router * router && r2 >= rinner * rinner;
            break;
          }
        }
        double base = bg_top + (bg_bot - bg_top) * (double(y) / double(d - 1));
        for (int ch = 0; ch < 3; ++ch) {
          double v = inside ? fg * tint[ch] : base * back[ch];
          v += rng.normal(0.0, 0.02);
          v = std::min(0.95, std::max(0.05, v));
          img[std::size_t(ch) * d * d + std::size_t(y) * d + x] = float(v);
        }
      }
    }
  }
  return ds;
}

// ===== container: FLDS v1 ====================================================
// magic "FLDS" | u32 version | u32 n | u32 c | u32 h | u32 w | u32 classes |
// n x u32 labels | n*c*h*w x f32 data. All little-endian.

namespace detail {

inline void put_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

inline std::uint32_t get_u32(std::istream& in, const std::string& what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) {
    throw std::runtime_error("dataset file truncated reading " + what);
  }
  return v;
}

}  // namespace detail

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  out.write("FLDS", 4);
  detail::put_u32(out, 1);
  detail::put_u32(out, std::uint32_t(ds.size()));
  detail::put_u32(out, std::uint32_t(ds.c));
  detail::put_u32(out, std::uint32_t(ds.h));
  detail::put_u32(out, std::uint32_t(ds.w));
  detail::put_u32(out, std::uint32_t(ds.classes));
  for (int lbl : ds.labels) detail::put_u32(out, std::uint32_t(lbl));
  out.write(reinterpret_cast<const char*>(ds.data.data()), long(ds.data.size() * 4));
  if (!out) throw std::runtime_error("short write to dataset file: " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "FLDS", 4) != 0) {
    throw std::runtime_error("not an FLDS dataset file: " + path);
  }
  std::uint32_t version = detail::get_u32(in, "version");
  if (version != 1) {
    throw std::runtime_error("unsupported FLDS version " + std::to_string(version));
  }
  Dataset ds;
  std::uint32_t n = detail::get_u32(in, "count");
  ds.c = int(detail::get_u32(in, "channels"));
  ds.h = int(detail::get_u32(in, "height"));
  ds.w = int(detail::get_u32(in, "width"));
  ds.classes = int(detail::get_u32(in, "classes"));
  ds.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    ds.labels[i] = int(detail::get_u32(in, "labels"));
  }
  ds.data.resize(std::size_t(n) * ds.image_numel());
  if (!in.read(reinterpret_cast<char*>(ds.data.data()), long(ds.data.size() * 4))) {
    throw std::runtime_error("dataset file truncated reading pixel data: " + path);
  }
  return ds;
}

// ===== CIFAR-10 binary reader ================================================
// Standard layout: per record 1 label byte + 3072 pixel bytes (R, G, B planes,
// each 32x32 row-major). Never downloads anything.

namespace detail {

inline void read_cifar_file(const std::filesystem::path& file, Dataset& ds) {
  std::ifstream in(file, std::ios::binary);
  in.seekg(0, std::ios::end);
  std::streamoff size = in.tellg();
  in.seekg(0);
  if (size % 3073 != 0) {
    throw std::runtime_error("malformed CIFAR-10 file (size not a multiple of 3073): " +
                             file.string());
  }
  std::size_t records = std::size_t(size / 3073);
  std::vector<unsigned char> rec(3073);
  for (std::size_t r = 0; r < records; ++r) {
    if (!in.read(reinterpret_cast<char*>(rec.data()), 3073)) {
      throw std::runtime_error("short read from " + file.string());
    }
    ds.labels.push_back(int(rec[0]));
    for (int i = 0; i < 3072; ++i) ds.data.push_back(float(rec[1 + i]) / 255.0f);
  }
}

}  // namespace detail

inline DatasetBundle load_cifar10(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> train_files;
  for (int b = 1; b <= 5; ++b) train_files.push_back("data_batch_" + std::to_string(b) + ".bin");

  for (const std::string& f : train_files) {
    if (!fs::exists(fs::path(dir) / f)) {
      throw std::runtime_error(
          "CIFAR-10 binary files not found in " + dir + ": expected " + f +
          " (and data_batch_2..5.bin, test_batch.bin). Unpack the official "
          "\"CIFAR-10 binary version\" archive there; nothing is downloaded "
          "automatically.");
    }
  }
  if (!fs::exists(fs::path(dir) / "test_batch.bin")) {
    throw std::runtime_error("CIFAR-10 test_batch.bin not found in " + dir);
  }

  DatasetBundle bundle;
  for (Dataset* ds : {&bundle.train, &bundle.test}) {
    ds->classes = 10;
    ds->c = 3;
    ds->h = 32;
    ds->w = 32;
  }
  for (const std::string& f : train_files) {
    detail::read_cifar_file(std::filesystem::path(dir) / f, bundle.train);
  }
  detail::read_cifar_file(std::filesystem::path(dir) / "test_batch.bin", bundle.test);
  return bundle;
}

// ===== preparation ===========================================================

struct DatasetSpec {
  std::string name = "shapes";  // "shapes" or "cifar10"
  int classes = 4;
  int resolution = 32;
  std::size_t subset = 800;
  std::string normalization = "unit";
  std::string source_dir;  // cifar10 only
};

inline std::vector<std::size_t> subset_indices(std::size_t total, std::size_t subset,
                                               std::uint64_t seed) {
  if (subset > total) {
    throw std::runtime_error("subset " + std::to_string(subset) +
                             " exceeds available samples " + std::to_string(total));
  }
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = derive_rng(seed, "dataset.subset");
  rng.shuffle(idx);
  idx.resize(subset);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline Dataset take(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.classes = ds.classes;
  out.c = ds.c;
  out.h = ds.h;
  out.w = ds.w;
  for (std::size_t i : indices) {
    out.labels.push_back(ds.labels[i]);
    out.data.insert(out.data.end(), ds.data.begin() + long(i * ds.image_numel()),
                    ds.data.begin() + long((i + 1) * ds.image_numel()));
  }
  return out;
}

inline DatasetBundle prepare_dataset(const DatasetSpec& spec, std::uint64_t seed,
                                     const std::string& outdir) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir);

  DatasetBundle bundle;
  std::vector<std::size_t> indices;
  if (spec.name == "shapes") {
    bundle.train = make_shapes(spec.subset, spec.classes, spec.resolution,
                               derive_rng(seed, "dataset.train").next_u64());
    std::size_t test_n = std::max<std::size_t>(spec.subset / 5, std::size_t(spec.classes) * 5);
    bundle.test = make_shapes(test_n, spec.classes, spec.resolution,
                              derive_rng(seed, "dataset.test").next_u64());
    indices.resize(spec.subset);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
  } else if (spec.name == "cifar10") {
    DatasetBundle full = load_cifar10(spec.source_dir);
    indices = subset_indices(full.train.size(), spec.subset, seed);
    bundle.train = take(full.train, indices);
    std::size_t test_n = std::min<std::size_t>(full.test.size(),
                                               std::max<std::size_t>(spec.subset / 5, 50));
    bundle.test = take(full.test, subset_indices(full.test.size(), test_n, seed + 1));
  } else {
    throw std::runtime_error("unknown dataset name: " + spec.name +
                             " (expected \"shapes\" or \"cifar10\")");
  }

  save_dataset((fs::path(outdir) / "train.flds").string(), bundle.train);
  save_dataset((fs::path(outdir) / "test.flds").string(), bundle.test);

  nlohmann::json manifest;
  manifest["name"] = spec.name;
  manifest["classes"] = bundle.train.classes;
  manifest["resolution"] = bundle.train.h;
  manifest["channels"] = bundle.train.c;
  manifest["subset"] = spec.subset;
  manifest["normalization"] = spec.normalization;
  manifest["seed"] = seed;
  manifest["train_count"] = bundle.train.size();
  manifest["test_count"] = bundle.test.size();
  manifest["indices"] = indices;
  std::ofstream mf(fs::path(outdir) / "manifest.json");
  mf << manifest.dump(2) << "\n";

  return bundle;
}

inline DatasetBundle load_prepared(const std::string& dir) {
  namespace fs = std::filesystem;
  DatasetBundle bundle;
  bundle.train = load_dataset((fs::path(dir) / "train.flds").string());
  bundle.test = load_dataset((fs::path(dir) / "test.flds").string());
  return bundle;
}

}  // namespace fedlab::dataset
