#include <catch2/catch_amalgamated.hpp>

#include "fedlab/dataset.hpp"
#include "fedlab/tensor.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

using namespace fedlab;
using namespace fedlab::dataset;
namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("procedural generator is deterministic, balanced, and in range") {
  Dataset a = make_shapes(40, 4, 32, 9001);
  Dataset b = make_shapes(40, 4, 32, 9001);
  Dataset c = make_shapes(40, 4, 32, 9002);
  REQUIRE(a.data == b.data);
  REQUIRE(a.labels == b.labels);
  REQUIRE(a.data != c.data);

  REQUIRE(a.size() == 40);
  REQUIRE(a.c == 3);
  REQUIRE(a.h == 32);
  REQUIRE(a.w == 32);
  REQUIRE(a.classes == 4);

  std::vector<int> hist(4, 0);
  for (int lbl : a.labels) {
    REQUIRE(lbl >= 0);
    REQUIRE(lbl < 4);
    hist[lbl]++;
  }
  for (int h : hist) REQUIRE(h == 10);

  for (float v : a.data) {
    REQUIRE(v >= 0.05f);
    REQUIRE(v <= 0.95f);
  }

  // same class, different samples: geometry varies
  Tensor s0 = a.image(0);
  Tensor s4 = a.image(4);
  REQUIRE(a.labels[0] == a.labels[4]);
  REQUIRE(s0.v != s4.v);
}

TEST_CASE("batch assembly stacks images in index order") {
  Dataset ds = make_shapes(6, 2, 16, 5);
  Tensor b = ds.batch({0, 3, 5});
  REQUIRE(b.shape == std::vector<int>{3, 3, 16, 16});
  Tensor x3 = ds.image(3);
  for (std::size_t i = 0; i < x3.v.size(); ++i) {
    REQUIRE(b.v[x3.v.size() + i] == x3.v[i]);
  }
}

TEST_CASE("dataset files round-trip bit-exact") {
  Dataset ds = make_shapes(12, 4, 16, 77);
  fs::path dir = fresh_dir("fedlab_ds_roundtrip");
  fs::path file = dir / "toy.flds";
  save_dataset(file.string(), ds);
  Dataset back = load_dataset(file.string());
  REQUIRE(back.data == ds.data);
  REQUIRE(back.labels == ds.labels);
  REQUIRE(back.c == ds.c);
  REQUIRE(back.h == ds.h);
  REQUIRE(back.w == ds.w);
  REQUIRE(back.classes == ds.classes);
}

TEST_CASE("dataset file header layout is pinned") {
  Dataset ds;
  ds.classes = 2;
  ds.c = 1;
  ds.h = 2;
  ds.w = 2;
  ds.labels = {0, 1};
  ds.data.resize(8);
  for (int i = 0; i < 8; ++i) ds.data[i] = float(i) / 7.0f;

  fs::path dir = fresh_dir("fedlab_ds_header");
  fs::path file = dir / "tiny.flds";
  save_dataset(file.string(), ds);
  std::vector<unsigned char> bytes = slurp(file);
  REQUIRE(bytes.size() == 28 + 2 * 4 + 8 * 4);
  const unsigned char expect[28] = {
      'F', 'L', 'D', 'S', 1, 0, 0, 0,  // magic, version
      2,   0,   0,   0,                // n
      1,   0,   0,   0,                // channels
      2,   0,   0,   0,                // height
      2,   0,   0,   0,                // width
      2,   0,   0,   0,                // classes
  };
  for (int i = 0; i < 28; ++i) {
    INFO("byte " << i);
    REQUIRE(bytes[std::size_t(i)] == expect[i]);
  }
  // labels follow as little-endian u32
  REQUIRE(bytes[28] == 0);
  REQUIRE(bytes[32] == 1);
}

TEST_CASE("dataset loader rejects malformed files") {
  fs::path dir = fresh_dir("fedlab_ds_bad");
  fs::path bad_magic = dir / "bad.flds";
  {
    std::ofstream out(bad_magic, std::ios::binary);
    out << "NOPE" << std::string(64, '\0');
  }
  REQUIRE_THROWS_WITH(load_dataset(bad_magic.string()),
                      Catch::Matchers::ContainsSubstring("FLDS"));

  Dataset ds = make_shapes(4, 2, 8, 3);
  fs::path good = dir / "good.flds";
  save_dataset(good.string(), ds);
  std::vector<unsigned char> bytes = slurp(good);
  fs::path truncated = dir / "short.flds";
  {
    std::ofstream out(truncated, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), long(bytes.size() / 2));
  }
  REQUIRE_THROWS_AS(load_dataset(truncated.string()), std::runtime_error);

  REQUIRE_THROWS_AS(load_dataset((dir / "absent.flds").string()), std::runtime_error);
}

TEST_CASE("cifar10 loader reads the standard binary layout") {
  fs::path dir = fresh_dir("fedlab_ds_cifar");
  // two records in data_batch_1, one in test_batch; empty batches 2..5
  auto write_record = [](std::ofstream& out, unsigned char label, unsigned char base) {
    out.put(char(label));
    for (int i = 0; i < 3072; ++i) out.put(char((base + i) % 256));
  };
  for (int b = 1; b <= 5; ++b) {
    std::ofstream out(dir / ("data_batch_" + std::to_string(b) + ".bin"), std::ios::binary);
    if (b == 1) {
      write_record(out, 3, 0);
      write_record(out, 7, 100);
    }
  }
  {
    std::ofstream out(dir / "test_batch.bin", std::ios::binary);
    write_record(out, 1, 50);
  }

  DatasetBundle bundle = load_cifar10(dir.string());
  REQUIRE(bundle.train.size() == 2);
  REQUIRE(bundle.test.size() == 1);
  REQUIRE(bundle.train.labels == std::vector<int>{3, 7});
  REQUIRE(bundle.test.labels == std::vector<int>{1});
  REQUIRE(bundle.train.c == 3);
  REQUIRE(bundle.train.h == 32);
  REQUIRE(bundle.train.w == 32);
  REQUIRE(bundle.train.classes == 10);
  // first record: pixel value i/255 in channel-major order
  REQUIRE(bundle.train.data[0] == 0.0f);
  REQUIRE(bundle.train.data[1] == Catch::Approx(1.0 / 255.0));
  REQUIRE(bundle.train.data[255] == Catch::Approx(255.0 / 255.0));
  REQUIRE(bundle.train.data[256] == 0.0f);  // (0+256)%256
}

TEST_CASE("cifar10 loader refuses to guess at missing files") {
  fs::path dir = fresh_dir("fedlab_ds_cifar_missing");
  try {
    load_cifar10(dir.string());
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    std::string what = e.what();
    CHECK(what.find("data_batch_1.bin") != std::string::npos);
    CHECK(what.find(dir.string()) != std::string::npos);
  }
}

TEST_CASE("prepare writes a manifest and reproducible files") {
  DatasetSpec spec;
  spec.name = "shapes";
  spec.classes = 2;
  spec.resolution = 16;
  spec.subset = 30;

  fs::path out1 = fresh_dir("fedlab_ds_prep1");
  fs::path out2 = fresh_dir("fedlab_ds_prep2");
  prepare_dataset(spec, 42, out1.string());
  prepare_dataset(spec, 42, out2.string());

  REQUIRE(fs::exists(out1 / "train.flds"));
  REQUIRE(fs::exists(out1 / "test.flds"));
  REQUIRE(fs::exists(out1 / "manifest.json"));

  std::vector<unsigned char> t1 = slurp(out1 / "train.flds");
  std::vector<unsigned char> t2 = slurp(out2 / "train.flds");
  REQUIRE(fnv1a64(t1.data(), t1.size()) == fnv1a64(t2.data(), t2.size()));

  Dataset train = load_dataset((out1 / "train.flds").string());
  REQUIRE(train.size() == 30);

  std::ifstream mf(out1 / "manifest.json");
  std::string manifest((std::istreambuf_iterator<char>(mf)), {});
  CHECK(manifest.find("\"shapes\"") != std::string::npos);
  CHECK(manifest.find("\"indices\"") != std::string::npos);

  // the manifest index list is sorted and has exactly `subset` entries
  auto pos = manifest.find("\"indices\"");
  REQUIRE(pos != std::string::npos);
  auto lb = manifest.find('[', pos);
  auto rb = manifest.find(']', lb);
  std::string inner = manifest.substr(lb + 1, rb - lb - 1);
  std::vector<long> idx;
  long cur = 0;
  bool have = false;
  for (char ch : inner) {
    if (ch >= '0' && ch <= '9') {
      cur = cur * 10 + (ch - '0');
      have = true;
    } else if (have) {
      idx.push_back(cur);
      cur = 0;
      have = false;
    }
  }
  if (have) idx.push_back(cur);
  REQUIRE(idx.size() == 30);
  for (std::size_t i = 1; i < idx.size(); ++i) REQUIRE(idx[i] > idx[i - 1]);
}
