#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "fedlab/blockgrid.hpp"
#include "fedlab/rng.hpp"

using fedlab::blockgrid::BlockSet;
using fedlab::blockgrid::ImageD;
using fedlab::blockgrid::partition;
using fedlab::blockgrid::reassemble;
using fedlab::blockgrid::variation_loss;
using fedlab::blockgrid::variation_loss_grad;

namespace {

ImageD random_image(int c, int h, int w, std::uint64_t seed) {
  ImageD img(c, h, w);
  fedlab::Rng rng(seed);
  for (auto& x : img.v) x = rng.uniform();
  return img;
}

}  // namespace

TEST_CASE("partition grid shapes") {
  ImageD a = random_image(3, 32, 32, 1);
  BlockSet bs = partition(a, 16);
  REQUIRE(bs.layout.rows == 2);
  REQUIRE(bs.layout.cols == 2);
  REQUIRE(bs.blocks.size() == 4);
  ImageD b = random_image(3, 224, 224, 2);
  REQUIRE(partition(b, 28).blocks.size() == 64);
}

TEST_CASE("partition errors") {
  ImageD a = random_image(1, 8, 8, 3);
  REQUIRE_THROWS_AS(partition(a, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(partition(a, -2), std::invalid_argument);
  REQUIRE_THROWS_AS(partition(a, 9), std::invalid_argument);
}

TEST_CASE("partition/reassemble round-trips bit-exact") {
  for (int s : {4, 8, 16, 28, 32}) {
    ImageD x64 = random_image(3, 64, 64, 100 + s);
    REQUIRE(reassemble(partition(x64, s)) == x64);
    ImageD x224 = random_image(3, 224, 224, 200 + s);
    REQUIRE(reassemble(partition(x224, s)) == x224);
  }
}

TEST_CASE("non-divisible shapes are padded and stripped") {
  // 50x50 with s=28 pads to 56x56, 2x2 grid; reassemble strips back.
  ImageD x = random_image(3, 50, 50, 42);
  BlockSet bs = partition(x, 28);
  REQUIRE(bs.layout.rows == 2);
  REQUIRE(bs.layout.cols == 2);
  REQUIRE(bs.layout.padded_h == 56);
  REQUIRE(bs.layout.padded_w == 56);
  for (const auto& b : bs.blocks) {
    REQUIRE(b.h == 28);
    REQUIRE(b.w == 28);
  }
  // bottom-right block is mostly padding; its last row must be zero
  const ImageD& br = bs.blocks.back();
  for (int c = 0; c < br.c; ++c)
    for (int wx = 0; wx < br.w; ++wx) REQUIRE(br.at(c, 27, wx) == 0.0);
  REQUIRE(reassemble(bs) == x);
}

TEST_CASE("reassemble validates block count") {
  ImageD x = random_image(1, 8, 8, 7);
  BlockSet bs = partition(x, 4);
  bs.blocks.pop_back();
  REQUIRE_THROWS_WITH(reassemble(bs), Catch::Matchers::ContainsSubstring("4"));
  BlockSet bs2 = partition(x, 4);
  bs2.blocks.push_back(bs2.blocks[0]);
  REQUIRE_THROWS_AS(reassemble(bs2), std::invalid_argument);
}

TEST_CASE("reassemble of constant blocks and order sensitivity") {
  ImageD x = random_image(1, 8, 8, 9);
  BlockSet bs = partition(x, 4);
  for (auto& b : bs.blocks)
    for (auto& v : b.v) v = 0.5;
  ImageD out = reassemble(bs);
  for (double v : out.v) REQUIRE(v == 0.5);

  BlockSet bs2 = partition(x, 4);
  std::swap(bs2.blocks[0], bs2.blocks[3]);
  REQUIRE(reassemble(bs2) != x);
}

TEST_CASE("variation loss hand-derived value") {
  // 1x1x4x4, every column reads (0,0,1,1) top to bottom, s=2, lambda=1.
  // Single internal row seam contributes (0-1)^2 per column = 4; the column
  // seam contributes 0. Normalizer B*C*H*W = 16. Frozen value: 4/16 = 0.25.
  ImageD img(1, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img.at(0, y, x) = (y >= 2) ? 1.0 : 0.0;
  std::vector<ImageD> batch = {img};
  REQUIRE(variation_loss(batch, 2, 1.0) == Catch::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("variation loss trivial cases") {
  ImageD img(2, 8, 8);
  for (auto& v : img.v) v = 0.37;
  std::vector<ImageD> batch = {img};
  REQUIRE(variation_loss(batch, 4, 3.0) == 0.0);
  // single block: no seams
  ImageD r = random_image(2, 8, 8, 11);
  std::vector<ImageD> rb = {r};
  REQUIRE(variation_loss(rb, 8, 1.0) == 0.0);
  REQUIRE(variation_loss(rb, 16, 1.0) == 0.0);  // s past the image: no seams either
}

TEST_CASE("variation loss scaling laws") {
  ImageD r = random_image(3, 8, 8, 12);
  std::vector<ImageD> batch = {r};
  double base = variation_loss(batch, 4, 1.0);
  REQUIRE(base > 0.0);
  REQUIRE(variation_loss(batch, 4, 2.5) == Catch::Approx(2.5 * base).epsilon(1e-12));
  ImageD scaled = r;
  for (auto& v : scaled.v) v *= 3.0;
  std::vector<ImageD> sb = {scaled};
  REQUIRE(variation_loss(sb, 4, 1.0) == Catch::Approx(9.0 * base).epsilon(1e-10));
}

TEST_CASE("variation loss gradient matches central differences") {
  auto check = [](std::vector<ImageD> batch, int s) {
    const double lambda = 0.7;
    std::vector<ImageD> grad = variation_loss_grad(batch, s, lambda);
    REQUIRE(grad.size() == batch.size());
    const double h = 1e-5;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      for (std::size_t i = 0; i < batch[b].v.size(); ++i) {
        double keep = batch[b].v[i];
        batch[b].v[i] = keep + h;
        double up = variation_loss(batch, s, lambda);
        batch[b].v[i] = keep - h;
        double dn = variation_loss(batch, s, lambda);
        batch[b].v[i] = keep;
        double fd = (up - dn) / (2 * h);
        double an = grad[b].v[i];
        double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
        REQUIRE(std::abs(fd - an) / denom < 1e-4);
      }
    }
  };
  check({random_image(1, 4, 4, 21)}, 2);
  check({random_image(3, 8, 8, 22), random_image(3, 8, 8, 23)}, 4);
}
