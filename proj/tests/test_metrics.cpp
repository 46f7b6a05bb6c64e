#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fedlab/metrics.hpp"
#include "fedlab/rng.hpp"

using fedlab::blockgrid::ImageD;
using fedlab::metrics::IdentityExtractor;
using fedlab::metrics::leakage;
using fedlab::metrics::lpips;
using fedlab::metrics::psnr;
using fedlab::metrics::ssim;

namespace {

// Smooth structured test image: diagonal ramp plus a soft disk.
ImageD structured(int c, int h, int w, double phase) {
  ImageD img(c, h, w);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double ramp = 0.5 + 0.4 * std::sin(phase + 0.3 * (x + y) + 0.7 * ch);
        double dx = (x - w / 2.0) / w, dy = (y - h / 2.0) / h;
        double disk = std::exp(-20.0 * (dx * dx + dy * dy));
        img.at(ch, y, x) = std::min(1.0, std::max(0.0, 0.6 * ramp + 0.4 * disk));
      }
  return img;
}

ImageD add_noise(const ImageD& img, double amp, std::uint64_t seed) {
  ImageD out = img;
  fedlab::Rng rng(seed);
  for (auto& v : out.v) v = std::min(1.0, std::max(0.0, v + rng.uniform(-amp, amp)));
  return out;
}

}  // namespace

TEST_CASE("ssim identity, symmetry, range") {
  ImageD a = structured(3, 32, 32, 0.1);
  ImageD b = add_noise(a, 0.2, 7);
  REQUIRE(ssim(a, a) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(ssim(a, b) == Catch::Approx(ssim(b, a)).margin(1e-9));
  double s = ssim(a, b);
  REQUIRE(s >= -1.0);
  REQUIRE(s <= 1.0);
}

TEST_CASE("ssim of inverted binary image is far from 1") {
  ImageD x(1, 32, 32);
  for (int y = 0; y < 32; ++y)
    for (int c = 0; c < 32; ++c) x.at(0, y, c) = ((y / 4 + c / 4) % 2) ? 1.0 : 0.0;
  ImageD inv = x;
  for (auto& v : inv.v) v = 1.0 - v;
  REQUIRE(ssim(x, inv) < 0.2);
}

TEST_CASE("ssim input validation") {
  ImageD a = structured(1, 32, 32, 0.0);
  ImageD b = structured(1, 16, 16, 0.0);
  REQUIRE_THROWS_AS(ssim(a, b), std::invalid_argument);
  ImageD tiny = structured(1, 8, 8, 0.0);  // smaller than the 11x11 window
  REQUIRE_THROWS_AS(ssim(tiny, tiny), std::invalid_argument);
}

TEST_CASE("psnr closed-form values") {
  ImageD a = structured(3, 16, 16, 0.3);
  REQUIRE(psnr(a, a) == 100.0);
  ImageD off = a;
  for (auto& v : off.v) v += 0.1;  // constant offset -> MSE exactly 0.01
  REQUIRE(psnr(a, off) == Catch::Approx(20.0).epsilon(1e-9));
  ImageD c = structured(1, 16, 16, 0.0);
  REQUIRE_THROWS_AS(psnr(a, c), std::invalid_argument);
}

TEST_CASE("ssim and psnr fall together under growing noise") {
  ImageD a = structured(3, 32, 32, 0.5);
  double prev_ssim = 2.0, prev_psnr = 1e9;
  for (double amp : {0.02, 0.05, 0.1, 0.2, 0.4}) {
    ImageD noisy = add_noise(a, amp, 11);
    double s = ssim(a, noisy), p = psnr(a, noisy);
    REQUIRE(s <= prev_ssim + 1e-12);
    REQUIRE(p <= prev_psnr + 1e-12);
    prev_ssim = s;
    prev_psnr = p;
  }
}

TEST_CASE("lpips plug-in interface") {
  ImageD a = structured(3, 16, 16, 0.2);
  ImageD b = add_noise(a, 0.1, 3);
  REQUIRE_FALSE(lpips(a, b, nullptr).has_value());  // unavailable, never fabricated

  IdentityExtractor id;
  auto d = lpips(a, b, &id);
  REQUIRE(d.has_value());
  double l2 = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) l2 += (a.v[i] - b.v[i]) * (a.v[i] - b.v[i]);
  REQUIRE(*d == Catch::Approx(l2).epsilon(1e-12));
  REQUIRE(*lpips(a, a, &id) == 0.0);
  REQUIRE(*lpips(b, a, &id) == Catch::Approx(*d).epsilon(1e-12));
}

TEST_CASE("leakage report over perfect reconstructions") {
  std::vector<ImageD> targets, recons;
  for (int i = 0; i < 16; ++i) {
    targets.push_back(structured(3, 32, 32, 0.1 * i));
    recons.push_back(targets.back());
  }
  auto rep = leakage(recons, targets, 0.6);
  REQUIRE(rep.leakage_count == 16);
  REQUIRE(rep.leakage_rate == 1.0);
  REQUIRE(rep.ssim_mean == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(rep.ssim_std == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(rep.rows.size() == 16);
  REQUIRE(rep.rows[0].index == 1);
}

TEST_CASE("leakage report over noise reconstructions") {
  std::vector<ImageD> targets, recons;
  fedlab::Rng rng(5);
  for (int i = 0; i < 16; ++i) {
    targets.push_back(structured(3, 32, 32, 0.2 * i));
    ImageD junk(3, 32, 32);
    for (auto& v : junk.v) v = rng.uniform();
    recons.push_back(junk);
  }
  auto rep = leakage(recons, targets, 0.6);
  REQUIRE(rep.leakage_count == 0);
  REQUIRE(rep.leakage_rate == 0.0);
  // degenerate criterion: any threshold <= 0 marks everything leaked
  REQUIRE(leakage(recons, targets, 0.0).leakage_rate == 1.0);
}

TEST_CASE("leakage validates lengths and recomputes aggregates from rows") {
  std::vector<ImageD> targets = {structured(1, 16, 16, 0.0)};
  std::vector<ImageD> recons;
  REQUIRE_THROWS_AS(leakage(recons, targets, 0.6), std::invalid_argument);

  for (int i = 0; i < 8; ++i) {
    targets.push_back(structured(1, 16, 16, 0.3 * i));
    }
  targets.erase(targets.begin());
  for (int i = 0; i < 8; ++i) recons.push_back(add_noise(targets[i], 0.05 * i, 70 + i));
  auto rep = leakage(recons, targets, 0.6);
  double mean = 0.0;
  int count = 0;
  for (const auto& r : rep.rows) {
    mean += r.ssim;
    count += r.leaked ? 1 : 0;
  }
  mean /= double(rep.rows.size());
  REQUIRE(rep.ssim_mean == Catch::Approx(mean).margin(1e-12));
  REQUIRE(rep.leakage_count == count);
  REQUIRE(rep.leakage_rate == Catch::Approx(double(count) / 8.0).margin(1e-12));
}

TEST_CASE("report serialization has stable columns") {
  std::vector<ImageD> targets, recons;
  for (int i = 0; i < 3; ++i) {
    targets.push_back(structured(1, 16, 16, 0.4 * i));
    recons.push_back(add_noise(targets.back(), 0.02, 90 + i));
  }
  auto rep = leakage(recons, targets, 0.6);
  std::string csv = fedlab::metrics::to_csv(rep);
  REQUIRE(csv.rfind("index,ssim,psnr,lpips,leaked\n", 0) == 0);
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 3 rows
  auto j = fedlab::metrics::to_json(rep);
  REQUIRE(j["rows"].size() == 3);
  REQUIRE(j["leakage_count"].get<int>() == rep.leakage_count);
  REQUIRE(j["rows"][0].contains("ssim"));
  REQUIRE(j["rows"][0]["lpips"].is_null());
}
