// fedlab/metrics.hpp - reconstruction quality: SSIM, PSNR, LPIPS hook, leakage.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedlab/blockgrid.hpp"

namespace fedlab::metrics {

using blockgrid::ImageD;

// ===== SSIM ==================================================================

struct SsimParams {
  double alpha = 1.0, beta = 1.0, gamma = 1.0;  // exponent overrides
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01, k2 = 0.03;
  double L = 1.0;  // dynamic range of normalized images
};

namespace detail {

inline std::vector<double> gaussian_kernel(int n, double sigma) {
  std::vector<double> k(n);
  double sum = 0.0;
  int half = n / 2;
  for (int i = 0; i < n; ++i) {
    double d = i - half;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable valid-mode filtering of one channel plane.
inline std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w,
                                        const std::vector<double>& k) {
  const int n = int(k.size());
  const int oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(std::size_t(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * plane[std::size_t(y) * w + x + i];
      rows[std::size_t(y) * ow + x] = acc;
    }
  std::vector<double> out(std::size_t(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * rows[std::size_t(y + i) * ow + x];
      out[std::size_t(y) * ow + x] = acc;
    }
  return out;
}

inline double signed_pow(double x, double e) {
  if (e == 1.0) return x;
  return (x < 0 ? -1.0 : 1.0) * std::pow(std::abs(x), e);
}

}  // namespace detail

// Single-scale SSIM, Gaussian-window statistics over the valid region,
// averaged over channels. With alpha=beta=gamma=1 this is the standard
// two-factor formula; other exponents use the luminance/contrast/structure
// factorization with C3 = C2/2.
inline double ssim(const ImageD& a, const ImageD& b, const SsimParams& p = {}) {
  if (a.c != b.c || a.h != b.h || a.w != b.w)
    throw std::invalid_argument("ssim: shape mismatch");
  if (a.h < p.window || a.w < p.window)
    throw std::invalid_argument("ssim: image smaller than the filter window");
  const double C1 = (p.k1 * p.L) * (p.k1 * p.L);
  const double C2 = (p.k2 * p.L) * (p.k2 * p.L);
  const double C3 = C2 / 2.0;
  auto kernel = detail::gaussian_kernel(p.window, p.sigma);
  const bool plain = (p.alpha == 1.0 && p.beta == 1.0 && p.gamma == 1.0);

  double total = 0.0;
  const std::size_t plane_sz = std::size_t(a.h) * a.w;
  std::vector<double> pa(plane_sz), pb(plane_sz), paa(plane_sz), pbb(plane_sz), pab(plane_sz);
  for (int c = 0; c < a.c; ++c) {
    const double* av = a.v.data() + c * plane_sz;
    const double* bv = b.v.data() + c * plane_sz;
    for (std::size_t i = 0; i < plane_sz; ++i) {
      pa[i] = av[i];
      pb[i] = bv[i];
      paa[i] = av[i] * av[i];
      pbb[i] = bv[i] * bv[i];
      pab[i] = av[i] * bv[i];
    }
    auto mu_a = detail::filter_valid(pa, a.h, a.w, kernel);
    auto mu_b = detail::filter_valid(pb, a.h, a.w, kernel);
    auto m_aa = detail::filter_valid(paa, a.h, a.w, kernel);
    auto m_bb = detail::filter_valid(pbb, a.h, a.w, kernel);
    auto m_ab = detail::filter_valid(pab, a.h, a.w, kernel);
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = std::max(0.0, m_aa[i] - ma * ma);
      const double vb = std::max(0.0, m_bb[i] - mb * mb);
      const double cov = m_ab[i] - ma * mb;
      if (plain) {
        acc += ((2 * ma * mb + C1) * (2 * cov + C2)) /
               ((ma * ma + mb * mb + C1) * (va + vb + C2));
      } else {
        const double sa = std::sqrt(va), sb = std::sqrt(vb);
        const double lum = (2 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        const double con = (2 * sa * sb + C2) / (va + vb + C2);
        const double str = (cov + C3) / (sa * sb + C3);
        acc += detail::signed_pow(lum, p.alpha) * detail::signed_pow(con, p.beta) *
               detail::signed_pow(str, p.gamma);
      }
    }
    total += acc / double(mu_a.size());
  }
  return total / a.c;
}

// ===== PSNR ==================================================================

inline constexpr double kPsnrCap = 100.0;

inline double psnr(const ImageD& a, const ImageD& b, double peak = 1.0) {
  if (a.c != b.c || a.h != b.h || a.w != b.w)
    throw std::invalid_argument("psnr: shape mismatch");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    double d = a.v[i] - b.v[i];
    mse += d * d;
  }
  mse /= double(a.v.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

// ===== LPIPS hook ============================================================

// Perceptual distance needs a pretrained feature network that this library
// does not bundle. Callers plug one in; without it the metric reports
// "unavailable" (nullopt) rather than a fabricated number.
struct FeatureExtractor {
  virtual ~FeatureExtractor() = default;
  virtual std::vector<std::vector<double>> features(const ImageD& img) const = 0;
  virtual std::vector<double> weights() const = 0;
};

struct IdentityExtractor final : FeatureExtractor {
  std::vector<std::vector<double>> features(const ImageD& img) const override {
    return {img.v};
  }
  std::vector<double> weights() const override { return {1.0}; }
};

inline std::optional<double> lpips(const ImageD& a, const ImageD& b,
                                   const FeatureExtractor* fx) {
  if (!fx) return std::nullopt;
  auto fa = fx->features(a), fb = fx->features(b);
  auto w = fx->weights();
  if (fa.size() != fb.size() || fa.size() != w.size())
    throw std::invalid_argument("lpips: extractor layer/weight count mismatch");
  double total = 0.0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    if (fa[l].size() != fb[l].size())
      throw std::invalid_argument("lpips: feature shape mismatch at layer " + std::to_string(l));
    double d2 = 0.0;
    for (std::size_t i = 0; i < fa[l].size(); ++i) {
      double d = fa[l][i] - fb[l][i];
      d2 += d * d;
    }
    total += w[l] * d2;
  }
  return total;
}

// ===== Leakage ===============================================================

enum class CriterionMetric { ssim, psnr };

struct MetricsRow {
  int index = 0;  // 1-based sample index
  double ssim = 0.0;
  double psnr = 0.0;
  std::optional<double> lpips;
  bool leaked = false;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;
  int leakage_count = 0;
  double leakage_rate = 0.0;
  double ssim_mean = 0.0, ssim_std = 0.0;
  double psnr_mean = 0.0, psnr_std = 0.0;
};

inline MetricsReport leakage(const std::vector<ImageD>& recons,
                             const std::vector<ImageD>& targets, double threshold,
                             CriterionMetric criterion = CriterionMetric::ssim,
                             const FeatureExtractor* fx = nullptr) {
  if (recons.size() != targets.size())
    throw std::invalid_argument("leakage: recon/target count mismatch");
  if (recons.empty()) throw std::invalid_argument("leakage: empty sample set");
  MetricsReport rep;
  rep.rows.reserve(recons.size());
  for (std::size_t i = 0; i < recons.size(); ++i) {
    MetricsRow row;
    row.index = int(i) + 1;
    row.ssim = ssim(recons[i], targets[i]);
    row.psnr = psnr(recons[i], targets[i]);
    row.lpips = lpips(recons[i], targets[i], fx);
    double crit = (criterion == CriterionMetric::ssim) ? row.ssim : row.psnr;
    row.leaked = (threshold <= 0.0) || (crit >= threshold);
    rep.rows.push_back(row);
  }
  double s1 = 0, s2 = 0, p1 = 0, p2 = 0;
  for (const auto& r : rep.rows) {
    rep.leakage_count += r.leaked ? 1 : 0;
    s1 += r.ssim;
    s2 += r.ssim * r.ssim;
    p1 += r.psnr;
    p2 += r.psnr * r.psnr;
  }
  const double n = double(rep.rows.size());
  rep.leakage_rate = rep.leakage_count / n;
  rep.ssim_mean = s1 / n;
  rep.ssim_std = std::sqrt(std::max(0.0, s2 / n - rep.ssim_mean * rep.ssim_mean));
  rep.psnr_mean = p1 / n;
  rep.psnr_std = std::sqrt(std::max(0.0, p2 / n - rep.psnr_mean * rep.psnr_mean));
  return rep;
}

// ===== Serialization =========================================================

inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string to_csv(const MetricsReport& rep) {
  std::string out = "index,ssim,psnr,lpips,leaked\n";
  for (const auto& r : rep.rows) {
    out += std::to_string(r.index) + "," + fmt_g(r.ssim) + "," + fmt_g(r.psnr) + ",";
    if (r.lpips) out += fmt_g(*r.lpips);
    out += r.leaked ? ",1\n" : ",0\n";
  }
  return out;
}

inline nlohmann::json to_json(const MetricsReport& rep) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    nlohmann::json row{{"index", r.index}, {"ssim", r.ssim}, {"psnr", r.psnr},
                       {"leaked", r.leaked}};
    row["lpips"] = r.lpips ? nlohmann::json(*r.lpips) : nlohmann::json(nullptr);
    rows.push_back(row);
  }
  return nlohmann::json{{"rows", rows},
                        {"leakage_count", rep.leakage_count},
                        {"leakage_rate", rep.leakage_rate},
                        {"ssim_mean", rep.ssim_mean},
                        {"ssim_std", rep.ssim_std},
                        {"psnr_mean", rep.psnr_mean},
                        {"psnr_std", rep.psnr_std}};
}

}  // namespace fedlab::metrics
