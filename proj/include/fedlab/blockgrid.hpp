// fedlab/blockgrid.hpp - s×s tiling of images and the inter-block seam loss.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedlab::blockgrid {

template <class T>
struct BasicImage {
  int c = 0, h = 0, w = 0;
  std::vector<T> v;

  BasicImage() = default;
  BasicImage(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(std::size_t(c_) * h_ * w_, T(0)) {}

  T& at(int ch, int y, int x) { return v[(std::size_t(ch) * h + y) * w + x]; }
  T at(int ch, int y, int x) const { return v[(std::size_t(ch) * h + y) * w + x]; }

  bool operator==(const BasicImage&) const = default;
};

using ImageD = BasicImage<double>;
using ImageF = BasicImage<float>;

struct BlockLayout {
  int c = 0;
  int orig_h = 0, orig_w = 0;    // pre-padding image shape
  int s = 0;                     // block edge in pixels
  int rows = 0, cols = 0;        // grid = (padded_h/s, padded_w/s)
  int padded_h = 0, padded_w = 0;

  // Blocks are enumerated row-major starting at 1, matching block codes.
  int block_count() const { return rows * cols; }
};

struct BlockSet {
  BlockLayout layout;
  std::vector<ImageD> blocks;
  std::uint64_t source_index = 0;  // sample index n, when tied to a victim
};

// Row-major s×s tiles. Shapes that s does not divide are zero-padded on the
// right/bottom; the layout records both shapes so reassemble can strip.
inline BlockSet partition(const ImageD& image, int s) {
  if (s <= 0) throw std::invalid_argument("partition: block size must be positive");
  if (s > image.h || s > image.w)
    throw std::invalid_argument("partition: block size exceeds image");
  BlockLayout lay;
  lay.c = image.c;
  lay.orig_h = image.h;
  lay.orig_w = image.w;
  lay.s = s;
  lay.padded_h = ((image.h + s - 1) / s) * s;
  lay.padded_w = ((image.w + s - 1) / s) * s;
  lay.rows = lay.padded_h / s;
  lay.cols = lay.padded_w / s;

  BlockSet out;
  out.layout = lay;
  out.blocks.reserve(std::size_t(lay.rows) * lay.cols);
  for (int by = 0; by < lay.rows; ++by) {
    for (int bx = 0; bx < lay.cols; ++bx) {
      ImageD blk(lay.c, s, s);
      for (int c = 0; c < lay.c; ++c)
        for (int y = 0; y < s; ++y)
          for (int x = 0; x < s; ++x) {
            int sy = by * s + y, sx = bx * s + x;
            blk.at(c, y, x) = (sy < image.h && sx < image.w) ? image.at(c, sy, sx) : 0.0;
          }
      out.blocks.push_back(std::move(blk));
    }
  }
  return out;
}

// Exact inverse of partition; padding is stripped.
inline ImageD reassemble(const BlockSet& bs) {
  const BlockLayout& lay = bs.layout;
  if (int(bs.blocks.size()) != lay.block_count())
    throw std::invalid_argument("reassemble: expected " + std::to_string(lay.block_count()) +
                                " blocks, got " + std::to_string(bs.blocks.size()));
  for (int p = 0; p < lay.block_count(); ++p) {
    const ImageD& b = bs.blocks[p];
    if (b.c != lay.c || b.h != lay.s || b.w != lay.s)
      throw std::invalid_argument("reassemble: block " + std::to_string(p + 1) +
                                  " has the wrong shape");
  }
  ImageD out(lay.c, lay.orig_h, lay.orig_w);
  for (int by = 0; by < lay.rows; ++by)
    for (int bx = 0; bx < lay.cols; ++bx) {
      const ImageD& blk = bs.blocks[std::size_t(by) * lay.cols + bx];
      for (int c = 0; c < lay.c; ++c)
        for (int y = 0; y < lay.s; ++y) {
          int sy = by * lay.s + y;
          if (sy >= lay.orig_h) break;
          for (int x = 0; x < lay.s; ++x) {
            int sx = bx * lay.s + x;
            if (sx >= lay.orig_w) break;
            out.at(c, sy, sx) = blk.at(c, y, x);
          }
        }
    }
  return out;
}

// Seam smoothness over a batch: squared differences between the last row
// (column) of each block and the first row (column) of the block below
// (right of) it, summed over internal boundaries only, scaled by
// lambda / (B*C*H*W). Zero when there is at most one block.
inline double variation_loss(const std::vector<ImageD>& batch, int s, double lambda) {
  if (batch.empty()) return 0.0;
  if (s <= 0) throw std::invalid_argument("variation_loss: block size must be positive");
  const int C = batch[0].c, H = batch[0].h, W = batch[0].w;
  if (s >= H && s >= W) return 0.0;
  double acc = 0.0;
  for (const ImageD& img : batch) {
    for (int c = 0; c < C; ++c) {
      for (int r = s; r < H; r += s)
        for (int x = 0; x < W; ++x) {
          double d = img.at(c, r - 1, x) - img.at(c, r, x);
          acc += d * d;
        }
      for (int col = s; col < W; col += s)
        for (int y = 0; y < H; ++y) {
          double d = img.at(c, y, col - 1) - img.at(c, y, col);
          acc += d * d;
        }
    }
  }
  return lambda * acc / (double(batch.size()) * C * H * W);
}

inline std::vector<ImageD> variation_loss_grad(const std::vector<ImageD>& batch, int s,
                                               double lambda) {
  std::vector<ImageD> grad;
  grad.reserve(batch.size());
  for (const ImageD& img : batch) grad.emplace_back(img.c, img.h, img.w);
  if (batch.empty() || s <= 0) return grad;
  const int C = batch[0].c, H = batch[0].h, W = batch[0].w;
  if (s >= H && s >= W) return grad;
  const double k = 2.0 * lambda / (double(batch.size()) * C * H * W);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const ImageD& img = batch[b];
    ImageD& g = grad[b];
    for (int c = 0; c < C; ++c) {
      for (int r = s; r < H; r += s)
        for (int x = 0; x < W; ++x) {
          double d = img.at(c, r - 1, x) - img.at(c, r, x);
          g.at(c, r - 1, x) += k * d;
          g.at(c, r, x) -= k * d;
        }
      for (int col = s; col < W; col += s)
        for (int y = 0; y < H; ++y) {
          double d = img.at(c, y, col - 1) - img.at(c, y, col);
          g.at(c, y, col - 1) += k * d;
          g.at(c, y, col) -= k * d;
        }
    }
  }
  return grad;
}

}  // namespace fedlab::blockgrid
