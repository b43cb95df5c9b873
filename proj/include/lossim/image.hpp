#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lossim {

/// Planar-free float image: row-major, channel-fastest, samples nominally in [0,1].
/// Immutable by convention once filled; all library functions take it by const ref
/// and return fresh buffers.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int height, int width, int channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels) {
    if (height <= 0 || width <= 0 || channels <= 0) {
      throw std::invalid_argument("ImageBuffer: bad dimensions " + std::to_string(height) + "x" +
                                  std::to_string(width) + "x" + std::to_string(channels));
    }
    data_.assign(static_cast<size_t>(height) * width * channels, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int row, int col, int ch = 0) {
    return data_[(static_cast<size_t>(row) * width_ + col) * channels_ + ch];
  }
  double at(int row, int col, int ch = 0) const {
    return data_[(static_cast<size_t>(row) * width_ + col) * channels_ + ch];
  }
  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const ImageBuffer& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

inline void require_same_shape(const ImageBuffer& x, const ImageBuffer& y, const char* where) {
  if (!x.same_shape(y)) {
    throw std::invalid_argument(std::string(where) + ": shape mismatch");
  }
}

/// Grid of top-left offsets for square patches that fit entirely in the source.
struct PatchGrid {
  int source_height = 0;
  int source_width = 0;
  int patch_size = 0;
  int stride = 0;
  std::vector<int> row_offsets;
  std::vector<int> col_offsets;

  static PatchGrid make(int height, int width, int patch_size, int stride) {
    if (patch_size <= 0 || stride <= 0) {
      throw std::invalid_argument("PatchGrid: size and stride must be positive");
    }
    if (patch_size > height || patch_size > width) {
      throw std::invalid_argument("PatchGrid: patch does not fit in source");
    }
    PatchGrid g;
    g.source_height = height;
    g.source_width = width;
    g.patch_size = patch_size;
    g.stride = stride;
    for (int r = 0; r + patch_size <= height; r += stride) g.row_offsets.push_back(r);
    for (int c = 0; c + patch_size <= width; c += stride) g.col_offsets.push_back(c);
    return g;
  }

  size_t count() const { return row_offsets.size() * col_offsets.size(); }
};

inline ImageBuffer crop(const ImageBuffer& img, int row0, int col0, int height, int width) {
  ImageBuffer out(height, width, img.channels());
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      for (int ch = 0; ch < img.channels(); ++ch) out.at(r, c, ch) = img.at(row0 + r, col0 + c, ch);
  return out;
}

/// All fully-contained size×size windows on the stride grid, verbatim copies.
inline std::vector<ImageBuffer> extract_patches(const ImageBuffer& img, int size, int stride) {
  PatchGrid grid = PatchGrid::make(img.height(), img.width(), size, stride);
  std::vector<ImageBuffer> patches;
  patches.reserve(grid.count());
  for (int r : grid.row_offsets)
    for (int c : grid.col_offsets) patches.push_back(crop(img, r, c, size, size));
  return patches;
}

}  // namespace lossim
