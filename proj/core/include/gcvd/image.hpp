#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <vector>

namespace gcvd {

// Dense row-major, channel-interleaved raster.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels = 1, T fill = T{})
      : width_(width),
        height_(height),
        channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width_) * height_;
  }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool same_shape(int width, int height) const {
    return width_ == width && height_ == height;
  }
  template <typename U>
  bool same_shape(const Image<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  T& operator()(int x, int y, int c = 0) {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_);
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  const T& operator()(int x, int y, int c = 0) const {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_);
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const Image& a, const Image& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ &&
           a.channels_ == b.channels_ && a.data_ == b.data_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using Raster = Image<float>;
using ImageD = Image<double>;
using DepthMap = Image<double>;
// Two channels: (dx, dy) in pixels.
using FlowField = Image<double>;
// One channel, 1 = valid / static.
using Mask = Image<std::uint8_t>;

template <typename To, typename From>
Image<To> image_cast(const Image<From>& src) {
  Image<To> out(src.width(), src.height(), src.channels());
  for (std::size_t i = 0; i < src.size(); ++i) {
    out[i] = static_cast<To>(src[i]);
  }
  return out;
}

Mask mask_from_raster(const Raster& raster);
Raster raster_from_mask(const Mask& mask);

std::size_t count_true(const Mask& mask);

// Area-mean downsampling by an integer factor; trailing rows/columns that do
// not fill a whole block are dropped.
ImageD downsample_area(const ImageD& src, int factor);
// A block is marked when at least half of its pixels are marked.
Mask downsample_mask(const Mask& src, int factor);
// Area-mean of the vectors divided by the factor.
FlowField downsample_flow(const FlowField& src, int factor);

}  // namespace gcvd
