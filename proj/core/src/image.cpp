#include "gcvd/image.hpp"

#include <stdexcept>

namespace gcvd {

Mask mask_from_raster(const Raster& raster) {
  Mask mask(raster.width(), raster.height(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = raster[i * raster.channels()] > 0.5f ? 1 : 0;
  }
  return mask;
}

Raster raster_from_mask(const Mask& mask) {
  Raster raster(mask.width(), mask.height(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    raster[i] = mask[i] ? 1.0f : 0.0f;
  }
  return raster;
}

std::size_t count_true(const Mask& mask) {
  std::size_t n = 0;
  for (auto v : mask.values()) n += v ? 1 : 0;
  return n;
}

ImageD downsample_area(const ImageD& src, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample factor must be >= 1");
  if (factor == 1) return src;
  const int w = src.width() / factor;
  const int h = src.height() / factor;
  const int c = src.channels();
  ImageD out(w, h, c);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) {
            sum += src(x * factor + dx, y * factor + dy, ch);
          }
        }
        out(x, y, ch) = sum * inv;
      }
    }
  }
  return out;
}

Mask downsample_mask(const Mask& src, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample factor must be >= 1");
  if (factor == 1) return src;
  const int w = src.width() / factor;
  const int h = src.height() / factor;
  Mask out(w, h, 1);
  const int half = factor * factor;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int n = 0;
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) {
          n += src(x * factor + dx, y * factor + dy) ? 1 : 0;
        }
      }
      out(x, y) = 2 * n >= half ? 1 : 0;
    }
  }
  return out;
}

FlowField downsample_flow(const FlowField& src, int factor) {
  FlowField out = downsample_area(src, factor);
  const double inv = 1.0 / factor;
  for (auto& v : out.values()) v *= inv;
  return out;
}

}  // namespace gcvd
