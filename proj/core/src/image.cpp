#include "ppssl/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

namespace ppssl::img {

namespace {
void check_chw(const Tensor& t, const char* where) {
  if (t.ndim() != 3 || (t.dim(0) != 1 && t.dim(0) != 3))
    throw StructuralError(std::string(where) + ": expected CHW with 1 or 3 channels, got " +
                          t.shape_str());
}
}  // namespace

Tensor load_png(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot decode image: " + path);
  const int h = bgr.rows, w = bgr.cols;
  Tensor out({3, h, w});
  for (int y = 0; y < h; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      // BGR byte order to RGB planes
      out[std::int64_t(0) * h * w + std::int64_t(y) * w + x] = row[x][2] / 255.0;
      out[std::int64_t(1) * h * w + std::int64_t(y) * w + x] = row[x][1] / 255.0;
      out[std::int64_t(2) * h * w + std::int64_t(y) * w + x] = row[x][0] / 255.0;
    }
  }
  return out;
}

void save_png(const std::string& path, const Tensor& chw) {
  check_chw(chw, "save_png");
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  auto px = [&](int ch, int y, int x) {
    const double v = std::clamp(chw[(std::int64_t(ch) * h + y) * w + x], 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(v * 255.0));
  };
  cv::Mat m;
  if (c == 1) {
    m.create(h, w, CV_8UC1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) m.at<unsigned char>(y, x) = px(0, y, x);
  } else {
    m.create(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) m.at<cv::Vec3b>(y, x) = cv::Vec3b(px(2, y, x), px(1, y, x), px(0, y, x));
  }
  if (!cv::imwrite(path, m, {cv::IMWRITE_PNG_COMPRESSION, 6}))
    throw IoError("cannot write image: " + path);
}

Tensor bilinear_resize(const Tensor& chw, int out_h, int out_w) {
  check_chw(chw, "bilinear_resize");
  if (out_h <= 0 || out_w <= 0) throw StructuralError("bilinear_resize: nonpositive output size");
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  if (h == out_h && w == out_w) return chw;
  Tensor out({c, out_h, out_w});
  const double sy = double(h) / out_h, sx = double(w) / out_w;
  for (int oy = 0; oy < out_h; ++oy) {
    const double fy = (oy + 0.5) * sy - 0.5;
    const int fy0 = int(std::floor(fy));
    const int y0 = std::clamp(fy0, 0, h - 1);
    const int y1 = std::clamp(fy0 + 1, 0, h - 1);
    const double wy = fy - fy0;  // irrelevant when y0 == y1 (clamped edge)
    for (int ox = 0; ox < out_w; ++ox) {
      const double fx = (ox + 0.5) * sx - 0.5;
      const int fx0 = int(std::floor(fx));
      const int x0 = std::clamp(fx0, 0, w - 1);
      const int x1 = std::clamp(fx0 + 1, 0, w - 1);
      const double wx = fx - fx0;
      for (int ch = 0; ch < c; ++ch) {
        const double* p = chw.data() + std::int64_t(ch) * h * w;
        const double top = p[std::int64_t(y0) * w + x0] * (1 - wx) + p[std::int64_t(y0) * w + x1] * wx;
        const double bot = p[std::int64_t(y1) * w + x0] * (1 - wx) + p[std::int64_t(y1) * w + x1] * wx;
        out[(std::int64_t(ch) * out_h + oy) * out_w + ox] = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

Tensor resize_shorter(const Tensor& chw, int target) {
  check_chw(chw, "resize_shorter");
  const int h = chw.dim(1), w = chw.dim(2);
  if (h <= w) {
    const int ow = int(std::lround(double(w) * target / h));
    return bilinear_resize(chw, target, std::max(ow, 1));
  }
  const int oh = int(std::lround(double(h) * target / w));
  return bilinear_resize(chw, std::max(oh, 1), target);
}

Tensor crop(const Tensor& chw, int top, int left, int h, int w) {
  check_chw(chw, "crop");
  const int c = chw.dim(0), ih = chw.dim(1), iw = chw.dim(2);
  if (top < 0 || left < 0 || h <= 0 || w <= 0 || top + h > ih || left + w > iw)
    throw StructuralError("crop: window [" + std::to_string(top) + "," + std::to_string(left) +
                          "," + std::to_string(h) + "," + std::to_string(w) + "] outside " +
                          chw.shape_str());
  Tensor out({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y) {
      const double* src = chw.data() + (std::int64_t(ch) * ih + top + y) * iw + left;
      double* dst = out.data() + (std::int64_t(ch) * h + y) * w;
      std::copy(src, src + w, dst);
    }
  return out;
}

Tensor center_crop(const Tensor& chw, int h, int w) {
  const int ih = chw.dim(1), iw = chw.dim(2);
  return crop(chw, (ih - h) / 2, (iw - w) / 2, h, w);
}

Tensor hflip(const Tensor& chw) {
  check_chw(chw, "hflip");
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  Tensor out({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out[(std::int64_t(ch) * h + y) * w + x] = chw[(std::int64_t(ch) * h + y) * w + (w - 1 - x)];
  return out;
}

}  // namespace ppssl::img
