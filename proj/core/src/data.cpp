#include "ppssl/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ppssl/image.hpp"

namespace fs = std::filesystem;

namespace ppssl::data {

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ParseError("unknown split tag '" + s + "'");
}

std::vector<ImageRecord> Manifest::split_records(Split s) const {
  std::vector<ImageRecord> out;
  for (const auto& r : records)
    if (r.split == s) out.push_back(r);
  return out;
}

Manifest load_manifest(const std::string& manifest_file) {
  std::ifstream in(manifest_file);
  if (!in) throw IoError("cannot open manifest: " + manifest_file);
  const fs::path root = fs::path(manifest_file).parent_path();

  Manifest m;
  std::string line;
  int lineno = 0;
  int max_label = -1;
  std::vector<bool> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto where = manifest_file + ":" + std::to_string(lineno);
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw ParseError(where + ": expected path<TAB>label<TAB>split");
    ImageRecord rec;
    const std::string rel = line.substr(0, t1);
    const std::string label_str = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string split_str = line.substr(t2 + 1);
    try {
      std::size_t pos = 0;
      rec.label = std::stoi(label_str, &pos);
      if (pos != label_str.size()) throw std::invalid_argument(label_str);
    } catch (const std::exception&) {
      throw ParseError(where + ": label '" + label_str + "' is not an integer");
    }
    if (rec.label < 0) throw ParseError(where + ": negative label");
    try {
      rec.split = split_from_string(split_str);
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    rec.path = (root / rel).string();
    rec.id = rel;
    max_label = std::max(max_label, rec.label);
    if (int(seen.size()) <= rec.label) seen.resize(std::size_t(rec.label) + 1, false);
    seen[std::size_t(rec.label)] = true;
    m.records.push_back(std::move(rec));
  }
  for (int l = 0; l <= max_label; ++l)
    if (!seen[std::size_t(l)])
      throw ParseError(manifest_file + ": labels not contiguous, class " + std::to_string(l) +
                       " missing");
  m.num_classes = max_label + 1;
  return m;
}

void write_manifest(const std::string& manifest_file,
                    const std::vector<std::pair<std::string, ImageRecord>>& relative_records) {
  std::ofstream out(manifest_file, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + manifest_file);
  for (const auto& [rel, rec] : relative_records)
    out << rel << '\t' << rec.label << '\t' << to_string(rec.split) << '\n';
  if (!out) throw IoError("write failed: " + manifest_file);
}

void AugPolicy::validate() const {
  std::vector<std::string> issues;
  auto prob = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) issues.push_back(std::string(name) + " must lie in [0,1]");
  };
  if (train_size <= 0) issues.push_back("train_size must be positive");
  if (!(crop_scale_min > 0.0 && crop_scale_max <= 1.0 && crop_scale_min <= crop_scale_max))
    issues.push_back("crop_scale must be a sub-interval of (0,1]");
  if (!(crop_ratio_min > 0.0 && crop_ratio_min <= crop_ratio_max))
    issues.push_back("crop_ratio interval invalid");
  prob(flip_prob, "flip_prob");
  prob(jitter_prob, "jitter_prob");
  prob(grayscale_prob, "grayscale_prob");
  prob(blur_prob, "blur_prob");
  if (jitter_brightness < 0 || jitter_contrast < 0 || jitter_saturation < 0)
    issues.push_back("jitter strengths must be nonnegative");
  if (!(jitter_hue >= 0.0 && jitter_hue <= 0.5)) issues.push_back("jitter_hue must lie in [0,0.5]");
  if (!(blur_sigma_min > 0.0 && blur_sigma_min <= blur_sigma_max))
    issues.push_back("blur_sigma interval invalid");
  if (test_resize <= 0 || test_size <= 0 || test_size > test_resize)
    issues.push_back("test_size must satisfy 0 < test_size <= test_resize");
  for (double s : norm_std)
    if (s <= 0.0) {
      issues.push_back("norm_std entries must be positive");
      break;
    }
  if (!issues.empty()) {
    std::string msg = "invalid augmentation policy:";
    for (const auto& i : issues) msg += "\n  - " + i;
    throw ConfigError(msg, issues);
  }
}

AugPolicy with_imagenet_stats(AugPolicy p) {
  p.norm_mean = {0.485, 0.456, 0.406};
  p.norm_std = {0.229, 0.224, 0.225};
  return p;
}

namespace {

void normalize_inplace(Tensor& chw, const AugPolicy& p) {
  const int h = chw.dim(1), w = chw.dim(2);
  for (int c = 0; c < 3; ++c) {
    double* plane = chw.data() + std::int64_t(c) * h * w;
    const double mu = p.norm_mean[std::size_t(c)], sd = p.norm_std[std::size_t(c)];
    for (std::int64_t i = 0; i < std::int64_t(h) * w; ++i) plane[i] = (plane[i] - mu) / sd;
  }
}

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

void clamp01(Tensor& t) {
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = std::clamp(t[i], 0.0, 1.0);
}

void apply_brightness(Tensor& t, double f) {
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] *= f;
  clamp01(t);
}

void apply_contrast(Tensor& t, double f) {
  const int h = t.dim(1), w = t.dim(2);
  const std::int64_t hw = std::int64_t(h) * w;
  double m = 0.0;
  for (std::int64_t i = 0; i < hw; ++i) m += luma(t[i], t[hw + i], t[2 * hw + i]);
  m /= double(hw);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = (t[i] - m) * f + m;
  clamp01(t);
}

void apply_saturation(Tensor& t, double f) {
  const std::int64_t hw = std::int64_t(t.dim(1)) * t.dim(2);
  for (std::int64_t i = 0; i < hw; ++i) {
    const double l = luma(t[i], t[hw + i], t[2 * hw + i]);
    t[i] = l + (t[i] - l) * f;
    t[hw + i] = l + (t[hw + i] - l) * f;
    t[2 * hw + i] = l + (t[2 * hw + i] - l) * f;
  }
  clamp01(t);
}

void apply_hue(Tensor& t, double shift) {
  const std::int64_t hw = std::int64_t(t.dim(1)) * t.dim(2);
  for (std::int64_t i = 0; i < hw; ++i) {
    const double r = t[i], g = t[hw + i], b = t[2 * hw + i];
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const double d = mx - mn;
    double hdeg = 0.0;
    if (d > 0.0) {
      if (mx == r)
        hdeg = std::fmod((g - b) / d, 6.0);
      else if (mx == g)
        hdeg = (b - r) / d + 2.0;
      else
        hdeg = (r - g) / d + 4.0;
      hdeg /= 6.0;
      if (hdeg < 0.0) hdeg += 1.0;
    }
    const double s = mx > 0.0 ? d / mx : 0.0;
    double hh = std::fmod(hdeg + shift, 1.0);
    if (hh < 0.0) hh += 1.0;
    // HSV back to RGB
    const double c = mx * s;
    const double hp = hh * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double rr = 0, gg = 0, bb = 0;
    if (hp < 1)
      rr = c, gg = x;
    else if (hp < 2)
      rr = x, gg = c;
    else if (hp < 3)
      gg = c, bb = x;
    else if (hp < 4)
      gg = x, bb = c;
    else if (hp < 5)
      rr = x, bb = c;
    else
      rr = c, bb = x;
    const double m = mx - c;
    t[i] = rr + m;
    t[hw + i] = gg + m;
    t[2 * hw + i] = bb + m;
  }
}

Tensor gaussian_blur(const Tensor& t, double sigma) {
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> kern(std::size_t(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kern[std::size_t(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kern[std::size_t(i + radius)];
  }
  for (auto& k : kern) k /= sum;

  Tensor tmp({c, h, w}), out({c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    const double* src = t.data() + std::int64_t(ch) * h * w;
    double* mid = tmp.data() + std::int64_t(ch) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += kern[std::size_t(k + radius)] * src[std::int64_t(y) * w + std::clamp(x + k, 0, w - 1)];
        mid[std::int64_t(y) * w + x] = acc;
      }
    double* dst = out.data() + std::int64_t(ch) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += kern[std::size_t(k + radius)] * mid[std::int64_t(std::clamp(y + k, 0, h - 1)) * w + x];
        dst[std::int64_t(y) * w + x] = acc;
      }
  }
  return out;
}

struct CropBox {
  int top, left, h, w;
};

CropBox sample_crop(int H, int W, const AugPolicy& p, Rng& rng) {
  const double area = double(H) * W;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = rng.uniform(p.crop_scale_min, p.crop_scale_max) * area;
    const double lr = rng.uniform(std::log(p.crop_ratio_min), std::log(p.crop_ratio_max));
    const double ar = std::exp(lr);
    const int cw = int(std::lround(std::sqrt(target * ar)));
    const int ch = int(std::lround(std::sqrt(target / ar)));
    if (cw > 0 && ch > 0 && cw <= W && ch <= H) {
      const int top = int(rng.uniform_int(H - ch + 1));
      const int left = int(rng.uniform_int(W - cw + 1));
      return {top, left, ch, cw};
    }
  }
  // fallback: largest centered box satisfying the ratio bounds
  const double img_ratio = double(W) / H;
  int ch = H, cw = W;
  if (img_ratio < p.crop_ratio_min)
    ch = std::max(1, int(std::lround(W / p.crop_ratio_min)));
  else if (img_ratio > p.crop_ratio_max)
    cw = std::max(1, int(std::lround(H * p.crop_ratio_max)));
  return {(H - ch) / 2, (W - cw) / 2, ch, cw};
}

Tensor augment_view(const Tensor& chw, const AugPolicy& p, Rng& rng) {
  const CropBox box = sample_crop(chw.dim(1), chw.dim(2), p, rng);
  Tensor v = img::bilinear_resize(img::crop(chw, box.top, box.left, box.h, box.w), p.train_size,
                                  p.train_size);
  if (rng.bernoulli(p.jitter_prob)) {
    apply_brightness(v, rng.uniform(std::max(0.0, 1.0 - p.jitter_brightness), 1.0 + p.jitter_brightness));
    apply_contrast(v, rng.uniform(std::max(0.0, 1.0 - p.jitter_contrast), 1.0 + p.jitter_contrast));
    apply_saturation(v, rng.uniform(std::max(0.0, 1.0 - p.jitter_saturation), 1.0 + p.jitter_saturation));
    if (p.jitter_hue > 0.0) apply_hue(v, rng.uniform(-p.jitter_hue, p.jitter_hue));
  }
  if (rng.bernoulli(p.grayscale_prob)) {
    const std::int64_t hw = std::int64_t(v.dim(1)) * v.dim(2);
    for (std::int64_t i = 0; i < hw; ++i) {
      const double l = luma(v[i], v[hw + i], v[2 * hw + i]);
      v[i] = v[hw + i] = v[2 * hw + i] = l;
    }
  }
  if (rng.bernoulli(p.blur_prob)) v = gaussian_blur(v, rng.uniform(p.blur_sigma_min, p.blur_sigma_max));
  if (rng.bernoulli(p.flip_prob)) v = img::hflip(v);
  normalize_inplace(v, p);
  return v;
}

}  // namespace

Tensor original_transform_image(const Tensor& chw, const AugPolicy& p) {
  Tensor o = img::bilinear_resize(chw, p.train_size, p.train_size);
  normalize_inplace(o, p);
  return o;
}

ViewPair two_view_augment_image(const Tensor& chw, const AugPolicy& p, Rng& rng, int source_id) {
  if (chw.ndim() != 3 || chw.dim(0) != 3)
    throw StructuralError("two_view_augment: expected 3xHxW image, got " + chw.shape_str());
  ViewPair vp;
  vp.source_id = source_id;
  vp.x = augment_view(chw, p, rng);
  vp.x_prime = augment_view(chw, p, rng);
  vp.original = original_transform_image(chw, p);
  return vp;
}

ViewPair two_view_augment(const ImageRecord& record, const AugPolicy& p, Rng& rng, int source_id) {
  return two_view_augment_image(img::load_png(record.path), p, rng, source_id);
}

Tensor test_transform_image(const Tensor& chw, const AugPolicy& p) {
  Tensor t = img::center_crop(img::resize_shorter(chw, p.test_resize), p.test_size, p.test_size);
  normalize_inplace(t, p);
  return t;
}

Tensor test_transform(const ImageRecord& record, const AugPolicy& p) {
  return test_transform_image(img::load_png(record.path), p);
}

}  // namespace ppssl::data
