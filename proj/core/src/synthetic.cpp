#include "ppssl/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "ppssl/data.hpp"
#include "ppssl/image.hpp"
#include "ppssl/rng.hpp"

namespace fs = std::filesystem;

namespace ppssl::data {

void SyntheticSpec::validate() const {
  std::vector<std::string> issues;
  if (num_classes < 1 || num_classes > 16)
    issues.push_back("num_classes must lie in [1,16] (attribute capacity)");
  if (per_class < 1) issues.push_back("per_class must be positive");
  if (canvas < 16) issues.push_back("canvas must be at least 16");
  if (background_clutter < 0.0) issues.push_back("background_clutter must be nonnegative");
  if (!issues.empty()) {
    std::string msg = "invalid synthetic spec:";
    for (const auto& i : issues) msg += "\n  - " + i;
    throw ConfigError(msg, issues);
  }
}

namespace {

struct Vec2 {
  double x, y;
};

bool in_triangle(double px, double py, Vec2 a, Vec2 b, Vec2 c) {
  auto side = [](double x, double y, Vec2 p, Vec2 q) {
    return (q.x - p.x) * (y - p.y) - (q.y - p.y) * (x - p.x);
  };
  const double d1 = side(px, py, a, b);
  const double d2 = side(px, py, b, c);
  const double d3 = side(px, py, c, a);
  const bool neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
  const bool pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
  return !(neg && pos);
}

struct Instance {
  double cx, cy, angle, a, b;
  double base_r, base_g, base_b;
  double stripe_phase;
  double wing_scale;
  double clutter_count_scale;
};

Instance draw_instance(const SyntheticSpec& spec, int cls, int idx) {
  Rng rng = Rng::substream(spec.seed, "object", std::uint64_t(cls), std::uint64_t(idx));
  const double S = spec.canvas;
  Instance ins;
  // identical draw sequence for every class: class identity enters only
  // through the attribute rendering below
  ins.cx = rng.uniform(0.40, 0.60) * S;
  ins.cy = rng.uniform(0.40, 0.60) * S;
  ins.angle = rng.uniform(-0.5, 0.5);
  ins.a = rng.uniform(0.26, 0.34) * S;
  ins.b = ins.a * rng.uniform(0.52, 0.62);
  ins.base_r = rng.uniform(0.45, 0.70);
  ins.base_g = rng.uniform(0.30, 0.50);
  ins.base_b = rng.uniform(0.15, 0.35);
  ins.stripe_phase = rng.uniform();
  ins.wing_scale = rng.uniform(0.75, 0.95);
  ins.clutter_count_scale = rng.uniform(0.8, 1.2);
  return ins;
}

}  // namespace

RenderedImage render_synthetic(const SyntheticSpec& spec, int cls, int idx) {
  spec.validate();
  if (cls < 0 || cls >= spec.num_classes || idx < 0 || idx >= spec.per_class)
    throw StructuralError("render_synthetic: (cls,idx) out of range");

  const int S = spec.canvas;
  const Instance ins = draw_instance(spec, cls, idx);
  const int stripes = 1 + cls % 4;
  const bool notch = (cls / 4) % 2 != 0;
  const bool eye = (cls / 8) % 2 != 0;

  // background: smooth two-way gradient, own substream
  Rng bg_rng = Rng::substream(spec.seed, "background", std::uint64_t(cls), std::uint64_t(idx));
  const double bg0r = bg_rng.uniform(0.15, 0.45), bg0g = bg_rng.uniform(0.35, 0.65),
               bg0b = bg_rng.uniform(0.45, 0.80);
  const double gx = bg_rng.uniform(-0.25, 0.25), gy = bg_rng.uniform(-0.25, 0.25);

  RenderedImage out;
  out.image = Tensor({3, S, S});
  out.mask = Tensor({1, S, S});

  const double ca = std::cos(ins.angle), sa = std::sin(ins.angle);
  // wing triangle in normalized body coords, scaled per instance
  const Vec2 wa{-0.10 * ins.wing_scale, -0.30 * ins.wing_scale};
  const Vec2 wb{0.55 * ins.wing_scale, -1.75 * ins.wing_scale};
  const Vec2 wc{-0.65 * ins.wing_scale, -1.45 * ins.wing_scale};
  // notch bite: disc on the wing's outer edge
  const double bite_cx = 0.5 * (wb.x + wc.x), bite_cy = 0.5 * (wb.y + wc.y);
  const double bite_r = 0.30 * ins.wing_scale;
  // tail triangle at the rear
  const Vec2 ta{-0.95, 0.05};
  const Vec2 tb{-1.55, -0.45};
  const Vec2 tc{-1.55, 0.55};
  // eye dot near the head end
  const double eye_u = 0.62, eye_v = -0.28, eye_r = 0.13;

  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const double dx = x - ins.cx, dy = y - ins.cy;
      const double u = (dx * ca + dy * sa) / ins.a;
      const double v = (-dx * sa + dy * ca) / ins.b;

      const bool in_body = u * u + v * v <= 1.0;
      bool in_wing = in_triangle(u, v, wa, wb, wc);
      if (in_wing && notch) {
        const double bu = u - bite_cx, bv = v - bite_cy;
        if (bu * bu + bv * bv <= bite_r * bite_r) in_wing = false;
      }
      const bool in_tail = in_triangle(u, v, ta, tb, tc);

      double r, g, b;
      if (in_body || in_wing || in_tail) {
        out.mask[std::int64_t(y) * S + x] = 1.0;
        r = ins.base_r;
        g = ins.base_g;
        b = ins.base_b;
        if (in_wing && !in_body) {
          r *= 0.80;
          g *= 0.80;
          b *= 0.90;
        }
        if (in_tail && !in_body && !in_wing) {
          r *= 0.70;
          g *= 0.75;
          b *= 0.85;
        }
        if (in_body) {
          // stripe bands across the major axis; count is the class cue
          const double band = u * double(stripes) * 0.75 + ins.stripe_phase;
          if (band - std::floor(band) < 0.42) {
            r *= 0.55;
            g *= 0.55;
            b *= 0.60;
          }
          if (eye) {
            const double eu = u - eye_u, ev = v - eye_v;
            if (eu * eu + ev * ev <= eye_r * eye_r) {
              r = 0.92;
              g = 0.90;
              b = 0.20;
            }
          }
        }
      } else {
        r = std::clamp(bg0r + gx * (double(x) / S - 0.5), 0.02, 0.98);
        g = std::clamp(bg0g + gy * (double(y) / S - 0.5), 0.02, 0.98);
        b = std::clamp(bg0b + 0.5 * (gx + gy) * (double(y) / S - 0.5), 0.02, 0.98);
      }
      out.image[std::int64_t(0) * S * S + std::int64_t(y) * S + x] = r;
      out.image[std::int64_t(1) * S * S + std::int64_t(y) * S + x] = g;
      out.image[std::int64_t(2) * S * S + std::int64_t(y) * S + x] = b;
    }

  // clutter: hard-edged discs drawn strictly outside the object mask, own
  // substream so clutter=0 and clutter>0 agree under the mask
  if (spec.background_clutter > 0.0) {
    Rng cl_rng = Rng::substream(spec.seed, "clutter", std::uint64_t(cls), std::uint64_t(idx));
    const int n = std::max(
        1, int(std::lround(spec.background_clutter * 30.0 * ins.clutter_count_scale)));
    for (int k = 0; k < n; ++k) {
      const double ccx = cl_rng.uniform(0.0, double(S));
      const double ccy = cl_rng.uniform(0.0, double(S));
      const double cr = cl_rng.uniform(1.5, 4.5);
      const double col_r = cl_rng.uniform(0.1, 0.9);
      const double col_g = cl_rng.uniform(0.1, 0.9);
      const double col_b = cl_rng.uniform(0.1, 0.9);
      const int y0 = std::max(0, int(std::floor(ccy - cr))), y1 = std::min(S - 1, int(std::ceil(ccy + cr)));
      const int x0 = std::max(0, int(std::floor(ccx - cr))), x1 = std::min(S - 1, int(std::ceil(ccx + cr)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          if (out.mask[std::int64_t(y) * S + x] != 0.0) continue;
          const double ddx = x - ccx, ddy = y - ccy;
          if (ddx * ddx + ddy * ddy > cr * cr) continue;
          out.image[std::int64_t(0) * S * S + std::int64_t(y) * S + x] = col_r;
          out.image[std::int64_t(1) * S * S + std::int64_t(y) * S + x] = col_g;
          out.image[std::int64_t(2) * S * S + std::int64_t(y) * S + x] = col_b;
        }
    }
  }
  return out;
}

std::string generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
  spec.validate();
  fs::create_directories(out_dir);

  std::vector<std::pair<std::string, ImageRecord>> rows;
  char buf[64];
  for (int c = 0; c < spec.num_classes; ++c) {
    std::snprintf(buf, sizeof(buf), "class_%02d", c);
    const std::string cls_dir = buf;
    fs::create_directories(fs::path(out_dir) / cls_dir);
    for (int i = 0; i < spec.per_class; ++i) {
      std::snprintf(buf, sizeof(buf), "img_%03d.png", i);
      const std::string rel = cls_dir + "/" + buf;
      RenderedImage ri = render_synthetic(spec, c, i);
      img::save_png((fs::path(out_dir) / rel).string(), ri.image);
      ImageRecord rec;
      rec.label = c;
      rec.split = (i % 5 == 0) ? Split::test : Split::train;
      rows.emplace_back(rel, std::move(rec));
    }
  }
  const std::string manifest = (fs::path(out_dir) / "manifest.tsv").string();
  write_manifest(manifest, rows);
  return manifest;
}

}  // namespace ppssl::data
