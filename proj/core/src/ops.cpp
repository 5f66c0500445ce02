#include "ppssl/ops.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace ppssl::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;

bool track(const Graph& g, std::initializer_list<Var> vars) {
  if (!g.grad_enabled()) return false;
  for (const auto& v : vars)
    if (v && v->requires_grad) return true;
  return false;
}

int rows_of(const Tensor& t) {
  if (t.ndim() < 1 || t.dim(0) <= 0) throw StructuralError("expected leading batch dimension");
  return t.dim(0);
}

std::int64_t row_width(const Tensor& t) { return t.size() / rows_of(t); }

void check_matrix(const Tensor& t, const char* where) {
  if (t.ndim() != 2) throw StructuralError(std::string(where) + ": expected 2-d tensor, got " + t.shape_str());
}

void check_nchw(const Tensor& t, const char* where) {
  if (t.ndim() != 4) throw StructuralError(std::string(where) + ": expected 4-d NCHW tensor, got " + t.shape_str());
}

}  // namespace

Var add(Graph& g, const Var& a, const Var& b) {
  check_same_shape(a->value, b->value, "add");
  Tensor y = a->value;
  y.add_scaled(b->value, 1.0);
  return g.emplace(std::move(y), {a, b}, [](Node& n) {
    if (n.inputs[0]->requires_grad) n.inputs[0]->accumulate(n.grad);
    if (n.inputs[1]->requires_grad) n.inputs[1]->accumulate(n.grad);
  });
}

Var scale(Graph& g, const Var& a, double c) {
  Tensor y = a->value;
  for (std::int64_t i = 0; i < y.size(); ++i) y[i] *= c;
  return g.emplace(std::move(y), {a}, [c](Node& n) {
    if (!n.inputs[0]->requires_grad) return;
    n.inputs[0]->ensure_grad();
    n.inputs[0]->grad.add_scaled(n.grad, c);
  });
}

Var relu(Graph& g, const Var& x) {
  Tensor y = x->value;
  for (std::int64_t i = 0; i < y.size(); ++i)
    if (y[i] < 0.0) y[i] = 0.0;
  return g.emplace(std::move(y), {x}, [](Node& n) {
    Node& x_ = *n.inputs[0];
    if (!x_.requires_grad) return;
    x_.ensure_grad();
    const std::int64_t sz = n.value.size();
    for (std::int64_t i = 0; i < sz; ++i)
      if (x_.value[i] > 0.0) x_.grad[i] += n.grad[i];
  });
}

Var linear(Graph& g, const Var& x, const Var& weight, const Var& bias) {
  check_matrix(x->value, "linear");
  check_matrix(weight->value, "linear weight");
  const int batch = x->value.dim(0), in = x->value.dim(1);
  const int out = weight->value.dim(0);
  if (weight->value.dim(1) != in)
    throw StructuralError("linear: weight " + weight->value.shape_str() + " vs input " +
                          x->value.shape_str());
  if (bias && bias->value.size() != out) throw StructuralError("linear: bias size mismatch");

  Tensor y({batch, out});
  {
    CMap xm(x->value.data(), batch, in);
    CMap wm(weight->value.data(), out, in);
    Map ym(y.data(), batch, out);
    ym.noalias() = xm * wm.transpose();
    if (bias) ym.rowwise() += CMap(bias->value.data(), 1, out).row(0);
  }
  std::vector<Var> ins = {x, weight};
  if (bias) ins.push_back(bias);
  return g.emplace(std::move(y), std::move(ins), [batch, in, out](Node& n) {
    Node& x_ = *n.inputs[0];
    Node& w_ = *n.inputs[1];
    CMap gm(n.grad.data(), batch, out);
    if (x_.requires_grad) {
      x_.ensure_grad();
      Map xg(x_.grad.data(), batch, in);
      CMap wm(w_.value.data(), out, in);
      xg.noalias() += gm * wm;
    }
    if (w_.requires_grad) {
      w_.ensure_grad();
      Map wg(w_.grad.data(), out, in);
      CMap xm(x_.value.data(), batch, in);
      wg.noalias() += gm.transpose() * xm;
    }
    if (n.inputs.size() > 2 && n.inputs[2]->requires_grad) {
      Node& b_ = *n.inputs[2];
      b_.ensure_grad();
      Map bg(b_.grad.data(), 1, out);
      bg.row(0) += gm.colwise().sum();
    }
  });
}

// -- conv2d ---------------------------------------------------------------

namespace {

struct ConvDims {
  int batch, cin, h, w, cout, kh, kw, ho, wo, stride, pad;
  std::int64_t k() const { return std::int64_t(cin) * kh * kw; }
  std::int64_t positions() const { return std::int64_t(ho) * wo; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  check_nchw(x, "conv2d");
  check_nchw(w, "conv2d weight");
  ConvDims d;
  d.batch = x.dim(0);
  d.cin = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.cout = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.pad = pad;
  if (w.dim(1) != d.cin)
    throw StructuralError("conv2d: weight channels " + w.shape_str() + " vs input " + x.shape_str());
  d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
  d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.ho <= 0 || d.wo <= 0)
    throw StructuralError("conv2d: input " + x.shape_str() + " too small for kernel");
  return d;
}

// col is K x (B * P), columns grouped batch-major.
void im2col(const Tensor& x, const ConvDims& d, Tensor& col) {
  const std::int64_t P = d.positions();
  const double* xp = x.data();
  double* cp = col.data();
  const std::int64_t col_w = std::int64_t(d.batch) * P;
  for (int ci = 0; ci < d.cin; ++ci)
    for (int r = 0; r < d.kh; ++r)
      for (int c = 0; c < d.kw; ++c) {
        const std::int64_t row = (std::int64_t(ci) * d.kh + r) * d.kw + c;
        double* crow = cp + row * col_w;
        for (int b = 0; b < d.batch; ++b) {
          const double* xplane = xp + (std::int64_t(b) * d.cin + ci) * d.h * d.w;
          double* cdst = crow + std::int64_t(b) * P;
          for (int oh = 0; oh < d.ho; ++oh) {
            const int ih = oh * d.stride - d.pad + r;
            if (ih < 0 || ih >= d.h) {
              for (int ow = 0; ow < d.wo; ++ow) cdst[oh * d.wo + ow] = 0.0;
              continue;
            }
            const double* xrow = xplane + std::int64_t(ih) * d.w;
            for (int ow = 0; ow < d.wo; ++ow) {
              const int iw = ow * d.stride - d.pad + c;
              cdst[oh * d.wo + ow] = (iw < 0 || iw >= d.w) ? 0.0 : xrow[iw];
            }
          }
        }
      }
}

void col2im_accumulate(const Tensor& col, const ConvDims& d, Tensor& dx) {
  const std::int64_t P = d.positions();
  const std::int64_t col_w = std::int64_t(d.batch) * P;
  const double* cp = col.data();
  double* xp = dx.data();
  for (int ci = 0; ci < d.cin; ++ci)
    for (int r = 0; r < d.kh; ++r)
      for (int c = 0; c < d.kw; ++c) {
        const std::int64_t row = (std::int64_t(ci) * d.kh + r) * d.kw + c;
        const double* crow = cp + row * col_w;
        for (int b = 0; b < d.batch; ++b) {
          double* xplane = xp + (std::int64_t(b) * d.cin + ci) * d.h * d.w;
          const double* csrc = crow + std::int64_t(b) * P;
          for (int oh = 0; oh < d.ho; ++oh) {
            const int ih = oh * d.stride - d.pad + r;
            if (ih < 0 || ih >= d.h) continue;
            double* xrow = xplane + std::int64_t(ih) * d.w;
            for (int ow = 0; ow < d.wo; ++ow) {
              const int iw = ow * d.stride - d.pad + c;
              if (iw >= 0 && iw < d.w) xrow[iw] += csrc[oh * d.wo + ow];
            }
          }
        }
      }
}

}  // namespace

Var conv2d(Graph& g, const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const ConvDims d = conv_dims(x->value, weight->value, stride, pad);
  if (bias && bias->value.size() != d.cout) throw StructuralError("conv2d: bias size mismatch");

  const std::int64_t K = d.k(), P = d.positions();
  const std::int64_t cols = std::int64_t(d.batch) * P;
  auto col = std::make_shared<Tensor>(Tensor::zeros({int(K), int(cols)}));
  im2col(x->value, d, *col);

  Tensor y({d.batch, d.cout, d.ho, d.wo});
  {
    CMap wm(weight->value.data(), d.cout, K);
    CMap cm(col->data(), K, cols);
    // y viewed as [Cout x B*P] needs a transpose-gather; compute into a
    // buffer then scatter per batch element.
    RowMat ym(d.cout, cols);
    ym.noalias() = wm * cm;
    if (bias) {
      for (int co = 0; co < d.cout; ++co) ym.row(co).array() += bias->value[co];
    }
    double* yp = y.data();
    for (int b = 0; b < d.batch; ++b)
      for (int co = 0; co < d.cout; ++co) {
        const std::int64_t base = (std::int64_t(b) * d.cout + co) * P;
        for (std::int64_t p = 0; p < P; ++p) yp[base + p] = ym(co, std::int64_t(b) * P + p);
      }
  }

  const bool needs = track(g, {x, weight, bias});
  std::vector<Var> ins = {x, weight};
  if (bias) ins.push_back(bias);
  if (!needs) return g.emplace(std::move(y), std::move(ins), nullptr);

  return g.emplace(std::move(y), std::move(ins), [d, col](Node& n) {
    const std::int64_t K = d.k(), P = d.positions();
    const std::int64_t cols = std::int64_t(d.batch) * P;
    Node& x_ = *n.inputs[0];
    Node& w_ = *n.inputs[1];

    RowMat gm(d.cout, cols);
    {
      const double* gp = n.grad.data();
      for (int b = 0; b < d.batch; ++b)
        for (int co = 0; co < d.cout; ++co) {
          const std::int64_t base = (std::int64_t(b) * d.cout + co) * P;
          for (std::int64_t p = 0; p < P; ++p) gm(co, std::int64_t(b) * P + p) = gp[base + p];
        }
    }
    if (w_.requires_grad) {
      w_.ensure_grad();
      Map wg(w_.grad.data(), d.cout, K);
      CMap cm(col->data(), K, cols);
      wg.noalias() += gm * cm.transpose();
    }
    if (n.inputs.size() > 2 && n.inputs[2]->requires_grad) {
      Node& b_ = *n.inputs[2];
      b_.ensure_grad();
      for (int co = 0; co < d.cout; ++co) b_.grad[co] += gm.row(co).sum();
    }
    if (x_.requires_grad) {
      x_.ensure_grad();
      Tensor dcol({int(K), int(cols)});
      Map dcm(dcol.data(), K, cols);
      CMap wm(w_.value.data(), d.cout, K);
      dcm.noalias() = wm.transpose() * gm;
      col2im_accumulate(dcol, d, x_.grad);
    }
  });
}

Var maxpool2d(Graph& g, const Var& x, int kernel, int stride, int pad) {
  check_nchw(x->value, "maxpool2d");
  const int batch = x->value.dim(0), ch = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  const int ho = (h + 2 * pad - kernel) / stride + 1;
  const int wo = (w + 2 * pad - kernel) / stride + 1;
  if (ho <= 0 || wo <= 0) throw StructuralError("maxpool2d: input too small");

  Tensor y({batch, ch, ho, wo});
  auto arg = std::make_shared<std::vector<std::int64_t>>(std::size_t(y.size()));
  const double* xp = x->value.data();
  double* yp = y.data();
  std::int64_t oi = 0;
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < ch; ++c) {
      const double* plane = xp + (std::int64_t(b) * ch + c) * h * w;
      const std::int64_t plane_off = (std::int64_t(b) * ch + c) * h * w;
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow, ++oi) {
          double best = -std::numeric_limits<double>::infinity();
          std::int64_t best_idx = -1;
          for (int r = 0; r < kernel; ++r) {
            const int ih = oh * stride - pad + r;
            if (ih < 0 || ih >= h) continue;
            for (int cc = 0; cc < kernel; ++cc) {
              const int iw = ow * stride - pad + cc;
              if (iw < 0 || iw >= w) continue;
              const double v = plane[std::int64_t(ih) * w + iw];
              if (v > best) {
                best = v;
                best_idx = plane_off + std::int64_t(ih) * w + iw;
              }
            }
          }
          if (best_idx < 0) throw StructuralError("maxpool2d: window fully outside input");
          yp[oi] = best;
          (*arg)[std::size_t(oi)] = best_idx;
        }
    }

  if (!track(g, {x})) return g.emplace(std::move(y), {x}, nullptr);
  return g.emplace(std::move(y), {x}, [arg](Node& n) {
    Node& x_ = *n.inputs[0];
    if (!x_.requires_grad) return;
    x_.ensure_grad();
    const std::int64_t sz = n.value.size();
    for (std::int64_t i = 0; i < sz; ++i) x_.grad[(*arg)[std::size_t(i)]] += n.grad[i];
  });
}

Var global_avg_pool(Graph& g, const Var& x) {
  check_nchw(x->value, "global_avg_pool");
  const int batch = x->value.dim(0), ch = x->value.dim(1);
  const std::int64_t hw = std::int64_t(x->value.dim(2)) * x->value.dim(3);
  Tensor y({batch, ch});
  const double* xp = x->value.data();
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < ch; ++c) {
      const double* plane = xp + (std::int64_t(b) * ch + c) * hw;
      double s = 0.0;
      for (std::int64_t i = 0; i < hw; ++i) s += plane[i];
      y[std::int64_t(b) * ch + c] = s / double(hw);
    }
  return g.emplace(std::move(y), {x}, [batch, ch, hw](Node& n) {
    Node& x_ = *n.inputs[0];
    if (!x_.requires_grad) return;
    x_.ensure_grad();
    const double inv = 1.0 / double(hw);
    for (int b = 0; b < batch; ++b)
      for (int c = 0; c < ch; ++c) {
        const double gv = n.grad[std::int64_t(b) * ch + c] * inv;
        double* dst = x_.grad.data() + (std::int64_t(b) * ch + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i) dst[i] += gv;
      }
  });
}

// -- batch norm -----------------------------------------------------------

namespace {

// Shared core for 1-d (stats over B) and 2-d (stats over B*H*W) batch norm.
// Element (i, feature) layout is described by a stride pattern: for each
// feature f there are `cnt` elements at positions given by index_of(j, f).
struct BnPlan {
  int features;
  std::int64_t cnt;
  std::function<std::int64_t(std::int64_t, int)> index_of;
};

Var batchnorm_core(Graph& g, const Var& x, const Var& gamma, const Var& beta, double eps,
                   const BnPlan& plan) {
  if (gamma->value.size() != plan.features || beta->value.size() != plan.features)
    throw StructuralError("batchnorm: gamma/beta size mismatch");
  const int F = plan.features;
  const std::int64_t cnt = plan.cnt;
  if (cnt < 1) throw StructuralError("batchnorm: empty reduction");

  auto mean = std::make_shared<Tensor>(Tensor::zeros({F}));
  auto inv_std = std::make_shared<Tensor>(Tensor::zeros({F}));
  auto xhat = std::make_shared<Tensor>(Tensor(x->value.shape()));

  Tensor y(x->value.shape());
  for (int f = 0; f < F; ++f) {
    double mu = 0.0;
    for (std::int64_t j = 0; j < cnt; ++j) mu += x->value[plan.index_of(j, f)];
    mu /= double(cnt);
    double var = 0.0;
    for (std::int64_t j = 0; j < cnt; ++j) {
      const double dv = x->value[plan.index_of(j, f)] - mu;
      var += dv * dv;
    }
    var /= double(cnt);
    const double is = 1.0 / std::sqrt(var + eps);
    (*mean)[f] = mu;
    (*inv_std)[f] = is;
    const double gm = gamma->value[f], bt = beta->value[f];
    for (std::int64_t j = 0; j < cnt; ++j) {
      const std::int64_t idx = plan.index_of(j, f);
      const double xh = (x->value[idx] - mu) * is;
      (*xhat)[idx] = xh;
      y[idx] = gm * xh + bt;
    }
  }

  if (!track(g, {x, gamma, beta})) return g.emplace(std::move(y), {x, gamma, beta}, nullptr);
  return g.emplace(std::move(y), {x, gamma, beta}, [plan, inv_std, xhat](Node& n) {
    Node& x_ = *n.inputs[0];
    Node& gm_ = *n.inputs[1];
    Node& bt_ = *n.inputs[2];
    const int F = plan.features;
    const std::int64_t cnt = plan.cnt;
    for (int f = 0; f < F; ++f) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::int64_t j = 0; j < cnt; ++j) {
        const std::int64_t idx = plan.index_of(j, f);
        sum_g += n.grad[idx];
        sum_gx += n.grad[idx] * (*xhat)[idx];
      }
      if (bt_.requires_grad) {
        bt_.ensure_grad();
        bt_.grad[f] += sum_g;
      }
      if (gm_.requires_grad) {
        gm_.ensure_grad();
        gm_.grad[f] += sum_gx;
      }
      if (x_.requires_grad) {
        x_.ensure_grad();
        const double coeff = gm_.value[f] * (*inv_std)[f];
        const double mg = sum_g / double(cnt), mgx = sum_gx / double(cnt);
        for (std::int64_t j = 0; j < cnt; ++j) {
          const std::int64_t idx = plan.index_of(j, f);
          x_.grad[idx] += coeff * (n.grad[idx] - mg - (*xhat)[idx] * mgx);
        }
      }
    }
  });
}

}  // namespace

Var batchnorm1d(Graph& g, const Var& x, const Var& gamma, const Var& beta, double eps) {
  check_matrix(x->value, "batchnorm1d");
  const int batch = x->value.dim(0), feat = x->value.dim(1);
  BnPlan plan{feat, batch,
              [feat](std::int64_t j, int f) { return j * feat + f; }};
  return batchnorm_core(g, x, gamma, beta, eps, plan);
}

Var batchnorm2d(Graph& g, const Var& x, const Var& gamma, const Var& beta, double eps) {
  check_nchw(x->value, "batchnorm2d");
  const int batch = x->value.dim(0), ch = x->value.dim(1);
  const std::int64_t hw = std::int64_t(x->value.dim(2)) * x->value.dim(3);
  BnPlan plan{ch, batch * hw, [ch, hw](std::int64_t j, int f) {
                const std::int64_t b = j / hw, p = j % hw;
                return (b * ch + f) * hw + p;
              }};
  return batchnorm_core(g, x, gamma, beta, eps, plan);
}

Var l2_normalize_rows(Graph& g, const Var& x, double eps) {
  const int batch = rows_of(x->value);
  const std::int64_t width = row_width(x->value);
  Tensor y(x->value.shape());
  auto norms = std::make_shared<std::vector<double>>(std::size_t(batch));
  for (int b = 0; b < batch; ++b) {
    const double* row = x->value.data() + std::int64_t(b) * width;
    double s = 0.0;
    for (std::int64_t i = 0; i < width; ++i) s += row[i] * row[i];
    const double nrm = std::sqrt(s);
    (*norms)[std::size_t(b)] = nrm;
    const double inv = 1.0 / (nrm + eps);
    double* dst = y.data() + std::int64_t(b) * width;
    for (std::int64_t i = 0; i < width; ++i) dst[i] = row[i] * inv;
  }
  return g.emplace(std::move(y), {x}, [batch, width, eps, norms](Node& n) {
    Node& x_ = *n.inputs[0];
    if (!x_.requires_grad) return;
    x_.ensure_grad();
    for (int b = 0; b < batch; ++b) {
      const double nrm = (*norms)[std::size_t(b)];
      const double inv = 1.0 / (nrm + eps);
      const double* row = x_.value.data() + std::int64_t(b) * width;
      const double* gr = n.grad.data() + std::int64_t(b) * width;
      double dot = 0.0;
      for (std::int64_t i = 0; i < width; ++i) dot += gr[i] * row[i];
      const double safe = std::max(nrm, eps);
      const double c = dot * inv * inv / safe;
      double* dst = x_.grad.data() + std::int64_t(b) * width;
      for (std::int64_t i = 0; i < width; ++i) dst[i] += gr[i] * inv - row[i] * c;
    }
  });
}

Var rows_dot(Graph& g, const Var& a, const Var& b) {
  check_same_shape(a->value, b->value, "rows_dot");
  const int batch = rows_of(a->value);
  const std::int64_t width = row_width(a->value);
  Tensor y({batch, 1});
  for (int r = 0; r < batch; ++r) {
    const double* pa = a->value.data() + std::int64_t(r) * width;
    const double* pb = b->value.data() + std::int64_t(r) * width;
    double s = 0.0;
    for (std::int64_t i = 0; i < width; ++i) s += pa[i] * pb[i];
    y[r] = s;
  }
  return g.emplace(std::move(y), {a, b}, [batch, width](Node& n) {
    Node& a_ = *n.inputs[0];
    Node& b_ = *n.inputs[1];
    for (int r = 0; r < batch; ++r) {
      const double gv = n.grad[r];
      if (a_.requires_grad) {
        a_.ensure_grad();
        double* dst = a_.grad.data() + std::int64_t(r) * width;
        const double* src = b_.value.data() + std::int64_t(r) * width;
        for (std::int64_t i = 0; i < width; ++i) dst[i] += gv * src[i];
      }
      if (b_.requires_grad) {
        b_.ensure_grad();
        double* dst = b_.grad.data() + std::int64_t(r) * width;
        const double* src = a_.value.data() + std::int64_t(r) * width;
        for (std::int64_t i = 0; i < width; ++i) dst[i] += gv * src[i];
      }
    }
  });
}

Var concat_cols(Graph& g, const Var& a, const Var& b) {
  check_matrix(a->value, "concat_cols");
  check_matrix(b->value, "concat_cols");
  const int batch = a->value.dim(0);
  if (b->value.dim(0) != batch) throw StructuralError("concat_cols: batch mismatch");
  const int ma = a->value.dim(1), mb = b->value.dim(1);
  Tensor y({batch, ma + mb});
  for (int r = 0; r < batch; ++r) {
    double* dst = y.data() + std::int64_t(r) * (ma + mb);
    const double* pa = a->value.data() + std::int64_t(r) * ma;
    const double* pb = b->value.data() + std::int64_t(r) * mb;
    std::copy(pa, pa + ma, dst);
    std::copy(pb, pb + mb, dst + ma);
  }
  return g.emplace(std::move(y), {a, b}, [batch, ma, mb](Node& n) {
    Node& a_ = *n.inputs[0];
    Node& b_ = *n.inputs[1];
    for (int r = 0; r < batch; ++r) {
      const double* gr = n.grad.data() + std::int64_t(r) * (ma + mb);
      if (a_.requires_grad) {
        a_.ensure_grad();
        double* dst = a_.grad.data() + std::int64_t(r) * ma;
        for (int i = 0; i < ma; ++i) dst[i] += gr[i];
      }
      if (b_.requires_grad) {
        b_.ensure_grad();
        double* dst = b_.grad.data() + std::int64_t(r) * mb;
        for (int i = 0; i < mb; ++i) dst[i] += gr[ma + i];
      }
    }
  });
}

Var minmax_norm(Graph& g, const Var& x) {
  const int batch = rows_of(x->value);
  const std::int64_t width = row_width(x->value);
  Tensor y(x->value.shape());
  auto amin = std::make_shared<std::vector<std::int64_t>>(std::size_t(batch));
  auto amax = std::make_shared<std::vector<std::int64_t>>(std::size_t(batch));
  auto denom = std::make_shared<std::vector<double>>(std::size_t(batch));
  for (int b = 0; b < batch; ++b) {
    const double* row = x->value.data() + std::int64_t(b) * width;
    std::int64_t imin = 0, imax = 0;
    for (std::int64_t i = 1; i < width; ++i) {
      if (row[i] < row[imin]) imin = i;
      if (row[i] > row[imax]) imax = i;
    }
    const double lo = row[imin];
    const double dn = kAttnNormEps + row[imax];
    (*amin)[std::size_t(b)] = imin;
    (*amax)[std::size_t(b)] = imax;
    (*denom)[std::size_t(b)] = dn;
    double* dst = y.data() + std::int64_t(b) * width;
    for (std::int64_t i = 0; i < width; ++i) dst[i] = (row[i] - lo) / dn;
  }
  return g.emplace(std::move(y), {x}, [batch, width, amin, amax, denom](Node& n) {
    Node& x_ = *n.inputs[0];
    if (!x_.requires_grad) return;
    x_.ensure_grad();
    for (int b = 0; b < batch; ++b) {
      const double dn = (*denom)[std::size_t(b)];
      const double* gr = n.grad.data() + std::int64_t(b) * width;
      const double* yv = n.value.data() + std::int64_t(b) * width;
      double sum_g = 0.0, sum_gy = 0.0;
      for (std::int64_t i = 0; i < width; ++i) {
        sum_g += gr[i];
        sum_gy += gr[i] * yv[i];
      }
      double* dst = x_.grad.data() + std::int64_t(b) * width;
      for (std::int64_t i = 0; i < width; ++i) dst[i] += gr[i] / dn;
      dst[(*amin)[std::size_t(b)]] -= sum_g / dn;
      // d/dmax of (x-min)/(eps+max) = -(x-min)/(eps+max)^2 = -y/(eps+max)
      dst[(*amax)[std::size_t(b)]] -= sum_gy / dn;
    }
  });
}

Var channel_max(Graph& g, const Var& x) {
  check_nchw(x->value, "channel_max");
  const int batch = x->value.dim(0), ch = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  const std::int64_t hw = std::int64_t(h) * w;
  Tensor y({batch, 1, h, w});
  auto arg = std::make_shared<std::vector<int>>(std::size_t(batch) * hw);
  for (int b = 0; b < batch; ++b) {
    const double* base = x->value.data() + std::int64_t(b) * ch * hw;
    for (std::int64_t p = 0; p < hw; ++p) {
      int best_c = 0;
      double best = base[p];
      for (int c = 1; c < ch; ++c) {
        const double v = base[std::int64_t(c) * hw + p];
        if (v > best) {
          best = v;
          best_c = c;
        }
      }
      y[std::int64_t(b) * hw + p] = best;
      (*arg)[std::size_t(std::int64_t(b) * hw + p)] = best_c;
    }
  }
  return g.emplace(std::move(y), {x}, [batch, ch, hw, arg](Node& n) {
    Node& x_ = *n.inputs[0];
    if (!x_.requires_grad) return;
    x_.ensure_grad();
    for (int b = 0; b < batch; ++b)
      for (std::int64_t p = 0; p < hw; ++p) {
        const std::int64_t oi = std::int64_t(b) * hw + p;
        const int c = (*arg)[std::size_t(oi)];
        x_.grad[(std::int64_t(b) * ch + c) * hw + p] += n.grad[oi];
      }
  });
}

Var hadamard_gate(Graph& g, const Var& x, const Var& map) {
  check_nchw(x->value, "hadamard_gate");
  check_nchw(map->value, "hadamard_gate map");
  const int batch = x->value.dim(0), ch = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  if (map->value.dim(0) != batch || map->value.dim(1) != 1 || map->value.dim(2) != h ||
      map->value.dim(3) != w)
    throw StructuralError("hadamard_gate: map " + map->value.shape_str() + " does not broadcast over " +
                          x->value.shape_str());
  const std::int64_t hw = std::int64_t(h) * w;
  Tensor y(x->value.shape());
  for (int b = 0; b < batch; ++b) {
    const double* m = map->value.data() + std::int64_t(b) * hw;
    for (int c = 0; c < ch; ++c) {
      const double* src = x->value.data() + (std::int64_t(b) * ch + c) * hw;
      double* dst = y.data() + (std::int64_t(b) * ch + c) * hw;
      for (std::int64_t p = 0; p < hw; ++p) dst[p] = src[p] * m[p];
    }
  }
  return g.emplace(std::move(y), {x, map}, [batch, ch, hw](Node& n) {
    Node& x_ = *n.inputs[0];
    Node& m_ = *n.inputs[1];
    for (int b = 0; b < batch; ++b) {
      const double* m = m_.value.data() + std::int64_t(b) * hw;
      for (int c = 0; c < ch; ++c) {
        const std::int64_t off = (std::int64_t(b) * ch + c) * hw;
        if (x_.requires_grad) {
          x_.ensure_grad();
          for (std::int64_t p = 0; p < hw; ++p) x_.grad[off + p] += n.grad[off + p] * m[p];
        }
        if (m_.requires_grad) {
          m_.ensure_grad();
          double* mg = m_.grad.data() + std::int64_t(b) * hw;
          const double* xv = x_.value.data() + off;
          for (std::int64_t p = 0; p < hw; ++p) mg[p] += n.grad[off + p] * xv[p];
        }
      }
    }
  });
}

Var softmax_xent_at0(Graph& g, const Var& logits) {
  check_matrix(logits->value, "softmax_xent_at0");
  const int batch = logits->value.dim(0), ncls = logits->value.dim(1);
  auto probs = std::make_shared<Tensor>(Tensor({batch, ncls}));
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    const double* row = logits->value.data() + std::int64_t(b) * ncls;
    double mx = row[0];
    for (int j = 1; j < ncls; ++j) mx = std::max(mx, row[j]);
    double se = 0.0;
    for (int j = 0; j < ncls; ++j) se += std::exp(row[j] - mx);
    const double lse = mx + std::log(se);
    for (int j = 0; j < ncls; ++j) (*probs)[std::int64_t(b) * ncls + j] = std::exp(row[j] - lse);
    total += lse - row[0];
  }
  Tensor y = Tensor::scalar(total / batch);
  return g.emplace(std::move(y), {logits}, [batch, ncls, probs](Node& n) {
    Node& l_ = *n.inputs[0];
    if (!l_.requires_grad) return;
    l_.ensure_grad();
    const double gv = n.grad[0] / batch;
    for (int b = 0; b < batch; ++b) {
      double* dst = l_.grad.data() + std::int64_t(b) * ncls;
      const double* p = probs->data() + std::int64_t(b) * ncls;
      for (int j = 0; j < ncls; ++j) dst[j] += gv * p[j];
      dst[0] -= gv;
    }
  });
}

namespace {
void softmax_row(const double* in, double* out, int n, double inv_tau) {
  double mx = in[0] * inv_tau;
  for (int j = 1; j < n; ++j) mx = std::max(mx, in[j] * inv_tau);
  double se = 0.0;
  for (int j = 0; j < n; ++j) {
    out[j] = std::exp(in[j] * inv_tau - mx);
    se += out[j];
  }
  for (int j = 0; j < n; ++j) out[j] /= se;
}
}  // namespace

Var distill_kl(Graph& g, const Tensor& teacher_logits, const Var& student_logits, double tau) {
  if (tau <= 0.0) throw ConfigError("distillation temperature must be positive, got " + std::to_string(tau));
  check_matrix(student_logits->value, "distill_kl");
  check_same_shape(teacher_logits, student_logits->value, "distill_kl");
  const int batch = student_logits->value.dim(0), ncls = student_logits->value.dim(1);
  const double inv_tau = 1.0 / tau;

  auto p = std::make_shared<Tensor>(Tensor({batch, ncls}));
  auto q = std::make_shared<Tensor>(Tensor({batch, ncls}));
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    const std::int64_t off = std::int64_t(b) * ncls;
    softmax_row(teacher_logits.data() + off, p->data() + off, ncls, inv_tau);
    softmax_row(student_logits->value.data() + off, q->data() + off, ncls, inv_tau);
    double kl = 0.0;
    for (int j = 0; j < ncls; ++j) {
      const double pj = (*p)[off + j];
      if (pj > 0.0) kl += pj * (std::log(pj) - std::log((*q)[off + j]));
    }
    total += tau * tau * kl;
  }
  Tensor y = Tensor::scalar(total / batch);
  return g.emplace(std::move(y), {student_logits}, [batch, ncls, tau, p, q](Node& n) {
    Node& s_ = *n.inputs[0];
    if (!s_.requires_grad) return;
    s_.ensure_grad();
    // d/ds of tau^2*KL(p || softmax(s/tau)) = tau*(q - p)
    const double gv = n.grad[0] * tau / batch;
    for (std::int64_t i = 0; i < std::int64_t(batch) * ncls; ++i)
      s_.grad[i] += gv * ((*q)[i] - (*p)[i]);
  });
}

Var kl_to_smoothed(Graph& g, const Tensor& p_rows, const Var& w, double eps) {
  const int batch = rows_of(p_rows);
  const std::int64_t width = row_width(p_rows);
  if (rows_of(w->value) != batch || row_width(w->value) != width)
    throw StructuralError("kl_to_smoothed: target " + p_rows.shape_str() + " vs map " +
                          w->value.shape_str());

  auto sums = std::make_shared<std::vector<double>>(std::size_t(batch));
  auto psums = std::make_shared<std::vector<double>>(std::size_t(batch));
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    const double* pr = p_rows.data() + std::int64_t(b) * width;
    const double* wr = w->value.data() + std::int64_t(b) * width;
    double s = 0.0, ps = 0.0, acc = 0.0;
    for (std::int64_t i = 0; i < width; ++i) s += wr[i] + eps;
    for (std::int64_t i = 0; i < width; ++i) {
      ps += pr[i];
      if (pr[i] > 0.0) acc += pr[i] * (std::log(pr[i]) - std::log(wr[i] + eps));
    }
    acc += ps * std::log(s);
    (*sums)[std::size_t(b)] = s;
    (*psums)[std::size_t(b)] = ps;
    total += acc;
  }
  Tensor y = Tensor::scalar(total / batch);
  Tensor p_copy = p_rows;
  return g.emplace(std::move(y), {w},
                   [batch, width, eps, sums, psums, p_copy = std::move(p_copy)](Node& n) {
                     Node& w_ = *n.inputs[0];
                     if (!w_.requires_grad) return;
                     w_.ensure_grad();
                     const double gv = n.grad[0] / batch;
                     for (int b = 0; b < batch; ++b) {
                       const double* pr = p_copy.data() + std::int64_t(b) * width;
                       const double* wr = w_.value.data() + std::int64_t(b) * width;
                       double* dst = w_.grad.data() + std::int64_t(b) * width;
                       const double inv_s = (*psums)[std::size_t(b)] / (*sums)[std::size_t(b)];
                       for (std::int64_t i = 0; i < width; ++i)
                         dst[i] += gv * (inv_s - pr[i] / (wr[i] + eps));
                     }
                   });
}

}  // namespace ppssl::ops
