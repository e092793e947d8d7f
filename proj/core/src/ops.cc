// Copyright 2026 The stylegate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "stylegate/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "stylegate/errors.h"

namespace stylegate {

namespace {

using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

void record(const Tensor& out, Tape::BackwardFn fn) {
  if (out.requires_grad()) Tape::current()->record(out, std::move(fn));
}

bool wants(const ImplPtr& p) { return p->requires_grad; }

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), p = a.dim(1), q = b.dim(1);
  if (b.dim(0) != p) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * q, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * q;
    for (std::size_t k = 0; k < p; ++k) {
      const double aik = ad[i * p + k];
      const double* brow = bd + k * q;
      for (std::size_t j = 0; j < q; ++j) row[j] += aik * brow[j];
    }
  }
  Tensor y = make_result({m, q}, std::move(out), any_requires_grad({&a, &b}));
  record(y, [pa = a.shared_impl(), pb = b.shared_impl(), m, p, q](const TensorImpl& o) {
    const double* __restrict dy = o.grad.data();
    const double* __restrict ad = pa->data.data();
    const double* __restrict bd = pb->data.data();
    if (wants(pa)) {
      double* __restrict da = pa->ensure_grad().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < p; ++k) {
          const double* brow = bd + k * q;
          double acc = 0.0;
          for (std::size_t j = 0; j < q; ++j) acc += dy[i * q + j] * brow[j];
          da[i * p + k] += acc;
        }
      }
    }
    if (wants(pb)) {
      double* __restrict db = pb->ensure_grad().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < p; ++k) {
          const double aik = ad[i * p + k];
          double* drow = db + k * q;
          for (std::size_t j = 0; j < q; ++j) drow[j] += aik * dy[i * q + j];
        }
      }
    }
  });
  return y;
}

namespace {

// Elementwise binary op with per-element partial derivatives.
template <typename Fwd, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, DA da_fn, DB db_fn) {
  require_same_shape(a, b, name);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a[i], b[i]);
  Tensor y = make_result(a.shape(), std::move(out), any_requires_grad({&a, &b}));
  record(y, [pa = a.shared_impl(), pb = b.shared_impl(), da_fn, db_fn](const TensorImpl& o) {
    if (wants(pa)) {
      auto g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * da_fn(pa->data[i], pb->data[i]);
    }
    if (wants(pb)) {
      auto g = pb->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * db_fn(pa->data[i], pb->data[i]);
    }
  });
  return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  Tensor y = make_result(a.shape(), std::move(out), any_requires_grad({&a}));
  record(y, [pa = a.shared_impl(), factor](const TensorImpl& o) {
    auto g = pa->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor;
  });
  return y;
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw DimensionError("scale_by: factor must be a single element, got " + shape_string(s.shape()));
  const double factor = s[0];
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  Tensor y = make_result(a.shape(), std::move(out), any_requires_grad({&a, &s}));
  record(y, [pa = a.shared_impl(), ps = s.shared_impl()](const TensorImpl& o) {
    const double factor = ps->data[0];
    if (wants(pa)) {
      auto g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * factor;
    }
    if (wants(ps)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * pa->data[i];
      ps->ensure_grad()[0] += acc;
    }
  });
  return y;
}

Tensor add_n(std::span<const Tensor> terms) {
  if (terms.empty()) throw DimensionError("add_n: no terms");
  std::vector<double> out(terms[0].data().begin(), terms[0].data().end());
  bool grad = false;
  std::vector<ImplPtr> impls;
  for (std::size_t t = 0; t < terms.size(); ++t) {
    require_same_shape(terms[0], terms[t], "add_n");
    if (t > 0) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += terms[t][i];
    }
    grad = grad || any_requires_grad({&terms[t]});
    impls.push_back(terms[t].shared_impl());
  }
  Tensor y = make_result(terms[0].shape(), std::move(out), grad);
  record(y, [impls = std::move(impls)](const TensorImpl& o) {
    for (const auto& p : impls) {
      if (!wants(p)) continue;
      auto g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
  return y;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "add_bias");
  const std::size_t n = bias.dim(0);
  if (x.shape().back() != n || x.rank() > 2) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not fit " + shape_string(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bias[j];
  }
  Tensor y = make_result(x.shape(), std::move(out), any_requires_grad({&x, &bias}));
  record(y, [px = x.shared_impl(), pb = bias.shared_impl(), rows, n](const TensorImpl& o) {
    if (wants(px)) {
      auto g = px->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (wants(pb)) {
      auto g = pb->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[r * n + j];
      }
    }
  });
  return y;
}

Tensor relu(const Tensor& v) {
  std::vector<double> out(v.data().begin(), v.data().end());
  for (double& x : out) x = x > 0.0 ? x : 0.0;
  Tensor y = make_result(v.shape(), std::move(out), any_requires_grad({&v}));
  record(y, [pv = v.shared_impl()](const TensorImpl& o) {
    auto g = pv->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (pv->data[i] > 0.0) g[i] += o.grad[i];
    }
  });
  return y;
}

Tensor softplus(const Tensor& v) {
  std::vector<double> out(v.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = v[i];
    out[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  }
  Tensor y = make_result(v.shape(), std::move(out), any_requires_grad({&v}));
  record(y, [pv = v.shared_impl()](const TensorImpl& o) {
    auto g = pv->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = pv->data[i];
      // logistic(x), split by sign to avoid overflow
      const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      g[i] += o.grad[i] * s;
    }
  });
  return y;
}

Tensor softmax(const Tensor& v) {
  require_rank(v, 1, "softmax");
  double max_finite = -std::numeric_limits<double>::infinity();
  for (double x : v.data()) {
    if (std::isfinite(x)) max_finite = std::max(max_finite, x);
  }
  if (!std::isfinite(max_finite)) throw InputError("no selectable expert");
  std::vector<double> out(v.numel(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (std::isfinite(v[i])) {
      out[i] = std::exp(v[i] - max_finite);
      total += out[i];
    }
  }
  for (double& x : out) x /= total;
  Tensor y = make_result(v.shape(), std::move(out), any_requires_grad({&v}));
  record(y, [pv = v.shared_impl()](const TensorImpl& o) {
    double dot = 0.0;
    for (std::size_t i = 0; i < o.data.size(); ++i) dot += o.grad[i] * o.data[i];
    auto g = pv->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (o.data[i] != 0.0) g[i] += o.data[i] * (o.grad[i] - dot);
    }
  });
  return y;
}

Tensor conv1d(const Tensor& x, const Tensor& kernels, std::size_t stride) {
  if (x.rank() == 2 && x.dim(0) == 0) throw InputError("conv1d: empty sequence");
  require_rank(x, 2, "conv1d");
  require_rank(kernels, 3, "conv1d");
  if (stride == 0) throw ConfigError("conv1d: stride must be positive");
  const std::size_t t_in = x.dim(0), f = x.dim(1);
  const std::size_t k = kernels.dim(0), w = kernels.dim(1);
  if (kernels.dim(2) != f) {
    throw DimensionError("conv1d: kernels " + shape_string(kernels.shape()) + " do not match input " +
                         shape_string(x.shape()));
  }
  const std::size_t t_out = (t_in + stride - 1) / stride;
  const std::size_t needed = (t_out - 1) * stride + w;
  const std::size_t pad_total = needed > t_in ? needed - t_in : 0;
  const long pad_left = static_cast<long>(pad_total / 2);

  // Kernels rearranged to [W x F x K] so the innermost loop runs over K.
  std::vector<double> kt(w * f * k);
  for (std::size_t kk = 0; kk < k; ++kk) {
    for (std::size_t ww = 0; ww < w; ++ww) {
      for (std::size_t ff = 0; ff < f; ++ff) kt[(ww * f + ff) * k + kk] = kernels[(kk * w + ww) * f + ff];
    }
  }
  std::vector<double> out(t_out * k, 0.0);
  const double* xd = x.data().data();
  for (std::size_t t = 0; t < t_out; ++t) {
    double* orow = out.data() + t * k;
    for (std::size_t ww = 0; ww < w; ++ww) {
      const long ti = static_cast<long>(t * stride + ww) - pad_left;
      if (ti < 0 || ti >= static_cast<long>(t_in)) continue;
      const double* xrow = xd + static_cast<std::size_t>(ti) * f;
      for (std::size_t ff = 0; ff < f; ++ff) {
        const double xv = xrow[ff];
        const double* krow = kt.data() + (ww * f + ff) * k;
        for (std::size_t kk = 0; kk < k; ++kk) orow[kk] += xv * krow[kk];
      }
    }
  }
  Tensor y = make_result({t_out, k}, std::move(out), any_requires_grad({&x, &kernels}));
  record(y, [px = x.shared_impl(), pk = kernels.shared_impl(), t_in, t_out, f, k, w, stride,
             pad_left](const TensorImpl& o) {
    const double* __restrict dy = o.grad.data();
    double* __restrict dx = wants(px) ? px->ensure_grad().data() : nullptr;
    double* __restrict dk = wants(pk) ? pk->ensure_grad().data() : nullptr;
    const double* __restrict kd = pk->data.data();
    const double* __restrict xd = px->data.data();
    for (std::size_t t = 0; t < t_out; ++t) {
      for (std::size_t ww = 0; ww < w; ++ww) {
        const long ti = static_cast<long>(t * stride + ww) - pad_left;
        if (ti < 0 || ti >= static_cast<long>(t_in)) continue;
        const std::size_t row = static_cast<std::size_t>(ti) * f;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double g = dy[t * k + kk];
          if (g == 0.0) continue;
          const std::size_t kbase = (kk * w + ww) * f;
          if (dx) {
            for (std::size_t ff = 0; ff < f; ++ff) dx[row + ff] += g * kd[kbase + ff];
          }
          if (dk) {
            for (std::size_t ff = 0; ff < f; ++ff) dk[kbase + ff] += g * xd[row + ff];
          }
        }
      }
    }
  });
  return y;
}

Tensor mean_pool(const Tensor& x) {
  require_rank(x, 2, "mean_pool");
  const std::size_t t = x.dim(0), f = x.dim(1);
  if (t == 0) throw InputError("mean_pool: empty sequence");
  std::vector<double> out(f, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < f; ++j) out[j] += x[i * f + j];
  }
  for (double& v : out) v /= static_cast<double>(t);
  Tensor y = make_result({f}, std::move(out), any_requires_grad({&x}));
  record(y, [px = x.shared_impl(), t, f](const TensorImpl& o) {
    auto g = px->ensure_grad();
    const double inv = 1.0 / static_cast<double>(t);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < f; ++j) g[i * f + j] += o.grad[j] * inv;
    }
  });
  return y;
}

Tensor segment_mean_pool(const Tensor& x, std::span<const Segment> segments) {
  require_rank(x, 2, "segment_mean_pool");
  if (segments.empty()) throw InputError("segment_mean_pool: no segments");
  const std::size_t t = x.dim(0), f = x.dim(1);
  for (const Segment& s : segments) {
    if (s.begin >= s.end || s.end > t) {
      throw InputError("segment [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
                       ") outside sequence of length " + std::to_string(t));
    }
  }
  const std::size_t n = segments.size();
  std::vector<double> out(n * f, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const double inv = 1.0 / static_cast<double>(segments[s].end - segments[s].begin);
    for (std::size_t i = segments[s].begin; i < segments[s].end; ++i) {
      for (std::size_t j = 0; j < f; ++j) out[s * f + j] += x[i * f + j];
    }
    for (std::size_t j = 0; j < f; ++j) out[s * f + j] *= inv;
  }
  Tensor y = make_result({n, f}, std::move(out), any_requires_grad({&x}));
  record(y, [px = x.shared_impl(), segs = std::vector<Segment>(segments.begin(), segments.end()),
             f](const TensorImpl& o) {
    auto g = px->ensure_grad();
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const double inv = 1.0 / static_cast<double>(segs[s].end - segs[s].begin);
      for (std::size_t i = segs[s].begin; i < segs[s].end; ++i) {
        for (std::size_t j = 0; j < f; ++j) g[i * f + j] += o.grad[s * f + j] * inv;
      }
    }
  });
  return y;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() == 1) {
    Tensor row = reshape(x, {1, x.dim(0)});
    Tensor y = add_bias(matmul(row, weight), bias);
    return reshape(y, {y.dim(1)});
  }
  return add_bias(matmul(x, weight), bias);
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse");
  const std::size_t n = pred.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  Tensor y = make_result({1}, {acc / static_cast<double>(n)}, any_requires_grad({&pred, &target}));
  record(y, [pp = pred.shared_impl(), pt = target.shared_impl(), n](const TensorImpl& o) {
    const double c = 2.0 * o.grad[0] / static_cast<double>(n);
    if (wants(pp)) {
      auto g = pp->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[i] += c * (pp->data[i] - pt->data[i]);
    }
    if (wants(pt)) {
      auto g = pt->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[i] -= c * (pp->data[i] - pt->data[i]);
    }
  });
  return y;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor y = make_result({1}, {acc}, any_requires_grad({&x}));
  record(y, [px = x.shared_impl()](const TensorImpl& o) {
    auto g = px->ensure_grad();
    for (double& v : g) v += o.grad[0];
  });
  return y;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor concat_cols(std::span<const Tensor> blocks) {
  if (blocks.empty()) throw DimensionError("concat_cols: no blocks");
  const std::size_t m = blocks[0].dim(0);
  std::size_t total = 0;
  bool grad = false;
  std::vector<ImplPtr> impls;
  std::vector<std::size_t> widths;
  for (const Tensor& b : blocks) {
    require_rank(b, 2, "concat_cols");
    if (b.dim(0) != m) {
      throw DimensionError("concat_cols: row count mismatch " + shape_string(blocks[0].shape()) + " vs " +
                           shape_string(b.shape()));
    }
    total += b.dim(1);
    widths.push_back(b.dim(1));
    grad = grad || any_requires_grad({&b});
    impls.push_back(b.shared_impl());
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (const Tensor& b : blocks) {
    const std::size_t n = b.dim(1);
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(b.data().data() + r * n, n, out.data() + r * total + offset);
    }
    offset += n;
  }
  Tensor y = make_result({m, total}, std::move(out), grad);
  record(y, [impls = std::move(impls), widths = std::move(widths), m, total](const TensorImpl& o) {
    std::size_t offset = 0;
    for (std::size_t b = 0; b < impls.size(); ++b) {
      const std::size_t n = widths[b];
      if (wants(impls[b])) {
        auto g = impls[b]->ensure_grad();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t j = 0; j < n; ++j) g[r * n + j] += o.grad[r * total + offset + j];
        }
      }
      offset += n;
    }
  });
  return y;
}

Tensor repeat_rows(const Tensor& v, std::size_t rows) {
  const std::size_t d = v.numel();
  if (!(v.rank() == 1 || (v.rank() == 2 && v.dim(0) == 1))) {
    throw DimensionError("repeat_rows: expected a vector, got " + shape_string(v.shape()));
  }
  std::vector<double> out(rows * d);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(v.data().data(), d, out.data() + r * d);
  Tensor y = make_result({rows, d}, std::move(out), any_requires_grad({&v}));
  record(y, [pv = v.shared_impl(), rows, d](const TensorImpl& o) {
    auto g = pv->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < d; ++j) g[j] += o.grad[r * d + j];
    }
  });
  return y;
}

Tensor gather_rows(const Tensor& m, std::span<const long> index) {
  require_rank(m, 2, "gather_rows");
  const std::size_t n = m.dim(0), d = m.dim(1);
  for (long i : index) {
    if (i >= static_cast<long>(n)) throw DimensionError("gather_rows: index " + std::to_string(i) + " out of range");
  }
  std::vector<double> out(index.size() * d, 0.0);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= 0) std::copy_n(m.data().data() + index[r] * d, d, out.data() + r * d);
  }
  Tensor y = make_result({index.size(), d}, std::move(out), any_requires_grad({&m}));
  record(y, [pm = m.shared_impl(), idx = std::vector<long>(index.begin(), index.end()), d](const TensorImpl& o) {
    auto g = pm->ensure_grad();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0) continue;
      for (std::size_t j = 0; j < d; ++j) g[idx[r] * d + j] += o.grad[r * d + j];
    }
  });
  return y;
}

Tensor select(const Tensor& v, std::size_t i) {
  if (i >= v.numel()) throw DimensionError("select: index " + std::to_string(i) + " out of range");
  Tensor y = make_result({1}, {v[i]}, any_requires_grad({&v}));
  record(y, [pv = v.shared_impl(), i](const TensorImpl& o) { pv->ensure_grad()[i] += o.grad[0]; });
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  Tensor y = make_result(std::move(shape), x.to_vector(), any_requires_grad({&x}));
  record(y, [px = x.shared_impl()](const TensorImpl& o) {
    auto g = px->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
  return y;
}

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(values), true);
}

}  // namespace stylegate
