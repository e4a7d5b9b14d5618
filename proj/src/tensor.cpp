// SPDX-License-Identifier: Apache-2.0
#include "lslab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "lslab/errors.hpp"

namespace lslab {

namespace {

std::size_t checked_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) throw ShapeError(std::string(op) + ": expected 2-d tensor, got " + shape_str(t.shape()));
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->value.assign(checked_numel(shape), 0.0);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.data().begin(), t.data().end(), v);
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad) {
  if (checked_numel(shape) != data.size())
    throw ShapeError("from_data: shape " + shape_str(shape) + " does not match data length " +
                     std::to_string(data.size()));
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_data({1}, {v}, requires_grad);
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& x : t.data()) x = stddev * rng.normal();
  return t;
}

double Tensor::item() const {
  if (numel() != 1) throw ValueError("item(): tensor has " + std::to_string(numel()) + " elements");
  return node_->value[0];
}

Tensor Tape::make_output(std::vector<int> shape, bool requires_grad) {
  return Tensor::zeros(std::move(shape), requires_grad);
}

void Tape::guard_finite(const Tensor& t, const char* op) {
  if (!check_finite) return;
  for (double v : t.data()) {
    if (!std::isfinite(v))
      throw NumericError(std::string(op) + ": non-finite value in output");
  }
}

// ---------------------------------------------------------------------------
// matmul kernels. Plain loops in fixed order; bitwise reproducibility across
// call sites matters more here than peak throughput.

namespace {

void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    const double* ai = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      double av = ai[p];
      const double* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[i,j] = sum_k a[i,k] * b[j,k]
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = acc;
    }
  }
}

// c[i,j] += sum_k a[k,i] * b[k,j]
void mm_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const double* ap = a + static_cast<std::size_t>(p) * m;
    const double* bp = b + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      double av = ap[i];
      double* ci = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void mm_nn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    const double* ai = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      double av = ai[p];
      const double* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void mm_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

}  // namespace

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  Tensor c = make_output({m, n}, a.requires_grad() || b.requires_grad());
  mm_nn(a.data().data(), b.data().data(), c.data().data(), m, k, n);
  guard_finite(c, "matmul");
  if (c.requires_grad()) {
    record([a, b, c, m, k, n]() {
      // dA += dC * B^T ; dB += A^T * dC
      if (a.requires_grad())
        mm_nt_acc(c.grad().data(), b.data().data(), a.grad().data(), m, n, k);
      if (b.requires_grad())
        mm_tn_acc(a.data().data(), c.grad().data(), b.grad().data(), k, m, n);
    });
  }
  return c;
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (k != b.dim(1))
    throw ShapeError("matmul_nt: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + "^T");
  Tensor c = make_output({m, n}, a.requires_grad() || b.requires_grad());
  mm_nt(a.data().data(), b.data().data(), c.data().data(), m, k, n);
  guard_finite(c, "matmul_nt");
  if (c.requires_grad()) {
    record([a, b, c, m, k, n]() {
      // C = A B^T: dA += dC * B ; dB += dC^T * A
      if (a.requires_grad())
        mm_nn_acc(c.grad().data(), b.data().data(), a.grad().data(), m, n, k);
      if (b.requires_grad())
        mm_tn_acc(c.grad().data(), a.data().data(), b.grad().data(), n, m, k);
    });
  }
  return c;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor c = make_output(a.shape(), a.requires_grad() || b.requires_grad());
  auto ad = a.data(), bd = b.data();
  auto cd = c.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] = ad[i] + bd[i];
  guard_finite(c, "add");
  if (c.requires_grad()) {
    record([a, b, c]() {
      auto cg = c.grad();
      if (a.requires_grad()) {
        auto ag = a.grad();
        for (std::size_t i = 0; i < cg.size(); ++i) ag[i] += cg[i];
      }
      if (b.requires_grad()) {
        auto bg = b.grad();
        for (std::size_t i = 0; i < cg.size(); ++i) bg[i] += cg[i];
      }
    });
  }
  return c;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor c = make_output(a.shape(), a.requires_grad() || b.requires_grad());
  auto ad = a.data(), bd = b.data();
  auto cd = c.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] = ad[i] - bd[i];
  guard_finite(c, "sub");
  if (c.requires_grad()) {
    record([a, b, c]() {
      auto cg = c.grad();
      if (a.requires_grad()) {
        auto ag = a.grad();
        for (std::size_t i = 0; i < cg.size(); ++i) ag[i] += cg[i];
      }
      if (b.requires_grad()) {
        auto bg = b.grad();
        for (std::size_t i = 0; i < cg.size(); ++i) bg[i] -= cg[i];
      }
    });
  }
  return c;
}

Tensor Tape::add_row(const Tensor& m, const Tensor& row) {
  require_2d(m, "add_row");
  if (row.ndim() != 1 || row.dim(0) != m.dim(1))
    throw ShapeError("add_row: row " + shape_str(row.shape()) + " incompatible with " +
                     shape_str(m.shape()));
  int r = m.dim(0), c = m.dim(1);
  Tensor out = make_output(m.shape(), m.requires_grad() || row.requires_grad());
  auto md = m.data(), rd = row.data();
  auto od = out.data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) od[static_cast<std::size_t>(i) * c + j] = md[static_cast<std::size_t>(i) * c + j] + rd[j];
  guard_finite(out, "add_row");
  if (out.requires_grad()) {
    record([m, row, out, r, c]() {
      auto og = out.grad();
      if (m.requires_grad()) {
        auto mg = m.grad();
        for (std::size_t i = 0; i < og.size(); ++i) mg[i] += og[i];
      }
      if (row.requires_grad()) {
        auto rg = row.grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) rg[j] += og[static_cast<std::size_t>(i) * c + j];
      }
    });
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor c = make_output(a.shape(), a.requires_grad() || b.requires_grad());
  auto ad = a.data(), bd = b.data();
  auto cd = c.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] = ad[i] * bd[i];
  guard_finite(c, "mul");
  if (c.requires_grad()) {
    record([a, b, c]() {
      auto cg = c.grad();
      if (a.requires_grad()) {
        auto ag = a.grad();
        auto bd2 = b.data();
        for (std::size_t i = 0; i < cg.size(); ++i) ag[i] += cg[i] * bd2[i];
      }
      if (b.requires_grad()) {
        auto bg = b.grad();
        auto ad2 = a.data();
        for (std::size_t i = 0; i < cg.size(); ++i) bg[i] += cg[i] * ad2[i];
      }
    });
  }
  return c;
}

Tensor Tape::scale(const Tensor& a, double cval) {
  Tensor c = make_output(a.shape(), a.requires_grad());
  auto ad = a.data();
  auto cd = c.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] = ad[i] * cval;
  guard_finite(c, "scale");
  if (c.requires_grad()) {
    record([a, c, cval]() {
      auto cg = c.grad();
      auto ag = a.grad();
      for (std::size_t i = 0; i < cg.size(); ++i) ag[i] += cg[i] * cval;
    });
  }
  return c;
}

Tensor Tape::scale_by(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw ShapeError("scale_by: scale must be a 1-element tensor");
  double sv = s.data()[0];
  Tensor c = make_output(a.shape(), a.requires_grad() || s.requires_grad());
  auto ad = a.data();
  auto cd = c.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] = ad[i] * sv;
  guard_finite(c, "scale_by");
  if (c.requires_grad()) {
    record([a, s, c, sv]() {
      auto cg = c.grad();
      if (a.requires_grad()) {
        auto ag = a.grad();
        for (std::size_t i = 0; i < cg.size(); ++i) ag[i] += cg[i] * sv;
      }
      if (s.requires_grad()) {
        auto ad2 = a.data();
        double acc = 0.0;
        for (std::size_t i = 0; i < cg.size(); ++i) acc += cg[i] * ad2[i];
        s.grad()[0] += acc;
      }
    });
  }
  return c;
}

Tensor Tape::select(const Tensor& v, int index) {
  if (v.ndim() != 1) throw ShapeError("select: expected 1-d tensor");
  if (index < 0 || index >= v.dim(0)) throw ValueError("select: index out of range");
  Tensor c = make_output({1}, v.requires_grad());
  c.data()[0] = v.data()[static_cast<std::size_t>(index)];
  if (c.requires_grad()) {
    record([v, c, index]() { v.grad()[static_cast<std::size_t>(index)] += c.grad()[0]; });
  }
  return c;
}

Tensor Tape::relu(const Tensor& a) {
  Tensor c = make_output(a.shape(), a.requires_grad());
  auto ad = a.data();
  auto cd = c.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] = ad[i] > 0.0 ? ad[i] : 0.0;
  if (c.requires_grad()) {
    record([a, c]() {
      auto cg = c.grad();
      auto ag = a.grad();
      auto ad2 = a.data();
      for (std::size_t i = 0; i < cg.size(); ++i)
        if (ad2[i] > 0.0) ag[i] += cg[i];
    });
  }
  return c;
}

Tensor Tape::softmax(const Tensor& v) {
  if (v.ndim() != 1 || v.dim(0) == 0) throw ValueError("softmax: expected non-empty 1-d tensor");
  auto vd = v.data();
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : vd) {
    if (!std::isfinite(x)) throw ValueError("softmax: non-finite input");
    mx = std::max(mx, x);
  }
  Tensor c = make_output(v.shape(), v.requires_grad());
  auto cd = c.data();
  double z = 0.0;
  for (std::size_t i = 0; i < vd.size(); ++i) {
    cd[i] = std::exp(vd[i] - mx);
    z += cd[i];
  }
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] /= z;
  guard_finite(c, "softmax");
  if (c.requires_grad()) {
    record([v, c]() {
      auto cg = c.grad();
      auto cd2 = c.data();
      auto vg = v.grad();
      double dot = 0.0;
      for (std::size_t i = 0; i < cg.size(); ++i) dot += cg[i] * cd2[i];
      for (std::size_t i = 0; i < cg.size(); ++i) vg[i] += cd2[i] * (cg[i] - dot);
    });
  }
  return c;
}

Tensor Tape::softmax_rows(const Tensor& m, const Tensor* add_mask) {
  require_2d(m, "softmax_rows");
  if (add_mask && add_mask->shape() != m.shape())
    throw ShapeError("softmax_rows: mask shape mismatch");
  int r = m.dim(0), c = m.dim(1);
  Tensor out = make_output(m.shape(), m.requires_grad());
  auto md = m.data();
  auto od = out.data();
  const double* mk = add_mask ? add_mask->data().data() : nullptr;
  for (int i = 0; i < r; ++i) {
    const double* xi = md.data() + static_cast<std::size_t>(i) * c;
    double* yi = od.data() + static_cast<std::size_t>(i) * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j) {
      double x = xi[j] + (mk ? mk[static_cast<std::size_t>(i) * c + j] : 0.0);
      mx = std::max(mx, x);
    }
    double z = 0.0;
    for (int j = 0; j < c; ++j) {
      double x = xi[j] + (mk ? mk[static_cast<std::size_t>(i) * c + j] : 0.0);
      yi[j] = std::exp(x - mx);
      z += yi[j];
    }
    for (int j = 0; j < c; ++j) yi[j] /= z;
  }
  guard_finite(out, "softmax_rows");
  if (out.requires_grad()) {
    record([m, out, r, c]() {
      auto og = out.grad();
      auto od2 = out.data();
      auto mg = m.grad();
      for (int i = 0; i < r; ++i) {
        const double* gy = og.data() + static_cast<std::size_t>(i) * c;
        const double* y = od2.data() + static_cast<std::size_t>(i) * c;
        double* gx = mg.data() + static_cast<std::size_t>(i) * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += gy[j] * y[j];
        for (int j = 0; j < c; ++j) gx[j] += y[j] * (gy[j] - dot);
      }
    });
  }
  return out;
}

Tensor Tape::layer_norm_rows(const Tensor& m, const Tensor& gamma, const Tensor& beta,
                             double eps) {
  require_2d(m, "layer_norm_rows");
  int r = m.dim(0), c = m.dim(1);
  if (gamma.ndim() != 1 || gamma.dim(0) != c || beta.ndim() != 1 || beta.dim(0) != c)
    throw ShapeError("layer_norm_rows: gamma/beta must be [cols]");
  Tensor out = make_output(m.shape(), m.requires_grad() || gamma.requires_grad() || beta.requires_grad());
  // Cache per-row mean and inverse stddev for the backward pass.
  auto stats = std::make_shared<std::vector<double>>(static_cast<std::size_t>(r) * 2);
  auto md = m.data();
  auto od = out.data();
  auto gd = gamma.data(), bd = beta.data();
  for (int i = 0; i < r; ++i) {
    const double* xi = md.data() + static_cast<std::size_t>(i) * c;
    double* yi = od.data() + static_cast<std::size_t>(i) * c;
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += xi[j];
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= c;
    double inv = 1.0 / std::sqrt(var + eps);
    (*stats)[static_cast<std::size_t>(i) * 2] = mu;
    (*stats)[static_cast<std::size_t>(i) * 2 + 1] = inv;
    for (int j = 0; j < c; ++j) yi[j] = (xi[j] - mu) * inv * gd[j] + bd[j];
  }
  guard_finite(out, "layer_norm_rows");
  if (out.requires_grad()) {
    record([m, gamma, beta, out, stats, r, c]() {
      auto og = out.grad();
      auto md2 = m.data();
      auto gd2 = gamma.data();
      for (int i = 0; i < r; ++i) {
        const double* gy = og.data() + static_cast<std::size_t>(i) * c;
        const double* xi = md2.data() + static_cast<std::size_t>(i) * c;
        double mu = (*stats)[static_cast<std::size_t>(i) * 2];
        double inv = (*stats)[static_cast<std::size_t>(i) * 2 + 1];
        if (gamma.requires_grad()) {
          auto gg = gamma.grad();
          for (int j = 0; j < c; ++j) gg[j] += gy[j] * (xi[j] - mu) * inv;
        }
        if (beta.requires_grad()) {
          auto bg = beta.grad();
          for (int j = 0; j < c; ++j) bg[j] += gy[j];
        }
        if (m.requires_grad()) {
          auto mg = m.grad();
          double* gx = mg.data() + static_cast<std::size_t>(i) * c;
          // dL/dxhat_j = gy_j * gamma_j; then the standard layer-norm pullback.
          double s1 = 0.0, s2 = 0.0;
          for (int j = 0; j < c; ++j) {
            double gxh = gy[j] * gd2[j];
            s1 += gxh;
            s2 += gxh * (xi[j] - mu) * inv;
          }
          for (int j = 0; j < c; ++j) {
            double gxh = gy[j] * gd2[j];
            double xh = (xi[j] - mu) * inv;
            gx[j] += inv * (gxh - s1 / c - xh * s2 / c);
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::gather_rows(const Tensor& table, const std::vector<int>& ids) {
  require_2d(table, "gather_rows");
  int rows = table.dim(0), c = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= rows) throw ValueError("gather_rows: id " + std::to_string(id) + " out of range");
  Tensor out = make_output({static_cast<int>(ids.size()), c}, table.requires_grad());
  auto td = table.data();
  auto od = out.data();
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::memcpy(od.data() + i * c, td.data() + static_cast<std::size_t>(ids[i]) * c,
                sizeof(double) * static_cast<std::size_t>(c));
  if (out.requires_grad()) {
    record([table, out, ids, c]() {
      auto og = out.grad();
      auto tg = table.grad();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        double* dst = tg.data() + static_cast<std::size_t>(ids[i]) * c;
        const double* src = og.data() + i * c;
        for (int j = 0; j < c; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor Tape::slice_rows(const Tensor& m, int r0, int n) {
  require_2d(m, "slice_rows");
  if (r0 < 0 || n < 0 || r0 + n > m.dim(0)) throw ValueError("slice_rows: range out of bounds");
  int c = m.dim(1);
  Tensor out = make_output({n, c}, m.requires_grad());
  std::memcpy(out.data().data(), m.data().data() + static_cast<std::size_t>(r0) * c,
              sizeof(double) * static_cast<std::size_t>(n) * c);
  if (out.requires_grad()) {
    record([m, out, r0, n, c]() {
      auto og = out.grad();
      auto mg = m.grad();
      for (std::size_t i = 0; i < static_cast<std::size_t>(n) * c; ++i)
        mg[static_cast<std::size_t>(r0) * c + i] += og[i];
    });
  }
  return out;
}

Tensor Tape::slice_cols(const Tensor& m, int c0, int n) {
  require_2d(m, "slice_cols");
  if (c0 < 0 || n < 0 || c0 + n > m.dim(1)) throw ValueError("slice_cols: range out of bounds");
  int r = m.dim(0), c = m.dim(1);
  Tensor out = make_output({r, n}, m.requires_grad());
  auto md = m.data();
  auto od = out.data();
  for (int i = 0; i < r; ++i)
    std::memcpy(od.data() + static_cast<std::size_t>(i) * n,
                md.data() + static_cast<std::size_t>(i) * c + c0,
                sizeof(double) * static_cast<std::size_t>(n));
  if (out.requires_grad()) {
    record([m, out, c0, n, r, c]() {
      auto og = out.grad();
      auto mg = m.grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < n; ++j)
          mg[static_cast<std::size_t>(i) * c + c0 + j] += og[static_cast<std::size_t>(i) * n + j];
    });
  }
  return out;
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ValueError("concat_cols: no inputs");
  int r = parts[0].dim(0);
  int total = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_cols");
    if (p.dim(0) != r) throw ShapeError("concat_cols: row counts differ");
    total += p.dim(1);
    rg = rg || p.requires_grad();
  }
  Tensor out = make_output({r, total}, rg);
  auto od = out.data();
  int off = 0;
  for (const Tensor& p : parts) {
    int pc = p.dim(1);
    auto pd = p.data();
    for (int i = 0; i < r; ++i)
      std::memcpy(od.data() + static_cast<std::size_t>(i) * total + off,
                  pd.data() + static_cast<std::size_t>(i) * pc,
                  sizeof(double) * static_cast<std::size_t>(pc));
    off += pc;
  }
  if (rg) {
    record([parts, out, r, total]() {
      auto og = out.grad();
      int off2 = 0;
      for (const Tensor& p : parts) {
        int pc = p.dim(1);
        if (p.requires_grad()) {
          auto pg = p.grad();
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < pc; ++j)
              pg[static_cast<std::size_t>(i) * pc + j] +=
                  og[static_cast<std::size_t>(i) * total + off2 + j];
        }
        off2 += pc;
      }
    });
  }
  return out;
}

Tensor Tape::sum(const Tensor& a) {
  Tensor c = make_output({1}, a.requires_grad());
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  c.data()[0] = acc;
  guard_finite(c, "sum");
  if (c.requires_grad()) {
    record([a, c]() {
      double g = c.grad()[0];
      auto ag = a.grad();
      for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g;
    });
  }
  return c;
}

Tensor Tape::mean(const Tensor& a) {
  if (a.numel() == 0) throw ValueError("mean: empty tensor");
  Tensor c = make_output({1}, a.requires_grad());
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  double n = static_cast<double>(a.numel());
  c.data()[0] = acc / n;
  guard_finite(c, "mean");
  if (c.requires_grad()) {
    record([a, c, n]() {
      double g = c.grad()[0] / n;
      auto ag = a.grad();
      for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g;
    });
  }
  return c;
}

Tensor Tape::cross_entropy(const Tensor& logits, const std::vector<int>& targets, int pad_id) {
  require_2d(logits, "cross_entropy");
  int p = logits.dim(0), v = logits.dim(1);
  if (static_cast<int>(targets.size()) != p)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(p) + " positions");
  int live = 0;
  for (int t : targets) {
    if (t == pad_id) continue;
    if (t < 0 || t >= v)
      throw ValueError("cross_entropy: target " + std::to_string(t) + " outside vocab of " +
                       std::to_string(v));
    ++live;
  }
  Tensor out = make_output({1}, logits.requires_grad());
  if (live == 0) return out;  // all pads contribute zero

  auto ld = logits.data();
  double total = 0.0;
  // Cache per-row log-normalizers for the backward pass.
  auto lses = std::make_shared<std::vector<double>>(static_cast<std::size_t>(p), 0.0);
  for (int i = 0; i < p; ++i) {
    if (targets[static_cast<std::size_t>(i)] == pad_id) continue;
    const double* row = ld.data() + static_cast<std::size_t>(i) * v;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    double lse = mx + std::log(z);
    (*lses)[static_cast<std::size_t>(i)] = lse;
    total += lse - row[targets[static_cast<std::size_t>(i)]];
  }
  out.data()[0] = total / live;
  guard_finite(out, "cross_entropy");
  if (out.requires_grad()) {
    record([logits, out, targets, pad_id, lses, p, v, live]() {
      double g = out.grad()[0] / live;
      auto ld2 = logits.data();
      auto lg = logits.grad();
      for (int i = 0; i < p; ++i) {
        int t = targets[static_cast<std::size_t>(i)];
        if (t == pad_id) continue;
        const double* row = ld2.data() + static_cast<std::size_t>(i) * v;
        double* grow = lg.data() + static_cast<std::size_t>(i) * v;
        double lse = (*lses)[static_cast<std::size_t>(i)];
        for (int j = 0; j < v; ++j) grow[j] += g * std::exp(row[j] - lse);
        grow[t] -= g;
      }
    });
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ValueError("backward: loss must be a scalar tensor");
  if (!loss.requires_grad())
    throw ValueError("backward: loss does not require grad (not on tape)");
  loss.grad()[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) it->backward();
}

void Tape::clear() { ops_.clear(); }

double finite_difference_check(const TensorFn& f, std::vector<Tensor> params, double eps) {
  if (!(eps > 0.0) || eps > 1e-3)
    throw ValueError("finite_difference_check: eps must be in (0, 1e-3]");
  auto eval = [&]() {
    Tape t;
    Tensor out = f(t, params);
    if (out.numel() != 1) throw ValueError("finite_difference_check: f must return a scalar");
    return out.item();
  };
  double base1 = eval();
  double base2 = eval();
  if (base1 != base2)
    throw ValueError("finite_difference_check: f is not deterministic under repeated evaluation");

  // One analytic pass.
  Tape tape;
  Tensor loss = f(tape, params);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor& pm : params) {
    auto g = pm.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto vals = params[pi].data();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      double orig = vals[i];
      vals[i] = orig + eps;
      double fp = eval();
      vals[i] = orig - eps;
      double fm = eval();
      vals[i] = orig;
      double numeric = (fp - fm) / (2.0 * eps);
      double a = analytic[pi][i];
      double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace lslab
