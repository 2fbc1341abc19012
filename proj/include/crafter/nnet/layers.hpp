#pragma once

#include <cmath>
#include <vector>

#include "crafter/nnet/tensor.hpp"

namespace crafter::nn {

struct Conv2dGeom {
  int channels, height, width, kernel_h, kernel_w, stride, padding;
  int out_h() const { return (height + 2 * padding - kernel_h) / stride + 1; }
  int out_w() const { return (width + 2 * padding - kernel_w) / stride + 1; }
  int col_rows() const { return channels * kernel_h * kernel_w; }
  int col_cols() const { return out_h() * out_w(); }
};

namespace detail {

// Unfolds one image into rows of a column matrix with leading dimension ld.
template <class T>
void im2col(const T* img, const Conv2dGeom& g, T* col, std::size_t ld) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int c = 0; c < g.channels; ++c)
    for (int ky = 0; ky < g.kernel_h; ++ky)
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        T* row = col + static_cast<std::size_t>((c * g.kernel_h + ky) * g.kernel_w + kx) * ld;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          T* dst = row + oy * ow;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = img + static_cast<std::size_t>((c * g.height + iy) * g.width);
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : T(0);
          }
        }
      }
}

template <class T>
void col2im(const T* col, const Conv2dGeom& g, T* img, std::size_t ld) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int c = 0; c < g.channels; ++c)
    for (int ky = 0; ky < g.kernel_h; ++ky)
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        const T* row = col + static_cast<std::size_t>((c * g.kernel_h + ky) * g.kernel_w + kx) * ld;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          T* dst = img + static_cast<std::size_t>((c * g.height + iy) * g.width);
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < g.width) dst[ix] += row[oy * ow + ox];
          }
        }
      }
}

}  // namespace detail

// Cross-correlation of x[N, C, H, W] with w[O, C, kh, kw] plus b[O]. The
// batch is unfolded into one [C*kh*kw, N*oh*ow] matrix so each pass is a
// single GEMM.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, int padding) {
  detail::expect(x.rank() == 4 && w.rank() == 4 && x.dim(1) == w.dim(1),
                 "conv2d: input " + to_string(x.shape()) + " vs weight " + to_string(w.shape()));
  detail::expect(b.size() == static_cast<std::size_t>(w.dim(0)), "conv2d: bias size");
  detail::expect(stride >= 1 && padding >= 0, "conv2d: bad stride/padding");
  const Conv2dGeom g{x.dim(1), x.dim(2), x.dim(3), w.dim(2), w.dim(3), stride, padding};
  detail::expect(g.out_h() >= 1 && g.out_w() >= 1, "conv2d: kernel larger than padded input");
  const int n = x.dim(0), o = w.dim(0);
  const int ck = g.col_rows(), hw = g.col_cols();
  const std::size_t in_sz = static_cast<std::size_t>(g.channels * g.height * g.width);
  const std::size_t ld = static_cast<std::size_t>(n) * static_cast<std::size_t>(hw);
  const auto unfold = [g, n, hw, in_sz, ld](const T* img, Buffer<T>& col) {
    col.resize(static_cast<std::size_t>(g.col_rows()) * ld);
    for (int i = 0; i < n; ++i)
      detail::im2col(img + in_sz * static_cast<std::size_t>(i), g, col.data() + static_cast<std::size_t>(i * hw), ld);
  };
  Buffer<T> col;
  unfold(x.data().data(), col);
  RowMat<T> y = CMatMap<T>(w.data().data(), o, ck) * CMatMap<T>(col.data(), ck, static_cast<Eigen::Index>(ld));
  Buffer<T> v(static_cast<std::size_t>(n) * static_cast<std::size_t>(o * hw));
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < o; ++c) {
      const T bias = b[static_cast<std::size_t>(c)];
      const T* src = y.data() + static_cast<std::size_t>(c) * ld + static_cast<std::size_t>(i * hw);
      T* dst = v.data() + static_cast<std::size_t>((i * o + c) * hw);
      for (int j = 0; j < hw; ++j) dst[j] = src[j] + bias;
    }
  // The input layer never needs dx, so its unfolded batch is rebuilt in
  // backward instead of being kept alive.
  const bool keep_col = x.requires_grad();
  if (!keep_col || !detail::any_requires<T>({&x, &w, &b})) col = {};
  Shape shape{n, o, g.out_h(), g.out_w()};
  return detail::make_result<T>(
      std::move(shape), std::move(v), {&x, &w, &b},
      [g, n, o, ck, hw, in_sz, ld, unfold, col = std::move(col)](Node<T>& self) mutable {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        RowMat<T> gy(o, static_cast<Eigen::Index>(ld));
        for (int i = 0; i < n; ++i)
          for (int c = 0; c < o; ++c)
            std::copy_n(self.grad.data() + static_cast<std::size_t>((i * o + c) * hw), hw,
                        gy.data() + static_cast<std::size_t>(c) * ld + static_cast<std::size_t>(i * hw));
        if (pb.requires_grad) {
          pb.ensure_grad();
          VecMap<T>(pb.grad.data(), o) += gy.rowwise().sum();
        }
        if (pw.requires_grad) {
          pw.ensure_grad();
          if (col.empty()) unfold(px.value.data(), col);
          MatMap<T>(pw.grad.data(), o, ck).noalias() +=
              gy * CMatMap<T>(col.data(), ck, static_cast<Eigen::Index>(ld)).transpose();
        }
        col = {};
        if (px.requires_grad) {
          px.ensure_grad();
          const RowMat<T> dcol = CMatMap<T>(pw.value.data(), o, ck).transpose() * gy;
          for (int i = 0; i < n; ++i)
            detail::col2im(dcol.data() + static_cast<std::size_t>(i * hw), g,
                           px.grad.data() + in_sz * static_cast<std::size_t>(i), ld);
        }
      });
}

struct PatchGeom {
  int height, width, patch, stride;
  int grid_h() const { return (height - patch) / stride + 1; }
  int grid_w() const { return (width - patch) / stride + 1; }
  int count() const { return grid_h() * grid_w(); }
};

// Patches start every `stride` pixels; a border remainder narrower than one
// stride is not covered.
inline PatchGeom patch_geometry(int height, int width, int patch, int stride) {
  if (patch < 1 || stride < 1) throw ShapeError("patch and stride must be positive");
  if (patch > height || patch > width) {
    throw ShapeError("patch " + std::to_string(patch) + " exceeds map " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  if (stride > patch) {
    throw ShapeError("stride " + std::to_string(stride) + " > patch " + std::to_string(patch) +
                     " leaves pixels uncovered");
  }
  return {height, width, patch, stride};
}

// x[N, C, H, W] -> [N, k, C*patch*patch], row-major over the patch grid;
// features are ordered (channel, row, column) within the patch.
template <class T>
Tensor<T> patch_split(const Tensor<T>& x, int patch, int stride) {
  detail::expect(x.rank() == 4, "patch_split: expected [N, C, H, W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const PatchGeom pg = patch_geometry(h, w, patch, stride);
  const int k = pg.count(), gw = pg.grid_w(), f = c * patch * patch;
  std::vector<std::size_t> index(static_cast<std::size_t>(k * f));
  for (int t = 0; t < k; ++t) {
    const int y0 = (t / gw) * stride, x0 = (t % gw) * stride;
    for (int ch = 0; ch < c; ++ch)
      for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px)
          index[static_cast<std::size_t>(t * f + (ch * patch + py) * patch + px)] =
              static_cast<std::size_t>((ch * h + y0 + py) * w + x0 + px);
  }
  const std::size_t in_sz = static_cast<std::size_t>(c * h * w), out_sz = index.size();
  Buffer<T> v(out_sz * static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const T* src = x.data().data() + in_sz * static_cast<std::size_t>(i);
    T* dst = v.data() + out_sz * static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < out_sz; ++j) dst[j] = src[index[j]];
  }
  return detail::make_result<T>({n, k, f}, std::move(v), {&x}, [n, in_sz, out_sz, index](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (int i = 0; i < n; ++i) {
      T* dst = p.grad.data() + in_sz * static_cast<std::size_t>(i);
      const T* src = self.grad.data() + out_sz * static_cast<std::size_t>(i);
      for (std::size_t j = 0; j < out_sz; ++j) dst[index[j]] += src[j];
    }
  });
}

// x[N, k, d] with tok[d] appended as token k.
template <class T>
Tensor<T> append_token(const Tensor<T>& x, const Tensor<T>& tok) {
  detail::expect(x.rank() == 3 && tok.size() == static_cast<std::size_t>(x.dim(2)), "append_token: dim mismatch");
  const int n = x.dim(0), k = x.dim(1), d = x.dim(2);
  const auto dz = static_cast<std::size_t>(d);
  Buffer<T> v(static_cast<std::size_t>(n * (k + 1) * d));
  for (int i = 0; i < n; ++i) {
    std::copy_n(x.data().data() + static_cast<std::size_t>(i * k) * dz, k * d, v.data() + static_cast<std::size_t>(i * (k + 1)) * dz);
    std::copy_n(tok.data().data(), d, v.data() + static_cast<std::size_t>(i * (k + 1) + k) * dz);
  }
  return detail::make_result<T>({n, k + 1, d}, std::move(v), {&x, &tok}, [n, k, dz](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pt = *self.parents[1];
    if (px.requires_grad) px.ensure_grad();
    if (pt.requires_grad) pt.ensure_grad();
    for (int i = 0; i < n; ++i) {
      const T* g = self.grad.data() + static_cast<std::size_t>(i * (k + 1)) * dz;
      if (px.requires_grad) {
        T* dst = px.grad.data() + static_cast<std::size_t>(i * k) * dz;
        for (std::size_t j = 0; j < static_cast<std::size_t>(k) * dz; ++j) dst[j] += g[j];
      }
      if (pt.requires_grad)
        for (std::size_t j = 0; j < dz; ++j) pt.grad[j] += g[static_cast<std::size_t>(k) * dz + j];
    }
  });
}

// Token `idx` of x[N, k, d] -> [N, d].
template <class T>
Tensor<T> select_token(const Tensor<T>& x, int idx) {
  detail::expect(x.rank() == 3 && idx >= 0 && idx < x.dim(1), "select_token: bad index");
  const int n = x.dim(0), k = x.dim(1), d = x.dim(2);
  Buffer<T> v(static_cast<std::size_t>(n * d));
  for (int i = 0; i < n; ++i)
    std::copy_n(x.data().data() + static_cast<std::size_t>((i * k + idx) * d), d, v.data() + static_cast<std::size_t>(i * d));
  return detail::make_result<T>({n, d}, std::move(v), {&x}, [n, k, d, idx](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j)
        p.grad[static_cast<std::size_t>((i * k + idx) * d + j)] += self.grad[static_cast<std::size_t>(i * d + j)];
  });
}

// Mean over the token axis of x[N, k, d] -> [N, d].
template <class T>
Tensor<T> mean_tokens(const Tensor<T>& x) {
  detail::expect(x.rank() == 3, "mean_tokens: expected [N, k, d]");
  const int n = x.dim(0), k = x.dim(1), d = x.dim(2);
  Buffer<T> v(static_cast<std::size_t>(n * d), T(0));
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < k; ++t)
      for (int j = 0; j < d; ++j) v[static_cast<std::size_t>(i * d + j)] += x[static_cast<std::size_t>((i * k + t) * d + j)];
  for (auto& a : v) a /= static_cast<T>(k);
  return detail::make_result<T>({n, d}, std::move(v), {&x}, [n, k, d](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    const T inv = T(1) / static_cast<T>(k);
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < k; ++t)
        for (int j = 0; j < d; ++j)
          p.grad[static_cast<std::size_t>((i * k + t) * d + j)] += self.grad[static_cast<std::size_t>(i * d + j)] * inv;
  });
}

// x[k, d] repeated n times -> [n, k, d].
template <class T>
Tensor<T> expand_batch(const Tensor<T>& x, int n) {
  detail::expect(x.rank() == 2 && n >= 1, "expand_batch: expected [k, d]");
  const std::size_t m = x.size();
  Buffer<T> v(m * static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) std::copy(x.data().begin(), x.data().end(), v.begin() + static_cast<std::ptrdiff_t>(m * static_cast<std::size_t>(i)));
  return detail::make_result<T>({n, x.dim(0), x.dim(1)}, std::move(v), {&x}, [m](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i % m] += self.grad[i];
  });
}

enum class SoftmaxAxis { keys, queries };

template <class T>
struct AttentionResult {
  Tensor<T> out;  // [N, nq, d]
  // Weights [N, heads, nq, nk].
  Buffer<T> weights;
  int heads = 1;
  int queries = 0;
  int keys = 0;
};

// Multi-head scaled dot-product attention on projected q[N, nq, d],
// k[N, nk, d], v[N, nk, d]. Heads take consecutive d/heads column blocks;
// scores are scaled by 1/sqrt(d/heads).
template <class T>
AttentionResult<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, int heads,
                             SoftmaxAxis axis = SoftmaxAxis::keys) {
  detail::expect(q.rank() == 3 && k.rank() == 3 && v.rank() == 3, "attention: expected [N, tokens, d]");
  detail::expect(q.dim(0) == k.dim(0) && k.dim(0) == v.dim(0) && k.dim(1) == v.dim(1) && q.dim(2) == k.dim(2) &&
                     k.dim(2) == v.dim(2),
                 "attention: q " + to_string(q.shape()) + " k " + to_string(k.shape()) + " v " + to_string(v.shape()));
  const int n = q.dim(0), nq = q.dim(1), nk = k.dim(1), d = q.dim(2);
  detail::expect(heads >= 1 && d % heads == 0, "attention: d not divisible by heads");
  const int dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  using Strided = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
  using StridedMut = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;

  AttentionResult<T> res;
  res.heads = heads;
  res.queries = nq;
  res.keys = nk;
  res.weights.resize(static_cast<std::size_t>(n * heads * nq * nk));
  Buffer<T> out(static_cast<std::size_t>(n * nq * d));
  for (int i = 0; i < n; ++i) {
    const T* qb = q.data().data() + static_cast<std::size_t>(i * nq * d);
    const T* kb = k.data().data() + static_cast<std::size_t>(i * nk * d);
    const T* vb = v.data().data() + static_cast<std::size_t>(i * nk * d);
    T* ob = out.data() + static_cast<std::size_t>(i * nq * d);
    for (int h = 0; h < heads; ++h) {
      MatMap<T> a(res.weights.data() + static_cast<std::size_t>((i * heads + h) * nq * nk), nq, nk);
      a.noalias() = Strided(qb + h * dh, nq, dh, Eigen::OuterStride<>(d)) *
                    Strided(kb + h * dh, nk, dh, Eigen::OuterStride<>(d)).transpose();
      a *= scale;
      if (axis == SoftmaxAxis::keys) {
        for (int r = 0; r < nq; ++r) {
          auto row = a.row(r);
          row.array() = (row.array() - row.maxCoeff()).exp();
          row /= row.sum();
        }
      } else {
        for (int c = 0; c < nk; ++c) {
          auto col = a.col(c);
          col.array() = (col.array() - col.maxCoeff()).exp();
          col /= col.sum();
        }
      }
      StridedMut(ob + h * dh, nq, dh, Eigen::OuterStride<>(d)).noalias() =
          a * Strided(vb + h * dh, nk, dh, Eigen::OuterStride<>(d));
    }
  }
  res.out = detail::make_result<T>(
      {n, nq, d}, std::move(out), {&q, &k, &v},
      [n, nq, nk, d, heads, dh, scale, axis, w = res.weights](Node<T>& self) {
        auto& pq = *self.parents[0];
        auto& pk = *self.parents[1];
        auto& pv = *self.parents[2];
        for (auto* p : {&pq, &pk, &pv})
          if (p->requires_grad) p->ensure_grad();
        RowMat<T> da(nq, nk), ds(nq, nk);
        for (int i = 0; i < n; ++i) {
          const std::size_t qo = static_cast<std::size_t>(i * nq * d), ko = static_cast<std::size_t>(i * nk * d);
          for (int h = 0; h < heads; ++h) {
            CMatMap<T> a(w.data() + static_cast<std::size_t>((i * heads + h) * nq * nk), nq, nk);
            Strided go(self.grad.data() + qo + h * dh, nq, dh, Eigen::OuterStride<>(d));
            Strided qh(pq.value.data() + qo + h * dh, nq, dh, Eigen::OuterStride<>(d));
            Strided kh(pk.value.data() + ko + h * dh, nk, dh, Eigen::OuterStride<>(d));
            Strided vh(pv.value.data() + ko + h * dh, nk, dh, Eigen::OuterStride<>(d));
            if (pv.requires_grad)
              StridedMut(pv.grad.data() + ko + h * dh, nk, dh, Eigen::OuterStride<>(d)).noalias() += a.transpose() * go;
            da.noalias() = go * vh.transpose();
            if (axis == SoftmaxAxis::keys) {
              for (int r = 0; r < nq; ++r) {
                const T dot = a.row(r).dot(da.row(r));
                ds.row(r) = a.row(r).cwiseProduct((da.row(r).array() - dot).matrix());
              }
            } else {
              for (int c = 0; c < nk; ++c) {
                const T dot = a.col(c).dot(da.col(c));
                ds.col(c) = a.col(c).cwiseProduct((da.col(c).array() - dot).matrix());
              }
            }
            ds *= scale;
            if (pq.requires_grad)
              StridedMut(pq.grad.data() + qo + h * dh, nq, dh, Eigen::OuterStride<>(d)).noalias() += ds * kh;
            if (pk.requires_grad)
              StridedMut(pk.grad.data() + ko + h * dh, nk, dh, Eigen::OuterStride<>(d)).noalias() += ds.transpose() * qh;
          }
        }
      });
  return res;
}

// Normalizes the last axis to zero mean and unit variance, then applies
// gamma and beta.
template <class T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-6)) {
  const int d = x.dim(-1);
  detail::expect(gamma.size() == static_cast<std::size_t>(d) && beta.size() == static_cast<std::size_t>(d),
                 "layernorm: gamma/beta size");
  const std::size_t dz = static_cast<std::size_t>(d), rows = x.size() / dz;
  Buffer<T> v(x.size()), xhat(x.size()), inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = &x.data()[r * dz];
    T mean = 0, var = 0;
    for (std::size_t j = 0; j < dz; ++j) mean += in[j];
    mean /= static_cast<T>(d);
    for (std::size_t j = 0; j < dz; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<T>(d);
    inv[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < dz; ++j) {
      xhat[r * dz + j] = (in[j] - mean) * inv[r];
      v[r * dz + j] = xhat[r * dz + j] * gamma[j] + beta[j];
    }
  }
  return detail::make_result<T>(x.shape(), std::move(v), {&x, &gamma, &beta},
                                [rows, dz, xhat = std::move(xhat), inv = std::move(inv)](Node<T>& self) {
                                  auto& px = *self.parents[0];
                                  auto& pg = *self.parents[1];
                                  auto& pb = *self.parents[2];
                                  for (auto* p : {&px, &pg, &pb})
                                    if (p->requires_grad) p->ensure_grad();
                                  Buffer<T> dxh(dz);
                                  for (std::size_t r = 0; r < rows; ++r) {
                                    const T* g = &self.grad[r * dz];
                                    const T* xh = &xhat[r * dz];
                                    T m1 = 0, m2 = 0;
                                    for (std::size_t j = 0; j < dz; ++j) {
                                      if (pg.requires_grad) pg.grad[j] += g[j] * xh[j];
                                      if (pb.requires_grad) pb.grad[j] += g[j];
                                      dxh[j] = g[j] * pg.value[j];
                                      m1 += dxh[j];
                                      m2 += dxh[j] * xh[j];
                                    }
                                    if (!px.requires_grad) continue;
                                    m1 /= static_cast<T>(dz);
                                    m2 /= static_cast<T>(dz);
                                    for (std::size_t j = 0; j < dz; ++j)
                                      px.grad[r * dz + j] += inv[r] * (dxh[j] - m1 - xh[j] * m2);
                                  }
                                });
}

// x + W2 relu(W1 x + b1) + b2 on the last axis.
template <class T>
Tensor<T> residual_mlp(const Tensor<T>& x, const Tensor<T>& w1, const Tensor<T>& b1, const Tensor<T>& w2,
                       const Tensor<T>& b2) {
  return add(x, linear(relu(linear(x, w1, b1)), w2, b2));
}

// Table [k, d] of sin/cos position codes.
template <class T>
Tensor<T> sinusoidal_pe(int k, int d) {
  if (k < 1 || d < 1) throw ShapeError("sinusoidal_pe: k and d must be positive");
  if (d % 2 != 0) throw ShapeError("sinusoidal_pe: d must be even, got " + std::to_string(d));
  Buffer<T> v(static_cast<std::size_t>(k * d));
  for (int p = 0; p < k; ++p)
    for (int i = 0; i < d / 2; ++i) {
      const double angle = p / std::pow(10000.0, 2.0 * i / d);
      v[static_cast<std::size_t>(p * d + 2 * i)] = static_cast<T>(std::sin(angle));
      v[static_cast<std::size_t>(p * d + 2 * i + 1)] = static_cast<T>(std::cos(angle));
    }
  return Tensor<T>::from({k, d}, std::move(v));
}

template <class T>
struct LstmState {
  Tensor<T> h;
  Tensor<T> c;
};

// Gate order (input, forget, cell, output); w_ih[4H, in], w_hh[4H, H], b[4H].
template <class T>
LstmState<T> lstm_cell(const Tensor<T>& x, const LstmState<T>& s, const Tensor<T>& w_ih, const Tensor<T>& w_hh,
                       const Tensor<T>& b) {
  const int hdim = w_hh.dim(1);
  detail::expect(w_ih.dim(0) == 4 * hdim && w_hh.dim(0) == 4 * hdim && s.h.rank() == 2 && s.h.dim(1) == hdim &&
                     s.c.shape() == s.h.shape() && x.dim(0) == s.h.dim(0),
                 "lstm_cell: dim mismatch");
  const Tensor<T> gates = add(linear(x, w_ih, b), linear<T>(s.h, w_hh, nullptr));
  const Tensor<T> i = sigmoid(slice_cols(gates, 0, hdim));
  const Tensor<T> f = sigmoid(slice_cols(gates, hdim, hdim));
  const Tensor<T> g = tanh(slice_cols(gates, 2 * hdim, hdim));
  const Tensor<T> o = sigmoid(slice_cols(gates, 3 * hdim, hdim));
  Tensor<T> c = add(mul(f, s.c), mul(i, g));
  Tensor<T> h = mul(o, tanh(c));
  return {std::move(h), std::move(c)};
}

}  // namespace crafter::nn
