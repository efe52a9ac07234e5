#include "swisenet/ops.hpp"

#include <algorithm>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "swisenet/parallel.hpp"

namespace swisenet {

std::int64_t conv_output_size(std::int64_t in, std::int64_t kernel, std::int64_t stride, Padding padding) {
  if (stride <= 0) throw ArgumentError("stride must be positive, got " + std::to_string(stride));
  if (padding == Padding::Same) return (in + stride - 1) / stride;
  if (kernel > in) {
    throw ShapeError("kernel " + std::to_string(kernel) + " larger than input extent " + std::to_string(in));
  }
  return (in - kernel) / stride + 1;
}

std::int64_t pool_output_size(std::int64_t in, std::int64_t pool, std::int64_t stride) {
  if (pool <= 0 || stride <= 0) throw ArgumentError("pool size and stride must be positive");
  if (pool > in) {
    throw ArgumentError("pool window " + std::to_string(pool) + " larger than input extent " + std::to_string(in));
  }
  return (in - pool) / stride + 1;
}

namespace {

template <typename T>
void require_same_tape(const Var<T>& a, const Var<T>& b) {
  if (&a.tape() != &b.tape()) throw ArgumentError("operands recorded on different tapes");
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.rank() != rank) {
    throw ShapeError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " + s.str());
  }
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

struct ConvGeometry {
  std::int64_t n, h, w, c;
  std::int64_t kh, kw, oc;
  std::int64_t oh, ow;
  std::int64_t stride;
  std::int64_t pad_top, pad_left;

  std::int64_t patch() const { return kh * kw * c; }
  std::int64_t positions() const { return oh * ow; }
};

ConvGeometry conv_geometry(const Shape& in, const Shape& k, int stride, Padding padding) {
  if (stride <= 0) throw ArgumentError("conv2d stride must be positive, got " + std::to_string(stride));
  require_rank(in, 4, "conv2d input");
  require_rank(k, 4, "conv2d kernel");
  if (in[3] != k[2]) {
    throw ShapeError("conv2d channel mismatch: input " + in.str() + " has " + std::to_string(in[3]) +
                     " channels, kernel " + k.str() + " expects " + std::to_string(k[2]));
  }
  if (k[0] % 2 == 0 || k[1] % 2 == 0) throw ShapeError("conv2d kernel extents must be odd, got " + k.str());
  ConvGeometry g{};
  g.n = in[0];
  g.h = in[1];
  g.w = in[2];
  g.c = in[3];
  g.kh = k[0];
  g.kw = k[1];
  g.oc = k[3];
  g.stride = stride;
  g.oh = conv_output_size(g.h, g.kh, stride, padding);
  g.ow = conv_output_size(g.w, g.kw, stride, padding);
  if (padding == Padding::Same) {
    g.pad_top = std::max<std::int64_t>((g.oh - 1) * stride + g.kh - g.h, 0) / 2;
    g.pad_left = std::max<std::int64_t>((g.ow - 1) * stride + g.kw - g.w, 0) / 2;
  }
  return g;
}

// Unfolds one sample into a [positions, patch] matrix.
template <typename T>
void im2col(const ConvGeometry& g, const T* in, T* cols) {
  const std::int64_t patch = g.patch();
  for (std::int64_t oy = 0; oy < g.oh; ++oy) {
    for (std::int64_t ox = 0; ox < g.ow; ++ox) {
      T* row = cols + (oy * g.ow + ox) * patch;
      for (std::int64_t i = 0; i < g.kh; ++i) {
        const std::int64_t iy = oy * g.stride - g.pad_top + i;
        for (std::int64_t j = 0; j < g.kw; ++j) {
          const std::int64_t ix = ox * g.stride - g.pad_left + j;
          T* dst = row + (i * g.kw + j) * g.c;
          if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) {
            std::fill(dst, dst + g.c, T{0});
          } else {
            const T* src = in + (iy * g.w + ix) * g.c;
            std::copy(src, src + g.c, dst);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* din) {
  const std::int64_t patch = g.patch();
  for (std::int64_t oy = 0; oy < g.oh; ++oy) {
    for (std::int64_t ox = 0; ox < g.ow; ++ox) {
      const T* row = cols + (oy * g.ow + ox) * patch;
      for (std::int64_t i = 0; i < g.kh; ++i) {
        const std::int64_t iy = oy * g.stride - g.pad_top + i;
        if (iy < 0 || iy >= g.h) continue;
        for (std::int64_t j = 0; j < g.kw; ++j) {
          const std::int64_t ix = ox * g.stride - g.pad_left + j;
          if (ix < 0 || ix >= g.w) continue;
          const T* src = row + (i * g.kw + j) * g.c;
          T* dst = din + (iy * g.w + ix) * g.c;
          for (std::int64_t c = 0; c < g.c; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

constexpr std::int64_t kRowBlock = 64;
constexpr std::int64_t kDepthBlock = 128;

// C[m, n] += A[m, k] * B[k, n], rows of C split across workers.
template <typename T>
void gemm_nn(std::int64_t m, std::int64_t k, std::int64_t n, const T* a, const T* b, T* c) {
  parallel_for(0, m, kRowBlock, [=](std::int64_t r0, std::int64_t r1) {
    for (std::int64_t rb = r0; rb < r1; rb += kRowBlock) {
      const std::int64_t re = std::min(r1, rb + kRowBlock);
      for (std::int64_t kb = 0; kb < k; kb += kDepthBlock) {
        const std::int64_t ke = std::min(k, kb + kDepthBlock);
        for (std::int64_t r = rb; r < re; ++r) {
          T* crow = c + r * n;
          const T* arow = a + r * k;
          for (std::int64_t kk = kb; kk < ke; ++kk) {
            const T av = arow[kk];
            if (av == T{0}) continue;
            const T* brow = b + kk * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
          }
        }
      }
    }
  });
}

// C[k, n] += A[m, k]^T * B[m, n], rows of C split across workers; each row
// is accumulated in ascending m order.
template <typename T>
void gemm_tn(std::int64_t m, std::int64_t k, std::int64_t n, const T* a, const T* b, T* c) {
  parallel_for(0, k, 16, [=](std::int64_t k0, std::int64_t k1) {
    for (std::int64_t r = 0; r < m; ++r) {
      const T* arow = a + r * k;
      const T* brow = b + r * n;
      for (std::int64_t kk = k0; kk < k1; ++kk) {
        const T av = arow[kk];
        if (av == T{0}) continue;
        T* crow = c + kk * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

// C[m, k] = A[m, n] * B[k, n]^T.
template <typename T>
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c) {
  parallel_for(0, m, kRowBlock, [=](std::int64_t r0, std::int64_t r1) {
    for (std::int64_t r = r0; r < r1; ++r) {
      const T* arow = a + r * n;
      T* crow = c + r * k;
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const T* brow = b + kk * n;
        T acc{0};
        for (std::int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
        crow[kk] = acc;
      }
    }
  });
}

}  // namespace

namespace ops {

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias, int stride, Padding padding) {
  require_same_tape(input, kernel);
  require_same_tape(input, bias);
  const ConvGeometry g = conv_geometry(input.shape(), kernel.shape(), stride, padding);
  if (bias.shape() != Shape{g.oc}) {
    throw ShapeError("conv2d bias must have shape (" + std::to_string(g.oc) + "), got " + bias.shape().str());
  }
  const Tensor<T>& x = input.value();
  const Tensor<T>& w = kernel.value();
  const Tensor<T>& b = bias.value();

  Tensor<T> out(Shape{g.n, g.oh, g.ow, g.oc});
  const std::int64_t positions = g.positions();
  const std::int64_t patch = g.patch();
  std::vector<T> cols(static_cast<std::size_t>(positions * patch));
  for (std::int64_t n = 0; n < g.n; ++n) {
    im2col(g, x.data().data() + n * g.h * g.w * g.c, cols.data());
    T* o = out.data().data() + n * positions * g.oc;
    for (std::int64_t p = 0; p < positions; ++p) std::copy(b.data().begin(), b.data().end(), o + p * g.oc);
    gemm_nn(positions, patch, g.oc, cols.data(), w.data().data(), o);
  }

  const NodeId xi = input.id(), ki = kernel.id(), bi = bias.id();
  return input.tape().record(
      OpKind::Conv2d, {xi, ki, bi}, std::move(out), [g, xi, ki, bi](Tape<T>& tape, NodeId self) {
        const Tensor<T>& dy = tape.grad(self);
        const Tensor<T>& x = tape.value(xi);
        const Tensor<T>& w = tape.value(ki);
        Tensor<T>& dx = tape.grad(xi);
        Tensor<T>& dw = tape.grad(ki);
        Tensor<T>& db = tape.grad(bi);
        const std::int64_t positions = g.positions();
        const std::int64_t patch = g.patch();
        std::vector<T> cols(static_cast<std::size_t>(positions * patch));
        for (std::int64_t n = 0; n < g.n; ++n) {
          const T* dyn = dy.data().data() + n * positions * g.oc;
          for (std::int64_t p = 0; p < positions; ++p) {
            for (std::int64_t o = 0; o < g.oc; ++o) db[static_cast<std::size_t>(o)] += dyn[p * g.oc + o];
          }
          im2col(g, x.data().data() + n * g.h * g.w * g.c, cols.data());
          gemm_tn(positions, patch, g.oc, cols.data(), dyn, dw.data().data());
          gemm_nt(positions, g.oc, patch, dyn, w.data().data(), cols.data());
          col2im_add(g, cols.data(), dx.data().data() + n * g.h * g.w * g.c);
        }
      });
}

template <typename T>
Var<T> maxpool2d(Var<T> input, int pool, int stride) {
  const Shape& s = input.shape();
  require_rank(s, 4, "maxpool2d input");
  const std::int64_t oh = pool_output_size(s[1], pool, stride);
  const std::int64_t ow = pool_output_size(s[2], pool, stride);
  const std::int64_t n = s[0], h = s[1], w = s[2], c = s[3];
  const Tensor<T>& x = input.value();
  Tensor<T> out(Shape{n, oh, ow, c});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
          T best = -std::numeric_limits<T>::infinity();
          std::int64_t best_idx = -1;
          for (std::int64_t i = 0; i < pool; ++i) {
            for (std::int64_t j = 0; j < pool; ++j) {
              const std::int64_t idx = ((b * h + oy * stride + i) * w + ox * stride + j) * c + ch;
              const T v = x[static_cast<std::size_t>(idx)];
              if (best_idx < 0 || v > best) {
                best = v;
                best_idx = idx;
              }
            }
          }
          const auto o = static_cast<std::size_t>(((b * oh + oy) * ow + ox) * c + ch);
          out[o] = best;
          (*argmax)[o] = best_idx;
        }
      }
    }
  }
  if (input.tape().tracking_branches())
    for (auto a : *argmax) input.tape().note_branch(static_cast<std::uint64_t>(a));
  const NodeId xi = input.id();
  return input.tape().record(OpKind::MaxPool2d, {xi}, std::move(out), [xi, argmax](Tape<T>& tape, NodeId self) {
    const Tensor<T>& dy = tape.grad(self);
    Tensor<T>& dx = tape.grad(xi);
    for (std::size_t o = 0; o < dy.size(); ++o) dx[static_cast<std::size_t>((*argmax)[o])] += dy[o];
  });
}

template <typename T>
Var<T> global_avg_pool(Var<T> input) {
  const Shape& s = input.shape();
  require_rank(s, 4, "global_avg_pool input");
  const std::int64_t n = s[0], hw = s[1] * s[2], c = s[3];
  const Tensor<T>& x = input.value();
  Tensor<T> out(Shape{n, c});
  for (std::int64_t b = 0; b < n; ++b) {
    T* o = out.data().data() + b * c;
    const T* xb = x.data().data() + b * hw * c;
    for (std::int64_t p = 0; p < hw; ++p) {
      for (std::int64_t ch = 0; ch < c; ++ch) o[ch] += xb[p * c + ch];
    }
    for (std::int64_t ch = 0; ch < c; ++ch) o[ch] /= static_cast<T>(hw);
  }
  const NodeId xi = input.id();
  return input.tape().record(OpKind::GlobalAvgPool, {xi}, std::move(out),
                             [xi, n, hw, c](Tape<T>& tape, NodeId self) {
                               const Tensor<T>& dy = tape.grad(self);
                               Tensor<T>& dx = tape.grad(xi);
                               const T inv = T{1} / static_cast<T>(hw);
                               for (std::int64_t b = 0; b < n; ++b) {
                                 for (std::int64_t p = 0; p < hw; ++p) {
                                   for (std::int64_t ch = 0; ch < c; ++ch) {
                                     dx[static_cast<std::size_t>((b * hw + p) * c + ch)] +=
                                         dy[static_cast<std::size_t>(b * c + ch)] * inv;
                                   }
                                 }
                               }
                             });
}

template <typename T>
Var<T> global_max_pool(Var<T> input) {
  const Shape& s = input.shape();
  require_rank(s, 4, "global_max_pool input");
  const std::int64_t n = s[0], hw = s[1] * s[2], c = s[3];
  const Tensor<T>& x = input.value();
  Tensor<T> out(Shape{n, c});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size(), -1);
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t p = 0; p < hw; ++p) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const auto idx = (b * hw + p) * c + ch;
        const auto o = static_cast<std::size_t>(b * c + ch);
        if ((*argmax)[o] < 0 || x[static_cast<std::size_t>(idx)] > out[o]) {
          out[o] = x[static_cast<std::size_t>(idx)];
          (*argmax)[o] = idx;
        }
      }
    }
  }
  if (input.tape().tracking_branches())
    for (auto a : *argmax) input.tape().note_branch(static_cast<std::uint64_t>(a));
  const NodeId xi = input.id();
  return input.tape().record(OpKind::GlobalMaxPool, {xi}, std::move(out),
                             [xi, argmax](Tape<T>& tape, NodeId self) {
                               const Tensor<T>& dy = tape.grad(self);
                               Tensor<T>& dx = tape.grad(xi);
                               for (std::size_t o = 0; o < dy.size(); ++o) {
                                 dx[static_cast<std::size_t>((*argmax)[o])] += dy[o];
                               }
                             });
}

template <typename T>
Var<T> dense(Var<T> input, Var<T> weight, Var<T> bias) {
  require_same_tape(input, weight);
  require_same_tape(input, bias);
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  require_rank(xs, 2, "dense input");
  require_rank(ws, 2, "dense weight");
  if (xs[1] != ws[0]) {
    throw ShapeError("dense dimension mismatch: input " + xs.str() + " vs weight " + ws.str());
  }
  if (bias.shape() != Shape{ws[1]}) {
    throw ShapeError("dense bias must have shape (" + std::to_string(ws[1]) + "), got " + bias.shape().str());
  }
  const std::int64_t n = xs[0], in = ws[0], out_dim = ws[1];
  Tensor<T> out(Shape{n, out_dim});
  for (std::int64_t r = 0; r < n; ++r) {
    std::copy(bias.value().data().begin(), bias.value().data().end(), out.data().begin() + r * out_dim);
  }
  gemm_nn(n, in, out_dim, input.value().data().data(), weight.value().data().data(), out.data().data());

  const NodeId xi = input.id(), wi = weight.id(), bi = bias.id();
  return input.tape().record(
      OpKind::Dense, {xi, wi, bi}, std::move(out), [xi, wi, bi, n, in, out_dim](Tape<T>& tape, NodeId self) {
        const Tensor<T>& dy = tape.grad(self);
        Tensor<T>& db = tape.grad(bi);
        for (std::int64_t r = 0; r < n; ++r) {
          for (std::int64_t j = 0; j < out_dim; ++j) db[static_cast<std::size_t>(j)] += dy.at(r, j);
        }
        gemm_tn(n, in, out_dim, tape.value(xi).data().data(), dy.data().data(), tape.grad(wi).data().data());
        std::vector<T> dx(static_cast<std::size_t>(n * in));
        gemm_nt(n, out_dim, in, dy.data().data(), tape.value(wi).data().data(), dx.data());
        Tensor<T>& gx = tape.grad(xi);
        for (std::size_t i = 0; i < dx.size(); ++i) gx[i] += dx[i];
      });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  if (x.tape().tracking_branches())
    for (const auto& v : out.vec()) x.tape().note_branch(v > T{0});
  for (auto& v : out.vec()) v = v > T{0} ? v : T{0};
  const NodeId xi = x.id();
  return x.tape().record(OpKind::Relu, {xi}, std::move(out), [xi](Tape<T>& tape, NodeId self) {
    const Tensor<T>& dy = tape.grad(self);
    const Tensor<T>& xv = tape.value(xi);
    Tensor<T>& dx = tape.grad(xi);
    // d/dx at exactly 0 is taken as 0.
    for (std::size_t i = 0; i < dy.size(); ++i) {
      if (xv[i] > T{0}) dx[i] += dy[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.vec()) v = stable_sigmoid(v);
  const NodeId xi = x.id();
  return x.tape().record(OpKind::Sigmoid, {xi}, std::move(out), [xi](Tape<T>& tape, NodeId self) {
    const Tensor<T>& dy = tape.grad(self);
    const Tensor<T>& y = tape.value(self);
    Tensor<T>& dx = tape.grad(xi);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * y[i] * (T{1} - y[i]);
  });
}

namespace {

// Shared by swish and swish_relu: alpha * x*s(beta x) + (1 - alpha) * relu(x).
template <typename T>
Var<T> blended_swish(OpKind kind, Var<T> x, double alpha_d, Var<T> beta) {
  require_same_tape(x, beta);
  if (beta.value().size() != 1) throw ShapeError("swish beta must be a single scalar, got " + beta.shape().str());
  const T alpha = static_cast<T>(alpha_d);
  const T b = beta.value()[0];
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T v = xv[i];
    const T sw = v * stable_sigmoid(b * v);
    out[i] = alpha * sw + (T{1} - alpha) * (v > T{0} ? v : T{0});
  }
  if (alpha < T{1} && x.tape().tracking_branches())
    for (const auto& v : xv.vec()) x.tape().note_branch(v > T{0});
  const NodeId xi = x.id(), bi = beta.id();
  return x.tape().record(kind, {xi, bi}, std::move(out), [xi, bi, alpha](Tape<T>& tape, NodeId self) {
    const Tensor<T>& dy = tape.grad(self);
    const Tensor<T>& xv = tape.value(xi);
    const T b = tape.value(bi)[0];
    Tensor<T>& dx = tape.grad(xi);
    T dbeta{0};
    for (std::size_t i = 0; i < dy.size(); ++i) {
      const T v = xv[i];
      const T s = stable_sigmoid(b * v);
      const T ds = s * (T{1} - s);
      dx[i] += dy[i] * (alpha * (s + b * v * ds) + (v > T{0} ? T{1} - alpha : T{0}));
      dbeta += dy[i] * alpha * v * v * ds;
    }
    tape.grad(bi)[0] += dbeta;
  });
}

}  // namespace

template <typename T>
Var<T> swish(Var<T> x, Var<T> beta) {
  return blended_swish(OpKind::Swish, x, 1.0, beta);
}

template <typename T>
Var<T> swish_relu(Var<T> x, double alpha, Var<T> beta) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ArgumentError("swish_relu alpha must lie in [0,1], got " + std::to_string(alpha));
  }
  return blended_swish(OpKind::SwishRelu, x, alpha, beta);
}

template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, Parameter<T>& running_mean, Parameter<T>& running_var,
                  const BatchNormOptions& opts) {
  require_same_tape(x, gamma);
  require_same_tape(x, beta);
  const Shape& s = x.shape();
  const std::int64_t c = s[s.rank() - 1];
  const std::int64_t m = s.numel() / c;
  const Shape cs{c};
  if (gamma.shape() != cs || beta.shape() != cs || running_mean.value.shape() != cs ||
      running_var.value.shape() != cs) {
    throw ShapeError("batch_norm parameters must have shape " + cs.str() + " for input " + s.str());
  }
  const Tensor<T>& xv = x.value();
  const T eps = static_cast<T>(opts.epsilon);

  std::vector<T> mean(static_cast<std::size_t>(c)), var(static_cast<std::size_t>(c));
  if (opts.training) {
    for (std::int64_t r = 0; r < m; ++r) {
      for (std::int64_t ch = 0; ch < c; ++ch) mean[ch] += xv[static_cast<std::size_t>(r * c + ch)];
    }
    for (auto& v : mean) v /= static_cast<T>(m);
    for (std::int64_t r = 0; r < m; ++r) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const T d = xv[static_cast<std::size_t>(r * c + ch)] - mean[ch];
        var[ch] += d * d;
      }
    }
    for (auto& v : var) v /= static_cast<T>(m);
    if (opts.update_running_stats) {
      const T mom = static_cast<T>(opts.momentum);
      for (std::int64_t ch = 0; ch < c; ++ch) {
        running_mean.value[ch] = mom * running_mean.value[ch] + (T{1} - mom) * mean[ch];
        running_var.value[ch] = mom * running_var.value[ch] + (T{1} - mom) * var[ch];
      }
    }
  } else {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean.value[ch];
      var[ch] = running_var.value[ch];
    }
  }

  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c));
  for (std::int64_t ch = 0; ch < c; ++ch) (*inv_std)[ch] = T{1} / std::sqrt(var[ch] + eps);
  auto xhat = std::make_shared<Tensor<T>>(s);
  Tensor<T> out(s);
  const Tensor<T>& g = gamma.value();
  const Tensor<T>& bt = beta.value();
  for (std::int64_t r = 0; r < m; ++r) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const auto i = static_cast<std::size_t>(r * c + ch);
      const T h = (xv[i] - mean[ch]) * (*inv_std)[ch];
      (*xhat)[i] = h;
      out[i] = g[ch] * h + bt[ch];
    }
  }

  const NodeId xi = x.id(), gi = gamma.id(), bi = beta.id();
  const bool training = opts.training;
  return x.tape().record(OpKind::BatchNorm, {xi, gi, bi}, std::move(out),
                         [xi, gi, bi, m, c, training, inv_std, xhat](Tape<T>& tape, NodeId self) {
                           const Tensor<T>& dy = tape.grad(self);
                           const Tensor<T>& g = tape.value(gi);
                           Tensor<T>& dg = tape.grad(gi);
                           Tensor<T>& db = tape.grad(bi);
                           Tensor<T>& dx = tape.grad(xi);
                           std::vector<T> sum_dy(static_cast<std::size_t>(c)), sum_dy_h(static_cast<std::size_t>(c));
                           for (std::int64_t r = 0; r < m; ++r) {
                             for (std::int64_t ch = 0; ch < c; ++ch) {
                               const auto i = static_cast<std::size_t>(r * c + ch);
                               sum_dy[ch] += dy[i];
                               sum_dy_h[ch] += dy[i] * (*xhat)[i];
                             }
                           }
                           for (std::int64_t ch = 0; ch < c; ++ch) {
                             db[ch] += sum_dy[ch];
                             dg[ch] += sum_dy_h[ch];
                           }
                           const T inv_m = T{1} / static_cast<T>(m);
                           for (std::int64_t r = 0; r < m; ++r) {
                             for (std::int64_t ch = 0; ch < c; ++ch) {
                               const auto i = static_cast<std::size_t>(r * c + ch);
                               const T scale = g[ch] * (*inv_std)[ch];
                               if (training) {
                                 dx[i] += scale * (dy[i] - inv_m * sum_dy[ch] - (*xhat)[i] * inv_m * sum_dy_h[ch]);
                               } else {
                                 dx[i] += scale * dy[i];
                               }
                             }
                           }
                         });
}

template <typename T>
Var<T> scale_channels(Var<T> x, Var<T> gates) {
  require_same_tape(x, gates);
  const Shape& s = x.shape();
  require_rank(s, 4, "scale_channels input");
  if (gates.shape() != Shape{s[0], s[3]}) {
    throw ShapeError("scale_channels gates must have shape (" + std::to_string(s[0]) + "," + std::to_string(s[3]) +
                     "), got " + gates.shape().str());
  }
  const std::int64_t n = s[0], hw = s[1] * s[2], c = s[3];
  const Tensor<T>& xv = x.value();
  const Tensor<T>& gv = gates.value();
  Tensor<T> out(s);
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t p = 0; p < hw; ++p) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const auto i = static_cast<std::size_t>((b * hw + p) * c + ch);
        out[i] = xv[i] * gv[static_cast<std::size_t>(b * c + ch)];
      }
    }
  }
  const NodeId xi = x.id(), gi = gates.id();
  return x.tape().record(OpKind::ChannelScale, {xi, gi}, std::move(out),
                         [xi, gi, n, hw, c](Tape<T>& tape, NodeId self) {
                           const Tensor<T>& dy = tape.grad(self);
                           const Tensor<T>& xv = tape.value(xi);
                           const Tensor<T>& gv = tape.value(gi);
                           Tensor<T>& dx = tape.grad(xi);
                           Tensor<T>& dg = tape.grad(gi);
                           for (std::int64_t b = 0; b < n; ++b) {
                             for (std::int64_t p = 0; p < hw; ++p) {
                               for (std::int64_t ch = 0; ch < c; ++ch) {
                                 const auto i = static_cast<std::size_t>((b * hw + p) * c + ch);
                                 const auto gidx = static_cast<std::size_t>(b * c + ch);
                                 dx[i] += dy[i] * gv[gidx];
                                 dg[gidx] += dy[i] * xv[i];
                               }
                             }
                           }
                         });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_tape(a, b);
  if (a.shape() != b.shape()) throw ShapeError("add shape mismatch: " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out = a.value();
  accumulate(out, b.value());
  const NodeId ai = a.id(), bi = b.id();
  return a.tape().record(OpKind::Add, {ai, bi}, std::move(out), [ai, bi](Tape<T>& tape, NodeId self) {
    // Copy: ai == bi would alias the upstream grad otherwise.
    const Tensor<T> dy = tape.grad(self);
    accumulate(tape.grad(ai), dy);
    accumulate(tape.grad(bi), dy);
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_tape(a, b);
  if (a.shape() != b.shape()) throw ShapeError("mul shape mismatch: " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const NodeId ai = a.id(), bi = b.id();
  return a.tape().record(OpKind::Mul, {ai, bi}, std::move(out), [ai, bi](Tape<T>& tape, NodeId self) {
    const Tensor<T> dy = tape.grad(self);
    const Tensor<T>& av = tape.value(ai);
    const Tensor<T>& bv = tape.value(bi);
    {
      Tensor<T>& da = tape.grad(ai);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv[i];
    }
    Tensor<T>& db = tape.grad(bi);
    for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T total{0};
  for (T v : x.value().data()) total += v;
  const NodeId xi = x.id();
  return x.tape().record(OpKind::Sum, {xi}, Tensor<T>::scalar(total), [xi](Tape<T>& tape, NodeId self) {
    const T dy = tape.grad(self)[0];
    for (auto& g : tape.grad(xi).vec()) g += dy;
  });
}

template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  require_rank(s, 2, "softmax_cross_entropy logits");
  const std::int64_t n = s[0], k = s[1];
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw ArgumentError("softmax_cross_entropy got " + std::to_string(labels.size()) + " labels for batch " +
                        std::to_string(n));
  }
  for (int label : labels) {
    if (label < 0 || label >= k) {
      throw ArgumentError("label " + std::to_string(label) + " outside [0," + std::to_string(k) + ")");
    }
  }
  auto probs = std::make_shared<Tensor<T>>(softmax(logits.value()));
  const Tensor<T>& z = logits.value();
  T loss{0};
  for (std::int64_t r = 0; r < n; ++r) {
    T mx = z.at(r, 0);
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, z.at(r, j));
    T se{0};
    for (std::int64_t j = 0; j < k; ++j) se += std::exp(z.at(r, j) - mx);
    loss += mx + std::log(se) - z.at(r, labels[static_cast<std::size_t>(r)]);
  }
  loss /= static_cast<T>(n);
  std::vector<int> lab(labels.begin(), labels.end());
  const NodeId zi = logits.id();
  return logits.tape().record(OpKind::SoftmaxCrossEntropy, {zi}, Tensor<T>::scalar(loss),
                              [zi, probs, lab = std::move(lab), n, k](Tape<T>& tape, NodeId self) {
                                const T scale = tape.grad(self)[0] / static_cast<T>(n);
                                Tensor<T>& dz = tape.grad(zi);
                                for (std::int64_t r = 0; r < n; ++r) {
                                  for (std::int64_t j = 0; j < k; ++j) {
                                    const T onehot = j == lab[static_cast<std::size_t>(r)] ? T{1} : T{0};
                                    dz.at(r, j) += scale * (probs->at(r, j) - onehot);
                                  }
                                }
                              });
}

}  // namespace ops

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  require_rank(logits.shape(), 2, "softmax logits");
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> out(logits.shape());
  for (std::int64_t r = 0; r < n; ++r) {
    T mx = logits.at(r, 0);
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, logits.at(r, j));
    T se{0};
    for (std::int64_t j = 0; j < k; ++j) {
      out.at(r, j) = std::exp(logits.at(r, j) - mx);
      se += out.at(r, j);
    }
    for (std::int64_t j = 0; j < k; ++j) out.at(r, j) /= se;
  }
  return out;
}

#define SWISENET_INSTANTIATE_OPS(T)                                                                          \
  template Var<T> ops::conv2d<T>(Var<T>, Var<T>, Var<T>, int, Padding);                                      \
  template Var<T> ops::maxpool2d<T>(Var<T>, int, int);                                                       \
  template Var<T> ops::global_avg_pool<T>(Var<T>);                                                           \
  template Var<T> ops::global_max_pool<T>(Var<T>);                                                           \
  template Var<T> ops::dense<T>(Var<T>, Var<T>, Var<T>);                                                     \
  template Var<T> ops::relu<T>(Var<T>);                                                                      \
  template Var<T> ops::sigmoid<T>(Var<T>);                                                                   \
  template Var<T> ops::swish<T>(Var<T>, Var<T>);                                                             \
  template Var<T> ops::swish_relu<T>(Var<T>, double, Var<T>);                                                \
  template Var<T> ops::batch_norm<T>(Var<T>, Var<T>, Var<T>, Parameter<T>&, Parameter<T>&,                   \
                                     const BatchNormOptions&);                                               \
  template Var<T> ops::scale_channels<T>(Var<T>, Var<T>);                                                    \
  template Var<T> ops::add<T>(Var<T>, Var<T>);                                                               \
  template Var<T> ops::mul<T>(Var<T>, Var<T>);                                                               \
  template Var<T> ops::sum<T>(Var<T>);                                                                       \
  template Var<T> ops::softmax_cross_entropy<T>(Var<T>, std::span<const int>);                               \
  template Tensor<T> softmax<T>(const Tensor<T>&);

SWISENET_INSTANTIATE_OPS(float)
SWISENET_INSTANTIATE_OPS(double)

}  // namespace swisenet
