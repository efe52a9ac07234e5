#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "swisenet/autograd.hpp"

namespace swisenet {

enum class Padding { Same, Valid };

// ceil(in/stride) for Same, floor((in-kernel)/stride)+1 for Valid.
std::int64_t conv_output_size(std::int64_t in, std::int64_t kernel, std::int64_t stride, Padding padding);
// Valid pooling: floor((in-pool)/stride)+1.
std::int64_t pool_output_size(std::int64_t in, std::int64_t pool, std::int64_t stride);

// 1/(1+e^-x), evaluated as e^x/(1+e^x) for negative x so it never overflows.
template <typename T>
T stable_sigmoid(T x) {
  if (x >= T{0}) {
    return T{1} / (T{1} + std::exp(-x));
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}

struct BatchNormOptions {
  bool training = true;
  // Disabled by verification harnesses that re-evaluate the same graph.
  bool update_running_stats = true;
  double momentum = 0.99;
  double epsilon = 1e-3;
};

namespace ops {

/// 2-D cross-correlation over NHWC input with a [kh, kw, in_ch, out_ch]
/// kernel:
///   out[n, y, x, o] = bias[o] + sum_{i,j,c} in[n, y*s + i - pad, x*s + j - pad, c] * k[i, j, c, o]
/// The kernel is not flipped. Since kernels are learned, this is the
/// convolution of the flipped kernel and the two are interchangeable.
/// Same padding splits the zero border evenly, the odd pixel going to the
/// bottom/right.
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias, int stride, Padding padding);

// Valid-padded max pooling with a square window.
template <typename T>
Var<T> maxpool2d(Var<T> input, int pool, int stride);

// [N,H,W,C] -> [N,C] spatial mean.
template <typename T>
Var<T> global_avg_pool(Var<T> input);

// [N,H,W,C] -> [N,C] spatial max.
template <typename T>
Var<T> global_max_pool(Var<T> input);

// [N,in] x [in,out] + [out].
template <typename T>
Var<T> dense(Var<T> input, Var<T> weight, Var<T> bias);

template <typename T>
Var<T> relu(Var<T> x);

template <typename T>
Var<T> sigmoid(Var<T> x);

// x * sigmoid(beta * x) with beta a one-element tensor.
template <typename T>
Var<T> swish(Var<T> x, Var<T> beta);

// alpha * swish(x) + (1 - alpha) * relu(x).
template <typename T>
Var<T> swish_relu(Var<T> x, double alpha, Var<T> beta);

// Normalizes over every axis but the last. In training mode batch
// statistics are used and, if requested, folded into the running ones.
template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, Parameter<T>& running_mean,
                  Parameter<T>& running_var, const BatchNormOptions& opts);

// x[n,h,w,c] * gates[n,c].
template <typename T>
Var<T> scale_channels(Var<T> x, Var<T> gates);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

template <typename T>
Var<T> sum(Var<T> x);

// Mean over the batch of -log softmax(logits)[label].
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels);

}  // namespace ops

// Row-wise softmax of [N,K] logits (evaluation head).
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

}  // namespace swisenet
