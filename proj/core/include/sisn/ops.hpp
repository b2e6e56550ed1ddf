#pragma once

#include <span>

#include "sisn/tape.hpp"

namespace sisn {

enum class Elementwise { kSum, kProduct };

// Stride-1 2-D convolution. weight is C_out x C_in x k x k, bias is
// 1 x C_out x 1 x 1, padding must be k/2 so the spatial size is preserved.
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var weight, Var bias, int padding);

// a + b or a * b. In product mode b may be N x C x 1 x 1 and is broadcast
// over the spatial plane of a.
template <typename T>
Var elementwise(Tape<T>& tape, Var a, Var b, Elementwise mode);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) { return elementwise(tape, a, b, Elementwise::kSum); }

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) { return elementwise(tape, a, b, Elementwise::kProduct); }

// Mean over H x W; output is N x C x 1 x 1.
template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x);

// Softmax across r groups of the channel axis. Channel k * (C / r) + j holds
// the logit of split k for position j; weights at each (n, j, h, w) are
// non-negative and sum to one.
template <typename T>
Var r_softmax(Tape<T>& tape, Var logits, int splits);

// Sub-pixel rearrangement: out(c, s*h + i, s*w + j) = in(c*s*s + i*s + j, h, w).
template <typename T>
Var pixel_shuffle(Tape<T>& tape, Var x, int scale);

// max(x, 0), subgradient 0 at 0.
template <typename T>
Var relu(Tape<T>& tape, Var x);

// Mean absolute error over every element, returned as a 1x1x1x1 scalar.
template <typename T>
Var l1_loss(Tape<T>& tape, Var pred, Var target);

// Sum of all elements as a scalar.
template <typename T>
Var sum_all(Tape<T>& tape, Var x);

// Channels [begin, begin + count) of x.
template <typename T>
Var channel_slice(Tape<T>& tape, Var x, int begin, int count);

// Concatenation along the channel axis; N, H and W must agree.
template <typename T>
Var channel_concat(Tape<T>& tape, std::span<const Var> parts);

}  // namespace sisn
