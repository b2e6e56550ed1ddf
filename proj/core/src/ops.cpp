#include "sisn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sisn/parallel.hpp"

namespace sisn {
namespace {

// Valid output row/column range for a kernel tap offset d on an extent n.
struct TapRange {
  int begin;
  int end;
};

TapRange tap_range(int offset, int extent) {
  return {std::max(0, -offset), std::min(extent, extent - offset)};
}

}  // namespace

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var weight, Var bias, int padding) {
  const Shape xs = tape.shape(x);
  const Shape ws = tape.shape(weight);
  const Shape bs = tape.shape(bias);
  require(ws.h == ws.w, ErrorKind::kShapeMismatch, "conv2d kernel must be square, got " + ws.str());
  require(xs.c == ws.c, ErrorKind::kShapeMismatch,
          "conv2d input " + xs.str() + " has " + std::to_string(xs.c) + " channels but weight " + ws.str() +
              " expects " + std::to_string(ws.c));
  require(bs == Shape{1, ws.n, 1, 1}, ErrorKind::kShapeMismatch,
          "conv2d bias " + bs.str() + " does not match weight " + ws.str());
  require(padding == ws.h / 2, ErrorKind::kInvalidArgument,
          "conv2d padding must be kernel/2 = " + std::to_string(ws.h / 2) + ", got " + std::to_string(padding));

  const int n_batch = xs.n, c_in = xs.c, c_out = ws.n, k = ws.h, height = xs.h, width = xs.w;
  const std::size_t plane = xs.plane();
  Tensor<T> out(Shape{n_batch, c_out, height, width});
  {
    const T* xd = tape.value(x).data().data();
    const T* wd = tape.value(weight).data().data();
    const T* bd = tape.value(bias).data().data();
    T* od = out.data().data();
    parallel_for(static_cast<std::size_t>(n_batch) * c_out, [&](std::size_t job) {
      const int n = static_cast<int>(job / c_out);
      const int co = static_cast<int>(job % c_out);
      T* o = od + job * plane;
      std::fill(o, o + plane, bd[co]);
      for (int ci = 0; ci < c_in; ++ci) {
        const T* in = xd + (static_cast<std::size_t>(n) * c_in + ci) * plane;
        const T* wk = wd + (static_cast<std::size_t>(co) * c_in + ci) * k * k;
        for (int ky = 0; ky < k; ++ky) {
          const int dy = ky - padding;
          const TapRange rows = tap_range(dy, height);
          for (int kx = 0; kx < k; ++kx) {
            const int dx = kx - padding;
            const TapRange cols = tap_range(dx, width);
            const T wv = wk[ky * k + kx];
            for (int oy = rows.begin; oy < rows.end; ++oy) {
              T* orow = o + static_cast<std::size_t>(oy) * width;
              const T* irow = in + static_cast<std::size_t>(oy + dy) * width + dx;
              for (int ox = cols.begin; ox < cols.end; ++ox) orow[ox] += wv * irow[ox];
            }
          }
        }
      }
    });
  }

  return tape.record(std::move(out), {x, weight, bias}, [=](Tape<T>& t, const Tensor<T>& g) {
    const T* gd = g.data().data();
    const T* xd = t.value(x).data().data();
    const T* wd = t.value(weight).data().data();
    if (t.requires_grad(x)) {
      T* gx = t.grad_buffer(x).data().data();
      parallel_for(static_cast<std::size_t>(n_batch) * c_in, [&](std::size_t job) {
        const int n = static_cast<int>(job / c_in);
        const int ci = static_cast<int>(job % c_in);
        T* gi = gx + job * plane;
        for (int co = 0; co < c_out; ++co) {
          const T* go = gd + (static_cast<std::size_t>(n) * c_out + co) * plane;
          const T* wk = wd + (static_cast<std::size_t>(co) * c_in + ci) * k * k;
          for (int ky = 0; ky < k; ++ky) {
            const int dy = ky - padding;
            const TapRange rows = tap_range(dy, height);
            for (int kx = 0; kx < k; ++kx) {
              const int dx = kx - padding;
              const TapRange cols = tap_range(dx, width);
              const T wv = wk[ky * k + kx];
              for (int oy = rows.begin; oy < rows.end; ++oy) {
                const T* grow = go + static_cast<std::size_t>(oy) * width;
                T* irow = gi + static_cast<std::size_t>(oy + dy) * width + dx;
                for (int ox = cols.begin; ox < cols.end; ++ox) irow[ox] += wv * grow[ox];
              }
            }
          }
        }
      });
    }
    if (t.requires_grad(weight)) {
      T* gw = t.grad_buffer(weight).data().data();
      parallel_for(static_cast<std::size_t>(c_out), [&](std::size_t co) {
        for (int ci = 0; ci < c_in; ++ci) {
          T* wk = gw + (co * c_in + ci) * k * k;
          for (int ky = 0; ky < k; ++ky) {
            const int dy = ky - padding;
            const TapRange rows = tap_range(dy, height);
            for (int kx = 0; kx < k; ++kx) {
              const int dx = kx - padding;
              const TapRange cols = tap_range(dx, width);
              T acc{0};
              for (int n = 0; n < n_batch; ++n) {
                const T* go = gd + (static_cast<std::size_t>(n) * c_out + co) * plane;
                const T* in = xd + (static_cast<std::size_t>(n) * c_in + ci) * plane;
                for (int oy = rows.begin; oy < rows.end; ++oy) {
                  const T* grow = go + static_cast<std::size_t>(oy) * width;
                  const T* irow = in + static_cast<std::size_t>(oy + dy) * width + dx;
                  for (int ox = cols.begin; ox < cols.end; ++ox) acc += grow[ox] * irow[ox];
                }
              }
              wk[ky * k + kx] += acc;
            }
          }
        }
      });
    }
    if (t.requires_grad(bias)) {
      Tensor<T>& gb = t.grad_buffer(bias);
      for (int co = 0; co < c_out; ++co) {
        T acc{0};
        for (int n = 0; n < n_batch; ++n) {
          const T* go = gd + (static_cast<std::size_t>(n) * c_out + co) * plane;
          for (std::size_t i = 0; i < plane; ++i) acc += go[i];
        }
        gb[co] += acc;
      }
    }
  });
}

template <typename T>
Var elementwise(Tape<T>& tape, Var a, Var b, Elementwise mode) {
  const Shape as = tape.shape(a);
  const Shape bs = tape.shape(b);
  const bool broadcast = mode == Elementwise::kProduct && as != bs && bs == Shape{as.n, as.c, 1, 1};
  require(as == bs || broadcast, ErrorKind::kShapeMismatch,
          std::string(mode == Elementwise::kSum ? "sum" : "product") + " of incompatible shapes " + as.str() +
              " and " + bs.str());

  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  Tensor<T> out(as);
  const std::size_t plane = broadcast ? as.plane() : 1;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T rhs = bv[i / plane];
    out[i] = mode == Elementwise::kSum ? av[i] + rhs : av[i] * rhs;
  }

  return tape.record(std::move(out), {a, b}, [=](Tape<T>& t, const Tensor<T>& g) {
    if (mode == Elementwise::kSum) {
      if (t.requires_grad(a)) {
        Tensor<T>& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (t.requires_grad(b)) {
        Tensor<T>& gb = t.grad_buffer(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
      return;
    }
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    if (t.requires_grad(a)) {
      Tensor<T>& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i / plane];
    }
    if (t.requires_grad(b)) {
      Tensor<T>& gb = t.grad_buffer(b);
      for (std::size_t j = 0; j < bv.size(); ++j) {
        T acc{0};
        for (std::size_t i = j * plane; i < (j + 1) * plane; ++i) acc += g[i] * av[i];
        gb[j] += acc;
      }
    }
  });
}

template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x) {
  const Shape xs = tape.shape(x);
  const std::size_t plane = xs.plane();
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> out(Shape{xs.n, xs.c, 1, 1});
  for (std::size_t j = 0; j < out.size(); ++j) {
    T acc{0};
    for (std::size_t i = j * plane; i < (j + 1) * plane; ++i) acc += xv[i];
    out[j] = acc / static_cast<T>(plane);
  }
  return tape.record(std::move(out), {x}, [=](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buffer(x);
    const T inv = T{1} / static_cast<T>(plane);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i / plane] * inv;
  });
}

template <typename T>
Var r_softmax(Tape<T>& tape, Var logits, int splits) {
  const Shape ls = tape.shape(logits);
  require(splits >= 1, ErrorKind::kInvalidArgument, "r_softmax needs at least one split, got " + std::to_string(splits));
  require(ls.c % splits == 0, ErrorKind::kShapeMismatch,
          "r_softmax: " + std::to_string(ls.c) + " channels not divisible by " + std::to_string(splits) + " splits");
  const int group = ls.c / splits;
  const std::size_t plane = ls.plane();
  // Stride between the logits of consecutive splits for one position.
  const std::size_t stride = static_cast<std::size_t>(group) * plane;

  const Tensor<T>& lv = tape.value(logits);
  Tensor<T> out(ls);
  for (int n = 0; n < ls.n; ++n) {
    const std::size_t base_n = static_cast<std::size_t>(n) * ls.c * plane;
    for (std::size_t pos = 0; pos < stride; ++pos) {
      const std::size_t base = base_n + pos;
      T peak = lv[base];
      for (int k = 1; k < splits; ++k) peak = std::max(peak, lv[base + k * stride]);
      T total{0};
      for (int k = 0; k < splits; ++k) {
        const T e = std::exp(lv[base + k * stride] - peak);
        out[base + k * stride] = e;
        total += e;
      }
      for (int k = 0; k < splits; ++k) out[base + k * stride] /= total;
    }
  }

  Tensor<T> weights = out;
  return tape.record(std::move(out), {logits},
                     [=, weights = std::move(weights)](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gl = t.grad_buffer(logits);
    for (int n = 0; n < ls.n; ++n) {
      const std::size_t base_n = static_cast<std::size_t>(n) * ls.c * plane;
      for (std::size_t pos = 0; pos < stride; ++pos) {
        const std::size_t base = base_n + pos;
        T dot{0};
        for (int k = 0; k < splits; ++k) dot += g[base + k * stride] * weights[base + k * stride];
        for (int k = 0; k < splits; ++k) {
          const std::size_t i = base + k * stride;
          gl[i] += weights[i] * (g[i] - dot);
        }
      }
    }
  });
}

template <typename T>
Var pixel_shuffle(Tape<T>& tape, Var x, int scale) {
  const Shape xs = tape.shape(x);
  require(scale >= 1, ErrorKind::kInvalidArgument, "pixel_shuffle scale must be >= 1");
  require(xs.c % (scale * scale) == 0, ErrorKind::kShapeMismatch,
          "pixel_shuffle: " + std::to_string(xs.c) + " channels not divisible by scale^2 = " +
              std::to_string(scale * scale));
  const Shape os{xs.n, xs.c / (scale * scale), xs.h * scale, xs.w * scale};

  // Maps each output index to its source index; used in both directions.
  std::vector<std::size_t> source(os.numel());
  for (int n = 0; n < os.n; ++n)
    for (int c = 0; c < os.c; ++c)
      for (int y = 0; y < os.h; ++y)
        for (int xo = 0; xo < os.w; ++xo) {
          const int i = y % scale, j = xo % scale;
          const std::size_t src = ((static_cast<std::size_t>(n) * xs.c + c * scale * scale + i * scale + j) * xs.h +
                                   y / scale) * xs.w + xo / scale;
          source[((static_cast<std::size_t>(n) * os.c + c) * os.h + y) * os.w + xo] = src;
        }

  const Tensor<T>& xv = tape.value(x);
  Tensor<T> out(os);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[source[i]];
  return tape.record(std::move(out), {x}, [=, source = std::move(source)](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[source[i]] += g[i];
  });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > T{0} ? xv[i] : T{0};
  return tape.record(std::move(out), {x}, [=](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xv = t.value(x);
    Tensor<T>& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > T{0}) gx[i] += g[i];
  });
}

template <typename T>
Var l1_loss(Tape<T>& tape, Var pred, Var target) {
  const Shape ps = tape.shape(pred);
  require(ps == tape.shape(target), ErrorKind::kShapeMismatch,
          "l1_loss shapes differ: " + ps.str() + " vs " + tape.shape(target).str());
  const Tensor<T>& pv = tape.value(pred);
  const Tensor<T>& tv = tape.value(target);
  // Accumulate in double so the loss does not drift with the element count.
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) acc += std::abs(static_cast<double>(pv[i]) - static_cast<double>(tv[i]));
  const std::size_t count = pv.size();
  auto out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(count)));
  return tape.record(std::move(out), {pred, target}, [=](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& pv = t.value(pred);
    const Tensor<T>& tv = t.value(target);
    const T scale = g[0] / static_cast<T>(count);
    auto sign = [](T d) { return d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0}); };
    if (t.requires_grad(pred)) {
      Tensor<T>& gp = t.grad_buffer(pred);
      for (std::size_t i = 0; i < count; ++i) gp[i] += scale * sign(pv[i] - tv[i]);
    }
    if (t.requires_grad(target)) {
      Tensor<T>& gt = t.grad_buffer(target);
      for (std::size_t i = 0; i < count; ++i) gt[i] -= scale * sign(pv[i] - tv[i]);
    }
  });
}

template <typename T>
Var sum_all(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  T acc{0};
  for (const T v : xv.data()) acc += v;
  return tape.record(Tensor<T>::scalar(acc), {x}, [=](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
  });
}

template <typename T>
Var channel_slice(Tape<T>& tape, Var x, int begin, int count) {
  const Shape xs = tape.shape(x);
  require(begin >= 0 && count >= 1 && begin + count <= xs.c, ErrorKind::kShapeMismatch,
          "channel slice [" + std::to_string(begin) + ", " + std::to_string(begin + count) + ") out of range for " +
              xs.str());
  const std::size_t plane = xs.plane();
  const std::size_t block = static_cast<std::size_t>(count) * plane;
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> out(Shape{xs.n, count, xs.h, xs.w});
  for (int n = 0; n < xs.n; ++n) {
    const auto src = xv.data().begin() + static_cast<std::ptrdiff_t>(xv.offset(n, begin, 0, 0));
    std::copy(src, src + static_cast<std::ptrdiff_t>(block), out.data().begin() + static_cast<std::ptrdiff_t>(n * block));
  }
  return tape.record(std::move(out), {x}, [=](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buffer(x);
    for (int n = 0; n < xs.n; ++n) {
      const std::size_t dst = gx.offset(n, begin, 0, 0);
      for (std::size_t i = 0; i < block; ++i) gx[dst + i] += g[n * block + i];
    }
  });
}

template <typename T>
Var channel_concat(Tape<T>& tape, std::span<const Var> parts) {
  require(!parts.empty(), ErrorKind::kInvalidArgument, "channel_concat needs at least one input");
  const Shape first = tape.shape(parts.front());
  int channels = 0;
  for (const Var p : parts) {
    const Shape s = tape.shape(p);
    require(s.n == first.n && s.h == first.h && s.w == first.w, ErrorKind::kShapeMismatch,
            "channel_concat of incompatible shapes " + first.str() + " and " + s.str());
    channels += s.c;
  }
  const std::size_t plane = first.plane();
  Tensor<T> out(Shape{first.n, channels, first.h, first.w});
  std::vector<int> starts;
  int c0 = 0;
  for (const Var p : parts) {
    const Tensor<T>& pv = tape.value(p);
    const std::size_t block = static_cast<std::size_t>(pv.shape().c) * plane;
    for (int n = 0; n < first.n; ++n)
      std::copy_n(pv.data().begin() + static_cast<std::ptrdiff_t>(n * block), block,
                  out.data().begin() + static_cast<std::ptrdiff_t>(out.offset(n, c0, 0, 0)));
    starts.push_back(c0);
    c0 += pv.shape().c;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(std::move(out), inputs, [=](Tape<T>& t, const Tensor<T>& g) {
    for (std::size_t p = 0; p < inputs.size(); ++p) {
      if (!t.requires_grad(inputs[p])) continue;
      Tensor<T>& gp = t.grad_buffer(inputs[p]);
      const std::size_t block = static_cast<std::size_t>(gp.shape().c) * plane;
      for (int n = 0; n < first.n; ++n) {
        const std::size_t src = g.offset(n, starts[p], 0, 0);
        for (std::size_t i = 0; i < block; ++i) gp[n * block + i] += g[src + i];
      }
    }
  });
}

#define SISN_INSTANTIATE_OPS(T)                                                  \
  template Var conv2d<T>(Tape<T>&, Var, Var, Var, int);                          \
  template Var elementwise<T>(Tape<T>&, Var, Var, Elementwise);                  \
  template Var global_avg_pool<T>(Tape<T>&, Var);                                \
  template Var r_softmax<T>(Tape<T>&, Var, int);                                 \
  template Var pixel_shuffle<T>(Tape<T>&, Var, int);                             \
  template Var relu<T>(Tape<T>&, Var);                                           \
  template Var l1_loss<T>(Tape<T>&, Var, Var);                                   \
  template Var sum_all<T>(Tape<T>&, Var);                                        \
  template Var channel_slice<T>(Tape<T>&, Var, int, int);                        \
  template Var channel_concat<T>(Tape<T>&, std::span<const Var>);

SISN_INSTANTIATE_OPS(float)
SISN_INSTANTIATE_OPS(double)

}  // namespace sisn
