#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "utb/error.hpp"
#include "utb/nn/tensor.hpp"
#include "utb/rng.hpp"

namespace utb::nn {

// Convolution geometry. Weights are stored flat as (kh, kw, c_in, filters)
// with the filter index fastest; biases are one value per filter.
struct ConvGeom {
    std::uint32_t filters = 1, kh = 1, kw = 1, sh = 1, sw = 1;
    std::uint32_t cin = 1;

    std::size_t weight_count() const {
        return static_cast<std::size_t>(kh) * kw * cin * filters;
    }
    std::size_t windex(std::uint32_t ki, std::uint32_t kj, std::uint32_t ci,
                       std::uint32_t f) const {
        return ((static_cast<std::size_t>(ki) * kw + kj) * cin + ci) * filters + f;
    }
};

// Valid padding, floor division.
inline Shape3 conv_output_shape(const Shape3& in, const ConvGeom& g) {
    if (g.kh > in.h || g.kw > in.w)
        throw ShapeError("convolution kernel larger than its input");
    if (g.cin != in.c) throw ShapeError("convolution input channel mismatch");
    return Shape3{(in.h - g.kh) / g.sh + 1, (in.w - g.kw) / g.sw + 1, g.filters};
}

// Cross-correlation plus bias.
template <class Real>
Tensor3<Real> conv2d_forward(const Tensor3<Real>& x, const ConvGeom& g,
                             std::span<const Real> w, std::span<const Real> b) {
    const Shape3 os = conv_output_shape(Shape3{x.h, x.w, x.c}, g);
    if (w.size() != g.weight_count() || b.size() != g.filters)
        throw ShapeError("convolution parameter size mismatch");
    Tensor3<Real> y(os.h, os.w, os.c);
    std::vector<Real> acc(g.filters);
    for (std::uint32_t oh = 0; oh < os.h; ++oh) {
        for (std::uint32_t ow = 0; ow < os.w; ++ow) {
            std::copy(b.begin(), b.end(), acc.begin());
            for (std::uint32_t ki = 0; ki < g.kh; ++ki) {
                for (std::uint32_t kj = 0; kj < g.kw; ++kj) {
                    const Real* xp = &x.v[(static_cast<std::size_t>(oh * g.sh + ki) * x.w +
                                           (ow * g.sw + kj)) *
                                          x.c];
                    for (std::uint32_t ci = 0; ci < g.cin; ++ci) {
                        const Real xv = xp[ci];
                        const Real* wp = &w[g.windex(ki, kj, ci, 0)];
                        for (std::uint32_t f = 0; f < g.filters; ++f) acc[f] += xv * wp[f];
                    }
                }
            }
            Real* yp = &y.v[(static_cast<std::size_t>(oh) * os.w + ow) * os.c];
            std::copy(acc.begin(), acc.end(), yp);
        }
    }
    return y;
}

// dx is overwritten; dw and db are accumulated so batches can sum in place.
template <class Real>
void conv2d_backward(const Tensor3<Real>& x, const ConvGeom& g, std::span<const Real> w,
                     const Tensor3<Real>& dy, Tensor3<Real>& dx, std::span<Real> dw,
                     std::span<Real> db) {
    const Shape3 os = conv_output_shape(Shape3{x.h, x.w, x.c}, g);
    if (dy.h != os.h || dy.w != os.w || dy.c != os.c)
        throw ShapeError("convolution gradient shape mismatch");
    if (w.size() != g.weight_count() || dw.size() != w.size() || db.size() != g.filters)
        throw ShapeError("convolution parameter size mismatch");
    dx = Tensor3<Real>(x.h, x.w, x.c);
    for (std::uint32_t oh = 0; oh < os.h; ++oh) {
        for (std::uint32_t ow = 0; ow < os.w; ++ow) {
            const Real* dyp = &dy.v[(static_cast<std::size_t>(oh) * os.w + ow) * os.c];
            for (std::uint32_t f = 0; f < g.filters; ++f) db[f] += dyp[f];
            for (std::uint32_t ki = 0; ki < g.kh; ++ki) {
                for (std::uint32_t kj = 0; kj < g.kw; ++kj) {
                    const std::size_t xoff =
                        (static_cast<std::size_t>(oh * g.sh + ki) * x.w + (ow * g.sw + kj)) * x.c;
                    for (std::uint32_t ci = 0; ci < g.cin; ++ci) {
                        const Real xv = x.v[xoff + ci];
                        Real* dwp = &dw[g.windex(ki, kj, ci, 0)];
                        const Real* wp = &w[g.windex(ki, kj, ci, 0)];
                        Real sum = 0;
                        for (std::uint32_t f = 0; f < g.filters; ++f) {
                            dwp[f] += xv * dyp[f];
                            sum += wp[f] * dyp[f];
                        }
                        dx.v[xoff + ci] += sum;
                    }
                }
            }
        }
    }
}

// Dense weights are stored flat as (in, out), out fastest.
template <class Real>
Tensor3<Real> dense_forward(const Tensor3<Real>& x, std::uint32_t out, std::span<const Real> w,
                            std::span<const Real> b) {
    const auto in = static_cast<std::uint32_t>(x.size());
    if (w.size() != static_cast<std::size_t>(in) * out || b.size() != out)
        throw ShapeError("dense parameter size mismatch");
    Tensor3<Real> y = Tensor3<Real>::flat(out);
    std::copy(b.begin(), b.end(), y.v.begin());
    for (std::uint32_t i = 0; i < in; ++i) {
        const Real xv = x.v[i];
        const Real* wp = &w[static_cast<std::size_t>(i) * out];
        for (std::uint32_t o = 0; o < out; ++o) y.v[o] += xv * wp[o];
    }
    return y;
}

template <class Real>
void dense_backward(const Tensor3<Real>& x, std::uint32_t out, std::span<const Real> w,
                    const Tensor3<Real>& dy, Tensor3<Real>& dx, std::span<Real> dw,
                    std::span<Real> db) {
    const auto in = static_cast<std::uint32_t>(x.size());
    if (dy.size() != out || w.size() != static_cast<std::size_t>(in) * out ||
        dw.size() != w.size() || db.size() != out)
        throw ShapeError("dense gradient shape mismatch");
    dx = Tensor3<Real>(x.h, x.w, x.c);
    for (std::uint32_t o = 0; o < out; ++o) db[o] += dy.v[o];
    for (std::uint32_t i = 0; i < in; ++i) {
        const Real xv = x.v[i];
        Real* dwp = &dw[static_cast<std::size_t>(i) * out];
        const Real* wp = &w[static_cast<std::size_t>(i) * out];
        Real sum = 0;
        for (std::uint32_t o = 0; o < out; ++o) {
            dwp[o] += xv * dy.v[o];
            sum += wp[o] * dy.v[o];
        }
        dx.v[i] = sum;
    }
}

template <class Real>
Tensor3<Real> relu_forward(const Tensor3<Real>& x) {
    Tensor3<Real> y = x;
    for (Real& v : y.v) v = std::max(v, Real(0));
    return y;
}

// Pre-activation input defines the gate; the subgradient at 0 is 0.
template <class Real>
Tensor3<Real> relu_backward(const Tensor3<Real>& x, const Tensor3<Real>& dy) {
    if (!x.same_shape(dy)) throw ShapeError("relu gradient shape mismatch");
    Tensor3<Real> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (x.v[i] <= Real(0)) dx.v[i] = Real(0);
    return dx;
}

// Numerically stable softmax over a flat tensor.
template <class Real>
Tensor3<Real> softmax_forward(const Tensor3<Real>& x) {
    Tensor3<Real> y = x;
    Real m = x.v[0];
    for (Real v : x.v) m = std::max(m, v);
    Real sum = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        y.v[i] = std::exp(x.v[i] - m);
        sum += y.v[i];
    }
    for (Real& v : y.v) v /= sum;
    return y;
}

// Full Jacobian product: dx_i = y_i (dy_i - sum_j dy_j y_j).
template <class Real>
Tensor3<Real> softmax_backward(const Tensor3<Real>& y, const Tensor3<Real>& dy) {
    if (!y.same_shape(dy)) throw ShapeError("softmax gradient shape mismatch");
    Real dot = 0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += dy.v[i] * y.v[i];
    Tensor3<Real> dx = y;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.v[i] = y.v[i] * (dy.v[i] - dot);
    return dx;
}

inline std::vector<std::uint8_t> make_dropout_mask(std::size_t n, double rate, rng::SplitMix& g) {
    std::vector<std::uint8_t> mask(n);
    for (auto& m : mask) m = g.uniform01() >= rate ? 1 : 0;
    return mask;
}

// Inverted scaling: kept units are divided by the keep probability during
// training so inference needs no rescale.
template <class Real>
Tensor3<Real> dropout_apply(const Tensor3<Real>& x, std::span<const std::uint8_t> mask,
                            double rate) {
    if (mask.size() != x.size()) throw ShapeError("dropout mask size mismatch");
    const Real scale = Real(1.0 / (1.0 - rate));
    Tensor3<Real> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y.v[i] = mask[i] ? y.v[i] * scale : Real(0);
    return y;
}

template <class Real>
Tensor3<Real> dropout_backward(const Tensor3<Real>& dy, std::span<const std::uint8_t> mask,
                               double rate) {
    return dropout_apply(dy, mask, rate);
}

// Cross-entropy against a one-hot target, clamped away from log(0).
template <class Real>
double xent_loss(const Tensor3<Real>& probs, std::uint32_t label) {
    if (label >= probs.size()) throw ShapeError("label out of range");
    return -std::log(std::max(static_cast<double>(probs.v[label]), 1e-300));
}

}  // namespace utb::nn
