// Forward/backward numerical kernels for every layer type.
//
// All spatial kernels are "slab" kernels: the tensor argument covers a window
// of a conceptual dense feature map ("level") and carries the global origin of
// its first row/column. Coordinates outside [0, level_extent) are padding
// (zeros for conv, -inf for max-pool); coordinates inside the level but
// outside the slab are a planner bug and trip an exception. Dense execution
// is the special case slab == level.
//
// Accumulation contract: every output element of conv2d_forward accumulates
// its products in the fixed order (in_channel, kernel_row, kernel_col) into a
// double accumulator and rounds to float once on store. This makes tiled
// re-execution of the same output element bit-identical to dense execution.
// Gradient kernels also use double accumulators but their summation order is
// only fixed per build, not bit-matched across execution strategies.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "streamconv/tensor.hpp"

namespace streamconv {

using i64 = std::int64_t;

// Half-open rectangle in global (level) coordinates.
struct Rect {
    i64 y0 = 0, x0 = 0, y1 = 0, x1 = 0;

    static Rect all() {
        constexpr i64 big = std::numeric_limits<i64>::max() / 4;
        return Rect{-big, -big, big, big};
    }
    Rect intersect(const Rect& o) const {
        return Rect{std::max(y0, o.y0), std::max(x0, o.x0), std::min(y1, o.y1),
                    std::min(x1, o.x1)};
    }
    bool empty() const { return y1 <= y0 || x1 <= x0; }
    i64 height() const { return std::max<i64>(0, y1 - y0); }
    i64 width() const { return std::max<i64>(0, x1 - x0); }
};

template <class T>
struct ConvParamsT {
    TensorT<T> weight;  // (outC, inC, kH, kW)
    TensorT<T> bias;    // (1, outC, 1, 1)
    i64 sh = 1, sw = 1;
    i64 ph = 0, pw = 0;

    void validate() const {
        if (weight.shape().h < 1 || weight.shape().w < 1)
            throw std::invalid_argument("conv: kernel extents must be >= 1");
        if (sh < 1 || sw < 1)
            throw std::invalid_argument("conv: stride must be >= 1");
        if (ph < 0 || pw < 0)
            throw std::invalid_argument("conv: padding must be >= 0");
        if (bias.shape().c != weight.shape().n)
            throw std::invalid_argument("conv: bias/out-channel mismatch");
    }
};
using ConvParams = ConvParamsT<float>;

template <class T>
struct FrozenNormParamsT {
    TensorT<T> mean, variance, scale, shift;  // each (1, C, 1, 1)
    double epsilon = 1e-5;

    void validate() const {
        const i64 c = mean.shape().c;
        if (variance.shape().c != c || scale.shape().c != c ||
            shift.shape().c != c)
            throw std::invalid_argument("frozen_norm: channel mismatch");
        for (i64 i = 0; i < c; ++i)
            if (static_cast<double>(variance.data()[i]) + epsilon <= 0.0)
                throw std::invalid_argument(
                    "frozen_norm: variance + epsilon must be positive");
    }
};
using FrozenNormParams = FrozenNormParamsT<float>;

inline i64 conv_out_extent(i64 in, i64 k, i64 s, i64 p) {
    return (in + 2 * p - k) / s + 1;
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

// Computes out[b,oc,oy,ox] for global output rows [out_y0, out_y0+out.h) and
// columns [out_x0, out_x0+out.w). `in` covers level rows [in_y0, in_y0+in.h).
template <class T>
void conv2d_forward_slab(const TensorT<T>& in, i64 in_y0, i64 in_x0,
                         i64 level_h, i64 level_w, const ConvParamsT<T>& p,
                         TensorT<T>& out, i64 out_y0, i64 out_x0) {
    p.validate();
    const i64 B = in.shape().n, IC = in.shape().c;
    const i64 OC = p.weight.shape().n, KH = p.weight.shape().h,
              KW = p.weight.shape().w;
    if (p.weight.shape().c != IC)
        throw std::invalid_argument(
            "conv: input channels " + std::to_string(IC) +
            " do not match weight in-channels " +
            std::to_string(p.weight.shape().c));
    if (out.shape().n != B || out.shape().c != OC)
        throw std::invalid_argument("conv: bad output tensor shape");

    const i64 OH = out.shape().h, OW = out.shape().w;
    const i64 in_h = in.shape().h, in_w = in.shape().w;

#pragma omp parallel for collapse(2) schedule(static)
    for (i64 b = 0; b < B; ++b) {
        for (i64 oc = 0; oc < OC; ++oc) {
            std::vector<double> acc(static_cast<std::size_t>(OW));
            const double bias = static_cast<double>(p.bias.data()[oc]);
            for (i64 oy = 0; oy < OH; ++oy) {
                const i64 gy0 = (out_y0 + oy) * p.sh - p.ph;
                std::fill(acc.begin(), acc.end(), bias);
                for (i64 ic = 0; ic < IC; ++ic) {
                    for (i64 kh = 0; kh < KH; ++kh) {
                        const i64 gy = gy0 + kh;
                        if (gy < 0 || gy >= level_h) continue;
                        const i64 ry = gy - in_y0;
                        if (ry < 0 || ry >= in_h)
                            throw std::logic_error(
                                "conv: required input row outside slab");
                        const T* inrow = in.data() + in.index(b, ic, ry, 0);
                        const T* wrow =
                            p.weight.data() + p.weight.index(oc, ic, kh, 0);
                        for (i64 kw = 0; kw < KW; ++kw) {
                            const double wv = static_cast<double>(wrow[kw]);
                            // Global column of tap kw for output ox.
                            // gx = (out_x0+ox)*sw - pw + kw, valid iff in
                            // [0, level_w); fringe handled per element.
                            const i64 gxb = out_x0 * p.sw - p.pw + kw;
                            i64 lo = 0, hi = OW;
                            // smallest ox with gxb + ox*sw >= 0
                            if (gxb < 0) lo = (-gxb + p.sw - 1) / p.sw;
                            // smallest ox with gxb + ox*sw >= level_w
                            if (gxb + (OW - 1) * p.sw >= level_w)
                                hi = (level_w - gxb + p.sw - 1) / p.sw;
                            if (lo >= hi) continue;
                            const i64 rb = gxb - in_x0;
                            if (rb + lo * p.sw < 0 ||
                                rb + (hi - 1) * p.sw >= in_w)
                                throw std::logic_error(
                                    "conv: required input col outside slab");
                            if (p.sw == 1) {
                                const T* src = inrow + rb;
                                double* a = acc.data();
                                for (i64 ox = lo; ox < hi; ++ox)
                                    a[ox] += wv * static_cast<double>(src[ox]);
                            } else {
                                for (i64 ox = lo; ox < hi; ++ox)
                                    acc[ox] += wv * static_cast<double>(
                                                        inrow[rb + ox * p.sw]);
                            }
                        }
                    }
                }
                T* orow = out.data() + out.index(b, oc, oy, 0);
                for (i64 ox = 0; ox < OW; ++ox)
                    orow[ox] = static_cast<T>(acc[ox]);
            }
        }
    }
}

// Dense convenience wrapper: full-level input, full output.
template <class T>
TensorT<T> conv2d_forward(const TensorT<T>& in, const ConvParamsT<T>& p) {
    p.validate();
    const i64 OH = conv_out_extent(in.shape().h, p.weight.shape().h, p.sh, p.ph);
    const i64 OW = conv_out_extent(in.shape().w, p.weight.shape().w, p.sw, p.pw);
    if (OH < 1 || OW < 1)
        throw std::invalid_argument("conv: output extent < 1 for input " +
                                    in.shape().str());
    TensorT<T> out(Shape4{in.shape().n, p.weight.shape().n, OH, OW});
    conv2d_forward_slab(in, 0, 0, in.shape().h, in.shape().w, p, out, 0, 0);
    return out;
}

// Gradient w.r.t. input, gather form. grad_in covers the same slab as `in`
// did; grad_out covers output rows [go_y0, ...). Only grad cells present in
// grad_out contribute (callers arrange that missing cells belong to
// neighbouring tiles).
template <class T>
void conv2d_backward_input_slab(const ConvParamsT<T>& p,
                                const TensorT<T>& grad_out, i64 go_y0,
                                i64 go_x0, TensorT<T>& grad_in, i64 gi_y0,
                                i64 gi_x0) {
    const i64 B = grad_out.shape().n, OC = grad_out.shape().c;
    const i64 IC = p.weight.shape().c, KH = p.weight.shape().h,
              KW = p.weight.shape().w;
    const i64 GOH = grad_out.shape().h, GOW = grad_out.shape().w;
    const i64 GIH = grad_in.shape().h, GIW = grad_in.shape().w;

#pragma omp parallel for collapse(2) schedule(static)
    for (i64 b = 0; b < B; ++b) {
        for (i64 ic = 0; ic < IC; ++ic) {
            for (i64 ry = 0; ry < GIH; ++ry) {
                const i64 gy = gi_y0 + ry;  // global input row
                T* girow = grad_in.data() + grad_in.index(b, ic, ry, 0);
                for (i64 rx = 0; rx < GIW; ++rx) {
                    const i64 gx = gi_x0 + rx;
                    double acc = 0.0;
                    for (i64 oc = 0; oc < OC; ++oc) {
                        for (i64 kh = 0; kh < KH; ++kh) {
                            const i64 oy_num = gy + p.ph - kh;
                            if (oy_num % p.sh != 0) continue;
                            const i64 oy = oy_num / p.sh - go_y0;
                            if (oy < 0 || oy >= GOH) continue;
                            const T* gorow =
                                grad_out.data() + grad_out.index(b, oc, oy, 0);
                            const T* wrow = p.weight.data() +
                                            p.weight.index(oc, ic, kh, 0);
                            for (i64 kw = 0; kw < KW; ++kw) {
                                const i64 ox_num = gx + p.pw - kw;
                                if (ox_num % p.sw != 0) continue;
                                const i64 ox = ox_num / p.sw - go_x0;
                                if (ox < 0 || ox >= GOW) continue;
                                acc += static_cast<double>(wrow[kw]) *
                                       static_cast<double>(gorow[ox]);
                            }
                        }
                    }
                    girow[rx] = static_cast<T>(acc);
                }
            }
        }
    }
}

// Accumulates weight/bias gradients from the grad cells inside `owned`
// (global output coordinates). Accumulation is += so tiles can merge into a
// shared buffer in plan order.
template <class T>
void conv2d_backward_params_slab(const TensorT<T>& in, i64 in_y0, i64 in_x0,
                                 i64 level_h, i64 level_w,
                                 const ConvParamsT<T>& p,
                                 const TensorT<T>& grad_out, i64 go_y0,
                                 i64 go_x0, const Rect& owned,
                                 TensorT<T>* grad_w, TensorT<T>* grad_b) {
    const i64 B = grad_out.shape().n, OC = grad_out.shape().c;
    const i64 IC = p.weight.shape().c, KH = p.weight.shape().h,
              KW = p.weight.shape().w;
    Rect r = owned.intersect(Rect{go_y0, go_x0, go_y0 + grad_out.shape().h,
                                  go_x0 + grad_out.shape().w});
    if (r.empty()) return;
    const i64 in_h = in.shape().h;

    if (grad_w) {
#pragma omp parallel for collapse(2) schedule(static)
        for (i64 oc = 0; oc < OC; ++oc) {
            for (i64 ic = 0; ic < IC; ++ic) {
                for (i64 kh = 0; kh < KH; ++kh) {
                    for (i64 kw = 0; kw < KW; ++kw) {
                        double acc = 0.0;
                        for (i64 b = 0; b < B; ++b) {
                            for (i64 gy = r.y0; gy < r.y1; ++gy) {
                                const i64 iy = gy * p.sh - p.ph + kh;
                                if (iy < 0 || iy >= level_h) continue;
                                if (iy - in_y0 < 0 || iy - in_y0 >= in_h)
                                    throw std::logic_error(
                                        "conv grad_w: input row outside slab");
                                const T* gorow =
                                    grad_out.data() +
                                    grad_out.index(b, oc, gy - go_y0, 0) -
                                    go_x0;
                                const T* inrow = in.data() +
                                                 in.index(b, ic, iy - in_y0, 0) -
                                                 in_x0;
                                const i64 xoff = -p.pw + kw;
                                // keep input taps inside [0, level_w)
                                i64 lo = r.x0, hi = r.x1;
                                while (lo < hi && lo * p.sw + xoff < 0) ++lo;
                                while (hi > lo &&
                                       (hi - 1) * p.sw + xoff >= level_w)
                                    --hi;
                                double row = 0.0;
                                if (p.sw == 1) {
                                    const T* src = inrow + xoff;
#pragma omp simd reduction(+ : row)
                                    for (i64 gx = lo; gx < hi; ++gx)
                                        row += static_cast<double>(gorow[gx]) *
                                               static_cast<double>(src[gx]);
                                } else {
                                    for (i64 gx = lo; gx < hi; ++gx)
                                        row += static_cast<double>(gorow[gx]) *
                                               static_cast<double>(
                                                   inrow[gx * p.sw + xoff]);
                                }
                                acc += row;
                            }
                        }
                        grad_w->at(oc, ic, kh, kw) += static_cast<T>(acc);
                    }
                }
            }
        }
    }
    if (grad_b) {
#pragma omp parallel for schedule(static)
        for (i64 oc = 0; oc < OC; ++oc) {
            double acc = 0.0;
            for (i64 b = 0; b < B; ++b)
                for (i64 gy = r.y0; gy < r.y1; ++gy) {
                    const T* gorow = grad_out.data() +
                                     grad_out.index(b, oc, gy - go_y0, 0) -
                                     go_x0;
                    double row = 0.0;
#pragma omp simd reduction(+ : row)
                    for (i64 gx = r.x0; gx < r.x1; ++gx)
                        row += static_cast<double>(gorow[gx]);
                    acc += row;
                }
            grad_b->data()[oc] += static_cast<T>(acc);
        }
    }
}

// Dense convenience wrapper returning (grad_input, grad_weight, grad_bias).
template <class T>
struct ConvGrads {
    TensorT<T> input, weight, bias;
};

template <class T>
ConvGrads<T> conv2d_backward(const TensorT<T>& in, const ConvParamsT<T>& p,
                             const TensorT<T>& grad_out) {
    p.validate();
    const i64 OH = conv_out_extent(in.shape().h, p.weight.shape().h, p.sh, p.ph);
    const i64 OW = conv_out_extent(in.shape().w, p.weight.shape().w, p.sw, p.pw);
    check_shape(grad_out,
                Shape4{in.shape().n, p.weight.shape().n, OH, OW},
                "conv2d_backward grad_out");
    ConvGrads<T> g{TensorT<T>(in.shape()), TensorT<T>(p.weight.shape()),
                   TensorT<T>(p.bias.shape())};
    conv2d_backward_input_slab(p, grad_out, 0, 0, g.input, 0, 0);
    conv2d_backward_params_slab(in, 0, 0, in.shape().h, in.shape().w, p,
                                grad_out, 0, 0, Rect::all(), &g.weight,
                                &g.bias);
    return g;
}

// ---------------------------------------------------------------------------
// max-pool (padding acts as -inf; ties break to the first tap in row-major
// window order, recorded as a local window index for backward routing)
// ---------------------------------------------------------------------------

template <class T>
void maxpool_forward_slab(const TensorT<T>& in, i64 in_y0, i64 in_x0,
                          i64 level_h, i64 level_w, i64 kh, i64 kw, i64 sh,
                          i64 sw, i64 ph, i64 pw, TensorT<T>& out,
                          TensorT<std::int32_t>& argmax, i64 out_y0,
                          i64 out_x0) {
    const i64 B = in.shape().n, C = in.shape().c;
    const i64 OH = out.shape().h, OW = out.shape().w;
#pragma omp parallel for collapse(2) schedule(static)
    for (i64 b = 0; b < B; ++b) {
        for (i64 c = 0; c < C; ++c) {
            for (i64 oy = 0; oy < OH; ++oy) {
                for (i64 ox = 0; ox < OW; ++ox) {
                    const i64 gy0 = (out_y0 + oy) * sh - ph;
                    const i64 gx0 = (out_x0 + ox) * sw - pw;
                    T best = std::numeric_limits<T>::lowest();
                    std::int32_t besti = -1;
                    for (i64 dy = 0; dy < kh; ++dy) {
                        const i64 gy = gy0 + dy;
                        if (gy < 0 || gy >= level_h) continue;
                        for (i64 dx = 0; dx < kw; ++dx) {
                            const i64 gx = gx0 + dx;
                            if (gx < 0 || gx >= level_w) continue;
                            const T v = in.at(b, c, gy - in_y0, gx - in_x0);
                            if (besti < 0 || v > best) {
                                best = v;
                                besti = static_cast<std::int32_t>(dy * kw + dx);
                            }
                        }
                    }
                    if (besti < 0)
                        throw std::invalid_argument(
                            "maxpool: window entirely outside input");
                    out.at(b, c, oy, ox) = best;
                    argmax.at(b, c, oy, ox) = besti;
                }
            }
        }
    }
}

template <class T>
void maxpool_backward_slab(const TensorT<T>& grad_out,
                           const TensorT<std::int32_t>& argmax, i64 go_y0,
                           i64 go_x0, i64 kh, i64 kw, i64 sh, i64 sw, i64 ph,
                           i64 pw, TensorT<T>& grad_in, i64 gi_y0, i64 gi_x0) {
    const i64 B = grad_out.shape().n, C = grad_out.shape().c;
    const i64 GOH = grad_out.shape().h, GOW = grad_out.shape().w;
    const i64 GIH = grad_in.shape().h, GIW = grad_in.shape().w;
#pragma omp parallel for collapse(2) schedule(static)
    for (i64 b = 0; b < B; ++b) {
        for (i64 c = 0; c < C; ++c) {
            for (i64 ry = 0; ry < GIH; ++ry) {
                const i64 gy = gi_y0 + ry;
                for (i64 rx = 0; rx < GIW; ++rx) {
                    const i64 gx = gi_x0 + rx;
                    double acc = 0.0;
                    for (i64 dy = 0; dy < kh; ++dy) {
                        const i64 oy_num = gy + ph - dy;
                        if (oy_num % sh != 0) continue;
                        const i64 oy = oy_num / sh - go_y0;
                        if (oy < 0 || oy >= GOH) continue;
                        for (i64 dx = 0; dx < kw; ++dx) {
                            const i64 ox_num = gx + pw - dx;
                            if (ox_num % sw != 0) continue;
                            const i64 ox = ox_num / sw - go_x0;
                            if (ox < 0 || ox >= GOW) continue;
                            if (argmax.at(b, c, oy, ox) ==
                                static_cast<std::int32_t>(dy * kw + dx))
                                acc += static_cast<double>(
                                    grad_out.at(b, c, oy, ox));
                        }
                    }
                    grad_in.at(b, c, ry, rx) = static_cast<T>(acc);
                }
            }
        }
    }
}

template <class T>
std::pair<TensorT<T>, TensorT<std::int32_t>> maxpool_forward(
    const TensorT<T>& in, i64 k, i64 s, i64 p) {
    const i64 OH = conv_out_extent(in.shape().h, k, s, p);
    const i64 OW = conv_out_extent(in.shape().w, k, s, p);
    if (OH < 1 || OW < 1)
        throw std::invalid_argument("maxpool: output extent < 1");
    Shape4 os{in.shape().n, in.shape().c, OH, OW};
    TensorT<T> out(os);
    TensorT<std::int32_t> amax(os);
    maxpool_forward_slab(in, 0, 0, in.shape().h, in.shape().w, k, k, s, s, p,
                         p, out, amax, 0, 0);
    return {std::move(out), std::move(amax)};
}

template <class T>
TensorT<T> maxpool_backward(const TensorT<T>& grad_out,
                            const TensorT<std::int32_t>& argmax,
                            const Shape4& in_shape, i64 k, i64 s, i64 p) {
    check_shape(grad_out, argmax.shape(), "maxpool_backward grad_out");
    TensorT<T> gi(in_shape);
    maxpool_backward_slab(grad_out, argmax, 0, 0, k, k, s, s, p, p, gi, 0, 0);
    return gi;
}

// ---------------------------------------------------------------------------
// pointwise layers
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> relu_forward(const TensorT<T>& in) {
    TensorT<T> out(in.shape());
    const i64 n = in.numel();
    const T* src = in.data();
    T* dst = out.data();
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
    return out;
}

template <class T>
TensorT<T> relu_backward(const TensorT<T>& in, const TensorT<T>& grad_out) {
    check_shape(grad_out, in.shape(), "relu_backward grad_out");
    TensorT<T> gi(in.shape());
    const i64 n = in.numel();
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i)
        gi.data()[i] = in.data()[i] > T(0) ? grad_out.data()[i] : T(0);
    return gi;
}

template <class T>
TensorT<T> frozen_norm_forward(const TensorT<T>& in,
                               const FrozenNormParamsT<T>& p) {
    p.validate();
    if (in.shape().c != p.mean.shape().c)
        throw std::invalid_argument("frozen_norm: channel count mismatch");
    TensorT<T> out(in.shape());
    const i64 B = in.shape().n, C = in.shape().c,
              HW = in.shape().h * in.shape().w;
#pragma omp parallel for collapse(2) schedule(static)
    for (i64 b = 0; b < B; ++b) {
        for (i64 c = 0; c < C; ++c) {
            const double m = static_cast<double>(p.mean.data()[c]);
            const double inv =
                1.0 / std::sqrt(static_cast<double>(p.variance.data()[c]) +
                                p.epsilon);
            const double a = static_cast<double>(p.scale.data()[c]) * inv;
            const double sh = static_cast<double>(p.shift.data()[c]);
            const T* src = in.data() + (b * C + c) * HW;
            T* dst = out.data() + (b * C + c) * HW;
            for (i64 i = 0; i < HW; ++i)
                dst[i] = static_cast<T>(
                    a * (static_cast<double>(src[i]) - m) + sh);
        }
    }
    return out;
}

// grad_scale/grad_shift accumulate (+=) over grad cells inside `owned`
// (global coordinates of the grad_out slab at origin go_y0/go_x0).
// Mean and variance are constants: no gradient.
template <class T>
TensorT<T> frozen_norm_backward_slab(const TensorT<T>& in,
                                     const FrozenNormParamsT<T>& p,
                                     const TensorT<T>& grad_out, i64 go_y0,
                                     i64 go_x0, const Rect& owned,
                                     TensorT<T>* grad_scale,
                                     TensorT<T>* grad_shift) {
    check_shape(grad_out, in.shape(), "frozen_norm_backward grad_out");
    TensorT<T> gi(in.shape());
    const i64 B = in.shape().n, C = in.shape().c, H = in.shape().h,
              W = in.shape().w;
    Rect r = owned.intersect(Rect{go_y0, go_x0, go_y0 + H, go_x0 + W});
#pragma omp parallel for schedule(static)
    for (i64 c = 0; c < C; ++c) {
        const double m = static_cast<double>(p.mean.data()[c]);
        const double inv = 1.0 / std::sqrt(
                               static_cast<double>(p.variance.data()[c]) +
                               p.epsilon);
        const double a = static_cast<double>(p.scale.data()[c]) * inv;
        double gs = 0.0, gsh = 0.0;
        for (i64 b = 0; b < B; ++b) {
            for (i64 y = 0; y < H; ++y) {
                const T* grow = grad_out.data() + grad_out.index(b, c, y, 0);
                const T* irow = in.data() + in.index(b, c, y, 0);
                T* gout = gi.data() + gi.index(b, c, y, 0);
                for (i64 x = 0; x < W; ++x)
                    gout[x] = static_cast<T>(a * static_cast<double>(grow[x]));
                if (!r.empty() && go_y0 + y >= r.y0 && go_y0 + y < r.y1) {
                    const i64 lo = r.x0 - go_x0, hi = r.x1 - go_x0;
                    for (i64 x = lo; x < hi; ++x) {
                        const double g = static_cast<double>(grow[x]);
                        gs += g * (static_cast<double>(irow[x]) - m) * inv;
                        gsh += g;
                    }
                }
            }
        }
        if (grad_scale) grad_scale->data()[c] += static_cast<T>(gs);
        if (grad_shift) grad_shift->data()[c] += static_cast<T>(gsh);
    }
    return gi;
}

template <class T>
TensorT<T> frozen_norm_backward(const TensorT<T>& in,
                                const FrozenNormParamsT<T>& p,
                                const TensorT<T>& grad_out,
                                TensorT<T>* grad_scale,
                                TensorT<T>* grad_shift) {
    return frozen_norm_backward_slab(in, p, grad_out, 0, 0, Rect::all(),
                                     grad_scale, grad_shift);
}

template <class T>
TensorT<T> residual_add(const TensorT<T>& a, const TensorT<T>& b) {
    check_shape(b, a.shape(), "residual_add");
    TensorT<T> out(a.shape());
    const i64 n = a.numel();
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < n; ++i)
        out.data()[i] = static_cast<T>(static_cast<double>(a.data()[i]) +
                                       static_cast<double>(b.data()[i]));
    return out;
}
// residual_add backward: gradient passes unchanged to both operands.

template <class T>
TensorT<T> global_avg_pool(const TensorT<T>& in) {
    const i64 B = in.shape().n, C = in.shape().c,
              HW = in.shape().h * in.shape().w;
    if (HW == 0) throw std::invalid_argument("global_avg_pool: empty input");
    TensorT<T> out(Shape4{B, C, 1, 1});
    for (i64 b = 0; b < B; ++b)
        for (i64 c = 0; c < C; ++c) {
            const T* src = in.data() + (b * C + c) * HW;
            double acc = 0.0;
            for (i64 i = 0; i < HW; ++i) acc += static_cast<double>(src[i]);
            out.at(b, c, 0, 0) = static_cast<T>(acc / static_cast<double>(HW));
        }
    return out;
}

template <class T>
TensorT<T> global_avg_pool_backward(const TensorT<T>& grad_out,
                                    const Shape4& in_shape) {
    TensorT<T> gi(in_shape);
    const i64 B = in_shape.n, C = in_shape.c, HW = in_shape.h * in_shape.w;
    for (i64 b = 0; b < B; ++b)
        for (i64 c = 0; c < C; ++c) {
            const T g = static_cast<T>(
                static_cast<double>(grad_out.at(b, c, 0, 0)) /
                static_cast<double>(HW));
            T* dst = gi.data() + (b * C + c) * HW;
            for (i64 i = 0; i < HW; ++i) dst[i] = g;
        }
    return gi;
}

// Single-logit head: logit[b] = bias + sum_c weight[c] * in[b,c,0,0].
template <class T>
struct LinearParamsT {
    TensorT<T> weight;  // (1, C, 1, 1)
    TensorT<T> bias;    // (1, 1, 1, 1)
};
using LinearParams = LinearParamsT<float>;

template <class T>
TensorT<T> linear_head_forward(const TensorT<T>& in,
                               const LinearParamsT<T>& p) {
    const i64 B = in.shape().n, C = in.shape().c;
    if (p.weight.shape().c != C)
        throw std::invalid_argument("linear_head: feature count mismatch");
    if (in.shape().h != 1 || in.shape().w != 1)
        throw std::invalid_argument("linear_head: expects pooled 1x1 input");
    TensorT<T> out(Shape4{B, 1, 1, 1});
    for (i64 b = 0; b < B; ++b) {
        double acc = static_cast<double>(p.bias.data()[0]);
        for (i64 c = 0; c < C; ++c)
            acc += static_cast<double>(p.weight.data()[c]) *
                   static_cast<double>(in.at(b, c, 0, 0));
        out.at(b, 0, 0, 0) = static_cast<T>(acc);
    }
    return out;
}

template <class T>
struct LinearGrads {
    TensorT<T> input, weight, bias;
};

template <class T>
LinearGrads<T> linear_head_backward(const TensorT<T>& in,
                                    const LinearParamsT<T>& p,
                                    const TensorT<T>& grad_out) {
    const i64 B = in.shape().n, C = in.shape().c;
    check_shape(grad_out, Shape4{B, 1, 1, 1}, "linear_head_backward grad_out");
    LinearGrads<T> g{TensorT<T>(in.shape()), TensorT<T>(p.weight.shape()),
                     TensorT<T>(p.bias.shape())};
    for (i64 c = 0; c < C; ++c) {
        double gw = 0.0;
        for (i64 b = 0; b < B; ++b)
            gw += static_cast<double>(grad_out.at(b, 0, 0, 0)) *
                  static_cast<double>(in.at(b, c, 0, 0));
        g.weight.data()[c] = static_cast<T>(gw);
    }
    double gb = 0.0;
    for (i64 b = 0; b < B; ++b) {
        const double go = static_cast<double>(grad_out.at(b, 0, 0, 0));
        gb += go;
        for (i64 c = 0; c < C; ++c)
            g.input.at(b, c, 0, 0) = static_cast<T>(
                go * static_cast<double>(p.weight.data()[c]));
    }
    g.bias.data()[0] = static_cast<T>(gb);
    return g;
}

// Numerically stable binary cross-entropy on a logit.
// loss = max(l,0) - l*y + log(1 + exp(-|l|)), dloss/dl = sigmoid(l) - y.
inline std::pair<double, double> bce_with_logit_loss(double logit,
                                                     double label) {
    const double loss = std::max(logit, 0.0) - logit * label +
                        std::log1p(std::exp(-std::abs(logit)));
    const double sig = 1.0 / (1.0 + std::exp(-logit));
    return {loss, sig - label};
}

}  // namespace streamconv
