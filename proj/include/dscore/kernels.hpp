#pragma once

// Numeric kernels: valid stride-1 cross-correlation, non-overlapping max pooling,
// affine maps, activations, loss, their backward passes and the SGD update.
// All kernels are pure functions of their arguments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dscore/errors.hpp"
#include "dscore/tensor.hpp"

namespace dscore {

namespace detail {

inline void expect_dim(const char* op, const char* what, std::size_t got, std::size_t want) {
    if (got != want)
        throw ShapeError(std::string(op) + ": " + what + " is " + std::to_string(got) + ", expected " +
                         std::to_string(want));
}

inline void expect_rank(const char* op, const char* what, std::size_t got, std::size_t want) {
    if (got != want)
        throw ShapeError(std::string(op) + ": " + what + " has rank " + std::to_string(got) + ", expected " +
                         std::to_string(want));
}

}  // namespace detail

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
    detail::expect_rank("conv2d", "input", input.rank(), 4);
    detail::expect_rank("conv2d", "weight", weight.rank(), 4);
    detail::expect_rank("conv2d", "bias", bias.rank(), 1);
    const auto [B, Cin, H, W] = input.shape4();
    const std::size_t Cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    detail::expect_dim("conv2d", "weight input channels", weight.dim(1), Cin);
    detail::expect_dim("conv2d", "bias length", bias.dim(0), Cout);
    if (kh > H) throw ShapeError("conv2d: kernel height " + std::to_string(kh) + " exceeds input height " + std::to_string(H));
    if (kw > W) throw ShapeError("conv2d: kernel width " + std::to_string(kw) + " exceeds input width " + std::to_string(W));
    const std::size_t Ho = H - kh + 1, Wo = W - kw + 1;

    BasicTensor<T> out({B, Cout, Ho, Wo});
    const T* in = input.data().data();
    const T* w = weight.data().data();
    T* o = out.data().data();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t oc = 0; oc < Cout; ++oc) {
            T* plane = o + (b * Cout + oc) * Ho * Wo;
            std::fill(plane, plane + Ho * Wo, bias[oc]);
            for (std::size_t c = 0; c < Cin; ++c) {
                const T* src = in + (b * Cin + c) * H * W;
                const T* ker = w + (oc * Cin + c) * kh * kw;
                for (std::size_t i = 0; i < kh; ++i) {
                    for (std::size_t j = 0; j < kw; ++j) {
                        const T k = ker[i * kw + j];
                        for (std::size_t y = 0; y < Ho; ++y) {
                            const T* row = src + (y + i) * W + j;
                            T* dst = plane + y * Wo;
                            for (std::size_t x = 0; x < Wo; ++x) dst[x] += k * row[x];
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
struct ConvGrads {
    BasicTensor<T> input;
    BasicTensor<T> weight;
    BasicTensor<T> bias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                             const BasicTensor<T>& grad_out) {
    const auto [B, Cin, H, W] = input.shape4();
    const std::size_t Cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    const std::size_t Ho = H - kh + 1, Wo = W - kw + 1;
    const auto gs = grad_out.shape4();
    detail::expect_dim("conv2d_backward", "grad batch", gs.batch, B);
    detail::expect_dim("conv2d_backward", "grad channels", gs.channels, Cout);
    detail::expect_dim("conv2d_backward", "grad height", gs.height, Ho);
    detail::expect_dim("conv2d_backward", "grad width", gs.width, Wo);

    ConvGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(weight.shape()), BasicTensor<T>({Cout})};
    const T* in = input.data().data();
    const T* w = weight.data().data();
    const T* go = grad_out.data().data();
    T* gi = g.input.data().data();
    T* gw = g.weight.data().data();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t oc = 0; oc < Cout; ++oc) {
            const T* gplane = go + (b * Cout + oc) * Ho * Wo;
            T bsum = 0;
            for (std::size_t k = 0; k < Ho * Wo; ++k) bsum += gplane[k];
            g.bias[oc] += bsum;
            for (std::size_t c = 0; c < Cin; ++c) {
                const T* src = in + (b * Cin + c) * H * W;
                T* gsrc = gi + (b * Cin + c) * H * W;
                const T* ker = w + (oc * Cin + c) * kh * kw;
                T* gker = gw + (oc * Cin + c) * kh * kw;
                for (std::size_t i = 0; i < kh; ++i) {
                    for (std::size_t j = 0; j < kw; ++j) {
                        const T k = ker[i * kw + j];
                        T acc = 0;
                        for (std::size_t y = 0; y < Ho; ++y) {
                            const T* row = src + (y + i) * W + j;
                            T* grow = gsrc + (y + i) * W + j;
                            const T* gr = gplane + y * Wo;
                            for (std::size_t x = 0; x < Wo; ++x) {
                                acc += gr[x] * row[x];
                                grow[x] += k * gr[x];
                            }
                        }
                        gker[i * kw + j] += acc;
                    }
                }
            }
        }
    }
    return g;
}

template <typename T>
struct PoolResult {
    BasicTensor<T> output;
    std::vector<std::size_t> argmax;  // flat input offset per output element
};

/// Non-overlapping max pooling (stride equals window). Ties resolve to the first
/// maximal element in row-major window order.
template <typename T>
PoolResult<T> maxpool2d_forward(const BasicTensor<T>& input, std::size_t ph, std::size_t pw) {
    const auto [B, C, H, W] = input.shape4();
    if (ph == 0 || pw == 0) throw ShapeError("maxpool2d: window must be non-empty");
    if (H % ph != 0)
        throw ShapeError("maxpool2d: height " + std::to_string(H) + " not divisible by window " + std::to_string(ph));
    if (W % pw != 0)
        throw ShapeError("maxpool2d: width " + std::to_string(W) + " not divisible by window " + std::to_string(pw));
    const std::size_t Ho = H / ph, Wo = W / pw;
    PoolResult<T> r{BasicTensor<T>({B, C, Ho, Wo}), std::vector<std::size_t>(B * C * Ho * Wo)};
    const T* in = input.data().data();
    std::size_t k = 0;
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const std::size_t base = bc * H * W;
        for (std::size_t y = 0; y < Ho; ++y) {
            for (std::size_t x = 0; x < Wo; ++x, ++k) {
                std::size_t best = base + (y * ph) * W + x * pw;
                for (std::size_t i = 0; i < ph; ++i) {
                    for (std::size_t j = 0; j < pw; ++j) {
                        const std::size_t idx = base + (y * ph + i) * W + x * pw + j;
                        if (in[idx] > in[best]) best = idx;
                    }
                }
                r.output[k] = in[best];
                r.argmax[k] = best;
            }
        }
    }
    return r;
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& grad_out, std::span<const std::size_t> argmax,
                                  const Extents& input_shape) {
    if (argmax.size() != grad_out.size())
        throw ShapeError("maxpool2d_backward: " + std::to_string(argmax.size()) + " indices for " +
                         std::to_string(grad_out.size()) + " gradients");
    BasicTensor<T> g(input_shape);
    for (std::size_t k = 0; k < argmax.size(); ++k) g[argmax[k]] += grad_out[k];
    return g;
}

template <typename T>
BasicTensor<T> fc_forward(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
    detail::expect_rank("fc", "input", input.rank(), 2);
    detail::expect_rank("fc", "weight", weight.rank(), 2);
    const std::size_t B = input.dim(0), D = input.dim(1), U = weight.dim(0);
    detail::expect_dim("fc", "weight input width", weight.dim(1), D);
    detail::expect_dim("fc", "bias length", bias.size(), U);
    BasicTensor<T> out({B, U});
    for (std::size_t b = 0; b < B; ++b) {
        const T* x = input.data().data() + b * D;
        for (std::size_t u = 0; u < U; ++u) {
            const T* w = weight.data().data() + u * D;
            T acc = bias[u];
            for (std::size_t d = 0; d < D; ++d) acc += w[d] * x[d];
            out.at(b, u) = acc;
        }
    }
    return out;
}

template <typename T>
struct FcGrads {
    BasicTensor<T> input;
    BasicTensor<T> weight;
    BasicTensor<T> bias;
};

template <typename T>
FcGrads<T> fc_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& grad_out) {
    const std::size_t B = input.dim(0), D = input.dim(1), U = weight.dim(0);
    detail::expect_dim("fc_backward", "grad batch", grad_out.dim(0), B);
    detail::expect_dim("fc_backward", "grad width", grad_out.dim(1), U);
    FcGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(weight.shape()), BasicTensor<T>({U})};
    for (std::size_t b = 0; b < B; ++b) {
        const T* x = input.data().data() + b * D;
        T* gx = g.input.data().data() + b * D;
        for (std::size_t u = 0; u < U; ++u) {
            const T go = grad_out.at(b, u);
            g.bias[u] += go;
            const T* w = weight.data().data() + u * D;
            T* gw = g.weight.data().data() + u * D;
            for (std::size_t d = 0; d < D; ++d) {
                gw[d] += go * x[d];
                gx[d] += go * w[d];
            }
        }
    }
    return g;
}

template <typename T>
BasicTensor<T> relu(BasicTensor<T> x) {
    for (auto& v : x.data()) v = v > T{0} ? v : T{0};
    return x;
}

/// Gradient of relu given its pre-activation input. The derivative at 0 is taken as 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& pre_activation, BasicTensor<T> grad_out) {
    if (pre_activation.size() != grad_out.size()) throw ShapeError("relu_backward: size mismatch");
    for (std::size_t i = 0; i < grad_out.size(); ++i)
        if (!(pre_activation[i] > T{0})) grad_out[i] = T{0};
    return grad_out;
}

/// Row-wise softmax over a [B,U] tensor, stabilized by subtracting the row max.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
    detail::expect_rank("softmax", "input", logits.rank(), 2);
    const std::size_t B = logits.dim(0), U = logits.dim(1);
    BasicTensor<T> p(logits.shape());
    for (std::size_t b = 0; b < B; ++b) {
        T m = logits.at(b, 0);
        for (std::size_t u = 1; u < U; ++u) m = std::max(m, logits.at(b, u));
        T sum = 0;
        for (std::size_t u = 0; u < U; ++u) {
            const T e = std::exp(logits.at(b, u) - m);
            p.at(b, u) = e;
            sum += e;
        }
        for (std::size_t u = 0; u < U; ++u) p.at(b, u) /= sum;
    }
    return p;
}

template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& probs, const BasicTensor<T>& grad_out) {
    const std::size_t B = probs.dim(0), U = probs.dim(1);
    BasicTensor<T> g(probs.shape());
    for (std::size_t b = 0; b < B; ++b) {
        T dot = 0;
        for (std::size_t u = 0; u < U; ++u) dot += probs.at(b, u) * grad_out.at(b, u);
        for (std::size_t u = 0; u < U; ++u) g.at(b, u) = probs.at(b, u) * (grad_out.at(b, u) - dot);
    }
    return g;
}

namespace detail {
template <typename T>
constexpr T prob_floor() {
    return std::numeric_limits<T>::min();
}

inline void check_labels(std::span<const std::int32_t> labels, std::size_t B, std::size_t U) {
    if (labels.size() != B)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(B));
    for (auto l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= U)
            throw UsageError("cross_entropy: label " + std::to_string(l) + " outside [0," + std::to_string(U) + ")");
}
}  // namespace detail

/// Mean negative log-likelihood of the labelled class.
template <typename T>
T cross_entropy(const BasicTensor<T>& probs, std::span<const std::int32_t> labels) {
    const std::size_t B = probs.dim(0), U = probs.dim(1);
    detail::check_labels(labels, B, U);
    T loss = 0;
    for (std::size_t b = 0; b < B; ++b)
        loss -= std::log(std::max(probs.at(b, static_cast<std::size_t>(labels[b])), detail::prob_floor<T>()));
    return B ? loss / static_cast<T>(B) : T{0};
}

template <typename T>
BasicTensor<T> cross_entropy_backward(const BasicTensor<T>& probs, std::span<const std::int32_t> labels) {
    const std::size_t B = probs.dim(0), U = probs.dim(1);
    detail::check_labels(labels, B, U);
    BasicTensor<T> g(probs.shape());
    for (std::size_t b = 0; b < B; ++b) {
        const auto l = static_cast<std::size_t>(labels[b]);
        g.at(b, l) = T{-1} / (static_cast<T>(B) * std::max(probs.at(b, l), detail::prob_floor<T>()));
    }
    return g;
}

/// Gradient of mean cross-entropy with respect to the logits feeding a softmax: (p - onehot) / B.
template <typename T>
BasicTensor<T> softmax_cross_entropy_backward(const BasicTensor<T>& probs, std::span<const std::int32_t> labels) {
    const std::size_t B = probs.dim(0), U = probs.dim(1);
    detail::check_labels(labels, B, U);
    BasicTensor<T> g = probs;
    for (std::size_t b = 0; b < B; ++b) g.at(b, static_cast<std::size_t>(labels[b])) -= T{1};
    for (auto& v : g.data()) v /= static_cast<T>(B);
    return g;
}

template <typename T>
void sgd_step(std::span<T> params, std::span<const T> grads, T lr) {
    if (params.size() != grads.size())
        throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameters, " + std::to_string(grads.size()) +
                         " gradients");
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

}  // namespace dscore
