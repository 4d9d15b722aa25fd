#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dscore/dataset.hpp"
#include "dscore/errors.hpp"
#include "dscore/model.hpp"
#include "dscore/parallel.hpp"
#include "dscore/tensor.hpp"
#include "dscore/train.hpp"

namespace dscore {

struct Pads {
    std::size_t top = 0, bottom = 0, left = 0, right = 0;
    friend bool operator==(const Pads&, const Pads&) = default;
};

/// Zero-pads a [C,H,W] image.
inline Tensor pad_image(const Tensor& img, const Pads& p) {
    if (img.rank() != 3) throw ShapeError("pad_image expects a [C,H,W] image");
    const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    const std::size_t Hp = H + p.top + p.bottom, Wp = W + p.left + p.right;
    Tensor out({C, Hp, Wp});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            std::copy_n(img.data().begin() + static_cast<std::ptrdiff_t>((c * H + y) * W), W,
                        out.data().begin() + static_cast<std::ptrdiff_t>((c * Hp + y + p.top) * Wp + p.left));
    return out;
}

/// Bilinear resampling of a [C,H,W] image using pixel-center alignment; edge samples clamp.
inline Tensor resize_bilinear(const Tensor& img, std::size_t out_h, std::size_t out_w) {
    if (img.rank() != 3) throw ShapeError("resize_bilinear expects a [C,H,W] image");
    const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    if (out_h == 0 || out_w == 0 || H == 0 || W == 0) throw ShapeError("resize_bilinear: empty extent");
    if (out_h == H && out_w == W) return img;
    const double sy = static_cast<double>(H) / static_cast<double>(out_h);
    const double sx = static_cast<double>(W) / static_cast<double>(out_w);
    struct Tap {
        std::size_t i0, i1;
        double w1;
    };
    auto taps = [](std::size_t out, double scale, std::size_t in) {
        std::vector<Tap> t(out);
        for (std::size_t k = 0; k < out; ++k) {
            double u = (static_cast<double>(k) + 0.5) * scale - 0.5;
            u = std::clamp(u, 0.0, static_cast<double>(in - 1));
            const auto i0 = static_cast<std::size_t>(std::floor(u));
            const std::size_t i1 = std::min(i0 + 1, in - 1);
            t[k] = {i0, i1, u - static_cast<double>(i0)};
        }
        return t;
    };
    const auto ty = taps(out_h, sy, H), tx = taps(out_w, sx, W);
    Tensor out({C, out_h, out_w});
    for (std::size_t c = 0; c < C; ++c) {
        const float* src = img.data().data() + c * H * W;
        for (std::size_t y = 0; y < out_h; ++y) {
            const auto& a = ty[y];
            for (std::size_t x = 0; x < out_w; ++x) {
                const auto& b = tx[x];
                const double top = src[a.i0 * W + b.i0] * (1 - b.w1) + src[a.i0 * W + b.i1] * b.w1;
                const double bot = src[a.i1 * W + b.i0] * (1 - b.w1) + src[a.i1 * W + b.i1] * b.w1;
                out[(c * out_h + y) * out_w + x] = static_cast<float>(top * (1 - a.w1) + bot * a.w1);
            }
        }
    }
    return out;
}

/// Target region (row, col), both 1-based, on an n x n grid with shrink control t >= 1.
struct TransformSpec {
    std::size_t n = 3;
    double t = 5.0;
    std::size_t row = 1;
    std::size_t col = 1;

    static TransformSpec for_region(std::size_t n, double t, std::size_t index) {
        if (n < 1 || index < 1 || index > n * n)
            throw UsageError("region index " + std::to_string(index) + " outside 1.." + std::to_string(n * n));
        return {n, t, (index - 1) / n + 1, (index - 1) % n + 1};
    }
    std::size_t index() const { return (row - 1) * n + col; }

    void validate() const {
        if (n < 1) throw UsageError("grid order n must be at least 1");
        if (!(t >= 1.0) || !std::isfinite(t)) throw UsageError("shrink parameter t must be finite and >= 1");
        if (row < 1 || row > n || col < 1 || col > n) throw UsageError("target region outside the grid");
    }
};

/// Pixels added on each side to push an h x w image toward region (r, c):
/// top=(r-1)h/t, bottom=(n-r)h/t, left=(c-1)w/t, right=(n-c)w/t, each rounded to nearest.
inline Pads pad_amounts(std::size_t h, std::size_t w, const TransformSpec& spec) {
    spec.validate();
    auto amount = [&](std::size_t steps, std::size_t extent) {
        return static_cast<std::size_t>(std::llround(static_cast<double>(steps) * static_cast<double>(extent) / spec.t));
    };
    return {amount(spec.row - 1, h), amount(spec.n - spec.row, h), amount(spec.col - 1, w), amount(spec.n - spec.col, w)};
}

/// Pads toward the target region, then resizes back to the original size.
inline Tensor pad_and_resize(const Tensor& img, const Pads& pads) {
    const std::size_t H = img.dim(1), W = img.dim(2);
    if (pads == Pads{}) return img;
    return resize_bilinear(pad_image(img, pads), H, W);
}

inline Tensor transform_image(const Tensor& img, const TransformSpec& spec) {
    if (img.rank() != 3) throw ShapeError("transform_image expects a [C,H,W] image");
    return pad_and_resize(img, pad_amounts(img.dim(1), img.dim(2), spec));
}

inline Dataset transform_dataset(const Dataset& data, const TransformSpec& spec) {
    const auto s = data.images.shape4();
    const std::size_t stride = s.channels * s.height * s.width;
    const Pads pads = pad_amounts(s.height, s.width, spec);
    Dataset out{Tensor(data.images.shape()), data.labels, data.split};
    for (std::size_t i = 0; i < s.batch; ++i) {
        Tensor img({s.channels, s.height, s.width},
                   std::vector<float>(data.images.data().begin() + static_cast<std::ptrdiff_t>(i * stride),
                                      data.images.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * stride)));
        const Tensor t = pad_and_resize(img, pads);
        std::copy(t.data().begin(), t.data().end(), out.images.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    return out;
}

struct AttentionDistribution {
    std::size_t n = 1;
    double original = 0;             // accuracy on the untransformed test set
    std::vector<double> accuracy;    // accuracy on transformed set i, i = 1..n^2
    std::vector<double> weights;     // accuracy / sum(accuracy)
};

inline AttentionDistribution normalize_attention(std::size_t n, double original, std::vector<double> accuracy) {
    if (accuracy.size() != n * n)
        throw ShapeError("expected " + std::to_string(n * n) + " transformed-set accuracies, got " +
                         std::to_string(accuracy.size()));
    double total = 0;
    for (double a : accuracy) total += a;
    if (!(total > 0)) throw NumericError("model at chance-zero on all transforms: attention cannot be normalized");
    AttentionDistribution ad{n, original, std::move(accuracy), {}};
    for (double a : ad.accuracy) ad.weights.push_back(a / total);
    return ad;
}

/// Evaluates the model on the n^2 region-targeted transformed test sets.
inline AttentionDistribution attention_distribution(const Model& model, const Dataset& test, std::size_t n, double t,
                                                    std::size_t threads = 1) {
    if (test.size() == 0) throw UsageError("attention distribution needs a non-empty test set");
    const double original = evaluate(model, test, nullptr, threads);
    std::vector<double> acc(n * n);
    parallel_for(n * n, threads, [&](std::size_t k) {
        const auto spec = TransformSpec::for_region(n, t, k + 1);
        acc[k] = evaluate(model, transform_dataset(test, spec), nullptr, 1);
    });
    return normalize_attention(n, original, std::move(acc));
}

}  // namespace dscore
