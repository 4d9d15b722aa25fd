#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <utility>

#include "dscore/errors.hpp"
#include "dscore/scoring.hpp"
#include "dscore/train.hpp"
#include "dscore/transform.hpp"

namespace dscore {

/// Score-guided pad-and-resize policy. Height and width are handled independently.
struct AugmentPlan {
    double p = 0;                 // execution probability, v_robust / g(n) clamped to [0,1]
    std::size_t height = 0;       // original size
    std::size_t width = 0;
    std::size_t padded_height = 0;  // round((1+p) * height)
    std::size_t padded_width = 0;
};

inline AugmentPlan plan_for_probability(double p, std::size_t height, std::size_t width) {
    if (!std::isfinite(p)) throw NumericError("augmentation probability is not finite");
    p = std::clamp(p, 0.0, 1.0);
    auto grow = [&](std::size_t d) { return static_cast<std::size_t>(std::llround((1.0 + p) * static_cast<double>(d))); };
    return {p, height, width, grow(height), grow(width)};
}

inline AugmentPlan make_plan(double v_robust, std::size_t n, std::size_t classes, std::size_t height, std::size_t width) {
    if (!(v_robust >= 0)) throw UsageError("robustness score must be non-negative");
    return plan_for_probability(v_robust / g_bound(n, classes), height, width);
}

/// Splits round(p * extent) padding pixels into (before, after) with `before` uniform over
/// the integers 0..total.
inline std::pair<std::size_t, std::size_t> sample_pads(std::mt19937_64& rng, double p, std::size_t extent) {
    const auto total = static_cast<std::size_t>(std::llround(std::clamp(p, 0.0, 1.0) * static_cast<double>(extent)));
    std::uniform_int_distribution<std::size_t> dist(0, total);
    const std::size_t before = dist(rng);
    return {before, total - before};
}

/// With probability p, pads by freshly sampled amounts (horizontal then vertical) and
/// resizes back; otherwise returns the image unchanged.
inline Tensor apply_plan(const AugmentPlan& plan, const Tensor& img, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (!(u(rng) < plan.p)) return img;
    const auto [left, right] = sample_pads(rng, plan.p, img.dim(2));
    const auto [top, bottom] = sample_pads(rng, plan.p, img.dim(1));
    return pad_and_resize(img, {top, bottom, left, right});
}

inline AugmentHook augment_hook(AugmentPlan plan) {
    return [plan](const Tensor& img, std::mt19937_64& rng) { return apply_plan(plan, img, rng); };
}

// ---------------------------------------------------------------------------
// Baseline augmentations used for comparison runs.

enum class BaselineMethod { rhf, rvf, rr, rhv, rpr };

inline BaselineMethod parse_baseline(std::string_view name) {
    if (name == "rhf") return BaselineMethod::rhf;
    if (name == "rvf") return BaselineMethod::rvf;
    if (name == "rr") return BaselineMethod::rr;
    if (name == "rhv") return BaselineMethod::rhv;
    if (name == "rpr") return BaselineMethod::rpr;
    throw UsageError("unknown augmentation method '" + std::string(name) + "'");
}

inline const char* baseline_name(BaselineMethod m) {
    switch (m) {
    case BaselineMethod::rhf: return "rhf";
    case BaselineMethod::rvf: return "rvf";
    case BaselineMethod::rr: return "rr";
    case BaselineMethod::rhv: return "rhv";
    case BaselineMethod::rpr: return "rpr";
    }
    return "?";
}

inline constexpr double flip_probability = 0.5;
inline constexpr double rpr_probability = 0.5;

inline Tensor flip_horizontal(const Tensor& img) {
    const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor out(img.shape());
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) out[(c * H + y) * W + x] = img[(c * H + y) * W + (W - 1 - x)];
    return out;
}

inline Tensor flip_vertical(const Tensor& img) {
    const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    Tensor out(img.shape());
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) out[(c * H + y) * W + x] = img[(c * H + (H - 1 - y)) * W + x];
    return out;
}

/// Rotation about the image center by `degrees` (counter-clockwise on screen), bilinear
/// sampling, zero fill outside the source.
inline Tensor rotate(const Tensor& img, double degrees) {
    const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    const double th = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(th), sn = std::sin(th);
    const double cy = (static_cast<double>(H) - 1) / 2, cx = (static_cast<double>(W) - 1) / 2;
    auto snap = [](double v) {
        const double r = std::round(v);
        return std::abs(v - r) < 1e-9 ? r : v;
    };
    Tensor out(img.shape());
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
            const double sx = snap(cx + cs * dx + sn * dy);
            const double sy = snap(cy - sn * dx + cs * dy);
            const double fx = std::floor(sx), fy = std::floor(sy);
            const double wx = sx - fx, wy = sy - fy;
            for (std::size_t c = 0; c < C; ++c) {
                auto px = [&](double yy, double xx) -> double {
                    if (yy < 0 || xx < 0 || yy > static_cast<double>(H - 1) || xx > static_cast<double>(W - 1)) return 0.0;
                    return img[(c * H + static_cast<std::size_t>(yy)) * W + static_cast<std::size_t>(xx)];
                };
                double v = px(fy, fx) * (1 - wx) * (1 - wy);
                if (wx > 0) v += px(fy, fx + 1) * wx * (1 - wy);
                if (wy > 0) v += px(fy + 1, fx) * (1 - wx) * wy;
                if (wx > 0 && wy > 0) v += px(fy + 1, fx + 1) * wx * wy;
                out[(c * H + y) * W + x] = static_cast<float>(v);
            }
        }
    }
    return out;
}

/// Applies one baseline method. `force` skips the execution coin flips.
inline Tensor apply_baseline(BaselineMethod m, const Tensor& img, std::mt19937_64& rng, bool force = false) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto coin = [&](double prob) { return force || u(rng) < prob; };
    switch (m) {
    case BaselineMethod::rhf: return coin(flip_probability) ? flip_horizontal(img) : img;
    case BaselineMethod::rvf: return coin(flip_probability) ? flip_vertical(img) : img;
    case BaselineMethod::rhv: {
        Tensor out = coin(flip_probability) ? flip_horizontal(img) : img;
        return coin(flip_probability) ? flip_vertical(out) : out;
    }
    case BaselineMethod::rr: {
        std::uniform_real_distribution<double> angle(0.0, 180.0);
        return rotate(img, angle(rng));
    }
    case BaselineMethod::rpr: {
        if (!coin(rpr_probability)) return img;
        const double fraction = u(rng);
        const auto [left, right] = sample_pads(rng, fraction, img.dim(2));
        const auto [top, bottom] = sample_pads(rng, fraction, img.dim(1));
        return pad_and_resize(img, {top, bottom, left, right});
    }
    }
    return img;
}

inline AugmentHook baseline_hook(BaselineMethod m) {
    return [m](const Tensor& img, std::mt19937_64& rng) { return apply_baseline(m, img, rng); };
}

inline AugmentHook baseline_hook(std::string_view name) { return baseline_hook(parse_baseline(name)); }

}  // namespace dscore
