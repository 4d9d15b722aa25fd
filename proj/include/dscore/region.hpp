#pragma once

#include <algorithm>
#include <vector>

#include "dscore/dataset.hpp"
#include "dscore/model.hpp"
#include "dscore/parallel.hpp"
#include "dscore/region_grid.hpp"
#include "dscore/train.hpp"

namespace dscore {

/// Deletion masks for region `region` (1-based) in every convolution layer, each derived
/// from that layer's own output map.
template <typename T>
RegionMaskSet build_masks(const BasicModel<T>& model, std::size_t n, std::size_t region) {
    const auto convs = model.conv_layers();
    if (convs.empty()) throw UsageError("model has no convolution layer to mask");
    if (n < 1 || region < 1 || region > n * n)
        throw UsageError("region index " + std::to_string(region) + " outside 1.." + std::to_string(n * n));
    RegionMaskSet set{n, region, {}};
    for (std::size_t layer : convs) {
        const Shape3 s = model.layer_shapes()[layer];
        set.layers.push_back(region_mask(layer, s.height, s.width, n, region));
    }
    return set;
}

struct FeatureDistribution {
    std::size_t n = 1;
    double baseline = 0;               // accuracy of the unmodified model
    std::vector<double> variant;       // accuracy with region i deleted, i = 1..n^2
    std::vector<double> weights;       // normalized, non-negative, sums to 1
    bool uniform_fallback = false;     // set when no variant is worse than the baseline
};

/// Normalized accuracy drops: max(fb - fi, 0) / sum_j max(fb - fj, 0).
inline FeatureDistribution normalize_feature(std::size_t n, double baseline, std::vector<double> variant) {
    if (variant.size() != n * n)
        throw ShapeError("expected " + std::to_string(n * n) + " variant accuracies, got " + std::to_string(variant.size()));
    FeatureDistribution fd{n, baseline, std::move(variant), std::vector<double>(n * n, 0.0), false};
    double total = 0;
    for (std::size_t i = 0; i < fd.variant.size(); ++i) {
        fd.weights[i] = std::max(baseline - fd.variant[i], 0.0);
        total += fd.weights[i];
    }
    if (total > 0) {
        for (auto& w : fd.weights) w /= total;
    } else {
        std::fill(fd.weights.begin(), fd.weights.end(), 1.0 / static_cast<double>(n * n));
        fd.uniform_fallback = true;
    }
    return fd;
}

/// Evaluates the n^2 region-deletion variants on the test set.
inline FeatureDistribution feature_distribution(const Model& model, const Dataset& test, std::size_t n,
                                                std::size_t threads = 1) {
    if (test.size() == 0) throw UsageError("feature distribution needs a non-empty test set");
    const double baseline = evaluate(model, test, nullptr, threads);
    std::vector<double> variant(n * n);
    std::vector<RegionMaskSet> masks;
    for (std::size_t i = 1; i <= n * n; ++i) masks.push_back(build_masks(model, n, i));
    // Parallelism goes across variants; each variant evaluation runs single-threaded.
    parallel_for(n * n, threads, [&](std::size_t k) { variant[k] = evaluate(model, test, &masks[k], 1); });
    return normalize_feature(n, baseline, std::move(variant));
}

}  // namespace dscore
