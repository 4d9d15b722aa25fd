#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dscore/errors.hpp"

namespace dscore {

struct ScoreInputs {
    std::size_t n = 1;
    std::size_t classes = 10;
    double original_accuracy = 0;            // accuracy on the untransformed test set
    std::vector<double> transform_accuracy;  // raw a_i
    std::vector<double> feature;             // normalized feature distribution
    std::vector<double> attention;           // normalized attention distribution

    void validate() const {
        const std::size_t cells = n * n;
        if (n < 1) throw UsageError("grid order n must be at least 1");
        if (transform_accuracy.size() != cells || feature.size() != cells || attention.size() != cells)
            throw ShapeError("score inputs need " + std::to_string(cells) + " entries per array (got " +
                             std::to_string(transform_accuracy.size()) + ", " + std::to_string(feature.size()) + ", " +
                             std::to_string(attention.size()) + ")");
    }
};

struct ScoreResult {
    double v_fitness = 0;
    double v_robust = 0;
    double g_n = 0;
    double d_score = 0;
};

namespace detail {
inline double l2_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

inline double l2_from(std::span<const double> a, double c) {
    double s = 0;
    for (double v : a) s += (v - c) * (v - c);
    return std::sqrt(s);
}
}  // namespace detail

/// Original accuracy minus the mismatch between feature and attention distributions, scaled by 1/n^2.
inline double fitness(const ScoreInputs& in) {
    in.validate();
    const double cells = static_cast<double>(in.n * in.n);
    return in.original_accuracy - detail::l2_distance(in.feature, in.attention) / cells;
}

/// Concentration of both distributions plus spread of raw transformed accuracies around the
/// original accuracy, scaled by 1/n^2. Lower is better.
inline double robustness(const ScoreInputs& in) {
    in.validate();
    const double cells = static_cast<double>(in.n * in.n);
    const double avg = 1.0 / cells;
    return (detail::l2_from(in.feature, avg) + detail::l2_from(in.attention, avg) +
            detail::l2_from(in.transform_accuracy, in.original_accuracy)) /
           cells;
}

/// Upper bound on robustness(): 2 sqrt(n^2-1)/n^3 + (1/n)(c-1)/c.
inline double g_bound(std::size_t n, std::size_t classes) {
    if (n < 1) throw UsageError("grid order n must be at least 1");
    if (classes < 2) throw UsageError("class count must be at least 2");
    const double nn = static_cast<double>(n), c = static_cast<double>(classes);
    return 2.0 * std::sqrt(nn * nn - 1.0) / (nn * nn * nn) + (c - 1.0) / (nn * c);
}

inline double d_score(double v_fitness, double v_robust) { return v_fitness - v_robust; }

inline ScoreResult score(const ScoreInputs& in) {
    ScoreResult r;
    r.v_fitness = fitness(in);
    r.v_robust = robustness(in);
    r.g_n = g_bound(in.n, in.classes);
    r.d_score = d_score(r.v_fitness, r.v_robust);
    return r;
}

}  // namespace dscore
