#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "dscore/augment.hpp"
#include "dscore/dataset.hpp"
#include "dscore/model.hpp"
#include "dscore/report.hpp"
#include "dscore/train.hpp"

namespace dscore {

struct RunConfig {
    std::string model = "tiny";  // preset name or layer stack
    std::size_t epochs = 8;
    std::size_t batch = 32;
    float lr = 0.05f;
    std::uint64_t seed = 0;
    std::size_t n = 3;
    double t = 5.0;
    std::size_t threads = 1;
};

struct RunOutcome {
    std::string label;
    double p = 0;
    Model model;
    std::vector<EpochStats> history;
    DiagnosisReport report;
};

/// Trains a fresh model (or continues from `start` when given) and diagnoses it on `test`.
inline RunOutcome train_and_diagnose(const RunConfig& cfg, const Dataset& train_set, const Dataset& test,
                                     AugmentHook hook, std::string label, const Model* start = nullptr) {
    RunOutcome out;
    out.label = std::move(label);
    out.model = start ? *start : build_model(cfg.model, train_set.image_shape(), cfg.seed, train_set.classes());
    TrainOptions opt;
    opt.epochs = cfg.epochs;
    opt.batch = cfg.batch;
    opt.lr = cfg.lr;
    opt.seed = cfg.seed;
    opt.augment = std::move(hook);
    out.history = train(out.model, train_set, opt);
    out.report = diagnose(out.model, test, cfg.n, cfg.t, cfg.threads);
    return out;
}

/// Score-guided augmentation at execution probability p; p == 0 trains without a hook.
inline RunOutcome guided_run(const RunConfig& cfg, const Dataset& train_set, const Dataset& test, double p,
                             const Model* start = nullptr) {
    const auto s = train_set.image_shape();
    const auto plan = plan_for_probability(p, s.height, s.width);
    AugmentHook hook = plan.p > 0 ? augment_hook(plan) : AugmentHook{};
    RunOutcome r = train_and_diagnose(cfg, train_set, test, std::move(hook), "p=" + detail::num(plan.p), start);
    r.p = plan.p;
    return r;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace dscore
