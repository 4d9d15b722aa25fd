#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "dscore/dataset.hpp"
#include "dscore/errors.hpp"
#include "dscore/model.hpp"
#include "dscore/parallel.hpp"
#include "dscore/region_grid.hpp"

namespace dscore {

/// Random stream for one training image, fixed by (seed, epoch, sample index) so that
/// augmentation does not depend on batch scheduling.
inline std::mt19937_64 image_rng(std::uint64_t seed, std::size_t epoch, std::size_t sample) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(sample),
                      static_cast<std::uint32_t>(sample >> 32), 0x61756775u};
    return std::mt19937_64(seq);
}

/// Replaces one [C,H,W] training image; must keep its shape.
using AugmentHook = std::function<Tensor(const Tensor& image, std::mt19937_64& rng)>;

struct TrainOptions {
    std::size_t epochs = 10;
    float lr = 0.05f;
    std::size_t batch = 32;
    std::uint64_t seed = 0;
    AugmentHook augment;
};

struct EpochStats {
    std::size_t epoch = 0;
    double loss = 0;
    double accuracy = 0;
};

inline std::size_t argmax_row(const Tensor& probs, std::size_t row) {
    const std::size_t U = probs.dim(1);
    std::size_t best = 0;
    for (std::size_t u = 1; u < U; ++u)
        if (probs.at(row, u) > probs.at(row, best)) best = u;
    return best;
}

/// Plain mini-batch SGD on mean cross-entropy. Batch order is reshuffled every epoch from
/// the seed; the last partial batch is kept.
inline std::vector<EpochStats> train(Model& model, const Dataset& data, const TrainOptions& opt,
                                     const std::function<void(const EpochStats&)>& on_epoch = {}) {
    if (data.size() == 0) throw UsageError("cannot train on an empty dataset");
    if (!(opt.lr >= 0.0f) || !std::isfinite(opt.lr)) throw UsageError("learning rate must be finite and non-negative");
    if (opt.batch == 0) throw UsageError("batch size must be positive");
    data.validate(model.classes());
    if (data.image_shape() != model.input_shape()) throw ShapeError("dataset image shape does not match model input");

    const auto s = data.images.shape4();
    const std::size_t stride = s.channels * s.height * s.width;
    std::vector<std::size_t> order(data.size());
    std::vector<EpochStats> history;
    ForwardTrace<float> trace;
    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                          static_cast<std::uint32_t>(epoch), 0x73687566u};
        std::mt19937_64 shuffle_rng(seq);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0;
        std::size_t correct = 0;
        for (std::size_t first = 0; first < order.size(); first += opt.batch) {
            const std::size_t count = std::min(opt.batch, order.size() - first);
            const std::span<const std::size_t> idx(order.data() + first, count);
            Tensor x = data.gather(idx);
            std::vector<std::int32_t> y(count);
            for (std::size_t k = 0; k < count; ++k) y[k] = data.labels[idx[k]];
            if (opt.augment) {
                for (std::size_t k = 0; k < count; ++k) {
                    auto rng = image_rng(opt.seed, epoch, idx[k]);
                    Tensor img({s.channels, s.height, s.width},
                               std::vector<float>(x.data().begin() + static_cast<std::ptrdiff_t>(k * stride),
                                                  x.data().begin() + static_cast<std::ptrdiff_t>((k + 1) * stride)));
                    Tensor out = opt.augment(img, rng);
                    if (out.size() != stride) throw ShapeError("augmentation changed the image shape");
                    std::copy(out.data().begin(), out.data().end(), x.data().begin() + static_cast<std::ptrdiff_t>(k * stride));
                }
            }
            const Tensor probs = model.forward_train(x, trace);
            loss_sum += static_cast<double>(cross_entropy(probs, std::span<const std::int32_t>(y))) * static_cast<double>(count);
            for (std::size_t k = 0; k < count; ++k)
                if (argmax_row(probs, k) == static_cast<std::size_t>(y[k])) ++correct;
            const auto grads = model.backward_logits(trace, softmax_cross_entropy_backward(probs, std::span<const std::int32_t>(y)));
            model.sgd_update(grads, opt.lr);
        }
        for (const auto& p : model.params()) {
            require_finite(p.weight, "training");
            require_finite(p.bias, "training");
        }
        EpochStats st{epoch + 1, loss_sum / static_cast<double>(data.size()),
                      static_cast<double>(correct) / static_cast<double>(data.size())};
        history.push_back(st);
        if (on_epoch) on_epoch(st);
    }
    return history;
}

struct EvalResult {
    std::size_t correct = 0;
    std::size_t total = 0;
    double loss = 0;  // mean cross-entropy

    double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

inline constexpr std::size_t eval_chunk = 256;

/// Accuracy and loss over the whole dataset, optionally with a region deletion mask.
/// Chunks are spread over `threads` workers; per-chunk sums are combined in chunk order.
inline EvalResult evaluate_full(const Model& model, const Dataset& data, const RegionMaskSet* mask = nullptr,
                                std::size_t threads = 1) {
    if (data.size() == 0) throw UsageError("cannot evaluate on an empty dataset");
    if (data.image_shape() != model.input_shape()) throw ShapeError("dataset image shape does not match model input");
    const std::size_t chunks = (data.size() + eval_chunk - 1) / eval_chunk;
    std::vector<std::size_t> correct(chunks, 0);
    std::vector<double> loss(chunks, 0.0);
    parallel_for(chunks, threads, [&](std::size_t c) {
        const std::size_t first = c * eval_chunk;
        const std::size_t count = std::min(eval_chunk, data.size() - first);
        const Tensor probs = model.forward(data.images.slice(first, count), mask);
        const std::span<const std::int32_t> y(data.labels.data() + first, count);
        loss[c] = static_cast<double>(cross_entropy(probs, y)) * static_cast<double>(count);
        for (std::size_t k = 0; k < count; ++k)
            if (argmax_row(probs, k) == static_cast<std::size_t>(y[k])) ++correct[c];
    });
    EvalResult r{0, data.size(), 0.0};
    for (std::size_t c = 0; c < chunks; ++c) {
        r.correct += correct[c];
        r.loss += loss[c];
    }
    r.loss /= static_cast<double>(data.size());
    return r;
}

inline double evaluate(const Model& model, const Dataset& data, const RegionMaskSet* mask = nullptr,
                       std::size_t threads = 1) {
    return evaluate_full(model, data, mask, threads).accuracy();
}

}  // namespace dscore
