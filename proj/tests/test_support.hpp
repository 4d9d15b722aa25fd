#pragma once

// Independent oracles and random fixtures shared by the test suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dscore/dscore.hpp"

namespace dscore::testing {

template <typename T>
BasicTensor<T> random_tensor(Extents shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    BasicTensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> d(lo, hi);
    for (auto& v : t.data()) v = static_cast<T>(d(rng));
    return t;
}

/// Direct six-loop cross-correlation.
template <typename T>
BasicTensor<T> naive_conv(const BasicTensor<T>& in, const BasicTensor<T>& w, const BasicTensor<T>& b) {
    const std::size_t B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::size_t O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    BasicTensor<T> out({B, O, H - kh + 1, W - kw + 1});
    for (std::size_t n = 0; n < B; ++n)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t y = 0; y + kh <= H; ++y)
                for (std::size_t x = 0; x + kw <= W; ++x) {
                    double acc = b[o];
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t i = 0; i < kh; ++i)
                            for (std::size_t j = 0; j < kw; ++j) acc += double(in.at(n, c, y + i, x + j)) * double(w.at(o, c, i, j));
                    out.at(n, o, y, x) = static_cast<T>(acc);
                }
    return out;
}

/// Random tiny stack with every layer kind: conv, pool, flatten, relu FC and softmax FC.
inline std::vector<LayerSpec> random_tiny_layers(std::mt19937_64& rng, std::size_t& side) {
    std::uniform_int_distribution<std::size_t> ch(1, 3), k(2, 3), units(3, 6);
    const std::size_t k1 = k(rng), k2 = k(rng);
    // Choose the input side so that the pooled map after conv1 is even-sized.
    side = 2 * (k2 + 1) + k1 - 1;
    if ((side - k1 + 1) % 2) ++side;
    std::vector<LayerSpec> layers{LayerSpec::conv(ch(rng), k1, k1), LayerSpec::maxpool(2, 2), LayerSpec::conv(ch(rng), k2, k2),
                                  LayerSpec::flatten(), LayerSpec::dense(units(rng), Activation::relu),
                                  LayerSpec::dense(3, Activation::softmax)};
    return layers;
}

/// Smallest distance of any ReLU pre-activation from 0, or of a max-pool winner from
/// the runner-up when the winner is positive. Finite differences are only trustworthy
/// when this exceeds the perturbation's effect.
template <typename T>
double kink_margin(const BasicModel<T>& model, const BasicTensor<T>& x) {
    ForwardTrace<T> trace;
    model.forward_train(x, trace);
    double margin = 1e9;
    for (std::size_t k = 0; k < model.layers().size(); ++k) {
        const auto& l = model.layers()[k];
        if (l.kind == LayerKind::conv || (l.kind == LayerKind::dense && l.activation == Activation::relu))
            for (T v : trace.pre[k].data()) margin = std::min(margin, std::abs(double(v)));
        if (l.kind == LayerKind::maxpool) {
            const auto& in = trace.inputs[k];
            const auto s = in.shape4();
            for (std::size_t bc = 0; bc < s.batch * s.channels; ++bc)
                for (std::size_t y = 0; y < s.height; y += l.kh)
                    for (std::size_t x0 = 0; x0 < s.width; x0 += l.kw) {
                        std::vector<double> w;
                        for (std::size_t i = 0; i < l.kh; ++i)
                            for (std::size_t j = 0; j < l.kw; ++j) w.push_back(double(in[(bc * s.height + y + i) * s.width + x0 + j]));
                        std::sort(w.rbegin(), w.rend());
                        if (w[0] > 0) margin = std::min(margin, w[0] - w[1]);
                    }
        }
    }
    return margin;
}

template <typename T>
T model_loss(const BasicModel<T>& m, const BasicTensor<T>& x, const std::vector<std::int32_t>& y) {
    return cross_entropy(m.forward(x), std::span<const std::int32_t>(y));
}

struct GradCheck {
    double max_rel_error = 0;
    std::size_t checked = 0;
    std::string worst;
};

inline double rel_error(double a, double n) {
    const double den = std::max({std::abs(a), std::abs(n), 1e-7});
    return std::abs(a - n) / den;
}

/// Analytic gradients (through cross_entropy_backward and softmax_backward) against
/// central differences of the loss with step h, for every parameter.
inline GradCheck check_gradients(BasicModel<double>& m, const BasicTensor<double>& x, const std::vector<std::int32_t>& y,
                                 double h = 1e-3) {
    ForwardTrace<double> trace;
    const auto probs = m.forward_train(x, trace);
    const auto grads = m.backward(trace, cross_entropy_backward(probs, std::span<const std::int32_t>(y)));
    GradCheck gc;
    auto probe = [&](BasicTensor<double>& p, const BasicTensor<double>& g, const std::string& name) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double keep = p[i];
            p[i] = keep + h;
            const double up = model_loss(m, x, y);
            p[i] = keep - h;
            const double down = model_loss(m, x, y);
            p[i] = keep;
            const double e = rel_error(g[i], (up - down) / (2 * h));
            ++gc.checked;
            if (e > gc.max_rel_error) {
                gc.max_rel_error = e;
                gc.worst = name + "[" + std::to_string(i) + "]";
            }
        }
    };
    for (std::size_t k = 0; k < m.layers().size(); ++k) {
        if (!m.layers()[k].has_params()) continue;
        probe(m.params()[k].weight, grads[k].weight, "layer" + std::to_string(k) + ".weight");
        probe(m.params()[k].bias, grads[k].bias, "layer" + std::to_string(k) + ".bias");
    }
    return gc;
}

/// Draws a random tiny model and input batch whose kink margin is comfortably larger than h.
inline GradCheck random_gradient_check(std::uint64_t seed, double h = 1e-3) {
    std::mt19937_64 rng(seed);
    for (int attempt = 0; attempt < 2000; ++attempt) {
        std::size_t side = 0;
        auto layers = random_tiny_layers(rng, side);
        BasicModel<double> m(layers, {2, side, side});
        m.initialize(rng());
        for (auto& p : m.params())
            for (auto& v : p.bias.data()) v = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
        if (m.parameter_count() > 200) continue;
        const auto x = random_tensor<double>({2, 2, side, side}, rng, 0.0, 1.0);
        if (kink_margin(m, x) < 5 * h) continue;
        std::vector<std::int32_t> y{static_cast<std::int32_t>(rng() % 3), static_cast<std::int32_t>(rng() % 3)};
        return check_gradients(m, x, y, h);
    }
    return {1e9, 0, "no kink-free draw"};
}

/// Forward pass that runs each layer kernel directly and zeroes the masked conv
/// activations afterwards; independent of the model's own masking path.
inline Tensor zeroing_oracle_logits(const Model& m, const Tensor& x, const RegionMaskSet& masks) {
    Tensor h = x;
    for (std::size_t k = 0; k < m.layers().size(); ++k) {
        const auto& l = m.layers()[k];
        switch (l.kind) {
        case LayerKind::conv: {
            h = conv2d_forward(h, m.params()[k].weight, m.params()[k].bias);
            if (const auto* mask = masks.for_layer(k)) {
                const auto s = h.shape4();
                for (std::size_t b = 0; b < s.batch; ++b)
                    for (std::size_t c = 0; c < s.channels; ++c)
                        for (std::size_t y = 0; y < s.height; ++y)
                            for (std::size_t xx = 0; xx < s.width; ++xx)
                                if (mask->masked(y, xx)) h.at(b, c, y, xx) = 0.0f;
            }
            h = relu(std::move(h));
            break;
        }
        case LayerKind::maxpool: h = maxpool2d_forward(h, l.kh, l.kw).output; break;
        case LayerKind::flatten: {
            const std::size_t b = h.dim(0);
            h = std::move(h).reshaped({b, h.size() / b});
            break;
        }
        case LayerKind::dense:
            h = fc_forward(h, m.params()[k].weight, m.params()[k].bias);
            if (l.activation == Activation::relu) h = relu(std::move(h));
            break;
        }
    }
    return h;
}

/// Random small conv model with 1..2 conv layers on a random input size.
inline Model random_conv_model(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> ch(1, 4), k(2, 4), units(4, 12);
    const std::size_t k1 = k(rng), k2 = k(rng);
    const std::size_t side = 2 * (k2 + 2) + k1 - 1 + ((k1 % 2) == 0 ? 1 : 0);
    std::vector<LayerSpec> layers{LayerSpec::conv(ch(rng), k1, k1)};
    const std::size_t after1 = side - k1 + 1;
    if (after1 % 2 == 0) layers.push_back(LayerSpec::maxpool(2, 2));
    layers.push_back(LayerSpec::conv(ch(rng), k2, k2));
    layers.push_back(LayerSpec::flatten());
    layers.push_back(LayerSpec::dense(units(rng), Activation::relu));
    layers.push_back(LayerSpec::dense(4, Activation::softmax));
    Model m(layers, {1, side, side});
    m.initialize(rng());
    for (auto& p : m.params())
        for (auto& v : p.bias.data()) v = std::uniform_real_distribution<float>(-0.2f, 0.2f)(rng);
    return m;
}

/// Two-class set: class 0 has ink in the left half, class 1 in the right half.
inline Dataset toy_separable(std::size_t count, std::uint64_t seed, std::size_t side = 8) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> ink(0.5f, 1.0f), noise(0.0f, 0.1f);
    Dataset d{Tensor({count, 1, side, side}), std::vector<std::int32_t>(count), "train"};
    for (std::size_t n = 0; n < count; ++n) {
        const int label = static_cast<int>(n % 2);
        d.labels[n] = label;
        for (std::size_t y = 0; y < side; ++y)
            for (std::size_t x = 0; x < side; ++x) {
                const bool on = (label == 0) == (x < side / 2);
                d.images.at(n, 0, y, x) = on ? ink(rng) : noise(rng);
            }
    }
    return d;
}

inline Model toy_model(std::uint64_t seed, std::size_t side = 8) {
    return build_model("Conv(2,3,3)+ReLU();MaxPooling(2,2);Flatten();FC(8)+ReLU();FC(2)+Softmax()", {1, side, side}, seed);
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("dscore_" + tag + "_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::filesystem::path operator/(const std::string& s) const { return path / s; }
};

}  // namespace dscore::testing
