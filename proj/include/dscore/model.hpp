#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dscore/errors.hpp"
#include "dscore/kernels.hpp"
#include "dscore/region_grid.hpp"
#include "dscore/tensor.hpp"

namespace dscore {

enum class LayerKind { conv, maxpool, flatten, dense };
enum class Activation { none, relu, softmax };

/// One entry of a layer stack, written as e.g. "Conv(6,5,5)+ReLU()" or "MaxPooling(2,2)".
struct LayerSpec {
    LayerKind kind = LayerKind::flatten;
    std::size_t units = 0;  // conv output channels or dense width
    std::size_t kh = 0;     // kernel or pooling window
    std::size_t kw = 0;
    Activation activation = Activation::none;

    static LayerSpec conv(std::size_t out, std::size_t kh, std::size_t kw) {
        return {LayerKind::conv, out, kh, kw, Activation::relu};
    }
    static LayerSpec maxpool(std::size_t ph, std::size_t pw) { return {LayerKind::maxpool, 0, ph, pw, Activation::none}; }
    static LayerSpec flatten() { return {LayerKind::flatten, 0, 0, 0, Activation::none}; }
    static LayerSpec dense(std::size_t units, Activation act) { return {LayerKind::dense, units, 0, 0, act}; }

    bool has_params() const { return kind == LayerKind::conv || kind == LayerKind::dense; }

    std::string str() const {
        std::ostringstream os;
        switch (kind) {
        case LayerKind::conv: os << "Conv(" << units << ',' << kh << ',' << kw << ")+ReLU()"; break;
        case LayerKind::maxpool: os << "MaxPooling(" << kh << ',' << kw << ')'; break;
        case LayerKind::flatten: os << "Flatten()"; break;
        case LayerKind::dense:
            os << "FC(" << units << ')' << (activation == Activation::softmax ? "+Softmax()" : "+ReLU()");
            break;
        }
        return os.str();
    }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

namespace detail {

inline std::string lowercase(std::string_view s) {
    std::string out;
    for (char ch : s)
        if (!std::isspace(static_cast<unsigned char>(ch))) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    return out;
}

inline std::vector<std::size_t> parse_args(const std::string& token, std::size_t open) {
    const auto close = token.find(')', open);
    if (close == std::string::npos) throw UsageError("unbalanced parentheses in layer '" + token + "'");
    std::vector<std::size_t> args;
    std::stringstream ss(token.substr(open + 1, close - open - 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            const long v = std::stol(item, &used);
            if (used != item.size() || v <= 0) throw std::invalid_argument(item);
            args.push_back(static_cast<std::size_t>(v));
        } catch (const std::logic_error&) {
            throw UsageError("bad layer argument '" + item + "' in '" + token + "'");
        }
    }
    return args;
}

inline LayerSpec parse_layer(const std::string& raw) {
    const std::string t = lowercase(raw);
    const auto open = t.find('(');
    const std::string head = t.substr(0, open);
    const auto args = open == std::string::npos ? std::vector<std::size_t>{} : parse_args(t, open);
    auto need = [&](std::size_t k) {
        if (args.size() != k) throw UsageError("layer '" + raw + "' expects " + std::to_string(k) + " arguments");
    };
    if (head == "conv") {
        need(3);
        if (t.find("+relu") == std::string::npos) throw UsageError("conv layer '" + raw + "' must be followed by +ReLU()");
        return LayerSpec::conv(args[0], args[1], args[2]);
    }
    if (head == "maxpooling" || head == "maxpool") {
        need(2);
        return LayerSpec::maxpool(args[0], args[1]);
    }
    if (head == "flatten") return LayerSpec::flatten();
    if (head == "fc") {
        need(1);
        if (t.find("+softmax") != std::string::npos) return LayerSpec::dense(args[0], Activation::softmax);
        if (t.find("+relu") != std::string::npos) return LayerSpec::dense(args[0], Activation::relu);
        throw UsageError("FC layer '" + raw + "' needs +ReLU() or +Softmax()");
    }
    throw UsageError("unknown layer '" + raw + "'");
}

}  // namespace detail

/// Parses a ';' or newline separated stack, e.g. "Conv(6,5,5)+ReLU(); MaxPooling(2,2); Flatten(); FC(10)+Softmax()".
inline std::vector<LayerSpec> parse_layers(std::string_view text) {
    std::vector<LayerSpec> specs;
    std::string cur;
    auto flush = [&] {
        if (detail::lowercase(cur).empty()) {
            cur.clear();
            return;
        }
        specs.push_back(detail::parse_layer(cur));
        cur.clear();
    };
    for (char ch : text) {
        if (ch == ';' || ch == '\n') flush();
        else cur.push_back(ch);
    }
    flush();
    return specs;
}

inline std::string layers_string(const std::vector<LayerSpec>& specs) {
    std::string s;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (i) s += ';';
        s += specs[i].str();
    }
    return s;
}

struct ModelConfig {
    std::vector<LayerSpec> layers;
    Shape3 input;
};

/// Built-in stacks: the three reference architectures plus a small net for desk-scale runs.
inline ModelConfig preset(std::string_view name) {
    const std::string n = detail::lowercase(name);
    if (n == "mma")
        return {parse_layers("Conv(6,5,5)+ReLU();MaxPooling(2,2);Conv(16,5,5)+ReLU();MaxPooling(2,2);Flatten();"
                             "FC(120)+ReLU();FC(84)+ReLU();FC(10)+Softmax()"),
                {1, 28, 28}};
    if (n == "mmb")
        return {parse_layers("Conv(32,3,3)+ReLU();Conv(32,3,3)+ReLU();MaxPooling(2,2);Conv(64,3,3)+ReLU();"
                             "Conv(64,3,3)+ReLU();MaxPooling(2,2);Flatten();FC(200)+ReLU();FC(10)+Softmax()"),
                {1, 28, 28}};
    if (n == "cm")
        return {parse_layers("Conv(64,3,3)+ReLU();Conv(64,3,3)+ReLU();MaxPooling(2,2);Conv(128,3,3)+ReLU();"
                             "Conv(128,3,3)+ReLU();MaxPooling(2,2);Flatten();FC(256)+ReLU();FC(256)+ReLU();"
                             "FC(10)+Softmax()"),
                {3, 32, 32}};
    if (n == "tiny")
        return {parse_layers("Conv(6,5,5)+ReLU();MaxPooling(2,2);Conv(12,3,3)+ReLU();MaxPooling(2,2);Flatten();"
                             "FC(48)+ReLU();FC(10)+Softmax()"),
                {1, 20, 20}};
    throw UsageError("unknown preset '" + std::string(name) + "' (expected mma, mmb, cm or tiny)");
}

inline bool is_preset(std::string_view name) {
    const std::string n = detail::lowercase(name);
    return n == "mma" || n == "mmb" || n == "cm" || n == "tiny";
}

/// Output shape of every layer; rank-1 shapes after Flatten are reported as {units,1,1}.
inline std::vector<Shape3> chain_shapes(const std::vector<LayerSpec>& layers, Shape3 input) {
    if (layers.empty()) throw UsageError("model has no layers");
    if (input.channels == 0 || input.height == 0 || input.width == 0) throw ShapeError("input shape has a zero extent");
    std::vector<Shape3> out;
    Shape3 s = input;
    bool flat = false;
    std::size_t flattens = 0;
    auto fail = [](std::size_t i, const std::string& why) {
        throw ShapeError("layer " + std::to_string(i) + ": " + why);
    };
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        switch (l.kind) {
        case LayerKind::conv:
            if (flat) fail(i, "convolution after Flatten");
            if (l.kh > s.height || l.kw > s.width)
                fail(i, "kernel " + std::to_string(l.kh) + "x" + std::to_string(l.kw) + " larger than input " +
                            std::to_string(s.height) + "x" + std::to_string(s.width));
            s = {l.units, s.height - l.kh + 1, s.width - l.kw + 1};
            break;
        case LayerKind::maxpool:
            if (flat) fail(i, "pooling after Flatten");
            if (s.height % l.kh || s.width % l.kw)
                fail(i, "pooling window " + std::to_string(l.kh) + "x" + std::to_string(l.kw) +
                            " does not divide input " + std::to_string(s.height) + "x" + std::to_string(s.width));
            s = {s.channels, s.height / l.kh, s.width / l.kw};
            break;
        case LayerKind::flatten:
            if (flat) fail(i, "Flatten appears more than once");
            flat = true;
            ++flattens;
            s = {s.size(), 1, 1};
            break;
        case LayerKind::dense:
            if (!flat) fail(i, "FC layer before Flatten");
            if (l.activation == Activation::softmax && i + 1 != layers.size()) fail(i, "Softmax must be the last layer");
            s = {l.units, 1, 1};
            break;
        }
        out.push_back(s);
    }
    if (flattens != 1) throw ShapeError("model needs exactly one Flatten layer");
    const auto& last = layers.back();
    if (last.kind != LayerKind::dense || last.activation != Activation::softmax)
        throw ShapeError("layer " + std::to_string(layers.size() - 1) + ": last layer must be FC(c)+Softmax()");
    return out;
}

template <typename T>
struct LayerParams {
    BasicTensor<T> weight;
    BasicTensor<T> bias;
};

/// Per-call cache of a training forward pass, consumed by backward.
template <typename T>
struct ForwardTrace {
    bool valid = false;
    std::vector<BasicTensor<T>> inputs;  // input seen by each layer
    std::vector<BasicTensor<T>> pre;     // pre-activation output of conv/dense layers
    std::vector<std::vector<std::size_t>> argmax;
    BasicTensor<T> probs;
};

template <typename T>
class BasicModel {
public:
    BasicModel() = default;

    BasicModel(std::vector<LayerSpec> layers, Shape3 input)
        : layers_(std::move(layers)), input_(input), shapes_(chain_shapes(layers_, input_)) {
        classes_ = layers_.back().units;
        params_.resize(layers_.size());
        Shape3 in = input_;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& l = layers_[i];
            if (l.kind == LayerKind::conv) {
                params_[i].weight = BasicTensor<T>({l.units, in.channels, l.kh, l.kw});
                params_[i].bias = BasicTensor<T>({l.units});
            } else if (l.kind == LayerKind::dense) {
                params_[i].weight = BasicTensor<T>({l.units, in.size()});
                params_[i].bias = BasicTensor<T>({l.units});
            }
            in = shapes_[i];
        }
    }

    /// Uniform in +-sqrt(6/(fan_in+fan_out)); biases start at zero.
    void initialize(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            if (!layers_[i].has_params()) continue;
            auto& w = params_[i].weight;
            double fan_in = 0, fan_out = 0;
            if (layers_[i].kind == LayerKind::conv) {
                const double k = static_cast<double>(w.dim(2) * w.dim(3));
                fan_in = static_cast<double>(w.dim(1)) * k;
                fan_out = static_cast<double>(w.dim(0)) * k;
            } else {
                fan_in = static_cast<double>(w.dim(1));
                fan_out = static_cast<double>(w.dim(0));
            }
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            std::uniform_real_distribution<double> dist(-limit, limit);
            for (auto& v : w.data()) v = static_cast<T>(dist(rng));
            params_[i].bias.fill(T{0});
        }
    }

    const std::vector<LayerSpec>& layers() const { return layers_; }
    const std::vector<Shape3>& layer_shapes() const { return shapes_; }
    Shape3 input_shape() const { return input_; }
    std::size_t classes() const { return classes_; }
    std::string config() const { return layers_string(layers_); }

    std::vector<LayerParams<T>>& params() { return params_; }
    const std::vector<LayerParams<T>>& params() const { return params_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.weight.size() + p.bias.size();
        return n;
    }

    std::vector<std::size_t> conv_layers() const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            if (layers_[i].kind == LayerKind::conv) idx.push_back(i);
        return idx;
    }

    /// Logits (input of the final softmax). With a mask, the listed conv outputs are
    /// zeroed before their ReLU.
    BasicTensor<T> forward_logits(const BasicTensor<T>& x, const RegionMaskSet* mask = nullptr) const {
        return run(x, mask, nullptr);
    }

    BasicTensor<T> forward(const BasicTensor<T>& x, const RegionMaskSet* mask = nullptr) const {
        return softmax(run(x, mask, nullptr));
    }

    BasicTensor<T> forward_train(const BasicTensor<T>& x, ForwardTrace<T>& trace) const {
        trace = {};
        trace.probs = softmax(run(x, nullptr, &trace));
        trace.valid = true;
        return trace.probs;
    }

    /// Backpropagates a gradient with respect to the output probabilities.
    std::vector<LayerParams<T>> backward(const ForwardTrace<T>& trace, const BasicTensor<T>& grad_probs) const {
        require_trace(trace);
        return backward_logits(trace, softmax_backward(trace.probs, grad_probs));
    }

    /// Backpropagates a gradient with respect to the final logits.
    std::vector<LayerParams<T>> backward_logits(const ForwardTrace<T>& trace, BasicTensor<T> grad) const {
        require_trace(trace);
        std::vector<LayerParams<T>> grads(layers_.size());
        for (std::size_t k = layers_.size(); k-- > 0;) {
            const auto& l = layers_[k];
            const auto& in = trace.inputs[k];
            switch (l.kind) {
            case LayerKind::conv: {
                grad = relu_backward(trace.pre[k], std::move(grad));
                auto g = conv2d_backward(in, params_[k].weight, grad);
                grads[k] = {std::move(g.weight), std::move(g.bias)};
                grad = std::move(g.input);
                break;
            }
            case LayerKind::maxpool:
                grad = maxpool2d_backward(grad, std::span<const std::size_t>(trace.argmax[k]), in.shape());
                break;
            case LayerKind::flatten: grad = std::move(grad).reshaped(in.shape()); break;
            case LayerKind::dense: {
                if (l.activation == Activation::relu) grad = relu_backward(trace.pre[k], std::move(grad));
                auto g = fc_backward(in, params_[k].weight, grad);
                grads[k] = {std::move(g.weight), std::move(g.bias)};
                grad = std::move(g.input);
                break;
            }
            }
        }
        return grads;
    }

    void sgd_update(const std::vector<LayerParams<T>>& grads, T lr) {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            if (!layers_[i].has_params()) continue;
            sgd_step(params_[i].weight.data(), std::span<const T>(grads[i].weight.data()), lr);
            sgd_step(params_[i].bias.data(), std::span<const T>(grads[i].bias.data()), lr);
        }
    }

    template <typename U>
    BasicModel<U> cast() const {
        BasicModel<U> m(layers_, input_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            if (!layers_[i].has_params()) continue;
            m.params()[i] = {params_[i].weight.template cast<U>(), params_[i].bias.template cast<U>()};
        }
        return m;
    }

private:
    void require_trace(const ForwardTrace<T>& trace) const {
        if (!trace.valid || trace.inputs.size() != layers_.size())
            throw UsageError("backward called without a matching forward cache");
    }

    void check_input(const BasicTensor<T>& x) const {
        const auto s = x.shape4();
        if (s.channels != input_.channels || s.height != input_.height || s.width != input_.width)
            throw ShapeError("input " + shape_string(x.shape()) + " does not match model input [" +
                             std::to_string(input_.channels) + "," + std::to_string(input_.height) + "," +
                             std::to_string(input_.width) + "]");
    }

    BasicTensor<T> run(const BasicTensor<T>& x, const RegionMaskSet* mask, ForwardTrace<T>* trace) const {
        check_input(x);
        if (trace) {
            trace->inputs.resize(layers_.size());
            trace->pre.resize(layers_.size());
            trace->argmax.resize(layers_.size());
        }
        BasicTensor<T> h = x;
        for (std::size_t k = 0; k < layers_.size(); ++k) {
            const auto& l = layers_[k];
            if (trace) trace->inputs[k] = h;
            switch (l.kind) {
            case LayerKind::conv: {
                h = conv2d_forward(h, params_[k].weight, params_[k].bias);
                if (mask)
                    if (const auto* m = mask->for_layer(k)) apply_mask(h, *m);
                if (trace) trace->pre[k] = h;
                h = relu(std::move(h));
                break;
            }
            case LayerKind::maxpool: {
                auto r = maxpool2d_forward(h, l.kh, l.kw);
                if (trace) trace->argmax[k] = std::move(r.argmax);
                h = std::move(r.output);
                break;
            }
            case LayerKind::flatten: {
                const std::size_t b = h.dim(0);
                h = std::move(h).reshaped({b, h.size() / b});
                break;
            }
            case LayerKind::dense:
                h = fc_forward(h, params_[k].weight, params_[k].bias);
                if (trace) trace->pre[k] = h;
                if (l.activation == Activation::relu) h = relu(std::move(h));
                break;
            }
        }
        return h;
    }

    static void apply_mask(BasicTensor<T>& h, const LayerMask& m) {
        const auto s = h.shape4();
        if (s.height != m.height || s.width != m.width)
            throw ShapeError("mask " + std::to_string(m.height) + "x" + std::to_string(m.width) +
                             " does not match conv output " + std::to_string(s.height) + "x" + std::to_string(s.width));
        const std::size_t plane = s.height * s.width;
        T* d = h.data().data();
        for (std::size_t bc = 0; bc < s.batch * s.channels; ++bc)
            for (std::size_t k = 0; k < plane; ++k)
                if (m.zero[k]) d[bc * plane + k] = T{0};
    }

    std::vector<LayerSpec> layers_;
    Shape3 input_;
    std::size_t classes_ = 0;
    std::vector<Shape3> shapes_;
    std::vector<LayerParams<T>> params_;
};

using Model = BasicModel<float>;

/// Builds a model from a preset name or a layer-stack string and initializes its parameters.
/// A non-zero `classes` replaces the width of the final FC layer.
inline Model build_model(std::string_view config, Shape3 input, std::uint64_t seed, std::size_t classes = 0) {
    std::vector<LayerSpec> layers = is_preset(config) ? preset(config).layers : parse_layers(config);
    if (classes && !layers.empty()) layers.back().units = classes;
    Model m(std::move(layers), input);
    m.initialize(seed);
    return m;
}

inline Model build_model(const ModelConfig& config, std::uint64_t seed) {
    Model m(config.layers, config.input);
    m.initialize(seed);
    return m;
}

}  // namespace dscore
