#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dscore/augment.hpp"
#include "dscore/dataset.hpp"
#include "dscore/errors.hpp"
#include "dscore/model.hpp"
#include "dscore/region.hpp"
#include "dscore/scoring.hpp"
#include "dscore/train.hpp"
#include "dscore/transform.hpp"
#include "dscore/weights.hpp"

namespace dscore {

inline constexpr const char* engine_version = "0.1.0";

struct DiagnosisReport {
    std::string engine = engine_version;
    std::string timestamp;
    std::string model_id;
    std::string dataset_id;
    std::size_t n = 3;
    double t = 5;
    std::size_t classes = 10;
    double baseline_accuracy = 0;  // f_b
    double original_accuracy = 0;  // a-hat
    double test_loss = 0;
    std::vector<double> variant_accuracy;
    std::vector<double> feature;
    std::vector<double> transform_accuracy;
    std::vector<double> attention;
    bool feature_fallback = false;
    double v_fitness = 0;
    double v_robust = 0;
    double g_n = 0;
    double d_score = 0;
    double p = 0;

    ScoreInputs score_inputs() const {
        return {n, classes, original_accuracy, transform_accuracy, feature, attention};
    }
};

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string model_id(const Model& m) { return hex64(fnv1a(serialize_weights(m))); }

inline std::string dataset_id(const Dataset& d) {
    std::uint64_t h = fnv1a(std::string_view(reinterpret_cast<const char*>(d.images.data().data()),
                                             d.images.size() * sizeof(float)));
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(d.labels.data()), d.labels.size() * sizeof(std::int32_t)), h);
    return hex64(h);
}

/// Fills the score fields from the stored arrays.
inline void rescore(DiagnosisReport& r) {
    const auto s = score(r.score_inputs());
    r.v_fitness = s.v_fitness;
    r.v_robust = s.v_robust;
    r.g_n = s.g_n;
    r.d_score = s.d_score;
    r.p = std::clamp(r.v_robust / r.g_n, 0.0, 1.0);
}

/// Feature distribution, then attention distribution, then scores.
inline DiagnosisReport diagnose(const Model& model, const Dataset& test, std::size_t n, double t,
                                std::size_t threads = 1) {
    test.validate(model.classes());
    const auto base = evaluate_full(model, test, nullptr, threads);
    const auto fd = feature_distribution(model, test, n, threads);
    const auto ad = attention_distribution(model, test, n, t, threads);
    DiagnosisReport r;
    r.timestamp = utc_timestamp();
    r.model_id = model_id(model);
    r.dataset_id = dataset_id(test);
    r.n = n;
    r.t = t;
    r.classes = model.classes();
    r.baseline_accuracy = fd.baseline;
    r.original_accuracy = ad.original;
    r.test_loss = base.loss;
    r.variant_accuracy = fd.variant;
    r.feature = fd.weights;
    r.feature_fallback = fd.uniform_fallback;
    r.transform_accuracy = ad.accuracy;
    r.attention = ad.weights;
    rescore(r);
    return r;
}

/// Absolute difference between stored and recomputed scores.
inline double report_inconsistency(const DiagnosisReport& r) {
    DiagnosisReport again = r;
    rescore(again);
    return std::max({std::abs(again.v_fitness - r.v_fitness), std::abs(again.v_robust - r.v_robust),
                     std::abs(again.g_n - r.g_n), std::abs(again.d_score - r.d_score), std::abs(again.p - r.p)});
}

// ---------------------------------------------------------------------------
// Text format: one "key value..." line per field in a fixed order.

namespace detail {
inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string nums(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + num(v[i]);
    return s;
}
}  // namespace detail

inline std::string format_report(const DiagnosisReport& r, bool with_timestamp = true) {
    std::ostringstream os;
    os << "# dscore diagnosis report; region arrays are row-major, region 1 = upper-left\n"
       << "engine_version " << r.engine << '\n';
    if (with_timestamp) os << "timestamp " << r.timestamp << '\n';
    os << "model_id " << r.model_id << '\n'
       << "dataset_id " << r.dataset_id << '\n'
       << "n " << r.n << '\n'
       << "t " << detail::num(r.t) << '\n'
       << "classes " << r.classes << '\n'
       << "resize bilinear\n"
       << "pad_rounding nearest\n"
       << "baseline_accuracy " << detail::num(r.baseline_accuracy) << '\n'
       << "original_accuracy " << detail::num(r.original_accuracy) << '\n'
       << "test_loss " << detail::num(r.test_loss) << '\n'
       << "variant_accuracy " << detail::nums(r.variant_accuracy) << '\n'
       << "feature_distribution " << detail::nums(r.feature) << '\n'
       << "transform_accuracy " << detail::nums(r.transform_accuracy) << '\n'
       << "attention_distribution " << detail::nums(r.attention) << '\n'
       << "feature_fallback " << (r.feature_fallback ? 1 : 0) << '\n'
       << "v_fitness " << detail::num(r.v_fitness) << '\n'
       << "v_robust " << detail::num(r.v_robust) << '\n'
       << "g_n " << detail::num(r.g_n) << '\n'
       << "d_score " << detail::num(r.d_score) << '\n'
       << "p " << detail::num(r.p) << '\n';
    return os.str();
}

inline DiagnosisReport parse_report(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto sp = line.find(' ');
        kv[line.substr(0, sp)] = sp == std::string::npos ? "" : line.substr(sp + 1);
    }
    auto need = [&](const std::string& k) -> const std::string& {
        auto it = kv.find(k);
        if (it == kv.end()) throw FormatError("report is missing field '" + k + "'");
        return it->second;
    };
    auto real = [&](const std::string& k) {
        try {
            return std::stod(need(k));
        } catch (const std::logic_error&) {
            throw FormatError("report field '" + k + "' is not a number");
        }
    };
    auto list = [&](const std::string& k) {
        std::vector<double> v;
        std::istringstream is(need(k));
        double x;
        while (is >> x) v.push_back(x);
        return v;
    };
    DiagnosisReport r;
    r.engine = need("engine_version");
    r.timestamp = kv.count("timestamp") ? kv["timestamp"] : "";
    r.model_id = need("model_id");
    r.dataset_id = need("dataset_id");
    r.n = static_cast<std::size_t>(real("n"));
    r.t = real("t");
    r.classes = static_cast<std::size_t>(real("classes"));
    r.baseline_accuracy = real("baseline_accuracy");
    r.original_accuracy = real("original_accuracy");
    r.test_loss = real("test_loss");
    r.variant_accuracy = list("variant_accuracy");
    r.feature = list("feature_distribution");
    r.transform_accuracy = list("transform_accuracy");
    r.attention = list("attention_distribution");
    r.feature_fallback = need("feature_fallback") == "1";
    r.v_fitness = real("v_fitness");
    r.v_robust = real("v_robust");
    r.g_n = real("g_n");
    r.d_score = real("d_score");
    r.p = real("p");
    const std::size_t cells = r.n * r.n;
    if (r.variant_accuracy.size() != cells || r.feature.size() != cells || r.transform_accuracy.size() != cells ||
        r.attention.size() != cells)
        throw FormatError("report arrays do not have n^2 entries");
    return r;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path.string());
    f << text;
    if (!f) throw FormatError("failed writing " + path.string());
}

inline void write_report(const std::filesystem::path& path, const DiagnosisReport& r) { write_text(path, format_report(r)); }

inline DiagnosisReport read_report(const std::filesystem::path& path) { return parse_report(read_bytes(path)); }

// ---------------------------------------------------------------------------
// Heatmaps of an n x n region array.

inline std::string heatmap_csv(const std::vector<double>& cells, std::size_t n) {
    std::string s;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) s += (c ? "," : "") + detail::num(cells[r * n + c]);
        s += '\n';
    }
    return s;
}

/// Plain PGM, each region drawn as a block of `block` x `block` pixels, scaled so the maximum is 255.
inline std::string heatmap_pgm(const std::vector<double>& cells, std::size_t n, std::size_t block = 16) {
    double mx = 0;
    for (double v : cells) mx = std::max(mx, v);
    std::ostringstream os;
    os << "P2\n" << n * block << ' ' << n * block << "\n255\n";
    for (std::size_t y = 0; y < n * block; ++y) {
        for (std::size_t x = 0; x < n * block; ++x) {
            const double v = cells[(y / block) * n + x / block];
            os << (x ? " " : "") << (mx > 0 ? static_cast<int>(std::lround(255.0 * std::max(v, 0.0) / mx)) : 0);
        }
        os << '\n';
    }
    return os.str();
}

/// Plain-text n x n grid of percentages, for console tables.
inline std::string grid_text(const std::vector<double>& cells, std::size_t n, const std::string& indent = "  ") {
    std::string s;
    char buf[32];
    for (std::size_t r = 0; r < n; ++r) {
        s += indent;
        for (std::size_t c = 0; c < n; ++c) {
            std::snprintf(buf, sizeof buf, "%7.2f%%", 100.0 * cells[r * n + c]);
            s += buf;
        }
        s += '\n';
    }
    return s;
}

}  // namespace dscore
