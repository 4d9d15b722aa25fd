#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dscore/errors.hpp"
#include "dscore/tensor.hpp"

namespace dscore {

struct Dataset {
    Tensor images;  // [N,C,H,W], values in [0,1]
    std::vector<std::int32_t> labels;
    std::string split;  // "train" or "test"

    std::size_t size() const { return labels.size(); }
    Shape3 image_shape() const {
        const auto s = images.shape4();
        return {s.channels, s.height, s.width};
    }
    std::size_t classes() const {
        std::int32_t m = -1;
        for (auto l : labels) m = std::max(m, l);
        return static_cast<std::size_t>(m + 1);
    }

    Tensor gather(std::span<const std::size_t> idx) const {
        const auto s = images.shape4();
        const std::size_t stride = s.channels * s.height * s.width;
        Tensor out({idx.size(), s.channels, s.height, s.width});
        for (std::size_t k = 0; k < idx.size(); ++k)
            std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(idx[k] * stride), stride,
                        out.data().begin() + static_cast<std::ptrdiff_t>(k * stride));
        return out;
    }

    void validate(std::size_t classes) const {
        if (images.rank() != 4) throw ShapeError("dataset images must be [N,C,H,W]");
        if (images.dim(0) != labels.size())
            throw FormatError("dataset has " + std::to_string(images.dim(0)) + " images but " +
                              std::to_string(labels.size()) + " labels");
        for (auto l : labels)
            if (l < 0 || static_cast<std::size_t>(l) >= classes)
                throw FormatError("label " + std::to_string(l) + " outside [0," + std::to_string(classes) + ")");
    }
};

// ---------------------------------------------------------------------------
// IDX files (big-endian extents, unsigned byte payload).

namespace idx {

inline constexpr std::uint32_t images3_magic = 0x00000803;  // N,H,W
inline constexpr std::uint32_t images4_magic = 0x00000804;  // N,C,H,W
inline constexpr std::uint32_t labels_magic = 0x00000801;

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t at, const std::string& name) {
    if (at + 4 > b.size()) throw TruncatedError(name + " header");
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           std::uint32_t{b[at + 3]};
}

inline void put_be32(std::string& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

inline std::uint8_t quantize(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

/// Reads an unsigned-byte image file, scaling pixels to [0,1] by dividing by 255.
inline Tensor read_images(const std::filesystem::path& path) {
    const auto b = read_file(path);
    const std::string name = path.filename().string();
    const auto magic = read_be32(b, 0, name);
    if (magic != images3_magic && magic != images4_magic)
        throw BadMagicError(name + " has magic 0x" + [&] {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%08x", magic);
            return std::string(buf);
        }() + ", expected an unsigned-byte image file");
    const std::size_t dims = magic & 0xff;
    Extents shape;
    for (std::size_t d = 0; d < dims; ++d) shape.push_back(read_be32(b, 4 + 4 * d, name));
    if (dims == 3) shape.insert(shape.begin() + 1, 1);
    const std::size_t header = 4 + 4 * dims;
    const std::size_t n = element_count(shape);
    if (b.size() < header + n)
        throw TruncatedError(name + " holds " + std::to_string(b.size() - header) + " pixel bytes, expected " +
                             std::to_string(n));
    Tensor t(shape);
    for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<float>(b[header + i]) / 255.0f;
    return t;
}

inline std::vector<std::int32_t> read_labels(const std::filesystem::path& path) {
    const auto b = read_file(path);
    const std::string name = path.filename().string();
    if (read_be32(b, 0, name) != labels_magic) throw BadMagicError(name + " is not an unsigned-byte label file");
    const std::size_t n = read_be32(b, 4, name);
    if (b.size() < 8 + n) throw TruncatedError(name + " holds fewer than " + std::to_string(n) + " labels");
    std::vector<std::int32_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = b[8 + i];
    return labels;
}

/// Writes [N,1,H,W] as a rank-3 file and anything else as rank 4.
inline void write_images(const std::filesystem::path& path, const Tensor& images) {
    const auto s = images.shape4();
    std::string out;
    if (s.channels == 1) {
        put_be32(out, images3_magic);
        for (auto d : {s.batch, s.height, s.width}) put_be32(out, static_cast<std::uint32_t>(d));
    } else {
        put_be32(out, images4_magic);
        for (auto d : {s.batch, s.channels, s.height, s.width}) put_be32(out, static_cast<std::uint32_t>(d));
    }
    for (float v : images.data()) out.push_back(static_cast<char>(quantize(v)));
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

inline void write_labels(const std::filesystem::path& path, std::span<const std::int32_t> labels) {
    std::string out;
    put_be32(out, labels_magic);
    put_be32(out, static_cast<std::uint32_t>(labels.size()));
    for (auto l : labels) out.push_back(static_cast<char>(static_cast<std::uint8_t>(l)));
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace idx

inline Dataset load_idx_dataset(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                                std::string split = "test") {
    Dataset d{idx::read_images(images_path), idx::read_labels(labels_path), std::move(split)};
    if (d.images.dim(0) != d.labels.size())
        throw FormatError("count mismatch: " + std::to_string(d.images.dim(0)) + " images vs " +
                          std::to_string(d.labels.size()) + " labels");
    return d;
}

/// File names inside a dataset directory, following the MNIST distribution names.
inline std::pair<std::filesystem::path, std::filesystem::path> split_files(const std::filesystem::path& dir,
                                                                           std::string_view split) {
    const std::string prefix = split == "train" ? "train" : "t10k";
    return {dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte")};
}

inline Dataset load_split(const std::filesystem::path& dir, std::string_view split) {
    if (split != "train" && split != "test") throw UsageError("split must be train or test");
    const auto [img, lbl] = split_files(dir, split);
    return load_idx_dataset(img, lbl, std::string(split));
}

inline void save_split(const std::filesystem::path& dir, const Dataset& d) {
    std::filesystem::create_directories(dir);
    const auto [img, lbl] = split_files(dir, d.split);
    idx::write_images(img, d.images);
    idx::write_labels(lbl, d.labels);
}

// ---------------------------------------------------------------------------
// Synthetic glyph datasets.

enum class Placement { centered, uniform };

inline Placement parse_placement(std::string_view s) {
    if (s == "centered") return Placement::centered;
    if (s == "uniform") return Placement::uniform;
    throw UsageError("unknown synthetic kind '" + std::string(s) + "' (expected centered or uniform)");
}

inline const char* placement_name(Placement p) { return p == Placement::centered ? "centered" : "uniform"; }

struct SyntheticSpec {
    Placement kind = Placement::centered;
    std::size_t classes = 10;
    std::size_t n_train = 2000;
    std::size_t n_test = 500;
    std::size_t size = 20;
    std::uint64_t seed = 0;
};

inline constexpr std::size_t max_glyph_classes = 10;

/// Side length of the square glyph drawn on a size x size canvas.
inline std::size_t glyph_side(std::size_t image_size) { return std::max<std::size_t>(3, image_size * 3 / 10); }

/// Whether cell (i, j) of a g x g glyph for class k is ink.
inline bool glyph_ink(std::size_t k, std::size_t i, std::size_t j, std::size_t g) {
    const std::size_t mid = g / 2, last = g - 1;
    const bool mid_row = i == mid || (g % 2 == 0 && i == mid - 1);
    const bool mid_col = j == mid || (g % 2 == 0 && j == mid - 1);
    switch (k) {
    case 0: return mid_col;                                         // vertical bar
    case 1: return mid_row;                                         // horizontal bar
    case 2: return mid_row || mid_col;                              // plus
    case 3: return i == j || i + j == last;                         // cross
    case 4: return i == 0 || j == 0 || i == last || j == last;      // box outline
    case 5: return i >= 1 && j >= 1 && i + 1 < g && j + 1 < g;      // filled block
    case 6: return i == j || i + 1 == j;                            // thick diagonal
    case 7: return i + j == last || i + j == last - 1;              // thick anti-diagonal
    case 8: return j == 0 || i == last;                             // L
    case 9: return i == 0 || mid_col;                               // T
    default: return false;
    }
}

struct GlyphPlacement {
    std::size_t top = 0, left = 0, side = 0;
};

namespace detail {

inline GlyphPlacement place_glyph(Placement kind, std::size_t size, std::size_t g, std::mt19937_64& rng) {
    if (kind == Placement::centered) {
        const long base = static_cast<long>(size - g) / 2;
        std::uniform_int_distribution<long> jitter(-1, 1);
        const long top = base + jitter(rng);
        const long left = base + jitter(rng);
        return {static_cast<std::size_t>(top), static_cast<std::size_t>(left), g};
    }
    std::uniform_int_distribution<std::size_t> pos(0, size - g);
    const std::size_t top = pos(rng);
    return {top, pos(rng), g};
}

inline Dataset render_split(const SyntheticSpec& spec, std::size_t count, std::string split, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    std::mt19937_64 rng(seq);
    const std::size_t s = spec.size, g = glyph_side(s);
    Dataset d{Tensor({count, 1, s, s}), std::vector<std::int32_t>(count), std::move(split)};
    std::uniform_int_distribution<int> ink(160, 255);
    for (std::size_t n = 0; n < count; ++n) {
        const auto label = static_cast<std::int32_t>(n % spec.classes);
        d.labels[n] = label;
        const auto at = place_glyph(spec.kind, s, g, rng);
        for (std::size_t i = 0; i < g; ++i)
            for (std::size_t j = 0; j < g; ++j)
                if (glyph_ink(static_cast<std::size_t>(label), i, j, g))
                    d.images.at(n, 0, at.top + i, at.left + j) = static_cast<float>(ink(rng)) / 255.0f;
    }
    // Shuffle so that labels are not in a fixed cyclic order.
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    Dataset shuffled{d.gather(order), std::vector<std::int32_t>(count), d.split};
    for (std::size_t i = 0; i < count; ++i) shuffled.labels[i] = d.labels[order[i]];
    return shuffled;
}

}  // namespace detail

/// Class-specific glyphs either centered (+-1 px jitter) or placed uniformly at random.
/// Pixel values are whole multiples of 1/255, so the IDX round trip is exact.
inline std::pair<Dataset, Dataset> gen_synthetic(const SyntheticSpec& spec) {
    if (spec.classes < 2 || spec.classes > max_glyph_classes)
        throw UsageError("synthetic classes must be in [2," + std::to_string(max_glyph_classes) + "]");
    if (spec.size < 8) throw UsageError("synthetic image size must be at least 8");
    if (spec.n_train == 0 || spec.n_test == 0) throw UsageError("synthetic split sizes must be positive");
    return {detail::render_split(spec, spec.n_train, "train", 1), detail::render_split(spec, spec.n_test, "test", 2)};
}

// ---------------------------------------------------------------------------
// Sidecar metadata: "key value" lines.

using Metadata = std::map<std::string, std::string>;

inline void write_metadata(const std::filesystem::path& path, const Metadata& meta) {
    std::ofstream f(path);
    if (!f) throw FormatError("cannot write " + path.string());
    for (const auto& [k, v] : meta) f << k << ' ' << v << '\n';
}

inline Metadata read_metadata(const std::filesystem::path& path) {
    Metadata meta;
    std::ifstream f(path);
    if (!f) return meta;
    std::string line;
    while (std::getline(f, line)) {
        const auto sp = line.find(' ');
        if (sp == std::string::npos) continue;
        meta[line.substr(0, sp)] = line.substr(sp + 1);
    }
    return meta;
}

inline Metadata synthetic_metadata(const SyntheticSpec& spec) {
    return {{"classes", std::to_string(spec.classes)}, {"generator", "glyphs"},
            {"kind", placement_name(spec.kind)},      {"n_test", std::to_string(spec.n_test)},
            {"n_train", std::to_string(spec.n_train)}, {"normalization", "divide-by-255"},
            {"seed", std::to_string(spec.seed)},      {"size", std::to_string(spec.size)}};
}

inline void save_synthetic(const std::filesystem::path& dir, const SyntheticSpec& spec) {
    const auto [train, test] = gen_synthetic(spec);
    save_split(dir, train);
    save_split(dir, test);
    write_metadata(dir / "meta.txt", synthetic_metadata(spec));
}

}  // namespace dscore
