#pragma once

// Weight container (".dsw"):
//   "DSW1" | u32 LE header length | header text | 8-byte aligned float32 LE blobs
// The header is "key value" lines; each parameter is listed as
//   tensor <name> <d0,d1,...> <absolute byte offset> <byte length>
// and the header text is newline-padded so the first blob starts 8-byte aligned.

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dscore/errors.hpp"
#include "dscore/model.hpp"

namespace dscore {

inline constexpr char dsw_magic[4] = {'D', 'S', 'W', '1'};
inline constexpr std::size_t dsw_align = 8;

namespace detail {

inline std::size_t align_up(std::size_t v, std::size_t a) { return (v + a - 1) / a * a; }

inline void put_le32(std::string& out, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

inline std::uint32_t get_le32(const std::string& b, std::size_t at) {
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(b[at + static_cast<std::size_t>(k)]);
    return v;
}

struct TensorEntry {
    std::string name;
    Extents shape;
    std::size_t offset = 0;
    std::size_t bytes = 0;
};

inline std::vector<std::pair<std::string, const BasicTensor<float>*>> named_tensors(const Model& m) {
    std::vector<std::pair<std::string, const BasicTensor<float>*>> out;
    for (std::size_t i = 0; i < m.layers().size(); ++i) {
        if (!m.layers()[i].has_params()) continue;
        out.emplace_back("layer" + std::to_string(i) + ".weight", &m.params()[i].weight);
        out.emplace_back("layer" + std::to_string(i) + ".bias", &m.params()[i].bias);
    }
    return out;
}

inline std::string join_shape(const Extents& s) {
    std::string r;
    for (std::size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
    return r;
}

}  // namespace detail

inline std::string serialize_weights(const Model& model) {
    const auto tensors = detail::named_tensors(model);

    // Offsets depend on the header length, which depends on the offsets' digits; iterate to a fixed point.
    std::vector<detail::TensorEntry> entries;
    std::string header;
    std::size_t data_start = 0;
    for (int pass = 0; pass < 8; ++pass) {
        entries.clear();
        std::size_t at = data_start;
        for (const auto& [name, t] : tensors) {
            entries.push_back({name, t->shape(), at, t->size() * sizeof(float)});
            at = detail::align_up(at + t->size() * sizeof(float), dsw_align);
        }
        std::ostringstream h;
        const auto in = model.input_shape();
        h << "format dsw1\n"
          << "config " << model.config() << '\n'
          << "input " << in.channels << ' ' << in.height << ' ' << in.width << '\n'
          << "classes " << model.classes() << '\n'
          << "normalization divide-by-255\n"
          << "tensor_count " << entries.size() << '\n';
        for (const auto& e : entries)
            h << "tensor " << e.name << ' ' << detail::join_shape(e.shape) << ' ' << e.offset << ' ' << e.bytes << '\n';
        header = h.str();
        const std::size_t start = detail::align_up(8 + header.size(), dsw_align);
        header.append(start - 8 - header.size(), '\n');
        if (start == data_start) break;
        data_start = start;
    }

    std::string out(dsw_magic, 4);
    detail::put_le32(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    for (std::size_t k = 0; k < tensors.size(); ++k) {
        out.resize(entries[k].offset, '\0');
        for (float v : tensors[k].second->data()) detail::put_le32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

inline Model deserialize_weights(const std::string& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), dsw_magic, 4) != 0)
        throw BadMagicError("weight file does not start with DSW1");
    if (bytes.size() < 8) throw TruncatedError("weight file ends inside the header length");
    const std::size_t header_len = detail::get_le32(bytes, 4);
    if (bytes.size() < 8 + header_len) throw TruncatedError("weight file ends inside the header");

    std::istringstream h(bytes.substr(8, header_len));
    std::map<std::string, std::string> kv;
    std::vector<detail::TensorEntry> entries;
    std::string line;
    while (std::getline(h, line)) {
        if (line.empty()) continue;
        const auto sp = line.find(' ');
        const std::string key = line.substr(0, sp), value = sp == std::string::npos ? "" : line.substr(sp + 1);
        if (key == "tensor") {
            std::istringstream ts(value);
            detail::TensorEntry e;
            std::string shape;
            if (!(ts >> e.name >> shape >> e.offset >> e.bytes)) throw HeaderMismatchError("malformed tensor line '" + line + "'");
            std::stringstream ss(shape);
            std::string d;
            while (std::getline(ss, d, ',')) {
                std::size_t v = 0;
                const auto [end, ec] = std::from_chars(d.data(), d.data() + d.size(), v);
                if (ec != std::errc{} || end != d.data() + d.size() || d.empty())
                    throw HeaderMismatchError("bad extent '" + d + "' in tensor line '" + line + "'");
                e.shape.push_back(v);
            }
            entries.push_back(std::move(e));
        } else {
            kv[key] = value;
        }
    }
    if (kv["format"] != "dsw1") throw HeaderMismatchError("unsupported format '" + kv["format"] + "'");
    Shape3 input;
    {
        std::istringstream is(kv["input"]);
        if (!(is >> input.channels >> input.height >> input.width)) throw HeaderMismatchError("missing input shape");
    }
    std::vector<LayerSpec> layers;
    try {
        layers = parse_layers(kv["config"]);
    } catch (const UsageError& e) {
        throw HeaderMismatchError(std::string("bad config: ") + e.what());
    }
    Model model = [&] {
        try {
            return Model(layers, input);
        } catch (const Error& e) {
            throw HeaderMismatchError(std::string("config does not chain: ") + e.what());
        }
    }();
    if (kv["classes"] != std::to_string(model.classes()))
        throw HeaderMismatchError("classes " + kv["classes"] + " but final layer has " + std::to_string(model.classes()));

    std::map<std::string, BasicTensor<float>*> slots;
    for (std::size_t i = 0; i < model.layers().size(); ++i) {
        if (!model.layers()[i].has_params()) continue;
        slots["layer" + std::to_string(i) + ".weight"] = &model.params()[i].weight;
        slots["layer" + std::to_string(i) + ".bias"] = &model.params()[i].bias;
    }
    if (entries.size() != slots.size() || kv["tensor_count"] != std::to_string(slots.size()))
        throw HeaderMismatchError("expected " + std::to_string(slots.size()) + " tensors, header lists " +
                                  std::to_string(entries.size()));
    for (const auto& e : entries) {
        auto it = slots.find(e.name);
        if (it == slots.end()) throw HeaderMismatchError("unexpected tensor " + e.name);
        BasicTensor<float>& t = *it->second;
        if (e.shape != t.shape())
            throw HeaderMismatchError(e.name + " has shape " + shape_string(e.shape) + ", model expects " +
                                      shape_string(t.shape()));
        if (e.bytes != t.size() * sizeof(float)) throw HeaderMismatchError(e.name + " byte length disagrees with shape");
        if (e.offset % dsw_align != 0) throw HeaderMismatchError(e.name + " offset is not 8-byte aligned");
        if (e.offset < 8 + header_len) throw HeaderMismatchError(e.name + " overlaps the header");
        if (e.offset + e.bytes > bytes.size()) throw TruncatedError(e.name + " blob extends past end of file");
        for (std::size_t k = 0; k < t.size(); ++k)
            t[k] = std::bit_cast<float>(detail::get_le32(bytes, e.offset + 4 * k));
        slots.erase(it);
    }
    return model;
}

inline void save_weights(const Model& model, const std::filesystem::path& path) {
    const std::string bytes = serialize_weights(model);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("failed writing " + path.string());
}

inline std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline Model load_weights(const std::filesystem::path& path) { return deserialize_weights(read_bytes(path)); }

/// 64-bit FNV-1a, used for model and dataset identifiers in reports.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace dscore
