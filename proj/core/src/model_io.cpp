#include "holmes/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "holmes/errors.hpp"
#include "json.hpp"

namespace holmes {

namespace {

using json = nlohmann::json;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        if (remaining() < n) {
            throw ParseError(std::string("truncated model file while reading ") + what + ": need " +
                                 std::to_string(n) + " bytes, " + std::to_string(remaining()) + " left",
                             pos_);
        }
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::uint64_t uint(int width, const char* what) {
        auto s = take(static_cast<std::size_t>(width), what);
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(s[static_cast<std::size_t>(i)]) << (8 * i);
        return v;
    }

    void doubles(std::span<double> out, const char* what) {
        auto s = take(out.size() * 8, what);
        for (std::size_t k = 0; k < out.size(); ++k) {
            std::uint64_t bits = 0;
            for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(s[k * 8 + static_cast<std::size_t>(i)]) << (8 * i);
            out[k] = std::bit_cast<double>(bits);
        }
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_model(const Network& net, std::string_view metadata_json) {
    json header;
    header["input_dim"] = net.input_dim();
    header["layers"] = json::array();
    for (const Layer& layer : net.layers()) {
        json entry{{"kind", to_string(layer.kind)}};
        if (layer.has_parameters()) {
            entry["in"] = layer.in_dim();
            entry["out"] = layer.out_dim();
        }
        header["layers"].push_back(entry);
    }
    header["init_seed"] = net.init_seed() ? json(*net.init_seed()) : json(nullptr);
    header["metadata"] = json::parse(metadata_json.empty() ? std::string_view("{}") : metadata_json);
    const std::string text = header.dump();

    std::vector<std::uint8_t> out(kModelMagic.begin(), kModelMagic.end());
    put_u32(out, kModelFormatVersion);
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (const Layer& layer : net.layers()) {
        if (!layer.has_parameters()) continue;
        for (double w : layer.weights.values()) put_u64(out, std::bit_cast<std::uint64_t>(w));
        for (double b : layer.bias.values()) put_u64(out, std::bit_cast<std::uint64_t>(b));
    }
    return out;
}

ModelFile decode_model(std::span<const std::uint8_t> bytes) {
    Reader in(bytes);
    auto magic = in.take(kModelMagic.size(), "magic");
    if (std::memcmp(magic.data(), kModelMagic.data(), kModelMagic.size()) != 0) {
        throw ParseError("not a model file (bad magic)", 0);
    }
    const auto version = static_cast<std::uint32_t>(in.uint(4, "format version"));
    if (version != kModelFormatVersion) throw UnsupportedVersionError(version, kModelFormatVersion);
    const std::uint64_t header_len = in.uint(8, "header length");
    const std::size_t header_at = in.offset();
    auto header_bytes = in.take(static_cast<std::size_t>(header_len), "header");

    json header;
    std::vector<Layer> layers;
    std::size_t input_dim = 0;
    std::optional<std::uint64_t> seed;
    std::string metadata;
    try {
        header = json::parse(header_bytes.begin(), header_bytes.end());
        input_dim = header.at("input_dim").get<std::size_t>();
        for (const json& entry : header.at("layers")) {
            const LayerKind kind = layer_kind_from_string(entry.at("kind").get<std::string>());
            if (kind == LayerKind::dense) {
                layers.push_back(Layer::dense(entry.at("in").get<std::size_t>(), entry.at("out").get<std::size_t>()));
            } else {
                layers.push_back(Layer{kind, {}, {}});
            }
        }
        if (header.contains("init_seed") && !header["init_seed"].is_null()) {
            seed = header["init_seed"].get<std::uint64_t>();
        }
        metadata = header.value("metadata", json::object()).dump();
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed model header: ") + e.what(), header_at);
    } catch (const Error& e) {
        throw ParseError(std::string("invalid model header: ") + e.what(), header_at);
    }

    for (Layer& layer : layers) {
        if (!layer.has_parameters()) continue;
        in.doubles(layer.weights.values(), "dense weights");
        in.doubles(layer.bias.values(), "dense bias");
    }
    if (in.remaining() != 0) {
        throw ParseError(std::to_string(in.remaining()) + " trailing bytes after the last parameter", in.offset());
    }
    try {
        Network net(input_dim, std::move(layers));
        net.set_init_seed(seed);
        return ModelFile{std::move(net), std::move(metadata)};
    } catch (const DimensionError& e) {
        throw ParseError(std::string("layer chain in header is inconsistent: ") + e.what(), header_at);
    }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "' for reading");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to '" + path.string() + "'");
}

void save_network(const Network& net, const std::filesystem::path& path, std::string_view metadata_json) {
    write_file_bytes(path, encode_model(net, metadata_json));
}

ModelFile load_model(const std::filesystem::path& path) { return decode_model(read_file_bytes(path)); }

Network load_network(const std::filesystem::path& path) { return load_model(path).network; }

}  // namespace holmes
