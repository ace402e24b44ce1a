#include "holmes/data.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "holmes/errors.hpp"
#include "holmes/model_io.hpp"
#include "holmes/rng.hpp"

namespace holmes {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t at, const char* file) {
    if (bytes.size() < at + 4) {
        throw ParseError(std::string("truncated IDX ") + file + " header", bytes.size());
    }
    return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
           (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

}  // namespace

void Dataset::validate() const {
    if (images.size() != labels.size() || images.size() != ids.size()) {
        throw ArgumentError("dataset '" + name + "' has mismatched image/label/id counts");
    }
    for (std::size_t n = 0; n < images.size(); ++n) {
        if (labels[n] >= num_classes) {
            throw ArgumentError("dataset '" + name + "' label " + std::to_string(labels[n]) + " at row " +
                                std::to_string(n) + " exceeds class count " + std::to_string(num_classes));
        }
        for (double v : images[n].values()) {
            if (!(v >= -0.5 && v <= 0.5)) {
                throw ArgumentError("dataset '" + name + "' row " + std::to_string(n) + " leaves the pixel box");
            }
        }
    }
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 computation failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

Dataset parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes,
                  std::size_t limit) {
    const std::uint32_t image_magic = read_be32(image_bytes, 0, "image file");
    if (image_magic != kIdxImageMagic) {
        throw ParseError("IDX image file has magic " + std::to_string(image_magic) + ", expected " +
                             std::to_string(kIdxImageMagic),
                         0);
    }
    const std::uint32_t label_magic = read_be32(label_bytes, 0, "label file");
    if (label_magic != kIdxLabelMagic) {
        throw ParseError("IDX label file has magic " + std::to_string(label_magic) + ", expected " +
                             std::to_string(kIdxLabelMagic),
                         0);
    }
    const std::size_t n_images = read_be32(image_bytes, 4, "image file");
    const std::size_t rows = read_be32(image_bytes, 8, "image file");
    const std::size_t cols = read_be32(image_bytes, 12, "image file");
    const std::size_t n_labels = read_be32(label_bytes, 4, "label file");
    if (n_images != n_labels) {
        throw ParseError("IDX count mismatch: " + std::to_string(n_images) + " images vs " +
                             std::to_string(n_labels) + " labels",
                         4);
    }
    const std::size_t pixels = rows * cols;
    if (image_bytes.size() < 16 + n_images * pixels) {
        throw ParseError("truncated IDX image payload: expected " + std::to_string(16 + n_images * pixels) +
                             " bytes, file has " + std::to_string(image_bytes.size()),
                         image_bytes.size());
    }
    if (label_bytes.size() < 8 + n_labels) {
        throw ParseError("truncated IDX label payload: expected " + std::to_string(8 + n_labels) +
                             " bytes, file has " + std::to_string(label_bytes.size()),
                         label_bytes.size());
    }

    const std::size_t count = limit == 0 ? n_images : std::min(limit, n_images);
    Dataset ds;
    ds.rows = rows;
    ds.cols = cols;
    ds.images.reserve(count);
    ds.labels.reserve(count);
    ds.ids.reserve(count);
    std::size_t max_label = 0;
    for (std::size_t n = 0; n < count; ++n) {
        std::vector<double> px(pixels);
        const std::uint8_t* src = image_bytes.data() + 16 + n * pixels;
        for (std::size_t i = 0; i < pixels; ++i) px[i] = normalize_pixel(src[i]);
        ds.images.emplace_back(std::vector<std::size_t>{pixels}, std::move(px));
        const std::size_t label = label_bytes[8 + n];
        max_label = std::max(max_label, label);
        ds.labels.push_back(label);
        ds.ids.push_back(n);
    }
    ds.num_classes = count == 0 ? 0 : max_label + 1;
    std::vector<std::uint8_t> both(image_bytes.begin(), image_bytes.end());
    both.insert(both.end(), label_bytes.begin(), label_bytes.end());
    ds.source_checksum = sha256_hex(both);
    return ds;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t limit) {
    const auto images = read_file_bytes(images_path);
    const auto labels = read_file_bytes(labels_path);
    Dataset ds = parse_idx(images, labels, limit);
    ds.name = images_path.filename().string();
    return ds;
}

void write_idx(const Dataset& ds, const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    std::vector<std::uint8_t> img;
    put_be32(img, kIdxImageMagic);
    put_be32(img, static_cast<std::uint32_t>(ds.size()));
    put_be32(img, static_cast<std::uint32_t>(ds.rows));
    put_be32(img, static_cast<std::uint32_t>(ds.cols));
    for (const Tensor& t : ds.images) {
        for (double v : t.values()) {
            const double byte = std::clamp(std::round((v + 0.5) * 255.0), 0.0, 255.0);
            img.push_back(static_cast<std::uint8_t>(byte));
        }
    }
    std::vector<std::uint8_t> lab;
    put_be32(lab, kIdxLabelMagic);
    put_be32(lab, static_cast<std::uint32_t>(ds.size()));
    for (std::size_t label : ds.labels) lab.push_back(static_cast<std::uint8_t>(label));
    write_file_bytes(images_path, img);
    write_file_bytes(labels_path, lab);
}

Dataset synth_dataset(std::size_t classes, std::size_t per_class, std::size_t dims, std::uint64_t seed) {
    if (classes < 2) throw ArgumentError("synthetic dataset needs at least 2 classes");
    if (dims == 0) throw ArgumentError("synthetic dataset needs a positive dimension");
    Rng rng(seed);
    std::vector<std::vector<double>> centers(classes, std::vector<double>(dims));
    for (auto& c : centers) {
        for (double& v : c) v = rng.uniform(-0.25, 0.25);
    }
    Dataset ds;
    ds.name = "synthetic";
    ds.num_classes = classes;
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dims))));
    ds.rows = side * side == dims ? side : 1;
    ds.cols = side * side == dims ? side : dims;
    // Interleave classes so any prefix is roughly balanced.
    for (std::size_t n = 0; n < per_class; ++n) {
        for (std::size_t k = 0; k < classes; ++k) {
            std::vector<double> px(dims);
            for (std::size_t i = 0; i < dims; ++i) px[i] = std::clamp(centers[k][i] + 0.08 * rng.normal(), -0.5, 0.5);
            ds.ids.push_back(ds.images.size());
            ds.images.emplace_back(std::vector<std::size_t>{dims}, std::move(px));
            ds.labels.push_back(k);
        }
    }
    const std::string params = "synthetic:k=" + std::to_string(classes) + ":n=" + std::to_string(per_class) +
                               ":m=" + std::to_string(dims) + ":seed=" + std::to_string(seed);
    ds.source_checksum = sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(params.data()), params.size()));
    return ds;
}

std::vector<std::size_t> largest_remainder_sizes(std::size_t total, std::span<const double> fractions) {
    double sum = 0.0;
    for (double f : fractions) {
        if (!(f >= 0.0)) throw ArgumentError("split fractions must be non-negative");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ArgumentError("split fractions must sum to 1, got " + std::to_string(sum));

    std::vector<std::size_t> sizes(fractions.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        const double exact = fractions[i] * static_cast<double>(total);
        sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        assigned += sizes[i];
        remainders.emplace_back(exact - static_cast<double>(sizes[i]), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < total && r < remainders.size(); ++r, ++assigned) {
        ++sizes[remainders[r].second];
    }
    return sizes;
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> positions) {
    Dataset out;
    out.name = ds.name;
    out.num_classes = ds.num_classes;
    out.rows = ds.rows;
    out.cols = ds.cols;
    out.source_checksum = ds.source_checksum;
    out.images.reserve(positions.size());
    for (std::size_t p : positions) {
        if (p >= ds.size()) throw ArgumentError("subset position " + std::to_string(p) + " out of range");
        out.images.push_back(ds.images[p]);
        out.labels.push_back(ds.labels[p]);
        out.ids.push_back(ds.ids[p]);
    }
    return out;
}

Split split(const Dataset& ds, std::array<double, 3> fractions, std::uint64_t seed) {
    const auto sizes = largest_remainder_sizes(ds.size(), fractions);
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));

    auto part = [&](std::size_t begin, std::size_t count, const char* suffix) {
        Dataset d = subset(ds, std::span<const std::size_t>(order).subspan(begin, count));
        d.name = ds.name + suffix;
        return d;
    };
    Split s;
    s.train = part(0, sizes[0], "/train");
    s.test = part(sizes[0], sizes[1], "/test");
    s.detector_pool = part(sizes[0] + sizes[1], sizes[2], "/detector_pool");
    return s;
}

}  // namespace holmes
