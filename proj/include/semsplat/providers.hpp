#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "semsplat/core.hpp"
#include "semsplat/image_io.hpp"
#include "semsplat/scene.hpp"

namespace semsplat {

/// Default embedding dimensionality.
inline constexpr uint32_t kDefaultEmbeddingDim = 512;

/// Binary bitmap, one byte per pixel (0 or 1), row-major.
struct MaskBitmap {
    uint32_t width = 0, height = 0;
    std::vector<uint8_t> bits;

    MaskBitmap() = default;
    MaskBitmap(uint32_t w, uint32_t h) : width(w), height(h), bits(static_cast<size_t>(w) * h, 0) {}

    uint8_t at(uint32_t x, uint32_t y) const { return bits[static_cast<size_t>(y) * width + x]; }
    void set(uint32_t x, uint32_t y, uint8_t v) { bits[static_cast<size_t>(y) * width + x] = v; }
    size_t count_set() const { return static_cast<size_t>(std::count(bits.begin(), bits.end(), uint8_t(1))); }
};

/// Tight integer bounds of set pixels; `empty` when the mask has none.
struct PixelRect {
    int32_t x0 = 0, y0 = 0, x1 = -1, y1 = -1; // inclusive
    bool empty = true;
    int32_t width() const { return empty ? 0 : x1 - x0 + 1; }
    int32_t height() const { return empty ? 0 : y1 - y0 + 1; }
};

inline PixelRect tight_bbox(const MaskBitmap& bitmap) {
    PixelRect r;
    for (uint32_t y = 0; y < bitmap.height; ++y) {
        for (uint32_t x = 0; x < bitmap.width; ++x) {
            if (!bitmap.at(x, y)) continue;
            if (r.empty) {
                r = {static_cast<int32_t>(x), static_cast<int32_t>(y), static_cast<int32_t>(x),
                     static_cast<int32_t>(y), false};
            } else {
                r.x0 = std::min(r.x0, static_cast<int32_t>(x));
                r.x1 = std::max(r.x1, static_cast<int32_t>(x));
                r.y0 = std::min(r.y0, static_cast<int32_t>(y));
                r.y1 = std::max(r.y1, static_cast<int32_t>(y));
            }
        }
    }
    return r;
}

struct Mask {
    uint32_t mask_id = 0;
    MaskBitmap bitmap;
    PixelRect bbox;
};

/// Per-image set of binary masks. Masks may overlap.
struct MaskSet {
    uint32_t image_id = 0;
    std::vector<Mask> masks; // sorted by mask_id
};

// -------- RLE codec: alternating run lengths over row-major bits, zeros first --------

inline std::vector<uint32_t> rle_encode(const MaskBitmap& bitmap) {
    std::vector<uint32_t> runs;
    uint8_t current = 0;
    uint32_t run = 0;
    for (uint8_t bit : bitmap.bits) {
        const uint8_t b = bit ? 1 : 0;
        if (b == current) {
            ++run;
        } else {
            runs.push_back(run);
            current = b;
            run = 1;
        }
    }
    runs.push_back(run);
    return runs;
}

inline MaskBitmap rle_decode(const std::vector<uint32_t>& runs, uint32_t width, uint32_t height) {
    MaskBitmap bitmap(width, height);
    uint64_t pos = 0;
    uint8_t current = 0;
    for (uint32_t run : runs) {
        if (pos + run > bitmap.bits.size()) throw FormatError("mask RLE length mismatch (overlong stream)");
        std::fill_n(bitmap.bits.begin() + static_cast<ptrdiff_t>(pos), run, current);
        pos += run;
        current ^= 1;
    }
    if (pos != bitmap.bits.size())
        throw FormatError("mask RLE length mismatch: runs cover " + std::to_string(pos) + " of " +
                          std::to_string(bitmap.bits.size()) + " pixels");
    return bitmap;
}

inline constexpr uint32_t kMaskFileMagic = 0x454C524D; // "MRLE"

inline void save_maskset_file(const MaskSet& set, uint32_t width, uint32_t height, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write mask file: " + path);
    detail::write_le<uint32_t>(os, kMaskFileMagic);
    detail::write_le<uint32_t>(os, width);
    detail::write_le<uint32_t>(os, height);
    detail::write_le<uint32_t>(os, static_cast<uint32_t>(set.masks.size()));
    for (const Mask& m : set.masks) {
        const std::vector<uint32_t> runs = rle_encode(m.bitmap);
        detail::write_le<uint32_t>(os, m.mask_id);
        detail::write_le<uint64_t>(os, runs.size());
        for (uint32_t r : runs) detail::write_le<uint32_t>(os, r);
    }
    if (!os) throw IoError("write failed: " + path);
}

inline MaskSet load_maskset_file(const std::string& path, uint32_t image_id) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open mask file: " + path);
    if (detail::read_le<uint32_t>(is) != kMaskFileMagic) throw FormatError("bad mask file magic: " + path);
    const uint32_t width = detail::read_le<uint32_t>(is);
    const uint32_t height = detail::read_le<uint32_t>(is);
    const uint32_t count = detail::read_le<uint32_t>(is);
    MaskSet set;
    set.image_id = image_id;
    set.masks.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        Mask m;
        m.mask_id = detail::read_le<uint32_t>(is);
        const uint64_t run_count = detail::read_le<uint64_t>(is);
        std::vector<uint32_t> runs(run_count);
        for (uint64_t r = 0; r < run_count; ++r) runs[r] = detail::read_le<uint32_t>(is);
        m.bitmap = rle_decode(runs, width, height);
        m.bbox = tight_bbox(m.bitmap);
        set.masks.push_back(std::move(m));
    }
    std::sort(set.masks.begin(), set.masks.end(),
              [](const Mask& a, const Mask& b) { return a.mask_id < b.mask_id; });
    return set;
}

// -------- Mask embedding records --------

struct MaskEmbedding {
    uint32_t image_id = 0;
    uint32_t mask_id = 0;
    std::vector<float> vector;
};

inline constexpr uint32_t kEmbeddingFileMagic = 0x56424D45; // "EMBV"

inline void save_mask_embeddings(const std::vector<std::vector<float>>& vectors, uint32_t dim,
                                 const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write embedding file: " + path);
    detail::write_le<uint32_t>(os, kEmbeddingFileMagic);
    detail::write_le<uint32_t>(os, dim);
    detail::write_le<uint32_t>(os, static_cast<uint32_t>(vectors.size()));
    for (const auto& v : vectors) {
        if (v.size() != dim) throw ContractError("embedding record size differs from header dimension");
        detail::write_f32_array(os, v.data(), v.size());
    }
    if (!os) throw IoError("write failed: " + path);
}

inline std::vector<MaskEmbedding> load_mask_embeddings_file(const std::string& path, uint32_t image_id,
                                                            uint32_t expected_dim,
                                                            std::optional<uint32_t> expected_count = {}) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open embedding file: " + path);
    if (detail::read_le<uint32_t>(is) != kEmbeddingFileMagic)
        throw FormatError("bad embedding file magic: " + path);
    const uint32_t dim = detail::read_le<uint32_t>(is);
    const uint32_t count = detail::read_le<uint32_t>(is);
    if (dim != expected_dim)
        throw DataError("embedding dimension mismatch: file has " + std::to_string(dim) + ", manifest expects " +
                        std::to_string(expected_dim));
    if (expected_count && count != *expected_count)
        throw DataError("embedding count mismatch: file has " + std::to_string(count) + ", mask set has " +
                        std::to_string(*expected_count));
    std::vector<MaskEmbedding> out(count);
    for (uint32_t i = 0; i < count; ++i) {
        out[i].image_id = image_id;
        out[i].mask_id = i;
        out[i].vector.resize(dim);
        detail::read_f32_array(is, out[i].vector.data(), dim);
        for (float v : out[i].vector)
            if (!std::isfinite(v))
                throw DataError("non-finite embedding value in record " + std::to_string(i) + ": " + path);
    }
    return out;
}

// -------- Dataset manifest --------

struct ImageEntry {
    uint32_t image_id = 0;
    std::string rgb_path;
    uint32_t camera_id = 0;
    std::string mask_path;
    std::string embedding_path;
};

/// Describes one capture dataset: camera file, per-image assets, and the
/// (possibly different) mask and rasterization resolutions.
struct DatasetManifest {
    std::string root; // directory the relative paths resolve against
    std::string camera_file;
    uint32_t mask_width = 0, mask_height = 0;
    uint32_t raster_width = 0, raster_height = 0;
    uint32_t embedding_dim = kDefaultEmbeddingDim;
    std::vector<ImageEntry> images;

    std::string resolve(const std::string& rel) const {
        return (std::filesystem::path(root) / rel).string();
    }

    const ImageEntry& entry(uint32_t image_id) const {
        for (const ImageEntry& e : images)
            if (e.image_id == image_id) return e;
        throw DataError("manifest has no image with id " + std::to_string(image_id));
    }
};

inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open manifest: " + path);
    DatasetManifest m;
    m.root = std::filesystem::path(path).parent_path().string();
    if (m.root.empty()) m.root = ".";

    std::string line;
    size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::string key, eq;
        if (!(ls >> key)) continue;
        if (!(ls >> eq) || eq != "=")
            throw FormatError("manifest: expected 'key = value' at line " + std::to_string(line_no));
        bool ok = true;
        if (key == "version") {
            int v;
            ok = static_cast<bool>(ls >> v);
        } else if (key == "cameras") {
            ok = static_cast<bool>(ls >> m.camera_file);
        } else if (key == "mask_resolution") {
            ok = static_cast<bool>(ls >> m.mask_width >> m.mask_height);
        } else if (key == "raster_resolution") {
            ok = static_cast<bool>(ls >> m.raster_width >> m.raster_height);
        } else if (key == "embedding_dim") {
            ok = static_cast<bool>(ls >> m.embedding_dim);
        } else if (key == "image") {
            ImageEntry e;
            ok = static_cast<bool>(ls >> e.image_id >> e.rgb_path >> e.camera_id >> e.mask_path >>
                                   e.embedding_path);
            if (ok) m.images.push_back(std::move(e));
        } else {
            throw FormatError("manifest: unknown key '" + key + "' at line " + std::to_string(line_no));
        }
        if (!ok) throw FormatError("manifest: malformed value at line " + std::to_string(line_no));
    }
    return m;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write manifest: " + path);
    os << "version = 1\n";
    os << "cameras = " << m.camera_file << "\n";
    os << "mask_resolution = " << m.mask_width << " " << m.mask_height << "\n";
    os << "raster_resolution = " << m.raster_width << " " << m.raster_height << "\n";
    os << "embedding_dim = " << m.embedding_dim << "\n";
    for (const ImageEntry& e : m.images)
        os << "image = " << e.image_id << " " << e.rgb_path << " " << e.camera_id << " " << e.mask_path << " "
           << e.embedding_path << "\n";
}

inline MaskSet load_maskset(const DatasetManifest& manifest, uint32_t image_id) {
    MaskSet set = load_maskset_file(manifest.resolve(manifest.entry(image_id).mask_path), image_id);
    for (const Mask& m : set.masks)
        if (m.bitmap.width != manifest.mask_width || m.bitmap.height != manifest.mask_height)
            throw DataError("mask " + std::to_string(m.mask_id) + " of image " + std::to_string(image_id) +
                            " does not match the manifest mask resolution");
    return set;
}

inline std::vector<MaskEmbedding> load_mask_embeddings(const DatasetManifest& manifest, uint32_t image_id,
                                                       std::optional<uint32_t> expected_count = {}) {
    return load_mask_embeddings_file(manifest.resolve(manifest.entry(image_id).embedding_path), image_id,
                                     manifest.embedding_dim, expected_count);
}

// -------- Crop preparation for external embedders --------

/// White-background crop of the masked object, or nullopt for an empty mask.
inline std::optional<ImageRGB> make_crop(const ImageRGB& image, const Mask& mask) {
    if (image.width != mask.bitmap.width || image.height != mask.bitmap.height)
        throw ContractError("crop: image resolution differs from mask resolution");
    if (mask.bbox.empty) return std::nullopt;
    ImageRGB crop(image.image_id, static_cast<uint32_t>(mask.bbox.width()),
                  static_cast<uint32_t>(mask.bbox.height()));
    for (int32_t y = mask.bbox.y0; y <= mask.bbox.y1; ++y) {
        for (int32_t x = mask.bbox.x0; x <= mask.bbox.x1; ++x) {
            float* dst = crop.at(static_cast<uint32_t>(x - mask.bbox.x0), static_cast<uint32_t>(y - mask.bbox.y0));
            if (mask.bitmap.at(static_cast<uint32_t>(x), static_cast<uint32_t>(y))) {
                const float* src = image.at(static_cast<uint32_t>(x), static_cast<uint32_t>(y));
                dst[0] = src[0];
                dst[1] = src[1];
                dst[2] = src[2];
            } else {
                dst[0] = dst[1] = dst[2] = 1.0f;
            }
        }
    }
    return crop;
}

struct CropResult {
    std::vector<std::string> files;
    std::vector<uint32_t> skipped_mask_ids; // empty masks
};

/// Writes `{image_id}_{mask_id}.png` per mask into out_dir; empty masks are
/// skipped and reported rather than treated as errors.
inline CropResult prepare_crops(const ImageRGB& image, const MaskSet& masks, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    CropResult result;
    for (const Mask& m : masks.masks) {
        std::optional<ImageRGB> crop = make_crop(image, m);
        if (!crop) {
            result.skipped_mask_ids.push_back(m.mask_id);
            continue;
        }
        const std::string name =
            std::to_string(masks.image_id) + "_" + std::to_string(m.mask_id) + ".png";
        const std::string path = (std::filesystem::path(out_dir) / name).string();
        save_png(*crop, path);
        result.files.push_back(path);
    }
    return result;
}

/// Nearest-neighbor resampling; masks are binary so no interpolation.
inline MaskBitmap resample_mask(const MaskBitmap& mask, uint32_t target_width, uint32_t target_height) {
    if (target_width == 0 || target_height == 0) throw ContractError("resample_mask: zero target resolution");
    if (mask.width == target_width && mask.height == target_height) return mask;
    MaskBitmap out(target_width, target_height);
    for (uint32_t y = 0; y < target_height; ++y) {
        const uint32_t sy = std::min(mask.height - 1,
                                     static_cast<uint32_t>((2ull * y + 1) * mask.height / (2ull * target_height)));
        for (uint32_t x = 0; x < target_width; ++x) {
            const uint32_t sx = std::min(
                mask.width - 1, static_cast<uint32_t>((2ull * x + 1) * mask.width / (2ull * target_width)));
            out.set(x, y, mask.at(sx, sy));
        }
    }
    return out;
}

// -------- Deterministic synthetic embedding provider --------

inline constexpr uint64_t kSynthSeed = 0x9e3779b97f4a7c15ull;

/// Label-keyed pseudo-random unit vector; a stand-in for an external text or
/// image embedder in tests and synthetic fixtures. Stable across runs.
inline std::vector<float> synth_embedding(const std::string& label, uint32_t dim) {
    if (dim < 2) throw ContractError("synth_embedding: dimension must be >= 2");
    std::mt19937_64 rng(fnv1a64(label) ^ kSynthSeed);
    auto uniform01 = [&rng]() { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };

    std::vector<double> values(dim);
    for (uint32_t i = 0; i < dim; i += 2) {
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        values[i] = radius * std::cos(2.0 * M_PI * u2);
        if (i + 1 < dim) values[i + 1] = radius * std::sin(2.0 * M_PI * u2);
    }
    double norm_sq = 0.0;
    for (double v : values) norm_sq += v * v;
    const double inv_norm = 1.0 / std::sqrt(norm_sq);
    std::vector<float> out(dim);
    for (uint32_t i = 0; i < dim; ++i) out[i] = static_cast<float>(values[i] * inv_norm);
    return out;
}

} // namespace semsplat
