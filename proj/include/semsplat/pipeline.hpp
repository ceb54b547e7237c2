#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "semsplat/core.hpp"
#include "semsplat/providers.hpp"
#include "semsplat/rasterizer.hpp"
#include "semsplat/scene.hpp"
#include "semsplat/scene_io.hpp"

namespace semsplat {

/// Gaussians whose accumulated weight stays at or below this are uncovered.
inline constexpr double kCoverageEpsilon = 1e-8;

/// Per-(image, mask) masked weights, already summed over the mask's pixels:
/// one (gaussian_id, sum) pair per contributing Gaussian, sorted by id.
struct MaskedWeights {
    uint32_t image_id = 0;
    uint32_t mask_id = 0;
    std::vector<std::pair<uint32_t, double>> entries;
};

/// Gates captured weights by a binary mask at raster resolution and sums the
/// surviving weights per Gaussian. Gaussians with zero total are omitted.
inline MaskedWeights mask_weights(const WeightMap& wm, const MaskBitmap& bitmap, uint32_t image_id,
                                  uint32_t mask_id) {
    if (bitmap.width != wm.width || bitmap.height != wm.height)
        throw ContractError("mask_weights: mask resolution differs from weight map resolution");
    std::unordered_map<uint32_t, double> sums;
    for (const WeightEntry& e : wm.entries)
        if (bitmap.bits[e.pixel]) sums[e.gaussian_id] += e.weight;

    MaskedWeights out;
    out.image_id = image_id;
    out.mask_id = mask_id;
    out.entries.assign(sums.begin(), sums.end());
    std::sort(out.entries.begin(), out.entries.end());
    return out;
}

/// Numerator / denominator of the per-Gaussian weighted average, restricted
/// to the id range [lo, hi) for chunked aggregation.
struct PartialAccumulator {
    uint32_t lo = 0, hi = 0;
    uint32_t dim = 0;
    std::vector<double> weighted_sum; // (hi-lo) x dim, row-major
    std::vector<double> weight_total; // hi-lo

    PartialAccumulator() = default;
    PartialAccumulator(uint32_t lo_, uint32_t hi_, uint32_t dim_)
        : lo(lo_), hi(hi_), dim(dim_), weighted_sum(static_cast<size_t>(hi_ - lo_) * dim_, 0.0),
          weight_total(hi_ - lo_, 0.0) {}

    double* row(uint32_t gaussian_id) { return weighted_sum.data() + static_cast<size_t>(gaussian_id - lo) * dim; }
};

/// Adds one mask's contributions: weighted_sum[k] += w * e, weight_total[k]
/// += w for every in-range entry. Out-of-range Gaussians are skipped (the
/// chunking contract).
inline void accumulate(PartialAccumulator& acc, const MaskedWeights& mw, const std::vector<float>& embedding) {
    if (embedding.size() != acc.dim)
        throw ContractError("accumulate: embedding dimension " + std::to_string(embedding.size()) +
                            " differs from accumulator dimension " + std::to_string(acc.dim));
    for (const auto& [gaussian_id, weight] : mw.entries) {
        if (gaussian_id < acc.lo || gaussian_id >= acc.hi) continue;
        double* row = acc.row(gaussian_id);
        for (uint32_t d = 0; d < acc.dim; ++d) row[d] += weight * static_cast<double>(embedding[d]);
        acc.weight_total[gaussian_id - acc.lo] += weight;
    }
}

inline void accumulate(PartialAccumulator& acc, const MaskedWeights& mw, const MaskEmbedding& e) {
    if (e.image_id != mw.image_id || e.mask_id != mw.mask_id)
        throw ContractError("accumulate: embedding record does not match the masked weights");
    accumulate(acc, mw, e.vector);
}

/// Elementwise sum over identically-ranged partials, in list (worker rank)
/// order so the arithmetic order is fixed.
inline PartialAccumulator combine_partials(const std::vector<PartialAccumulator>& parts) {
    if (parts.empty()) throw ContractError("combine_partials: empty list");
    PartialAccumulator out(parts.front().lo, parts.front().hi, parts.front().dim);
    for (const PartialAccumulator& p : parts) {
        if (p.lo != out.lo || p.hi != out.hi || p.dim != out.dim)
            throw ContractError("combine_partials: mismatched ranges or dimensions");
        for (size_t i = 0; i < out.weighted_sum.size(); ++i) out.weighted_sum[i] += p.weighted_sum[i];
        for (size_t i = 0; i < out.weight_total.size(); ++i) out.weight_total[i] += p.weight_total[i];
    }
    return out;
}

/// The per-Gaussian embedding tensor plus accumulated weight totals.
struct EmbeddingTable {
    uint64_t gaussian_count = 0;
    uint32_t dim = 0;
    std::vector<float> embeddings; // N x D, row-major; uncovered rows are zero
    std::vector<float> coverage;   // N

    EmbeddingTable() = default;
    EmbeddingTable(uint64_t n, uint32_t d)
        : gaussian_count(n), dim(d), embeddings(n * d, 0.0f), coverage(n, 0.0f) {}

    const float* row(uint64_t k) const { return embeddings.data() + k * dim; }
    float* row(uint64_t k) { return embeddings.data() + k * dim; }
    bool covered(uint64_t k) const { return coverage[k] > static_cast<float>(kCoverageEpsilon); }
};

/// Normalized weighted average E_k = weighted_sum[k] / weight_total[k] for
/// covered rows; uncovered rows stay exactly zero.
inline void finalize_into(const PartialAccumulator& acc, EmbeddingTable& table) {
    if (table.dim != acc.dim || acc.hi > table.gaussian_count)
        throw ContractError("finalize_into: accumulator does not fit the table");
    for (uint32_t k = acc.lo; k < acc.hi; ++k) {
        const double total = acc.weight_total[k - acc.lo];
        float* row = table.row(k);
        if (total > kCoverageEpsilon) {
            const double* sum = acc.weighted_sum.data() + static_cast<size_t>(k - acc.lo) * acc.dim;
            for (uint32_t d = 0; d < acc.dim; ++d) row[d] = static_cast<float>(sum[d] / total);
            table.coverage[k] = static_cast<float>(total);
        } else {
            for (uint32_t d = 0; d < acc.dim; ++d) row[d] = 0.0f;
            table.coverage[k] = 0.0f;
        }
    }
}

inline EmbeddingTable finalize(const PartialAccumulator& acc) {
    EmbeddingTable table(acc.hi, acc.dim);
    finalize_into(acc, table);
    return table;
}

// -------- EmbeddingTable file format --------

inline constexpr uint32_t kTableMagic = 0x42544745; // "EGTB"
inline constexpr uint32_t kTableVersion = 1;

inline void save_table(const EmbeddingTable& table, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write embedding table: " + path);
    detail::write_le<uint32_t>(os, kTableMagic);
    detail::write_le<uint32_t>(os, kTableVersion);
    detail::write_le<uint64_t>(os, table.gaussian_count);
    detail::write_le<uint32_t>(os, table.dim);
    detail::write_f32_array(os, table.embeddings.data(), table.embeddings.size());
    detail::write_f32_array(os, table.coverage.data(), table.coverage.size());
    if (!os) throw IoError("write failed: " + path);
}

inline EmbeddingTable load_table(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open embedding table: " + path);
    if (detail::read_le<uint32_t>(is) != kTableMagic) throw FormatError("bad embedding table magic: " + path);
    if (detail::read_le<uint32_t>(is) != kTableVersion)
        throw FormatError("unsupported embedding table version: " + path);
    const uint64_t n = detail::read_le<uint64_t>(is);
    const uint32_t dim = detail::read_le<uint32_t>(is);
    EmbeddingTable table(n, dim);
    if (n * dim > 0) detail::read_f32_array(is, table.embeddings.data(), table.embeddings.size());
    if (n > 0) detail::read_f32_array(is, table.coverage.data(), table.coverage.size());
    return table;
}

// -------- Scene encoding: the parallel masked-weight aggregation --------

struct EncodeOptions {
    WeightMode mode = WeightMode::kAlphaComposited;
    /// Contiguous image blocks per worker instead of round-robin; reproduces
    /// the load imbalance of sequential captures in benchmarks.
    bool contiguous_batching = false;
    /// When > 0, workers spill masked weights to disk once their in-memory
    /// estimate exceeds this many bytes.
    size_t spill_memory_ceiling = 0;
    std::string spill_dir; // defaults to a temp directory when spilling
};

struct EncodeStats {
    double phase1_seconds = 0;
    double phase2_seconds = 0;
    std::vector<double> worker_seconds;   // per worker, phase 1
    std::vector<size_t> worker_images;    // images processed per worker
    std::vector<size_t> worker_entries;   // masked-weight entries per worker
};

/// Rescales camera intrinsics to a target resolution.
inline CameraPose camera_scaled_to(const CameraPose& cam, uint32_t width, uint32_t height) {
    CameraPose out = cam;
    const double sx = static_cast<double>(width) / cam.width;
    const double sy = static_cast<double>(height) / cam.height;
    out.fx *= sx;
    out.cx *= sx;
    out.fy *= sy;
    out.cy *= sy;
    out.width = width;
    out.height = height;
    return out;
}

namespace detail {

inline constexpr uint32_t kSpillMagic = 0x5053574D; // "MWSP"

struct MaskContribution {
    uint32_t image_id = 0;
    uint32_t mask_id = 0;
    std::vector<std::pair<uint32_t, double>> weights; // empty when spilled
    std::vector<float> embedding;
    // spill location when weights were flushed to disk
    bool spilled = false;
    uint64_t spill_offset = 0;
    uint64_t spill_count = 0;
};

struct WorkerState {
    std::vector<MaskContribution> items;
    size_t resident_bytes = 0;
    std::string spill_path;
    std::ofstream spill_out;
    std::string status = "pending";
    double seconds = 0;
    size_t images = 0;
    size_t entries = 0;
};

inline void spill_worker_items(WorkerState& worker) {
    for (MaskContribution& item : worker.items) {
        if (item.spilled || item.weights.empty()) continue;
        write_le<uint32_t>(worker.spill_out, kSpillMagic);
        write_le<uint32_t>(worker.spill_out, item.image_id);
        write_le<uint32_t>(worker.spill_out, item.mask_id);
        write_le<uint64_t>(worker.spill_out, item.weights.size());
        item.spill_offset = static_cast<uint64_t>(worker.spill_out.tellp());
        item.spill_count = item.weights.size();
        for (const auto& [gid, w] : item.weights) {
            write_le<uint32_t>(worker.spill_out, gid);
            write_le<double>(worker.spill_out, w);
        }
        item.spilled = true;
        item.weights.clear();
        item.weights.shrink_to_fit();
    }
    worker.spill_out.flush();
    if (!worker.spill_out) throw IoError("masked-weight spill write failed: " + worker.spill_path);
    worker.resident_bytes = 0;
}

inline std::vector<std::pair<uint32_t, double>> read_spilled(std::ifstream& is, const MaskContribution& item) {
    is.seekg(static_cast<std::streamoff>(item.spill_offset));
    std::vector<std::pair<uint32_t, double>> weights(item.spill_count);
    for (auto& [gid, w] : weights) {
        gid = read_le<uint32_t>(is);
        w = read_le<double>(is);
    }
    return weights;
}

} // namespace detail

/// Computes the per-Gaussian embedding table for a dataset.
///
/// Phase 1 distributes images across `workers` (round-robin by image index)
/// and runs rasterize -> resample -> mask_weights per image, keeping only the
/// non-zero masked weights. Phase 2 aggregates per id-range chunk of
/// `chunk_rows` rows (0 = whole range in one chunk): per chunk each worker's
/// contributions are accumulated in image order into a worker partial, the
/// partials are combined in rank order, and the finalized rows concatenate
/// into the output table. For a fixed worker count the result is bitwise
/// independent of chunk_rows; across worker counts rows agree to 1e-5
/// relative.
inline EmbeddingTable encode_scene(const GaussianScene& scene, const DatasetManifest& manifest,
                                   uint32_t workers, uint64_t chunk_rows, const EncodeOptions& options = {},
                                   EncodeStats* stats_out = nullptr) {
    if (workers < 1) throw ContractError("encode_scene: workers must be >= 1");
    if (manifest.raster_width == 0 || manifest.raster_height == 0)
        throw DataError("encode_scene: manifest has no raster resolution");

    const std::vector<CameraPose> cameras = load_cameras(manifest.resolve(manifest.camera_file));
    std::unordered_map<uint32_t, const CameraPose*> camera_by_id;
    for (const CameraPose& c : cameras) camera_by_id[c.image_id] = &c;
    for (const ImageEntry& e : manifest.images)
        if (!camera_by_id.count(e.camera_id))
            throw DataError("image " + std::to_string(e.image_id) + ": no camera with id " +
                            std::to_string(e.camera_id));

    const size_t image_count = manifest.images.size();
    std::vector<detail::WorkerState> worker_states(workers);

    std::string spill_dir = options.spill_dir;
    if (options.spill_memory_ceiling > 0) {
        if (spill_dir.empty())
            spill_dir = (std::filesystem::temp_directory_path() / "semsplat_spill").string();
        std::filesystem::create_directories(spill_dir);
    }

    const auto phase1_start = std::chrono::steady_clock::now();
    auto worker_body = [&](uint32_t rank) {
        detail::WorkerState& state = worker_states[rank];
        const auto start = std::chrono::steady_clock::now();
        const size_t block = (image_count + workers - 1) / workers;
        for (size_t idx = 0; idx < image_count; ++idx) {
            const bool mine = options.contiguous_batching ? (idx / block == rank) : (idx % workers == rank);
            if (!mine) continue;
            const ImageEntry& entry = manifest.images[idx];
            try {
                const CameraPose raster_cam =
                    camera_scaled_to(*camera_by_id.at(entry.camera_id), manifest.raster_width,
                                     manifest.raster_height);
                const WeightMap wm = rasterize_weights_only(scene, raster_cam, options.mode);
                const MaskSet maskset = load_maskset(manifest, entry.image_id);
                const std::vector<MaskEmbedding> embeddings = load_mask_embeddings(
                    manifest, entry.image_id, static_cast<uint32_t>(maskset.masks.size()));

                for (size_t j = 0; j < maskset.masks.size(); ++j) {
                    const MaskBitmap raster_mask =
                        resample_mask(maskset.masks[j].bitmap, manifest.raster_width, manifest.raster_height);
                    MaskedWeights mw = mask_weights(wm, raster_mask, entry.image_id, maskset.masks[j].mask_id);
                    if (mw.entries.empty()) continue;
                    detail::MaskContribution item;
                    item.image_id = entry.image_id;
                    item.mask_id = mw.mask_id;
                    item.weights = std::move(mw.entries);
                    item.embedding = embeddings[j].vector;
                    state.entries += item.weights.size();
                    state.resident_bytes += item.weights.size() * sizeof(std::pair<uint32_t, double>);
                    state.items.push_back(std::move(item));
                }
                state.images += 1;

                if (options.spill_memory_ceiling > 0 && state.resident_bytes > options.spill_memory_ceiling) {
                    if (!state.spill_out.is_open()) {
                        state.spill_path =
                            (std::filesystem::path(spill_dir) / ("worker_" + std::to_string(rank) + ".mwsp"))
                                .string();
                        state.spill_out.open(state.spill_path, std::ios::binary | std::ios::trunc);
                        if (!state.spill_out) throw IoError("cannot open spill file: " + state.spill_path);
                    }
                    detail::spill_worker_items(state);
                }
            } catch (const std::exception& ex) {
                state.status = "image " + std::to_string(entry.image_id) + ": " + ex.what();
                throw DataError(state.status);
            }
        }
        state.status = "ok";
        state.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    std::vector<std::string> failures(workers);
    if (workers == 1) {
        worker_body(0);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(workers);
        for (uint32_t rank = 0; rank < workers; ++rank) {
            threads.emplace_back([&, rank]() {
                try {
                    worker_body(rank);
                } catch (const std::exception& ex) {
                    failures[rank] = ex.what();
                }
            });
        }
        for (std::thread& t : threads) t.join();
        bool failed = false, data_cause = false;
        for (uint32_t rank = 0; rank < workers; ++rank) {
            if (failures[rank].empty()) continue;
            failed = true;
            data_cause = true;
        }
        if (failed) {
            std::vector<std::string> status;
            for (uint32_t rank = 0; rank < workers; ++rank)
                status.push_back("worker " + std::to_string(rank) + ": " +
                                 (failures[rank].empty() ? worker_states[rank].status : failures[rank]));
            throw PipelineError("scene encoding failed", std::move(status), data_cause);
        }
    }
    const double phase1_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - phase1_start).count();

    // Phase 2: chunked aggregation.
    const auto phase2_start = std::chrono::steady_clock::now();
    const uint64_t gaussian_count = scene.size();
    const uint32_t dim = manifest.embedding_dim;
    EmbeddingTable table(gaussian_count, dim);
    const uint64_t effective_chunk = (chunk_rows == 0 || chunk_rows > gaussian_count)
                                         ? std::max<uint64_t>(gaussian_count, 1)
                                         : chunk_rows;
    std::vector<std::pair<uint32_t, uint32_t>> chunks;
    for (uint64_t lo = 0; lo < gaussian_count; lo += effective_chunk)
        chunks.emplace_back(static_cast<uint32_t>(lo),
                            static_cast<uint32_t>(std::min(gaussian_count, lo + effective_chunk)));

    std::vector<std::ifstream> spill_readers(workers);
    for (uint32_t rank = 0; rank < workers; ++rank)
        if (!worker_states[rank].spill_path.empty()) {
            worker_states[rank].spill_out.close();
            spill_readers[rank].open(worker_states[rank].spill_path, std::ios::binary);
            if (!spill_readers[rank]) throw IoError("cannot reopen spill file: " + worker_states[rank].spill_path);
        }

    auto process_chunk = [&](const std::pair<uint32_t, uint32_t>& range, uint32_t /*thread_rank*/,
                             std::vector<std::ifstream>* readers) {
        std::vector<PartialAccumulator> parts;
        parts.reserve(workers);
        for (uint32_t rank = 0; rank < workers; ++rank) {
            PartialAccumulator part(range.first, range.second, dim);
            for (const detail::MaskContribution& item : worker_states[rank].items) {
                MaskedWeights mw;
                mw.image_id = item.image_id;
                mw.mask_id = item.mask_id;
                if (item.spilled) mw.entries = detail::read_spilled((*readers)[rank], item);
                else mw.entries = item.weights;
                accumulate(part, mw, item.embedding);
            }
            parts.push_back(std::move(part));
        }
        finalize_into(combine_partials(parts), table);
    };

    const uint32_t phase2_threads =
        static_cast<uint32_t>(std::min<size_t>(workers, chunks.size()));
    const bool any_spill = std::any_of(worker_states.begin(), worker_states.end(),
                                       [](const detail::WorkerState& w) { return !w.spill_path.empty(); });
    if (phase2_threads <= 1 || any_spill) {
        // Spill readers hold per-file cursors, so spilled runs stay serial.
        for (const auto& range : chunks) process_chunk(range, 0, &spill_readers);
    } else {
        std::vector<std::thread> threads;
        std::vector<std::string> chunk_failures(phase2_threads);
        for (uint32_t t = 0; t < phase2_threads; ++t) {
            threads.emplace_back([&, t]() {
                try {
                    for (size_t c = t; c < chunks.size(); c += phase2_threads)
                        process_chunk(chunks[c], t, &spill_readers);
                } catch (const std::exception& ex) {
                    chunk_failures[t] = ex.what();
                }
            });
        }
        for (std::thread& th : threads) th.join();
        for (const std::string& f : chunk_failures)
            if (!f.empty()) throw PipelineError("aggregation failed", {f}, false);
    }

    if (stats_out) {
        stats_out->phase1_seconds = phase1_seconds;
        stats_out->phase2_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - phase2_start).count();
        stats_out->worker_seconds.clear();
        stats_out->worker_images.clear();
        stats_out->worker_entries.clear();
        for (const detail::WorkerState& w : worker_states) {
            stats_out->worker_seconds.push_back(w.seconds);
            stats_out->worker_images.push_back(w.images);
            stats_out->worker_entries.push_back(w.entries);
        }
    }
    return table;
}

} // namespace semsplat
