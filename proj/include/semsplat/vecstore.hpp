#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "semsplat/core.hpp"
#include "semsplat/pipeline.hpp"
#include "semsplat/scene.hpp"

namespace semsplat {

/// Inner product with eight independent accumulation lanes summed in a fixed
/// pairwise order. The lane structure keeps the loop vectorizable without
/// -ffast-math and makes the result deterministic.
inline float dot_lanes(const float* a, const float* b, size_t n) {
    float lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int l = 0; l < 8; ++l) lanes[l] += a[i + l] * b[i + l];
    float tail = 0.0f;
    for (; i < n; ++i) tail += a[i] * b[i];
    const float s01 = lanes[0] + lanes[1], s23 = lanes[2] + lanes[3];
    const float s45 = lanes[4] + lanes[5], s67 = lanes[6] + lanes[7];
    return ((s01 + s23) + (s45 + s67)) + tail;
}

/// L2-normalized copy (norm accumulated in double). Throws on zero norm.
inline std::vector<float> normalized_copy(const float* v, size_t n) {
    double norm_sq = 0.0;
    for (size_t i = 0; i < n; ++i) norm_sq += static_cast<double>(v[i]) * v[i];
    if (!(norm_sq > 0.0)) throw NumericError("cannot normalize a zero vector");
    const double inv = 1.0 / std::sqrt(norm_sq);
    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = static_cast<float>(v[i] * inv);
    return out;
}

struct ScoredId {
    uint32_t gaussian_id = 0;
    float similarity = 0.0f;
};

/// Flat cosine-similarity index over covered Gaussians. Vectors are stored
/// L2-normalized in one contiguous row-major block; each record carries the
/// full Gaussian parameters so a deployed snapshot needs no scene file.
class VectorStore {
public:
    VectorStore() = default;
    explicit VectorStore(uint32_t dim) : dim_(dim) {}

    uint32_t dim() const { return dim_; }
    size_t count() const { return ids_.size(); }

    /// Appends a record; `unit_vector` must already be L2-normalized.
    void add_record(uint32_t gaussian_id, const std::vector<float>& unit_vector, const Gaussian3D& payload) {
        if (unit_vector.size() != dim_) throw ContractError("vector store: record dimension mismatch");
        ids_.push_back(gaussian_id);
        vectors_.insert(vectors_.end(), unit_vector.begin(), unit_vector.end());
        payloads_.push_back(payload);
    }

    void reserve(size_t n) {
        ids_.reserve(n);
        vectors_.reserve(n * dim_);
        payloads_.reserve(n);
    }

    uint32_t id_at(size_t i) const { return ids_[i]; }
    const float* vector_at(size_t i) const { return vectors_.data() + i * dim_; }
    const Gaussian3D& payload_at(size_t i) const { return payloads_[i]; }

    const std::vector<uint32_t>& ids() const { return ids_; }

private:
    uint32_t dim_ = 0;
    std::vector<uint32_t> ids_;
    std::vector<float> vectors_;
    std::vector<Gaussian3D> payloads_;
};

/// Pairs every covered table row (L2-normalized) with its scene parameters.
inline VectorStore build_store(const EmbeddingTable& table, const GaussianScene& scene) {
    if (table.gaussian_count != scene.size())
        throw ContractError("build_store: table rows and scene size differ");
    VectorStore store(table.dim);
    for (uint64_t k = 0; k < table.gaussian_count; ++k) {
        if (!table.covered(k)) continue;
        std::vector<float> unit;
        try {
            unit = normalized_copy(table.row(k), table.dim);
        } catch (const NumericError&) {
            throw DataError("covered gaussian " + std::to_string(k) + " has a zero embedding row");
        }
        store.add_record(static_cast<uint32_t>(k), unit, scene[k]);
    }
    return store;
}

namespace detail {

inline bool scored_before(const ScoredId& a, const ScoredId& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.gaussian_id < b.gaussian_id;
}

inline std::vector<float> prepare_query(const VectorStore& store, const std::vector<float>& q) {
    if (q.size() != store.dim()) throw ContractError("query dimension differs from store dimension");
    return normalized_copy(q.data(), q.size());
}

} // namespace detail

/// Exact top-k by cosine similarity, descending; ties resolved by ascending
/// gaussian_id. k larger than the store returns everything.
inline std::vector<ScoredId> query_topk(const VectorStore& store, const std::vector<float>& q, size_t k) {
    if (k == 0 || store.count() == 0) return {};
    const std::vector<float> qn = detail::prepare_query(store, q);
    std::vector<ScoredId> scored(store.count());
    for (size_t i = 0; i < store.count(); ++i)
        scored[i] = {store.id_at(i), dot_lanes(store.vector_at(i), qn.data(), store.dim())};
    const size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<ptrdiff_t>(take), scored.end(),
                      detail::scored_before);
    scored.resize(take);
    return scored;
}

/// All records with cosine >= tau, descending. tau must lie in [-1, 1].
inline std::vector<ScoredId> query_threshold(const VectorStore& store, const std::vector<float>& q, float tau) {
    if (!(tau >= -1.0f && tau <= 1.0f)) throw ContractError("cosine threshold must lie in [-1, 1]");
    if (store.count() == 0) return {};
    const std::vector<float> qn = detail::prepare_query(store, q);
    std::vector<ScoredId> matches;
    for (size_t i = 0; i < store.count(); ++i) {
        const float sim = dot_lanes(store.vector_at(i), qn.data(), store.dim());
        if (sim >= tau) matches.push_back({store.id_at(i), sim});
    }
    std::sort(matches.begin(), matches.end(), detail::scored_before);
    return matches;
}

// -------- Spatial partitioning --------

/// One grid cell of the partitioned store.
struct PartitionSnapshot {
    Eigen::Vector3i cell = Eigen::Vector3i::Zero();
    Aabb bounds;
    VectorStore store;
};

/// Uniform grid over the record means, anchored at their bounding-box
/// minimum; a mean on a cell boundary belongs to the higher cell (half-open
/// intervals). Empty cells are omitted.
inline std::vector<PartitionSnapshot> partition_store(const VectorStore& store, double cell_size) {
    if (!(cell_size > 0)) throw ContractError("partition_store: cell_size must be positive");
    if (store.count() == 0) return {};

    Aabb bbox;
    for (size_t i = 0; i < store.count(); ++i) bbox.expand(store.payload_at(i).mean.cast<double>());

    struct CellKey {
        int32_t x, y, z;
        bool operator<(const CellKey& o) const {
            if (x != o.x) return x < o.x;
            if (y != o.y) return y < o.y;
            return z < o.z;
        }
    };
    std::map<CellKey, std::vector<size_t>> cells;
    for (size_t i = 0; i < store.count(); ++i) {
        const Eigen::Vector3d m = store.payload_at(i).mean.cast<double>();
        CellKey key{};
        key.x = static_cast<int32_t>(std::floor((m.x() - bbox.min.x()) / cell_size));
        key.y = static_cast<int32_t>(std::floor((m.y() - bbox.min.y()) / cell_size));
        key.z = static_cast<int32_t>(std::floor((m.z() - bbox.min.z()) / cell_size));
        cells[key].push_back(i);
    }

    std::vector<PartitionSnapshot> snapshots;
    snapshots.reserve(cells.size());
    for (const auto& [key, indices] : cells) {
        PartitionSnapshot snap;
        snap.cell = {key.x, key.y, key.z};
        snap.bounds.min = bbox.min + cell_size * Eigen::Vector3d(key.x, key.y, key.z);
        snap.bounds.max = bbox.min + cell_size * Eigen::Vector3d(key.x + 1, key.y + 1, key.z + 1);
        snap.store = VectorStore(store.dim());
        snap.store.reserve(indices.size());
        for (size_t i : indices) {
            std::vector<float> v(store.vector_at(i), store.vector_at(i) + store.dim());
            snap.store.add_record(store.id_at(i), v, store.payload_at(i));
        }
        snapshots.push_back(std::move(snap));
    }
    return snapshots;
}

inline double aabb_distance_sq(const Aabb& box, const Eigen::Vector3d& p) {
    double d2 = 0.0;
    for (int axis = 0; axis < 3; ++axis) {
        const double v = p[axis];
        if (v < box.min[axis]) d2 += (box.min[axis] - v) * (box.min[axis] - v);
        else if (v > box.max[axis]) d2 += (v - box.max[axis]) * (v - box.max[axis]);
    }
    return d2;
}

/// Merges every snapshot whose cell intersects ball(center, radius); the
/// result is a superset of all records within the radius.
inline VectorStore select_partitions(const std::vector<PartitionSnapshot>& snapshots,
                                     const Eigen::Vector3d& center, double radius) {
    if (radius < 0) throw ContractError("select_partitions: radius must be >= 0");
    VectorStore merged(snapshots.empty() ? 0 : snapshots.front().store.dim());
    for (const PartitionSnapshot& snap : snapshots) {
        if (aabb_distance_sq(snap.bounds, center) > radius * radius) continue;
        for (size_t i = 0; i < snap.store.count(); ++i) {
            std::vector<float> v(snap.store.vector_at(i), snap.store.vector_at(i) + snap.store.dim());
            merged.add_record(snap.store.id_at(i), v, snap.store.payload_at(i));
        }
    }
    return merged;
}

// -------- Snapshot file format --------

inline constexpr uint32_t kSnapshotMagic = 0x504E5356; // "VSNP"
inline constexpr uint32_t kSnapshotVersion = 1;

inline void save_snapshot(const PartitionSnapshot& snap, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write snapshot: " + path);
    detail::write_le<uint32_t>(os, kSnapshotMagic);
    detail::write_le<uint32_t>(os, kSnapshotVersion);
    detail::write_le<uint32_t>(os, snap.store.dim());
    detail::write_le<uint64_t>(os, snap.store.count());
    for (int i = 0; i < 3; ++i) detail::write_le<int32_t>(os, snap.cell[i]);
    for (int i = 0; i < 3; ++i) detail::write_le<double>(os, snap.bounds.min[i]);
    for (int i = 0; i < 3; ++i) detail::write_le<double>(os, snap.bounds.max[i]);
    for (size_t i = 0; i < snap.store.count(); ++i) {
        detail::write_le<uint32_t>(os, snap.store.id_at(i));
        detail::write_f32_array(os, snap.store.vector_at(i), snap.store.dim());
        const Gaussian3D& g = snap.store.payload_at(i);
        float payload[14] = {g.mean[0],       g.mean[1],       g.mean[2],     g.scale[0],  g.scale[1],
                             g.scale[2],      g.rotation.w(),  g.rotation.x(), g.rotation.y(),
                             g.rotation.z(),  g.opacity,       g.color[0],    g.color[1],  g.color[2]};
        detail::write_f32_array(os, payload, 14);
    }
    if (!os) throw IoError("write failed: " + path);
}

inline PartitionSnapshot load_snapshot(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open snapshot: " + path);
    if (detail::read_le<uint32_t>(is) != kSnapshotMagic) throw FormatError("bad snapshot magic: " + path);
    const uint32_t version = detail::read_le<uint32_t>(is);
    if (version != kSnapshotVersion)
        throw FormatError("unsupported snapshot version " + std::to_string(version) + ": " + path);
    const uint32_t dim = detail::read_le<uint32_t>(is);
    const uint64_t count = detail::read_le<uint64_t>(is);
    PartitionSnapshot snap;
    snap.store = VectorStore(dim);
    snap.store.reserve(count);
    for (int i = 0; i < 3; ++i) snap.cell[i] = detail::read_le<int32_t>(is);
    for (int i = 0; i < 3; ++i) snap.bounds.min[i] = detail::read_le<double>(is);
    for (int i = 0; i < 3; ++i) snap.bounds.max[i] = detail::read_le<double>(is);
    std::vector<float> vec(dim);
    for (uint64_t i = 0; i < count; ++i) {
        const uint32_t id = detail::read_le<uint32_t>(is);
        detail::read_f32_array(is, vec.data(), dim);
        float payload[14];
        detail::read_f32_array(is, payload, 14);
        Gaussian3D g;
        g.id = id;
        g.mean = {payload[0], payload[1], payload[2]};
        g.scale = {payload[3], payload[4], payload[5]};
        g.rotation = Eigen::Quaternionf(payload[6], payload[7], payload[8], payload[9]);
        g.opacity = payload[10];
        g.color = {payload[11], payload[12], payload[13]};
        snap.store.add_record(id, vec, g);
    }
    return snap;
}

/// Text manifest listing every snapshot of a scene:
///   cx cy cz xmin ymin zmin xmax ymax zmax count path
struct SnapshotManifestEntry {
    Eigen::Vector3i cell;
    Aabb bounds;
    uint64_t count = 0;
    std::string path;
};

inline void save_snapshot_manifest(const std::vector<SnapshotManifestEntry>& entries, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write snapshot manifest: " + path);
    os << "# cx cy cz xmin ymin zmin xmax ymax zmax count path\n";
    os.precision(17);
    for (const auto& e : entries) {
        os << e.cell.x() << ' ' << e.cell.y() << ' ' << e.cell.z();
        for (int i = 0; i < 3; ++i) os << ' ' << e.bounds.min[i];
        for (int i = 0; i < 3; ++i) os << ' ' << e.bounds.max[i];
        os << ' ' << e.count << ' ' << e.path << '\n';
    }
}

inline std::vector<SnapshotManifestEntry> load_snapshot_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open snapshot manifest: " + path);
    std::vector<SnapshotManifestEntry> entries;
    std::string line;
    while (std::getline(is, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        SnapshotManifestEntry e;
        if (!(ls >> e.cell.x())) continue;
        if (!(ls >> e.cell.y() >> e.cell.z() >> e.bounds.min[0] >> e.bounds.min[1] >> e.bounds.min[2] >>
              e.bounds.max[0] >> e.bounds.max[1] >> e.bounds.max[2] >> e.count >> e.path))
            throw FormatError("malformed snapshot manifest line in " + path);
        entries.push_back(std::move(e));
    }
    return entries;
}

} // namespace semsplat
