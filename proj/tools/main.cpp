// semsplat command-line tool: encode / partition / query / eval / bench /
// fixture subcommands over the library. Exit codes: 0 success, 2 usage or
// config error, 3 data error, 4 internal invariant violation.

#include <CLI11.hpp>

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "semsplat/eval.hpp"
#include "semsplat/fixture.hpp"
#include "semsplat/pipeline.hpp"
#include "semsplat/query.hpp"
#include "semsplat/rasterizer.hpp"
#include "semsplat/scene_io.hpp"
#include "semsplat/vecstore.hpp"

namespace fs = std::filesystem;
using namespace semsplat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

struct RunConfig {
    // shared
    std::string scene_path;
    std::string manifest_path;
    std::string table_path;
    std::string out_path;
    std::string out_dir;
    uint32_t workers = 1;
    uint64_t chunk_rows = 0; // 0 = unlimited
    uint64_t seed = 1;
    bool literal_eq2 = false;
    bool contiguous = false;
    double spill_mb = 0.0;
    std::string dump_weights_dir;
    // partition / query
    double cell_size = 0.0;
    std::string snapshot_manifest;
    std::vector<double> center;
    double radius = -1.0;
    std::string text;
    int64_t topk = -1;
    double threshold = kDefaultCosineThreshold;
    std::string lookup_path;
    bool synthetic_fallback = false;
    std::string out_ply;
    // eval
    std::string protocol = "binary";
    std::string labels_path;
    std::string gt_mask_dir;
    std::string points_path;
    std::string segments_path;
    std::vector<int64_t> class_subset;
    double alpha_threshold = kDefaultAlphaThreshold;
    std::string binary_acc = "localization"; // or "pixelwise"
    // bench
    uint64_t bench_gaussians = 20000;
    uint32_t bench_images = 50;
    uint32_t bench_resolution = 128;
    uint32_t bench_masks_per_image = 8;
    uint32_t bench_dim = 32;
    std::vector<uint32_t> bench_workers{1, 2, 4, 8};
    std::vector<uint64_t> bench_store_sizes{100000};
    uint32_t bench_store_dim = 512;
    uint32_t bench_queries = 5;
    uint64_t bench_query_k = 10000;
    // fixture
    uint32_t fx_objects = 5;
    uint32_t fx_per_object = 200;
    uint32_t fx_views = 8;
    uint32_t fx_resolution = 128;
    uint32_t fx_mask_scale = 1;
    uint32_t fx_dim = 512;
};

void write_resolved_config(const CLI::App& app, const std::string& next_to) {
    if (next_to.empty()) return;
    std::error_code ec;
    fs::create_directories(fs::path(next_to).parent_path(), ec);
    std::ofstream os(next_to + ".config.ini");
    os << app.config_to_str(true, true);
}

TextProvider make_provider(const RunConfig& cfg, uint32_t dim) {
    if (!cfg.lookup_path.empty()) {
        const auto mode = cfg.synthetic_fallback ? TextProvider::Mode::kSynthetic
                                                 : TextProvider::Mode::kStrictLookup;
        return TextProvider::from_lookup_file(cfg.lookup_path, dim, mode);
    }
    return TextProvider::synthetic(dim);
}

std::vector<std::string> read_labels(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open labels file: " + path);
    std::vector<std::string> labels;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] != '#') labels.push_back(line);
    }
    return labels;
}

uint64_t fnv_bytes(uint64_t h, const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

// ---------------------------------------------------------------- encode --

int cmd_encode(const RunConfig& cfg) {
    const GaussianScene scene = load_scene(cfg.scene_path);
    const DatasetManifest manifest = load_manifest(cfg.manifest_path);

    EncodeOptions options;
    options.mode = cfg.literal_eq2 ? WeightMode::kFalloffOnly : WeightMode::kAlphaComposited;
    options.contiguous_batching = cfg.contiguous;
    options.spill_memory_ceiling = static_cast<size_t>(cfg.spill_mb * 1024.0 * 1024.0);

    EncodeStats stats;
    const EmbeddingTable table = encode_scene(scene, manifest, cfg.workers, cfg.chunk_rows, options, &stats);
    save_table(table, cfg.out_path);

    size_t covered = 0;
    for (uint64_t k = 0; k < table.gaussian_count; ++k) covered += table.covered(k) ? 1 : 0;

    std::printf("gaussians=%" PRIu64 " dim=%u images=%zu covered=%zu\n", table.gaussian_count, table.dim,
                manifest.images.size(), covered);
    std::printf("phase1_seconds=%.3f\nphase2_seconds=%.3f\n", stats.phase1_seconds, stats.phase2_seconds);
    std::printf("%-8s %-8s %-12s %-10s\n", "worker", "images", "entries", "seconds");
    for (size_t w = 0; w < stats.worker_seconds.size(); ++w)
        std::printf("%-8zu %-8zu %-12zu %-10.3f\n", w, stats.worker_images[w], stats.worker_entries[w],
                    stats.worker_seconds[w]);

    if (!cfg.dump_weights_dir.empty()) {
        fs::create_directories(cfg.dump_weights_dir);
        const std::vector<CameraPose> cameras = load_cameras(manifest.resolve(manifest.camera_file));
        for (const ImageEntry& e : manifest.images) {
            for (const CameraPose& cam : cameras) {
                if (cam.image_id != e.camera_id) continue;
                const WeightMap wm = rasterize_weights_only(
                    scene, camera_scaled_to(cam, manifest.raster_width, manifest.raster_height), options.mode);
                save_weightmap(wm, (fs::path(cfg.dump_weights_dir) / ("wm_" + std::to_string(e.image_id) + ".bin"))
                                       .string());
            }
        }
    }
    return kExitOk;
}

// ------------------------------------------------------------- partition --

int cmd_partition(const RunConfig& cfg) {
    const GaussianScene scene = load_scene(cfg.scene_path);
    const EmbeddingTable table = load_table(cfg.table_path);
    const VectorStore store = build_store(table, scene);
    const std::vector<PartitionSnapshot> snapshots = partition_store(store, cfg.cell_size);

    fs::create_directories(cfg.out_dir);
    std::vector<SnapshotManifestEntry> entries;
    for (const PartitionSnapshot& snap : snapshots) {
        const std::string name = "cell_" + std::to_string(snap.cell.x()) + "_" + std::to_string(snap.cell.y()) +
                                 "_" + std::to_string(snap.cell.z()) + ".snap";
        save_snapshot(snap, (fs::path(cfg.out_dir) / name).string());
        entries.push_back({snap.cell, snap.bounds, snap.store.count(), name});
    }
    save_snapshot_manifest(entries, (fs::path(cfg.out_dir) / "snapshots.txt").string());
    std::printf("records=%zu snapshots=%zu cell_size=%g\n", store.count(), snapshots.size(), cfg.cell_size);
    for (const auto& e : entries)
        std::printf("cell=(%d,%d,%d) count=%" PRIu64 " path=%s\n", e.cell.x(), e.cell.y(), e.cell.z(), e.count,
                    e.path.c_str());
    return kExitOk;
}

// ----------------------------------------------------------------- query --

VectorStore load_query_store(const RunConfig& cfg) {
    if (!cfg.snapshot_manifest.empty()) {
        const fs::path base = fs::path(cfg.snapshot_manifest).parent_path();
        std::vector<PartitionSnapshot> snapshots;
        for (const SnapshotManifestEntry& e : load_snapshot_manifest(cfg.snapshot_manifest))
            snapshots.push_back(load_snapshot((base / e.path).string()));
        if (cfg.radius >= 0.0) {
            const Eigen::Vector3d center(cfg.center[0], cfg.center[1], cfg.center[2]);
            return select_partitions(snapshots, center, cfg.radius);
        }
        return select_partitions(snapshots, Eigen::Vector3d::Zero(),
                                 std::numeric_limits<double>::infinity());
    }
    const GaussianScene scene = load_scene(cfg.scene_path);
    const EmbeddingTable table = load_table(cfg.table_path);
    return build_store(table, scene);
}

int cmd_query(const RunConfig& cfg) {
    const VectorStore store = load_query_store(cfg);
    const TextProvider provider = make_provider(cfg, store.dim() ? store.dim() : kDefaultEmbeddingDim);
    const QueryMode mode = cfg.topk >= 0 ? QueryMode::topk(static_cast<size_t>(cfg.topk))
                                         : QueryMode::threshold(static_cast<float>(cfg.threshold));
    const QueryResult result = run_query(store, cfg.text, mode, provider);

    std::printf("store_records=%zu matches=%zu\n", store.count(), result.matches.size());
    if (!cfg.out_path.empty()) {
        std::ofstream os(cfg.out_path);
        os << "# gaussian_id similarity mean_x mean_y mean_z\n";
        os.precision(9);
        for (const QueryMatch& m : result.matches)
            os << m.gaussian_id << ' ' << m.similarity << ' ' << m.payload.mean.x() << ' '
               << m.payload.mean.y() << ' ' << m.payload.mean.z() << '\n';
    }
    if (!cfg.out_ply.empty()) export_matches_ply(result, cfg.out_ply);
    for (size_t i = 0; i < std::min<size_t>(result.matches.size(), 5); ++i)
        std::printf("match id=%u similarity=%.4f\n", result.matches[i].gaussian_id,
                    result.matches[i].similarity);
    return kExitOk;
}

// ------------------------------------------------------------------ eval --

int eval_binary(const RunConfig& cfg) {
    const GaussianScene scene = load_scene(cfg.scene_path);
    const EmbeddingTable table = load_table(cfg.table_path);
    const DatasetManifest manifest = load_manifest(cfg.manifest_path);
    const std::vector<std::string> labels = read_labels(cfg.labels_path);
    const VectorStore store = build_store(table, scene);
    const TextProvider provider = make_provider(cfg, table.dim);
    const std::vector<CameraPose> cameras = load_cameras(manifest.resolve(manifest.camera_file));

    double iou_sum = 0, acc_sum = 0;
    size_t pairs = 0;
    for (size_t cls = 0; cls < labels.size(); ++cls) {
        const QueryResult result =
            run_query(store, labels[cls], QueryMode::threshold(static_cast<float>(cfg.threshold)), provider);
        for (const ImageEntry& entry : manifest.images) {
            const MaskSet gt =
                load_maskset_file((fs::path(cfg.gt_mask_dir) / ("view_" + std::to_string(entry.image_id) + ".rle"))
                                      .string(),
                                  entry.image_id);
            if (cls >= gt.masks.size()) continue;
            const Mask& gt_mask = gt.masks[cls];
            if (gt_mask.bbox.empty) continue;
            if (gt_mask.bitmap.width != manifest.mask_width || gt_mask.bitmap.height != manifest.mask_height)
                throw CLI::ValidationError("--gt-mask-dir",
                                           "gt mask resolution differs from the manifest mask resolution");
            for (const CameraPose& cam : cameras) {
                if (cam.image_id != entry.camera_id) continue;
                const CameraPose mask_cam = camera_scaled_to(cam, manifest.mask_width, manifest.mask_height);
                const MaskBitmap pred = project_result_to_mask(result, scene, mask_cam,
                                                               static_cast<float>(cfg.alpha_threshold));
                const BinaryMetrics m = binary_metrics(pred, gt_mask.bitmap);
                iou_sum += m.iou;
                if (cfg.binary_acc == "pixelwise") {
                    size_t correct = 0;
                    for (size_t p = 0; p < pred.bits.size(); ++p)
                        correct += (pred.bits[p] != 0) == (gt_mask.bitmap.bits[p] != 0) ? 1 : 0;
                    acc_sum += static_cast<double>(correct) / static_cast<double>(pred.bits.size());
                } else {
                    acc_sum += m.acc;
                }
                ++pairs;
                std::printf("label=%s view=%u iou=%.4f\n", labels[cls].c_str(), entry.image_id, m.iou);
            }
        }
    }
    if (pairs == 0) throw DataError("binary evaluation found no (label, view) pairs with ground truth");
    std::printf("pairs=%zu\nmiou=%.6f\nmacc=%.6f\n", pairs, iou_sum / pairs, acc_sum / pairs);
    return kExitOk;
}

int eval_multiclass(const RunConfig& cfg) {
    const GaussianScene scene = load_scene(cfg.scene_path);
    const EmbeddingTable table = load_table(cfg.table_path);
    const std::vector<std::string> labels = read_labels(cfg.labels_path);
    const TextProvider provider = make_provider(cfg, table.dim);
    const LabeledPointCloud cloud = load_pointcloud(cfg.points_path);

    std::vector<std::pair<int32_t, std::vector<float>>> label_vectors;
    for (size_t c = 0; c < labels.size(); ++c)
        label_vectors.emplace_back(static_cast<int32_t>(c), encode_text(labels[c], provider));

    std::vector<int32_t> subset;
    if (cfg.class_subset.empty())
        for (size_t c = 0; c < labels.size(); ++c) subset.push_back(static_cast<int32_t>(c));
    else
        for (int64_t c : cfg.class_subset) subset.push_back(static_cast<int32_t>(c));

    const std::vector<int32_t> gaussian_classes = assign_classes(table, label_vectors);
    const std::vector<int32_t> point_classes = map_to_points(scene, gaussian_classes, cloud);
    const MulticlassMetrics raw = multiclass_metrics(point_classes, cloud.gt_class, subset);
    std::printf("points=%zu classes=%zu\nmiou=%.6f\nmacc=%.6f\n", cloud.points.size(), subset.size(), raw.miou,
                raw.macc);

    if (!cfg.segments_path.empty()) {
        const SegmentMap segments = load_segments(cfg.segments_path);
        if (segments.segment_ids.size() != point_classes.size())
            throw CLI::ValidationError("--segments", "segment map length differs from the point cloud");
        const std::vector<int32_t> filtered = prediction_filter(point_classes, segments);
        const MulticlassMetrics pf = multiclass_metrics(filtered, cloud.gt_class, subset);
        std::printf("miou_filtered=%.6f\nmacc_filtered=%.6f\n", pf.miou, pf.macc);
    }
    return kExitOk;
}

int cmd_eval(const RunConfig& cfg) {
    if (cfg.protocol == "binary") return eval_binary(cfg);
    if (cfg.protocol == "multiclass") return eval_multiclass(cfg);
    throw CLI::ValidationError("--protocol", "must be 'binary' or 'multiclass'");
}

// ----------------------------------------------------------------- bench --

// Synthetic encode workload: random scene, orbit cameras, random rectangle
// masks with per-image count jitter (the load-imbalance shape of real
// captures), synthetic embeddings.
std::string write_bench_dataset(const RunConfig& cfg, const std::string& dir) {
    std::mt19937_64 rng(cfg.seed);
    auto uniform = [&](double lo, double hi) {
        return lo + (hi - lo) * ((static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53);
    };

    std::vector<Gaussian3D> gaussians(cfg.bench_gaussians);
    for (auto& g : gaussians) {
        g.mean = Eigen::Vector3f(static_cast<float>(uniform(-5, 5)), static_cast<float>(uniform(-5, 5)),
                                 static_cast<float>(uniform(-1, 1)));
        g.scale = Eigen::Vector3f(static_cast<float>(uniform(0.02, 0.05)),
                                  static_cast<float>(uniform(0.02, 0.05)),
                                  static_cast<float>(uniform(0.02, 0.05)));
        Eigen::Quaterniond q(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
        g.rotation = q.normalized().cast<float>();
        g.opacity = static_cast<float>(uniform(0.3, 0.9));
        g.color = Eigen::Vector3f(static_cast<float>(uniform(0, 1)), static_cast<float>(uniform(0, 1)),
                                  static_cast<float>(uniform(0, 1)));
    }
    const GaussianScene scene{std::move(gaussians)};

    fs::create_directories(dir);
    fs::create_directories(fs::path(dir) / "masks");
    fs::create_directories(fs::path(dir) / "embeddings");
    save_scene(scene, (fs::path(dir) / "scene.ply").string());

    const uint32_t res = cfg.bench_resolution;
    std::vector<CameraPose> cameras;
    for (uint32_t v = 0; v < cfg.bench_images; ++v) {
        const double theta = 2.0 * M_PI * v / cfg.bench_images;
        CameraPose cam = semsplat::detail::look_at(
            Eigen::Vector3d(2.0 * std::cos(theta), 2.0 * std::sin(theta), 16.0), Eigen::Vector3d::Zero(), res,
            res, 0.9 * res);
        cam.image_id = v;
        cameras.push_back(cam);
    }
    save_cameras(cameras, (fs::path(dir) / "cameras.txt").string());

    DatasetManifest manifest;
    manifest.root = dir;
    manifest.camera_file = "cameras.txt";
    manifest.mask_width = manifest.mask_height = res;
    manifest.raster_width = manifest.raster_height = res;
    manifest.embedding_dim = cfg.bench_dim;

    for (uint32_t v = 0; v < cfg.bench_images; ++v) {
        // mask-count jitter mimics the per-image segment variance
        const uint32_t masks = std::max<uint32_t>(
            1, static_cast<uint32_t>(uniform(0.5, 1.5) * cfg.bench_masks_per_image));
        MaskSet set;
        set.image_id = v;
        std::vector<std::vector<float>> embeddings;
        for (uint32_t j = 0; j < masks; ++j) {
            Mask m;
            m.mask_id = j;
            m.bitmap = MaskBitmap(res, res);
            const uint32_t x0 = static_cast<uint32_t>(uniform(0, res / 2)),
                           y0 = static_cast<uint32_t>(uniform(0, res / 2));
            const uint32_t x1 = x0 + static_cast<uint32_t>(uniform(4, res / 2)),
                           y1 = y0 + static_cast<uint32_t>(uniform(4, res / 2));
            for (uint32_t y = y0; y <= std::min(res - 1, y1); ++y)
                for (uint32_t x = x0; x <= std::min(res - 1, x1); ++x) m.bitmap.set(x, y, 1);
            m.bbox = tight_bbox(m.bitmap);
            set.masks.push_back(std::move(m));
            embeddings.push_back(synth_embedding("bench_" + std::to_string(v) + "_" + std::to_string(j),
                                                 cfg.bench_dim));
        }
        const std::string mask_rel = "masks/" + std::to_string(v) + ".rle";
        const std::string emb_rel = "embeddings/" + std::to_string(v) + ".emb";
        save_maskset_file(set, res, res, (fs::path(dir) / mask_rel).string());
        save_mask_embeddings(embeddings, cfg.bench_dim, (fs::path(dir) / emb_rel).string());
        manifest.images.push_back({v, "-", v, mask_rel, emb_rel}); // "-": no rgb asset
    }
    const std::string manifest_path = (fs::path(dir) / "manifest.txt").string();
    save_manifest(manifest, manifest_path);
    return manifest_path;
}

int cmd_bench(const RunConfig& cfg) {
    const std::string dir = cfg.out_dir.empty() ? (fs::temp_directory_path() / "semsplat_bench").string()
                                                : cfg.out_dir;
    std::printf("hardware_threads=%u\n", std::thread::hardware_concurrency());

    // --- encode throughput across worker counts ---
    const double gen_start = now_seconds();
    const std::string manifest_path = write_bench_dataset(cfg, dir);
    const DatasetManifest manifest = load_manifest(manifest_path);
    const GaussianScene scene = load_scene(manifest.resolve("scene.ply"));
    std::printf("dataset_seconds=%.3f gaussians=%" PRIu64 " images=%u resolution=%u dim=%u\n",
                now_seconds() - gen_start, static_cast<uint64_t>(scene.size()), cfg.bench_images,
                cfg.bench_resolution, cfg.bench_dim);

    double baseline = 0.0;
    for (uint32_t workers : cfg.bench_workers) {
        const double start = now_seconds();
        const EmbeddingTable table = encode_scene(scene, manifest, workers, cfg.chunk_rows);
        const double seconds = now_seconds() - start;
        if (workers == 1) baseline = seconds;
        uint64_t hash = 0xcbf29ce484222325ull;
        hash = fnv_bytes(hash, table.embeddings.data(), table.embeddings.size() * sizeof(float));
        hash = fnv_bytes(hash, table.coverage.data(), table.coverage.size() * sizeof(float));
        std::printf("encode workers=%u seconds=%.3f speedup=%.2f result_hash=%016" PRIx64 "\n", workers,
                    seconds, baseline > 0 ? baseline / seconds : 0.0, hash);
    }

    // --- query latency across store sizes ---
    std::mt19937_64 rng(cfg.seed ^ 0xbe9c);
    for (uint64_t size : cfg.bench_store_sizes) {
        VectorStore store(cfg.bench_store_dim);
        store.reserve(size);
        std::vector<float> v(cfg.bench_store_dim);
        for (uint64_t i = 0; i < size; ++i) {
            for (auto& x : v) x = static_cast<float>((static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53 - 0.5);
            Gaussian3D g;
            g.mean = Eigen::Vector3f(static_cast<float>(i % 100), static_cast<float>((i / 100) % 100),
                                     static_cast<float>(i / 10000));
            store.add_record(static_cast<uint32_t>(i), normalized_copy(v.data(), v.size()), g);
        }
        for (const char* mode : {"topk", "threshold"}) {
            double total = 0, worst = 0;
            uint64_t hash = 0xcbf29ce484222325ull;
            size_t returned = 0;
            for (uint32_t q = 0; q < cfg.bench_queries; ++q) {
                for (auto& x : v)
                    x = static_cast<float>((static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53 - 0.5);
                const double start = now_seconds();
                std::vector<ScoredId> res;
                if (std::string(mode) == "topk") {
                    res = query_topk(store, v, cfg.bench_query_k);
                } else {
                    // tau calibrated so a random query returns about bench_query_k records
                    const double frac =
                        std::min(0.5, static_cast<double>(cfg.bench_query_k) / static_cast<double>(size));
                    double z = 1.0; // invert erfc(z) = 2*frac by Newton iteration
                    for (int it = 0; it < 40; ++it) {
                        const double f = std::erfc(z) - 2.0 * frac;
                        const double df = -2.0 / std::sqrt(M_PI) * std::exp(-z * z);
                        z -= f / df;
                    }
                    const float tau =
                        static_cast<float>(std::sqrt(2.0) * z / std::sqrt(static_cast<double>(cfg.bench_store_dim)));
                    res = query_threshold(store, v, tau);
                }
                const double seconds = now_seconds() - start;
                total += seconds;
                worst = std::max(worst, seconds);
                returned += res.size();
                for (const ScoredId& s : res) hash = fnv_bytes(hash, &s.gaussian_id, sizeof(s.gaussian_id));
            }
            std::printf("query size=%" PRIu64 " dim=%u mode=%s k=%" PRIu64
                        " avg_seconds=%.4f max_seconds=%.4f avg_returned=%zu result_hash=%016" PRIx64 "\n",
                        size, cfg.bench_store_dim, mode, cfg.bench_query_k, total / cfg.bench_queries, worst,
                        returned / cfg.bench_queries, hash);
        }
    }
    return kExitOk;
}

// ----------------------------------------------------------------- crops --

// Writes the white-background crop PNGs an external image embedder consumes.
int cmd_crops(const RunConfig& cfg, uint32_t image_id) {
    const DatasetManifest manifest = load_manifest(cfg.manifest_path);
    const ImageEntry& entry = manifest.entry(image_id);
    const ImageRGB image = load_ppm(manifest.resolve(entry.rgb_path), image_id);
    if (image.width != manifest.mask_width || image.height != manifest.mask_height)
        throw DataError("rgb image resolution differs from the manifest mask resolution");
    const MaskSet masks = load_maskset(manifest, image_id);
    const CropResult result = prepare_crops(image, masks, cfg.out_dir);
    std::printf("crops=%zu skipped=%zu\n", result.files.size(), result.skipped_mask_ids.size());
    for (uint32_t id : result.skipped_mask_ids) std::printf("skipped_empty_mask=%u\n", id);
    return kExitOk;
}

// --------------------------------------------------------------- fixture --

int cmd_fixture(const RunConfig& cfg) {
    FixtureSpec spec;
    spec.object_count = cfg.fx_objects;
    spec.gaussians_per_object = cfg.fx_per_object;
    spec.view_count = cfg.fx_views;
    spec.resolution = cfg.fx_resolution;
    spec.mask_scale = cfg.fx_mask_scale;
    spec.embedding_dim = cfg.fx_dim;
    spec.seed = cfg.seed;
    const SyntheticFixture fx = generate_fixture(spec);
    const std::string manifest_path = write_fixture(fx, cfg.out_dir);
    std::printf("manifest=%s gaussians=%" PRIu64 " objects=%u views=%u\n", manifest_path.c_str(),
                static_cast<uint64_t>(fx.scene.size()), spec.object_count, spec.view_count);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"language-embedded gaussian splatting pipeline"};
    app.require_subcommand(1);
    RunConfig cfg;

    auto add_config_file = [](CLI::App* sub) {
        sub->set_config("--config", "", "read options from an INI config file");
    };

    CLI::App* encode = app.add_subcommand("encode", "compute the per-gaussian embedding table");
    encode->add_option("--scene", cfg.scene_path, "scene PLY")->required()->check(CLI::ExistingFile);
    encode->add_option("--manifest", cfg.manifest_path, "dataset manifest")->required()->check(CLI::ExistingFile);
    encode->add_option("--out", cfg.out_path, "output embedding table")->required();
    encode->add_option("--workers", cfg.workers, "worker count")->check(CLI::Range(1, 1024));
    encode->add_option("--chunk-rows", cfg.chunk_rows, "aggregation chunk rows (0 = unlimited)");
    encode->add_flag("--literal-eq2", cfg.literal_eq2, "capture falloff-only weights (comparison mode)");
    encode->add_flag("--contiguous", cfg.contiguous, "contiguous image batching instead of round-robin");
    encode->add_option("--spill-mb", cfg.spill_mb, "spill masked weights to disk above this many MB");
    encode->add_option("--dump-weights", cfg.dump_weights_dir, "also dump per-view weight maps here");
    add_config_file(encode);

    CLI::App* partition = app.add_subcommand("partition", "build and spatially partition the vector store");
    partition->add_option("--scene", cfg.scene_path, "scene PLY")->required()->check(CLI::ExistingFile);
    partition->add_option("--table", cfg.table_path, "embedding table")->required()->check(CLI::ExistingFile);
    partition->add_option("--out-dir", cfg.out_dir, "snapshot output directory")->required();
    partition->add_option("--cell-size", cfg.cell_size, "partition cell size (world units)")
        ->required()
        ->check(CLI::PositiveNumber);
    add_config_file(partition);

    CLI::App* query = app.add_subcommand("query", "text query against a store or snapshots");
    query->add_option("--scene", cfg.scene_path, "scene PLY (with --table)")->check(CLI::ExistingFile);
    query->add_option("--table", cfg.table_path, "embedding table (with --scene)")->check(CLI::ExistingFile);
    query->add_option("--snapshots", cfg.snapshot_manifest, "snapshot manifest from 'partition'")->check(CLI::ExistingFile);
    query->add_option("--text", cfg.text, "query text")->required();
    query->add_option("--topk", cfg.topk, "return the top k matches");
    query->add_option("--threshold", cfg.threshold, "cosine threshold (default mode)");
    query->add_option("--center", cfg.center, "query center x y z (snapshot selection)")->expected(3);
    query->add_option("--radius", cfg.radius, "selection radius around --center");
    query->add_option("--lookup", cfg.lookup_path, "label -> vector lookup table file")->check(CLI::ExistingFile);
    query->add_flag("--synthetic-fallback", cfg.synthetic_fallback,
                    "fall back to synthetic vectors for labels missing from --lookup");
    query->add_option("--out", cfg.out_path, "write matches as text");
    query->add_option("--out-ply", cfg.out_ply, "write matched gaussians as PLY");
    add_config_file(query);

    CLI::App* eval = app.add_subcommand("eval", "binary or multiclass open-vocabulary evaluation");
    eval->add_option("--protocol", cfg.protocol, "binary | multiclass")->required();
    eval->add_option("--scene", cfg.scene_path, "scene PLY")->required()->check(CLI::ExistingFile);
    eval->add_option("--table", cfg.table_path, "embedding table")->required()->check(CLI::ExistingFile);
    eval->add_option("--manifest", cfg.manifest_path, "dataset manifest (binary protocol)")->check(CLI::ExistingFile);
    eval->add_option("--labels", cfg.labels_path, "label list, one per line")->required()->check(CLI::ExistingFile);
    eval->add_option("--gt-mask-dir", cfg.gt_mask_dir, "per-view gt mask files view_<id>.rle");
    eval->add_option("--points", cfg.points_path, "labeled point cloud (multiclass)")->check(CLI::ExistingFile);
    eval->add_option("--segments", cfg.segments_path, "segment map for prediction filtering")->check(CLI::ExistingFile);
    eval->add_option("--class-subset", cfg.class_subset, "class ids to evaluate")->delimiter(',');
    eval->add_option("--threshold", cfg.threshold, "retrieval cosine threshold");
    eval->add_option("--alpha-threshold", cfg.alpha_threshold, "2D projection opacity threshold");
    eval->add_option("--binary-acc", cfg.binary_acc, "localization | pixelwise");
    eval->add_option("--lookup", cfg.lookup_path, "label -> vector lookup table file")->check(CLI::ExistingFile);
    eval->add_flag("--synthetic-fallback", cfg.synthetic_fallback, "lookup misses fall back to synthetic");
    add_config_file(eval);

    CLI::App* bench = app.add_subcommand("bench", "synthetic encode throughput and query latency");
    bench->add_option("--gaussians", cfg.bench_gaussians, "scene size");
    bench->add_option("--images", cfg.bench_images, "image count");
    bench->add_option("--resolution", cfg.bench_resolution, "raster resolution");
    bench->add_option("--masks-per-image", cfg.bench_masks_per_image, "average masks per image");
    bench->add_option("--dim", cfg.bench_dim, "embedding dimension for the encode phase");
    bench->add_option("--workers", cfg.bench_workers, "worker counts to measure")->delimiter(',');
    bench->add_option("--store-sizes", cfg.bench_store_sizes, "query store sizes")->delimiter(',');
    bench->add_option("--store-dim", cfg.bench_store_dim, "query store dimension");
    bench->add_option("--queries", cfg.bench_queries, "queries per configuration");
    bench->add_option("--query-k", cfg.bench_query_k, "top-k / expected match count");
    bench->add_option("--chunk-rows", cfg.chunk_rows, "aggregation chunk rows");
    bench->add_option("--out-dir", cfg.out_dir, "workload directory (default: temp)");
    bench->add_option("--seed", cfg.seed, "workload seed");
    add_config_file(bench);

    uint32_t crops_image_id = 0;
    CLI::App* crops = app.add_subcommand("crops", "write white-background mask crops for one image");
    crops->add_option("--manifest", cfg.manifest_path, "dataset manifest")->required()->check(CLI::ExistingFile);
    crops->add_option("--image-id", crops_image_id, "image to crop")->required();
    crops->add_option("--out-dir", cfg.out_dir, "output directory")->required();
    add_config_file(crops);

    CLI::App* fixture = app.add_subcommand("fixture", "write a synthetic labeled dataset");
    fixture->add_option("--out-dir", cfg.out_dir, "output directory")->required();
    fixture->add_option("--objects", cfg.fx_objects, "object count");
    fixture->add_option("--per-object", cfg.fx_per_object, "gaussians per object");
    fixture->add_option("--views", cfg.fx_views, "view count");
    fixture->add_option("--resolution", cfg.fx_resolution, "raster resolution");
    fixture->add_option("--mask-scale", cfg.fx_mask_scale, "mask resolution multiplier");
    fixture->add_option("--dim", cfg.fx_dim, "embedding dimension");
    fixture->add_option("--seed", cfg.seed, "generation seed");
    add_config_file(fixture);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (encode->parsed()) {
            write_resolved_config(*encode, cfg.out_path);
            return cmd_encode(cfg);
        }
        if (partition->parsed()) {
            write_resolved_config(*partition, (fs::path(cfg.out_dir) / "partition").string());
            return cmd_partition(cfg);
        }
        if (query->parsed()) {
            if (cfg.snapshot_manifest.empty() && (cfg.scene_path.empty() || cfg.table_path.empty())) {
                std::fprintf(stderr, "query needs --snapshots or both --scene and --table\n");
                return kExitUsage;
            }
            if (cfg.radius >= 0.0 && cfg.center.size() != 3) {
                std::fprintf(stderr, "--radius needs --center x y z\n");
                return kExitUsage;
            }
            if (!cfg.out_path.empty()) write_resolved_config(*query, cfg.out_path);
            return cmd_query(cfg);
        }
        if (eval->parsed()) {
            if (cfg.protocol == "binary" && (cfg.manifest_path.empty() || cfg.gt_mask_dir.empty())) {
                std::fprintf(stderr, "binary protocol needs --manifest and --gt-mask-dir\n");
                return kExitUsage;
            }
            if (cfg.protocol == "multiclass" && cfg.points_path.empty()) {
                std::fprintf(stderr, "multiclass protocol needs --points\n");
                return kExitUsage;
            }
            return cmd_eval(cfg);
        }
        if (bench->parsed()) return cmd_bench(cfg);
        if (crops->parsed()) return cmd_crops(cfg, crops_image_id);
        if (fixture->parsed()) {
            write_resolved_config(*fixture, (fs::path(cfg.out_dir) / "fixture").string());
            return cmd_fixture(cfg);
        }
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const LookupError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const PipelineError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        for (const std::string& s : e.worker_status) std::fprintf(stderr, "  %s\n", s.c_str());
        return e.caused_by_data ? kExitData : kExitInternal;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return kExitInternal;
    }
    return kExitUsage;
}
