#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "semsplat/eval.hpp"
#include "semsplat/image_io.hpp"
#include "semsplat/pipeline.hpp"
#include "semsplat/providers.hpp"
#include "semsplat/rasterizer.hpp"
#include "semsplat/scene.hpp"
#include "semsplat/scene_io.hpp"

namespace semsplat {

struct FixtureSpec {
    uint32_t object_count = 5;
    uint32_t gaussians_per_object = 200;
    uint32_t view_count = 8;
    uint32_t resolution = 128; ///< square raster resolution
    uint32_t mask_scale = 1;   ///< mask resolution = mask_scale * resolution
    uint32_t embedding_dim = kDefaultEmbeddingDim;
    uint64_t seed = 1;
};

/// Synthetic scene with known per-Gaussian object labels, orbit cameras,
/// exact per-object footprint masks, and synthetic embeddings. Objects are
/// placed so their screen footprints never overlap in any view, which forces
/// pure per-object embeddings through the pipeline.
struct SyntheticFixture {
    FixtureSpec spec;
    GaussianScene scene;
    std::vector<int32_t> gaussian_object; // object index per Gaussian
    std::vector<std::string> labels;      // per object; class id = index
    std::vector<CameraPose> cameras;      // defined at mask resolution
    std::vector<MaskSet> masksets;        // per view; mask_id = object index
    std::vector<std::vector<std::vector<float>>> embeddings; // [view][mask]
    LabeledPointCloud point_cloud; // means + noise, gt = object index
    SegmentMap segments;           // object index per point (gt-aligned)
};

namespace detail {

class FixtureRng {
public:
    explicit FixtureRng(uint64_t seed) : rng_(seed) {}

    double uniform01() { return (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
    double normal() {
        const double u1 = uniform01(), u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

private:
    std::mt19937_64 rng_;
};

/// World-to-camera pose looking from `eye` toward `target`, +z forward,
/// +y down in image space.
inline CameraPose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, uint32_t width,
                          uint32_t height, double focal) {
    const Eigen::Vector3d forward = (target - eye).normalized();
    Eigen::Vector3d up_hint(0, 1, 0);
    if (std::abs(forward.dot(up_hint)) > 0.99) up_hint = Eigen::Vector3d(1, 0, 0);
    const Eigen::Vector3d right = forward.cross(up_hint).normalized();
    const Eigen::Vector3d down = forward.cross(right);

    CameraPose cam;
    cam.rotation.row(0) = right;
    cam.rotation.row(1) = down;
    cam.rotation.row(2) = forward;
    cam.translation = -(cam.rotation * eye);
    cam.fx = cam.fy = focal;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    return cam;
}

} // namespace detail

inline SyntheticFixture generate_fixture(const FixtureSpec& spec) {
    if (spec.object_count == 0 || spec.gaussians_per_object == 0 || spec.view_count == 0 ||
        spec.resolution == 0)
        throw ContractError("generate_fixture: spec values must be positive");

    detail::FixtureRng rng(spec.seed ^ 0x66697874ull);

    // Flat discs of Gaussians on a ring, viewed from a high orbit: screen
    // footprints stay disjoint and per-pixel stacking stays shallow enough
    // that essentially every Gaussian is captured in some view.
    const double ring_radius = 4.0;
    const double disc_radius = 1.3;
    const double camera_height = 14.0;
    const double camera_orbit = 1.2;

    SyntheticFixture fx;
    fx.spec = spec;

    std::vector<Gaussian3D> gaussians;
    gaussians.reserve(static_cast<size_t>(spec.object_count) * spec.gaussians_per_object);
    for (uint32_t o = 0; o < spec.object_count; ++o) {
        const double theta = 2.0 * M_PI * o / spec.object_count;
        const Eigen::Vector3d center(ring_radius * std::cos(theta), ring_radius * std::sin(theta), 0.0);
        const Eigen::Vector3d base_color(0.5 + 0.5 * std::cos(theta), 0.5 + 0.5 * std::sin(theta), 0.5);
        for (uint32_t i = 0; i < spec.gaussians_per_object; ++i) {
            // uniform over the disc
            const double r = disc_radius * std::sqrt(rng.uniform01());
            const double phi = rng.uniform(0, 2.0 * M_PI);
            Gaussian3D g;
            g.mean = (center + Eigen::Vector3d(r * std::cos(phi), r * std::sin(phi),
                                               rng.uniform(-0.02, 0.02)))
                         .cast<float>();
            g.scale = Eigen::Vector3f(static_cast<float>(rng.uniform(0.05, 0.09)),
                                      static_cast<float>(rng.uniform(0.05, 0.09)),
                                      static_cast<float>(rng.uniform(0.05, 0.09)));
            Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
            g.rotation = q.normalized().cast<float>();
            g.opacity = static_cast<float>(rng.uniform(0.55, 0.75));
            for (int c = 0; c < 3; ++c)
                g.color[c] = static_cast<float>(std::clamp(base_color[c] + rng.uniform(-0.1, 0.1), 0.0, 1.0));
            gaussians.push_back(g);
            fx.gaussian_object.push_back(static_cast<int32_t>(o));
        }
        fx.labels.push_back("object_" + std::to_string(o));
    }
    fx.scene = GaussianScene(std::move(gaussians));

    const uint32_t mask_res = spec.resolution * spec.mask_scale;
    const double focal = 0.9375 * mask_res;
    for (uint32_t v = 0; v < spec.view_count; ++v) {
        const double theta = 2.0 * M_PI * v / spec.view_count + 0.3;
        const Eigen::Vector3d eye(camera_orbit * std::cos(theta), camera_orbit * std::sin(theta),
                                  camera_height);
        CameraPose cam = detail::look_at(eye, Eigen::Vector3d::Zero(), mask_res, mask_res, focal);
        cam.image_id = v;
        fx.cameras.push_back(cam);
    }

    // Per-object subscenes for footprint masks.
    std::vector<std::vector<Gaussian3D>> per_object(spec.object_count);
    for (size_t k = 0; k < fx.scene.size(); ++k)
        per_object[fx.gaussian_object[k]].push_back(fx.scene[k]);

    std::vector<bool> object_seen(spec.object_count, false);
    for (uint32_t v = 0; v < spec.view_count; ++v) {
        MaskSet set;
        set.image_id = v;
        std::vector<std::vector<float>> view_embeddings;
        for (uint32_t o = 0; o < spec.object_count; ++o) {
            const RenderResult render = rasterize(GaussianScene(per_object[o]), fx.cameras[v]);
            Mask m;
            m.mask_id = o;
            m.bitmap = MaskBitmap(mask_res, mask_res);
            for (size_t p = 0; p < render.alpha.size(); ++p)
                m.bitmap.bits[p] = render.alpha[p] > kDefaultAlphaThreshold ? 1 : 0;
            m.bbox = tight_bbox(m.bitmap);
            if (!m.bbox.empty) object_seen[o] = true;
            set.masks.push_back(std::move(m));
            view_embeddings.push_back(synth_embedding(fx.labels[o], spec.embedding_dim));
        }
        // The purity guarantee needs disjoint footprints; validate it.
        for (size_t a = 0; a < set.masks.size(); ++a)
            for (size_t b = a + 1; b < set.masks.size(); ++b) {
                const auto& ba = set.masks[a].bbox;
                const auto& bb = set.masks[b].bbox;
                if (ba.empty || bb.empty) continue;
                const bool disjoint = ba.x1 < bb.x0 || bb.x1 < ba.x0 || ba.y1 < bb.y0 || bb.y1 < ba.y0;
                if (!disjoint)
                    throw ContractError("generate_fixture: object footprints overlap in view " +
                                        std::to_string(v));
            }
        fx.masksets.push_back(std::move(set));
        fx.embeddings.push_back(std::move(view_embeddings));
    }
    for (uint32_t o = 0; o < spec.object_count; ++o)
        if (!object_seen[o])
            throw ContractError("generate_fixture: object " + std::to_string(o) + " is not visible in any view");

    // Point cloud at the means plus noise (sigma = 0.1 x disc radius).
    const double sigma = 0.1 * disc_radius;
    for (size_t k = 0; k < fx.scene.size(); ++k) {
        const Eigen::Vector3f noise(static_cast<float>(sigma * rng.normal()),
                                    static_cast<float>(sigma * rng.normal()),
                                    static_cast<float>(sigma * rng.normal()));
        fx.point_cloud.points.push_back(fx.scene[k].mean + noise);
        fx.point_cloud.gt_class.push_back(fx.gaussian_object[k]);
        fx.segments.segment_ids.push_back(fx.gaussian_object[k]);
    }
    return fx;
}

/// Materializes a fixture as a loadable dataset: scene PLY, camera file,
/// manifest, per-view RGB/mask/embedding files, ground truth, and a text
/// lookup table for the query provider. Returns the manifest path.
inline std::string write_fixture(const SyntheticFixture& fx, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    fs::create_directories(fs::path(dir) / "rgb");
    fs::create_directories(fs::path(dir) / "masks");
    fs::create_directories(fs::path(dir) / "embeddings");
    fs::create_directories(fs::path(dir) / "gt");
    fs::create_directories(fs::path(dir) / "gt" / "masks");

    save_scene(fx.scene, (fs::path(dir) / "scene.ply").string());
    save_cameras(fx.cameras, (fs::path(dir) / "cameras.txt").string());

    DatasetManifest manifest;
    manifest.root = dir;
    manifest.camera_file = "cameras.txt";
    const uint32_t mask_res = fx.spec.resolution * fx.spec.mask_scale;
    manifest.mask_width = manifest.mask_height = mask_res;
    manifest.raster_width = manifest.raster_height = fx.spec.resolution;
    manifest.embedding_dim = fx.spec.embedding_dim;

    for (uint32_t v = 0; v < fx.spec.view_count; ++v) {
        const std::string rgb_rel = "rgb/view_" + std::to_string(v) + ".ppm";
        const std::string mask_rel = "masks/view_" + std::to_string(v) + ".rle";
        const std::string emb_rel = "embeddings/view_" + std::to_string(v) + ".emb";

        const RenderResult render = rasterize(fx.scene, fx.cameras[v]);
        save_ppm(render.image, (fs::path(dir) / rgb_rel).string());
        save_maskset_file(fx.masksets[v], mask_res, mask_res, (fs::path(dir) / mask_rel).string());
        save_mask_embeddings(fx.embeddings[v], fx.spec.embedding_dim, (fs::path(dir) / emb_rel).string());
        // gt masks mirror the dataset masks (exact footprints)
        save_maskset_file(fx.masksets[v], mask_res, mask_res,
                          (fs::path(dir) / "gt" / "masks" / ("view_" + std::to_string(v) + ".rle")).string());

        ImageEntry entry;
        entry.image_id = v;
        entry.camera_id = v;
        entry.rgb_path = rgb_rel;
        entry.mask_path = mask_rel;
        entry.embedding_path = emb_rel;
        manifest.images.push_back(std::move(entry));
    }

    save_pointcloud(fx.point_cloud, (fs::path(dir) / "gt" / "points.txt").string());
    save_segments(fx.segments, (fs::path(dir) / "gt" / "segments.txt").string());

    std::ofstream labels_os((fs::path(dir) / "labels.txt").string());
    for (const std::string& label : fx.labels) labels_os << label << '\n';

    std::ofstream lookup_os((fs::path(dir) / "lookup.txt").string());
    lookup_os.precision(9);
    for (const std::string& label : fx.labels) {
        lookup_os << label << '\t';
        const std::vector<float> vec = synth_embedding(label, fx.spec.embedding_dim);
        for (size_t i = 0; i < vec.size(); ++i) lookup_os << (i ? " " : "") << vec[i];
        lookup_os << '\n';
    }

    const std::string manifest_path = (fs::path(dir) / "manifest.txt").string();
    save_manifest(manifest, manifest_path);
    return manifest_path;
}

} // namespace semsplat
