#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "semsplat/core.hpp"
#include "semsplat/projection.hpp"
#include "semsplat/scene.hpp"

namespace semsplat {

/// Contributions below this weight are dropped (display precision).
inline constexpr double kWeightCutoff = 1.0 / 255.0;
/// Per-splat alpha saturates here, as in reference splatting rasterizers.
inline constexpr double kAlphaMax = 0.99;
/// Splats with alpha below this neither occlude nor emit entries.
inline constexpr double kAlphaSkip = 1.0 / 255.0;
/// Front-to-back traversal stops once transmittance falls below this.
inline constexpr double kTransmittanceFloor = 1e-4;
/// Weights vanish outside the 3-sigma ellipse (squared Mahalanobis 9);
/// keeps tiled and naive traversals bit-identical.
inline constexpr double kMahalanobisSqCutoff = 9.0;
/// Pixels whose captured weight total falls below this render as background.
inline constexpr double kRenderTotalEps = 1e-6;

inline constexpr uint32_t kTileSize = 16;

/// How captured weights are defined.
enum class WeightMode {
    kAlphaComposited, ///< w = min(0.99, opacity*g) * transmittance (default)
    kFalloffOnly,     ///< w = g, ignoring opacity and occlusion (comparison mode)
};

/// One captured contribution: Gaussian `gaussian_id` added `weight` to the
/// linear pixel index `pixel`.
struct WeightEntry {
    uint32_t gaussian_id = 0;
    uint32_t pixel = 0;
    float weight = 0.0f;
};

/// Sparse per-view contribution weights, sorted by (pixel, front-to-back
/// rank). per_pixel_total[p] is the sum of that pixel's entry weights.
struct WeightMap {
    uint32_t image_id = 0;
    uint32_t width = 0, height = 0;
    std::vector<WeightEntry> entries;
    std::vector<float> per_pixel_total;
};

struct RenderResult {
    ImageRGB image;
    WeightMap weights;
    std::vector<float> alpha; ///< accumulated opacity 1 - T_final per pixel
};

/// Inverse 2x2 screen covariance (a=inv_xx, b=inv_xy, c=inv_yy).
struct Conic {
    double a = 0, b = 0, c = 0;
};

inline Conic conic_of(const Projected2D& proj) {
    const double det = proj.cov_xx * proj.cov_yy - proj.cov_xy * proj.cov_xy;
    if (det < 1e-12) throw NumericError("singular screen covariance for gaussian " +
                                        std::to_string(proj.gaussian_id));
    return {proj.cov_yy / det, -proj.cov_xy / det, proj.cov_xx / det};
}

inline double mahalanobis_sq(const Conic& conic, double dx, double dy) {
    return conic.a * dx * dx + 2.0 * conic.b * dx * dy + conic.c * dy * dy;
}

/// Contribution weight of one projected Gaussian at a pixel, given the
/// transmittance accumulated in front of it. Returns 0 once the value falls
/// below kWeightCutoff or the pixel leaves the 3-sigma ellipse.
inline double gaussian_weight_at(const Projected2D& proj, double opacity, const Eigen::Vector2d& pixel,
                                 double transmittance, WeightMode mode = WeightMode::kAlphaComposited) {
    const Conic conic = conic_of(proj);
    const double d2 = mahalanobis_sq(conic, pixel.x() - proj.mu2d.x(), pixel.y() - proj.mu2d.y());
    if (d2 > kMahalanobisSqCutoff) return 0.0;
    const double g = std::exp(-0.5 * d2);
    double w;
    if (mode == WeightMode::kAlphaComposited) {
        const double alpha = std::min(kAlphaMax, opacity * g);
        w = alpha * transmittance;
    } else {
        w = g;
    }
    return w < kWeightCutoff ? 0.0 : w;
}

namespace detail {

struct SplatRecord {
    Conic conic;
    double mu_x, mu_y;
    double opacity;
    Eigen::Vector3d color;
    uint32_t gaussian_id;
    int32_t x0, x1, y0, y1; // inclusive pixel bounds of the (padded) 3-sigma box
};

// Front-to-back compositing of one pixel against a candidate list. The
// candidates must already be in depth order. Transmittance updates apply to
// every splat with alpha >= kAlphaSkip even when its entry is dropped by the
// weight cutoff, so occlusion stays independent of the cutoff. Returns the
// final transmittance.
template <typename CandidateRange, typename Emit>
inline double composite_pixel(int32_t px, int32_t py, const CandidateRange& splats, WeightMode mode,
                              Emit&& emit) {
    double transmittance = 1.0;
    for (const SplatRecord& s : splats) {
        if (px < s.x0 || px > s.x1 || py < s.y0 || py > s.y1) continue;
        const double d2 = mahalanobis_sq(s.conic, px - s.mu_x, py - s.mu_y);
        if (d2 > kMahalanobisSqCutoff) continue;
        const double g = std::exp(-0.5 * d2);
        if (mode == WeightMode::kAlphaComposited) {
            const double alpha = std::min(kAlphaMax, s.opacity * g);
            if (alpha < kAlphaSkip) continue;
            const double w = alpha * transmittance;
            if (w >= kWeightCutoff) emit(s, w);
            transmittance *= 1.0 - alpha;
            if (transmittance < kTransmittanceFloor) break;
        } else {
            if (g >= kWeightCutoff) emit(s, g);
        }
    }
    return transmittance;
}

} // namespace detail

namespace detail {

inline RenderResult rasterize_impl(const GaussianScene& scene, const CameraPose& cam, WeightMode mode,
                                   bool want_color) {
    const uint32_t width = cam.width, height = cam.height;
    RenderResult out;
    out.weights.image_id = cam.image_id;
    out.weights.width = width;
    out.weights.height = height;
    out.weights.per_pixel_total.assign(static_cast<size_t>(width) * height, 0.0f);
    out.alpha.assign(static_cast<size_t>(width) * height, 0.0f);
    if (want_color) out.image = ImageRGB(cam.image_id, width, height);

    std::vector<Projected2D> projected;
    projected.reserve(scene.size());
    for (const Gaussian3D& g : scene.gaussians()) {
        Projected2D p = project_gaussian(g, cam);
        if (p.visible) projected.push_back(p);
    }
    depth_sort(projected);

    std::vector<SplatRecord> splats;
    splats.reserve(projected.size());
    for (const Projected2D& p : projected) {
        SplatRecord s;
        s.conic = conic_of(p);
        s.mu_x = p.mu2d.x();
        s.mu_y = p.mu2d.y();
        const Gaussian3D& g = scene[p.gaussian_id];
        s.opacity = g.opacity;
        s.color = g.color.cast<double>();
        s.gaussian_id = p.gaussian_id;
        // Padded by one pixel so floating-point rounding at the ellipse
        // boundary can never drop a pixel the 3-sigma test would accept.
        const double rx = 3.0 * std::sqrt(p.cov_xx) + 1.0;
        const double ry = 3.0 * std::sqrt(p.cov_yy) + 1.0;
        s.x0 = std::max<int32_t>(0, static_cast<int32_t>(std::ceil(s.mu_x - rx)));
        s.x1 = std::min<int32_t>(static_cast<int32_t>(width) - 1, static_cast<int32_t>(std::floor(s.mu_x + rx)));
        s.y0 = std::max<int32_t>(0, static_cast<int32_t>(std::ceil(s.mu_y - ry)));
        s.y1 = std::min<int32_t>(static_cast<int32_t>(height) - 1, static_cast<int32_t>(std::floor(s.mu_y + ry)));
        if (s.x0 > s.x1 || s.y0 > s.y1) continue;
        splats.push_back(s);
    }

    // Bin depth-ordered splats into 16x16 tiles; order within a tile stays
    // front-to-back because binning walks the sorted list.
    const uint32_t tiles_x = (width + kTileSize - 1) / kTileSize;
    const uint32_t tiles_y = (height + kTileSize - 1) / kTileSize;
    std::vector<std::vector<uint32_t>> tile_bins(static_cast<size_t>(tiles_x) * tiles_y);
    for (uint32_t idx = 0; idx < splats.size(); ++idx) {
        const SplatRecord& s = splats[idx];
        const uint32_t tx0 = static_cast<uint32_t>(s.x0) / kTileSize;
        const uint32_t tx1 = static_cast<uint32_t>(s.x1) / kTileSize;
        const uint32_t ty0 = static_cast<uint32_t>(s.y0) / kTileSize;
        const uint32_t ty1 = static_cast<uint32_t>(s.y1) / kTileSize;
        for (uint32_t ty = ty0; ty <= ty1; ++ty)
            for (uint32_t tx = tx0; tx <= tx1; ++tx) tile_bins[static_cast<size_t>(ty) * tiles_x + tx].push_back(idx);
    }

    struct TileSplatView {
        const std::vector<SplatRecord>* splats;
        const std::vector<uint32_t>* indices;
        struct Iter {
            const std::vector<SplatRecord>* splats;
            const uint32_t* p;
            const SplatRecord& operator*() const { return (*splats)[*p]; }
            Iter& operator++() {
                ++p;
                return *this;
            }
            bool operator!=(const Iter& o) const { return p != o.p; }
        };
        Iter begin() const { return {splats, indices->data()}; }
        Iter end() const { return {splats, indices->data() + indices->size()}; }
    };

    for (uint32_t ty = 0; ty < tiles_y; ++ty) {
        for (uint32_t tx = 0; tx < tiles_x; ++tx) {
            const std::vector<uint32_t>& bin = tile_bins[static_cast<size_t>(ty) * tiles_x + tx];
            if (bin.empty()) continue;
            const TileSplatView view{&splats, &bin};
            const uint32_t y_end = std::min(height, (ty + 1) * kTileSize);
            const uint32_t x_end = std::min(width, (tx + 1) * kTileSize);
            for (uint32_t y = ty * kTileSize; y < y_end; ++y) {
                for (uint32_t x = tx * kTileSize; x < x_end; ++x) {
                    const uint32_t pixel = y * width + x;
                    double weight_total = 0.0;
                    Eigen::Vector3d color_sum = Eigen::Vector3d::Zero();
                    const double t_final =
                        composite_pixel(static_cast<int32_t>(x), static_cast<int32_t>(y), view, mode,
                                        [&](const SplatRecord& s, double w) {
                                            const float wf = static_cast<float>(w);
                                            out.weights.entries.push_back({s.gaussian_id, pixel, wf});
                                            weight_total += wf;
                                            if (want_color) color_sum += static_cast<double>(wf) * s.color;
                                        });
                    out.weights.per_pixel_total[pixel] = static_cast<float>(weight_total);
                    out.alpha[pixel] = static_cast<float>(1.0 - t_final);
                    if (want_color) {
                        float* px = out.image.at(x, y);
                        if (weight_total > kRenderTotalEps) {
                            const Eigen::Vector3d c = color_sum / weight_total;
                            px[0] = static_cast<float>(c.x());
                            px[1] = static_cast<float>(c.y());
                            px[2] = static_cast<float>(c.z());
                        } // else keep background (0,0,0)
                    }
                }
            }
        }
    }

    // Tile-major emission order -> global (pixel, rank) order.
    std::stable_sort(out.weights.entries.begin(), out.weights.entries.end(),
                     [](const WeightEntry& a, const WeightEntry& b) { return a.pixel < b.pixel; });
    return out;
}

} // namespace detail

/// Renders the scene and captures per-pixel contribution weights. Pixel p is
/// sampled at integer coordinates (x, y); pixel color is the normalized
/// weighted blend of the captured contributions, black where nothing above
/// threshold was captured.
inline RenderResult rasterize(const GaussianScene& scene, const CameraPose& cam,
                              WeightMode mode = WeightMode::kAlphaComposited) {
    return detail::rasterize_impl(scene, cam, mode, /*want_color=*/true);
}

/// Weight capture without the color path; the WeightMap is identical to
/// rasterize()'s on the same inputs.
inline WeightMap rasterize_weights_only(const GaussianScene& scene, const CameraPose& cam,
                                        WeightMode mode = WeightMode::kAlphaComposited) {
    return std::move(detail::rasterize_impl(scene, cam, mode, /*want_color=*/false).weights);
}

// -------- WeightMap debug dump: header + [u32 pixel][u32 gid][f32 w] --------

inline constexpr uint32_t kWeightMapMagic = 0x50444D57; // "WMDP"

inline void save_weightmap(const WeightMap& wm, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write weight map: " + path);
    detail::write_le<uint32_t>(os, kWeightMapMagic);
    detail::write_le<uint32_t>(os, wm.image_id);
    detail::write_le<uint32_t>(os, wm.width);
    detail::write_le<uint32_t>(os, wm.height);
    detail::write_le<uint64_t>(os, wm.entries.size());
    for (const WeightEntry& e : wm.entries) {
        detail::write_le<uint32_t>(os, e.pixel);
        detail::write_le<uint32_t>(os, e.gaussian_id);
        detail::write_le<float>(os, e.weight);
    }
    if (!os) throw IoError("write failed: " + path);
}

inline WeightMap load_weightmap(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open weight map: " + path);
    if (detail::read_le<uint32_t>(is) != kWeightMapMagic) throw FormatError("bad weight map magic: " + path);
    WeightMap wm;
    wm.image_id = detail::read_le<uint32_t>(is);
    wm.width = detail::read_le<uint32_t>(is);
    wm.height = detail::read_le<uint32_t>(is);
    const uint64_t count = detail::read_le<uint64_t>(is);
    wm.entries.resize(count);
    std::vector<double> totals(static_cast<size_t>(wm.width) * wm.height, 0.0);
    for (WeightEntry& e : wm.entries) {
        e.pixel = detail::read_le<uint32_t>(is);
        e.gaussian_id = detail::read_le<uint32_t>(is);
        e.weight = detail::read_le<float>(is);
        if (e.pixel >= totals.size()) throw FormatError("weight map entry pixel out of range: " + path);
        totals[e.pixel] += e.weight;
    }
    wm.per_pixel_total.resize(totals.size());
    for (size_t i = 0; i < totals.size(); ++i) wm.per_pixel_total[i] = static_cast<float>(totals[i]);
    return wm;
}

} // namespace semsplat
