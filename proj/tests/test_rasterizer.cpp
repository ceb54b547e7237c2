#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "helpers.hpp"
#include "semsplat/rasterizer.hpp"

using namespace semsplat;

namespace {

Projected2D unit_proj(double mu_x, double mu_y) {
    Projected2D p;
    p.mu2d = {mu_x, mu_y};
    p.cov_xx = 1.0;
    p.cov_xy = 0.0;
    p.cov_yy = 1.0;
    p.depth = 1.0;
    p.visible = true;
    return p;
}

struct NaiveResult {
    ImageRGB image;
    WeightMap weights;
};

// All-Gaussians-per-pixel traversal: no tiles, no binning. Per-splat math
// mirrors the documented compositing rule via the public conic helpers.
NaiveResult naive_rasterize(const GaussianScene& scene, const CameraPose& cam) {
    NaiveResult out;
    out.image = ImageRGB(cam.image_id, cam.width, cam.height);
    out.weights.image_id = cam.image_id;
    out.weights.width = cam.width;
    out.weights.height = cam.height;
    out.weights.per_pixel_total.assign(static_cast<size_t>(cam.width) * cam.height, 0.0f);

    std::vector<Projected2D> projected;
    for (const Gaussian3D& g : scene.gaussians()) {
        const Projected2D p = project_gaussian(g, cam);
        if (p.visible) projected.push_back(p);
    }
    depth_sort(projected);
    std::vector<Conic> conics;
    for (const Projected2D& p : projected) conics.push_back(conic_of(p));

    for (uint32_t y = 0; y < cam.height; ++y) {
        for (uint32_t x = 0; x < cam.width; ++x) {
            const uint32_t pixel = y * cam.width + x;
            double transmittance = 1.0;
            double total = 0.0;
            Eigen::Vector3d color_sum = Eigen::Vector3d::Zero();
            for (size_t i = 0; i < projected.size(); ++i) {
                const Projected2D& p = projected[i];
                const double d2 = mahalanobis_sq(conics[i], x - p.mu2d.x(), y - p.mu2d.y());
                if (d2 > kMahalanobisSqCutoff) continue;
                const double g = std::exp(-0.5 * d2);
                const double alpha = std::min(kAlphaMax, scene[p.gaussian_id].opacity * g);
                if (alpha < kAlphaSkip) continue;
                const double w = alpha * transmittance;
                if (w >= kWeightCutoff) {
                    const float wf = static_cast<float>(w);
                    out.weights.entries.push_back({p.gaussian_id, pixel, wf});
                    total += wf;
                    color_sum += static_cast<double>(wf) * scene[p.gaussian_id].color.cast<double>();
                }
                transmittance *= 1.0 - alpha;
                if (transmittance < kTransmittanceFloor) break;
            }
            out.weights.per_pixel_total[pixel] = static_cast<float>(total);
            if (total > kRenderTotalEps) {
                const Eigen::Vector3d c = color_sum / total;
                float* px = out.image.at(x, y);
                px[0] = static_cast<float>(c.x());
                px[1] = static_cast<float>(c.y());
                px[2] = static_cast<float>(c.z());
            }
        }
    }
    return out;
}

GaussianScene axis_scene(std::initializer_list<Gaussian3D> gs) { return GaussianScene(std::vector<Gaussian3D>(gs)); }

CameraPose center_camera(uint32_t res, double focal = 100.0) {
    CameraPose cam;
    cam.fx = cam.fy = focal;
    cam.cx = cam.cy = res / 2.0;
    cam.width = cam.height = res;
    return cam;
}

} // namespace

TEST_CASE("gaussian_weight_at analytic values", "[rasterizer]") {
    const Projected2D p = unit_proj(10.0, 10.0);

    SECTION("at the center the alpha clamp caps the weight at 0.99") {
        CHECK(gaussian_weight_at(p, 1.0, {10.0, 10.0}, 1.0) == Catch::Approx(0.99));
    }
    SECTION("Mahalanobis distance 1 gives exp(-1/2)") {
        CHECK(gaussian_weight_at(p, 1.0, {11.0, 10.0}, 1.0) == Catch::Approx(std::exp(-0.5)));
    }
    SECTION("zero opacity contributes nothing anywhere") {
        CHECK(gaussian_weight_at(p, 0.0, {10.0, 10.0}, 1.0) == 0.0);
        CHECK(gaussian_weight_at(p, 0.0, {12.0, 13.0}, 1.0) == 0.0);
    }
    SECTION("transmittance scales the weight") {
        CHECK(gaussian_weight_at(p, 0.5, {10.0, 10.0}, 0.5) == Catch::Approx(0.25));
    }
    SECTION("beyond three sigma the weight vanishes") {
        CHECK(gaussian_weight_at(p, 1.0, {13.5, 10.0}, 1.0) == 0.0);
    }
    SECTION("below the cutoff the weight flushes to zero") {
        CHECK(gaussian_weight_at(p, 0.001, {10.0, 10.0}, 1.0) == 0.0);
    }
    SECTION("falloff-only mode ignores opacity and transmittance") {
        CHECK(gaussian_weight_at(p, 0.1, {10.0, 10.0}, 0.25, WeightMode::kFalloffOnly) == Catch::Approx(1.0));
    }
    SECTION("singular covariance raises a numeric error") {
        Projected2D s = unit_proj(0, 0);
        s.cov_xx = s.cov_yy = s.cov_xy = 0.0;
        CHECK_THROWS_AS(gaussian_weight_at(s, 1.0, {0.0, 0.0}, 1.0), NumericError);
    }
}

TEST_CASE("single gaussian renders its own color exactly", "[rasterizer]") {
    Gaussian3D g;
    g.mean = {0.f, 0.f, 2.f};
    g.scale = {0.1f, 0.1f, 0.1f};
    g.opacity = 0.8f;
    g.color = {1.f, 0.f, 0.f};
    const CameraPose cam = center_camera(64);
    const RenderResult r = rasterize(axis_scene({g}), cam);
    const float* px = r.image.at(32, 32);
    CHECK(px[0] == 1.0f); // normalization cancels the weight
    CHECK(px[1] == 0.0f);
    CHECK(px[2] == 0.0f);
    CHECK(r.weights.per_pixel_total[32 * 64 + 32] > 0.0f);
}

TEST_CASE("two equal-weight gaussians blend symmetrically", "[rasterizer]") {
    // alpha2 = alpha1 / (1 - alpha1) makes the composited weights equal
    Gaussian3D front;
    front.mean = {0.f, 0.f, 2.f};
    front.scale = {0.5f, 0.5f, 0.5f};
    front.opacity = 0.25f;
    front.color = {1.f, 0.f, 0.f};
    Gaussian3D back = front;
    back.mean = {0.f, 0.f, 3.f};
    back.scale = {0.75f, 0.75f, 0.75f};
    back.opacity = 1.0f / 3.0f;
    back.color = {0.f, 0.f, 1.f};

    const CameraPose cam = center_camera(64);
    const RenderResult r = rasterize(axis_scene({front, back}), cam);
    const float* px = r.image.at(32, 32);
    CHECK(px[0] == Catch::Approx(0.5).margin(1e-6));
    CHECK(px[1] == 0.0f);
    CHECK(px[2] == Catch::Approx(0.5).margin(1e-6));
}

TEST_CASE("recombining captured weights reproduces the image", "[rasterizer]") {
    const GaussianScene scene = testutil::random_scene(100, 21);
    const CameraPose cam = testutil::test_camera(64, 64, 8.0);
    const RenderResult r = rasterize(scene, cam);

    std::vector<Eigen::Vector3d> sums(static_cast<size_t>(cam.width) * cam.height, Eigen::Vector3d::Zero());
    std::vector<double> totals(sums.size(), 0.0);
    for (const WeightEntry& e : r.weights.entries) {
        sums[e.pixel] += static_cast<double>(e.weight) * scene[e.gaussian_id].color.cast<double>();
        totals[e.pixel] += e.weight;
    }
    double max_err = 0.0;
    for (uint32_t y = 0; y < cam.height; ++y) {
        for (uint32_t x = 0; x < cam.width; ++x) {
            const size_t pixel = static_cast<size_t>(y) * cam.width + x;
            Eigen::Vector3d expected = Eigen::Vector3d::Zero();
            if (totals[pixel] > kRenderTotalEps) expected = sums[pixel] / totals[pixel];
            for (int c = 0; c < 3; ++c)
                max_err = std::max(max_err, std::abs(expected[c] - r.image.at(x, y)[c]));
            CHECK(std::abs(r.weights.per_pixel_total[pixel] - totals[pixel]) < 1e-6);
        }
    }
    CHECK(max_err <= 1e-5);
}

TEST_CASE("captured weights stay in (cutoff, 0.99] and pixel totals under 1", "[rasterizer]") {
    const GaussianScene scene = testutil::random_scene(80, 33);
    const CameraPose cam = testutil::test_camera(48, 48, 7.0);
    const WeightMap wm = rasterize_weights_only(scene, cam);
    REQUIRE_FALSE(wm.entries.empty());
    for (const WeightEntry& e : wm.entries) {
        CHECK(e.weight > static_cast<float>(kWeightCutoff) * (1.0f - 1e-6f));
        CHECK(e.weight <= 0.99f);
    }
    for (float total : wm.per_pixel_total) CHECK(total <= 1.0f + 1e-6f);
}

TEST_CASE("weights-only capture equals the full render's weights", "[rasterizer]") {
    const GaussianScene scene = testutil::random_scene(60, 8);
    const CameraPose cam = testutil::test_camera(40, 56, 8.0);
    const RenderResult full = rasterize(scene, cam);
    const WeightMap wm = rasterize_weights_only(scene, cam);
    REQUIRE(wm.entries.size() == full.weights.entries.size());
    for (size_t i = 0; i < wm.entries.size(); ++i) {
        CHECK(wm.entries[i].gaussian_id == full.weights.entries[i].gaussian_id);
        CHECK(wm.entries[i].pixel == full.weights.entries[i].pixel);
        CHECK(wm.entries[i].weight == full.weights.entries[i].weight);
    }
    CHECK(wm.per_pixel_total == full.weights.per_pixel_total);
}

TEST_CASE("empty scene yields an empty weight map", "[rasterizer]") {
    const WeightMap wm = rasterize_weights_only(GaussianScene{}, center_camera(32));
    CHECK(wm.entries.empty());
    for (float t : wm.per_pixel_total) CHECK(t == 0.0f);
}

TEST_CASE("fully occluded gaussian is absent from the capture", "[rasterizer]") {
    std::vector<Gaussian3D> gs;
    for (int i = 0; i < 4; ++i) {
        Gaussian3D g;
        g.mean = {0.f, 0.f, 2.f + 0.1f * i};
        g.scale = {1.5f, 1.5f, 1.5f};
        g.opacity = 1.0f; // alpha clamps at 0.99 over the whole footprint
        g.color = {1.f, 1.f, 1.f};
        gs.push_back(g);
    }
    Gaussian3D hidden;
    hidden.mean = {0.f, 0.f, 5.f};
    hidden.scale = {1.f, 1.f, 1.f};
    hidden.opacity = 0.9f;
    gs.push_back(hidden);

    const GaussianScene scene{std::move(gs)};
    const WeightMap wm = rasterize_weights_only(scene, center_camera(32));
    const uint32_t hidden_id = 4;
    for (const WeightEntry& e : wm.entries) CHECK(e.gaussian_id != hidden_id);
}

TEST_CASE("rasterization is bitwise deterministic", "[rasterizer]") {
    const GaussianScene scene = testutil::random_scene(70, 55);
    const CameraPose cam = testutil::test_camera(64, 48, 7.5);
    const RenderResult a = rasterize(scene, cam);
    const RenderResult b = rasterize(scene, cam);
    REQUIRE(a.weights.entries.size() == b.weights.entries.size());
    CHECK(std::memcmp(a.weights.entries.data(), b.weights.entries.data(),
                      a.weights.entries.size() * sizeof(WeightEntry)) == 0);
    CHECK(a.weights.per_pixel_total == b.weights.per_pixel_total);
    CHECK(a.image.pixels == b.image.pixels);
}

TEST_CASE("tiled traversal equals the naive per-pixel traversal exactly", "[rasterizer]") {
    for (uint64_t seed : {101, 202, 303}) {
        const GaussianScene scene = testutil::random_scene(50, seed);
        const CameraPose cam = testutil::test_camera(32, 32, 7.0);
        const RenderResult tiled = rasterize(scene, cam);
        const NaiveResult naive = naive_rasterize(scene, cam);

        REQUIRE(tiled.weights.entries.size() == naive.weights.entries.size());
        for (size_t i = 0; i < tiled.weights.entries.size(); ++i) {
            REQUIRE(tiled.weights.entries[i].pixel == naive.weights.entries[i].pixel);
            REQUIRE(tiled.weights.entries[i].gaussian_id == naive.weights.entries[i].gaussian_id);
            REQUIRE(tiled.weights.entries[i].weight == naive.weights.entries[i].weight);
        }
        CHECK(tiled.weights.per_pixel_total == naive.weights.per_pixel_total);
        CHECK(tiled.image.pixels == naive.image.pixels);
    }
}

TEST_CASE("weight map entries are sorted by pixel with front-to-back rank", "[rasterizer]") {
    const GaussianScene scene = testutil::random_scene(64, 77);
    const CameraPose cam = testutil::test_camera(48, 48, 7.0);
    const WeightMap wm = rasterize_weights_only(scene, cam);
    for (size_t i = 1; i < wm.entries.size(); ++i)
        CHECK(wm.entries[i - 1].pixel <= wm.entries[i].pixel);
}

TEST_CASE("weight map dump round-trips", "[rasterizer]") {
    testutil::TempDir tmp("wmdump");
    const GaussianScene scene = testutil::random_scene(40, 13);
    const CameraPose cam = testutil::test_camera(32, 24, 7.0);
    const WeightMap wm = rasterize_weights_only(scene, cam);
    save_weightmap(wm, tmp.file("wm.bin"));
    const WeightMap back = load_weightmap(tmp.file("wm.bin"));
    CHECK(back.image_id == wm.image_id);
    CHECK(back.width == wm.width);
    CHECK(back.height == wm.height);
    REQUIRE(back.entries.size() == wm.entries.size());
    CHECK(std::memcmp(back.entries.data(), wm.entries.data(), wm.entries.size() * sizeof(WeightEntry)) == 0);
    for (size_t p = 0; p < wm.per_pixel_total.size(); ++p)
        CHECK(std::abs(back.per_pixel_total[p] - wm.per_pixel_total[p]) < 1e-6f);

    std::ofstream bad(tmp.file("bad.bin"), std::ios::binary);
    bad << "nope";
    bad.close();
    CHECK_THROWS_AS(load_weightmap(tmp.file("bad.bin")), FormatError);
}
