#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "semsplat/fixture.hpp"
#include "semsplat/scene.hpp"

namespace testutil {

inline double urand(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * ((static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53);
}

inline semsplat::GaussianScene random_scene(size_t n, uint64_t seed, double extent = 2.0) {
    std::mt19937_64 rng(seed);
    std::vector<semsplat::Gaussian3D> gaussians;
    gaussians.reserve(n);
    for (size_t k = 0; k < n; ++k) {
        semsplat::Gaussian3D g;
        g.mean = Eigen::Vector3f(static_cast<float>(urand(rng, -extent, extent)),
                                 static_cast<float>(urand(rng, -extent, extent)),
                                 static_cast<float>(urand(rng, -extent, extent)));
        g.scale = Eigen::Vector3f(static_cast<float>(urand(rng, 0.05, 0.4)),
                                  static_cast<float>(urand(rng, 0.05, 0.4)),
                                  static_cast<float>(urand(rng, 0.05, 0.4)));
        Eigen::Quaterniond q(urand(rng, -1, 1), urand(rng, -1, 1), urand(rng, -1, 1), urand(rng, -1, 1));
        g.rotation = q.normalized().cast<float>();
        g.opacity = static_cast<float>(urand(rng, 0.05, 0.95));
        g.color = Eigen::Vector3f(static_cast<float>(urand(rng, 0, 1)), static_cast<float>(urand(rng, 0, 1)),
                                  static_cast<float>(urand(rng, 0, 1)));
        gaussians.push_back(g);
    }
    return semsplat::GaussianScene(std::move(gaussians));
}

/// Camera on +z axis at `distance`, looking at the origin.
inline semsplat::CameraPose test_camera(uint32_t width, uint32_t height, double distance = 8.0,
                                        double focal = 0.0, uint32_t image_id = 0) {
    if (focal <= 0) focal = 0.9 * width;
    semsplat::CameraPose cam =
        semsplat::detail::look_at(Eigen::Vector3d(0, 0, -distance), Eigen::Vector3d::Zero(), width, height,
                                  focal);
    cam.image_id = image_id;
    return cam;
}

class TempDir {
public:
    explicit TempDir(const std::string& name) {
        path_ = (std::filesystem::temp_directory_path() / ("semsplat_test_" + name)).string();
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::string& path() const { return path_; }
    std::string file(const std::string& name) const {
        return (std::filesystem::path(path_) / name).string();
    }

private:
    std::string path_;
};

} // namespace testutil
