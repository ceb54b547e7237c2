#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "semsplat/core.hpp"

namespace semsplat {

/// One anisotropic 3D Gaussian primitive.
///
/// `scale` holds per-axis standard deviations in world units (already
/// exp-activated), `opacity` is in [0,1] (already sigmoid-activated), and
/// `color` is the DC-term RGB in [0,1]. The 3D covariance is
/// R * diag(scale^2) * R^T with R the rotation matrix of `rotation`.
struct Gaussian3D {
    uint32_t id = 0;
    Eigen::Vector3f mean = Eigen::Vector3f::Zero();
    Eigen::Vector3f scale = Eigen::Vector3f::Ones();
    Eigen::Quaternionf rotation = Eigen::Quaternionf::Identity(); // (w,x,y,z)
    float opacity = 1.0f;
    Eigen::Vector3f color = Eigen::Vector3f::Zero();
};

/// World covariance R * diag(scale^2) * R^T, symmetric positive definite
/// whenever all scale components are positive.
inline Eigen::Matrix3d covariance3d(const Gaussian3D& g) {
    Eigen::Matrix3d r = g.rotation.cast<double>().normalized().toRotationMatrix();
    Eigen::Vector3d s2 = g.scale.cast<double>().array().square();
    return r * s2.asDiagonal() * r.transpose();
}

struct Aabb {
    Eigen::Vector3d min = Eigen::Vector3d::Constant(std::numeric_limits<double>::max());
    Eigen::Vector3d max = Eigen::Vector3d::Constant(std::numeric_limits<double>::lowest());

    void expand(const Eigen::Vector3d& p) {
        min = min.cwiseMin(p);
        max = max.cwiseMax(p);
    }
    bool contains(const Eigen::Vector3d& p) const {
        return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
    }
    bool empty() const { return (min.array() > max.array()).any(); }
};

/// The full primitive set. Ids are dense 0..N-1 and match list position.
class GaussianScene {
public:
    GaussianScene() = default;

    explicit GaussianScene(std::vector<Gaussian3D> gaussians) : gaussians_(std::move(gaussians)) {
        for (size_t k = 0; k < gaussians_.size(); ++k) {
            gaussians_[k].id = static_cast<uint32_t>(k);
            bbox_.expand(gaussians_[k].mean.cast<double>());
        }
    }

    const std::vector<Gaussian3D>& gaussians() const { return gaussians_; }
    size_t size() const { return gaussians_.size(); }
    bool empty() const { return gaussians_.empty(); }
    const Gaussian3D& operator[](size_t k) const { return gaussians_[k]; }

    /// Axis-aligned bounds of the means (cached at construction).
    const Aabb& bbox() const { return bbox_; }

private:
    std::vector<Gaussian3D> gaussians_;
    Aabb bbox_;
};

/// Pinhole camera, world-to-camera convention, +z forward, top-left origin.
struct CameraPose {
    uint32_t image_id = 0;
    double fx = 0, fy = 0, cx = 0, cy = 0;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity(); // world-to-camera
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();  // camera frame
    uint32_t width = 0, height = 0;
};

/// Checks the CameraPose invariants; throws DataError naming the failure.
inline void validate_camera(const CameraPose& cam) {
    const Eigen::Matrix3d gram = cam.rotation.transpose() * cam.rotation - Eigen::Matrix3d::Identity();
    if (gram.cwiseAbs().maxCoeff() > 1e-4)
        throw DataError("camera " + std::to_string(cam.image_id) + ": rotation is not orthonormal");
    if (cam.rotation.determinant() < 0)
        throw DataError("camera " + std::to_string(cam.image_id) + ": rotation has determinant -1");
    if (!(cam.fx > 0) || !(cam.fy > 0))
        throw DataError("camera " + std::to_string(cam.image_id) + ": focal lengths must be positive");
    if (!(cam.cx > 0) || !(cam.cx < cam.width) || !(cam.cy > 0) || !(cam.cy < cam.height))
        throw DataError("camera " + std::to_string(cam.image_id) + ": principal point outside the image");
}

/// Row-major RGB image, values in [0,1].
struct ImageRGB {
    uint32_t image_id = 0;
    uint32_t width = 0, height = 0;
    std::vector<float> pixels; // 3 * width * height

    ImageRGB() = default;
    ImageRGB(uint32_t id, uint32_t w, uint32_t h) : image_id(id), width(w), height(h), pixels(3ull * w * h, 0.0f) {}

    float* at(uint32_t x, uint32_t y) { return &pixels[3ull * (static_cast<uint64_t>(y) * width + x)]; }
    const float* at(uint32_t x, uint32_t y) const {
        return &pixels[3ull * (static_cast<uint64_t>(y) * width + x)];
    }
};

} // namespace semsplat
