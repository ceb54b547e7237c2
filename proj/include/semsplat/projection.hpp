#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "semsplat/scene.hpp"

namespace semsplat {

/// Near plane in world units; Gaussians at or behind it are culled.
inline constexpr double kNearPlane = 0.01;
/// Isotropic screen-space covariance dilation in px^2 (low-pass filter).
inline constexpr double kCovDilation = 0.3;

/// Screen-space footprint of one Gaussian under one camera.
///
/// The 2x2 screen covariance is symmetric and stored as (xx, xy, yy); after
/// dilation both eigenvalues are >= kCovDilation, so it is always SPD when
/// `visible` is set.
struct Projected2D {
    uint32_t gaussian_id = 0;
    Eigen::Vector2d mu2d = Eigen::Vector2d::Zero(); // pixels
    double cov_xx = 0, cov_xy = 0, cov_yy = 0;      // pixels^2
    double depth = 0;                               // camera-frame z
    bool visible = false;
};

/// Local-affine (EWA) perspective projection of a 3D Gaussian.
inline Projected2D project_gaussian(const Gaussian3D& g, const CameraPose& cam) {
    Projected2D out;
    out.gaussian_id = g.id;

    const Eigen::Vector3d xc = cam.rotation * g.mean.cast<double>() + cam.translation;
    if (xc.z() <= kNearPlane) return out; // visible stays false

    const double z = xc.z();
    out.mu2d = {cam.fx * xc.x() / z + cam.cx, cam.fy * xc.y() / z + cam.cy};
    out.depth = z;

    Eigen::Matrix<double, 2, 3> jacobian;
    jacobian << cam.fx / z, 0, -cam.fx * xc.x() / (z * z), //
        0, cam.fy / z, -cam.fy * xc.y() / (z * z);

    const Eigen::Matrix<double, 2, 3> m = jacobian * cam.rotation;
    const Eigen::Matrix2d cov = m * covariance3d(g) * m.transpose();
    out.cov_xx = cov(0, 0) + kCovDilation;
    out.cov_xy = 0.5 * (cov(0, 1) + cov(1, 0));
    out.cov_yy = cov(1, 1) + kCovDilation;
    out.visible = true;
    return out;
}

/// Ascending view depth; ties broken by gaussian_id so the order is total.
/// Expects only visible projections.
inline void depth_sort(std::vector<Projected2D>& projected) {
    std::sort(projected.begin(), projected.end(), [](const Projected2D& a, const Projected2D& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.gaussian_id < b.gaussian_id;
    });
}

} // namespace semsplat
