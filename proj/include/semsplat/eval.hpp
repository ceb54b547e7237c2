#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "semsplat/core.hpp"
#include "semsplat/pipeline.hpp"
#include "semsplat/providers.hpp"
#include "semsplat/query.hpp"
#include "semsplat/rasterizer.hpp"
#include "semsplat/scene.hpp"

namespace semsplat {

/// Pixels whose composited opacity exceeds this count as object coverage
/// when projecting retrieved Gaussians to a binary mask.
inline constexpr float kDefaultAlphaThreshold = 0.5f;

/// Class id for points/Gaussians without a prediction or annotation.
inline constexpr int32_t kUnlabeled = -1;

struct LabeledPointCloud {
    std::vector<Eigen::Vector3f> points;
    std::vector<int32_t> gt_class; // kUnlabeled where unannotated
};

struct SegmentMap {
    std::vector<int32_t> segment_ids;
};

// simple text ingestion: `x y z class` per line / one segment id per line
inline LabeledPointCloud load_pointcloud(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open point cloud: " + path);
    LabeledPointCloud cloud;
    std::string line;
    while (std::getline(is, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        Eigen::Vector3f p;
        int32_t c;
        if (!(ls >> p.x())) continue;
        if (!(ls >> p.y() >> p.z() >> c)) throw FormatError("malformed point record in " + path);
        cloud.points.push_back(p);
        cloud.gt_class.push_back(c);
    }
    return cloud;
}

inline void save_pointcloud(const LabeledPointCloud& cloud, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write point cloud: " + path);
    os.precision(9);
    for (size_t i = 0; i < cloud.points.size(); ++i)
        os << cloud.points[i].x() << ' ' << cloud.points[i].y() << ' ' << cloud.points[i].z() << ' '
           << cloud.gt_class[i] << '\n';
}

inline SegmentMap load_segments(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open segment map: " + path);
    SegmentMap map;
    int32_t s;
    while (is >> s) map.segment_ids.push_back(s);
    return map;
}

inline void save_segments(const SegmentMap& map, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write segment map: " + path);
    for (int32_t s : map.segment_ids) os << s << '\n';
}

/// Rasterizes only the matched Gaussians and thresholds the composited
/// opacity into a binary mask.
inline MaskBitmap project_result_to_mask(const QueryResult& result, const GaussianScene& scene,
                                         const CameraPose& cam,
                                         float alpha_threshold = kDefaultAlphaThreshold) {
    std::vector<Gaussian3D> subset;
    subset.reserve(result.matches.size());
    for (const QueryMatch& m : result.matches) {
        if (m.gaussian_id >= scene.size())
            throw ContractError("query match id " + std::to_string(m.gaussian_id) + " outside the scene");
        subset.push_back(scene[m.gaussian_id]);
    }
    const RenderResult render = rasterize(GaussianScene(std::move(subset)), cam);
    MaskBitmap mask(cam.width, cam.height);
    for (size_t p = 0; p < render.alpha.size(); ++p) mask.bits[p] = render.alpha[p] > alpha_threshold ? 1 : 0;
    return mask;
}

struct BinaryMetrics {
    double iou = 0.0;
    double acc = 0.0; // 1 when iou > 0.5 (per-query localization accuracy)
};

inline BinaryMetrics binary_metrics(const MaskBitmap& pred, const MaskBitmap& gt) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw ContractError("binary_metrics: resolution mismatch");
    uint64_t inter = 0, uni = 0;
    for (size_t i = 0; i < pred.bits.size(); ++i) {
        const bool a = pred.bits[i] != 0, b = gt.bits[i] != 0;
        inter += (a && b) ? 1 : 0;
        uni += (a || b) ? 1 : 0;
    }
    BinaryMetrics m;
    m.iou = (uni == 0) ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    m.acc = m.iou > 0.5 ? 1.0 : 0.0;
    return m;
}

/// Argmax-cosine class per Gaussian; uncovered rows get kUnlabeled, exact
/// ties go to the lowest class id.
inline std::vector<int32_t> assign_classes(const EmbeddingTable& table,
                                           const std::vector<std::pair<int32_t, std::vector<float>>>& labels) {
    if (labels.empty()) throw ContractError("assign_classes: empty label set");
    for (const auto& [id, vec] : labels)
        if (vec.size() != table.dim) throw ContractError("assign_classes: label vector dimension mismatch");

    std::vector<double> label_norms(labels.size());
    for (size_t c = 0; c < labels.size(); ++c) {
        double n = 0;
        for (float v : labels[c].second) n += static_cast<double>(v) * v;
        label_norms[c] = std::sqrt(n);
    }

    std::vector<int32_t> out(table.gaussian_count, kUnlabeled);
    for (uint64_t k = 0; k < table.gaussian_count; ++k) {
        if (!table.covered(k)) continue;
        const float* row = table.row(k);
        double row_norm = 0;
        for (uint32_t d = 0; d < table.dim; ++d) row_norm += static_cast<double>(row[d]) * row[d];
        row_norm = std::sqrt(row_norm);
        double best = -2.0;
        int32_t best_id = kUnlabeled;
        for (size_t c = 0; c < labels.size(); ++c) {
            double dot = 0;
            for (uint32_t d = 0; d < table.dim; ++d)
                dot += static_cast<double>(row[d]) * labels[c].second[d];
            const double denom = row_norm * label_norms[c];
            const double cos = denom > 0 ? dot / denom : -1.0;
            if (cos > best || (cos == best && labels[c].first < best_id)) {
                best = cos;
                best_id = labels[c].first;
            }
        }
        out[k] = best_id;
    }
    return out;
}

/// Each point takes the class of its nearest Gaussian mean (Euclidean,
/// ties to the lower gaussian id).
inline std::vector<int32_t> map_to_points(const GaussianScene& scene, const std::vector<int32_t>& gaussian_classes,
                                          const LabeledPointCloud& cloud) {
    if (scene.empty()) throw ContractError("map_to_points: empty scene");
    if (gaussian_classes.size() != scene.size())
        throw ContractError("map_to_points: class list size differs from scene size");
    std::vector<int32_t> out(cloud.points.size(), kUnlabeled);
    for (size_t p = 0; p < cloud.points.size(); ++p) {
        const Eigen::Vector3f point = cloud.points[p];
        double best = std::numeric_limits<double>::max();
        uint32_t best_id = 0;
        for (size_t k = 0; k < scene.size(); ++k) {
            const double d2 = (scene[k].mean - point).cast<double>().squaredNorm();
            if (d2 < best) {
                best = d2;
                best_id = static_cast<uint32_t>(k);
            }
        }
        out[p] = gaussian_classes[best_id];
    }
    return out;
}

/// Majority vote inside each segment over labeled points (ties to the lowest
/// class id); segments without labeled points are left unlabeled.
inline std::vector<int32_t> prediction_filter(const std::vector<int32_t>& point_classes,
                                              const SegmentMap& segments) {
    if (point_classes.size() != segments.segment_ids.size())
        throw ContractError("prediction_filter: length mismatch");
    std::unordered_map<int32_t, std::map<int32_t, size_t>> histogram; // segment -> class counts
    for (size_t i = 0; i < point_classes.size(); ++i)
        if (point_classes[i] != kUnlabeled) histogram[segments.segment_ids[i]][point_classes[i]] += 1;

    std::unordered_map<int32_t, int32_t> majority;
    for (const auto& [segment, counts] : histogram) {
        size_t best_count = 0;
        int32_t best_class = kUnlabeled;
        for (const auto& [cls, count] : counts) { // std::map: ascending class id, so ties keep the lowest
            if (count > best_count) {
                best_count = count;
                best_class = cls;
            }
        }
        majority[segment] = best_class;
    }

    std::vector<int32_t> out(point_classes.size(), kUnlabeled);
    for (size_t i = 0; i < out.size(); ++i) {
        auto it = majority.find(segments.segment_ids[i]);
        out[i] = (it == majority.end()) ? kUnlabeled : it->second;
    }
    return out;
}

struct MulticlassMetrics {
    double miou = 0.0;
    double macc = 0.0;
    std::map<int32_t, double> per_class_iou;
    std::map<int32_t, double> per_class_acc;
};

/// Per-class IoU and recall over gt-labeled points restricted to the class
/// subset; unlabeled predictions count as wrong, classes absent from the
/// ground truth are excluded from the means.
inline MulticlassMetrics multiclass_metrics(const std::vector<int32_t>& pred, const std::vector<int32_t>& gt,
                                            const std::vector<int32_t>& class_subset) {
    if (pred.size() != gt.size()) throw ContractError("multiclass_metrics: length mismatch");
    if (class_subset.empty()) throw ContractError("multiclass_metrics: empty class subset");
    std::map<int32_t, size_t> subset_index;
    for (int32_t c : class_subset) subset_index.emplace(c, subset_index.size());

    for (int32_t p : pred)
        if (p != kUnlabeled && !subset_index.count(p))
            throw DataError("multiclass_metrics: predicted class " + std::to_string(p) +
                            " is not in the class subset");

    std::map<int32_t, uint64_t> tp, fp, fn;
    for (size_t i = 0; i < gt.size(); ++i) {
        const int32_t g = gt[i];
        if (g == kUnlabeled || !subset_index.count(g)) continue; // outside the evaluated subset
        const int32_t p = pred[i];
        if (p == g) {
            tp[g] += 1;
        } else {
            fn[g] += 1;
            if (p != kUnlabeled) fp[p] += 1;
        }
    }

    MulticlassMetrics m;
    size_t classes_present = 0;
    for (int32_t c : class_subset) {
        const uint64_t t = tp.count(c) ? tp[c] : 0;
        const uint64_t f_neg = fn.count(c) ? fn[c] : 0;
        if (t + f_neg == 0) continue; // class absent from gt
        const uint64_t f_pos = fp.count(c) ? fp[c] : 0;
        const double iou = static_cast<double>(t) / static_cast<double>(t + f_pos + f_neg);
        const double acc = static_cast<double>(t) / static_cast<double>(t + f_neg);
        m.per_class_iou[c] = iou;
        m.per_class_acc[c] = acc;
        m.miou += iou;
        m.macc += acc;
        ++classes_present;
    }
    if (classes_present > 0) {
        m.miou /= static_cast<double>(classes_present);
        m.macc /= static_cast<double>(classes_present);
    }
    return m;
}

} // namespace semsplat
