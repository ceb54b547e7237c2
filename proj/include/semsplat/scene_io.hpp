#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "semsplat/core.hpp"
#include "semsplat/scene.hpp"

namespace semsplat {

/// DC spherical-harmonics basis constant (1 / (2 sqrt(pi))).
inline constexpr double kShC0 = 0.28209479177387814;
/// Stored opacity logits are clamped to +/- kLogitClamp on save.
inline constexpr double kLogitClamp = 15.0;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit_clamped(double p) {
    if (p <= 0.0) return -kLogitClamp;
    if (p >= 1.0) return kLogitClamp;
    return std::clamp(std::log(p / (1.0 - p)), -kLogitClamp, kLogitClamp);
}

namespace detail {

struct PlyProperty {
    std::string name;
    size_t byte_size = 4;
    bool is_float = true;
    size_t offset = 0; // within one record
};

struct PlyHeader {
    size_t vertex_count = 0;
    size_t record_size = 0;
    std::vector<PlyProperty> properties;

    const PlyProperty* find(const std::string& name) const {
        for (const auto& p : properties)
            if (p.name == name) return &p;
        return nullptr;
    }

    const PlyProperty& require(const std::string& name) const {
        const PlyProperty* p = find(name);
        if (!p) throw FormatError("scene PLY is missing required property '" + name + "'");
        if (!p->is_float || p->byte_size != 4)
            throw FormatError("scene PLY property '" + name + "' must be float32");
        return *p;
    }
};

inline PlyHeader parse_ply_header(std::istream& is) {
    std::string line;
    auto next_line = [&]() {
        if (!std::getline(is, line)) throw FormatError("scene PLY: truncated header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
    };

    next_line();
    if (line != "ply") throw FormatError("scene PLY: missing 'ply' magic");

    PlyHeader header;
    bool in_vertex_element = false;
    bool format_seen = false;
    while (true) {
        next_line();
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword == "comment") continue;
        if (keyword == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian")
                throw FormatError("scene PLY: unsupported format '" + fmt + "'");
            format_seen = true;
        } else if (keyword == "element") {
            std::string name;
            size_t count = 0;
            ls >> name >> count;
            in_vertex_element = (name == "vertex");
            if (in_vertex_element) header.vertex_count = count;
            else if (header.vertex_count == 0)
                throw FormatError("scene PLY: first element must be 'vertex'");
        } else if (keyword == "property") {
            if (!in_vertex_element) continue;
            std::string type, name;
            ls >> type >> name;
            PlyProperty prop;
            prop.name = name;
            prop.offset = header.record_size;
            if (type == "float" || type == "float32") {
                prop.byte_size = 4;
                prop.is_float = true;
            } else if (type == "double" || type == "float64") {
                prop.byte_size = 8;
                prop.is_float = false;
            } else if (type == "uchar" || type == "uint8" || type == "char" || type == "int8") {
                prop.byte_size = 1;
                prop.is_float = false;
            } else if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") {
                prop.byte_size = 2;
                prop.is_float = false;
            } else if (type == "int" || type == "uint" || type == "int32" || type == "uint32") {
                prop.byte_size = 4;
                prop.is_float = false;
            } else {
                throw FormatError("scene PLY: unsupported property type '" + type + "'");
            }
            header.record_size += prop.byte_size;
            header.properties.push_back(prop);
        } else if (keyword == "end_header") {
            break;
        } else if (!keyword.empty()) {
            throw FormatError("scene PLY: unexpected header keyword '" + keyword + "'");
        }
    }
    if (!format_seen) throw FormatError("scene PLY: missing format line");
    return header;
}

} // namespace detail

/// Loads a 3DGS-layout binary PLY scene. Stored scales are log-space, stored
/// opacity is a logit, stored color is the SH DC coefficient; all are
/// activated here. Ids are assigned by record order.
inline GaussianScene load_scene(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open scene file: " + path);

    const detail::PlyHeader header = detail::parse_ply_header(is);
    static const char* kMeanProps[3] = {"x", "y", "z"};
    static const char* kScaleProps[3] = {"scale_0", "scale_1", "scale_2"};
    static const char* kRotProps[4] = {"rot_0", "rot_1", "rot_2", "rot_3"};
    static const char* kColorProps[3] = {"f_dc_0", "f_dc_1", "f_dc_2"};

    size_t mean_off[3], scale_off[3], rot_off[4], color_off[3];
    for (int i = 0; i < 3; ++i) mean_off[i] = header.require(kMeanProps[i]).offset;
    for (int i = 0; i < 3; ++i) scale_off[i] = header.require(kScaleProps[i]).offset;
    for (int i = 0; i < 4; ++i) rot_off[i] = header.require(kRotProps[i]).offset;
    for (int i = 0; i < 3; ++i) color_off[i] = header.require(kColorProps[i]).offset;
    const size_t opacity_off = header.require("opacity").offset;

    std::vector<char> record(header.record_size);
    auto field = [&](size_t off) {
        float v;
        std::memcpy(&v, record.data() + off, 4);
        return v;
    };

    std::vector<Gaussian3D> gaussians;
    gaussians.reserve(header.vertex_count);
    for (size_t k = 0; k < header.vertex_count; ++k) {
        is.read(record.data(), static_cast<std::streamsize>(record.size()));
        if (!is) throw FormatError("scene PLY: truncated at record " + std::to_string(k));

        Gaussian3D g;
        g.id = static_cast<uint32_t>(k);
        for (int i = 0; i < 3; ++i) g.mean[i] = field(mean_off[i]);
        for (int i = 0; i < 3; ++i) g.scale[i] = static_cast<float>(std::exp(static_cast<double>(field(scale_off[i]))));
        g.rotation = Eigen::Quaternionf(field(rot_off[0]), field(rot_off[1]), field(rot_off[2]), field(rot_off[3]));
        g.opacity = static_cast<float>(sigmoid(field(opacity_off)));
        for (int i = 0; i < 3; ++i)
            g.color[i] = std::clamp(0.5f + static_cast<float>(kShC0) * field(color_off[i]), 0.0f, 1.0f);

        const bool finite = g.mean.allFinite() && g.scale.allFinite() && g.color.allFinite() &&
                            std::isfinite(g.opacity) && g.rotation.coeffs().allFinite();
        if (!finite) throw DataError("scene PLY: non-finite value at record " + std::to_string(k));
        const float qnorm = g.rotation.norm();
        if (!(qnorm > 0.0f)) throw DataError("scene PLY: zero quaternion at record " + std::to_string(k));
        g.rotation.coeffs() /= qnorm;
        gaussians.push_back(g);
    }
    return GaussianScene(std::move(gaussians));
}

/// Writes the inverse encoding of load_scene (log-scale, logit opacity,
/// SH DC color). Layout matches the de-facto 3DGS export convention.
inline void save_scene(const GaussianScene& scene, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write scene file: " + path);

    os << "ply\n"
       << "format binary_little_endian 1.0\n"
       << "element vertex " << scene.size() << "\n";
    static const char* kProps[] = {"x",       "y",       "z",       "nx",      "ny",    "nz",
                                   "f_dc_0",  "f_dc_1",  "f_dc_2",  "opacity", "scale_0", "scale_1",
                                   "scale_2", "rot_0",   "rot_1",   "rot_2",   "rot_3"};
    for (const char* p : kProps) os << "property float " << p << "\n";
    os << "end_header\n";

    for (const Gaussian3D& g : scene.gaussians()) {
        float rec[17] = {};
        rec[0] = g.mean[0];
        rec[1] = g.mean[1];
        rec[2] = g.mean[2];
        for (int i = 0; i < 3; ++i) rec[6 + i] = static_cast<float>((g.color[i] - 0.5) / kShC0);
        rec[9] = static_cast<float>(logit_clamped(g.opacity));
        for (int i = 0; i < 3; ++i) rec[10 + i] = static_cast<float>(std::log(static_cast<double>(g.scale[i])));
        rec[13] = g.rotation.w();
        rec[14] = g.rotation.x();
        rec[15] = g.rotation.y();
        rec[16] = g.rotation.z();
        os.write(reinterpret_cast<const char*>(rec), sizeof(rec));
    }
    if (!os) throw IoError("write failed: " + path);
}

/// Camera file: one whitespace-separated record per line,
///   image_id fx fy cx cy r00..r22 tx ty tz width height
/// with '#' comments. Rotations are validated for orthonormality.
inline std::vector<CameraPose> load_cameras(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open camera file: " + path);

    std::vector<CameraPose> cameras;
    std::string line;
    size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        CameraPose cam;
        if (!(ls >> cam.image_id)) continue; // blank or comment-only line
        double r[9];
        if (!(ls >> cam.fx >> cam.fy >> cam.cx >> cam.cy >> r[0] >> r[1] >> r[2] >> r[3] >> r[4] >> r[5] >>
              r[6] >> r[7] >> r[8] >> cam.translation[0] >> cam.translation[1] >> cam.translation[2] >>
              cam.width >> cam.height))
            throw FormatError("camera file: malformed record at line " + std::to_string(line_no));
        cam.rotation << r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8];
        validate_camera(cam);
        cameras.push_back(cam);
    }
    return cameras;
}

inline void save_cameras(const std::vector<CameraPose>& cameras, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write camera file: " + path);
    os << "# image_id fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz width height\n";
    os.precision(17);
    for (const CameraPose& c : cameras) {
        os << c.image_id << ' ' << c.fx << ' ' << c.fy << ' ' << c.cx << ' ' << c.cy;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) os << ' ' << c.rotation(i, j);
        for (int i = 0; i < 3; ++i) os << ' ' << c.translation[i];
        os << ' ' << c.width << ' ' << c.height << '\n';
    }
}

} // namespace semsplat
