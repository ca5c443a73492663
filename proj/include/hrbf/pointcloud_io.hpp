#pragma once

/// \file pointcloud_io.hpp
/// Oriented point cloud and mesh IO, plus the unit-box normalization applied
/// before tuning. ASCII output uses 9 significant digits; binary PLY is
/// little-endian float32.

#include "hrbf/types.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace hrbf {

enum class PointFormat { XyzAscii, PlyAscii, PlyBinaryLE };
enum class MeshFormat { Obj, PlyAscii };

struct PointLoadResult {
    HermitePointSet points;
    std::size_t dropped_zero_normals = 0;
};

/// Uniform scale followed by translation: p' = scale * p + translate.
struct Similarity {
    double scale = 1.0;
    Vec3 translate = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return scale * p + translate; }
    Vec3 invert(const Vec3& q) const { return (q - translate) / scale; }
};

namespace detail {

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline bool parse_double(std::string_view tok, double& out) {
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    const auto* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, out);
    return ec == std::errc{} && ptr == end && std::isfinite(out);
}

inline bool parse_long(std::string_view tok, long& out) {
    const auto* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(tok.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

inline std::string fmt9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

/// Adds one oriented sample, dropping it when the normal has zero length.
inline void add_sample(PointLoadResult& out, const Vec3& p, const Vec3& n) {
    const double len = n.norm();
    if (!(len > 0.0) || !std::isfinite(len)) {
        ++out.dropped_zero_normals;
        return;
    }
    out.points.push_back(p, n / len);
}

struct PlyProperty {
    std::string name;
    std::string type;
    bool is_list = false;
    std::string count_type;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
};

struct PlyHeader {
    bool binary_le = false;
    std::vector<PlyElement> elements;
    std::size_t header_lines = 0;
};

inline std::size_t ply_type_size(const std::string& t) {
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
    if (t == "double" || t == "float64") return 8;
    return 0;
}

inline double read_ply_scalar(const char* p, const std::string& t) {
    static_assert(std::endian::native == std::endian::little, "binary PLY reader assumes a little-endian host");
    if (t == "float" || t == "float32") { float v; std::memcpy(&v, p, 4); return v; }
    if (t == "double" || t == "float64") { double v; std::memcpy(&v, p, 8); return v; }
    if (t == "char" || t == "int8") { std::int8_t v; std::memcpy(&v, p, 1); return v; }
    if (t == "uchar" || t == "uint8") { std::uint8_t v; std::memcpy(&v, p, 1); return v; }
    if (t == "short" || t == "int16") { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    if (t == "ushort" || t == "uint16") { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
    if (t == "int" || t == "int32") { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    return v;
}

inline PlyHeader read_ply_header(std::istream& in) {
    PlyHeader h;
    std::string line;
    std::size_t lineno = 0;
    bool saw_format = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto tok = split_ws(line);
        if (lineno == 1) {
            if (tok.size() != 1 || tok[0] != "ply") throw ParseError("missing 'ply' magic", lineno);
            continue;
        }
        if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
        if (tok[0] == "format") {
            if (tok.size() < 2) throw ParseError("malformed format line", lineno);
            if (tok[1] == "ascii") h.binary_le = false;
            else if (tok[1] == "binary_little_endian") h.binary_le = true;
            else throw ParseError("unsupported PLY format '" + std::string(tok[1]) + "'", lineno);
            saw_format = true;
        } else if (tok[0] == "element") {
            long count = 0;
            if (tok.size() != 3 || !parse_long(tok[2], count) || count < 0)
                throw ParseError("malformed element line", lineno);
            h.elements.push_back({std::string(tok[1]), static_cast<std::size_t>(count), {}});
        } else if (tok[0] == "property") {
            if (h.elements.empty()) throw ParseError("property before element", lineno);
            PlyProperty prop;
            if (tok.size() == 5 && tok[1] == "list") {
                prop.is_list = true;
                prop.count_type = std::string(tok[2]);
                prop.type = std::string(tok[3]);
                prop.name = std::string(tok[4]);
            } else if (tok.size() == 3) {
                prop.type = std::string(tok[1]);
                prop.name = std::string(tok[2]);
            } else {
                throw ParseError("malformed property line", lineno);
            }
            if (ply_type_size(prop.type) == 0 || (prop.is_list && ply_type_size(prop.count_type) == 0))
                throw ParseError("unknown property type", lineno);
            h.elements.back().props.push_back(prop);
        } else if (tok[0] == "end_header") {
            if (!saw_format) throw ParseError("missing format line", lineno);
            h.header_lines = lineno;
            return h;
        } else {
            throw ParseError("unexpected header keyword '" + std::string(tok[0]) + "'", lineno);
        }
    }
    throw ParseError("unterminated PLY header", lineno);
}

inline std::array<int, 6> xyz_normal_slots(const PlyElement& e, std::size_t lineno) {
    static constexpr std::array<const char*, 6> names{"x", "y", "z", "nx", "ny", "nz"};
    std::array<int, 6> slot{};
    for (std::size_t k = 0; k < names.size(); ++k) {
        auto it = std::find_if(e.props.begin(), e.props.end(),
                               [&](const PlyProperty& p) { return p.name == names[k]; });
        if (it == e.props.end()) throw ParseError(std::string("vertex element lacks property '") + names[k] + "'", lineno);
        if (it->is_list) throw ParseError("list-valued coordinate property", lineno);
        slot[k] = static_cast<int>(it - e.props.begin());
    }
    return slot;
}

/// Raw vertex table (and optional faces) from any supported PLY variant.
struct PlyData {
    std::vector<std::vector<double>> vertex_rows;
    std::vector<std::vector<std::uint32_t>> faces;
    PlyElement vertex_element;
};

inline PlyData read_ply(std::istream& in) {
    PlyHeader h = read_ply_header(in);
    PlyData out;
    std::size_t lineno = h.header_lines;
    std::string line;
    for (const auto& e : h.elements) {
        const bool is_vertex = e.name == "vertex";
        const bool is_face = e.name == "face";
        if (is_vertex) out.vertex_element = e;
        for (std::size_t r = 0; r < e.count; ++r) {
            std::vector<double> row;
            std::vector<std::uint32_t> face;
            if (!h.binary_le) {
                do {
                    if (!std::getline(in, line)) throw ParseError("unexpected end of file in element '" + e.name + "'", lineno + 1);
                    ++lineno;
                } while (split_ws(line).empty());
                auto tok = split_ws(line);
                std::size_t t = 0;
                for (const auto& prop : e.props) {
                    if (prop.is_list) {
                        long cnt = 0;
                        if (t >= tok.size() || !parse_long(tok[t++], cnt) || cnt < 0) throw ParseError("bad list count", lineno);
                        for (long k = 0; k < cnt; ++k) {
                            long idx = 0;
                            if (t >= tok.size() || !parse_long(tok[t++], idx) || idx < 0) throw ParseError("bad list entry", lineno);
                            if (is_face) face.push_back(static_cast<std::uint32_t>(idx));
                        }
                        row.push_back(0.0);  // keeps row slots aligned with property indices
                    } else {
                        double v = 0;
                        if (t >= tok.size() || !parse_double(tok[t++], v)) throw ParseError("bad numeric value", lineno);
                        row.push_back(v);
                    }
                }
                if (t != tok.size()) throw ParseError("trailing tokens", lineno);
            } else {
                char buf[8];
                for (const auto& prop : e.props) {
                    if (prop.is_list) {
                        const auto cs = ply_type_size(prop.count_type);
                        if (!in.read(buf, static_cast<std::streamsize>(cs))) throw ParseError("truncated binary list", 0);
                        const auto cnt = static_cast<long>(read_ply_scalar(buf, prop.count_type));
                        const auto es = ply_type_size(prop.type);
                        for (long k = 0; k < cnt; ++k) {
                            if (!in.read(buf, static_cast<std::streamsize>(es))) throw ParseError("truncated binary list", 0);
                            if (is_face) face.push_back(static_cast<std::uint32_t>(read_ply_scalar(buf, prop.type)));
                        }
                        row.push_back(0.0);
                    } else {
                        const auto sz = ply_type_size(prop.type);
                        if (!in.read(buf, static_cast<std::streamsize>(sz)))
                            throw ParseError("truncated binary payload in element '" + e.name + "'", 0);
                        row.push_back(read_ply_scalar(buf, prop.type));
                    }
                }
            }
            if (is_vertex) out.vertex_rows.push_back(std::move(row));
            if (is_face) out.faces.push_back(std::move(face));
        }
    }
    return out;
}

}  // namespace detail

inline PointFormat point_format_from_path(const std::filesystem::path& path) {
    const auto ext = detail::lower(path.extension().string());
    if (ext == ".ply") return PointFormat::PlyBinaryLE;
    return PointFormat::XyzAscii;
}

inline MeshFormat mesh_format_from_path(const std::filesystem::path& path) {
    return detail::lower(path.extension().string()) == ".ply" ? MeshFormat::PlyAscii : MeshFormat::Obj;
}

/// Loads "x y z nx ny nz" samples. PLY variants are detected from the header,
/// so `format` only distinguishes xyz text from PLY.
inline PointLoadResult load_points(const std::filesystem::path& path, PointFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    PointLoadResult out;
    if (format == PointFormat::XyzAscii) {
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto tok = detail::split_ws(line);
            if (tok.empty() || tok[0].front() == '#') continue;
            if (tok.size() != 6) throw ParseError("expected 6 values (x y z nx ny nz), got " + std::to_string(tok.size()), lineno);
            double v[6];
            for (int k = 0; k < 6; ++k)
                if (!detail::parse_double(tok[k], v[k])) throw ParseError("bad number '" + std::string(tok[k]) + "'", lineno);
            detail::add_sample(out, Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5]));
        }
    } else {
        auto ply = detail::read_ply(in);
        const auto slot = detail::xyz_normal_slots(ply.vertex_element, 0);
        for (const auto& row : ply.vertex_rows)
            detail::add_sample(out, Vec3(row[slot[0]], row[slot[1]], row[slot[2]]),
                               Vec3(row[slot[3]], row[slot[4]], row[slot[5]]));
    }
    if (out.points.empty()) throw Error("empty point set");
    return out;
}

inline void save_points(const HermitePointSet& ps, const std::filesystem::path& path, PointFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    using detail::fmt9;
    if (format == PointFormat::XyzAscii) {
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const auto& p = ps.points[i];
            const auto& n = ps.normals[i];
            out << fmt9(p.x()) << ' ' << fmt9(p.y()) << ' ' << fmt9(p.z()) << ' '
                << fmt9(n.x()) << ' ' << fmt9(n.y()) << ' ' << fmt9(n.z()) << '\n';
        }
    } else {
        const bool binary = format == PointFormat::PlyBinaryLE;
        out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
            << "element vertex " << ps.size() << '\n';
        for (const char* name : {"x", "y", "z", "nx", "ny", "nz"}) out << "property float " << name << '\n';
        out << "end_header\n";
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const double v[6] = {ps.points[i].x(), ps.points[i].y(), ps.points[i].z(),
                                 ps.normals[i].x(), ps.normals[i].y(), ps.normals[i].z()};
            if (binary) {
                for (double d : v) {
                    const auto f = static_cast<float>(d);
                    out.write(reinterpret_cast<const char*>(&f), sizeof f);
                }
            } else {
                for (int k = 0; k < 6; ++k) out << (k ? " " : "") << fmt9(v[k]);
                out << '\n';
            }
        }
    }
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

/// Maps the cloud into [-1,1]^3: the bbox center goes to the origin and the
/// longest axis spans exactly [-1,1]. Normals are untouched (uniform scale).
inline std::pair<HermitePointSet, Similarity> normalize_to_unit_box(const HermitePointSet& ps) {
    if (ps.empty()) throw Error("empty point set");
    AABB box;
    for (const auto& p : ps.points) box.extend(p);
    const double longest = box.extent().maxCoeff();
    if (!(longest > 0.0)) throw Error("degenerate extent");
    Similarity tf;
    tf.scale = 2.0 / longest;
    tf.translate = -tf.scale * box.center();
    HermitePointSet out;
    out.points.reserve(ps.size());
    out.normals = ps.normals;
    for (const auto& p : ps.points) out.points.push_back(tf.apply(p));
    out.recompute_bbox();
    return {std::move(out), tf};
}

inline void save_mesh(const QuadMesh& mesh, const std::filesystem::path& path, MeshFormat format) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    using detail::fmt9;
    if (format == MeshFormat::Obj) {
        for (const auto& v : mesh.vertices) out << "v " << fmt9(v.x()) << ' ' << fmt9(v.y()) << ' ' << fmt9(v.z()) << '\n';
        for (const auto& q : mesh.quads)
            out << "f " << q[0] + 1 << ' ' << q[1] + 1 << ' ' << q[2] + 1 << ' ' << q[3] + 1 << '\n';
        for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    } else {
        const bool normals = mesh.vertex_normals.size() == mesh.vertices.size() && !mesh.vertices.empty();
        const auto tris = triangulate(mesh);
        out << "ply\nformat ascii 1.0\nelement vertex " << mesh.vertices.size() << '\n'
            << "property float x\nproperty float y\nproperty float z\n";
        if (normals) out << "property float nx\nproperty float ny\nproperty float nz\n";
        out << "element face " << tris.size() << "\nproperty list uchar int vertex_indices\nend_header\n";
        for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
            const auto& v = mesh.vertices[i];
            out << fmt9(v.x()) << ' ' << fmt9(v.y()) << ' ' << fmt9(v.z());
            if (normals) {
                const auto& n = mesh.vertex_normals[i];
                out << ' ' << fmt9(n.x()) << ' ' << fmt9(n.y()) << ' ' << fmt9(n.z());
            }
            out << '\n';
        }
        for (const auto& t : tris) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    }
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

/// Reads an OBJ (v/f records; n-gons with n > 4 are fan-split) or a PLY mesh.
inline QuadMesh load_mesh(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    QuadMesh mesh;
    auto add_face = [&](const std::vector<std::uint32_t>& f, std::size_t lineno) {
        for (auto idx : f)
            if (idx >= mesh.vertices.size()) throw ParseError("face index out of range", lineno);
        if (f.size() == 3) mesh.triangles.push_back({f[0], f[1], f[2]});
        else if (f.size() == 4) mesh.quads.push_back({f[0], f[1], f[2], f[3]});
        else if (f.size() > 4)
            for (std::size_t k = 1; k + 1 < f.size(); ++k) mesh.triangles.push_back({f[0], f[k], f[k + 1]});
        else throw ParseError("face with fewer than 3 vertices", lineno);
    };
    if (mesh_format_from_path(path) == MeshFormat::PlyAscii) {
        auto ply = detail::read_ply(in);
        const auto& e = ply.vertex_element;
        int sx = -1, sy = -1, sz = -1;
        for (std::size_t k = 0; k < e.props.size(); ++k) {
            if (e.props[k].name == "x") sx = static_cast<int>(k);
            if (e.props[k].name == "y") sy = static_cast<int>(k);
            if (e.props[k].name == "z") sz = static_cast<int>(k);
        }
        if (sx < 0 || sy < 0 || sz < 0) throw ParseError("vertex element lacks x/y/z", 0);
        for (const auto& row : ply.vertex_rows) mesh.vertices.emplace_back(row[sx], row[sy], row[sz]);
        for (const auto& f : ply.faces) add_face(f, 0);
        return mesh;
    }
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::pair<std::vector<long>, std::size_t>> pending;
    while (std::getline(in, line)) {
        ++lineno;
        auto tok = detail::split_ws(line);
        if (tok.empty() || tok[0].front() == '#') continue;
        if (tok[0] == "v") {
            double v[3];
            if (tok.size() < 4) throw ParseError("vertex needs 3 coordinates", lineno);
            for (int k = 0; k < 3; ++k)
                if (!detail::parse_double(tok[k + 1], v[k])) throw ParseError("bad vertex coordinate", lineno);
            mesh.vertices.emplace_back(v[0], v[1], v[2]);
        } else if (tok[0] == "f") {
            std::vector<long> idx;
            for (std::size_t k = 1; k < tok.size(); ++k) {
                auto field = tok[k].substr(0, tok[k].find('/'));
                long i = 0;
                if (!detail::parse_long(field, i) || i == 0) throw ParseError("bad face index", lineno);
                // negative indices are relative to the vertices read so far
                idx.push_back(i > 0 ? i - 1 : static_cast<long>(mesh.vertices.size()) + i);
            }
            pending.emplace_back(std::move(idx), lineno);
        }
    }
    for (const auto& [idx, ln] : pending) {
        std::vector<std::uint32_t> f;
        for (long i : idx) {
            if (i < 0) throw ParseError("face index out of range", ln);
            f.push_back(static_cast<std::uint32_t>(i));
        }
        add_face(f, ln);
    }
    return mesh;
}

}  // namespace hrbf
