#pragma once

// ASCII readers and writers: PLY point clouds, OBJ/PLY triangle meshes and
// CSV heightfields.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "asee/geometry.hpp"
#include "asee/surfaces.hpp"

namespace asee::io {

namespace detail {

inline std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

struct PlyHeader {
    std::size_t vertex_count = 0;
    std::size_t face_count = 0;
    std::vector<std::string> vertex_props;
};

inline PlyHeader read_ply_header(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw IoError("not a PLY file");
    PlyHeader h;
    std::string current;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "ascii") throw IoError("only ASCII PLY is supported");
        } else if (tok == "element") {
            std::size_t n = 0;
            ls >> current >> n;
            if (current == "vertex") h.vertex_count = n;
            else if (current == "face") h.face_count = n;
        } else if (tok == "property" && current == "vertex") {
            std::string type, name;
            ls >> type >> name;
            h.vertex_props.push_back(name);
        } else if (tok == "end_header") {
            return h;
        }
    }
    throw IoError("PLY header not terminated");
}

inline int prop_index(const PlyHeader& h, const std::string& name) {
    for (std::size_t i = 0; i < h.vertex_props.size(); ++i)
        if (h.vertex_props[i] == name) return static_cast<int>(i);
    return -1;
}

} // namespace detail

inline void write_ply(const std::filesystem::path& path, const PointCloud& cloud) {
    auto out = detail::open_out(path);
    const bool normals = cloud.has_normals();
    out << "ply\nformat ascii 1.0\n";
    if (!cloud.frame_id.empty()) out << "comment frame " << cloud.frame_id << "\n";
    out << "element vertex " << cloud.size() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    if (normals) out << "property double nx\nproperty double ny\nproperty double nz\n";
    out << "end_header\n";
    out << std::setprecision(17);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        out << p.x() << ' ' << p.y() << ' ' << p.z();
        if (normals) out << ' ' << cloud.normals[i].x() << ' ' << cloud.normals[i].y() << ' ' << cloud.normals[i].z();
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

inline PointCloud read_ply(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    const auto h = detail::read_ply_header(in);
    const int ix = detail::prop_index(h, "x"), iy = detail::prop_index(h, "y"), iz = detail::prop_index(h, "z");
    const int inx = detail::prop_index(h, "nx"), iny = detail::prop_index(h, "ny"), inz = detail::prop_index(h, "nz");
    if (ix < 0 || iy < 0 || iz < 0) throw IoError("PLY vertex lacks x/y/z");
    const bool normals = inx >= 0 && iny >= 0 && inz >= 0;
    PointCloud c;
    std::vector<double> vals(h.vertex_props.size());
    for (std::size_t i = 0; i < h.vertex_count; ++i) {
        for (auto& v : vals)
            if (!(in >> v)) throw IoError("truncated PLY vertex data");
        c.points.emplace_back(vals[ix], vals[iy], vals[iz]);
        if (normals) c.normals.emplace_back(vals[inx], vals[iny], vals[inz]);
    }
    return c;
}

inline TriangleMesh read_mesh_obj(std::istream& in) {
    TriangleMesh m;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "v") {
            double x, y, z;
            ls >> x >> y >> z;
            m.vertices.emplace_back(x, y, z);
        } else if (tok == "f") {
            std::vector<std::size_t> idx;
            std::string ref;
            while (ls >> ref) {
                // "i", "i/t", "i//n", "i/t/n"; negative indices are relative.
                const long v = std::stol(ref.substr(0, ref.find('/')));
                const long abs_idx = v > 0 ? v - 1 : static_cast<long>(m.vertices.size()) + v;
                if (abs_idx < 0) throw IoError("OBJ face index out of range");
                idx.push_back(static_cast<std::size_t>(abs_idx));
            }
            for (std::size_t k = 1; k + 1 < idx.size(); ++k) m.faces.push_back({idx[0], idx[k], idx[k + 1]});
        }
    }
    return m;
}

inline TriangleMesh read_mesh_ply(std::istream& in) {
    const auto h = detail::read_ply_header(in);
    const int ix = detail::prop_index(h, "x"), iy = detail::prop_index(h, "y"), iz = detail::prop_index(h, "z");
    if (ix < 0 || iy < 0 || iz < 0) throw IoError("PLY vertex lacks x/y/z");
    TriangleMesh m;
    std::vector<double> vals(h.vertex_props.size());
    for (std::size_t i = 0; i < h.vertex_count; ++i) {
        for (auto& v : vals)
            if (!(in >> v)) throw IoError("truncated PLY vertex data");
        m.vertices.emplace_back(vals[ix], vals[iy], vals[iz]);
    }
    for (std::size_t i = 0; i < h.face_count; ++i) {
        std::size_t n = 0;
        if (!(in >> n)) throw IoError("truncated PLY face data");
        std::vector<std::size_t> idx(n);
        for (auto& v : idx) in >> v;
        for (std::size_t k = 1; k + 1 < n; ++k) m.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
    return m;
}

/// Loads an ASCII OBJ or PLY mesh (by extension) and builds its BVH.
inline TriangleMesh read_mesh(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    auto ext = path.extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    TriangleMesh m = ext == ".ply" ? read_mesh_ply(in) : read_mesh_obj(in);
    m.finalize();
    return m;
}

inline void write_mesh_obj(const std::filesystem::path& path, const TriangleMesh& m) {
    auto out = detail::open_out(path);
    out << std::setprecision(17);
    for (const auto& v : m.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& f : m.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

/// Header line `cell_size, origin_x, origin_y`, then one comma-separated row
/// of z values per lattice row (row index along y).
inline Heightfield read_heightfield_csv(std::istream& in) {
    auto split = [](const std::string& line) {
        std::vector<double> v;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            if (cell.find_first_not_of(" \t\r") == std::string::npos) continue;
            v.push_back(std::stod(cell));
        }
        return v;
    };
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty heightfield file");
    const auto head = split(line);
    if (head.size() != 3) throw IoError("heightfield header must be: cell_size, origin_x, origin_y");
    Heightfield h;
    h.cell_size = head[0];
    h.origin_x = head[1];
    h.origin_y = head[2];
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto row = split(line);
        if (h.cols == 0) h.cols = row.size();
        if (row.size() != h.cols) throw IoError("heightfield rows have unequal length");
        h.z.insert(h.z.end(), row.begin(), row.end());
        ++h.rows;
    }
    if (h.rows < 2 || h.cols < 2) throw IoError("heightfield needs at least 2x2 samples");
    h.finalize();
    return h;
}

inline Heightfield read_heightfield_csv(const std::filesystem::path& path) {
    auto in = detail::open_in(path);
    return read_heightfield_csv(in);
}

inline void write_heightfield_csv(const std::filesystem::path& path, const Heightfield& h) {
    auto out = detail::open_out(path);
    out << std::setprecision(17) << h.cell_size << ", " << h.origin_x << ", " << h.origin_y << '\n';
    for (std::size_t r = 0; r < h.rows; ++r) {
        for (std::size_t c = 0; c < h.cols; ++c) out << (c ? "," : "") << h.at(r, c);
        out << '\n';
    }
}

} // namespace asee::io
