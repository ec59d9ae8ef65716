#include "surfmatch/geom/ply.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include "surfmatch/error.hpp"

namespace surfmatch {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary PLY I/O assumes a little-endian host");

enum class ScalarType { kInt8, kUint8, kInt16, kUint16, kInt32, kUint32, kFloat32, kFloat64 };

ScalarType parse_type(const std::string &name) {
    if (name == "char" || name == "int8") return ScalarType::kInt8;
    if (name == "uchar" || name == "uint8") return ScalarType::kUint8;
    if (name == "short" || name == "int16") return ScalarType::kInt16;
    if (name == "ushort" || name == "uint16") return ScalarType::kUint16;
    if (name == "int" || name == "int32") return ScalarType::kInt32;
    if (name == "uint" || name == "uint32") return ScalarType::kUint32;
    if (name == "float" || name == "float32") return ScalarType::kFloat32;
    if (name == "double" || name == "float64") return ScalarType::kFloat64;
    throw Error(ErrorCode::kFormat, "ply: unknown property type '" + name + "'");
}

struct Property {
    std::string name;
    ScalarType type = ScalarType::kFloat32;
    bool is_list = false;
    ScalarType count_type = ScalarType::kUint8;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> properties;
};

class ValueReader {
public:
    ValueReader(std::istream &in, bool binary) : in_(in), binary_(binary) {}

    double read(ScalarType t) {
        if (!binary_) {
            std::string token;
            if (!(in_ >> token)) throw Error(ErrorCode::kFormat, "ply: unexpected end of ascii data");
            try {
                return std::stod(token);
            } catch (const std::exception &) {
                throw Error(ErrorCode::kFormat, "ply: bad ascii value '" + token + "'");
            }
        }
        switch (t) {
            case ScalarType::kInt8: return raw<std::int8_t>();
            case ScalarType::kUint8: return raw<std::uint8_t>();
            case ScalarType::kInt16: return raw<std::int16_t>();
            case ScalarType::kUint16: return raw<std::uint16_t>();
            case ScalarType::kInt32: return raw<std::int32_t>();
            case ScalarType::kUint32: return raw<std::uint32_t>();
            case ScalarType::kFloat32: return raw<float>();
            case ScalarType::kFloat64: return raw<double>();
        }
        return 0.0;
    }

private:
    template <class T>
    double raw() {
        T v{};
        in_.read(reinterpret_cast<char *>(&v), sizeof(T));
        if (!in_) throw Error(ErrorCode::kFormat, "ply: unexpected end of binary data");
        return static_cast<double>(v);
    }

    std::istream &in_;
    bool binary_;
};

template <class T>
void put(std::ostream &out, T v) {
    out.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

}  // namespace

PlyData read_ply(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());

    std::string line;
    std::getline(in, line);
    if (line.rfind("ply", 0) != 0) throw Error(ErrorCode::kFormat, path.string() + " is not a PLY file");

    bool binary = false;
    std::vector<Element> elements;
    for (;;) {
        if (!std::getline(in, line)) throw Error(ErrorCode::kFormat, "ply: missing end_header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "end_header") break;
        if (key == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt == "ascii") {
                binary = false;
            } else if (fmt == "binary_little_endian") {
                binary = true;
            } else {
                throw Error(ErrorCode::kFormat, "ply: unsupported format '" + fmt + "'");
            }
        } else if (key == "element") {
            Element e;
            ss >> e.name >> e.count;
            elements.push_back(e);
        } else if (key == "property") {
            if (elements.empty()) throw Error(ErrorCode::kFormat, "ply: property before element");
            Property p;
            std::string type;
            ss >> type;
            if (type == "list") {
                std::string count_type, item_type;
                ss >> count_type >> item_type >> p.name;
                p.is_list = true;
                p.count_type = parse_type(count_type);
                p.type = parse_type(item_type);
            } else {
                p.type = parse_type(type);
                ss >> p.name;
            }
            elements.back().properties.push_back(p);
        }
        // comment / obj_info lines are ignored
    }

    PlyData data;
    ValueReader reader(in, binary);
    for (const auto &e : elements) {
        auto slot = [&](const char *name) {
            for (std::size_t i = 0; i < e.properties.size(); ++i) {
                if (e.properties[i].name == name) return static_cast<int>(i);
            }
            return -1;
        };
        const bool is_vertex = e.name == "vertex";
        const bool has_normals = is_vertex && slot("nx") >= 0 && slot("ny") >= 0 && slot("nz") >= 0;
        const bool has_colors = is_vertex && slot("red") >= 0 && slot("green") >= 0 && slot("blue") >= 0;
        if (is_vertex && (slot("x") < 0 || slot("y") < 0 || slot("z") < 0)) {
            throw Error(ErrorCode::kFormat, "ply: vertex element lacks x/y/z");
        }

        std::vector<double> values(e.properties.size());
        for (std::size_t row = 0; row < e.count; ++row) {
            std::vector<int> list;
            for (std::size_t pi = 0; pi < e.properties.size(); ++pi) {
                const auto &p = e.properties[pi];
                if (p.is_list) {
                    const auto n = static_cast<std::size_t>(reader.read(p.count_type));
                    std::vector<int> items(n);
                    for (auto &it : items) it = static_cast<int>(reader.read(p.type));
                    if (p.name == "vertex_indices" || p.name == "vertex_index") list = std::move(items);
                } else {
                    values[pi] = reader.read(p.type);
                }
            }
            if (is_vertex) {
                data.vertices.emplace_back(values[slot("x")], values[slot("y")], values[slot("z")]);
                if (has_normals) data.normals.emplace_back(values[slot("nx")], values[slot("ny")], values[slot("nz")]);
                if (has_colors) {
                    data.colors.push_back({static_cast<std::uint8_t>(values[slot("red")]),
                                           static_cast<std::uint8_t>(values[slot("green")]),
                                           static_cast<std::uint8_t>(values[slot("blue")])});
                }
            } else if (e.name == "face") {
                for (std::size_t k = 1; k + 1 < list.size(); ++k) {
                    data.faces.push_back({list[0], list[k], list[k + 1]});
                }
            } else if (e.name == "edge") {
                const int a = slot("vertex1"), b = slot("vertex2");
                if (a >= 0 && b >= 0) {
                    data.edges.emplace_back(static_cast<int>(values[a]), static_cast<int>(values[b]));
                }
            }
        }
    }

    const auto nv = static_cast<int>(data.vertices.size());
    for (const auto &f : data.faces) {
        for (int v : f) {
            if (v < 0 || v >= nv) throw Error(ErrorCode::kFormat, "ply: face index out of range");
        }
    }
    return data;
}

void write_ply(const std::filesystem::path &path, const PlyData &data, PlyFormat format) {
    const bool normals = !data.normals.empty();
    const bool colors = !data.colors.empty();
    if (normals && data.normals.size() != data.vertices.size()) {
        throw Error(ErrorCode::kInvalidArgument, "ply: normal count differs from vertex count");
    }
    if (colors && data.colors.size() != data.vertices.size()) {
        throw Error(ErrorCode::kInvalidArgument, "ply: color count differs from vertex count");
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    const bool binary = format == PlyFormat::kBinaryLittleEndian;

    out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
    out << "element vertex " << data.vertices.size() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    if (normals) out << "property double nx\nproperty double ny\nproperty double nz\n";
    if (colors) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    if (!data.faces.empty()) {
        out << "element face " << data.faces.size() << "\nproperty list uchar int vertex_indices\n";
    }
    if (!data.edges.empty()) {
        out << "element edge " << data.edges.size() << "\nproperty int vertex1\nproperty int vertex2\n";
    }
    out << "end_header\n";

    if (binary) {
        for (std::size_t i = 0; i < data.vertices.size(); ++i) {
            for (int c = 0; c < 3; ++c) put<double>(out, data.vertices[i][c]);
            if (normals) for (int c = 0; c < 3; ++c) put<double>(out, data.normals[i][c]);
            if (colors) for (int c = 0; c < 3; ++c) put<std::uint8_t>(out, data.colors[i][c]);
        }
        for (const auto &f : data.faces) {
            put<std::uint8_t>(out, 3);
            for (int v : f) put<std::int32_t>(out, v);
        }
        for (const auto &[a, b] : data.edges) {
            put<std::int32_t>(out, a);
            put<std::int32_t>(out, b);
        }
    } else {
        out << std::setprecision(std::numeric_limits<double>::max_digits10);
        for (std::size_t i = 0; i < data.vertices.size(); ++i) {
            out << data.vertices[i].x() << ' ' << data.vertices[i].y() << ' ' << data.vertices[i].z();
            if (normals) out << ' ' << data.normals[i].x() << ' ' << data.normals[i].y() << ' ' << data.normals[i].z();
            if (colors) {
                out << ' ' << int(data.colors[i][0]) << ' ' << int(data.colors[i][1]) << ' ' << int(data.colors[i][2]);
            }
            out << '\n';
        }
        for (const auto &f : data.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
        for (const auto &[a, b] : data.edges) out << a << ' ' << b << '\n';
    }
    if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

PointCloud read_point_cloud(const std::filesystem::path &path) {
    auto data = read_ply(path);
    return PointCloud(std::move(data.vertices));
}

void write_point_cloud(const std::filesystem::path &path, const PointCloud &cloud, PlyFormat format) {
    PlyData data;
    data.vertices = cloud.points;
    write_ply(path, data, format);
}

}  // namespace surfmatch
