#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "surfmatch/geom/types.hpp"

namespace surfmatch {

enum class PlyFormat { kAscii, kBinaryLittleEndian };

using Rgb = std::array<std::uint8_t, 3>;

/// Contents of a PLY file this library understands: vertices with optional
/// normals and colors, triangle faces, and line-segment edges.
struct PlyData {
    std::vector<Vec3> vertices;
    std::vector<Vec3> normals;  // empty or one per vertex
    std::vector<Rgb> colors;    // empty or one per vertex
    std::vector<std::array<int, 3>> faces;
    std::vector<std::pair<int, int>> edges;
};

/// Reads ASCII or binary little-endian PLY. Polygon faces are fan-triangulated;
/// unknown elements and properties are skipped.
PlyData read_ply(const std::filesystem::path &path);

void write_ply(const std::filesystem::path &path, const PlyData &data,
               PlyFormat format = PlyFormat::kBinaryLittleEndian);

PointCloud read_point_cloud(const std::filesystem::path &path);
void write_point_cloud(const std::filesystem::path &path, const PointCloud &cloud,
                       PlyFormat format = PlyFormat::kBinaryLittleEndian);

}  // namespace surfmatch
