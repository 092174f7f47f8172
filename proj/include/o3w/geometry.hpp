// Copyright 2026 The o3w Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace o3w {

struct Point3 {
    double x = 0.0, y = 0.0, z = 0.0;
    friend bool operator==(const Point3&, const Point3&) = default;
};

struct PointCloud {
    std::vector<Point3> points;
};

/// Wraps an angle into [−π, π).
double wrap_angle(double radians);

/// Oriented 3D box: center, full extents and heading in meters/radians.
struct Box3D {
    double x = 0.0, y = 0.0, z = 0.0;
    double x_size = 1.0, y_size = 1.0, z_size = 1.0;
    double yaw = 0.0;
    std::optional<std::array<double, 2>> velocity;

    bool valid() const;
    /// True if p lies inside the box grown by `margin` on every side.
    bool contains(const Point3& p, double margin = 0.0) const;
    friend bool operator==(const Box3D&, const Box3D&) = default;
};

/// Point-cloud range, voxel size and backbone downsampling.
///
/// The BEV grid has nx = (x_max − x_min)/(voxel·out_factor) cells along x and
/// ny cells along y; a flattened BEV row index is y·nx + x.
struct GridConfig {
    double x_min = -12.8, y_min = -12.8;
    double x_max = 12.8, y_max = 12.8;
    double z_min = -0.4, z_max = 2.8;
    double voxel = 0.4;
    std::size_t out_factor = 2;

    /// Throws ConfigError when the ranges are empty or do not divide evenly.
    void validate() const;

    std::size_t voxels_x() const;
    std::size_t voxels_y() const;
    std::size_t voxels_z() const;
    std::size_t nx() const { return voxels_x() / out_factor; }
    std::size_t ny() const { return voxels_y() / out_factor; }
    std::size_t cells() const { return nx() * ny(); }
    /// Meters per BEV cell (voxel·out_factor).
    double cell_size() const { return voxel * static_cast<double>(out_factor); }

    friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

/// Binary occupancy. Voxel (ix, iy, iz) is stored at ((iy·X + ix)·Z + iz), so
/// every z-column is contiguous.
class VoxelGrid {
public:
    VoxelGrid(std::size_t nx, std::size_t ny, std::size_t nz);

    std::size_t size_x() const { return nx_; }
    std::size_t size_y() const { return ny_; }
    std::size_t size_z() const { return nz_; }
    std::size_t index(std::size_t ix, std::size_t iy, std::size_t iz) const { return (iy * nx_ + ix) * nz_ + iz; }
    std::uint8_t at(std::size_t ix, std::size_t iy, std::size_t iz) const { return cells_[index(ix, iy, iz)]; }
    void set(std::size_t ix, std::size_t iy, std::size_t iz) { cells_[index(ix, iy, iz)] = 1; }
    std::span<const std::uint8_t> cells() const { return cells_; }
    std::size_t occupied() const;

    friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;

private:
    std::size_t nx_, ny_, nz_;
    std::vector<std::uint8_t> cells_;
};

/// Box footprint in continuous BEV grid units.
struct BevBox {
    double x = 0.0, y = 0.0;
    double x_size = 1.0, y_size = 1.0;
    double yaw = 0.0;
};

/// Marks every voxel containing at least one point. Cells are half-open
/// [lo, hi); points outside the range or z bounds are dropped.
VoxelGrid voxelize(const PointCloud& cloud, const GridConfig& cfg);

BevBox project_box_to_bev(const Box3D& box, const GridConfig& cfg);

/// Corners of the rotated rectangle, counter-clockwise.
std::array<std::array<double, 2>, 4> bev_corners(const BevBox& box);

/// Rotated-rectangle IoU by convex clipping. Degenerate boxes give 0.
double bev_iou(const BevBox& a, const BevBox& b);

struct ScoredBox {
    BevBox box;
    double score = 0.0;
};

/// Greedy NMS. Visits boxes by descending score (lower index first on ties)
/// and drops any box whose IoU with an already kept box exceeds the
/// threshold. Returns kept indices in visit order.
std::vector<std::size_t> nms(std::span<const ScoredBox> dets, double iou_threshold);

}  // namespace o3w
