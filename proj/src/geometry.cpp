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

#include "o3w/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "o3w/error.hpp"

namespace o3w {

double wrap_angle(double radians)
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double r = std::fmod(radians + std::numbers::pi, two_pi);
    if (r < 0.0) r += two_pi;
    r -= std::numbers::pi;
    // fmod can land exactly on +π after the shift.
    if (r >= std::numbers::pi) r -= two_pi;
    return r;
}

bool Box3D::valid() const
{
    const bool finite = std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && std::isfinite(yaw);
    return finite && x_size > 0.0 && y_size > 0.0 && z_size > 0.0;
}

bool Box3D::contains(const Point3& p, double margin) const
{
    const double dx = p.x - x, dy = p.y - y;
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    const double lz = p.z - z;
    return std::abs(lx) <= x_size / 2 + margin && std::abs(ly) <= y_size / 2 + margin &&
           std::abs(lz) <= z_size / 2 + margin;
}

namespace {

std::size_t exact_division(double span, double step, const char* what)
{
    const double q = span / step;
    const double r = std::round(q);
    if (!(r >= 1.0) || std::abs(q - r) > 1e-6 * std::max(1.0, r)) {
        throw ConfigError(std::string(what) + " range is not a whole number of voxels");
    }
    return static_cast<std::size_t>(r);
}

}  // namespace

void GridConfig::validate() const
{
    if (!(x_max > x_min) || !(y_max > y_min) || !(z_max > z_min)) throw ConfigError("grid range must be non-empty");
    if (!(voxel > 0.0)) throw ConfigError("voxel size must be positive");
    if (out_factor < 1) throw ConfigError("out_factor must be at least 1");
    const std::size_t vx = exact_division(x_max - x_min, voxel, "x");
    const std::size_t vy = exact_division(y_max - y_min, voxel, "y");
    exact_division(z_max - z_min, voxel, "z");
    if (vx % out_factor != 0 || vy % out_factor != 0) {
        throw ConfigError("voxel counts " + std::to_string(vx) + "x" + std::to_string(vy) +
                          " are not divisible by out_factor " + std::to_string(out_factor));
    }
}

std::size_t GridConfig::voxels_x() const { return exact_division(x_max - x_min, voxel, "x"); }
std::size_t GridConfig::voxels_y() const { return exact_division(y_max - y_min, voxel, "y"); }
std::size_t GridConfig::voxels_z() const { return exact_division(z_max - z_min, voxel, "z"); }

VoxelGrid::VoxelGrid(std::size_t nx, std::size_t ny, std::size_t nz)
    : nx_(nx), ny_(ny), nz_(nz), cells_(nx * ny * nz, 0)
{
}

std::size_t VoxelGrid::occupied() const
{
    return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

VoxelGrid voxelize(const PointCloud& cloud, const GridConfig& cfg)
{
    cfg.validate();
    const std::size_t vx = cfg.voxels_x(), vy = cfg.voxels_y(), vz = cfg.voxels_z();
    VoxelGrid grid(vx, vy, vz);
    auto cell = [&](double v, double lo, double hi, std::size_t count) -> std::optional<std::size_t> {
        if (!std::isfinite(v) || v < lo || v >= hi) return std::nullopt;
        const auto i = static_cast<std::size_t>(std::floor((v - lo) / cfg.voxel));
        // Rounding can push values just below hi onto the next index.
        return std::min(i, count - 1);
    };
    for (const Point3& p : cloud.points) {
        const auto ix = cell(p.x, cfg.x_min, cfg.x_max, vx);
        const auto iy = cell(p.y, cfg.y_min, cfg.y_max, vy);
        const auto iz = cell(p.z, cfg.z_min, cfg.z_max, vz);
        if (ix && iy && iz) grid.set(*ix, *iy, *iz);
    }
    return grid;
}

BevBox project_box_to_bev(const Box3D& box, const GridConfig& cfg)
{
    const double s = cfg.cell_size();
    return BevBox{(box.x - cfg.x_min) / s, (box.y - cfg.y_min) / s, box.x_size / s, box.y_size / s, box.yaw};
}

std::array<std::array<double, 2>, 4> bev_corners(const BevBox& box)
{
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    const double hx = box.x_size / 2, hy = box.y_size / 2;
    const std::array<std::array<double, 2>, 4> local{{{hx, hy}, {-hx, hy}, {-hx, -hy}, {hx, -hy}}};
    std::array<std::array<double, 2>, 4> out{};
    // local order (+,+) (−,+) (−,−) (+,−) is counter-clockwise
    for (std::size_t i = 0; i < 4; ++i) {
        out[i] = {box.x + c * local[i][0] - s * local[i][1], box.y + s * local[i][0] + c * local[i][1]};
    }
    return out;
}

namespace {

using Vec2 = std::array<double, 2>;

double cross(const Vec2& o, const Vec2& a, const Vec2& b)
{
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

double polygon_area(const std::vector<Vec2>& poly)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % poly.size()];
        acc += p[0] * q[1] - p[1] * q[0];
    }
    return std::abs(acc) / 2.0;
}

// Sutherland–Hodgman: keeps the part of `subject` left of the directed edge a→b.
std::vector<Vec2> clip_edge(const std::vector<Vec2>& subject, const Vec2& a, const Vec2& b)
{
    std::vector<Vec2> out;
    out.reserve(subject.size() + 2);
    for (std::size_t i = 0; i < subject.size(); ++i) {
        const Vec2& p = subject[i];
        const Vec2& q = subject[(i + 1) % subject.size()];
        const double sp = cross(a, b, p);
        const double sq = cross(a, b, q);
        if (sp >= 0.0) out.push_back(p);
        if ((sp >= 0.0) != (sq >= 0.0)) {
            const double t = sp / (sp - sq);
            out.push_back({p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])});
        }
    }
    return out;
}

constexpr double kDegenerateArea = 1e-12;

}  // namespace

double bev_iou(const BevBox& a, const BevBox& b)
{
    const double area_a = a.x_size * a.y_size;
    const double area_b = b.x_size * b.y_size;
    if (!(area_a > kDegenerateArea) || !(area_b > kDegenerateArea)) return 0.0;

    const auto ca = bev_corners(a);
    const auto cb = bev_corners(b);
    std::vector<Vec2> poly(ca.begin(), ca.end());
    for (std::size_t i = 0; i < 4 && !poly.empty(); ++i) poly = clip_edge(poly, cb[i], cb[(i + 1) % 4]);
    const double inter = poly.size() < 3 ? 0.0 : polygon_area(poly);
    const double uni = area_a + area_b - inter;
    if (!(uni > kDegenerateArea)) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<std::size_t> nms(std::span<const ScoredBox> dets, double iou_threshold)
{
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return dets[i].score > dets[j].score; });
    std::vector<std::size_t> kept;
    std::vector<bool> suppressed(dets.size(), false);
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const std::size_t i = order[oi];
        if (suppressed[i]) continue;
        kept.push_back(i);
        for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
            const std::size_t j = order[oj];
            if (!suppressed[j] && bev_iou(dets[i].box, dets[j].box) > iou_threshold) suppressed[j] = true;
        }
    }
    return kept;
}

}  // namespace o3w
