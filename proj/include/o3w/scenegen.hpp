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
#include <cstdint>
#include <string>
#include <vector>

#include "o3w/geometry.hpp"
#include "o3w/random.hpp"

namespace o3w {

/// Per-axis size distribution (x, y, z extents in meters).
struct SizePrior {
    std::array<double, 3> mean{1.0, 1.0, 1.0};
    std::array<double, 3> sigma{0.0, 0.0, 0.0};
};

struct ClassPrior {
    std::string word;
    SizePrior size;
};

struct SceneGenConfig {
    std::vector<ClassPrior> classes;
    std::size_t objects_min = 2;
    std::size_t objects_max = 5;
    double density = 20.0;  // points per m² of visible surface
    std::size_t clutter = 200;
    double x_min = -12.8, y_min = -12.8, x_max = 12.8, y_max = 12.8;
    double margin = 1.5;  // keep centers this far inside the range
    std::uint64_t seed = 0;
    bool velocity = false;
    double max_speed = 10.0;

    /// car / pedestrian / truck with typical road-user sizes.
    static SceneGenConfig make_default();
    void validate() const;
    /// Copies the x/y range of a grid.
    void set_range(const GridConfig& grid);
};

struct Annotation {
    Box3D box;
    std::string label;
};

struct Scene {
    PointCloud cloud;
    std::vector<Annotation> annotations;
    std::uint64_t seed = 0;
};

/// Points uniform on the four sides and the top of the box;
/// round(density · area) per face.
PointCloud sample_box_points(const Box3D& box, double density, Rng& rng);

/// Deterministic in (cfg, index). Throws ConfigError when an object cannot
/// be placed without BEV overlap after 1000 attempts.
Scene gen_scene(const SceneGenConfig& cfg, std::size_t index);

struct DatasetSplit {
    std::vector<std::size_t> train, val, test;
};

/// Shuffles 0..n−1 by seed and cuts it by the (train, val, test) fractions.
DatasetSplit split_dataset(std::size_t n, std::array<double, 3> fractions, std::uint64_t seed);

}  // namespace o3w
