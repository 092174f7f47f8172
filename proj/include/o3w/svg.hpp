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

#include <string>
#include <vector>

#include "o3w/evaldetect.hpp"
#include "o3w/scenegen.hpp"

namespace o3w {

/// Stable per-word color as "#rrggbb".
std::string word_color(const std::string& word);

struct PlotInput {
    const Scene* scene = nullptr;
    std::vector<Detection> detections;
    std::vector<std::string> words;  // label index → word
    double x_min = -12.8, y_min = -12.8, x_max = 12.8, y_max = 12.8;
};

/// Top-down plot: points as dots, ground truth dashed, detections solid in
/// their word's color, and a legend.
std::string render_bev_svg(const PlotInput& in);

}  // namespace o3w
