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

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "o3w/geometry.hpp"
#include "o3w/tensor.hpp"

namespace o3w {

struct Detection {
    Box3D box;
    std::size_t label = 0;
    double score = 0.0;
};

struct GroundTruth {
    Box3D box;
    std::size_t label = 0;
};

struct DecodeConfig {
    double score_threshold = 0.3;
    double nms_iou = 0.2;
};

/// Per text column: sigmoid scores, 3×3 local maxima (≥ every neighbor) above
/// the threshold, decode, class-wise NMS. Sorted by descending score, then
/// label, then cell.
std::vector<Detection> decode_detections(const Tensor& scores, const Tensor& regression, const GridConfig& grid,
                                         const DecodeConfig& cfg);

struct Match {
    std::size_t det = 0;
    std::size_t gt = 0;
};

/// Decides whether a detection may claim a ground truth; returns a cost
/// (lower is better) or nothing.
using MatchCost = std::function<std::optional<double>(const Detection&, const GroundTruth&)>;

/// Center distance in the x–y plane, accepted when ≤ radius.
MatchCost distance_cost(double radius_m);
/// 1 − BEV IoU, accepted when IoU ≥ threshold.
MatchCost iou_cost(double threshold);

/// Greedy matching in descending score order (lower index on ties); each
/// detection takes the lowest-cost unmatched same-label ground truth.
std::vector<Match> match_detections(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                                    const MatchCost& cost);
std::vector<Match> match_detections(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                                    double radius_m);

/// One scene's worth of detections and ground truth for a single class.
struct SceneEval {
    std::vector<Detection> dets;
    std::vector<GroundTruth> gts;
};

/// 101-point interpolated AP over scenes pooled by score. nullopt when there
/// is no ground truth.
std::optional<double> average_precision(std::span<const SceneEval> scenes, const MatchCost& cost);

struct TpErrors {
    double ate = 1.0, ase = 1.0, aoe = 1.0;
    std::optional<double> ave;
    std::size_t matches = 0;
};

struct MatchedPair {
    Detection det;
    GroundTruth gt;
};

/// Means over matched pairs; with no pairs every error is 1.0.
TpErrors tp_errors(std::span<const MatchedPair> pairs, bool velocity);

/// (5·mAP + Σ(1 − min(1, e))) / (5 + |errors|).
double nds(double map, std::span<const double> errors);

struct ClassMetrics {
    std::optional<double> ap;        // distance-matched, mean over radii
    std::optional<double> ap_iou;    // BEV IoU-matched, mean over thresholds
    std::size_t gt_count = 0;
    std::size_t det_count = 0;
};

struct MetricsReport {
    std::vector<std::string> classes;
    std::map<std::string, ClassMetrics> per_class;
    double map = 0.0;
    double map_iou = 0.0;
    TpErrors errors;
    double nds_3err = 0.0;
    std::optional<double> nds_4err;

    /// Key-sorted, deterministic JSON.
    std::string to_json() const;
};

struct EvalScene {
    std::vector<Detection> dets;
    std::vector<GroundTruth> gts;
};

/// Distance radii {0.5, 1, 2, 4} m; IoU thresholds 0.5:0.05:0.95. TP errors
/// use the 2 m matches.
MetricsReport evaluate(std::span<const EvalScene> scenes, const std::vector<std::string>& classes, bool velocity);

/// Neumaier-compensated sum.
double compensated_sum(std::span<const double> values);

}  // namespace o3w
