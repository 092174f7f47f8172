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

#include "o3w/evaldetect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "o3w/error.hpp"
#include "o3w/heads.hpp"

namespace o3w {

namespace {

BevBox footprint(const Box3D& b) { return BevBox{b.x, b.y, b.x_size, b.y_size, b.yaw}; }

double stable_sigmoid(double x)
{
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

bool score_order(const Detection& a, const Detection& b)
{
    if (a.score != b.score) return a.score > b.score;
    return a.label < b.label;
}

constexpr double kDistanceRadii[] = {0.5, 1.0, 2.0, 4.0};
constexpr double kTpRadius = 2.0;

std::vector<double> iou_thresholds()
{
    std::vector<double> out;
    for (int i = 0; i <= 9; ++i) out.push_back(0.5 + 0.05 * i);
    return out;
}

}  // namespace

double compensated_sum(std::span<const double> values)
{
    double sum = 0.0, c = 0.0;
    for (double v : values) {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v)) {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    return sum + c;
}

std::vector<Detection> decode_detections(const Tensor& scores, const Tensor& regression, const GridConfig& grid,
                                         const DecodeConfig& cfg)
{
    const std::size_t nx = grid.nx(), ny = grid.ny(), n = nx * ny;
    if (scores.rank() != 2 || scores.rows() != n || regression.rank() != 2 || regression.rows() != n) {
        throw DimensionError("decode: maps do not match the " + std::to_string(nx) + "×" + std::to_string(ny) + " grid");
    }
    const std::size_t m = scores.cols();
    std::vector<Detection> out;
    struct Candidate {
        Detection det;
        std::size_t cell;
    };
    for (std::size_t j = 0; j < m; ++j) {
        std::vector<Candidate> found;
        for (std::size_t y = 0; y < ny; ++y) {
            for (std::size_t x = 0; x < nx; ++x) {
                const std::size_t cell = y * nx + x;
                const double s = scores.at(cell, j);
                bool peak = true;
                for (std::size_t yy = y ? y - 1 : 0; yy <= std::min(ny - 1, y + 1) && peak; ++yy)
                    for (std::size_t xx = x ? x - 1 : 0; xx <= std::min(nx - 1, x + 1); ++xx)
                        if (scores.at(yy * nx + xx, j) > s) {
                            peak = false;
                            break;
                        }
                if (!peak) continue;
                const double p = stable_sigmoid(s);
                if (!(p > cfg.score_threshold)) continue;
                found.push_back({Detection{decode_cell(cell, regression.row(cell), grid), j, p}, cell});
            }
        }
        std::stable_sort(found.begin(), found.end(),
                         [](const Candidate& a, const Candidate& b) { return a.det.score > b.det.score; });
        std::vector<ScoredBox> boxes;
        boxes.reserve(found.size());
        for (const auto& c : found) boxes.push_back({footprint(c.det.box), c.det.score});
        for (std::size_t k : nms(boxes, cfg.nms_iou)) out.push_back(found[k].det);
    }
    std::stable_sort(out.begin(), out.end(), score_order);
    return out;
}

MatchCost distance_cost(double radius_m)
{
    if (!(radius_m > 0.0)) throw ConfigError("match radius must be positive");
    return [radius_m](const Detection& d, const GroundTruth& g) -> std::optional<double> {
        const double dist = std::hypot(d.box.x - g.box.x, d.box.y - g.box.y);
        if (dist <= radius_m) return dist;
        return std::nullopt;
    };
}

MatchCost iou_cost(double threshold)
{
    return [threshold](const Detection& d, const GroundTruth& g) -> std::optional<double> {
        const double iou = bev_iou(footprint(d.box), footprint(g.box));
        if (iou >= threshold && iou > 0.0) return 1.0 - iou;
        return std::nullopt;
    };
}

std::vector<Match> match_detections(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                                    const MatchCost& cost)
{
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
    std::vector<bool> taken(gts.size(), false);
    std::vector<Match> out;
    for (std::size_t di : order) {
        std::optional<std::size_t> best;
        double best_cost = 0.0;
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (taken[gi] || gts[gi].label != dets[di].label) continue;
            const auto c = cost(dets[di], gts[gi]);
            if (c && (!best || *c < best_cost)) {
                best = gi;
                best_cost = *c;
            }
        }
        if (best) {
            taken[*best] = true;
            out.push_back({di, *best});
        }
    }
    return out;
}

std::vector<Match> match_detections(std::span<const Detection> dets, std::span<const GroundTruth> gts, double radius_m)
{
    return match_detections(dets, gts, distance_cost(radius_m));
}

std::optional<double> average_precision(std::span<const SceneEval> scenes, const MatchCost& cost)
{
    std::size_t total_gt = 0;
    struct Scored {
        double score;
        std::size_t scene, det;
        bool tp;
    };
    std::vector<Scored> all;
    for (std::size_t si = 0; si < scenes.size(); ++si) {
        const auto& s = scenes[si];
        total_gt += s.gts.size();
        std::vector<bool> tp(s.dets.size(), false);
        for (const Match& mt : match_detections(s.dets, s.gts, cost)) tp[mt.det] = true;
        for (std::size_t di = 0; di < s.dets.size(); ++di) all.push_back({s.dets[di].score, si, di, tp[di]});
    }
    if (total_gt == 0) return std::nullopt;
    std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });

    std::vector<double> recall, precision;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < all.size(); ++k) {
        if (all[k].tp) ++tp;
        recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
        precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    }
    // Interpolated precision: best precision at any recall at or beyond r.
    for (std::size_t k = precision.size(); k > 1; --k) precision[k - 2] = std::max(precision[k - 2], precision[k - 1]);

    std::vector<double> samples;
    std::size_t k = 0;
    for (int i = 0; i <= 100; ++i) {
        const double r = i / 100.0;
        while (k < recall.size() && recall[k] < r) ++k;
        samples.push_back(k < recall.size() ? precision[k] : 0.0);
    }
    return compensated_sum(samples) / 101.0;
}

TpErrors tp_errors(std::span<const MatchedPair> pairs, bool velocity)
{
    TpErrors out;
    if (velocity) out.ave = 1.0;
    if (pairs.empty()) return out;
    std::vector<double> ate, ase, aoe, ave;
    for (const auto& p : pairs) {
        const Box3D& d = p.det.box;
        const Box3D& g = p.gt.box;
        ate.push_back(std::hypot(d.x - g.x, d.y - g.y));
        // 3D IoU after aligning centers and headings
        const double inter = std::min(d.x_size, g.x_size) * std::min(d.y_size, g.y_size) * std::min(d.z_size, g.z_size);
        const double uni = d.x_size * d.y_size * d.z_size + g.x_size * g.y_size * g.z_size - inter;
        ase.push_back(1.0 - inter / uni);
        aoe.push_back(std::abs(wrap_angle(d.yaw - g.yaw)));
        if (velocity) {
            const auto dv = d.velocity.value_or(std::array<double, 2>{0.0, 0.0});
            const auto gv = g.velocity.value_or(std::array<double, 2>{0.0, 0.0});
            ave.push_back(std::hypot(dv[0] - gv[0], dv[1] - gv[1]));
        }
    }
    const double n = static_cast<double>(pairs.size());
    out.ate = compensated_sum(ate) / n;
    out.ase = compensated_sum(ase) / n;
    out.aoe = compensated_sum(aoe) / n;
    if (velocity) out.ave = compensated_sum(ave) / n;
    out.matches = pairs.size();
    return out;
}

double nds(double map, std::span<const double> errors)
{
    std::vector<double> terms{5.0 * map};
    for (double e : errors) terms.push_back(1.0 - std::min(1.0, e));
    return compensated_sum(terms) / (5.0 + static_cast<double>(errors.size()));
}

MetricsReport evaluate(std::span<const EvalScene> scenes, const std::vector<std::string>& classes, bool velocity)
{
    MetricsReport report;
    report.classes = classes;
    const auto thresholds = iou_thresholds();
    std::vector<double> aps, aps_iou;
    std::vector<TpErrors> class_errors;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        std::vector<SceneEval> per_scene;
        ClassMetrics cm;
        for (const auto& s : scenes) {
            SceneEval se;
            for (const auto& d : s.dets)
                if (d.label == c) se.dets.push_back(d);
            for (const auto& g : s.gts)
                if (g.label == c) se.gts.push_back(g);
            cm.det_count += se.dets.size();
            cm.gt_count += se.gts.size();
            per_scene.push_back(std::move(se));
        }
        if (cm.gt_count > 0) {
            std::vector<double> by_radius, by_iou;
            for (double r : kDistanceRadii) by_radius.push_back(*average_precision(per_scene, distance_cost(r)));
            for (double t : thresholds) by_iou.push_back(*average_precision(per_scene, iou_cost(t)));
            cm.ap = compensated_sum(by_radius) / static_cast<double>(by_radius.size());
            cm.ap_iou = compensated_sum(by_iou) / static_cast<double>(by_iou.size());
            aps.push_back(*cm.ap);
            aps_iou.push_back(*cm.ap_iou);

            std::vector<MatchedPair> pairs;
            const auto cost = distance_cost(kTpRadius);
            for (const auto& se : per_scene) {
                for (const Match& mt : match_detections(se.dets, se.gts, cost)) {
                    pairs.push_back({se.dets[mt.det], se.gts[mt.gt]});
                }
            }
            if (!pairs.empty()) class_errors.push_back(tp_errors(pairs, velocity));
        }
        report.per_class[classes[c]] = cm;
    }
    if (!aps.empty()) {
        report.map = compensated_sum(aps) / static_cast<double>(aps.size());
        report.map_iou = compensated_sum(aps_iou) / static_cast<double>(aps_iou.size());
    }
    if (velocity) report.errors.ave = 1.0;
    if (!class_errors.empty()) {
        std::vector<double> ate, ase, aoe, ave;
        for (const auto& e : class_errors) {
            ate.push_back(e.ate);
            ase.push_back(e.ase);
            aoe.push_back(e.aoe);
            if (e.ave) ave.push_back(*e.ave);
            report.errors.matches += e.matches;
        }
        const double k = static_cast<double>(class_errors.size());
        report.errors.ate = compensated_sum(ate) / k;
        report.errors.ase = compensated_sum(ase) / k;
        report.errors.aoe = compensated_sum(aoe) / k;
        if (velocity) report.errors.ave = compensated_sum(ave) / k;
    }
    const double three[] = {report.errors.ate, report.errors.ase, report.errors.aoe};
    report.nds_3err = nds(report.map, three);
    if (report.errors.ave) {
        const double four[] = {report.errors.ate, report.errors.ase, report.errors.aoe, *report.errors.ave};
        report.nds_4err = nds(report.map, four);
    }
    return report;
}

std::string MetricsReport::to_json() const
{
    using nlohmann::json;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json j;
    json cls = json::object();
    for (const auto& [word, cm] : per_class) {
        cls[word] = {{"ap", opt(cm.ap)},
                     {"ap_iou", opt(cm.ap_iou)},
                     {"gt_count", cm.gt_count},
                     {"det_count", cm.det_count},
                     {"absent", cm.gt_count == 0}};
    }
    j["classes"] = cls;
    j["vocabulary"] = classes;
    j["mAP"] = map;
    j["mAP_iou"] = map_iou;
    j["mATE"] = errors.ate;
    j["mASE"] = errors.ase;
    j["mAOE"] = errors.aoe;
    j["mAVE"] = opt(errors.ave);
    j["tp_matches"] = errors.matches;
    j["NDS_3err"] = nds_3err;
    j["NDS_4err"] = opt(nds_4err);
    return j.dump(2) + "\n";
}

}  // namespace o3w
