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

#include "o3w/svg.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "o3w/random.hpp"

namespace o3w {

namespace {

constexpr double kPixelsPerMeter = 20.0;

std::string hsl_to_hex(double h, double s, double l)
{
    const double c = (1.0 - std::abs(2.0 * l - 1.0)) * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) r = c, g = x;
    else if (hp < 2) r = x, g = c;
    else if (hp < 3) g = c, b = x;
    else if (hp < 4) g = x, b = c;
    else if (hp < 5) r = x, b = c;
    else r = c, b = x;
    const double m = l - c / 2.0;
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>(std::lround((r + m) * 255)),
                  static_cast<int>(std::lround((g + m) * 255)), static_cast<int>(std::lround((b + m) * 255)));
    return buf;
}

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string escape(const std::string& text)
{
    std::string out;
    for (char c : text) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string word_color(const std::string& word)
{
    const auto h = mix64(fnv1a64(word));
    return hsl_to_hex(static_cast<double>(h % 360), 0.75, 0.45);
}

std::string render_bev_svg(const PlotInput& in)
{
    const double w = (in.x_max - in.x_min) * kPixelsPerMeter;
    const double h = (in.y_max - in.y_min) * kPixelsPerMeter;
    // SVG y grows downwards; flip so +y is up.
    auto px = [&](double x) { return fmt((x - in.x_min) * kPixelsPerMeter); };
    auto py = [&](double y) { return fmt((in.y_max - y) * kPixelsPerMeter); };
    auto polygon = [&](const Box3D& b) {
        const auto corners = bev_corners(BevBox{b.x, b.y, b.x_size, b.y_size, b.yaw});
        std::string pts;
        for (const auto& c : corners) pts += px(c[0]) + "," + py(c[1]) + " ";
        pts.pop_back();
        return pts;
    };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w) << "\" height=\"" << fmt(h)
        << "\" viewBox=\"0 0 " << fmt(w) << " " << fmt(h) << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
    if (in.scene != nullptr) {
        out << "<g fill=\"#7f7f7f\">\n";
        for (const auto& p : in.scene->cloud.points) {
            out << "<circle cx=\"" << px(p.x) << "\" cy=\"" << py(p.y) << "\" r=\"1\"/>\n";
        }
        out << "</g>\n<g fill=\"none\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\">\n";
        for (const auto& a : in.scene->annotations) {
            out << "<polygon points=\"" << polygon(a.box) << "\" stroke=\"" << word_color(a.label) << "\"/>\n";
        }
        out << "</g>\n";
    }
    out << "<g fill=\"none\" stroke-width=\"2.5\">\n";
    std::set<std::size_t> used;
    for (const auto& d : in.detections) {
        const std::string& word = in.words.at(d.label);
        used.insert(d.label);
        out << "<polygon points=\"" << polygon(d.box) << "\" stroke=\"" << word_color(word) << "\"><title>" << escape(word)
            << " " << fmt(d.score) << "</title></polygon>\n";
    }
    out << "</g>\n<g font-family=\"sans-serif\" font-size=\"14\">\n";
    double y = 20;
    for (std::size_t j = 0; j < in.words.size(); ++j) {
        out << "<rect x=\"10\" y=\"" << fmt(y - 11) << "\" width=\"12\" height=\"12\" fill=\"" << word_color(in.words[j])
            << "\"/><text x=\"28\" y=\"" << fmt(y) << "\">" << escape(in.words[j]) << (used.count(j) ? "" : " (none)")
            << "</text>\n";
        y += 18;
    }
    out << "<text x=\"10\" y=\"" << fmt(y) << "\">dashed: ground truth, solid: detections</text>\n";
    out << "</g>\n</svg>\n";
    return out.str();
}

}  // namespace o3w
