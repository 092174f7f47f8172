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

#include "o3w/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "o3w/error.hpp"

namespace o3w {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v)
{
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("bad number for " + key + ": '" + v + "'");
    return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v)
{
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("bad integer for " + key + ": '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& v)
{
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
    return out;
}

CeMode parse_ce_mode(const std::string& key, const std::string& v)
{
    if (v == "bce") return CeMode::bce;
    if (v == "softmax") return CeMode::softmax;
    throw ConfigError("bad value for " + key + ": '" + v + "' (expected bce or softmax)");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value)
{
    using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
    static const std::map<std::string, Setter> setters = {
        {"grid.x_min", [](RunConfig& c, auto& k, auto& v) { c.model.grid.x_min = parse_double(k, v); }},
        {"grid.y_min", [](RunConfig& c, auto& k, auto& v) { c.model.grid.y_min = parse_double(k, v); }},
        {"grid.x_max", [](RunConfig& c, auto& k, auto& v) { c.model.grid.x_max = parse_double(k, v); }},
        {"grid.y_max", [](RunConfig& c, auto& k, auto& v) { c.model.grid.y_max = parse_double(k, v); }},
        {"grid.z_min", [](RunConfig& c, auto& k, auto& v) { c.model.grid.z_min = parse_double(k, v); }},
        {"grid.z_max", [](RunConfig& c, auto& k, auto& v) { c.model.grid.z_max = parse_double(k, v); }},
        {"grid.voxel", [](RunConfig& c, auto& k, auto& v) { c.model.grid.voxel = parse_double(k, v); }},
        {"grid.out_factor", [](RunConfig& c, auto& k, auto& v) { c.model.grid.out_factor = parse_uint(k, v); }},
        {"model.dim",
         [](RunConfig& c, auto& k, auto& v) {
             c.model.fusion.dim = parse_uint(k, v);
             c.model_dim_set = true;
         }},
        {"model.blocks", [](RunConfig& c, auto& k, auto& v) { c.model.fusion.blocks = parse_uint(k, v); }},
        {"model.heads", [](RunConfig& c, auto& k, auto& v) { c.model.fusion.heads = parse_uint(k, v); }},
        {"model.window", [](RunConfig& c, auto& k, auto& v) { c.model.fusion.window = parse_uint(k, v); }},
        {"model.ffn_hidden", [](RunConfig& c, auto& k, auto& v) { c.model.fusion.ffn_hidden = parse_uint(k, v); }},
        {"model.prenorm", [](RunConfig& c, auto& k, auto& v) { c.model.fusion.prenorm = parse_bool(k, v); }},
        {"model.velocity", [](RunConfig& c, auto& k, auto& v) { c.model.velocity = parse_bool(k, v); }},
        {"train.epochs", [](RunConfig& c, auto& k, auto& v) { c.train.epochs = parse_uint(k, v); }},
        {"train.batch_size", [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = parse_uint(k, v); }},
        {"train.lr", [](RunConfig& c, auto& k, auto& v) { c.train.adamw.lr = parse_double(k, v); }},
        {"train.beta1", [](RunConfig& c, auto& k, auto& v) { c.train.adamw.beta1 = parse_double(k, v); }},
        {"train.beta2", [](RunConfig& c, auto& k, auto& v) { c.train.adamw.beta2 = parse_double(k, v); }},
        {"train.weight_decay", [](RunConfig& c, auto& k, auto& v) { c.train.adamw.weight_decay = parse_double(k, v); }},
        {"train.eta_min", [](RunConfig& c, auto& k, auto& v) { c.train.eta_min = parse_double(k, v); }},
        {"train.lambda_loc", [](RunConfig& c, auto& k, auto& v) { c.train.lambda_loc = parse_double(k, v); }},
        {"train.clip_norm", [](RunConfig& c, auto& k, auto& v) { c.train.clip_norm = parse_double(k, v); }},
        {"train.gaussian", [](RunConfig& c, auto& k, auto& v) { c.train.gaussian_heatmap = parse_bool(k, v); }},
        {"train.seed", [](RunConfig& c, auto& k, auto& v) { c.train.seed = parse_uint(k, v); }},
        {"train.ce_mode", [](RunConfig& c, auto& k, auto& v) { c.train.ce_mode = parse_ce_mode(k, v); }},
        {"gen.seed", [](RunConfig& c, auto& k, auto& v) { c.gen.seed = parse_uint(k, v); }},
        {"gen.objects_min", [](RunConfig& c, auto& k, auto& v) { c.gen.objects_min = parse_uint(k, v); }},
        {"gen.objects_max", [](RunConfig& c, auto& k, auto& v) { c.gen.objects_max = parse_uint(k, v); }},
        {"gen.density", [](RunConfig& c, auto& k, auto& v) { c.gen.density = parse_double(k, v); }},
        {"gen.clutter", [](RunConfig& c, auto& k, auto& v) { c.gen.clutter = parse_uint(k, v); }},
        {"gen.margin", [](RunConfig& c, auto& k, auto& v) { c.gen.margin = parse_double(k, v); }},
        {"gen.velocity", [](RunConfig& c, auto& k, auto& v) { c.gen.velocity = parse_bool(k, v); }},
        {"gen.max_speed", [](RunConfig& c, auto& k, auto& v) { c.gen.max_speed = parse_double(k, v); }},
        {"gen.split",
         [](RunConfig& c, auto& k, auto& v) {
             const auto parts = parse_list(k, v);
             if (parts.size() != 3) throw ConfigError("gen.split needs three fractions");
             c.split = {parts[0], parts[1], parts[2]};
         }},
        {"eval.score_threshold", [](RunConfig& c, auto& k, auto& v) { c.decode.score_threshold = parse_double(k, v); }},
        {"eval.nms_iou", [](RunConfig& c, auto& k, auto& v) { c.decode.nms_iou = parse_double(k, v); }},
        {"embed.seed", [](RunConfig& c, auto& k, auto& v) { c.embed_seed = parse_uint(k, v); }},
    };

    if (const auto it = setters.find(key); it != setters.end()) {
        it->second(*this, key, value);
        return;
    }
    if (key.starts_with("gen.class.") && key.size() > 10) {
        const auto parts = parse_list(key, value);
        if (parts.size() != 3 && parts.size() != 6) {
            throw ConfigError(key + " needs 3 mean sizes, optionally followed by 3 deviations");
        }
        if (!gen_classes_set) {
            gen.classes.clear();
            gen_classes_set = true;
        }
        ClassPrior prior{key.substr(10), {}};
        for (std::size_t a = 0; a < 3; ++a) {
            prior.size.mean[a] = parts[a];
            prior.size.sigma[a] = parts.size() == 6 ? parts[a + 3] : 0.0;
        }
        gen.classes.push_back(prior);
        return;
    }
    throw ConfigError("unknown config key: " + key);
}

void RunConfig::load_text(const std::string& text, const std::string& origin)
{
    std::stringstream ss(text);
    std::string line;
    for (std::size_t no = 1; std::getline(ss, line); ++no) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + " line " + std::to_string(no) + ": expected key = value");
        }
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void RunConfig::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    load_text(buf.str(), path.string());
}

void RunConfig::finalize()
{
    model.validate();
    train.validate();
    gen.set_range(model.grid);
    gen.validate();
    if (!(decode.score_threshold >= 0.0 && decode.score_threshold <= 1.0)) {
        throw ConfigError("eval.score_threshold must lie in [0, 1]");
    }
    if (!(decode.nms_iou >= 0.0 && decode.nms_iou <= 1.0)) throw ConfigError("eval.nms_iou must lie in [0, 1]");
    double total = 0.0;
    for (double s : split) {
        if (!(s >= 0.0)) throw ConfigError("gen.split fractions must be non-negative");
        total += s;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("gen.split fractions must sum to 1");
}

}  // namespace o3w
