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

#include "o3w/params.hpp"

#include <cmath>

#include "o3w/error.hpp"

namespace o3w {

const Tensor& ParamStore::at(const std::string& name) const
{
    if (const auto it = params.find(name); it != params.end()) return it->second;
    if (const auto it = buffers.find(name); it != buffers.end()) return it->second;
    throw SchemaError("missing tensor: " + name);
}

bool ParamStore::contains(const std::string& name) const { return params.count(name) || buffers.count(name); }

std::size_t ParamStore::parameter_count() const
{
    std::size_t total = 0;
    for (const auto& [name, t] : params) total += t.size();
    return total;
}

Binding::Binding(Graph& graph, ParamStore& store, bool trainable, BnMode mode)
    : graph_(graph), store_(store), writable_(&store), trainable_(trainable), mode_(mode)
{
}

Binding::Binding(Graph& graph, const ParamStore& store)
    : graph_(graph), store_(store), trainable_(false), mode_(BnMode::eval)
{
}

Var Binding::operator()(const std::string& name)
{
    if (const auto it = bound_.find(name); it != bound_.end()) return it->second;
    const auto it = store_.params.find(name);
    if (it == store_.params.end()) throw SchemaError("missing parameter: " + name);
    Var v = graph_.leaf(it->second, trainable_);
    bound_.emplace(name, v);
    return v;
}

Var Binding::batchnorm(Var x, const std::string& prefix)
{
    BatchNormStats stats{store_.at(prefix + ".running_mean"), store_.at(prefix + ".running_var"),
                         kBatchNormMomentum, kBatchNormEpsilon, mode_};
    Var out = o3w::batchnorm(x, (*this)(prefix + ".gamma"), (*this)(prefix + ".beta"), stats);
    if (mode_ == BnMode::train && writable_ != nullptr) {
        writable_->buffers[prefix + ".running_mean"] = std::move(stats.running_mean);
        writable_->buffers[prefix + ".running_var"] = std::move(stats.running_var);
    }
    return out;
}

std::map<std::string, Tensor> Binding::gradients() const
{
    std::map<std::string, Tensor> out;
    for (const auto& [name, v] : bound_) out.emplace(name, graph_.grad(v));
    return out;
}

Tensor he_uniform(Rng& rng, Tensor::Shape shape, std::size_t fan_in)
{
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
}

Tensor xavier_uniform(Rng& rng, Tensor::Shape shape, std::size_t fan_in, std::size_t fan_out)
{
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in + fan_out, 1)));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
}

void add_batchnorm(ParamStore& store, const std::string& prefix, std::size_t features)
{
    store.params[prefix + ".gamma"] = Tensor({features}, 1.0);
    store.params[prefix + ".beta"] = Tensor({features}, 0.0);
    store.buffers[prefix + ".running_mean"] = Tensor({features}, 0.0);
    store.buffers[prefix + ".running_var"] = Tensor({features}, 1.0);
}

}  // namespace o3w
