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

#include <map>
#include <string>

#include "o3w/autodiff.hpp"
#include "o3w/random.hpp"
#include "o3w/tensor.hpp"

namespace o3w {

/// Named model state. `params` are trained; `buffers` hold batch-norm running
/// statistics and metadata. Names are dotted paths such as
/// "fusion.block0.bev_self.query".
struct ParamStore {
    std::map<std::string, Tensor> params;
    std::map<std::string, Tensor> buffers;

    /// Looks a name up in params, then buffers. Throws SchemaError naming it.
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const;
    std::size_t parameter_count() const;

    friend bool operator==(const ParamStore&, const ParamStore&) = default;
};

/// Exposes a ParamStore on a graph. Each parameter becomes one leaf, created
/// on first use and reused afterwards.
class Binding {
public:
    Binding(Graph& graph, ParamStore& store, bool trainable, BnMode mode);
    /// Read-only inference binding: constant leaves, eval-mode batch norm.
    Binding(Graph& graph, const ParamStore& store);

    Graph& graph() const { return graph_; }
    BnMode bn_mode() const { return mode_; }

    Var operator()(const std::string& name);
    /// Uses `v` for `name` from now on instead of a leaf built from the store.
    void set(const std::string& name, Var v) { bound_.insert_or_assign(name, v); }

    /// Batch norm using "<prefix>.gamma/beta" and the running statistics in
    /// "<prefix>.running_mean/var"; train mode writes updated statistics back.
    Var batchnorm(Var x, const std::string& prefix);

    /// Gradients of every bound parameter after graph().backward().
    std::map<std::string, Tensor> gradients() const;

private:
    Graph& graph_;
    const ParamStore& store_;
    ParamStore* writable_ = nullptr;
    bool trainable_;
    BnMode mode_;
    std::map<std::string, Var> bound_;
};

constexpr double kBatchNormMomentum = 0.1;
constexpr double kBatchNormEpsilon = 1e-5;

/// Weight matrix with entries uniform in ±sqrt(6 / fan_in).
Tensor he_uniform(Rng& rng, Tensor::Shape shape, std::size_t fan_in);
/// Weight matrix with entries uniform in ±sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(Rng& rng, Tensor::Shape shape, std::size_t fan_in, std::size_t fan_out);

void add_batchnorm(ParamStore& store, const std::string& prefix, std::size_t features);

}  // namespace o3w
