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
#include <span>
#include <vector>

#include "o3w/tensor.hpp"

namespace o3w {

class Graph;

/// Handle to a node recorded on a Graph. Cheap to copy; only valid while the
/// owning graph is alive.
struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Tensor::Shape& shape() const { return value().shape(); }
    bool valid() const { return graph != nullptr; }
};

/// Dynamic reverse-mode tape.
///
/// Nodes are appended in execution order, which is a topological order by
/// construction. backward() walks the tape in reverse once; a second call
/// without reset_grads() throws instead of double-accumulating.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var leaf(Tensor value, bool requires_grad);
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    Var param(Tensor value) { return leaf(std::move(value), true); }

    /// Appends an op result. The backward closure is dropped when no input
    /// requires a gradient.
    Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward)
    {
        return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
    }

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Gradient buffer for accumulation inside backward closures. Allocated
    /// lazily as zeros.
    Tensor& grad_buffer(std::size_t id);

    /// Gradient of the last backward() seed with respect to v. Nodes outside
    /// every path from the seed report zeros.
    Tensor grad(Var v) const;

    void backward(Var output, const Tensor& seed);
    /// Scalar outputs only: seeds with 1.
    void backward(Var output);

    void reset_grads();
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

enum class BnMode { train, eval };

/// Running statistics and hyperparameters of one batch-normalization layer.
/// The affine gamma/beta live on the graph as ordinary parameters.
struct BatchNormStats {
    Tensor running_mean;
    Tensor running_var;
    double momentum = 0.1;
    double epsilon = 1e-5;
    BnMode mode = BnMode::train;

    static BatchNormStats identity(std::size_t features, BnMode mode);
};

/// Full batch-norm layer state: affine parameters plus running statistics.
struct BatchNormState {
    Tensor gamma;
    Tensor beta;
    BatchNormStats stats;

    static BatchNormState identity(std::size_t features, BnMode mode);
};

// Elementwise and shape ops. All operands must live on the same graph.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_bias(Var x, Var bias);
Var matmul(Var a, Var b);
/// a · bᵀ without materializing the transpose.
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Tensor::Shape shape);

Var sigmoid(Var x);
Var relu(Var x);
Var abs(Var x);

Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
/// Per-row maximum, shape [n]. Gradient routes to the first argmax.
Var reduce_max_rows(Var x);
/// Multiplies row i of x[n×d] by s[i].
Var scale_rows(Var x, Var s);

/// Feature-wise batch normalization of x[n×d]. Train mode uses batch
/// statistics (biased variance) and updates the running estimates in place.
Var batchnorm(Var x, Var gamma, Var beta, BatchNormStats& stats);
/// Per-row standardization without affine parameters.
Var layernorm_rows(Var x, double epsilon = 1e-5);

Var sum(Var x);
Var mean(Var x);

/// Multiplies every entry by the scalar node s.
Var mul_scalar(Var x, Var s);
Var add_scalar(Var x, Var s);

/// Index value marking an all-zero row in gather tables.
inline constexpr std::ptrdiff_t kZeroRow = -1;

/// out[r] = x[index[r]] (zeros for kZeroRow).
Var gather_rows(Var x, std::span<const std::ptrdiff_t> index);
/// Patch extraction for convolutions: table is out_rows×taps; output row r is
/// the concatenation of x[table[r·taps + t]] over t.
Var gather_patches(Var x, std::span<const std::ptrdiff_t> table, std::size_t taps);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var slice_cols(Var x, std::size_t begin, std::size_t end);

/// Max over consecutive groups of `group` rows: [(G·group)×c] -> [G×c].
/// Ties route the gradient to the first row in the group.
Var group_max_rows(Var x, std::size_t group);

/// Mean binary cross-entropy between sigmoid(logits) and soft targets,
/// evaluated in logit space.
Var bce_with_logits_mean(Var logits, const Tensor& targets);

/// Scalar-valued function of one tensor input, built on a fresh graph.
using ScalarFn = std::function<Var(Graph&, Var)>;

/// Max over coordinates of |analytic − central difference| / max(1, |analytic|).
/// Throws NumericError when f is non-finite at a perturbed point.
double grad_check(const ScalarFn& f, const Tensor& point, double h);

}  // namespace o3w
