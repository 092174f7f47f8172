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

#include "o3w/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "o3w/error.hpp"

namespace o3w {

const Tensor& Var::value() const { return graph->value(id); }

Var Graph::leaf(Tensor value, bool requires_grad)
{
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::span<const Var> inputs, BackwardFn backward)
{
    bool needs = false;
    for (const Var& in : inputs) {
        if (in.graph != this) throw GraphError("operand recorded on a different graph");
        needs = needs || nodes_[in.id].requires_grad;
    }
    Node node;
    node.value = std::move(value);
    node.requires_grad = needs;
    if (needs) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

Tensor& Graph::grad_buffer(std::size_t id)
{
    Node& node = nodes_[id];
    if (!node.has_grad) {
        node.grad = Tensor::zeros_like(node.value);
        node.has_grad = true;
    }
    return node.grad;
}

Tensor Graph::grad(Var v) const
{
    const Node& node = nodes_.at(v.id);
    return node.has_grad ? node.grad : Tensor::zeros_like(node.value);
}

void Graph::backward(Var output, const Tensor& seed)
{
    if (output.graph != this) throw GraphError("backward on a node of another graph");
    if (backward_done_) throw GraphError("backward already ran on this graph; call reset_grads() first");
    if (seed.shape() != value(output).shape()) {
        throw DimensionError("backward seed shape " + shape_string(seed.shape()) + " differs from output shape " +
                             shape_string(value(output).shape()));
    }
    backward_done_ = true;
    if (!nodes_[output.id].requires_grad) return;
    grad_buffer(output.id) = seed;
    for (std::size_t i = output.id + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (node.has_grad && node.backward) node.backward(*this, i);
    }
}

void Graph::backward(Var output)
{
    const Tensor& out = value(output);
    if (out.size() != 1) throw DimensionError("implicit seed requires a scalar output, got " + shape_string(out.shape()));
    backward(output, Tensor(out.shape(), 1.0));
}

void Graph::reset_grads()
{
    for (Node& node : nodes_) {
        node.grad = Tensor();
        node.has_grad = false;
    }
    backward_done_ = false;
}

BatchNormStats BatchNormStats::identity(std::size_t features, BnMode mode)
{
    BatchNormStats s;
    s.running_mean = Tensor({features}, 0.0);
    s.running_var = Tensor({features}, 1.0);
    s.mode = mode;
    return s;
}

BatchNormState BatchNormState::identity(std::size_t features, BnMode mode)
{
    return BatchNormState{Tensor({features}, 1.0), Tensor({features}, 0.0), BatchNormStats::identity(features, mode)};
}

namespace {

void accumulate(Graph& g, std::size_t id, const Tensor& delta)
{
    if (!g.requires_grad(id)) return;
    Tensor& buf = g.grad_buffer(id);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += delta[i];
}

Graph& graph_of(Var a)
{
    if (a.graph == nullptr) throw GraphError("operation on an unbound Var");
    return *a.graph;
}

void require_same_shape(const char* op, Var a, Var b)
{
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
}

void require_rank2(const char* op, Var a)
{
    if (a.value().rank() != 2) {
        throw DimensionError(std::string(op) + " expects a matrix, got " + shape_string(a.shape()));
    }
}

double stable_sigmoid(double x)
{
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Var add(Var a, Var b)
{
    require_same_shape("add", a, b);
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return graph_of(a).record(std::move(out), {a, b}, [ia = a.id, ib = b.id](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        accumulate(g, ia, go);
        accumulate(g, ib, go);
    });
}

Var sub(Var a, Var b)
{
    require_same_shape("sub", a, b);
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return graph_of(a).record(std::move(out), {a, b}, [ia = a.id, ib = b.id](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        accumulate(g, ia, go);
        if (g.requires_grad(ib)) {
            Tensor& gb = g.grad_buffer(ib);
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
        }
    });
}

Var mul(Var a, Var b)
{
    require_same_shape("mul", a, b);
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return graph_of(a).record(std::move(out), {a, b}, [ia = a.id, ib = b.id](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        const Tensor& av = g.value(ia);
        const Tensor& bv = g.value(ib);
        if (g.requires_grad(ia)) {
            Tensor& ga = g.grad_buffer(ia);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * bv[i];
        }
        if (g.requires_grad(ib)) {
            Tensor& gb = g.grad_buffer(ib);
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * av[i];
        }
    });
}

Var scale(Var a, double factor)
{
    Tensor out = a.value();
    for (double& v : out.data()) v *= factor;
    return graph_of(a).record(std::move(out), {a}, [ia = a.id, factor](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        Tensor& ga = g.grad_buffer(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * go[i];
    });
}

Var add_bias(Var x, Var bias)
{
    require_rank2("add_bias", x);
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    if (bv.rank() != 1 || bv.size() != xv.cols()) {
        throw DimensionError("add_bias: bias " + shape_string(bv.shape()) + " for input " + shape_string(xv.shape()));
    }
    Tensor out = xv;
    const std::size_t n = xv.rows(), c = xv.cols();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < c; ++k) out.at(r, k) += bv[k];
    return graph_of(x).record(std::move(out), {x, bias}, [ix = x.id, ib = bias.id, n, c](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        accumulate(g, ix, go);
        if (g.requires_grad(ib)) {
            Tensor& gb = g.grad_buffer(ib);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t k = 0; k < c; ++k) gb[k] += go.at(r, k);
        }
    });
}

Var matmul(Var a, Var b)
{
    require_rank2("matmul", a);
    require_rank2("matmul", b);
    Tensor out = gemm(a.value(), false, b.value(), false);
    return graph_of(a).record(std::move(out), {a, b}, [ia = a.id, ib = b.id](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        if (g.requires_grad(ia)) accumulate(g, ia, gemm(go, false, g.value(ib), true));
        if (g.requires_grad(ib)) accumulate(g, ib, gemm(g.value(ia), true, go, false));
    });
}

Var matmul_nt(Var a, Var b)
{
    require_rank2("matmul_nt", a);
    require_rank2("matmul_nt", b);
    Tensor out = gemm(a.value(), false, b.value(), true);
    return graph_of(a).record(std::move(out), {a, b}, [ia = a.id, ib = b.id](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        if (g.requires_grad(ia)) accumulate(g, ia, gemm(go, false, g.value(ib), false));
        if (g.requires_grad(ib)) accumulate(g, ib, gemm(go, true, g.value(ia), false));
    });
}

Var transpose(Var a)
{
    require_rank2("transpose", a);
    const Tensor& av = a.value();
    const std::size_t n = av.rows(), m = av.cols();
    Tensor out({m, n});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) out.at(c, r) = av.at(r, c);
    return graph_of(a).record(std::move(out), {a}, [ia = a.id, n, m](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        Tensor& ga = g.grad_buffer(ia);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) ga.at(r, c) += go.at(c, r);
    });
}

Var reshape(Var a, Tensor::Shape shape)
{
    Tensor out = a.value().reshaped(std::move(shape));
    return graph_of(a).record(std::move(out), {a}, [ia = a.id](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        Tensor& ga = g.grad_buffer(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
    });
}

Var sigmoid(Var x)
{
    Tensor out = x.value();
    for (double& v : out.data()) v = stable_sigmoid(v);
    return graph_of(x).record(std::move(out), {x}, [ix = x.id](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        const Tensor& y = g.value(self);
        Tensor& gx = g.grad_buffer(ix);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * y[i] * (1.0 - y[i]);
    });
}

Var relu(Var x)
{
    Tensor out = x.value();
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return graph_of(x).record(std::move(out), {x}, [ix = x.id](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        const Tensor& xv = g.value(ix);
        Tensor& gx = g.grad_buffer(ix);
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (xv[i] > 0.0) gx[i] += go[i];
    });
}

Var abs(Var x)
{
    Tensor out = x.value();
    for (double& v : out.data()) v = std::abs(v);
    return graph_of(x).record(std::move(out), {x}, [ix = x.id](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        const Tensor& xv = g.value(ix);
        Tensor& gx = g.grad_buffer(ix);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            if (xv[i] > 0.0) gx[i] += go[i];
            else if (xv[i] < 0.0) gx[i] -= go[i];
        }
    });
}

Var softmax_rows(Var x)
{
    require_rank2("softmax_rows", x);
    const Tensor& xv = x.value();
    const std::size_t n = xv.rows(), m = xv.cols();
    Tensor out({n, m});
    for (std::size_t r = 0; r < n; ++r) {
        if (m == 0) continue;
        const auto in = xv.row(r);
        auto y = out.row(r);
        const double hi = *std::max_element(in.begin(), in.end());
        double total = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            y[c] = std::exp(in[c] - hi);
            total += y[c];
        }
        for (double& v : y) v /= total;
    }
    return graph_of(x).record(std::move(out), {x}, [ix = x.id, n, m](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        const Tensor& y = g.value(self);
        Tensor& gx = g.grad_buffer(ix);
        for (std::size_t r = 0; r < n; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < m; ++c) dot += go.at(r, c) * y.at(r, c);
            for (std::size_t c = 0; c < m; ++c) gx.at(r, c) += y.at(r, c) * (go.at(r, c) - dot);
        }
    });
}

Var log_softmax_rows(Var x)
{
    require_rank2("log_softmax_rows", x);
    const Tensor& xv = x.value();
    const std::size_t n = xv.rows(), m = xv.cols();
    if (m == 0) throw EmptyReductionError("log_softmax_rows over zero columns");
    Tensor out({n, m});
    for (std::size_t r = 0; r < n; ++r) {
        const auto in = xv.row(r);
        const double hi = *std::max_element(in.begin(), in.end());
        double total = 0.0;
        for (double v : in) total += std::exp(v - hi);
        const double lse = hi + std::log(total);
        for (std::size_t c = 0; c < m; ++c) out.at(r, c) = in[c] - lse;
    }
    return graph_of(x).record(std::move(out), {x}, [ix = x.id, n, m](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        const Tensor& y = g.value(self);
        Tensor& gx = g.grad_buffer(ix);
        for (std::size_t r = 0; r < n; ++r) {
            double total = 0.0;
            for (std::size_t c = 0; c < m; ++c) total += go.at(r, c);
            for (std::size_t c = 0; c < m; ++c) gx.at(r, c) += go.at(r, c) - std::exp(y.at(r, c)) * total;
        }
    });
}

Var reduce_max_rows(Var x)
{
    require_rank2("reduce_max_rows", x);
    const Tensor& xv = x.value();
    const std::size_t n = xv.rows(), m = xv.cols();
    if (m == 0) throw EmptyReductionError("reduce_max_rows over zero columns");
    Tensor out({n});
    std::vector<std::size_t> arg(n, 0);
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < m; ++c)
            if (xv.at(r, c) > xv.at(r, best)) best = c;
        arg[r] = best;
        out[r] = xv.at(r, best);
    }
    return graph_of(x).record(std::move(out), {x}, [ix = x.id, arg = std::move(arg)](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        Tensor& gx = g.grad_buffer(ix);
        for (std::size_t r = 0; r < arg.size(); ++r) gx.at(r, arg[r]) += go[r];
    });
}

Var scale_rows(Var x, Var s)
{
    require_rank2("scale_rows", x);
    const Tensor& xv = x.value();
    const Tensor& sv = s.value();
    const std::size_t n = xv.rows(), d = xv.cols();
    if (sv.size() != n) {
        throw DimensionError("scale_rows: " + shape_string(sv.shape()) + " scales for " + shape_string(xv.shape()));
    }
    Tensor out = xv;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) out.at(r, c) *= sv[r];
    return graph_of(x).record(std::move(out), {x, s}, [ix = x.id, is = s.id, n, d](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        const Tensor& xv = g.value(ix);
        const Tensor& sv = g.value(is);
        if (g.requires_grad(ix)) {
            Tensor& gx = g.grad_buffer(ix);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < d; ++c) gx.at(r, c) += go.at(r, c) * sv[r];
        }
        if (g.requires_grad(is)) {
            Tensor& gs = g.grad_buffer(is);
            for (std::size_t r = 0; r < n; ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < d; ++c) acc += go.at(r, c) * xv.at(r, c);
                gs[r] += acc;
            }
        }
    });
}

Var batchnorm(Var x, Var gamma, Var beta, BatchNormStats& stats)
{
    require_rank2("batchnorm", x);
    const Tensor& xv = x.value();
    const std::size_t n = xv.rows(), d = xv.cols();
    if (gamma.value().size() != d || beta.value().size() != d || stats.running_mean.size() != d ||
        stats.running_var.size() != d) {
        throw DimensionError("batchnorm: parameters do not match " + std::to_string(d) + " features");
    }
    if (!(stats.epsilon > 0.0)) throw ConfigError("batchnorm epsilon must be positive");
    if (n == 0) throw InsufficientBatchError("batchnorm over an empty batch");

    std::vector<double> inv_std(d);
    Tensor xhat({n, d});
    if (stats.mode == BnMode::train) {
        if (n < 2) throw InsufficientBatchError("train-mode batchnorm needs at least 2 rows, got " + std::to_string(n));
        for (std::size_t c = 0; c < d; ++c) {
            double mu = 0.0;
            for (std::size_t r = 0; r < n; ++r) mu += xv.at(r, c);
            mu /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t r = 0; r < n; ++r) {
                const double dv = xv.at(r, c) - mu;
                var += dv * dv;
            }
            var /= static_cast<double>(n);
            inv_std[c] = 1.0 / std::sqrt(var + stats.epsilon);
            for (std::size_t r = 0; r < n; ++r) xhat.at(r, c) = (xv.at(r, c) - mu) * inv_std[c];
            const double unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
            stats.running_mean[c] = (1.0 - stats.momentum) * stats.running_mean[c] + stats.momentum * mu;
            stats.running_var[c] = (1.0 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
        }
    } else {
        for (std::size_t c = 0; c < d; ++c) {
            inv_std[c] = 1.0 / std::sqrt(std::max(stats.running_var[c], 0.0) + stats.epsilon);
            for (std::size_t r = 0; r < n; ++r) xhat.at(r, c) = (xv.at(r, c) - stats.running_mean[c]) * inv_std[c];
        }
    }

    const Tensor& gv = gamma.value();
    const Tensor& bv = beta.value();
    Tensor out({n, d});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) out.at(r, c) = gv[c] * xhat.at(r, c) + bv[c];

    const bool train = stats.mode == BnMode::train;
    return graph_of(x).record(
        std::move(out), {x, gamma, beta},
        [ix = x.id, ig = gamma.id, ib = beta.id, n, d, train, xhat = std::move(xhat),
         inv_std = std::move(inv_std)](Graph& g, std::size_t self) {
            const Tensor& go = g.grad_buffer(self);
            const Tensor& gv = g.value(ig);
            if (g.requires_grad(ig)) {
                Tensor& gg = g.grad_buffer(ig);
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < d; ++c) gg[c] += go.at(r, c) * xhat.at(r, c);
            }
            if (g.requires_grad(ib)) {
                Tensor& gb = g.grad_buffer(ib);
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < d; ++c) gb[c] += go.at(r, c);
            }
            if (!g.requires_grad(ix)) return;
            Tensor& gx = g.grad_buffer(ix);
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t c = 0; c < d; ++c) {
                if (!train) {
                    for (std::size_t r = 0; r < n; ++r) gx.at(r, c) += go.at(r, c) * gv[c] * inv_std[c];
                    continue;
                }
                double sum_g = 0.0, sum_gx = 0.0;
                for (std::size_t r = 0; r < n; ++r) {
                    const double gh = go.at(r, c) * gv[c];
                    sum_g += gh;
                    sum_gx += gh * xhat.at(r, c);
                }
                for (std::size_t r = 0; r < n; ++r) {
                    const double gh = go.at(r, c) * gv[c];
                    gx.at(r, c) += inv_std[c] * (gh - inv_n * sum_g - xhat.at(r, c) * inv_n * sum_gx);
                }
            }
        });
}

Var layernorm_rows(Var x, double epsilon)
{
    require_rank2("layernorm_rows", x);
    const Tensor& xv = x.value();
    const std::size_t n = xv.rows(), d = xv.cols();
    if (d == 0) throw EmptyReductionError("layernorm over zero features");
    Tensor out({n, d});
    std::vector<double> inv_std(n);
    for (std::size_t r = 0; r < n; ++r) {
        double mu = 0.0;
        for (std::size_t c = 0; c < d; ++c) mu += xv.at(r, c);
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) var += (xv.at(r, c) - mu) * (xv.at(r, c) - mu);
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + epsilon);
        for (std::size_t c = 0; c < d; ++c) out.at(r, c) = (xv.at(r, c) - mu) * inv_std[r];
    }
    return graph_of(x).record(std::move(out), {x}, [ix = x.id, n, d, inv_std = std::move(inv_std)](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        const Tensor& y = g.value(self);
        Tensor& gx = g.grad_buffer(ix);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < n; ++r) {
            double sum_g = 0.0, sum_gy = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                sum_g += go.at(r, c);
                sum_gy += go.at(r, c) * y.at(r, c);
            }
            for (std::size_t c = 0; c < d; ++c)
                gx.at(r, c) += inv_std[r] * (go.at(r, c) - inv_d * sum_g - y.at(r, c) * inv_d * sum_gy);
        }
    });
}

Var sum(Var x)
{
    double total = 0.0;
    for (double v : x.value().data()) total += v;
    return graph_of(x).record(Tensor::scalar(total), {x}, [ix = x.id](Graph& g, std::size_t self) {
        const double go = g.grad_buffer(self)[0];
        Tensor& gx = g.grad_buffer(ix);
        for (double& v : gx.data()) v += go;
    });
}

Var mean(Var x)
{
    const std::size_t n = x.value().size();
    if (n == 0) throw EmptyReductionError("mean of an empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var mul_scalar(Var x, Var s)
{
    if (s.value().size() != 1) throw DimensionError("mul_scalar expects a scalar, got " + shape_string(s.shape()));
    const double sv = s.value()[0];
    Tensor out = x.value();
    for (double& v : out.data()) v *= sv;
    return graph_of(x).record(std::move(out), {x, s}, [ix = x.id, is = s.id](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        const Tensor& xv = g.value(ix);
        const double sv = g.value(is)[0];
        if (g.requires_grad(ix)) {
            Tensor& gx = g.grad_buffer(ix);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * sv;
        }
        if (g.requires_grad(is)) {
            double acc = 0.0;
            for (std::size_t i = 0; i < go.size(); ++i) acc += go[i] * xv[i];
            g.grad_buffer(is)[0] += acc;
        }
    });
}

Var add_scalar(Var x, Var s)
{
    if (s.value().size() != 1) throw DimensionError("add_scalar expects a scalar, got " + shape_string(s.shape()));
    const double sv = s.value()[0];
    Tensor out = x.value();
    for (double& v : out.data()) v += sv;
    return graph_of(x).record(std::move(out), {x, s}, [ix = x.id, is = s.id](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        accumulate(g, ix, go);
        if (g.requires_grad(is)) {
            double acc = 0.0;
            for (double v : go.data()) acc += v;
            g.grad_buffer(is)[0] += acc;
        }
    });
}

Var gather_patches(Var x, std::span<const std::ptrdiff_t> table, std::size_t taps)
{
    require_rank2("gather_patches", x);
    if (taps == 0 || table.size() % taps != 0) throw DimensionError("gather table is not a multiple of the tap count");
    const Tensor& xv = x.value();
    const std::size_t rows = xv.rows(), c = xv.cols();
    const std::size_t out_rows = table.size() / taps;
    Tensor out({out_rows, taps * c});
    for (std::size_t r = 0; r < out_rows; ++r) {
        for (std::size_t t = 0; t < taps; ++t) {
            const std::ptrdiff_t src = table[r * taps + t];
            if (src == kZeroRow) continue;
            if (src < 0 || static_cast<std::size_t>(src) >= rows) throw DimensionError("gather index out of range");
            const auto from = xv.row(static_cast<std::size_t>(src));
            std::copy(from.begin(), from.end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * taps * c + t * c));
        }
    }
    std::vector<std::ptrdiff_t> owned(table.begin(), table.end());
    return graph_of(x).record(std::move(out), {x}, [ix = x.id, taps, c, owned = std::move(owned)](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        Tensor& gx = g.grad_buffer(ix);
        const std::size_t out_rows = owned.size() / taps;
        for (std::size_t r = 0; r < out_rows; ++r) {
            for (std::size_t t = 0; t < taps; ++t) {
                const std::ptrdiff_t src = owned[r * taps + t];
                if (src == kZeroRow) continue;
                const double* from = go.data().data() + r * taps * c + t * c;
                double* to = gx.data().data() + static_cast<std::size_t>(src) * c;
                for (std::size_t k = 0; k < c; ++k) to[k] += from[k];
            }
        }
    });
}

Var gather_rows(Var x, std::span<const std::ptrdiff_t> index) { return gather_patches(x, index, 1); }

Var concat_rows(std::span<const Var> parts)
{
    if (parts.empty()) throw DimensionError("concat_rows of nothing");
    const std::size_t c = parts[0].value().cols();
    std::size_t total = 0;
    for (const Var& p : parts) {
        require_rank2("concat_rows", p);
        if (p.value().cols() != c) throw DimensionError("concat_rows column mismatch");
        total += p.value().rows();
    }
    Tensor out({total, c});
    std::vector<std::size_t> offsets;
    std::size_t at = 0;
    for (const Var& p : parts) {
        offsets.push_back(at);
        std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(at * c));
        at += p.value().rows();
    }
    std::vector<std::size_t> ids;
    for (const Var& p : parts) ids.push_back(p.id);
    return graph_of(parts[0]).record(std::move(out), parts, [ids, offsets, c](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!g.requires_grad(ids[k])) continue;
            Tensor& gp = g.grad_buffer(ids[k]);
            const double* from = go.data().data() + offsets[k] * c;
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += from[i];
        }
    });
}

Var concat_cols(std::span<const Var> parts)
{
    if (parts.empty()) throw DimensionError("concat_cols of nothing");
    const std::size_t n = parts[0].value().rows();
    std::size_t total = 0;
    for (const Var& p : parts) {
        require_rank2("concat_cols", p);
        if (p.value().rows() != n) throw DimensionError("concat_cols row mismatch");
        total += p.value().cols();
    }
    Tensor out({n, total});
    std::vector<std::size_t> offsets;
    std::size_t at = 0;
    for (const Var& p : parts) {
        offsets.push_back(at);
        const Tensor& pv = p.value();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < pv.cols(); ++c) out.at(r, at + c) = pv.at(r, c);
        at += pv.cols();
    }
    std::vector<std::size_t> ids;
    for (const Var& p : parts) ids.push_back(p.id);
    return graph_of(parts[0]).record(std::move(out), parts, [ids, offsets, n](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!g.requires_grad(ids[k])) continue;
            Tensor& gp = g.grad_buffer(ids[k]);
            const std::size_t w = gp.cols();
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < w; ++c) gp.at(r, c) += go.at(r, offsets[k] + c);
        }
    });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end)
{
    require_rank2("slice_rows", x);
    const Tensor& xv = x.value();
    if (begin > end || end > xv.rows()) throw DimensionError("slice_rows range out of bounds");
    const std::size_t c = xv.cols();
    Tensor out({end - begin, c});
    std::copy(xv.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
              xv.data().begin() + static_cast<std::ptrdiff_t>(end * c), out.data().begin());
    return graph_of(x).record(std::move(out), {x}, [ix = x.id, begin, c](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        Tensor& gx = g.grad_buffer(ix);
        double* to = gx.data().data() + begin * c;
        for (std::size_t i = 0; i < go.size(); ++i) to[i] += go[i];
    });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end)
{
    require_rank2("slice_cols", x);
    const Tensor& xv = x.value();
    if (begin > end || end > xv.cols()) throw DimensionError("slice_cols range out of bounds");
    const std::size_t n = xv.rows(), w = end - begin;
    Tensor out({n, w});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < w; ++c) out.at(r, c) = xv.at(r, begin + c);
    return graph_of(x).record(std::move(out), {x}, [ix = x.id, begin, n, w](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        Tensor& gx = g.grad_buffer(ix);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < w; ++c) gx.at(r, begin + c) += go.at(r, c);
    });
}

Var group_max_rows(Var x, std::size_t group)
{
    require_rank2("group_max_rows", x);
    if (group == 0) throw EmptyReductionError("max over groups of zero rows");
    const Tensor& xv = x.value();
    if (xv.rows() % group != 0) throw DimensionError("row count is not a multiple of the group size");
    const std::size_t groups = xv.rows() / group, c = xv.cols();
    Tensor out({groups, c});
    std::vector<std::size_t> arg(groups * c);
    for (std::size_t gi = 0; gi < groups; ++gi) {
        for (std::size_t k = 0; k < c; ++k) {
            std::size_t best = gi * group;
            for (std::size_t r = best + 1; r < (gi + 1) * group; ++r)
                if (xv.at(r, k) > xv.at(best, k)) best = r;
            arg[gi * c + k] = best;
            out.at(gi, k) = xv.at(best, k);
        }
    }
    return graph_of(x).record(std::move(out), {x}, [ix = x.id, c, arg = std::move(arg)](Graph& g, std::size_t self) {
        const Tensor& go = g.grad_buffer(self);
        Tensor& gx = g.grad_buffer(ix);
        for (std::size_t i = 0; i < arg.size(); ++i) gx.at(arg[i], i % c) += go[i];
    });
}

Var bce_with_logits_mean(Var logits, const Tensor& targets)
{
    const Tensor& s = logits.value();
    if (s.shape() != targets.shape()) {
        throw DimensionError("bce: logits " + shape_string(s.shape()) + " vs targets " + shape_string(targets.shape()));
    }
    if (s.size() == 0) throw EmptyReductionError("bce over an empty map");
    double total = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double x = s[i];
        total += std::max(x, 0.0) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
    }
    const double n = static_cast<double>(s.size());
    return graph_of(logits).record(Tensor::scalar(total / n), {logits}, [il = logits.id, targets, n](Graph& g, std::size_t self) {
        const double go = g.grad_buffer(self)[0];
        const Tensor& s = g.value(il);
        Tensor& gs = g.grad_buffer(il);
        for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += go * (stable_sigmoid(s[i]) - targets[i]) / n;
    });
}

double grad_check(const ScalarFn& f, const Tensor& point, double h)
{
    if (!(h > 0.0)) throw ConfigError("grad_check step must be positive");
    Tensor analytic;
    {
        Graph g;
        Var x = g.param(point);
        Var y = f(g, x);
        if (!std::isfinite(y.value().item())) throw NumericError("grad_check: non-finite value at the base point");
        g.backward(y);
        analytic = g.grad(x);
    }
    auto eval = [&](const Tensor& at) {
        Graph g;
        Var x = g.constant(at);
        const double v = f(g, x).value().item();
        if (!std::isfinite(v)) throw NumericError("grad_check: non-finite value at a perturbed point");
        return v;
    };
    double worst = 0.0;
    Tensor probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double base = point[i];
        probe[i] = base + h;
        const double up = eval(probe);
        probe[i] = base - h;
        const double down = eval(probe);
        probe[i] = base;
        const double numeric = (up - down) / (2.0 * h);
        const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace o3w
