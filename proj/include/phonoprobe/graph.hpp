/*
 * Copyright 2026 The phonoprobe Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "phonoprobe/common.hpp"
#include "phonoprobe/tensor.hpp"

namespace phonoprobe {

/// Reverse-mode automatic differentiation over a tape of tensor ops.
///
/// Ops evaluate eagerly, so tape order is a topological order and
/// backward() is a single reverse sweep. A Graph is built per forward
/// pass and discarded; parameters live outside the graph and are bound
/// with param(), which is where gradients are collected from after
/// backward().
class Graph {
 public:
  using Id = std::uint32_t;

  Graph() { nodes_.reserve(1024); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf holding a value that never needs a gradient.
  Id input(Tensor value);

  /// Leaf bound to external parameter storage; gradients accumulate here.
  Id param(const Tensor* bound);

  // -- ops ------------------------------------------------------------

  Id matmul(Id a, Id b);
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  /// Adds a 1 x c row vector to every row of a.
  Id add_rowwise(Id a, Id row);
  Id hadamard(Id a, Id b);
  Id scale(Id a, double k);
  Id relu(Id a);
  Id transpose(Id a);
  Id softmax_rows(Id a);
  Id log_softmax_rows(Id a);
  /// y = (x - mean)/sqrt(var + eps) * gain + bias, computed per row.
  Id layer_norm_rows(Id x, Id gain, Id bias, double eps = 1e-5);
  /// Embedding lookup: stacks table rows selected by ids.
  Id gather_rows(Id table, std::vector<std::size_t> ids);
  Id concat_rows(std::span<const Id> parts);
  Id concat_cols(std::span<const Id> parts);
  /// Rows [r0, r1) of a.
  Id slice_rows(Id a, std::size_t r0, std::size_t r1);
  /// Inverted dropout; identity when disabled or rate == 0.
  Id dropout(Id a, double rate, Rng& rng, bool enabled);
  /// Per-row weighted cross-entropy in nats: out_i = w[y_i] * (-log softmax(x_i)[y_i]).
  Id picked_weighted_nll(Id logits, std::vector<int> labels,
                         std::vector<double> class_weights);
  Id sum(Id a);
  Id mean(Id a);

  // -- access ----------------------------------------------------------

  const Tensor& value(Id id) const { return *nodes_[id].value; }
  /// Gradient of the last backward() root w.r.t. node id (zeros if unused).
  const Tensor& grad(Id id) const;
  std::size_t node_count() const { return nodes_.size(); }

  /// Seeds d(root)=1 and runs one reverse sweep. root must be scalar.
  void backward(Id root);

 private:
  struct Node {
    Tensor owned;
    const Tensor* value = nullptr;
    Tensor grad;
    bool needs_grad = false;
    std::function<void(Graph&, Id)> back;
  };

  Id push(Tensor value, bool needs_grad, std::function<void(Graph&, Id)> back);
  Tensor& grad_buf(Id id);
  bool needs(Id id) const { return nodes_[id].needs_grad; }

  std::vector<Node> nodes_;
  Tensor empty_grad_;
};

}  // namespace phonoprobe
