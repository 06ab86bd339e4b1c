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

#include "phonoprobe/graph.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <utility>

namespace phonoprobe {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<Mat>;
using CMap = Eigen::Map<const Mat>;

CMap cmap(const Tensor& t) { return CMap(t.raw(), t.rows(), t.cols()); }
Map mmap(Tensor& t) { return Map(t.raw(), t.rows(), t.cols()); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ConfigError(std::string(op) + ": shape mismatch " + a.shape_string() +
                      " vs " + b.shape_string());
}

}  // namespace

Graph::Id Graph::push(Tensor value, bool needs_grad,
                      std::function<void(Graph&, Id)> back) {
  Node n;
  n.owned = std::move(value);
  n.value = &n.owned;
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  // owned moved into the vector; fix the pointer.
  nodes_.back().value = &nodes_.back().owned;
  return static_cast<Id>(nodes_.size() - 1);
}

Graph::Id Graph::input(Tensor value) {
  return push(std::move(value), false, nullptr);
}

Graph::Id Graph::param(const Tensor* bound) {
  Node n;
  n.value = bound;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tensor& Graph::grad_buf(Id id) {
  Node& n = nodes_[id];
  if (n.grad.empty())
    n.grad = Tensor::zeros(n.value->rows(), n.value->cols());
  return n.grad;
}

const Tensor& Graph::grad(Id id) const {
  const Node& n = nodes_[id];
  if (!n.grad.empty()) return n.grad;
  return empty_grad_;
}

void Graph::backward(Id root) {
  if (value(root).size() != 1)
    throw ConfigError("backward: root must be scalar, got " +
                      value(root).shape_string());
  grad_buf(root).at(0) = 1.0;
  for (Id id = root + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.back || n.grad.empty()) continue;
    n.back(*this, id);
  }
}

// ---------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------

Graph::Id Graph::matmul(Id a, Id b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.cols() != B.rows())
    throw ConfigError("matmul: inner dimension mismatch " + A.shape_string() +
                      " * " + B.shape_string());
  Tensor C = Tensor::zeros(A.rows(), B.cols());
  mmap(C).noalias() = cmap(A) * cmap(B);
  bool ng = needs(a) || needs(b);
  return push(std::move(C), ng, [a, b](Graph& g, Id self) {
    const Tensor& G = g.grad(self);
    if (g.needs(a))
      mmap(g.grad_buf(a)).noalias() += cmap(G) * cmap(g.value(b)).transpose();
    if (g.needs(b))
      mmap(g.grad_buf(b)).noalias() += cmap(g.value(a)).transpose() * cmap(G);
  });
}

Graph::Id Graph::add(Id a, Id b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_same_shape(A, B, "add");
  Tensor C = Tensor::zeros(A.rows(), A.cols());
  mmap(C) = cmap(A) + cmap(B);
  bool ng = needs(a) || needs(b);
  return push(std::move(C), ng, [a, b](Graph& g, Id self) {
    const Tensor& G = g.grad(self);
    if (g.needs(a)) mmap(g.grad_buf(a)) += cmap(G);
    if (g.needs(b)) mmap(g.grad_buf(b)) += cmap(G);
  });
}

Graph::Id Graph::sub(Id a, Id b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_same_shape(A, B, "sub");
  Tensor C = Tensor::zeros(A.rows(), A.cols());
  mmap(C) = cmap(A) - cmap(B);
  bool ng = needs(a) || needs(b);
  return push(std::move(C), ng, [a, b](Graph& g, Id self) {
    const Tensor& G = g.grad(self);
    if (g.needs(a)) mmap(g.grad_buf(a)) += cmap(G);
    if (g.needs(b)) mmap(g.grad_buf(b)) -= cmap(G);
  });
}

Graph::Id Graph::add_rowwise(Id a, Id row) {
  const Tensor& A = value(a);
  const Tensor& R = value(row);
  if (R.rows() != 1 || R.cols() != A.cols())
    throw ConfigError("add_rowwise: row must be 1x" + std::to_string(A.cols()));
  Tensor C = Tensor::zeros(A.rows(), A.cols());
  mmap(C) = cmap(A).rowwise() + cmap(R).row(0);
  bool ng = needs(a) || needs(row);
  return push(std::move(C), ng, [a, row](Graph& g, Id self) {
    const Tensor& G = g.grad(self);
    if (g.needs(a)) mmap(g.grad_buf(a)) += cmap(G);
    if (g.needs(row))
      mmap(g.grad_buf(row)).row(0) += cmap(G).colwise().sum();
  });
}

Graph::Id Graph::hadamard(Id a, Id b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_same_shape(A, B, "hadamard");
  Tensor C = Tensor::zeros(A.rows(), A.cols());
  mmap(C) = cmap(A).cwiseProduct(cmap(B));
  bool ng = needs(a) || needs(b);
  return push(std::move(C), ng, [a, b](Graph& g, Id self) {
    const Tensor& G = g.grad(self);
    if (g.needs(a))
      mmap(g.grad_buf(a)) += cmap(G).cwiseProduct(cmap(g.value(b)));
    if (g.needs(b))
      mmap(g.grad_buf(b)) += cmap(G).cwiseProduct(cmap(g.value(a)));
  });
}

Graph::Id Graph::scale(Id a, double k) {
  const Tensor& A = value(a);
  Tensor C = Tensor::zeros(A.rows(), A.cols());
  mmap(C) = cmap(A) * k;
  return push(std::move(C), needs(a), [a, k](Graph& g, Id self) {
    mmap(g.grad_buf(a)) += cmap(g.grad(self)) * k;
  });
}

Graph::Id Graph::relu(Id a) {
  const Tensor& A = value(a);
  Tensor C = Tensor::zeros(A.rows(), A.cols());
  mmap(C) = cmap(A).cwiseMax(0.0);
  return push(std::move(C), needs(a), [a](Graph& g, Id self) {
    const Tensor& G = g.grad(self);
    const Tensor& A2 = g.value(a);
    Tensor& GA = g.grad_buf(a);
    for (std::size_t i = 0; i < A2.size(); ++i)
      if (A2.at(i) > 0.0) GA.at(i) += G.at(i);
  });
}

Graph::Id Graph::transpose(Id a) {
  const Tensor& A = value(a);
  Tensor C = Tensor::zeros(A.cols(), A.rows());
  mmap(C) = cmap(A).transpose();
  return push(std::move(C), needs(a), [a](Graph& g, Id self) {
    mmap(g.grad_buf(a)) += cmap(g.grad(self)).transpose();
  });
}

Graph::Id Graph::softmax_rows(Id a) {
  const Tensor& A = value(a);
  Tensor C = Tensor::zeros(A.rows(), A.cols());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double m = A.at(r, 0);
    for (std::size_t c = 1; c < A.cols(); ++c) m = std::max(m, A.at(r, c));
    double z = 0;
    for (std::size_t c = 0; c < A.cols(); ++c) {
      double e = std::exp(A.at(r, c) - m);
      C.at(r, c) = e;
      z += e;
    }
    for (std::size_t c = 0; c < A.cols(); ++c) C.at(r, c) /= z;
  }
  return push(std::move(C), needs(a), [a](Graph& g, Id self) {
    const Tensor& Y = g.value(self);
    const Tensor& G = g.grad(self);
    Tensor& GA = g.grad_buf(a);
    for (std::size_t r = 0; r < Y.rows(); ++r) {
      double dot = 0;
      for (std::size_t c = 0; c < Y.cols(); ++c) dot += G.at(r, c) * Y.at(r, c);
      for (std::size_t c = 0; c < Y.cols(); ++c)
        GA.at(r, c) += Y.at(r, c) * (G.at(r, c) - dot);
    }
  });
}

Graph::Id Graph::log_softmax_rows(Id a) {
  const Tensor& A = value(a);
  Tensor C = Tensor::zeros(A.rows(), A.cols());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double m = A.at(r, 0);
    for (std::size_t c = 1; c < A.cols(); ++c) m = std::max(m, A.at(r, c));
    double z = 0;
    for (std::size_t c = 0; c < A.cols(); ++c) z += std::exp(A.at(r, c) - m);
    double lse = m + std::log(z);
    for (std::size_t c = 0; c < A.cols(); ++c) C.at(r, c) = A.at(r, c) - lse;
  }
  return push(std::move(C), needs(a), [a](Graph& g, Id self) {
    const Tensor& Y = g.value(self);
    const Tensor& G = g.grad(self);
    Tensor& GA = g.grad_buf(a);
    for (std::size_t r = 0; r < Y.rows(); ++r) {
      double gsum = 0;
      for (std::size_t c = 0; c < Y.cols(); ++c) gsum += G.at(r, c);
      for (std::size_t c = 0; c < Y.cols(); ++c)
        GA.at(r, c) += G.at(r, c) - std::exp(Y.at(r, c)) * gsum;
    }
  });
}

Graph::Id Graph::layer_norm_rows(Id x, Id gain, Id bias, double eps) {
  const Tensor& X = value(x);
  const Tensor& Gn = value(gain);
  const Tensor& B = value(bias);
  if (Gn.rows() != 1 || Gn.cols() != X.cols() || B.rows() != 1 ||
      B.cols() != X.cols())
    throw ConfigError("layer_norm_rows: gain/bias must be 1x" +
                      std::to_string(X.cols()));
  const std::size_t n = X.cols();
  Tensor Y = Tensor::zeros(X.rows(), n);
  Tensor xhat = Tensor::zeros(X.rows(), n);
  Tensor inv_std = Tensor::zeros(X.rows(), 1);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    double mu = 0;
    for (std::size_t c = 0; c < n; ++c) mu += X.at(r, c);
    mu /= static_cast<double>(n);
    double var = 0;
    for (std::size_t c = 0; c < n; ++c) {
      double d = X.at(r, c) - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std.at(r, 0) = is;
    for (std::size_t c = 0; c < n; ++c) {
      double xh = (X.at(r, c) - mu) * is;
      xhat.at(r, c) = xh;
      Y.at(r, c) = xh * Gn.at(0, c) + B.at(0, c);
    }
  }
  bool ng = needs(x) || needs(gain) || needs(bias);
  // xhat/inv_std are captured by value for the backward pass.
  return push(std::move(Y), ng,
              [x, gain, bias, xhat = std::move(xhat),
               inv_std = std::move(inv_std)](Graph& g, Id self) {
                const Tensor& G = g.grad(self);
                const Tensor& Gn2 = g.value(gain);
                const std::size_t n = G.cols();
                if (g.needs(gain)) {
                  Tensor& GG = g.grad_buf(gain);
                  for (std::size_t r = 0; r < G.rows(); ++r)
                    for (std::size_t c = 0; c < n; ++c)
                      GG.at(0, c) += G.at(r, c) * xhat.at(r, c);
                }
                if (g.needs(bias)) {
                  Tensor& GB = g.grad_buf(bias);
                  for (std::size_t r = 0; r < G.rows(); ++r)
                    for (std::size_t c = 0; c < n; ++c) GB.at(0, c) += G.at(r, c);
                }
                if (g.needs(x)) {
                  Tensor& GX = g.grad_buf(x);
                  for (std::size_t r = 0; r < G.rows(); ++r) {
                    double mean_gxh = 0, mean_gxh_xh = 0;
                    for (std::size_t c = 0; c < n; ++c) {
                      double gxh = G.at(r, c) * Gn2.at(0, c);
                      mean_gxh += gxh;
                      mean_gxh_xh += gxh * xhat.at(r, c);
                    }
                    mean_gxh /= static_cast<double>(n);
                    mean_gxh_xh /= static_cast<double>(n);
                    double is = inv_std.at(r, 0);
                    for (std::size_t c = 0; c < n; ++c) {
                      double gxh = G.at(r, c) * Gn2.at(0, c);
                      GX.at(r, c) += is * (gxh - mean_gxh -
                                           xhat.at(r, c) * mean_gxh_xh);
                    }
                  }
                }
              });
}

Graph::Id Graph::gather_rows(Id table, std::vector<std::size_t> ids) {
  const Tensor& T = value(table);
  Tensor C = Tensor::zeros(ids.size(), T.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= T.rows()) throw ConfigError("gather_rows: index out of range");
    for (std::size_t c = 0; c < T.cols(); ++c) C.at(i, c) = T.at(ids[i], c);
  }
  return push(std::move(C), needs(table),
              [table, ids = std::move(ids)](Graph& g, Id self) {
                const Tensor& G = g.grad(self);
                Tensor& GT = g.grad_buf(table);
                for (std::size_t i = 0; i < ids.size(); ++i)
                  for (std::size_t c = 0; c < G.cols(); ++c)
                    GT.at(ids[i], c) += G.at(i, c);
              });
}

Graph::Id Graph::concat_rows(std::span<const Id> parts) {
  if (parts.empty()) throw ConfigError("concat_rows: empty");
  std::size_t cols = value(parts[0]).cols();
  std::size_t rows = 0;
  bool ng = false;
  for (Id p : parts) {
    if (value(p).cols() != cols) throw ConfigError("concat_rows: column mismatch");
    rows += value(p).rows();
    ng = ng || needs(p);
  }
  Tensor C = Tensor::zeros(rows, cols);
  std::size_t r0 = 0;
  for (Id p : parts) {
    const Tensor& P = value(p);
    for (std::size_t r = 0; r < P.rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) C.at(r0 + r, c) = P.at(r, c);
    r0 += P.rows();
  }
  std::vector<Id> kids(parts.begin(), parts.end());
  return push(std::move(C), ng, [kids = std::move(kids)](Graph& g, Id self) {
    const Tensor& G = g.grad(self);
    std::size_t r0 = 0;
    for (Id p : kids) {
      std::size_t pr = g.value(p).rows();
      if (g.needs(p)) {
        Tensor& GP = g.grad_buf(p);
        for (std::size_t r = 0; r < pr; ++r)
          for (std::size_t c = 0; c < G.cols(); ++c)
            GP.at(r, c) += G.at(r0 + r, c);
      }
      r0 += pr;
    }
  });
}

Graph::Id Graph::concat_cols(std::span<const Id> parts) {
  if (parts.empty()) throw ConfigError("concat_cols: empty");
  std::size_t rows = value(parts[0]).rows();
  std::size_t cols = 0;
  bool ng = false;
  for (Id p : parts) {
    if (value(p).rows() != rows) throw ConfigError("concat_cols: row mismatch");
    cols += value(p).cols();
    ng = ng || needs(p);
  }
  Tensor C = Tensor::zeros(rows, cols);
  std::size_t c0 = 0;
  for (Id p : parts) {
    const Tensor& P = value(p);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < P.cols(); ++c) C.at(r, c0 + c) = P.at(r, c);
    c0 += P.cols();
  }
  std::vector<Id> kids(parts.begin(), parts.end());
  return push(std::move(C), ng, [kids = std::move(kids)](Graph& g, Id self) {
    const Tensor& G = g.grad(self);
    std::size_t c0 = 0;
    for (Id p : kids) {
      std::size_t pc = g.value(p).cols();
      if (g.needs(p)) {
        Tensor& GP = g.grad_buf(p);
        for (std::size_t r = 0; r < G.rows(); ++r)
          for (std::size_t c = 0; c < pc; ++c) GP.at(r, c) += G.at(r, c0 + c);
      }
      c0 += pc;
    }
  });
}

Graph::Id Graph::slice_rows(Id a, std::size_t r0, std::size_t r1) {
  const Tensor& A = value(a);
  if (r0 >= r1 || r1 > A.rows()) throw ConfigError("slice_rows: bad range");
  Tensor C = Tensor::zeros(r1 - r0, A.cols());
  for (std::size_t r = r0; r < r1; ++r)
    for (std::size_t c = 0; c < A.cols(); ++c) C.at(r - r0, c) = A.at(r, c);
  return push(std::move(C), needs(a), [a, r0](Graph& g, Id self) {
    const Tensor& G = g.grad(self);
    Tensor& GA = g.grad_buf(a);
    for (std::size_t r = 0; r < G.rows(); ++r)
      for (std::size_t c = 0; c < G.cols(); ++c) GA.at(r0 + r, c) += G.at(r, c);
  });
}

Graph::Id Graph::dropout(Id a, double rate, Rng& rng, bool enabled) {
  if (!enabled || rate == 0.0) return a;
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0,1)");
  const Tensor& A = value(a);
  double keep = 1.0 - rate;
  Tensor mask = Tensor::zeros(A.rows(), A.cols());
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask.at(i) = rng.uniform01() < keep ? 1.0 / keep : 0.0;
  Tensor C = Tensor::zeros(A.rows(), A.cols());
  for (std::size_t i = 0; i < C.size(); ++i) C.at(i) = A.at(i) * mask.at(i);
  return push(std::move(C), needs(a),
              [a, mask = std::move(mask)](Graph& g, Id self) {
                const Tensor& G = g.grad(self);
                Tensor& GA = g.grad_buf(a);
                for (std::size_t i = 0; i < G.size(); ++i)
                  GA.at(i) += G.at(i) * mask.at(i);
              });
}

Graph::Id Graph::picked_weighted_nll(Id logits, std::vector<int> labels,
                                     std::vector<double> class_weights) {
  const Tensor& X = value(logits);
  const std::size_t k = X.cols();
  if (labels.size() != X.rows())
    throw ConfigError("picked_weighted_nll: one label per row required");
  if (class_weights.size() != k)
    throw ConfigError("picked_weighted_nll: one weight per class required");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      throw ConfigError("picked_weighted_nll: label out of range: " +
                        std::to_string(y));
  Tensor out = Tensor::zeros(X.rows(), 1);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    double m = X.at(r, 0);
    for (std::size_t c = 1; c < k; ++c) m = std::max(m, X.at(r, c));
    double z = 0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(X.at(r, c) - m);
    double lse = m + std::log(z);
    int y = labels[r];
    out.at(r, 0) = class_weights[y] * (lse - X.at(r, y));
  }
  return push(std::move(out), needs(logits),
              [logits, labels = std::move(labels),
               class_weights = std::move(class_weights)](Graph& g, Id self) {
                const Tensor& G = g.grad(self);
                const Tensor& X2 = g.value(logits);
                Tensor& GX = g.grad_buf(logits);
                const std::size_t k = X2.cols();
                for (std::size_t r = 0; r < X2.rows(); ++r) {
                  double m = X2.at(r, 0);
                  for (std::size_t c = 1; c < k; ++c)
                    m = std::max(m, X2.at(r, c));
                  double z = 0;
                  for (std::size_t c = 0; c < k; ++c)
                    z += std::exp(X2.at(r, c) - m);
                  int y = labels[r];
                  double coeff = G.at(r, 0) * class_weights[y];
                  for (std::size_t c = 0; c < k; ++c) {
                    double p = std::exp(X2.at(r, c) - m) / z;
                    GX.at(r, c) +=
                        coeff * (p - (static_cast<int>(c) == y ? 1.0 : 0.0));
                  }
                }
              });
}

Graph::Id Graph::sum(Id a) {
  const Tensor& A = value(a);
  double s = 0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A.at(i);
  return push(Tensor::scalar(s), needs(a), [a](Graph& g, Id self) {
    double gs = g.grad(self).at(0);
    Tensor& GA = g.grad_buf(a);
    for (std::size_t i = 0; i < GA.size(); ++i) GA.at(i) += gs;
  });
}

Graph::Id Graph::mean(Id a) {
  const Tensor& A = value(a);
  if (A.size() == 0) throw ConfigError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(A.size()));
}

}  // namespace phonoprobe
