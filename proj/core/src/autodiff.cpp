// Copyright 2026 The ntlkit Authors. All Rights Reserved.
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

#include "ntl/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "ntl/errors.hpp"

namespace ntl::ad {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

VarPtr make_node(Tensor value, std::vector<VarPtr> parents, std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return n;
}

void accumulate(const VarPtr& p, const Tensor& g) {
  if (p->requires_grad) p->ensure_grad().add_(g);
}

}  // namespace

VarPtr leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

VarPtr constant(Tensor value) { return leaf(std::move(value), false); }
VarPtr constant_scalar(double v) { return leaf(Tensor::scalar(v), false); }

void backward(const VarPtr& root) {
  if (root->value.numel() != 1) throw ValidationError("backward requires a scalar root");
  if (!root->requires_grad) return;
  // Iterative postorder DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* next = node->parents[idx++].get();
      if (next->requires_grad && visited.insert(next).second) stack.emplace_back(next, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise / structural
// ---------------------------------------------------------------------------

VarPtr add(const VarPtr& a, const VarPtr& b) {
  if (!a->value.same_shape(b->value)) throw ValidationError("add: shape mismatch");
  Tensor out = a->value;
  out.add_(b->value);
  return make_node(std::move(out), {a, b}, [](Node& n) {
    accumulate(n.parents[0], n.grad);
    accumulate(n.parents[1], n.grad);
  });
}

VarPtr sub(const VarPtr& a, const VarPtr& b) {
  if (!a->value.same_shape(b->value)) throw ValidationError("sub: shape mismatch");
  Tensor out = a->value;
  out.add_(b->value, -1.0);
  return make_node(std::move(out), {a, b}, [](Node& n) {
    accumulate(n.parents[0], n.grad);
    if (n.parents[1]->requires_grad) n.parents[1]->ensure_grad().add_(n.grad, -1.0);
  });
}

VarPtr neg(const VarPtr& a) {
  Tensor out = a->value;
  out.scale_(-1.0);
  return make_node(std::move(out), {a}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().add_(n.grad, -1.0);
  });
}

VarPtr hadamard(const VarPtr& a, const VarPtr& b) {
  if (!a->value.same_shape(b->value)) throw ValidationError("hadamard: shape mismatch");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return make_node(std::move(out), {a, b}, [](Node& n) {
    const Tensor& av = n.parents[0]->value;
    const Tensor& bv = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      Tensor& ga = n.parents[0]->ensure_grad();
      for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += n.grad[i] * bv[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& gb = n.parents[1]->ensure_grad();
      for (int64_t i = 0; i < gb.numel(); ++i) gb[i] += n.grad[i] * av[i];
    }
  });
}

VarPtr scale(const VarPtr& a, double s) {
  Tensor out = a->value;
  out.scale_(s);
  return make_node(std::move(out), {a}, [s](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad().add_(n.grad, s);
  });
}

VarPtr add_scalar(const VarPtr& a, double s) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += s;
  return make_node(std::move(out), {a}, [](Node& n) { accumulate(n.parents[0], n.grad); });
}

VarPtr relu(const VarPtr& a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return make_node(std::move(out), {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    const Tensor& x = n.parents[0]->value;
    Tensor& g = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < g.numel(); ++i)
      if (x[i] > 0.0) g[i] += n.grad[i];
  });
}

VarPtr exp_(const VarPtr& a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
  return make_node(std::move(out), {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& g = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * n.value[i];
  });
}

VarPtr log_eps(const VarPtr& a, double eps) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::log(out[i] + eps);
  return make_node(std::move(out), {a}, [eps](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    const Tensor& x = n.parents[0]->value;
    Tensor& g = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] / (x[i] + eps);
  });
}

VarPtr reshape(const VarPtr& a, std::vector<int64_t> shape) {
  Tensor out = a->value.reshaped(std::move(shape));
  return make_node(std::move(out), {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& g = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
  });
}

VarPtr concat_rows(const VarPtr& a, const VarPtr& b) {
  if (a->value.ndim() != 2 || b->value.ndim() != 2 || a->value.dim(1) != b->value.dim(1))
    throw ValidationError("concat_rows: incompatible shapes");
  int64_t n0 = a->value.dim(0), n1 = b->value.dim(0), d = a->value.dim(1);
  Tensor out({n0 + n1, d});
  std::copy(a->value.data(), a->value.data() + n0 * d, out.data());
  std::copy(b->value.data(), b->value.data() + n1 * d, out.data() + n0 * d);
  return make_node(std::move(out), {a, b}, [n0, n1, d](Node& n) {
    if (n.parents[0]->requires_grad) {
      Tensor& ga = n.parents[0]->ensure_grad();
      for (int64_t i = 0; i < n0 * d; ++i) ga[i] += n.grad[i];
    }
    if (n.parents[1]->requires_grad) {
      Tensor& gb = n.parents[1]->ensure_grad();
      for (int64_t i = 0; i < n1 * d; ++i) gb[i] += n.grad[n0 * d + i];
    }
  });
}

VarPtr stop_gradient(const VarPtr& a) { return constant(a->value); }

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

VarPtr matmul(const VarPtr& a, const VarPtr& b) {
  if (a->value.ndim() != 2 || b->value.ndim() != 2 || a->value.dim(1) != b->value.dim(0))
    throw ValidationError("matmul: incompatible shapes " + a->value.shape_str() + " x " + b->value.shape_str());
  int64_t n = a->value.dim(0), k = a->value.dim(1), m = b->value.dim(1);
  Tensor out({n, m});
  ECMap A(a->value.data(), n, k), B(b->value.data(), k, m);
  EMap(out.data(), n, m).noalias() = A * B;
  return make_node(std::move(out), {a, b}, [n, k, m](Node& node) {
    ECMap G(node.grad.data(), n, m);
    ECMap A(node.parents[0]->value.data(), n, k);
    ECMap B(node.parents[1]->value.data(), k, m);
    if (node.parents[0]->requires_grad) {
      EMap GA(node.parents[0]->ensure_grad().data(), n, k);
      GA.noalias() += G * B.transpose();
    }
    if (node.parents[1]->requires_grad) {
      EMap GB(node.parents[1]->ensure_grad().data(), k, m);
      GB.noalias() += A.transpose() * G;
    }
  });
}

VarPtr add_rowvec(const VarPtr& x, const VarPtr& bias) {
  if (x->value.ndim() != 2 || bias->value.numel() != x->value.dim(1))
    throw ValidationError("add_rowvec: incompatible shapes");
  int64_t n = x->value.dim(0), m = x->value.dim(1);
  Tensor out = x->value;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) out.at2(i, j) += bias->value[j];
  return make_node(std::move(out), {x, bias}, [n, m](Node& node) {
    if (node.parents[0]->requires_grad) node.parents[0]->ensure_grad().add_(node.grad);
    if (node.parents[1]->requires_grad) {
      Tensor& gb = node.parents[1]->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) gb[j] += node.grad[i * m + j];
    }
  });
}

// ---------------------------------------------------------------------------
// conv net ops
// ---------------------------------------------------------------------------

namespace {

// Lays out x [N,Ci,H,W] as a [(N*H*W) x (Ci*k*k)] patch matrix (zero padded).
void im2col(const Tensor& x, int64_t k, Tensor& col) {
  const int64_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t pad = (k - 1) / 2, kk = k * k;
  double* out = col.data();
  const int64_t row_len = Ci * kk;
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t h = 0; h < H; ++h) {
      for (int64_t w = 0; w < W; ++w) {
        double* row = out + ((n * H + h) * W + w) * row_len;
        for (int64_t c = 0; c < Ci; ++c) {
          const double* plane = x.data() + ((n * Ci + c) * H) * W;
          for (int64_t dy = 0; dy < k; ++dy) {
            int64_t hh = h + dy - pad;
            if (hh < 0 || hh >= H) {
              for (int64_t dx = 0; dx < k; ++dx) row[c * kk + dy * k + dx] = 0.0;
              continue;
            }
            for (int64_t dx = 0; dx < k; ++dx) {
              int64_t ww = w + dx - pad;
              row[c * kk + dy * k + dx] = (ww < 0 || ww >= W) ? 0.0 : plane[hh * W + ww];
            }
          }
        }
      }
    }
  }
}

void col2im_add(const Tensor& col, int64_t k, Tensor& dx) {
  const int64_t N = dx.dim(0), Ci = dx.dim(1), H = dx.dim(2), W = dx.dim(3);
  const int64_t pad = (k - 1) / 2, kk = k * k;
  const int64_t row_len = Ci * kk;
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t h = 0; h < H; ++h) {
      for (int64_t w = 0; w < W; ++w) {
        const double* row = col.data() + ((n * H + h) * W + w) * row_len;
        for (int64_t c = 0; c < Ci; ++c) {
          double* plane = dx.data() + ((n * Ci + c) * H) * W;
          for (int64_t dy = 0; dy < k; ++dy) {
            int64_t hh = h + dy - pad;
            if (hh < 0 || hh >= H) continue;
            for (int64_t dx2 = 0; dx2 < k; ++dx2) {
              int64_t ww = w + dx2 - pad;
              if (ww < 0 || ww >= W) continue;
              plane[hh * W + ww] += row[c * kk + dy * k + dx2];
            }
          }
        }
      }
    }
  }
}

}  // namespace

VarPtr conv2d(const VarPtr& x, const VarPtr& w, const VarPtr& bias) {
  const Tensor& xv = x->value;
  const Tensor& wv = w->value;
  if (xv.ndim() != 4 || wv.ndim() != 4) throw ValidationError("conv2d: expects 4D input and kernel");
  if (wv.dim(2) != wv.dim(3) || wv.dim(2) % 2 == 0) throw ValidationError("conv2d: odd square kernels only");
  if (xv.dim(1) != wv.dim(1)) throw ValidationError("conv2d: channel mismatch");
  const int64_t N = xv.dim(0), Ci = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int64_t Co = wv.dim(0), k = wv.dim(2), kk = k * k;

  auto col = std::make_shared<Tensor>(std::vector<int64_t>{N * H * W, Ci * kk});
  im2col(xv, k, *col);

  // wmat: [Ci*k*k, Co] (kernel transposed for right-multiplication)
  Tensor wmat({Ci * kk, Co});
  for (int64_t co = 0; co < Co; ++co)
    for (int64_t i = 0; i < Ci * kk; ++i) wmat.at2(i, co) = wv[co * Ci * kk + i];

  Tensor outmat({N * H * W, Co});
  {
    ECMap C(col->data(), N * H * W, Ci * kk);
    ECMap Wm(wmat.data(), Ci * kk, Co);
    EMap O(outmat.data(), N * H * W, Co);
    O.noalias() = C * Wm;
    for (int64_t r = 0; r < N * H * W; ++r)
      for (int64_t co = 0; co < Co; ++co) outmat.at2(r, co) += bias->value[co];
  }
  // reorder [(n,h,w),co] -> [n,co,h,w]
  Tensor out({N, Co, H, W});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t hw = 0; hw < H * W; ++hw)
      for (int64_t co = 0; co < Co; ++co) out[((n * Co + co) * H * W) + hw] = outmat[(n * H * W + hw) * Co + co];

  return make_node(std::move(out), {x, w, bias}, [col, N, Ci, Co, H, W, k, kk](Node& node) {
    // gmat: [(n,h,w), co]
    Tensor gmat({N * H * W, Co});
    for (int64_t n = 0; n < N; ++n)
      for (int64_t hw = 0; hw < H * W; ++hw)
        for (int64_t co = 0; co < Co; ++co) gmat[(n * H * W + hw) * Co + co] = node.grad[((n * Co + co) * H * W) + hw];
    ECMap G(gmat.data(), N * H * W, Co);
    ECMap C(col->data(), N * H * W, Ci * kk);

    if (node.parents[1]->requires_grad) {
      Tensor dwmat({Ci * kk, Co});
      EMap DW(dwmat.data(), Ci * kk, Co);
      DW.noalias() = C.transpose() * G;
      Tensor& gw = node.parents[1]->ensure_grad();
      for (int64_t co = 0; co < Co; ++co)
        for (int64_t i = 0; i < Ci * kk; ++i) gw[co * Ci * kk + i] += dwmat.at2(i, co);
    }
    if (node.parents[2]->requires_grad) {
      Tensor& gb = node.parents[2]->ensure_grad();
      for (int64_t r = 0; r < N * H * W; ++r)
        for (int64_t co = 0; co < Co; ++co) gb[co] += gmat.at2(r, co);
    }
    if (node.parents[0]->requires_grad) {
      const Tensor& wv = node.parents[1]->value;
      Tensor wmat({Ci * kk, Co});
      for (int64_t co = 0; co < Co; ++co)
        for (int64_t i = 0; i < Ci * kk; ++i) wmat.at2(i, co) = wv[co * Ci * kk + i];
      Tensor dcol({N * H * W, Ci * kk});
      ECMap Wm(wmat.data(), Ci * kk, Co);
      EMap DC(dcol.data(), N * H * W, Ci * kk);
      DC.noalias() = G * Wm.transpose();
      col2im_add(dcol, k, node.parents[0]->ensure_grad());
    }
  });
}

VarPtr maxpool2(const VarPtr& x) {
  const Tensor& xv = x->value;
  if (xv.ndim() != 4 || xv.dim(2) % 2 != 0 || xv.dim(3) % 2 != 0)
    throw ValidationError("maxpool2: expects 4D input with even spatial dims");
  const int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int64_t Ho = H / 2, Wo = W / 2;
  Tensor out({N, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(N * C * Ho * Wo));
  int64_t oi = 0;
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const double* plane = xv.data() + (n * C + c) * H * W;
      for (int64_t h = 0; h < Ho; ++h) {
        for (int64_t w = 0; w < Wo; ++w, ++oi) {
          int64_t base = (2 * h) * W + 2 * w;
          int64_t cand[4] = {base, base + 1, base + W, base + W + 1};
          int64_t best = cand[0];
          for (int j = 1; j < 4; ++j)
            if (plane[cand[j]] > plane[best]) best = cand[j];
          out[oi] = plane[best];
          (*argmax)[static_cast<size_t>(oi)] = (n * C + c) * H * W + best;
        }
      }
    }
  }
  return make_node(std::move(out), {x}, [argmax](Node& node) {
    if (!node.parents[0]->requires_grad) return;
    Tensor& g = node.parents[0]->ensure_grad();
    for (int64_t i = 0; i < node.grad.numel(); ++i) g[(*argmax)[static_cast<size_t>(i)]] += node.grad[i];
  });
}

// ---------------------------------------------------------------------------
// reductions / losses
// ---------------------------------------------------------------------------

VarPtr sum_all(const VarPtr& a) {
  double s = 0.0;
  for (int64_t i = 0; i < a->value.numel(); ++i) s += a->value[i];
  return make_node(Tensor::scalar(s), {a}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor& g = n.parents[0]->ensure_grad();
    double gs = n.grad[0];
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += gs;
  });
}

VarPtr mean_all(const VarPtr& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a->value.numel())); }

VarPtr colmean(const VarPtr& a) {
  if (a->value.ndim() != 2) throw ValidationError("colmean: expects 2D");
  int64_t n = a->value.dim(0), c = a->value.dim(1);
  Tensor out({1, c});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < c; ++j) out[j] += a->value.at2(i, j);
  out.scale_(1.0 / static_cast<double>(n));
  return make_node(std::move(out), {a}, [n, c](Node& node) {
    if (!node.parents[0]->requires_grad) return;
    Tensor& g = node.parents[0]->ensure_grad();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < c; ++j) g[i * c + j] += node.grad[j] / static_cast<double>(n);
  });
}

VarPtr row_log_softmax(const VarPtr& logits) {
  if (logits->value.ndim() != 2) throw ValidationError("row_log_softmax: expects 2D");
  int64_t n = logits->value.dim(0), c = logits->value.dim(1);
  Tensor out({n, c});
  for (int64_t i = 0; i < n; ++i) {
    const double* row = logits->value.data() + i * c;
    double m = row[0];
    for (int64_t j = 1; j < c; ++j) m = std::max(m, row[j]);
    double lse = 0.0;
    for (int64_t j = 0; j < c; ++j) lse += std::exp(row[j] - m);
    lse = m + std::log(lse);
    for (int64_t j = 0; j < c; ++j) out.at2(i, j) = row[j] - lse;
  }
  return make_node(std::move(out), {logits}, [n, c](Node& node) {
    if (!node.parents[0]->requires_grad) return;
    Tensor& g = node.parents[0]->ensure_grad();
    for (int64_t i = 0; i < n; ++i) {
      double gsum = 0.0;
      for (int64_t j = 0; j < c; ++j) gsum += node.grad[i * c + j];
      for (int64_t j = 0; j < c; ++j) {
        double p = std::exp(node.value[i * c + j]);
        g[i * c + j] += node.grad[i * c + j] - p * gsum;
      }
    }
  });
}

VarPtr nll_mean(const VarPtr& logp, const std::vector<int>& labels) {
  if (logp->value.ndim() != 2) throw ValidationError("nll_mean: expects 2D log-probs");
  int64_t n = logp->value.dim(0), c = logp->value.dim(1);
  if (static_cast<int64_t>(labels.size()) != n) throw ValidationError("nll_mean: label count mismatch");
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= c) throw ValidationError("nll_mean: label out of range");
    s -= logp->value.at2(i, y);
  }
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  return make_node(Tensor::scalar(s / static_cast<double>(n)), {logp}, [labels_copy, n, c](Node& node) {
    if (!node.parents[0]->requires_grad) return;
    Tensor& g = node.parents[0]->ensure_grad();
    double gs = node.grad[0] / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) g[i * c + (*labels_copy)[static_cast<size_t>(i)]] -= gs;
  });
}

VarPtr ce_rows_mean(const VarPtr& logp, const Tensor& targets) {
  if (!logp->value.same_shape(targets)) throw ValidationError("ce_rows_mean: shape mismatch");
  int64_t n = logp->value.dim(0), c = logp->value.dim(1);
  double s = 0.0;
  for (int64_t i = 0; i < n * c; ++i) s -= targets[i] * logp->value[i];
  auto tcopy = std::make_shared<Tensor>(targets);
  return make_node(Tensor::scalar(s / static_cast<double>(n)), {logp}, [tcopy, n](Node& node) {
    if (!node.parents[0]->requires_grad) return;
    Tensor& g = node.parents[0]->ensure_grad();
    double gs = node.grad[0] / static_cast<double>(n);
    for (int64_t i = 0; i < g.numel(); ++i) g[i] -= gs * (*tcopy)[i];
  });
}

VarPtr kl_rows_mean(const VarPtr& logp, const Tensor& q, double floor) {
  if (!logp->value.same_shape(q)) throw ValidationError("kl_rows_mean: shape mismatch");
  int64_t n = logp->value.dim(0), c = logp->value.dim(1);
  auto logq = std::make_shared<Tensor>(q.shape());
  for (int64_t i = 0; i < q.numel(); ++i) (*logq)[i] = std::log(std::max(q[i], floor));
  double s = 0.0;
  for (int64_t i = 0; i < n * c; ++i) {
    double p = std::exp(logp->value[i]);
    s += p * (logp->value[i] - (*logq)[i]);
  }
  return make_node(Tensor::scalar(s / static_cast<double>(n)), {logp}, [logq, n](Node& node) {
    if (!node.parents[0]->requires_grad) return;
    const Tensor& lp = node.parents[0]->value;
    Tensor& g = node.parents[0]->ensure_grad();
    double gs = node.grad[0] / static_cast<double>(n);
    for (int64_t i = 0; i < g.numel(); ++i) {
      double p = std::exp(lp[i]);
      g[i] += gs * p * (lp[i] - (*logq)[i] + 1.0);
    }
  });
}

VarPtr clamp_max(const VarPtr& x, double bound) {
  if (x->value.numel() != 1) throw ValidationError("clamp_max: expects a scalar");
  double v = x->value[0];
  bool pass = v <= bound;
  return make_node(Tensor::scalar(pass ? v : bound), {x}, [pass](Node& n) {
    if (pass) accumulate(n.parents[0], n.grad);
  });
}

// ---------------------------------------------------------------------------
// MMD and scatter-ratio nodes
// ---------------------------------------------------------------------------

namespace {

struct MedianInfo {
  double sigma = 1.0;
  // Point-index pairs (into the pooled sample) realizing the median, with
  // their weights in d(sigma)/d(distance); empty when the fallback fired.
  std::vector<std::pair<std::pair<int64_t, int64_t>, double>> pairs;
};

MedianInfo pooled_median(const double* pts, int64_t q, int64_t d) {
  MedianInfo info;
  struct Entry {
    double dist;
    int64_t i, j;
  };
  std::vector<Entry> dists;
  dists.reserve(static_cast<size_t>(q * (q - 1) / 2));
  for (int64_t i = 0; i < q; ++i) {
    for (int64_t j = i + 1; j < q; ++j) {
      double s = 0.0;
      for (int64_t t = 0; t < d; ++t) {
        double diff = pts[i * d + t] - pts[j * d + t];
        s += diff * diff;
      }
      dists.push_back({std::sqrt(s), i, j});
    }
  }
  if (dists.empty()) return info;  // single pooled point cannot happen (n,m >= 1)
  auto cmp = [](const Entry& a, const Entry& b) { return a.dist < b.dist; };
  size_t count = dists.size();
  size_t mid = count / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<int64_t>(mid), dists.end(), cmp);
  Entry upper = dists[mid];
  if (count % 2 == 1) {
    info.sigma = upper.dist;
    if (info.sigma > 0.0) info.pairs.push_back({{upper.i, upper.j}, 1.0});
  } else {
    std::nth_element(dists.begin(), dists.begin() + static_cast<int64_t>(mid) - 1, dists.begin() + static_cast<int64_t>(mid), cmp);
    Entry lower = dists[mid - 1];
    info.sigma = 0.5 * (lower.dist + upper.dist);
    if (info.sigma > 0.0) {
      if (lower.dist > 0.0) info.pairs.push_back({{lower.i, lower.j}, 0.5});
      if (upper.dist > 0.0) info.pairs.push_back({{upper.i, upper.j}, 0.5});
    }
  }
  if (info.sigma <= 0.0) {
    info.sigma = 1.0;  // all points coincide: fixed fallback bandwidth
    info.pairs.clear();
  }
  return info;
}

double kernel_avg(const double* u, const double* v, int64_t d, const std::vector<double>& scales, double sigma) {
  double sq = 0.0;
  for (int64_t t = 0; t < d; ++t) {
    double diff = u[t] - v[t];
    sq += diff * diff;
  }
  double k = 0.0;
  for (double s : scales) {
    double bw = s * sigma;
    k += std::exp(-sq / (2.0 * bw * bw));
  }
  return k / static_cast<double>(scales.size());
}

}  // namespace

VarPtr mmd_biased(const VarPtr& za, const VarPtr& zb, const std::vector<double>& scales) {
  const Tensor& A = za->value;
  const Tensor& B = zb->value;
  if (A.ndim() != 2 || B.ndim() != 2 || A.dim(1) != B.dim(1)) throw ValidationError("mmd_biased: expects [n,d] and [m,d]");
  if (A.dim(0) < 1 || B.dim(0) < 1) throw ValidationError("empty feature batch");
  if (scales.empty()) throw ValidationError("mmd_biased: no bandwidth scales");
  for (double s : scales)
    if (s <= 0.0) throw ValidationError("mmd_biased: bandwidth scales must be positive");
  const int64_t n = A.dim(0), m = B.dim(0), d = A.dim(1);

  // pooled sample: rows of A then rows of B
  Tensor pooled({n + m, d});
  std::copy(A.data(), A.data() + n * d, pooled.data());
  std::copy(B.data(), B.data() + m * d, pooled.data() + n * d);
  auto med = std::make_shared<MedianInfo>(pooled_median(pooled.data(), n + m, d));
  auto scales_copy = std::make_shared<std::vector<double>>(scales);

  double s_aa = 0.0, s_bb = 0.0, s_ab = 0.0;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) s_aa += kernel_avg(A.data() + i * d, A.data() + j * d, d, scales, med->sigma);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < m; ++j) s_bb += kernel_avg(B.data() + i * d, B.data() + j * d, d, scales, med->sigma);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) s_ab += kernel_avg(A.data() + i * d, B.data() + j * d, d, scales, med->sigma);
  double value = s_aa / static_cast<double>(n * n) + s_bb / static_cast<double>(m * m) - 2.0 * s_ab / static_cast<double>(n * m);

  return make_node(Tensor::scalar(value), {za, zb}, [med, scales_copy, n, m, d](Node& node) {
    const Tensor& A = node.parents[0]->value;
    const Tensor& B = node.parents[1]->value;
    const double g = node.grad[0];
    const double sigma = med->sigma;
    const auto& sc = *scales_copy;
    const double inv_s = 1.0 / static_cast<double>(sc.size());

    Tensor ga_local({n, d}), gb_local({m, d});
    double dval_dsigma = 0.0;

    auto pair_term = [&](const double* u, const double* v, double coeff, double* gu, double* gv) {
      double sq = 0.0;
      for (int64_t t = 0; t < d; ++t) {
        double diff = u[t] - v[t];
        sq += diff * diff;
      }
      double wsum = 0.0;   // sum_s exp(..) / (s^2 sigma^2)
      double dsig = 0.0;   // d k / d sigma
      for (double s : sc) {
        double bw2 = s * s * sigma * sigma;
        double e = std::exp(-sq / (2.0 * bw2));
        wsum += e / bw2;
        dsig += e * sq / (bw2 * sigma);
      }
      wsum *= inv_s;
      dval_dsigma += coeff * dsig * inv_s;
      for (int64_t t = 0; t < d; ++t) {
        double diff = u[t] - v[t];
        double dk_du = -diff * wsum;
        if (gu) gu[t] += coeff * dk_du;
        if (gv) gv[t] -= coeff * dk_du;
      }
    };

    const double c_aa = 1.0 / static_cast<double>(n * n);
    const double c_bb = 1.0 / static_cast<double>(m * m);
    const double c_ab = -2.0 / static_cast<double>(n * m);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j)
        if (i != j) pair_term(A.data() + i * d, A.data() + j * d, c_aa, ga_local.data() + i * d, ga_local.data() + j * d);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < m; ++j)
        if (i != j) pair_term(B.data() + i * d, B.data() + j * d, c_bb, gb_local.data() + i * d, gb_local.data() + j * d);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < m; ++j) pair_term(A.data() + i * d, B.data() + j * d, c_ab, ga_local.data() + i * d, gb_local.data() + j * d);

    // Bandwidth path: sigma is the pooled median distance, so its gradient
    // routes to the point pair(s) realizing the median.
    if (!med->pairs.empty() && dval_dsigma != 0.0) {
      auto point = [&](int64_t idx) -> const double* {
        return idx < n ? A.data() + idx * d : B.data() + (idx - n) * d;
      };
      auto gpoint = [&](int64_t idx) -> double* {
        return idx < n ? ga_local.data() + idx * d : gb_local.data() + (idx - n) * d;
      };
      for (const auto& [pr, weight] : med->pairs) {
        const double* zi = point(pr.first);
        const double* zj = point(pr.second);
        double dist = 0.0;
        for (int64_t t = 0; t < d; ++t) {
          double diff = zi[t] - zj[t];
          dist += diff * diff;
        }
        dist = std::sqrt(dist);
        if (dist <= 0.0) continue;
        double* gi = gpoint(pr.first);
        double* gj = gpoint(pr.second);
        for (int64_t t = 0; t < d; ++t) {
          double dd = (zi[t] - zj[t]) / dist;
          gi[t] += dval_dsigma * weight * dd;
          gj[t] -= dval_dsigma * weight * dd;
        }
      }
    }

    if (node.parents[0]->requires_grad) node.parents[0]->ensure_grad().add_(ga_local, g);
    if (node.parents[1]->requires_grad) node.parents[1]->ensure_grad().add_(gb_local, g);
  });
}

VarPtr fda_term(const VarPtr& z, const std::vector<int>& labels, double eps) {
  const Tensor& Z = z->value;
  if (Z.ndim() != 2) throw ValidationError("fda_term: expects [n,d] features");
  const int64_t n = Z.dim(0), d = Z.dim(1);
  if (n < 2) throw ValidationError("fda_term: needs at least two samples");
  if (static_cast<int64_t>(labels.size()) != n) throw ValidationError("fda_term: label count mismatch");

  int num_classes = 0;
  for (int y : labels) {
    if (y < 0) throw ValidationError("fda_term: negative label");
    num_classes = std::max(num_classes, y + 1);
  }
  auto counts = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(num_classes), 0);
  for (int y : labels) (*counts)[static_cast<size_t>(y)]++;

  auto class_means = std::make_shared<Tensor>(std::vector<int64_t>{num_classes, d});
  Tensor global_mean({d});
  for (int64_t i = 0; i < n; ++i) {
    int y = labels[static_cast<size_t>(i)];
    for (int64_t t = 0; t < d; ++t) {
      class_means->at2(y, t) += Z.at2(i, t);
      global_mean[t] += Z.at2(i, t);
    }
  }
  for (int c = 0; c < num_classes; ++c)
    if ((*counts)[static_cast<size_t>(c)] > 0)
      for (int64_t t = 0; t < d; ++t) class_means->at2(c, t) /= static_cast<double>((*counts)[static_cast<size_t>(c)]);
  global_mean.scale_(1.0 / static_cast<double>(n));

  double sb = 0.0, sw = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    if ((*counts)[static_cast<size_t>(c)] == 0) continue;
    double sq = 0.0;
    for (int64_t t = 0; t < d; ++t) {
      double diff = class_means->at2(c, t) - global_mean[t];
      sq += diff * diff;
    }
    sb += static_cast<double>((*counts)[static_cast<size_t>(c)]) * sq;
  }
  for (int64_t i = 0; i < n; ++i) {
    int y = labels[static_cast<size_t>(i)];
    for (int64_t t = 0; t < d; ++t) {
      double diff = Z.at2(i, t) - class_means->at2(y, t);
      sw += diff * diff;
    }
  }
  double denom = sw + eps;
  double value = sb / denom;

  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  auto gmean = std::make_shared<Tensor>(global_mean);
  return make_node(Tensor::scalar(value), {z}, [labels_copy, class_means, gmean, counts, n, d, sb, sw, eps](Node& node) {
    if (!node.parents[0]->requires_grad) return;
    const Tensor& Z = node.parents[0]->value;
    Tensor& g = node.parents[0]->ensure_grad();
    const double gs = node.grad[0];
    const double denom = sw + eps;
    for (int64_t i = 0; i < n; ++i) {
      int y = (*labels_copy)[static_cast<size_t>(i)];
      for (int64_t t = 0; t < d; ++t) {
        double dsb = 2.0 * (class_means->at2(y, t) - (*gmean)[t]);
        double dsw = 2.0 * (Z.at2(i, t) - class_means->at2(y, t));
        g[i * d + t] += gs * (dsb * denom - sb * dsw) / (denom * denom);
      }
    }
  });
}

Tensor softmax_rows(const Tensor& logits) {
  if (logits.ndim() != 2) throw ValidationError("softmax_rows: expects 2D");
  int64_t n = logits.dim(0), c = logits.dim(1);
  Tensor out({n, c});
  for (int64_t i = 0; i < n; ++i) {
    const double* row = logits.data() + i * c;
    double m = row[0];
    for (int64_t j = 1; j < c; ++j) m = std::max(m, row[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      double e = std::exp(row[j] - m);
      out.at2(i, j) = e;
      sum += e;
    }
    for (int64_t j = 0; j < c; ++j) out.at2(i, j) /= sum;
  }
  return out;
}

}  // namespace ntl::ad
