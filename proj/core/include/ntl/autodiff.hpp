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

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ntl/tensor.hpp"

namespace ntl::ad {

// Small dynamic reverse-mode tape. A graph is built per loss evaluation and
// freed when the last VarPtr goes out of scope. Everything is double
// precision; the same ops serve training and tape-free inference (leaves with
// requires_grad=false never run their backward).

struct Node;
using VarPtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily by ensure_grad()
  bool requires_grad = false;
  std::vector<VarPtr> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor(value.shape());
    return grad;
  }
  bool has_grad() const { return grad.numel() == value.numel(); }
};

VarPtr leaf(Tensor value, bool requires_grad = false);
VarPtr constant(Tensor value);
VarPtr constant_scalar(double v);

/// Backpropagates from a scalar root. Accumulates into .grad of every
/// reachable node with requires_grad (leaves keep theirs until reset).
void backward(const VarPtr& root);

// ---- elementwise / structural ----
VarPtr add(const VarPtr& a, const VarPtr& b);
VarPtr sub(const VarPtr& a, const VarPtr& b);
VarPtr neg(const VarPtr& a);
VarPtr hadamard(const VarPtr& a, const VarPtr& b);
VarPtr scale(const VarPtr& a, double s);
VarPtr add_scalar(const VarPtr& a, double s);
VarPtr relu(const VarPtr& a);
VarPtr exp_(const VarPtr& a);
VarPtr log_eps(const VarPtr& a, double eps = 0.0);  // log(a + eps)
VarPtr reshape(const VarPtr& a, std::vector<int64_t> shape);
VarPtr concat_rows(const VarPtr& a, const VarPtr& b);
VarPtr stop_gradient(const VarPtr& a);

// ---- linear algebra ----
VarPtr matmul(const VarPtr& a, const VarPtr& b);          // [n,k]x[k,m]
VarPtr add_rowvec(const VarPtr& x, const VarPtr& bias);   // [n,m] + [m]

// ---- conv net ----
/// 2D convolution, stride 1, zero padding (k-1)/2 (odd square kernels).
/// x: [N,Ci,H,W], w: [Co,Ci,k,k], bias: [Co] -> [N,Co,H,W].
VarPtr conv2d(const VarPtr& x, const VarPtr& w, const VarPtr& bias);
/// 2x2 max pooling, stride 2; ties resolve to the first (row-major) cell.
VarPtr maxpool2(const VarPtr& x);

// ---- reductions / losses ----
VarPtr sum_all(const VarPtr& a);
VarPtr mean_all(const VarPtr& a);
VarPtr colmean(const VarPtr& a);  // [n,C] -> [1,C]
VarPtr row_log_softmax(const VarPtr& logits);  // [n,C]
/// -mean_i logp[i, labels[i]]
VarPtr nll_mean(const VarPtr& logp, const std::vector<int>& labels);
/// -mean_i sum_j targets[i,j] * logp[i,j] (targets constant)
VarPtr ce_rows_mean(const VarPtr& logp, const Tensor& targets);
/// mean_i KL(softmax(row_i) || q_i) with q floored at `floor` before log.
/// logp must be row log-probabilities; q constant.
VarPtr kl_rows_mean(const VarPtr& logp, const Tensor& q, double floor = 1e-12);
/// min(x, bound) on a scalar; gradient passes only while x <= bound.
VarPtr clamp_max(const VarPtr& x, double bound);

// ---- domain-divergence nodes (analytic backward, incl. bandwidth path) ----
/// Biased squared MMD between feature batches za [n,d], zb [m,d] under an
/// averaged multi-Gaussian kernel: k(u,v) = mean_s exp(-|u-v|^2/(2(s*sigma)^2))
/// with sigma the median pairwise Euclidean distance of the pooled sample
/// (falls back to 1.0 if the median is zero). The median's dependence on the
/// points is differentiated, so finite differences agree everywhere off ties.
VarPtr mmd_biased(const VarPtr& za, const VarPtr& zb, const std::vector<double>& scales);

/// Scatter ratio tr(S_b) / (tr(S_w) + eps) over features z [n,d] with labels.
VarPtr fda_term(const VarPtr& z, const std::vector<int>& labels, double eps = 1e-8);

// Tape-free helper used by inference paths.
Tensor softmax_rows(const Tensor& logits);

}  // namespace ntl::ad
