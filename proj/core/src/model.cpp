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

#include "ntl/model.hpp"

#include <cmath>
#include <sstream>

#include "ntl/errors.hpp"
#include "ntl/rng.hpp"

namespace ntl {

namespace {

Tensor he_normal(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, std_dev);
  return t;
}

Tensor linear_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  double std_dev = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, std_dev);
  return t;
}

void init_linear_head(std::vector<Tensor>& out, int64_t in_dim, int64_t out_dim, Rng& rng) {
  out.clear();
  out.push_back(linear_init({in_dim, out_dim}, in_dim, rng));
  out.push_back(Tensor({out_dim}));
}

}  // namespace

int64_t ArchSpec::feature_dim() const {
  int64_t s = input_size;
  for (size_t i = 0; i < conv_channels.size(); ++i) s /= 2;
  return static_cast<int64_t>(conv_channels.back()) * s * s;
}

void ArchSpec::validate() const {
  if (input_channels < 1) throw ValidationError("arch: input_channels must be positive");
  if (num_classes < 2) throw ValidationError("arch: needs at least two classes");
  if (conv_channels.empty()) throw ValidationError("arch: needs at least one conv block");
  for (int c : conv_channels)
    if (c < 1) throw ValidationError("arch: conv channels must be positive");
  int64_t s = input_size;
  for (size_t i = 0; i < conv_channels.size(); ++i) {
    if (s < 2 || s % 2 != 0) throw ValidationError("arch: input size not divisible by pooling stack");
    s /= 2;
  }
}

std::string ArchSpec::to_string() const {
  std::ostringstream os;
  os << "conv:";
  for (size_t i = 0; i < conv_channels.size(); ++i) os << (i ? "," : "") << conv_channels[i];
  os << "|in:" << input_channels << "x" << input_size << "|classes:" << num_classes;
  if (aux_domain_head) os << "|aux";
  return os.str();
}

ArchSpec ArchSpec::parse(const std::string& s) {
  ArchSpec a;
  a.conv_channels.clear();
  std::stringstream ss(s);
  std::string field;
  bool saw_conv = false;
  while (std::getline(ss, field, '|')) {
    if (field.rfind("conv:", 0) == 0) {
      saw_conv = true;
      std::stringstream cs(field.substr(5));
      std::string tok;
      while (std::getline(cs, tok, ',')) a.conv_channels.push_back(std::stoi(tok));
    } else if (field.rfind("in:", 0) == 0) {
      auto body = field.substr(3);
      auto x = body.find('x');
      if (x == std::string::npos) throw ValidationError("arch: bad in: field '" + field + "'");
      a.input_channels = std::stoi(body.substr(0, x));
      a.input_size = std::stoi(body.substr(x + 1));
    } else if (field.rfind("classes:", 0) == 0) {
      a.num_classes = std::stoi(field.substr(8));
    } else if (field == "aux") {
      a.aux_domain_head = true;
    } else {
      throw ValidationError("arch: unknown field '" + field + "'");
    }
  }
  if (!saw_conv) throw ValidationError("arch: missing conv: field");
  a.validate();
  return a;
}

ModelBundle ModelBundle::init(const ArchSpec& arch, uint64_t seed) {
  arch.validate();
  ModelBundle m;
  m.arch_ = arch;
  Rng rng(derive_seed(seed, "model_init"));
  int64_t in_c = arch.input_channels;
  for (int out_c : arch.conv_channels) {
    int64_t fan_in = in_c * 9;
    m.phi_params_.push_back(he_normal({out_c, in_c, 3, 3}, fan_in, rng));
    m.phi_params_.push_back(Tensor({out_c}));
    in_c = out_c;
  }
  Rng head_rng(derive_seed(seed, "omega_init"));
  init_linear_head(m.omega_params_, arch.feature_dim(), arch.num_classes, head_rng);
  if (arch.aux_domain_head) {
    Rng aux_rng(derive_seed(seed, "aux_init"));
    init_linear_head(m.aux_params_, arch.feature_dim(), 2, aux_rng);
  }
  return m;
}

void ModelBundle::reinit_omega(uint64_t seed) {
  Rng rng(derive_seed(seed, "omega_init"));
  init_linear_head(omega_params_, arch_.feature_dim(), arch_.num_classes, rng);
}

static uint64_t params_checksum(const std::vector<Tensor>& ts, uint64_t h) {
  for (const auto& t : ts) h = checksum(t, h);
  return h;
}

uint64_t ModelBundle::parameter_checksum() const {
  uint64_t h = 0xcbf29ce484222325ull;
  h = params_checksum(phi_params_, h);
  h = params_checksum(omega_params_, h);
  h = params_checksum(aux_params_, h);
  return h;
}

uint64_t ModelBundle::phi_checksum() const { return params_checksum(phi_params_, 0xcbf29ce484222325ull); }
uint64_t ModelBundle::omega_checksum() const { return params_checksum(omega_params_, 0xcbf29ce484222325ull); }

Tensor ModelBundle::features(const Tensor& images) const {
  auto tm = TapeModel::bind(*this, false, false, false);
  return tm.features(ad::constant(images))->value;
}

Tensor ModelBundle::logits(const Tensor& images) const {
  auto tm = TapeModel::bind(*this, false, false, false);
  return tm.logits(ad::constant(images))->value;
}

Tensor ModelBundle::probs(const Tensor& images) const { return ad::softmax_rows(logits(images)); }

std::vector<int> ModelBundle::predict(const Tensor& images) const {
  Tensor lg = logits(images);
  int64_t n = lg.dim(0), c = lg.dim(1);
  std::vector<int> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (lg.at2(i, j) > lg.at2(i, best)) best = j;  // strict: ties keep the lowest index
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

TapeModel TapeModel::bind(const ModelBundle& m, bool phi_grad, bool omega_grad, bool aux_grad) {
  TapeModel t;
  t.arch = &m.arch_;
  for (const auto& p : m.phi_params_) t.phi.push_back(ad::leaf(p, phi_grad));
  for (const auto& p : m.omega_params_) t.omega.push_back(ad::leaf(p, omega_grad));
  for (const auto& p : m.aux_params_) t.aux.push_back(ad::leaf(p, aux_grad));
  return t;
}

ad::VarPtr TapeModel::features(const ad::VarPtr& images) const {
  ad::VarPtr x = images;
  for (size_t b = 0; 2 * b + 1 < phi.size(); ++b) {
    x = ad::maxpool2(ad::relu(ad::conv2d(x, phi[2 * b], phi[2 * b + 1])));
  }
  int64_t n = x->value.dim(0);
  return ad::reshape(x, {n, x->value.numel() / n});
}

ad::VarPtr TapeModel::logits_from_features(const ad::VarPtr& feats) const {
  return ad::add_rowvec(ad::matmul(feats, omega[0]), omega[1]);
}

ad::VarPtr TapeModel::aux_logits(const ad::VarPtr& feats) const {
  if (aux.empty()) throw ValidationError("no domain head configured");
  return ad::add_rowvec(ad::matmul(feats, aux[0]), aux[1]);
}

std::vector<ad::VarPtr> TapeModel::trainable_leaves() const {
  std::vector<ad::VarPtr> out;
  for (const auto& v : phi)
    if (v->requires_grad) out.push_back(v);
  for (const auto& v : omega)
    if (v->requires_grad) out.push_back(v);
  for (const auto& v : aux)
    if (v->requires_grad) out.push_back(v);
  return out;
}

TapeModel TapeModel::from_leaves(const ArchSpec& arch, const std::vector<ad::VarPtr>& leaves) {
  size_t phi_count = arch.conv_channels.size() * 2;
  size_t expected = phi_count + 2 + (arch.aux_domain_head ? 2 : 0);
  if (leaves.size() != expected) throw ValidationError("from_leaves: wrong leaf count for arch");
  TapeModel t;
  t.arch = &arch;
  t.phi.assign(leaves.begin(), leaves.begin() + static_cast<ptrdiff_t>(phi_count));
  t.omega.assign(leaves.begin() + static_cast<ptrdiff_t>(phi_count), leaves.begin() + static_cast<ptrdiff_t>(phi_count) + 2);
  if (arch.aux_domain_head) t.aux.assign(leaves.end() - 2, leaves.end());
  return t;
}

std::vector<Tensor> snapshot_params(const ModelBundle& m) {
  std::vector<Tensor> out;
  for (const auto& t : m.phi_params()) out.push_back(t);
  for (const auto& t : m.omega_params()) out.push_back(t);
  for (const auto& t : m.aux_params()) out.push_back(t);
  return out;
}

void restore_params(ModelBundle& m, const std::vector<Tensor>& params) {
  size_t i = 0;
  for (auto& t : m.phi_params()) t = params.at(i++);
  for (auto& t : m.omega_params()) t = params.at(i++);
  for (auto& t : m.aux_params()) t = params.at(i++);
  if (i != params.size()) throw ValidationError("restore_params: parameter count mismatch");
}

std::vector<Tensor*> trainable_params(ModelBundle& m, bool phi, bool omega, bool aux) {
  std::vector<Tensor*> out;
  if (phi)
    for (auto& t : m.phi_params()) out.push_back(&t);
  if (omega)
    for (auto& t : m.omega_params()) out.push_back(&t);
  if (aux)
    for (auto& t : m.aux_params()) out.push_back(&t);
  return out;
}

}  // namespace ntl
