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

#include <cstring>
#include <fstream>

#include "ntl/bench.hpp"
#include "ntl/errors.hpp"

namespace ntl::bench {

namespace {

constexpr char kMagic[8] = {'N', 'T', 'L', 'C', 'K', 'P', 'T', '1'};

void append_bytes(std::string& buf, const void* p, size_t n) { buf.append(static_cast<const char*>(p), n); }

template <class T>
void append_pod(std::string& buf, T v) {
  append_bytes(buf, &v, sizeof(T));
}

void append_tensor(std::string& buf, const Tensor& t) {
  append_pod<uint32_t>(buf, static_cast<uint32_t>(t.ndim()));
  for (int64_t d : t.shape()) append_pod<int64_t>(buf, d);
  append_bytes(buf, t.data(), sizeof(double) * static_cast<size_t>(t.numel()));
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  const std::string& path;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw IoError(path + ": truncated checkpoint (integrity check failed)");
  }
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  Tensor tensor() {
    uint32_t ndim = pod<uint32_t>();
    if (ndim > 8) throw IoError(path + ": corrupt checkpoint tensor header");
    std::vector<int64_t> shape;
    int64_t numel = 1;
    for (uint32_t i = 0; i < ndim; ++i) {
      int64_t d = pod<int64_t>();
      if (d < 0 || d > (int64_t{1} << 32)) throw IoError(path + ": corrupt checkpoint tensor shape");
      shape.push_back(d);
      numel *= d;
    }
    need(sizeof(double) * static_cast<size_t>(numel));
    Tensor t(shape);
    std::memcpy(t.data(), buf.data() + pos, sizeof(double) * static_cast<size_t>(numel));
    pos += sizeof(double) * static_cast<size_t>(numel);
    return t;
  }
};

}  // namespace

void save_checkpoint(const ModelBundle& model, const std::string& path) {
  std::string payload;
  const std::string arch = model.arch().to_string();
  append_pod<uint32_t>(payload, static_cast<uint32_t>(arch.size()));
  append_bytes(payload, arch.data(), arch.size());

  auto append_group = [&payload](const std::vector<Tensor>& ts) {
    append_pod<uint32_t>(payload, static_cast<uint32_t>(ts.size()));
    for (const auto& t : ts) append_tensor(payload, t);
  };
  append_group(model.phi_params());
  append_group(model.omega_params());
  append_group(model.aux_params());

  uint64_t digest = fnv1a(payload.data(), payload.size());

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(kMagic, sizeof(kMagic));
  uint32_t version = 1;
  f.write(reinterpret_cast<const char*>(&version), sizeof(version));
  f.write(reinterpret_cast<const char*>(&digest), sizeof(digest));
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!f) throw IoError("short write saving checkpoint: " + path);
}

ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string all((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (all.size() < sizeof(kMagic) + sizeof(uint32_t) + sizeof(uint64_t))
    throw IoError(path + ": truncated checkpoint header");
  if (std::memcmp(all.data(), kMagic, sizeof(kMagic)) != 0) throw IoError(path + ": not a checkpoint file");
  uint32_t version;
  std::memcpy(&version, all.data() + sizeof(kMagic), sizeof(version));
  if (version != 1) throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
  uint64_t digest;
  std::memcpy(&digest, all.data() + sizeof(kMagic) + sizeof(version), sizeof(digest));
  std::string payload = all.substr(sizeof(kMagic) + sizeof(version) + sizeof(digest));
  if (fnv1a(payload.data(), payload.size()) != digest)
    throw IoError(path + ": checkpoint integrity check failed (truncated or corrupt)");

  Reader r{payload, 0, path};
  uint32_t arch_len = r.pod<uint32_t>();
  r.need(arch_len);
  std::string arch_str = payload.substr(r.pos, arch_len);
  r.pos += arch_len;
  ArchSpec arch = ArchSpec::parse(arch_str);

  ModelBundle model = ModelBundle::init(arch, 0);
  auto read_group = [&r](std::vector<Tensor>& ts) {
    uint32_t n = r.pod<uint32_t>();
    ts.clear();
    for (uint32_t i = 0; i < n; ++i) ts.push_back(r.tensor());
  };
  read_group(model.phi_params());
  read_group(model.omega_params());
  read_group(model.aux_params());
  if (r.pos != payload.size()) throw IoError(path + ": trailing bytes in checkpoint");
  return model;
}

ModelBundle load_checkpoint(const std::string& path, const ArchSpec& expected) {
  ModelBundle m = load_checkpoint(path);
  if (!(m.arch() == expected))
    throw IoError(path + ": checkpoint arch '" + m.arch().to_string() + "' does not match expected '" +
                  expected.to_string() + "'");
  return m;
}

}  // namespace ntl::bench
