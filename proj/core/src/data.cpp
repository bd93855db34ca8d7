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

#include "ntl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ntl/auxgen.hpp"
#include "ntl/errors.hpp"
#include "ntl/image_ops.hpp"
#include "ntl/rng.hpp"

namespace ntl::data {

void ShiftSpec::validate() const {
  if (magnitude < 0.0 || magnitude > 1.0) throw ValidationError("shift magnitude must lie in [0,1]");
}

// ---------------------------------------------------------------------------
// glyph synthesis
// ---------------------------------------------------------------------------

namespace {

struct Seg {
  double x0, y0, x1, y1;
};

// Seven-segment layout in unit glyph coordinates.
//   A top, B top-right, C bottom-right, D bottom, E bottom-left,
//   F top-left, G middle.
constexpr Seg kSegments[7] = {
    {0.30, 0.20, 0.70, 0.20},  // A
    {0.70, 0.20, 0.70, 0.50},  // B
    {0.70, 0.50, 0.70, 0.80},  // C
    {0.30, 0.80, 0.70, 0.80},  // D
    {0.30, 0.50, 0.30, 0.80},  // E
    {0.30, 0.20, 0.30, 0.50},  // F
    {0.30, 0.50, 0.70, 0.50},  // G
};

// Segment masks per glyph class (bit i = segment i lit).
constexpr unsigned kGlyphSegs[10] = {
    0b0111111,  // 0: ABCDEF
    0b0000110,  // 1: BC
    0b1011011,  // 2: ABDEG
    0b1001111,  // 3: ABCDG
    0b1100110,  // 4: BCFG
    0b1101101,  // 5: ACDFG
    0b1111101,  // 6: ACDEFG
    0b0000111,  // 7: ABC
    0b1111111,  // 8: all
    0b1101111,  // 9: ABCDFG
};

double dist_to_segment(double px, double py, const Seg& s) {
  double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
  double wx = px - s.x0, wy = py - s.y0;
  double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? std::clamp((wx * vx + wy * vy) / len2, 0.0, 1.0) : 0.0;
  double dx = wx - t * vx, dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

Dataset synthesize_glyphs(uint64_t seed, const GlyphOptions& opts) {
  if (opts.count < 1) throw ValidationError("glyph count must be positive");
  if (opts.num_classes < 2 || opts.num_classes > 10) throw ValidationError("glyph classes must lie in 2..10");
  const int64_t S = opts.image_size;
  if (S < 8) throw ValidationError("glyph image size too small");

  Rng rng(derive_seed(seed, "glyphs"));
  Tensor images({opts.count, 1, S, S});
  std::vector<int> labels(static_cast<size_t>(opts.count));

  const double aa = 0.75 / static_cast<double>(S);  // soft edge width in unit coords
  for (int64_t i = 0; i < opts.count; ++i) {
    int cls = static_cast<int>(i % opts.num_classes);  // balanced by construction
    labels[static_cast<size_t>(i)] = cls;

    double theta = rng.uniform(-opts.rotation_jitter, opts.rotation_jitter) * (3.14159265358979323846 / 2.0);
    double scale = rng.uniform(opts.scale_lo, opts.scale_hi);
    double tx = rng.uniform(-opts.translate_jitter, opts.translate_jitter);
    double ty = rng.uniform(-opts.translate_jitter, opts.translate_jitter);
    double stroke = rng.uniform(opts.stroke_lo, opts.stroke_hi);
    double fg = rng.uniform(opts.fg_lo, opts.fg_hi);
    double bg = rng.uniform(opts.bg_lo, opts.bg_hi);
    if (rng.bernoulli(opts.polarity_flip_prob)) std::swap(fg, bg);
    double contrast = rng.uniform(opts.contrast_lo, opts.contrast_hi);
    double glyph_center = rng.uniform(opts.center_lo, opts.center_hi);

    double ca = std::cos(theta), sa = std::sin(theta);
    unsigned mask = kGlyphSegs[cls];
    double* px = images.data() + i * S * S;
    for (int64_t y = 0; y < S; ++y) {
      for (int64_t x = 0; x < S; ++x) {
        double u = (static_cast<double>(x) + 0.5) / static_cast<double>(S);
        double v = (static_cast<double>(y) + 0.5) / static_cast<double>(S);
        // inverse transform into glyph coordinates
        double du = u - 0.5 - tx, dv = v - 0.5 - ty;
        double gu = 0.5 + (ca * du + sa * dv) / scale;
        double gv = 0.5 + (-sa * du + ca * dv) / scale;
        double d = 1e9;
        for (int s = 0; s < 7; ++s)
          if (mask & (1u << s)) d = std::min(d, dist_to_segment(gu, gv, kSegments[s]));
        double alpha = std::clamp((stroke / 2.0 + aa - d) / (2.0 * aa), 0.0, 1.0);
        double value = bg + (fg - bg) * alpha;
        value = glyph_center + contrast * (value - glyph_center);
        // noise rides on top of the contrast remap at full amplitude
        value += rng.normal(0.0, opts.noise_sigma);
        px[y * S + x] = std::clamp(value, 0.0, 1.0);
      }
    }
  }
  return Dataset(std::move(images), std::move(labels), opts.num_classes, "synthetic_glyphs", "source");
}

// ---------------------------------------------------------------------------
// IDX ingestion
// ---------------------------------------------------------------------------

namespace {

uint32_t read_be_u32(std::ifstream& f, const std::string& path, size_t offset, const char* what) {
  unsigned char buf[4];
  f.read(reinterpret_cast<char*>(buf), 4);
  if (!f) {
    std::ostringstream os;
    os << path << ": truncated IDX header reading " << what << " at offset " << offset;
    throw IoError(os.str());
  }
  return (static_cast<uint32_t>(buf[0]) << 24) | (static_cast<uint32_t>(buf[1]) << 16) |
         (static_cast<uint32_t>(buf[2]) << 8) | static_cast<uint32_t>(buf[3]);
}

std::string hex32(uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%08x", v);
  return buf;
}

}  // namespace

Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgf(images_path, std::ios::binary);
  if (!imgf) throw IoError("cannot open IDX image file: " + images_path);
  uint32_t magic = read_be_u32(imgf, images_path, 0, "magic");
  if (magic != 0x00000803u)
    throw IoError(images_path + ": IDX magic mismatch at offset 0: got " + hex32(magic) + ", expected 0x00000803");
  uint32_t count = read_be_u32(imgf, images_path, 4, "count");
  uint32_t rows = read_be_u32(imgf, images_path, 8, "rows");
  uint32_t cols = read_be_u32(imgf, images_path, 12, "cols");
  if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096)
    throw IoError(images_path + ": implausible IDX dimensions at offset 8");

  std::vector<unsigned char> raw(static_cast<size_t>(count) * rows * cols);
  imgf.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!imgf)
    throw IoError(images_path + ": truncated IDX pixel data at offset " +
                  std::to_string(16 + static_cast<size_t>(imgf.gcount())));

  std::ifstream lblf(labels_path, std::ios::binary);
  if (!lblf) throw IoError("cannot open IDX label file: " + labels_path);
  uint32_t lmagic = read_be_u32(lblf, labels_path, 0, "magic");
  if (lmagic != 0x00000801u)
    throw IoError(labels_path + ": IDX magic mismatch at offset 0: got " + hex32(lmagic) + ", expected 0x00000801");
  uint32_t lcount = read_be_u32(lblf, labels_path, 4, "count");
  if (lcount != count) throw IoError("IDX image/label counts differ");
  std::vector<unsigned char> rawl(lcount);
  lblf.read(reinterpret_cast<char*>(rawl.data()), static_cast<std::streamsize>(rawl.size()));
  if (!lblf) throw IoError(labels_path + ": truncated IDX label data");

  // 28x28 digit files are zero-padded to 32x32 so the pooling stack divides.
  int64_t out_size = (rows == 28 && cols == 28) ? 32 : static_cast<int64_t>(rows);
  if (rows != cols && !(rows == 28 && cols == 28)) throw IoError("IDX images must be square");
  int64_t pad = (out_size - static_cast<int64_t>(rows)) / 2;

  Tensor images({static_cast<int64_t>(count), 1, out_size, out_size});
  for (int64_t n = 0; n < static_cast<int64_t>(count); ++n) {
    double* dst = images.data() + n * out_size * out_size;
    const unsigned char* src = raw.data() + static_cast<size_t>(n) * rows * cols;
    for (int64_t y = 0; y < static_cast<int64_t>(rows); ++y)
      for (int64_t x = 0; x < static_cast<int64_t>(cols); ++x)
        dst[(y + pad) * out_size + (x + pad)] = static_cast<double>(src[y * cols + x]) / 255.0;
  }
  std::vector<int> labels(rawl.begin(), rawl.end());
  int num_classes = 10;
  for (int y : labels)
    if (y >= num_classes) num_classes = y + 1;
  return Dataset(std::move(images), std::move(labels), num_classes, "digits_idx", "source");
}

Dataset load_or_synthesize(DatasetBase base, const std::string& path_or_seed) {
  switch (base) {
    case DatasetBase::digits_idx: {
      std::string labels_path = path_or_seed;
      auto pos = labels_path.find("images-idx3");
      if (pos == std::string::npos)
        throw ValidationError("cannot derive IDX labels path from '" + path_or_seed +
                              "' (expected an images-idx3 file name)");
      labels_path.replace(pos, std::string("images-idx3").size(), "labels-idx1");
      return load_idx_dataset(path_or_seed, labels_path);
    }
    case DatasetBase::synthetic_glyphs:
      return synthesize_glyphs(std::stoull(path_or_seed));
  }
  throw ValidationError("unknown dataset base");
}

// ---------------------------------------------------------------------------
// shifts and pairing
// ---------------------------------------------------------------------------

Dataset apply_shift(const Dataset& base, const ShiftSpec& shift, uint64_t seed) {
  shift.validate();
  const Tensor& src = base.raw_images();
  Tensor out;
  switch (shift.kind) {
    case ShiftKind::rotation:
      out = img::rotate_bilinear(src, shift.magnitude * (3.14159265358979323846 / 2.0));
      break;
    case ShiftKind::color_invert:
      out = img::invert_blend(src, shift.magnitude);
      break;
    case ShiftKind::background_texture: {
      // Seeded smooth sinusoidal field blended over the whole image.
      Rng rng(derive_seed(seed, "bg_texture"));
      out = src;
      const int64_t N = out.dim(0), C = out.dim(1), H = out.dim(2), W = out.dim(3);
      for (int64_t n = 0; n < N; ++n) {
        double fx = rng.uniform(1.0, 3.0), fy = rng.uniform(1.0, 3.0), phase = rng.uniform(0.0, 6.28318);
        for (int64_t c = 0; c < C; ++c) {
          double* px = out.data() + (n * C + c) * H * W;
          for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
              double tex = 0.5 + 0.5 * std::sin(6.28318 * (fx * x / static_cast<double>(W) + fy * y / static_cast<double>(H)) + phase);
              double& v = px[y * W + x];
              v = std::clamp((1.0 - 0.5 * shift.magnitude) * v + 0.5 * shift.magnitude * tex, 0.0, 1.0);
            }
        }
      }
      break;
    }
    case ShiftKind::channel_swap:
      out = img::channel_roll_blend(src, shift.magnitude);
      break;
    case ShiftKind::corruption: {
      // Reuses the perturbation family so attack and shift share one codebase.
      Rng rng(derive_seed(seed, "corruption_shift"));
      out = src;
      for (const auto& aug : auxgen::perturbation_set(auxgen::PerturbationKind::transntl_default,
                                                      std::max(shift.magnitude, 1e-9)))
        out = auxgen::apply_augmentation(out, aug, rng);
      break;
    }
  }
  std::string name = base.name() + "+" + to_string(shift.kind);
  return Dataset(std::move(out), base.raw_labels(), base.num_classes(), name, "target");
}

DomainPair make_domain_pair(DatasetPtr base, const ShiftSpec& shift, uint64_t seed) {
  return make_domain_pair(std::move(base), std::vector<ShiftSpec>{shift}, seed);
}

DomainPair make_domain_pair(DatasetPtr base, const std::vector<ShiftSpec>& shifts, uint64_t seed) {
  if (!base) throw ValidationError("make_domain_pair: null base dataset");
  if (shifts.empty()) throw ValidationError("make_domain_pair: no shifts given");
  Dataset shifted = apply_shift(*base, shifts[0], seed);
  std::string desc = to_string(shifts[0].kind) + std::string("@") + std::to_string(shifts[0].magnitude);
  for (size_t i = 1; i < shifts.size(); ++i) {
    shifted = apply_shift(shifted, shifts[i], derive_seed(seed, to_string(shifts[i].kind)));
    desc += "+" + std::string(to_string(shifts[i].kind)) + "@" + std::to_string(shifts[i].magnitude);
  }
  return DomainPair::make(std::move(base), std::make_shared<Dataset>(std::move(shifted)), desc);
}

std::vector<DomainPair> sequential_pairs(const std::vector<DatasetPtr>& domains) {
  if (domains.size() < 2) throw ValidationError("sequential_pairs needs at least two domains");
  std::vector<DomainPair> pairs;
  for (size_t i = 0; i + 1 < domains.size(); ++i)
    pairs.push_back(DomainPair::make(domains[i], domains[i + 1],
                                     domains[i]->name() + " -> " + domains[i + 1]->name()));
  return pairs;
}

SplitTriple split_811(int64_t count, uint64_t seed) {
  if (count < 10) throw ValidationError("split_811 needs at least 10 examples");
  std::vector<int64_t> idx(static_cast<size_t>(count));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, "split811"));
  rng.shuffle(idx);
  int64_t val_n = count / 10, test_n = count / 10;
  SplitTriple s;
  s.seed = seed;
  s.train.assign(idx.begin(), idx.end() - val_n - test_n);
  s.val.assign(idx.end() - val_n - test_n, idx.end() - test_n);
  s.test.assign(idx.end() - test_n, idx.end());
  return s;
}

SplitTriple split_811(const Dataset& dataset, uint64_t seed) { return split_811(dataset.size(), seed); }

// ---------------------------------------------------------------------------
// triggers
// ---------------------------------------------------------------------------

TriggerSpec TriggerSpec::checkerboard_default(int64_t channels) {
  TriggerSpec t;
  t.pattern = Tensor({channels, 4, 4});
  for (int64_t c = 0; c < channels; ++c)
    for (int64_t y = 0; y < 4; ++y)
      for (int64_t x = 0; x < 4; ++x) t.pattern[(c * 4 + y) * 4 + x] = ((x + y) % 2 == 0) ? 1.0 : 0.0;
  t.position = TriggerPosition::bottom_right;
  t.alpha = 1.0;
  return t;
}

void TriggerSpec::validate(int64_t channels, int64_t height, int64_t width) const {
  if (pattern.ndim() != 3) throw ValidationError("trigger pattern must be [C,k,k]");
  if (pattern.dim(0) != channels) throw ValidationError("trigger channel count mismatch");
  if (alpha <= 0.0 || alpha > 1.0) throw ValidationError("trigger alpha must lie in (0,1]");
  int64_t k_h = pattern.dim(1), k_w = pattern.dim(2);
  if (k_h > height || k_w > width) throw ValidationError("trigger patch exceeds image bounds");
  if (position == TriggerPosition::custom) {
    if (row < 0 || col < 0 || row + k_h > height || col + k_w > width)
      throw ValidationError("trigger patch out of bounds at custom position");
  }
}

namespace {
std::pair<int64_t, int64_t> trigger_origin(const TriggerSpec& t, int64_t height, int64_t width) {
  int64_t k_h = t.pattern.dim(1), k_w = t.pattern.dim(2);
  switch (t.position) {
    case TriggerPosition::top_left: return {0, 0};
    case TriggerPosition::top_right: return {0, width - k_w};
    case TriggerPosition::bottom_left: return {height - k_h, 0};
    case TriggerPosition::bottom_right: return {height - k_h, width - k_w};
    case TriggerPosition::custom: return {t.row, t.col};
  }
  return {0, 0};
}
}  // namespace

Dataset apply_trigger(const Dataset& dataset, const TriggerSpec& trig) {
  trig.validate(dataset.channels(), dataset.height(), dataset.width());
  const int64_t N = dataset.size(), C = dataset.channels(), H = dataset.height(), W = dataset.width();
  const int64_t k_h = trig.pattern.dim(1), k_w = trig.pattern.dim(2);
  auto [r0, c0] = trigger_origin(trig, H, W);
  Tensor out = dataset.raw_images();
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      double* plane = out.data() + (n * C + c) * H * W;
      for (int64_t y = 0; y < k_h; ++y)
        for (int64_t x = 0; x < k_w; ++x) {
          double& v = plane[(r0 + y) * W + (c0 + x)];
          v = (1.0 - trig.alpha) * v + trig.alpha * trig.pattern[(c * k_h + y) * k_w + x];
        }
    }
  return Dataset(std::move(out), dataset.raw_labels(), dataset.num_classes(), dataset.name() + "+trigger", "triggered");
}

DomainPair build_ov_pair(DatasetPtr dataset, const TriggerSpec& trig) {
  auto triggered = std::make_shared<Dataset>(apply_trigger(*dataset, trig));
  return DomainPair::make(std::move(dataset), std::move(triggered), "ov: clean source, triggered target");
}

DomainPair build_aa_pair(DatasetPtr dataset, const TriggerSpec& trig) {
  auto triggered = std::make_shared<Dataset>(apply_trigger(*dataset, trig));
  return DomainPair::make(std::move(triggered), std::move(dataset), "aa: triggered source, clean target");
}

void write_metadata_sidecar(const Dataset& dataset, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write dataset sidecar: " + path);
  char checksum_hex[32];
  std::snprintf(checksum_hex, sizeof(checksum_hex), "%016llx",
                static_cast<unsigned long long>(dataset.pixel_checksum()));
  f << "name: " << dataset.name() << "\n"
    << "classes: " << dataset.num_classes() << "\n"
    << "count: " << dataset.size() << "\n"
    << "shape: " << dataset.channels() << "x" << dataset.height() << "x" << dataset.width() << "\n"
    << "provenance: " << dataset.provenance() << "\n"
    << "checksum: " << checksum_hex << "\n";
}

const char* to_string(ShiftKind k) {
  switch (k) {
    case ShiftKind::rotation: return "rotation";
    case ShiftKind::color_invert: return "color_invert";
    case ShiftKind::background_texture: return "background_texture";
    case ShiftKind::channel_swap: return "channel_swap";
    case ShiftKind::corruption: return "corruption";
  }
  return "?";
}

ShiftKind shift_kind_from_string(const std::string& s) {
  if (s == "rotation") return ShiftKind::rotation;
  if (s == "color_invert") return ShiftKind::color_invert;
  if (s == "background_texture") return ShiftKind::background_texture;
  if (s == "channel_swap") return ShiftKind::channel_swap;
  if (s == "corruption") return ShiftKind::corruption;
  throw ValidationError("unknown shift kind '" + s + "'");
}

}  // namespace ntl::data
