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

#include <string>
#include <vector>

#include "ntl/dataset.hpp"

namespace ntl::data {

enum class ShiftKind { rotation, color_invert, background_texture, channel_swap, corruption };

/// A controlled distribution shift. Magnitude is normalized to [0,1];
/// rotation maps magnitude 1 to 90 degrees.
struct ShiftSpec {
  ShiftKind kind = ShiftKind::rotation;
  double magnitude = 0.5;
  void validate() const;
};

enum class TriggerPosition { top_left, top_right, bottom_left, bottom_right, custom };

/// A small pixel patch blended into every image at a fixed position.
struct TriggerSpec {
  Tensor pattern;  // [C,k,k]
  TriggerPosition position = TriggerPosition::bottom_right;
  int64_t row = -1, col = -1;  // used when position == custom
  double alpha = 1.0;

  /// 4x4 checkerboard, bottom-right corner, alpha 1.
  static TriggerSpec checkerboard_default(int64_t channels);
  void validate(int64_t channels, int64_t height, int64_t width) const;
};

/// Knobs of the procedural glyph renderer (ten digit-like seven-segment
/// glyph classes with per-sample jitter). Angle jitter is in units of 90
/// degrees to match ShiftSpec's rotation scale. The contrast/center jitter
/// spreads per-sample intensity statistics so that trained classifiers pick
/// up shape rather than raw intensity cues.
struct GlyphOptions {
  int64_t count = 1200;
  int image_size = 32;
  int num_classes = 10;
  double rotation_jitter = 0.30;
  double scale_lo = 0.80, scale_hi = 1.10;
  double translate_jitter = 0.06;
  double stroke_lo = 0.09, stroke_hi = 0.15;
  double fg_lo = 0.65, fg_hi = 1.0;
  double bg_lo = 0.0, bg_hi = 0.20;
  double polarity_flip_prob = 0.5;
  double noise_sigma = 0.03;
  // per-sample remap x -> center + c * (x - center), c ~ U(lo, hi)
  double contrast_lo = 0.20, contrast_hi = 1.0;
  double center_lo = 0.35, center_hi = 0.65;
};

enum class DatasetBase { digits_idx, synthetic_glyphs };

/// Procedurally renders a balanced labeled glyph dataset; deterministic per
/// seed so the suite runs with zero downloads.
Dataset synthesize_glyphs(uint64_t seed, const GlyphOptions& opts = {});

/// Reads an IDX image/label file pair (big-endian headers, magic 0x00000803
/// for images and 0x00000801 for labels). 28x28 inputs are zero-padded to
/// 32x32; pixel values are scaled to [0,1].
Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path);

/// Dispatcher: for digits_idx `path_or_seed` is the images file path (the
/// labels path is derived by the images-idx3 -> labels-idx1 convention); for
/// synthetic_glyphs it is the decimal seed.
Dataset load_or_synthesize(DatasetBase base, const std::string& path_or_seed);

/// Applies a shift deterministically (seed feeds the texture generator).
Dataset apply_shift(const Dataset& base, const ShiftSpec& shift, uint64_t seed);

DomainPair make_domain_pair(DatasetPtr base, const ShiftSpec& shift, uint64_t seed);
DomainPair make_domain_pair(DatasetPtr base, const std::vector<ShiftSpec>& shifts, uint64_t seed);

/// Pairs (d_i, d_{i+1}) for i = 0..n-2.
std::vector<DomainPair> sequential_pairs(const std::vector<DatasetPtr>& domains);

/// Random 8:1:1 split (remainder to train); requires at least 10 examples.
SplitTriple split_811(int64_t count, uint64_t seed);
SplitTriple split_811(const Dataset& dataset, uint64_t seed);

/// Blends trig.pattern into every image: out = (1-alpha)*img + alpha*pattern
/// on the patch region. Labels unchanged.
Dataset apply_trigger(const Dataset& dataset, const TriggerSpec& trig);

/// Ownership verification: clean data is the source, triggered the target.
DomainPair build_ov_pair(DatasetPtr dataset, const TriggerSpec& trig);
/// Applicability authorization: triggered data is the source, clean the target.
DomainPair build_aa_pair(DatasetPtr dataset, const TriggerSpec& trig);

/// Plain-text sidecar: name, class count, shape, provenance, checksum.
void write_metadata_sidecar(const Dataset& dataset, const std::string& path);

const char* to_string(ShiftKind k);
ShiftKind shift_kind_from_string(const std::string& s);

}  // namespace ntl::data
