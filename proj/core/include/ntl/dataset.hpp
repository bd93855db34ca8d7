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

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ntl/tensor.hpp"

namespace ntl {

/// Read counters backing the data-provenance guards. Attacks and source-only
/// trainers are audited against these (e.g. a source-free adaptation must
/// finish with zero target label reads).
struct ProvenanceCounters {
  uint64_t image_reads = 0;
  uint64_t label_reads = 0;
};

struct Batch {
  Tensor images;            // [N,C,H,W]
  std::vector<int> labels;  // size N
  int64_t size() const { return images.empty() ? 0 : images.dim(0); }
};

/// Labeled image dataset, immutable after construction. Access goes through
/// counting getters so provenance can be audited.
class Dataset {
 public:
  Dataset(Tensor images, std::vector<int> labels, int num_classes, std::string name, std::string provenance);

  int64_t size() const { return images_.dim(0); }
  int num_classes() const { return num_classes_; }
  int64_t channels() const { return images_.dim(1); }
  int64_t height() const { return images_.dim(2); }
  int64_t width() const { return images_.dim(3); }

  Tensor image(int64_t i) const;  // [C,H,W], counts one image read
  int label(int64_t i) const;     // counts one label read

  Batch gather(std::span<const int64_t> indices) const;
  Tensor gather_images(std::span<const int64_t> indices) const;
  std::vector<int> gather_labels(std::span<const int64_t> indices) const;

  /// Label access without counting, for split construction and reporting
  /// (never handed to attack code).
  const std::vector<int>& raw_labels() const { return labels_; }
  const Tensor& raw_images() const { return images_; }

  const ProvenanceCounters& counters() const { return counters_; }
  void reset_counters() const { counters_ = {}; }

  const std::string& name() const { return name_; }
  const std::string& provenance() const { return provenance_; }

  std::vector<int64_t> label_histogram() const;
  uint64_t pixel_checksum() const;

 private:
  Tensor images_;
  std::vector<int> labels_;
  int num_classes_;
  std::string name_;
  std::string provenance_;
  mutable ProvenanceCounters counters_;
};

using DatasetPtr = std::shared_ptr<const Dataset>;

/// Image-only window into a dataset. There is no label accessor: label-free
/// attacks take this type, which makes the provenance guard structural.
class UnlabeledView {
 public:
  UnlabeledView(DatasetPtr dataset, std::vector<int64_t> indices);

  int64_t size() const { return static_cast<int64_t>(indices_.size()); }
  Tensor gather_images(std::span<const int64_t> view_indices) const;
  Tensor all_images() const;
  const Dataset& dataset() const { return *dataset_; }

 private:
  DatasetPtr dataset_;
  std::vector<int64_t> indices_;
};

/// A source dataset and a target dataset sharing one label space.
struct DomainPair {
  DatasetPtr source;
  DatasetPtr target;
  int num_classes = 0;
  std::string shift_desc;

  static DomainPair make(DatasetPtr source, DatasetPtr target, std::string shift_desc);
};

/// Disjoint train/val/test index lists covering a dataset, split 8:1:1 with
/// the rounding remainder assigned to train.
struct SplitTriple {
  std::vector<int64_t> train;
  std::vector<int64_t> val;
  std::vector<int64_t> test;
  uint64_t seed = 0;
};

}  // namespace ntl
