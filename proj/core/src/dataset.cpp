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

#include "ntl/dataset.hpp"

#include <algorithm>

#include "ntl/errors.hpp"

namespace ntl {

Dataset::Dataset(Tensor images, std::vector<int> labels, int num_classes, std::string name, std::string provenance)
    : images_(std::move(images)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      name_(std::move(name)),
      provenance_(std::move(provenance)) {
  if (images_.ndim() != 4) throw ValidationError("dataset images must be [N,C,H,W]");
  if (images_.dim(0) != static_cast<int64_t>(labels_.size())) throw ValidationError("dataset image/label count mismatch");
  if (num_classes_ < 1) throw ValidationError("dataset needs a positive class count");
  for (int y : labels_)
    if (y < 0 || y >= num_classes_) throw ValidationError("dataset label outside {0..C-1}");
}

Tensor Dataset::image(int64_t i) const {
  if (i < 0 || i >= size()) throw ValidationError("dataset image index out of range");
  counters_.image_reads++;
  int64_t c = channels(), h = height(), w = width();
  Tensor out({c, h, w});
  const double* src = images_.data() + i * c * h * w;
  std::copy(src, src + c * h * w, out.data());
  return out;
}

int Dataset::label(int64_t i) const {
  if (i < 0 || i >= size()) throw ValidationError("dataset label index out of range");
  counters_.label_reads++;
  return labels_[static_cast<size_t>(i)];
}

Tensor Dataset::gather_images(std::span<const int64_t> indices) const {
  int64_t c = channels(), h = height(), w = width();
  int64_t chw = c * h * w;
  Tensor out({static_cast<int64_t>(indices.size()), c, h, w});
  for (size_t k = 0; k < indices.size(); ++k) {
    int64_t i = indices[k];
    if (i < 0 || i >= size()) throw ValidationError("dataset image index out of range");
    const double* src = images_.data() + i * chw;
    std::copy(src, src + chw, out.data() + static_cast<int64_t>(k) * chw);
  }
  counters_.image_reads += indices.size();
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const int64_t> indices) const {
  std::vector<int> out(indices.size());
  for (size_t k = 0; k < indices.size(); ++k) {
    int64_t i = indices[k];
    if (i < 0 || i >= size()) throw ValidationError("dataset label index out of range");
    out[k] = labels_[static_cast<size_t>(i)];
  }
  counters_.label_reads += indices.size();
  return out;
}

Batch Dataset::gather(std::span<const int64_t> indices) const {
  Batch b;
  b.images = gather_images(indices);
  b.labels = gather_labels(indices);
  return b;
}

std::vector<int64_t> Dataset::label_histogram() const {
  std::vector<int64_t> hist(static_cast<size_t>(num_classes_), 0);
  for (int y : labels_) hist[static_cast<size_t>(y)]++;
  return hist;
}

uint64_t Dataset::pixel_checksum() const { return checksum(images_); }

UnlabeledView::UnlabeledView(DatasetPtr dataset, std::vector<int64_t> indices)
    : dataset_(std::move(dataset)), indices_(std::move(indices)) {
  for (int64_t i : indices_)
    if (i < 0 || i >= dataset_->size()) throw ValidationError("unlabeled view index out of range");
}

Tensor UnlabeledView::gather_images(std::span<const int64_t> view_indices) const {
  std::vector<int64_t> mapped(view_indices.size());
  for (size_t k = 0; k < view_indices.size(); ++k) {
    int64_t v = view_indices[k];
    if (v < 0 || v >= size()) throw ValidationError("unlabeled view index out of range");
    mapped[k] = indices_[static_cast<size_t>(v)];
  }
  return dataset_->gather_images(mapped);
}

Tensor UnlabeledView::all_images() const { return dataset_->gather_images(indices_); }

DomainPair DomainPair::make(DatasetPtr source, DatasetPtr target, std::string shift_desc) {
  if (!source || !target) throw ValidationError("domain pair needs both datasets");
  if (source->num_classes() != target->num_classes())
    throw ValidationError("domain pair label spaces differ");
  if (source->channels() != target->channels() || source->height() != target->height() ||
      source->width() != target->width())
    throw ValidationError("domain pair image shapes differ");
  DomainPair p;
  p.num_classes = source->num_classes();
  p.source = std::move(source);
  p.target = std::move(target);
  p.shift_desc = std::move(shift_desc);
  return p;
}

}  // namespace ntl
