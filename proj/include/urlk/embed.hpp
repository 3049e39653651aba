/* Copyright 2026 The urlk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Preprocessors that turn non-image inputs into B x C' x H x W embedding
// maps for the unchanged backbone:
//
//   time series (B, L, D)         -> (B n, 1, H, W)   with H W = L D'
//   audio       (B, T, F)         -> (B, 1, T, F)
//   point cloud (B, P, 3)         -> (B, 3, 224, 224)
//   video       (B, N_F, 3, h, w) -> (B, 3, g_r h, g_c w), g_r g_c = N_F

#ifndef URLK_EMBED_HPP_
#define URLK_EMBED_HPP_

#include <cstddef>
#include <optional>
#include <vector>

#include "urlk/ops.hpp"

namespace urlk {

struct TimeSeriesBatch {
  std::size_t batch = 1;
  std::size_t length = 1;  // L
  std::size_t dims = 1;    // D
  std::vector<double> data;  // (B, L, D) row-major

  void validate() const;
};

struct TimeSeriesEmbedding {
  std::size_t nodes = 1;  // n, must divide D
  std::size_t height = 1;
  std::size_t width = 1;
  Linear projection;  // D / n -> D'
};

// (B, L, D) -> (B n, L, D/n) -> (B n, L, D') -> (B n, 1, H, W). Node j of
// sample b takes columns [j D/n, (j+1) D/n) and becomes batch row b n + j.
Tensor4 embed_time_series(const TimeSeriesBatch& batch, const TimeSeriesEmbedding& options);

// Identity D/n -> D/n projection.
Linear identity_projection(std::size_t features);

struct AudioBatch {
  std::size_t batch = 1;
  std::size_t frames = 1;  // T
  std::size_t bins = 1;    // F
  std::vector<double> data;  // (B, T, F)

  void validate() const;
};

Tensor4 embed_audio(const AudioBatch& batch);
// Drops the channel axis of a (B, 1, T, F) map.
AudioBatch audio_from_embedding(const Tensor4& map);

inline constexpr std::size_t kPointCloudResolution = 224;

struct PointCloudBatch {
  std::size_t batch = 1;
  std::size_t points = 1;
  std::vector<double> data;  // (B, P, 3) XYZ

  void validate() const;
};

class PointProjector {
 public:
  virtual ~PointProjector() = default;
  virtual Tensor4 project(const PointCloudBatch& batch) const = 0;
};

// Three orthographic views. Per sample the cloud is min-max normalized to the
// unit cube using one joint range over all coordinates, so the aspect ratio is
// kept. Channel v drops coordinate v; the two remaining coordinates (in
// ascending axis order) give row and column, rounded to the nearest of
// `resolution` pixels. Counts are accumulated and each channel is scaled to
// max 1. A zero-extent cloud lands entirely on pixel (res / 2, res / 2).
class OrthographicProjector final : public PointProjector {
 public:
  explicit OrthographicProjector(std::size_t resolution = kPointCloudResolution)
      : resolution_(resolution) {}
  Tensor4 project(const PointCloudBatch& batch) const override;
  std::size_t resolution() const { return resolution_; }

 private:
  std::size_t resolution_;
};

Tensor4 embed_pointcloud(const PointCloudBatch& batch);
Tensor4 embed_pointcloud(const PointCloudBatch& batch, const PointProjector& projector);

struct VideoBatch {
  std::size_t batch = 1;
  std::size_t frames = 1;  // N_F
  std::size_t height = 1;  // h
  std::size_t width = 1;   // w
  std::vector<double> data;  // (B, N_F, 3, h, w)

  void validate() const;
};

struct FrameGrid {
  std::size_t rows = 1;
  std::size_t cols = 1;
  bool operator==(const FrameGrid&) const = default;
};

// Most-square factorization rows x cols of `frames`, rows <= cols.
FrameGrid default_grid(std::size_t frames);

// Frame t goes to cell (t / cols, t % cols).
Tensor4 embed_video(const VideoBatch& batch, std::optional<FrameGrid> grid = std::nullopt);

}  // namespace urlk

#endif  // URLK_EMBED_HPP_
