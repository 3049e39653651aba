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

#include "urlk/embed.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace urlk {

namespace {

std::string s(std::size_t v) { return std::to_string(v); }

void check_length(std::size_t have, std::size_t want, const char* what) {
  if (have != want)
    throw DimensionError(std::string(what) + ": data length " + s(have) + " != " + s(want));
}

}  // namespace

void TimeSeriesBatch::validate() const {
  if (batch == 0 || length == 0 || dims == 0)
    throw DimensionError("time series: B, L and D must be >= 1");
  check_length(data.size(), batch * length * dims, "time series");
}

Linear identity_projection(std::size_t features) {
  Linear lin;
  lin.in_features = features;
  lin.out_features = features;
  lin.weight.assign(features * features, 0.0);
  for (std::size_t i = 0; i < features; ++i) lin.weight[i * features + i] = 1.0;
  return lin;
}

Tensor4 embed_time_series(const TimeSeriesBatch& batch, const TimeSeriesEmbedding& options) {
  batch.validate();
  const std::size_t n = options.nodes;
  if (n == 0 || batch.dims % n != 0)
    throw DimensionError("time series: D = " + s(batch.dims) + " is not divisible by n = " + s(n));
  const std::size_t per_node = batch.dims / n;
  const Linear& proj = options.projection;
  proj.validate();
  if (proj.in_features != per_node)
    throw DimensionError("time series: projection takes " + s(proj.in_features) +
                         " features, nodes have D/n = " + s(per_node));
  const std::size_t latent = proj.out_features;
  if (options.height * options.width != batch.length * latent)
    throw DimensionError("time series: H x W = " + s(options.height) + " x " + s(options.width) +
                         " != L x D' = " + s(batch.length) + " x " + s(latent));

  // (B, L, D) -> (B n, L, D/n)
  std::vector<double> split(batch.batch * n * batch.length * per_node);
  for (std::size_t b = 0; b < batch.batch; ++b)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t t = 0; t < batch.length; ++t)
        std::copy_n(batch.data.data() + (b * batch.length + t) * batch.dims + j * per_node, per_node,
                    split.data() + ((b * n + j) * batch.length + t) * per_node);

  // (B n, L, D/n) -> (B n, L, D'), then a row-major view as (B n, 1, H, W).
  std::vector<double> projected = linear_rows(split, batch.batch * n * batch.length, proj);
  return Tensor4(Shape4{batch.batch * n, 1, options.height, options.width}, std::move(projected));
}

void AudioBatch::validate() const {
  if (batch == 0 || frames == 0 || bins == 0) throw DimensionError("audio: B, T and F must be >= 1");
  check_length(data.size(), batch * frames * bins, "audio");
}

Tensor4 embed_audio(const AudioBatch& batch) {
  batch.validate();
  return Tensor4(Shape4{batch.batch, 1, batch.frames, batch.bins}, batch.data);
}

AudioBatch audio_from_embedding(const Tensor4& map) {
  if (map.c() != 1) throw DimensionError("audio map must have one channel, got " + s(map.c()));
  return AudioBatch{map.n(), map.h(), map.w(), map.storage()};
}

void PointCloudBatch::validate() const {
  if (batch == 0 || points == 0) throw DimensionError("point cloud: B and P must be >= 1");
  check_length(data.size(), batch * points * 3, "point cloud");
  for (const double v : data)
    if (!std::isfinite(v)) throw ParameterError("point cloud: coordinates must be finite");
}

Tensor4 OrthographicProjector::project(const PointCloudBatch& batch) const {
  batch.validate();
  const std::size_t res = resolution_;
  Tensor4 out(Shape4{batch.batch, 3, res, res});
  // View v keeps these two axes as (row, col).
  constexpr std::size_t kKept[3][2] = {{1, 2}, {0, 2}, {0, 1}};
  for (std::size_t b = 0; b < batch.batch; ++b) {
    const double* pts = batch.data.data() + b * batch.points * 3;
    const auto [lo_it, hi_it] = std::minmax_element(pts, pts + batch.points * 3);
    const double lo = *lo_it, extent = *hi_it - *lo_it;
    bool coincident = true;
    for (std::size_t p = 1; p < batch.points && coincident; ++p)
      coincident = std::equal(pts, pts + 3, pts + p * 3);
    auto pixel = [&](double v) -> std::size_t {
      if (coincident) return res / 2;
      const double u = (v - lo) / extent;
      return static_cast<std::size_t>(std::lround(u * static_cast<double>(res - 1)));
    };
    for (std::size_t p = 0; p < batch.points; ++p)
      for (std::size_t v = 0; v < 3; ++v)
        out(b, v, pixel(pts[p * 3 + kKept[v][0]]), pixel(pts[p * 3 + kKept[v][1]])) += 1.0;
    for (std::size_t v = 0; v < 3; ++v) {
      double* plane = out.plane(b, v);
      const double peak = *std::max_element(plane, plane + res * res);
      for (std::size_t i = 0; i < res * res; ++i) plane[i] /= peak;
    }
  }
  return out;
}

Tensor4 embed_pointcloud(const PointCloudBatch& batch) {
  return embed_pointcloud(batch, OrthographicProjector{});
}

Tensor4 embed_pointcloud(const PointCloudBatch& batch, const PointProjector& projector) {
  return projector.project(batch);
}

void VideoBatch::validate() const {
  if (batch == 0 || frames == 0 || height == 0 || width == 0)
    throw DimensionError("video: B, N_F, h and w must be >= 1");
  check_length(data.size(), batch * frames * 3 * height * width, "video");
}

FrameGrid default_grid(std::size_t frames) {
  if (frames == 0) throw DimensionError("video: N_F must be >= 1");
  std::size_t rows = 1;
  for (std::size_t r = 1; r * r <= frames; ++r)
    if (frames % r == 0) rows = r;
  return {rows, frames / rows};
}

Tensor4 embed_video(const VideoBatch& batch, std::optional<FrameGrid> grid) {
  batch.validate();
  const FrameGrid g = grid.value_or(default_grid(batch.frames));
  if (g.rows * g.cols != batch.frames)
    throw DimensionError("video: grid " + s(g.rows) + "x" + s(g.cols) + " does not hold N_F = " +
                         s(batch.frames) + " frames");
  const std::size_t h = batch.height, w = batch.width;
  Tensor4 out(Shape4{batch.batch, 3, g.rows * h, g.cols * w});
  const std::size_t frame_size = 3 * h * w;
  for (std::size_t b = 0; b < batch.batch; ++b)
    for (std::size_t t = 0; t < batch.frames; ++t) {
      const double* frame = batch.data.data() + (b * batch.frames + t) * frame_size;
      const std::size_t top = (t / g.cols) * h, left = (t % g.cols) * w;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < h; ++y)
          std::copy_n(frame + (c * h + y) * w, w, &out(b, c, top + y, left));
    }
  return out;
}

}  // namespace urlk
