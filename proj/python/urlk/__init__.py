# Copyright 2026 The urlk Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================
"""Dilated reparam kernel algebra and large-kernel ConvNet inference."""

from ._urlk import (
    ConfigError,
    DimensionError,
    Error,
    FormatError,
    GeometryError,
    Model,
    ParameterError,
    ReparamBlock,
    StateError,
    conv2d,
    dilate_kernel,
    embed_audio,
    embed_pointcloud,
    embed_time_series,
    embed_video,
    equivalent_kernel_size,
    fuse_bn,
    instance_names,
    pad_kernel,
    param_breakdown,
    param_count,
    published_params_millions,
    stage_output_shapes,
)

__version__ = "0.1.0"
