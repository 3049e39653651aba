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

import numpy as np
import pytest

import urlk


def rel_err(a, b):
    return np.abs(a - b).sum() / np.abs(b).sum()


def naive_depthwise(x, w, dilation, padding):
    n, c, h, wd = x.shape
    k = w.shape[-1]
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = h + 2 * padding - dilation * (k - 1)
    ow = wd + 2 * padding - dilation * (k - 1)
    out = np.zeros((n, c, oh, ow))
    for i in range(k):
        for j in range(k):
            out += w[None, :, 0, i, j, None, None] * xp[:, :, i * dilation:i * dilation + oh,
                                                         j * dilation:j * dilation + ow]
    return out


def test_equivalent_kernel_sizes():
    got = [urlk.equivalent_kernel_size(k, r) for k, r in zip((5, 7, 3, 3, 3), (1, 2, 3, 4, 5))]
    assert got == [5, 13, 7, 9, 11]


def test_dilate_kernel_pattern():
    w = np.arange(1, 10, dtype=float).reshape(1, 1, 3, 3)
    d = urlk.dilate_kernel(w, 2)
    assert d.shape == (1, 1, 5, 5)
    assert np.array_equal(d[0, 0, ::2, ::2], w[0, 0])
    assert d[0, 0, 1::2].sum() == 0 and d[0, 0, :, 1::2].sum() == 0
    assert urlk.pad_kernel(w, 7).shape == (1, 1, 7, 7)


def test_conv2d_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (2, 4, 11, 11))
    w = rng.uniform(-1, 1, (4, 1, 3, 3))
    y = urlk.conv2d(x, w, padding=3, dilation=3, groups=4)
    assert rel_err(y, naive_depthwise(x, w, 3, 3)) < 1e-13


def test_fuse_bn_closed_form():
    w = np.ones((1, 1, 1, 1))
    fw, fb = urlk.fuse_bn(w, np.array([2.0]), np.array([2.0]), np.array([0.0]), np.array([4.0]),
                          np.array([4.0]), eps=1e-5)
    s = 2.0 / np.sqrt(4.0 + 1e-5)
    assert fw.item() == pytest.approx(s, rel=1e-15)
    assert fb.item() == pytest.approx((2.0 - 4.0) * s, rel=1e-15)


def test_reparam_block_merge():
    block = urlk.ReparamBlock.random(8, 8, 8, 13, [(5, 1), (7, 2), (3, 3), (3, 4), (3, 5)], seed=3)
    assert block.equivalent_kernel_sizes == [5, 13, 7, 9, 11]
    merged = block.merge()
    assert merged["weight"].shape == (8, 1, 13, 13)
    x = np.random.default_rng(1).uniform(-1, 1, (1, 8, 20, 20))
    y = urlk.conv2d(x, merged["weight"], merged["bias"], padding=merged["padding"], groups=8)
    assert rel_err(y, block.forward(x)) < 1e-10


def test_params_and_geometry():
    for name in urlk.instance_names():
        m = urlk.param_count(name) / 1e6
        assert abs(m / urlk.published_params_millions(name) - 1) <= 0.03
    assert urlk.param_count("A", "train") > urlk.param_count("A")
    assert [c for c, _ in urlk.param_breakdown("A")][0] == "stem"
    assert urlk.stage_output_shapes("T") == [(80, 56, 56), (160, 28, 28), (320, 14, 14), (640, 7, 7)]


def test_model_merge_and_roundtrip(tmp_path):
    model = urlk.Model("1,1,1+1,1", width=8, classes=10, seed=2, perturb_norms=True)
    x = np.random.default_rng(2).uniform(-1, 1, (2, 3, 32, 32))
    merged = model.merged()
    assert merged.mode == "merged"
    assert merged.param_count() < model.param_count()
    assert rel_err(merged.forward(x), model.forward(x)) < 1e-9
    with pytest.raises(urlk.StateError):
        merged.merged()
    model.save(tmp_path / "m.urlk")
    assert np.array_equal(urlk.Model.load(tmp_path / "m.urlk").forward(x), model.forward(x))


def test_embeddings():
    assert urlk.embed_audio(np.zeros((2, 128, 64))).shape == (2, 1, 128, 64)
    assert urlk.embed_video(np.zeros((1, 16, 3, 8, 8))).shape == (1, 3, 32, 32)
    pc = urlk.embed_pointcloud(np.array([[[0.3, -2.0, 5.0]]]))
    assert pc.shape == (1, 3, 224, 224) and pc[0, :, 112, 112].tolist() == [1, 1, 1] and pc.sum() == 3
    ts = np.arange(128, dtype=float).reshape(1, 32, 4)
    assert np.array_equal(urlk.embed_time_series(ts, 1, 8, 16).ravel(), ts.ravel())
    with pytest.raises(urlk.DimensionError):
        urlk.embed_time_series(ts, 1, 8, 8)
