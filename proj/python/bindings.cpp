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

#include <optional>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "urlk/container.hpp"
#include "urlk/embed.hpp"
#include "urlk/model.hpp"
#include "urlk/reparam.hpp"

namespace py = pybind11;

namespace urlk {
namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> values(const Array& a) { return {a.data(), a.data() + a.size()}; }

void require_rank(const Array& a, py::ssize_t rank, const char* what) {
  if (a.ndim() != rank)
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         std::to_string(a.ndim()));
}

Tensor4 to_tensor(const Array& a, const char* what = "array") {
  require_rank(a, 4, what);
  const Shape4 s{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                 static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(3))};
  return Tensor4(s, values(a));
}

Array to_array(const Tensor4& t) {
  const auto& s = t.shape();
  Array out({s.n, s.c, s.h, s.w});
  std::copy(t.storage().begin(), t.storage().end(), out.mutable_data());
  return out;
}

Array to_array(const std::vector<double>& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

BnParams to_bn(const Array& gamma, const Array& beta, const Array& mean, const Array& var, double eps) {
  BnParams bn{values(gamma), values(beta), values(mean), values(var), eps};
  bn.validate();
  return bn;
}

py::dict conv_dict(const ConvLayer& c) {
  py::dict d;
  d["weight"] = to_array(c.weight);
  d["bias"] = c.bias ? py::object(to_array(*c.bias)) : py::none();
  d["padding"] = c.padding.h;
  d["groups"] = c.groups;
  return d;
}

DilatedReparamCfg make_cfg(std::size_t in, std::size_t out, std::size_t groups, std::size_t kernel,
                           const std::vector<std::pair<std::size_t, std::size_t>>& branches) {
  DilatedReparamCfg cfg;
  cfg.in_channels = in;
  cfg.out_channels = out;
  cfg.groups = groups;
  cfg.kernel_size = kernel;
  for (const auto& [k, r] : branches) cfg.branches.push_back({k, r});
  cfg.validate();
  return cfg;
}

ArchConfig resolve(const std::string& model, std::size_t width, std::size_t classes) {
  if (width == 0) return named_config(model);
  return custom_config(model, width, classes);
}

py::list breakdown(const std::vector<ModuleCount>& counts) {
  py::list out;
  for (const auto& m : counts) out.append(py::make_tuple(m.module, m.params));
  return out;
}

}  // namespace
}  // namespace urlk

PYBIND11_MODULE(_urlk, m) {
  using namespace urlk;
  m.doc() = "Dilated reparam kernel algebra and UniRepLKNet-style inference";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<GeometryError>(m, "GeometryError", base.ptr());
  py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<StateError>(m, "StateError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());

  m.def("equivalent_kernel_size", &equivalent_kernel_size, py::arg("kernel"), py::arg("dilation"));

  m.def(
      "dilate_kernel", [](const Array& w, std::size_t r) { return to_array(dilate_kernel(to_tensor(w, "weight"), r)); },
      py::arg("weight"), py::arg("dilation"));

  m.def(
      "pad_kernel", [](const Array& w, std::size_t k) { return to_array(pad_kernel(to_tensor(w, "weight"), k)); },
      py::arg("weight"), py::arg("target"));

  m.def(
      "conv2d",
      [](const Array& x, const Array& w, std::optional<Array> bias, std::size_t stride, std::size_t padding,
         std::size_t dilation, std::size_t groups) {
        ConvLayer c;
        c.weight = to_tensor(w, "weight");
        if (bias) c.bias = values(*bias);
        c.stride = {stride, stride};
        c.padding = {padding, padding};
        c.dilation = {dilation, dilation};
        c.groups = groups;
        return to_array(conv2d(to_tensor(x, "input"), c));
      },
      py::arg("x"), py::arg("weight"), py::arg("bias") = py::none(), py::arg("stride") = 1,
      py::arg("padding") = 0, py::arg("dilation") = 1, py::arg("groups") = 1);

  m.def(
      "fuse_bn",
      [](const Array& w, std::optional<Array> bias, const Array& gamma, const Array& beta, const Array& mean,
         const Array& var, double eps) {
        ConvLayer c;
        c.weight = to_tensor(w, "weight");
        if (bias) c.bias = values(*bias);
        const auto f = fuse_bn(c, to_bn(gamma, beta, mean, var, eps));
        return py::make_tuple(to_array(f.weight), to_array(*f.bias));
      },
      py::arg("weight"), py::arg("bias"), py::arg("gamma"), py::arg("beta"), py::arg("mean"), py::arg("var"),
      py::arg("eps") = 1e-5);

  py::class_<DilatedReparamBlock>(m, "ReparamBlock")
      .def_static(
          "random",
          [](std::size_t in, std::size_t out, std::size_t groups, std::size_t kernel,
             const std::vector<std::pair<std::size_t, std::size_t>>& branches, std::uint64_t seed) {
            Rng rng(seed);
            return random_reparam_block<double>(make_cfg(in, out, groups, kernel, branches), rng);
          },
          py::arg("in_channels"), py::arg("out_channels"), py::arg("groups"), py::arg("kernel_size"),
          py::arg("branches"), py::arg("seed") = 0)
      .def_property_readonly("equivalent_kernel_sizes",
                             [](const DilatedReparamBlock& b) { return equivalent_kernel_sizes(b.cfg); })
      .def("forward", [](const DilatedReparamBlock& b, const Array& x) { return to_array(b.forward(to_tensor(x))); })
      .def("merge", [](const DilatedReparamBlock& b) { return conv_dict(merge_dilated_reparam(b)); })
      .def("branch_weights", [](const DilatedReparamBlock& b) {
        py::list out;
        for (const auto& br : b.branches) out.append(to_array(br.conv.weight));
        return out;
      });

  py::class_<ModelInstance>(m, "Model")
      .def(py::init([](const std::string& model, std::size_t width, std::size_t classes, std::uint64_t seed,
                       bool perturb_norms) {
             InitOptions o;
             o.perturb_norms = perturb_norms;
             return build_model(resolve(model, width, classes), seed, o);
           }),
           py::arg("model"), py::arg("width") = 0, py::arg("classes") = 1000, py::arg("seed") = 0,
           py::arg("perturb_norms") = false)
      .def_static("load", &load_model, py::arg("path"))
      .def("save", [](const ModelInstance& mdl, const std::filesystem::path& p) { save_model(mdl, p); })
      .def_property_readonly("name", &ModelInstance::name)
      .def_property_readonly("mode", [](const ModelInstance& mdl) { return std::string(to_string(mdl.mode)); })
      .def("forward", [](const ModelInstance& mdl, const Array& x) { return to_array(forward(mdl, to_tensor(x))); })
      .def("merged", [](const ModelInstance& mdl) { return merge_for_deploy(mdl); })
      .def("param_count", [](const ModelInstance& mdl) { return stored_param_count(mdl); });

  m.def(
      "param_count",
      [](const std::string& model, const std::string& mode, std::size_t width, std::size_t classes) {
        return analytic_param_count(resolve(model, width, classes), parse_mode(mode));
      },
      py::arg("model"), py::arg("mode") = "merged", py::arg("width") = 0, py::arg("classes") = 1000);

  m.def(
      "param_breakdown",
      [](const std::string& model, const std::string& mode, std::size_t width, std::size_t classes) {
        return breakdown(analytic_param_breakdown(resolve(model, width, classes), parse_mode(mode)));
      },
      py::arg("model"), py::arg("mode") = "merged", py::arg("width") = 0, py::arg("classes") = 1000);

  m.def("published_params_millions", &published_params_millions, py::arg("model"));
  m.def("instance_names", &instance_names);

  m.def(
      "stage_output_shapes",
      [](const std::string& model, std::size_t resolution) {
        py::list out;
        for (const auto& s : stage_output_shapes(named_config(model), Shape4{1, 3, resolution, resolution}))
          out.append(py::make_tuple(s.c, s.h, s.w));
        return out;
      },
      py::arg("model"), py::arg("resolution") = 224);

  m.def(
      "embed_audio",
      [](const Array& x) {
        require_rank(x, 3, "audio");
        return to_array(embed_audio(AudioBatch{static_cast<std::size_t>(x.shape(0)),
                                               static_cast<std::size_t>(x.shape(1)),
                                               static_cast<std::size_t>(x.shape(2)), values(x)}));
      },
      py::arg("x"));

  m.def(
      "embed_video",
      [](const Array& x, std::optional<std::pair<std::size_t, std::size_t>> grid) {
        require_rank(x, 5, "video");
        if (x.shape(2) != 3) throw DimensionError("video: expected 3 colour channels");
        const VideoBatch v{static_cast<std::size_t>(x.shape(0)), static_cast<std::size_t>(x.shape(1)),
                           static_cast<std::size_t>(x.shape(3)), static_cast<std::size_t>(x.shape(4)), values(x)};
        std::optional<FrameGrid> g;
        if (grid) g = FrameGrid{grid->first, grid->second};
        return to_array(embed_video(v, g));
      },
      py::arg("x"), py::arg("grid") = py::none());

  m.def(
      "embed_pointcloud",
      [](const Array& x, std::size_t resolution) {
        require_rank(x, 3, "point cloud");
        if (x.shape(2) != 3) throw DimensionError("point cloud: expected XYZ triples");
        const PointCloudBatch b{static_cast<std::size_t>(x.shape(0)), static_cast<std::size_t>(x.shape(1)), values(x)};
        return to_array(embed_pointcloud(b, OrthographicProjector(resolution)));
      },
      py::arg("x"), py::arg("resolution") = kPointCloudResolution);

  m.def(
      "embed_time_series",
      [](const Array& x, std::size_t nodes, std::size_t height, std::size_t width, std::optional<Array> weight,
         std::optional<Array> bias) {
        require_rank(x, 3, "time series");
        const TimeSeriesBatch b{static_cast<std::size_t>(x.shape(0)), static_cast<std::size_t>(x.shape(1)),
                                static_cast<std::size_t>(x.shape(2)), values(x)};
        if (nodes == 0 || b.dims % nodes != 0) throw DimensionError("time series: nodes must divide D");
        Linear proj = identity_projection(b.dims / nodes);
        if (weight) {
          if (weight->ndim() != 2) throw DimensionError("projection weight must be rank 2");
          proj = Linear{static_cast<std::size_t>(weight->shape(1)), static_cast<std::size_t>(weight->shape(0)),
                        values(*weight), bias ? values(*bias) : std::vector<double>{}};
        }
        return to_array(embed_time_series(b, {nodes, height, width, proj}));
      },
      py::arg("x"), py::arg("nodes"), py::arg("height"), py::arg("width"), py::arg("weight") = py::none(),
      py::arg("bias") = py::none());
}
