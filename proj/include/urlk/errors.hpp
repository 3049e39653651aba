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

#ifndef URLK_ERRORS_HPP_
#define URLK_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace urlk {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes disagree (channel counts, vector lengths, tensor ranks).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Convolution or downsampling geometry yields an empty or inexact output.
class GeometryError : public Error {
 public:
  using Error::Error;
};

// A scalar argument is out of its domain (even kernel, dilation < 1, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// An architecture or re-parameterization config violates its invariants.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Operation requested in the wrong train-structure / merged state.
class StateError : public Error {
 public:
  using Error::Error;
};

// Malformed weight container, sidecar or CSV input.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace urlk

#endif  // URLK_ERRORS_HPP_
