// Copyright 2026 The tclif-eprop Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tclif {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A scalar argument or configuration value is outside its domain.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// A file does not follow its declared binary layout (bad magic, version).
class FormatError : public Error {
 public:
  using Error::Error;
};

// A file ended before the declared payload was read.
class LengthError : public Error {
 public:
  using Error::Error;
};

// Checksum mismatch.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

// Allocation failure while growing a per-step cache.
class ResourceError : public Error {
 public:
  ResourceError(const std::string& what, std::size_t step)
      : Error(what + " (at step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Dataset files are missing or unreadable.
class DataError : public Error {
 public:
  using Error::Error;
};

inline void check_shape(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace tclif
