// Copyright 2026 The FARNet Authors
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

#include <stdexcept>
#include <string>

namespace farnet {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid scalar argument (non-positive sigma, alpha < 1, empty list, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Landmark coordinate frame does not match what the operation expects.
class FrameError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes are incompatible.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Two landmark sets (or metric inputs) cannot be compared.
class ComparisonError : public Error {
 public:
  using Error::Error;
};

/// A required external resource (weights archive, checkpoint) is missing or corrupt.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// Dataset ingestion or annotation format problem.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent run / model / loss configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite loss or gradient).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File-system level failure (unreadable image, unwritable output).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace farnet
