// Copyright 2026 The o3w Authors.
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

namespace o3w {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not line up for an operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

class EmptyReductionError : public Error {
public:
    using Error::Error;
};

/// Train-mode batch normalization over fewer than two rows.
class InsufficientBatchError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf where a finite value is required (loss, regression output, ...).
class NumericError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class UnknownWordError : public Error {
public:
    using Error::Error;
};

/// Checkpoint magic/version mismatch or a corrupted payload.
class VersionError : public Error {
public:
    using Error::Error;
};

/// Checkpoint is readable but does not carry the tensors a model needs.
class SchemaError : public Error {
public:
    using Error::Error;
};

class GraphError : public Error {
public:
    using Error::Error;
};

}  // namespace o3w
