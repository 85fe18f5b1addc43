/*
 * Copyright 2026 The fractal-vit-lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace fvit {

// Exception families map one-to-one onto the C API status codes.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid geometry, unknown scheme names, inconsistent model settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (bad index, wrong length).
class ContractError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// A mask row with no allowed entry reached softmax.
class InvalidMaskError : public ContractError {
 public:
  using ContractError::ContractError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fvit
