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

#include <cstdint>
#include <string>
#include <vector>

#include "fvit/encoder.hpp"
#include "fvit/tensor.hpp"

namespace fvit {

// Binary checkpoint layout, all integers little-endian:
//
//   "FVIT"                     4 bytes magic
//   version                    u32 (currently 1)
//   repeated until end of file:
//     name_length              u32
//     name                     name_length bytes, no terminator
//     rank                     u32
//     dims                     rank x u32
//     data                     product(dims) x IEEE-754 binary64 LE
//
// Records appear in Encoder::parameters() order.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Tensor tensor;
};

std::string encode_checkpoint(const std::vector<CheckpointRecord>& records);
/// Throws IoError on a malformed or truncated buffer.
std::vector<CheckpointRecord> decode_checkpoint(const std::string& bytes);

/// Writes `bytes` verbatim (binary mode, no newline translation).
void write_text_file(const std::string& path, const std::string& bytes);

void save_checkpoint(const std::string& path, Encoder& model);
/// Overwrites every parameter of `model` from `path`. Names and shapes must
/// match the model exactly.
void load_checkpoint(const std::string& path, Encoder& model);

std::vector<CheckpointRecord> snapshot(Encoder& model);
void restore(Encoder& model, const std::vector<CheckpointRecord>& records);

}  // namespace fvit
