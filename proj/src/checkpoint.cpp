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

#include "fvit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "fvit/error.hpp"

namespace fvit {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  bool done() const { return pos_ == bytes_.size(); }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::vector<CheckpointRecord>& records) {
  std::string out = "FVIT";
  put_u32(out, kCheckpointVersion);
  for (const auto& r : records) {
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put_u32(out, static_cast<std::uint32_t>(r.tensor.rank()));
    for (auto d : r.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : r.tensor.data()) put_f64(out, v);
  }
  return out;
}

std::vector<CheckpointRecord> decode_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.str(4) != "FVIT") throw IoError("not a checkpoint: bad magic");
  const auto version = in.u32();
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  std::vector<CheckpointRecord> out;
  while (!in.done()) {
    CheckpointRecord r;
    r.name = in.str(in.u32());
    const auto rank = in.u32();
    if (rank == 0 || rank > 8) throw IoError("record '" + r.name + "' has invalid rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = in.u32();
      if (d == 0) throw IoError("record '" + r.name + "' has a zero dimension");
      count *= d;
    }
    if (count > bytes.size() / 8) throw IoError("record '" + r.name + "' larger than the file");
    std::vector<double> data(count);
    for (auto& v : data) v = in.f64();
    r.tensor = Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CheckpointRecord> snapshot(Encoder& model) {
  std::vector<CheckpointRecord> out;
  for (auto& [name, t] : model.parameters()) out.push_back({name, Tensor(t->shape(), {t->data().begin(), t->data().end()})});
  return out;
}

void restore(Encoder& model, const std::vector<CheckpointRecord>& records) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& r : records) by_name[r.name] = &r.tensor;
  auto params = model.parameters();
  if (by_name.size() != params.size() || records.size() != params.size())
    throw IoError("checkpoint has " + std::to_string(records.size()) + " records, model has " +
                  std::to_string(params.size()) + " parameters");
  for (auto& [name, t] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("checkpoint is missing parameter '" + name + "'");
    if (it->second->shape() != t->shape())
      throw IoError("checkpoint parameter '" + name + "' has shape " + shape_string(it->second->shape()) +
                    ", model expects " + shape_string(t->shape()));
  }
  for (auto& [name, t] : params) {
    const auto& src = by_name[name]->data();
    std::copy(src.begin(), src.end(), t->data().begin());
  }
}

void write_text_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

void save_checkpoint(const std::string& path, Encoder& model) { write_text_file(path, encode_checkpoint(snapshot(model))); }

void load_checkpoint(const std::string& path, Encoder& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  restore(model, decode_checkpoint(buf.str()));
}

}  // namespace fvit
