// Copyright 2026 The AnoShift Toolkit Authors
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

// Binary checkpoints.
//
//   magic "ANOSHCKP" | u32 version | u64 vocabulary fingerprint
//   u32 header length | header JSON (model config plus caller metadata)
//   u32 tensor count | per tensor: u32 name length, name, u32 rows,
//   u32 cols, rows*cols little-endian f64 in row-major order

#ifndef ANOSHIFT_MASKEDMODEL_CHECKPOINT_HPP_
#define ANOSHIFT_MASKEDMODEL_CHECKPOINT_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "anoshift/error.hpp"
#include "anoshift/io.hpp"
#include "anoshift/maskedmodel/model.hpp"
#include "json.hpp"

namespace anoshift::mlm {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr std::string_view kCheckpointMagic = "ANOSHCKP";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  std::uint64_t vocab_fingerprint = 0;
  nlohmann::json metadata = nlohmann::json::object();
};

namespace detail {

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorCode::kFormat, "truncated checkpoint");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string out(kCheckpointMagic);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint64_t>(out, ck.vocab_fingerprint);
  nlohmann::json header = {{"config", ck.params.config.to_json()}, {"metadata", ck.metadata}};
  const std::string h = header.dump();
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  std::uint32_t count = 0;
  ck.params.visit([&](const std::string&, const Matrix&) { ++count; });
  detail::put<std::uint32_t>(out, count);
  ck.params.visit([&](const std::string& name, const Matrix& m) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    out.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
  });
  return out;
}

// Throws kVocabularyMismatch when `expected_vocab` is given and differs.
inline Checkpoint parse_checkpoint(std::string_view data,
                                   std::optional<std::uint64_t> expected_vocab = std::nullopt) {
  detail::Reader r(data);
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) throw Error(ErrorCode::kFormat, "not a checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kFormat, "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.vocab_fingerprint = r.get<std::uint64_t>();
  if (expected_vocab && *expected_vocab != ck.vocab_fingerprint) {
    throw Error(ErrorCode::kVocabularyMismatch, "checkpoint was trained with a different vocabulary");
  }
  const auto hlen = r.get<std::uint32_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.bytes(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("bad checkpoint header: ") + e.what());
  }
  const ModelConfig config = ModelConfig::from_json(header.at("config"));
  ck.metadata = header.value("metadata", nlohmann::json::object());
  ck.params = init_model(config, 0);
  const auto count = r.get<std::uint32_t>();
  std::uint32_t seen = 0;
  ck.params.visit([&](const std::string& name, Matrix& m) {
    ++seen;
    if (seen > count) throw Error(ErrorCode::kFormat, "checkpoint has too few tensors");
    const auto nlen = r.get<std::uint32_t>();
    const auto got = r.bytes(nlen);
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    if (got != name || rows != m.rows() || cols != m.cols()) {
      throw Error(ErrorCode::kFormat, "unexpected tensor " + std::string(got));
    }
    const auto raw = r.bytes(static_cast<std::size_t>(rows) * cols * sizeof(double));
    std::memcpy(m.data(), raw.data(), raw.size());
  });
  if (seen != count || !r.done()) throw Error(ErrorCode::kFormat, "checkpoint tensor count mismatch");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file_atomic(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path,
                                  std::optional<std::uint64_t> expected_vocab = std::nullopt) {
  return parse_checkpoint(read_file(path), expected_vocab);
}

}  // namespace anoshift::mlm

#endif  // ANOSHIFT_MASKEDMODEL_CHECKPOINT_HPP_
