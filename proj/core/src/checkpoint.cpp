// Copyright 2026 The OCARM Authors
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

#include "ocarm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "ocarm/config.hpp"
#include "ocarm/errors.hpp"

namespace ocarm {
namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "OCARM-CHECKPOINT 1";

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes little-endian hosts");

template <typename T>
void append_arrays(const ParamStore<T>& params, json& table, std::string& payload) {
  for (int i = 0; i < params.size(); ++i) {
    const auto& e = params.entry(i);
    table.push_back(json{{"name", e.name},
                         {"group", std::string(group_name(e.group))},
                         {"rows", e.value.rows()},
                         {"cols", e.value.cols()},
                         {"offset", payload.size()}});
    const auto bytes = sizeof(T) * static_cast<std::size_t>(e.value.size());
    payload.append(reinterpret_cast<const char*>(e.value.data()), bytes);
  }
}

template <typename T>
ParamStore<T> read_arrays(const json& table, std::string_view payload) {
  ParamStore<T> params;
  for (const auto& a : table) {
    const auto name = a.at("name").get<std::string>();
    const auto group = parse_group(a.at("group").get<std::string>());
    if (!group) throw IntegrityError("unknown group for array " + name);
    const auto rows = a.at("rows").get<Eigen::Index>();
    const auto cols = a.at("cols").get<Eigen::Index>();
    const auto offset = a.at("offset").get<std::size_t>();
    const auto bytes = sizeof(T) * static_cast<std::size_t>(rows * cols);
    if (rows < 0 || cols < 0 || offset + bytes > payload.size()) {
      throw IntegrityError("array " + name + " exceeds payload");
    }
    Matrix<T> value(rows, cols);
    if (bytes > 0) std::memcpy(value.data(), payload.data() + offset, bytes);
    params.add(*group, name, std::move(value));
  }
  return params;
}

template <typename V>
void compare_field(const char* field, const V& a, const V& b) {
  if (!(a == b)) throw IncompatibleError(field, "checkpoint and consumer model configs differ");
}

}  // namespace

std::string stage_name(StageTag stage) {
  switch (stage) {
    case StageTag::kBase:
      return "base";
    case StageTag::kStage1:
      return "stage1";
    case StageTag::kStage2:
      return "stage2";
  }
  return "unknown";
}

StageTag parse_stage(std::string_view name) {
  if (name == "base") return StageTag::kBase;
  if (name == "stage1") return StageTag::kStage1;
  if (name == "stage2") return StageTag::kStage2;
  throw IntegrityError("unknown stage tag '" + std::string(name) + "'");
}

bool Checkpoint::operator==(const Checkpoint& other) const {
  return stage == other.stage && model_config == other.model_config &&
         train_config_hash == other.train_config_hash && seed == other.seed && rng_state == other.rng_state &&
         step == other.step && params == other.params;
}

void check_compatible(const ModelConfig& stored, const ModelConfig& expected, bool teacher_only) {
  compare_field("vocab_size", stored.vocab_size, expected.vocab_size);
  compare_field("num_topics", stored.num_topics, expected.num_topics);
  compare_field("days", stored.days, expected.days);
  compare_field("per_day_cap", stored.per_day_cap, expected.per_day_cap);
  compare_field("tasks", stored.tasks, expected.tasks);
  compare_field("d_emb", stored.d_emb, expected.d_emb);
  compare_field("n_heads", stored.n_heads, expected.n_heads);
  compare_field("d_repr", stored.d_repr, expected.d_repr);
  compare_field("proj_hidden", stored.proj_hidden, expected.proj_hidden);
  compare_field("content_encoder", stored.content_encoder, expected.content_encoder);
  if (teacher_only) return;
  compare_field("hist_cap", stored.hist_cap, expected.hist_cap);
  compare_field("ad_cap", stored.ad_cap, expected.ad_cap);
  compare_field("num_queries", stored.num_queries, expected.num_queries);
  compare_field("tower_hidden", stored.tower_hidden, expected.tower_hidden);
  compare_field("backbone_hidden", stored.backbone_hidden, expected.backbone_hidden);
  compare_field("user_encoder", stored.user_encoder, expected.user_encoder);
  compare_field("zero_aux", stored.zero_aux, expected.zero_aux);
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  json table = json::array();
  std::string payload;
  std::visit([&](const auto& params) { append_arrays(params, table, payload); }, ckpt.params);
  json header{{"stage", stage_name(ckpt.stage)},
              {"model_config", json::parse(to_json(ckpt.model_config))},
              {"train_config_hash", hex64(ckpt.train_config_hash)},
              {"seed", ckpt.seed},
              {"rng_state", ckpt.rng_state},
              {"step", ckpt.step},
              {"precision", ckpt.precision() == Precision::kFloat64 ? "float64" : "float32"},
              {"arrays", table}};
  const std::string header_text = header.dump();
  const std::uint64_t checksum = fnv1a64(payload, fnv1a64(header_text));
  std::string out;
  out.reserve(header_text.size() + payload.size() + 64);
  out.append(kMagic);
  out.push_back('\n');
  out.append(hex64(checksum) + " " + std::to_string(header_text.size()) + " " + std::to_string(payload.size()));
  out.push_back('\n');
  out.append(header_text);
  out.append(payload);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  const auto first = bytes.find('\n');
  if (first == std::string_view::npos || bytes.substr(0, first) != kMagic) {
    throw IntegrityError("not an OCARM checkpoint (bad magic)");
  }
  const auto second = bytes.find('\n', first + 1);
  if (second == std::string_view::npos) throw IntegrityError("truncated checkpoint preamble");
  std::istringstream pre(std::string(bytes.substr(first + 1, second - first - 1)));
  std::string checksum_hex;
  std::size_t header_len = 0;
  std::size_t payload_len = 0;
  if (!(pre >> checksum_hex >> header_len >> payload_len)) throw IntegrityError("malformed checkpoint preamble");
  const std::size_t body = second + 1;
  if (bytes.size() != body + header_len + payload_len) {
    throw IntegrityError("checkpoint size mismatch: expected " + std::to_string(body + header_len + payload_len) +
                         " bytes, found " + std::to_string(bytes.size()));
  }
  const std::string_view header_text = bytes.substr(body, header_len);
  const std::string_view payload = bytes.substr(body + header_len, payload_len);
  if (hex64(fnv1a64(payload, fnv1a64(header_text))) != checksum_hex) {
    throw IntegrityError("checkpoint checksum mismatch");
  }

  try {
    const json header = json::parse(header_text);
    Checkpoint ckpt;
    ckpt.stage = parse_stage(header.at("stage").get<std::string>());
    ckpt.model_config = parse_model_config(header.at("model_config").dump());
    ckpt.train_config_hash = std::stoull(header.at("train_config_hash").get<std::string>(), nullptr, 16);
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.rng_state = header.at("rng_state").get<std::string>();
    ckpt.step = header.at("step").get<std::int64_t>();
    const auto precision = header.at("precision").get<std::string>();
    if (precision == "float64") {
      ckpt.params = read_arrays<double>(header.at("arrays"), payload);
    } else if (precision == "float32") {
      ckpt.params = read_arrays<float>(header.at("arrays"), payload);
    } else {
      throw IntegrityError("unknown precision " + precision);
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("invalid model config in checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ckpt = load_checkpoint(path);
  check_compatible(ckpt.model_config, expected);
  return ckpt;
}

}  // namespace ocarm
