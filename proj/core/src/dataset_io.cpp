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

#include "ocarm/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ocarm/config.hpp"
#include "ocarm/errors.hpp"

namespace ocarm {
namespace {

using nlohmann::json;

const json& require(const json& obj, const char* field, std::size_t line_no) {
  auto it = obj.find(field);
  if (it == obj.end()) throw SchemaError(line_no, field);
  return *it;
}

template <typename V>
V field_as(const json& obj, const char* field, std::size_t line_no) {
  const json& value = require(obj, field, line_no);
  try {
    return value.get<V>();
  } catch (const json::exception& e) {
    throw ParseError(line_no, std::string("field '") + field + "': " + e.what());
  }
}

}  // namespace

std::string record_to_json_line(const UserJourneyRecord& r) {
  json j{{"user_id", r.user_id},
         {"profile_cat", r.profile_cat},
         {"profile_dense", r.profile_dense},
         {"hist_seq", r.hist_seq},
         {"ad_seq", r.ad_seq},
         {"onboarding", r.onboarding},
         {"labels", r.labels},
         {"label_counts", r.label_counts}};
  if (r.latent) {
    j["latent"] = json{{"preference", r.latent->preference},
                       {"stickiness", r.latent->stickiness},
                       {"calendar_start", r.latent->calendar_start}};
  }
  return j.dump();
}

UserJourneyRecord record_from_json_line(const std::string& line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(line_no, std::string("malformed record: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(line_no, "record is not a JSON object");
  UserJourneyRecord r;
  r.user_id = field_as<std::int64_t>(j, "user_id", line_no);
  r.profile_cat = field_as<std::vector<int>>(j, "profile_cat", line_no);
  r.profile_dense = field_as<std::vector<double>>(j, "profile_dense", line_no);
  r.hist_seq = field_as<std::vector<int>>(j, "hist_seq", line_no);
  r.ad_seq = field_as<std::vector<int>>(j, "ad_seq", line_no);
  r.onboarding = field_as<std::vector<std::vector<int>>>(j, "onboarding", line_no);
  r.labels = field_as<std::map<std::string, double>>(j, "labels", line_no);
  r.label_counts = field_as<std::map<std::string, int>>(j, "label_counts", line_no);
  if (auto it = j.find("latent"); it != j.end()) {
    Latent latent;
    latent.preference = field_as<std::vector<double>>(*it, "preference", line_no);
    latent.stickiness = field_as<double>(*it, "stickiness", line_no);
    latent.calendar_start = field_as<int>(*it, "calendar_start", line_no);
    r.latent = std::move(latent);
  }
  return r;
}

void write_dataset(const Dataset& dataset, std::ostream& out) {
  json header{{"kind", "header"},
              {"split", split_name(dataset.split)},
              {"gen_config_hash", hex64(dataset.gen_config_hash)},
              {"records", dataset.records.size()}};
  out << header.dump() << '\n';
  for (const auto& r : dataset.records) out << record_to_json_line(r) << '\n';
}

Dataset read_dataset(std::istream& in) {
  Dataset dataset;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) throw ParseError(line_no, "empty line");
    if (!header_seen) {
      header_seen = true;
      json h;
      try {
        h = json::parse(line);
      } catch (const json::parse_error& e) {
        throw ParseError(line_no, std::string("malformed header: ") + e.what());
      }
      if (!h.is_object() || h.value("kind", "") != "header") throw ParseError(line_no, "missing header line");
      const auto split = field_as<std::string>(h, "split", line_no);
      if (split == "train") {
        dataset.split = Split::kTrain;
      } else if (split == "test") {
        dataset.split = Split::kTest;
      } else {
        throw ParseError(line_no, "unknown split '" + split + "'");
      }
      dataset.gen_config_hash = std::stoull(field_as<std::string>(h, "gen_config_hash", line_no), nullptr, 16);
      expected = field_as<std::size_t>(h, "records", line_no);
      continue;
    }
    dataset.records.push_back(record_from_json_line(line, line_no));
  }
  if (header_seen && dataset.records.size() != expected) {
    throw ParseError(line_no + 1, "expected " + std::to_string(expected) + " records, found " +
                                      std::to_string(dataset.records.size()));
  }
  return dataset;
}

void serialize_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ostringstream out;
  write_dataset(dataset, out);
  write_file_atomic(path, out.str());
}

Dataset deserialize_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open dataset " + path.string());
  return read_dataset(in);
}

}  // namespace ocarm
