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

#ifndef OCARM_DATASET_IO_HPP_
#define OCARM_DATASET_IO_HPP_

#include <filesystem>
#include <iosfwd>
#include <string>

#include "ocarm/datagen.hpp"

namespace ocarm {

// JSON-lines dataset files. The first line is a header object
// {"kind":"header","split":...,"gen_config_hash":...}; every following line
// is one UserJourneyRecord with its field names as keys. A zero-byte file
// reads as an empty training split.

std::string record_to_json_line(const UserJourneyRecord& record);
// `line_no` is used in error messages only.
UserJourneyRecord record_from_json_line(const std::string& line, std::size_t line_no);

void write_dataset(const Dataset& dataset, std::ostream& out);
Dataset read_dataset(std::istream& in);

void serialize_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset deserialize_dataset(const std::filesystem::path& path);

}  // namespace ocarm

#endif  // OCARM_DATASET_IO_HPP_
