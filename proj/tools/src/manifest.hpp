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

#ifndef OCARM_TOOLS_MANIFEST_HPP_
#define OCARM_TOOLS_MANIFEST_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace ocarm::cli {

struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> configs;  // path, hash
  std::uint64_t seed = 0;
  std::string started;  // UTC, ISO 8601
  std::string finished;
  std::vector<std::string> artifacts;
  int exit_status = 0;
};

std::string utc_now();
std::string format_manifest(const RunManifest& manifest);
// Fills `finished`, checks every artifact exists, and writes
// <dir>/manifest.txt atomically. Returns false if an artifact is missing.
bool finalize_manifest(RunManifest& manifest, const std::filesystem::path& dir);

}  // namespace ocarm::cli

#endif  // OCARM_TOOLS_MANIFEST_HPP_
