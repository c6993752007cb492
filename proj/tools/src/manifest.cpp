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

#include "manifest.hpp"

#include <chrono>
#include <ctime>
#include <sstream>

#include "ocarm/config.hpp"

namespace ocarm::cli {

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string format_manifest(const RunManifest& m) {
  std::ostringstream out;
  out << "command: " << m.command << '\n';
  for (const auto& [path, hash] : m.configs) out << "config: " << path << " " << hash << '\n';
  out << "seed: " << m.seed << '\n';
  out << "started: " << m.started << '\n';
  out << "finished: " << m.finished << '\n';
  for (const auto& a : m.artifacts) out << "artifact: " << a << '\n';
  out << "exit-status: " << m.exit_status << '\n';
  return out.str();
}

bool finalize_manifest(RunManifest& m, const std::filesystem::path& dir) {
  m.finished = utc_now();
  bool ok = true;
  for (const auto& a : m.artifacts) {
    if (!std::filesystem::exists(a)) ok = false;
  }
  if (!ok && m.exit_status == 0) m.exit_status = 1;
  write_file_atomic(dir / "manifest.txt", format_manifest(m));
  return ok;
}

}  // namespace ocarm::cli
