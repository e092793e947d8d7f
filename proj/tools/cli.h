// Copyright 2026 The stylegate Authors
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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace stylegate::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissing = 3;

inline constexpr int kRunConfigVersion = 1;

// Validated run configuration. `resolved` is the input with every seed filled in.
struct RunConfig {
  nlohmann::json resolved;
  std::uint64_t seed = 0;
  bool seed_was_filled = false;
};

// Parses and validates a RunConfig document. `seed_flag` fills a missing
// top-level seed. Throws ConfigError with the offending field.
RunConfig resolve_run_config(const nlohmann::json& doc, std::optional<std::uint64_t> seed_flag);

// Entry point shared by the binary and the tests. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stylegate::cli
