/*
 * Copyright 2026 The tmjx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef TMJX_CLI_HPP_
#define TMJX_CLI_HPP_

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace tmjx {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitInvariant = 4;

// Written next to every output as manifest.json (or <name>.manifest.json).
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config_path;
  nlohmann::json parameters = nlohmann::json::object();
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::string tool_version;

  nlohmann::json to_json() const;
};

// Entry point for the `tmjx` binary; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace tmjx

#endif  // TMJX_CLI_HPP_
