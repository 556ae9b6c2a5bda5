/*
 * Copyright 2026 The etp Authors.
 *
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

// Run configuration shared by every subcommand, and its flat key=value
// file format:
//
//   # comment
//   lambda = 1
//   head = token
//
// Keys are the long flag names with '-' replaced by '_'. Later assignments
// win; command-line flags are applied after the file.

#ifndef ETP_TOOLS_RUN_CONFIG_H_
#define ETP_TOOLS_RUN_CONFIG_H_

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "etp/data.h"
#include "etp/pipeline.h"

namespace etp::cli {

struct RunConfig {
  pipeline::TrainConfig train;
  data::SyntheticSpec synthetic;
  std::string data_dir;
  std::string out;
  std::string run_dir;
  std::string input;        // JSONL instances for predict/eval
  std::string predictions;  // external predictions for eval
  std::string split = "test";
  std::vector<double> lambdas;  // empty selects the default sweep grid
  std::size_t jobs = 1;
  bool force = false;
  bool quiet = false;
};

struct ConfigKey {
  std::string name;
  std::string help;
  bool is_flag;  // boolean switch on the command line
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Every configurable key, in snapshot order.
const std::vector<ConfigKey>& config_keys();
const ConfigKey* find_key(const std::string& name);

// Applies `key = value`. Throws UsageError for unknown keys or bad values.
void apply_setting(RunConfig& config, const std::string& key,
                   const std::string& value);

// Parses the file format above; errors name the file and line.
void apply_config_text(RunConfig& config, const std::string& text,
                       const std::string& source);
void apply_config_file(RunConfig& config, const std::string& path);

std::string to_config_text(const RunConfig& config);

std::vector<double> parse_double_list(const std::string& s);
std::string format_double_list(const std::vector<double>& v);

}  // namespace etp::cli

#endif  // ETP_TOOLS_RUN_CONFIG_H_
