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

#include <algorithm>
#include <cstring>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "cli/commands.h"
#include "cli/run_config.h"
#include "etp/errors.h"

namespace {

// --config is applied before the other flags so that they override it.
std::string find_config_path(int argc, char** argv) {
  std::string path;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      path = argv[i + 1];
    } else if (arg.rfind("--config=", 0) == 0) {
      path = arg.substr(std::strlen("--config="));
    }
  }
  return path;
}

std::string flag_name(const std::string& key) {
  std::string flag = key;
  std::replace(flag.begin(), flag.end(), '_', '-');
  return "--" + flag;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace etp::cli;
  RunConfig config;
  try {
    const std::string config_path = find_config_path(argc, argv);
    if (!config_path.empty()) apply_config_file(config, config_path);
  } catch (const std::exception& e) {
    std::cerr << "etp: " << e.what() << '\n';
    return 2;
  }

  CLI::App app{"Explain-then-predict rationale extraction"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "flat key=value configuration file");
  for (const ConfigKey& key : config_keys()) {
    const std::string name = key.name;
    if (key.is_flag) {
      app.add_flag_callback(
          flag_name(name),
          [&config, name]() { apply_setting(config, name, "true"); },
          key.help);
    } else {
      app.add_option_function<std::string>(
          flag_name(name),
          [&config, name](const std::string& v) {
            apply_setting(config, name, v);
          },
          key.help);
    }
  }

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  auto* train = app.add_subcommand("train", "run both training stages");
  auto* predict = app.add_subcommand("predict", "explain and classify");
  auto* eval = app.add_subcommand("eval", "compute the metric battery");
  auto* sweep = app.add_subcommand("sweep", "train once per lambda");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "etp: " << e.what() << '\n';
    return 2;
  }

  const Logger log = config.quiet ? Logger{} : Logger([](const std::string& s) {
    std::cerr << s << '\n';
  });
  try {
    if (gen->parsed()) return cmd_gen_data(config, log);
    if (train->parsed()) return cmd_train(config, log);
    if (predict->parsed()) return cmd_predict(config, log);
    if (eval->parsed()) return cmd_eval(config, log);
    if (sweep->parsed()) return cmd_sweep(config, log);
  } catch (const etp::UsageError& e) {
    std::cerr << "etp: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "etp: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
