// Copyright (C) 2026 The aggd-lab Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance
// with the License. You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License
// is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express
// or implied. See the License for the specific language governing permissions and limitations under the License.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aggd/synthetic.h"
#include "run_config.h"

namespace aggd::cli {

void cmd_attack(const RunConfig& config, bool force);

// `inputs` are passage JSON files or run directories holding a manifest.
void cmd_evaluate(const RunConfig& config, const std::vector<std::filesystem::path>& inputs,
                  const std::filesystem::path& report_path, const std::filesystem::path& write_cache);

void cmd_analyze_candidates(const RunConfig& config, bool force);

void cmd_sweep(const RunConfig& config, const std::string& axis, const std::vector<std::size_t>& values,
               std::size_t parallel, bool force);

void cmd_oracle(const RunConfig& config);

void cmd_synth(const SyntheticConfig& config, const std::filesystem::path& out, bool force);

}  // namespace aggd::cli
