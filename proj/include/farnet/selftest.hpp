// Copyright 2026 The FARNet Authors
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

// Property suites run by `farnet selftest` and the acceptance test.

#pragma once

#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

namespace farnet {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
  double budget_seconds = 0.0;
};

struct SelftestOptions {
  /// Criteria to run (1..8); empty runs all.
  std::set<int> only;
  /// Scratch directory for checkpoints; a fresh temp directory when empty.
  std::filesystem::path work_dir;
  std::function<void(const CriterionResult&)> on_result;
};

std::vector<CriterionResult> run_selftest(const SelftestOptions& options = {});

/// "[PASS] 3 encode/decode round trip (2.1s / 30s): ..." style line.
std::string format_result(const CriterionResult& r);

}  // namespace farnet
