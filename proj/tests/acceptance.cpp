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

// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fails.
//   acceptance [work_dir] [criterion ...]

#include <cstdio>
#include <cstdlib>
#include <string>

#include <spdlog/spdlog.h>

#include "farnet/selftest.hpp"

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  farnet::SelftestOptions opts;
  if (argc > 1) opts.work_dir = argv[1];
  for (int i = 2; i < argc; ++i) opts.only.insert(std::atoi(argv[i]));
  opts.on_result = [](const farnet::CriterionResult& r) {
    std::printf("%s\n", farnet::format_result(r).c_str());
    std::fflush(stdout);
  };
  int failed = 0;
  for (const auto& r : farnet::run_selftest(opts)) failed += r.pass ? 0 : 1;
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
