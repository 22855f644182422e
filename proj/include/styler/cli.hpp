// styler/cli.hpp

// Copyright 2026 The styler Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef STYLER_CLI_HPP_
#define STYLER_CLI_HPP_

#include <string>
#include <vector>

namespace styler {
namespace cli {

// Operator surface. Subcommands: preprocess, train, synthesize, ablate.
// Exit codes: 0 success, 1 unreadable data / I/O failure, 2 configuration or
// usage error, 3 training divergence. Human messages go to stderr; with
// --json a machine-readable summary is printed to stdout.
// STYLER_RUN_DIR provides the default run directory for train outputs.
int run_cli(const std::vector<std::string>& args);

}  // namespace cli
}  // namespace styler

#endif  // STYLER_CLI_HPP_
