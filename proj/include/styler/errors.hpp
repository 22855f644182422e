// styler/errors.hpp

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

#ifndef STYLER_ERRORS_HPP_
#define STYLER_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace styler {

// Base for all library errors. The CLI maps the subclasses onto exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An argument violates an operation's precondition.
struct InvalidInput : Error {
  using Error::Error;
};

// A configuration record is internally inconsistent.
struct ConfigError : Error {
  using Error::Error;
};

// Corpus or manifest data is malformed.
struct DataError : Error {
  using Error::Error;
};

// A checkpoint archive cannot be restored against the current config.
struct CheckpointError : Error {
  using Error::Error;
};

// A speaker id is not known to the active speaker provider.
struct UnknownSpeaker : Error {
  using Error::Error;
};

// Training produced a non-finite loss.
struct TrainingDiverged : Error {
  using Error::Error;
};

}  // namespace styler

#endif  // STYLER_ERRORS_HPP_
