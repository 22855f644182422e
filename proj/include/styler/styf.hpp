// styler/styf.hpp

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

#ifndef STYLER_STYF_HPP_
#define STYLER_STYF_HPP_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "styler/tensor.hpp"

namespace styler {
namespace styf {

// Tensor archive format used for feature caches, mel outputs and speaker
// embedding imports. Layout (all integers little-endian):
//
//   magic "STYF" | version u16 | records...
//   record := name_len u8 | name bytes | rank u8 | dims u32 each | f32 payload
//
// Round trips are bit-exact. Checkpoints reuse the same record encoding
// under a distinct magic with a JSON header in front of the records:
//
//   magic "STYC" | version u16 | json_len u32 | json bytes | records...

constexpr uint16_t kFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void write_tensors(std::ostream& os, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& is);

void write_file(const std::filesystem::path& path,
                const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_file(const std::filesystem::path& path);

void write_checkpoint(const std::filesystem::path& path,
                      const std::string& json_header,
                      const std::vector<NamedTensor>& tensors);
std::pair<std::string, std::vector<NamedTensor>> read_checkpoint(
    const std::filesystem::path& path);

// Convenience for single-tensor lookups; throws DataError when absent.
const Tensor& find(const std::vector<NamedTensor>& tensors,
                   const std::string& name);

}  // namespace styf
}  // namespace styler

#endif  // STYLER_STYF_HPP_
