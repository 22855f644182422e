// styler/styf.cpp

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

#include "styler/styf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "styler/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "styf serialization assumes a little-endian host");

namespace styler {
namespace styf {

namespace {

void put_u16(std::ostream& os, uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

void put_u32(std::ostream& os, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  if (!is) throw DataError("styf: truncated stream reading u16");
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("styf: truncated stream reading u32");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

void write_record(std::ostream& os, const NamedTensor& nt) {
  if (nt.name.empty() || nt.name.size() > 255)
    throw InvalidInput("styf: tensor name length must be in [1, 255]: " + nt.name);
  if (nt.tensor.rank() > 255) throw InvalidInput("styf: tensor rank exceeds 255");
  os.put(static_cast<char>(nt.name.size()));
  os.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
  os.put(static_cast<char>(nt.tensor.rank()));
  for (int64_t i = 0; i < nt.tensor.rank(); ++i) {
    const int64_t d = nt.tensor.dim(i);
    if (d < 0 || d > std::numeric_limits<uint32_t>::max())
      throw InvalidInput("styf: dimension does not fit in u32");
    put_u32(os, static_cast<uint32_t>(d));
  }
  os.write(reinterpret_cast<const char*>(nt.tensor.data()),
           static_cast<std::streamsize>(nt.tensor.numel() * sizeof(float)));
}

NamedTensor read_record(std::istream& is, int name_len) {
  NamedTensor nt;
  nt.name.resize(static_cast<size_t>(name_len));
  is.read(nt.name.data(), name_len);
  if (!is) throw DataError("styf: truncated tensor name");
  const int rank = is.get();
  if (rank == EOF) throw DataError("styf: truncated tensor rank");
  std::vector<int64_t> shape(static_cast<size_t>(rank));
  for (auto& d : shape) d = static_cast<int64_t>(get_u32(is));
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(float)));
  if (!is) throw DataError("styf: truncated tensor payload for " + nt.name);
  nt.tensor = std::move(t);
  return nt;
}

std::vector<NamedTensor> read_records(std::istream& is) {
  std::vector<NamedTensor> out;
  while (true) {
    const int name_len = is.get();
    if (name_len == EOF) break;
    if (name_len == 0) throw DataError("styf: empty tensor name");
    out.push_back(read_record(is, name_len));
  }
  return out;
}

}  // namespace

void write_tensors(std::ostream& os, const std::vector<NamedTensor>& tensors) {
  os.write("STYF", 4);
  put_u16(os, kFormatVersion);
  for (const auto& nt : tensors) write_record(os, nt);
}

std::vector<NamedTensor> read_tensors(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "STYF", 4) != 0)
    throw DataError("styf: bad magic (expected STYF)");
  const uint16_t version = get_u16(is);
  if (version != kFormatVersion)
    throw DataError("styf: unsupported format version " + std::to_string(version));
  return read_records(is);
}

void write_file(const std::filesystem::path& path,
                const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("styf: cannot open for writing: " + path.string());
  write_tensors(os, tensors);
  if (!os) throw DataError("styf: write failed: " + path.string());
}

std::vector<NamedTensor> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("styf: cannot open: " + path.string());
  return read_tensors(is);
}

void write_checkpoint(const std::filesystem::path& path,
                      const std::string& json_header,
                      const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("styf: cannot open for writing: " + path.string());
  os.write("STYC", 4);
  put_u16(os, kFormatVersion);
  put_u32(os, static_cast<uint32_t>(json_header.size()));
  os.write(json_header.data(), static_cast<std::streamsize>(json_header.size()));
  for (const auto& nt : tensors) write_record(os, nt);
  if (!os) throw DataError("styf: write failed: " + path.string());
}

std::pair<std::string, std::vector<NamedTensor>> read_checkpoint(
    const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "STYC", 4) != 0)
    throw CheckpointError("bad checkpoint magic (expected STYC): " + path.string());
  const uint16_t version = get_u16(is);
  if (version != kFormatVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const uint32_t json_len = get_u32(is);
  std::string json(json_len, '\0');
  is.read(json.data(), json_len);
  if (!is) throw CheckpointError("truncated checkpoint header: " + path.string());
  return {std::move(json), read_records(is)};
}

const Tensor& find(const std::vector<NamedTensor>& tensors,
                   const std::string& name) {
  for (const auto& nt : tensors)
    if (nt.name == name) return nt.tensor;
  throw DataError("styf: tensor not found: " + name);
}

}  // namespace styf
}  // namespace styler
