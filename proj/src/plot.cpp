// styler/plot.cpp

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

#include "styler/plot.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "styler/errors.hpp"

namespace styler {
namespace plot {

Image::Image(int w, int h) : width(w), height(h) {
  if (w < 1 || h < 1) throw InvalidInput("image dimensions must be positive");
  rgb.assign(static_cast<size_t>(w) * h * 3, 0);
}

void Image::set(int x, int y, unsigned char r, unsigned char g, unsigned char b) {
  if (x < 0 || x >= width || y < 0 || y >= height) return;
  const size_t i = (static_cast<size_t>(y) * width + x) * 3;
  rgb[i] = r;
  rgb[i + 1] = g;
  rgb[i + 2] = b;
}

namespace {

void put_be32(std::vector<unsigned char>& out, uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

void write_chunk(std::ofstream& os, const char* tag,
                 const std::vector<unsigned char>& payload) {
  std::vector<unsigned char> head;
  put_be32(head, static_cast<uint32_t>(payload.size()));
  os.write(reinterpret_cast<const char*>(head.data()), 4);
  std::vector<unsigned char> body(tag, tag + 4);
  body.insert(body.end(), payload.begin(), payload.end());
  os.write(reinterpret_cast<const char*>(body.data()),
           static_cast<std::streamsize>(body.size()));
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0L, body.data(), static_cast<uInt>(body.size())));
  std::vector<unsigned char> tail;
  put_be32(tail, crc);
  os.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void Image::save_png(const std::filesystem::path& path) const {
  // Filter byte 0 (none) per scanline, then one zlib stream.
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<size_t>(height) * (static_cast<size_t>(width) * 3 + 1));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    const unsigned char* row = rgb.data() + static_cast<size_t>(y) * width * 3;
    raw.insert(raw.end(), row, row + static_cast<size_t>(width) * 3);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                6) != Z_OK)
    throw Error("png: zlib compression failed");
  compressed.resize(bound);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("png: cannot open " + path.string());
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  os.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<unsigned char> ihdr;
  put_be32(ihdr, static_cast<uint32_t>(width));
  put_be32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  write_chunk(os, "IHDR", ihdr);
  write_chunk(os, "IDAT", compressed);
  write_chunk(os, "IEND", {});
  if (!os) throw DataError("png: write failed " + path.string());
}

namespace {

// Dark-to-bright heat ramp for log-mel cells.
void heat_color(float v, unsigned char* r, unsigned char* g, unsigned char* b) {
  v = std::clamp(v, 0.0f, 1.0f);
  const float rr = std::clamp(3.0f * v - 1.5f, 0.0f, 1.0f);
  const float gg = std::clamp(3.0f * v - 0.5f, 0.0f, 1.0f) * 0.85f;
  const float bb = std::clamp(1.2f - 2.5f * std::abs(v - 0.25f), 0.05f, 1.0f);
  *r = static_cast<unsigned char>(255.0f * rr);
  *g = static_cast<unsigned char>(255.0f * gg);
  *b = static_cast<unsigned char>(255.0f * bb);
}

void draw_curve(Image& img, const std::vector<float>& values, int x_scale,
                unsigned char r, unsigned char g, unsigned char b) {
  int prev_y = -1;
  for (size_t t = 0; t < values.size(); ++t) {
    const float v = std::clamp(values[t], 0.0f, 1.0f);
    const int y = static_cast<int>(std::lround((1.0f - v) * (img.height - 1)));
    for (int dx = 0; dx < x_scale; ++dx) {
      const int x = static_cast<int>(t) * x_scale + dx;
      img.set(x, y, r, g, b);
      if (prev_y >= 0 && dx == 0) {
        const int lo = std::min(prev_y, y), hi = std::max(prev_y, y);
        for (int yy = lo; yy <= hi; ++yy) img.set(x, yy, r, g, b);
      }
    }
    prev_y = y;
  }
}

}  // namespace

void render_mel_plot(const Tensor& mel, const std::vector<float>& frame_pitch,
                     const std::vector<float>& frame_energy,
                     const std::filesystem::path& path) {
  if (mel.rank() != 2 || mel.rows() < 1)
    throw InvalidInput("render_mel_plot: mel must be a nonempty [T x C] matrix");
  const int64_t t = mel.rows();
  const int64_t c = mel.cols();
  const int x_scale = t < 512 ? 2 : 1;
  const int y_scale = 3;
  Image img(static_cast<int>(t) * x_scale, static_cast<int>(c) * y_scale);

  float lo = mel[0], hi = mel[0];
  for (int64_t i = 0; i < mel.numel(); ++i) {
    lo = std::min(lo, mel[i]);
    hi = std::max(hi, mel[i]);
  }
  const float span = hi - lo > 1e-6f ? hi - lo : 1.0f;

  for (int64_t x = 0; x < t; ++x) {
    for (int64_t y = 0; y < c; ++y) {
      unsigned char r, g, b;
      heat_color((mel(x, y) - lo) / span, &r, &g, &b);
      for (int dy = 0; dy < y_scale; ++dy)
        for (int dx = 0; dx < x_scale; ++dx)
          img.set(static_cast<int>(x) * x_scale + dx,
                  img.height - 1 - (static_cast<int>(y) * y_scale + dy), r, g, b);
    }
  }
  draw_curve(img, frame_pitch, x_scale, 255, 140, 0);    // orange: pitch
  draw_curve(img, frame_energy, x_scale, 150, 60, 200);  // purple: energy
  img.save_png(path);
}

}  // namespace plot
}  // namespace styler
