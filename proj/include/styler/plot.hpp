// styler/plot.hpp

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

#ifndef STYLER_PLOT_HPP_
#define STYLER_PLOT_HPP_

#include <filesystem>
#include <vector>

#include "styler/tensor.hpp"

namespace styler {
namespace plot {

// Minimal RGB raster with a PNG writer (zlib-compressed scanlines).
struct Image {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> rgb;  // 3 bytes per pixel, row-major

  Image(int w, int h);
  void set(int x, int y, unsigned char r, unsigned char g, unsigned char b);
  void save_png(const std::filesystem::path& path) const;
};

// Mel heatmap (low bands at the bottom) with the pitch contour drawn in
// orange and the energy curve in purple; either curve may be empty. Curves
// are expected in [0, 1] per frame.
void render_mel_plot(const Tensor& mel, const std::vector<float>& frame_pitch,
                     const std::vector<float>& frame_energy,
                     const std::filesystem::path& path);

}  // namespace plot
}  // namespace styler

#endif  // STYLER_PLOT_HPP_
