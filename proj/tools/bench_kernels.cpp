// tools/bench_kernels.cpp

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

// Times the OpenMP kernels against their serial references and checks that
// both produce bit-identical output.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "styler/kernels.hpp"
#include "styler/rng.hpp"

namespace {

using styler::Rng;
namespace k = styler::kernels;

std::vector<float> random_vec(Rng& rng, int64_t n) {
  std::vector<float> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.uniform(-1.0f, 1.0f);
  return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

float max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  float m = 0.0f;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void report(const char* name, double serial_ms, double parallel_ms, float diff) {
  std::printf("%-22s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   max|diff| %g\n",
              name, serial_ms, parallel_ms, serial_ms / parallel_ms, diff);
}

}  // namespace

int main() {
  Rng rng(42);
  int reps = 5;

  {
    const int64_t m = 384, n = 384, kk = 384;
    const auto a = random_vec(rng, m * kk);
    const auto b = random_vec(rng, kk * n);
    std::vector<float> c_ser(static_cast<size_t>(m * n)), c_par(c_ser);
    const double ts = time_ms([&] {
      k::serial::gemm(false, false, m, n, kk, a.data(), b.data(), 0.0f, c_ser.data());
    }, reps);
    const double tp = time_ms([&] {
      k::gemm(false, false, m, n, kk, a.data(), b.data(), 0.0f, c_par.data());
    }, reps);
    report("gemm 384^3", ts, tp, max_abs_diff(c_ser, c_par));
  }

  {
    const int64_t t = 512, cin = 128, cout = 256, kern = 9;
    const auto x = random_vec(rng, t * cin);
    const auto w = random_vec(rng, cout * cin * kern);
    const auto bias = random_vec(rng, cout);
    std::vector<float> y_ser(static_cast<size_t>(t * cout)), y_par(y_ser);
    const double ts = time_ms([&] {
      k::serial::conv1d_forward(x.data(), t, cin, w.data(), bias.data(), cout, kern,
                                y_ser.data());
    }, reps);
    const double tp = time_ms([&] {
      k::conv1d_forward(x.data(), t, cin, w.data(), bias.data(), cout, kern, y_par.data());
    }, reps);
    report("conv1d 512x128->256k9", ts, tp, max_abs_diff(y_ser, y_par));
  }

  {
    const int64_t t = 512, cin = 128, cout = 256, kern = 9;
    const auto x = random_vec(rng, t * cin);
    const auto gy = random_vec(rng, t * cout);
    std::vector<float> gw_ser(static_cast<size_t>(cout * cin * kern), 0.0f), gw_par(gw_ser);
    std::vector<float> gb_ser(static_cast<size_t>(cout), 0.0f), gb_par(gb_ser);
    const double ts = time_ms([&] {
      std::fill(gw_ser.begin(), gw_ser.end(), 0.0f);
      std::fill(gb_ser.begin(), gb_ser.end(), 0.0f);
      k::serial::conv1d_backward_weight(x.data(), gy.data(), t, cin, cout, kern,
                                        gw_ser.data(), gb_ser.data());
    }, reps);
    const double tp = time_ms([&] {
      std::fill(gw_par.begin(), gw_par.end(), 0.0f);
      std::fill(gb_par.begin(), gb_par.end(), 0.0f);
      k::conv1d_backward_weight(x.data(), gy.data(), t, cin, cout, kern, gw_par.data(),
                                gb_par.data());
    }, reps);
    report("conv1d weight grad", ts, tp, max_abs_diff(gw_ser, gw_par));
  }

  {
    const int64_t rows = 1024, cols = 1024;
    const auto x = random_vec(rng, rows * cols);
    std::vector<float> y_ser(static_cast<size_t>(rows * cols)), y_par(y_ser);
    const double ts =
        time_ms([&] { k::serial::softmax_rows(x.data(), rows, cols, y_ser.data()); }, reps);
    const double tp =
        time_ms([&] { k::softmax_rows(x.data(), rows, cols, y_par.data()); }, reps);
    report("softmax 1024x1024", ts, tp, max_abs_diff(y_ser, y_par));
  }

  {
    const int64_t frames = 4096, cols = 256, phones = 97;
    const auto x = random_vec(rng, frames * cols);
    std::vector<float> y_ser(static_cast<size_t>(phones * cols)), y_par(y_ser);
    const double ts =
        time_ms([&] { k::serial::span_mean(x.data(), frames, cols, phones, y_ser.data()); },
                reps);
    const double tp =
        time_ms([&] { k::span_mean(x.data(), frames, cols, phones, y_par.data()); }, reps);
    report("span_mean 4096->97", ts, tp, max_abs_diff(y_ser, y_par));
  }

  return 0;
}
