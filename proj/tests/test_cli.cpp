// tests/test_cli.cpp

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

#include <fstream>
#include <iostream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "styler/cli.hpp"
#include "styler/model.hpp"
#include "styler/pipeline.hpp"
#include "styler/styf.hpp"
#include "support/fixture.hpp"

using namespace styler;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run(const std::vector<std::string>& args, std::string* stdout_text = nullptr) {
  std::ostringstream captured;
  std::streambuf* old = nullptr;
  if (stdout_text) old = std::cout.rdbuf(captured.rdbuf());
  const int code = cli::run_cli(args);
  if (stdout_text) {
    std::cout.rdbuf(old);
    *stdout_text = captured.str();
  }
  return code;
}

// One corpus + train run shared across the CLI cases.
struct CliWorld {
  testsupport::ToyCorpus corpus;
  fs::path manifest;
  fs::path run_dir;
  fs::path model_config;
  fs::path ckpt;  // checkpoint at step 6
  std::string text;
  fs::path ref_wav;
};

const CliWorld& world() {
  static CliWorld w = [] {
    CliWorld c;
    c.corpus = testsupport::make_toy_corpus(testsupport::unique_temp_dir("cli"), 4, 2, 51);
    c.run_dir = c.corpus.root / "run";

    std::string out;
    REQUIRE(run({"preprocess", "--corpus", c.corpus.corpus_dir.string(), "--noise",
                 c.corpus.noise_dir.string(), "--out", c.corpus.out_dir.string(),
                 "--augment", "--seed", "3", "--json"},
                &out) == 0);
    const json j = json::parse(out);
    REQUIRE(j.at("entries") == 4);
    c.manifest = fs::path(j.at("manifest").get<std::string>());

    c.model_config = c.corpus.root / "model16.json";
    std::ofstream os(c.model_config);
    os << model::ModelConfig::desk_scale(16).to_json();
    os.close();

    REQUIRE(run({"train", "--manifest", c.manifest.string(), "--steps", "6",
                 "--batch-size", "2", "--ckpt-every", "100", "--run-dir",
                 c.run_dir.string(), "--model-config", c.model_config.string(),
                 "--warmup-steps", "50", "--seed", "9"}) == 0);
    c.ckpt = c.run_dir / "checkpoint_6.styc";
    REQUIRE(fs::exists(c.ckpt));

    const pipeline::Manifest m = pipeline::Manifest::load(c.manifest);
    c.text = m.header.symbols[0] + " " + m.header.symbols[1] + " " + m.header.symbols[0];
    c.ref_wav = c.corpus.corpus_dir / (c.corpus.utt_ids[0] + ".wav");
    return c;
  }();
  return w;
}

}  // namespace

TEST_CASE("cli: preprocess guards (missing noise dir, accidental overwrite)") {
  const CliWorld& w = world();
  CHECK(run({"preprocess", "--corpus", w.corpus.corpus_dir.string(), "--noise",
             (w.corpus.root / "missing").string(), "--out",
             (w.corpus.root / "p2").string(), "--augment"}) == 2);
  // Rerun into the existing output without --force.
  CHECK(run({"preprocess", "--corpus", w.corpus.corpus_dir.string(), "--noise",
             w.corpus.noise_dir.string(), "--out", w.corpus.out_dir.string(),
             "--augment"}) == 2);
  // Unreadable corpus.
  CHECK(run({"preprocess", "--corpus", (w.corpus.root / "nope").string(), "--out",
             (w.corpus.root / "p3").string()}) == 1);
  // Usage error.
  CHECK(run({"preprocess", "--corpus", w.corpus.corpus_dir.string()}) == 2);
}

TEST_CASE("cli: train writes checkpoints and a complete loss log") {
  const CliWorld& w = world();
  std::ifstream is(w.run_dir / "loss_log.jsonl");
  REQUIRE(is.good());
  std::string line;
  int64_t lines = 0;
  double last_total = 0.0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ++lines;
    const json j = json::parse(line);
    const double sum = j.at("l_mel_clean").get<double>() +
                       j.at("l_duration").get<double>() +
                       j.at("l_pitch").get<double>() + j.at("l_energy").get<double>() +
                       j.at("l_mel_noisy").get<double>() + j.at("l_aug").get<double>();
    CHECK(std::abs(j.at("loss_total").get<double>() - sum) <= 1e-6);
    last_total = j.at("loss_total").get<double>();
  }
  CHECK(lines == 6);
  CHECK(last_total > 0.0);
}

TEST_CASE("cli: --no-noise-modeling zeroes the noisy and adversarial parts") {
  const CliWorld& w = world();
  const fs::path run_dir = w.corpus.root / "run_nonoise";
  REQUIRE(run({"train", "--manifest", w.manifest.string(), "--steps", "3",
               "--batch-size", "2", "--run-dir", run_dir.string(), "--model-config",
               w.model_config.string(), "--no-noise-modeling", "--seed", "9"}) == 0);
  std::ifstream is(run_dir / "loss_log.jsonl");
  std::string line;
  int64_t lines = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ++lines;
    const json j = json::parse(line);
    CHECK(j.at("l_mel_noisy").get<double>() == 0.0);
    CHECK(j.at("l_aug").get<double>() == 0.0);
    CHECK(j.at("loss_total").get<double>() ==
          doctest::Approx(j.at("loss_clean").get<double>()));
  }
  CHECK(lines == 3);
}

TEST_CASE("cli: --resume continues the step counter") {
  const CliWorld& w = world();
  const fs::path run_dir = w.corpus.root / "run_resume";
  std::string out;
  REQUIRE(run({"train", "--manifest", w.manifest.string(), "--steps", "9",
               "--batch-size", "2", "--run-dir", run_dir.string(), "--resume",
               w.ckpt.string(), "--seed", "9", "--json"},
              &out) == 0);
  const json j = json::parse(out);
  CHECK(j.at("steps") == 9);
  CHECK(fs::exists(run_dir / "checkpoint_9.styc"));
  const auto info = pipeline::peek_checkpoint(run_dir / "checkpoint_9.styc");
  CHECK(info.step == 9);
}

TEST_CASE("cli: synthesize writes mel, wav and plot; masking changes the output") {
  const CliWorld& w = world();
  const fs::path out_base = w.corpus.root / "synth" / "base";
  std::string out;
  REQUIRE(run({"synthesize", "--ckpt", w.ckpt.string(), "--text", w.text, "--ref",
               w.ref_wav.string(), "--speaker", "spk0", "--wav", "--plot", "--out",
               out_base.string(), "--gl-iterations", "4", "--json"},
              &out) == 0);
  const json j = json::parse(out);
  const fs::path mel_path(j.at("mel").get<std::string>());
  CHECK(fs::exists(mel_path));
  CHECK(fs::exists(fs::path(j.at("wav").get<std::string>())));
  CHECK(fs::exists(fs::path(j.at("plot").get<std::string>())));
  const auto mel = styf::find(styf::read_file(mel_path), "mel");
  CHECK(mel.cols() == 80);
  CHECK(j.at("frames").get<int64_t>() == mel.rows());

  // Masked pitch differs from the unmasked run.
  const fs::path out_masked = w.corpus.root / "synth" / "masked";
  REQUIRE(run({"synthesize", "--ckpt", w.ckpt.string(), "--text", w.text, "--ref",
               w.ref_wav.string(), "--speaker", "spk0", "--mask", "pitch", "--out",
               out_masked.string()}) == 0);
  const auto masked = styf::find(styf::read_file(out_masked.string() + ".styf"), "mel");
  const bool same_shape = masked.same_shape(mel);
  bool differs = !same_shape;
  if (same_shape)
    for (int64_t i = 0; i < mel.numel() && !differs; ++i) differs = masked[i] != mel[i];
  CHECK(differs);

  // Noise rendering differs from the clean path on the same inputs.
  const fs::path out_noise = w.corpus.root / "synth" / "noisy";
  REQUIRE(run({"synthesize", "--ckpt", w.ckpt.string(), "--text", w.text, "--ref",
               w.ref_wav.string(), "--speaker", "spk0", "--render-noise", "--out",
               out_noise.string()}) == 0);
  const auto noisy = styf::find(styf::read_file(out_noise.string() + ".styf"), "mel");
  REQUIRE(noisy.same_shape(mel));
  double diff = 0.0;
  for (int64_t i = 0; i < mel.numel(); ++i)
    diff += std::abs(static_cast<double>(noisy[i]) - mel[i]);
  CHECK(diff > 0.0);
}

TEST_CASE("cli: synthesize argument errors map to exit 2") {
  const CliWorld& w = world();
  const fs::path out = w.corpus.root / "synth" / "err";
  // Unmasked duration factor without any reference.
  CHECK(run({"synthesize", "--ckpt", w.ckpt.string(), "--text", w.text, "--speaker",
             "spk0", "--out", out.string()}) == 2);
  // Unknown speaker id.
  CHECK(run({"synthesize", "--ckpt", w.ckpt.string(), "--text", w.text, "--ref",
             w.ref_wav.string(), "--speaker", "spk7", "--out", out.string()}) == 2);
  // Unknown mask factor name.
  CHECK(run({"synthesize", "--ckpt", w.ckpt.string(), "--text", w.text, "--ref",
             w.ref_wav.string(), "--speaker", "spk0", "--mask", "reverb", "--out",
             out.string()}) == 2);
  // Unknown phoneme symbol.
  CHECK(run({"synthesize", "--ckpt", w.ckpt.string(), "--text", "QQQ", "--ref",
             w.ref_wav.string(), "--speaker", "spk0", "--out", out.string()}) == 2);
}

TEST_CASE("cli: ablate emits the nine-cell grid deterministically") {
  const CliWorld& w = world();
  const fs::path out_dir = w.corpus.root / "ablation";
  std::string out;
  REQUIRE(run({"ablate", "--ckpt", w.ckpt.string(), "--ref", w.ref_wav.string(),
               "--text", w.text, "--speaker", "spk0", "--out", out_dir.string(),
               "--json"},
              &out) == 0);
  const json j = json::parse(out);
  REQUIRE(j.at("cells").size() == 9);
  CHECK(fs::exists(out_dir / "index.html"));
  for (const auto& cell : j.at("cells")) {
    CHECK(fs::exists(fs::path(cell.at("mel").get<std::string>())));
    CHECK(fs::exists(fs::path(cell.at("plot").get<std::string>())));
  }
  // The text-masked cell still produced a finite mel.
  const auto masked_text =
      styf::find(styf::read_file(out_dir / "mask_text.styf"), "mel");
  CHECK(masked_text.all_finite());
  // Masking noise without rendering reproduces the baseline bit for bit.
  CHECK(file_bytes(out_dir / "baseline.styf") == file_bytes(out_dir / "mask_noise.styf"));

  // Deterministic rerun: identical mel bytes.
  const std::string before = file_bytes(out_dir / "noise_only.styf");
  const fs::path out2 = w.corpus.root / "ablation2";
  REQUIRE(run({"ablate", "--ckpt", w.ckpt.string(), "--ref", w.ref_wav.string(),
               "--text", w.text, "--speaker", "spk0", "--out", out2.string()}) == 0);
  CHECK(file_bytes(out2 / "noise_only.styf") == before);
}

TEST_CASE("cli: help and unknown subcommands") {
  std::string out;
  CHECK(run({"--help"}, &out) == 0);
  CHECK(out.find("preprocess") != std::string::npos);
  CHECK(run({"fly"}) == 2);
  CHECK(run({}) == 2);
}
