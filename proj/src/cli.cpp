// styler/cli.cpp

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

#include "styler/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "styler/errors.hpp"
#include "styler/pipeline.hpp"
#include "styler/plot.hpp"
#include "styler/styf.hpp"

namespace styler {
namespace cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_ws(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

// "--text AA B K" or "--text @phones.txt" (passthrough file).
std::vector<std::string> parse_text(const std::string& text) {
  if (!text.empty() && text[0] == '@') {
    std::ifstream is(text.substr(1));
    if (!is) throw DataError("cannot open phoneme file: " + text.substr(1));
    std::stringstream ss;
    ss << is.rdbuf();
    return split_ws(ss.str());
  }
  return split_ws(text);
}

std::set<model::Factor> parse_masks(const std::string& spec) {
  std::set<model::Factor> masks;
  std::string token;
  std::istringstream is(spec);
  while (std::getline(is, token, ',')) {
    if (token.empty()) continue;
    masks.insert(model::factor_from_name(token));
  }
  return masks;
}

fs::path default_run_dir() {
  const char* env = std::getenv("STYLER_RUN_DIR");
  return env && *env ? fs::path(env) : fs::path(".");
}

fs::path with_extension(fs::path p, const char* ext) {
  p.replace_extension(ext);
  return p;
}

struct CommonFlags {
  bool as_json = false;
  uint64_t seed = 0;
};

void emit(const CommonFlags& flags, const json& summary, const std::string& human) {
  if (flags.as_json)
    std::cout << summary.dump() << "\n";
  else
    std::cerr << human << "\n";
}

// --- preprocess ----------------------------------------------------------

int cmd_preprocess(const pipeline::PreprocessOptions& opts, const CommonFlags& flags) {
  pipeline::PreprocessSummary s = pipeline::preprocess(opts);
  json j;
  j["manifest"] = s.manifest_path.string();
  j["entries"] = s.n_entries;
  j["rejected"] = s.n_rejected;
  j["bundles"] = s.n_bundles;
  json rejects = json::array();
  for (const auto& [utt, why] : s.rejects) rejects.push_back({{"utt", utt}, {"reason", why}});
  j["rejects"] = rejects;
  j["warnings"] = s.warnings;
  std::ostringstream human;
  human << "accepted " << s.n_entries << " utterances, rejected " << s.n_rejected
        << ", wrote " << s.n_bundles << " feature bundles -> " << s.manifest_path.string();
  for (const auto& [utt, why] : s.rejects)
    human << "\n  rejected " << utt << ": " << why;
  for (const auto& w : s.warnings) human << "\n  warning: " << w;
  emit(flags, j, human.str());
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  fs::path manifest;
  fs::path run_dir;
  int64_t steps = 100;
  int64_t ckpt_every = 1000;
  fs::path resume;
  bool no_noise_modeling = false;
  fs::path model_config;
  fs::path speaker_embeddings;
  int64_t batch_size = 16;
  int64_t warmup_steps = 4000;
};

int cmd_train(const TrainArgs& args, const CommonFlags& flags) {
  pipeline::Dataset data(args.manifest);
  const pipeline::ManifestHeader& header = data.manifest().header;

  model::ModelConfig mcfg;
  if (!args.resume.empty()) {
    mcfg = pipeline::peek_checkpoint(args.resume).config;
  } else {
    if (!args.model_config.empty()) {
      std::ifstream is(args.model_config);
      if (!is) throw DataError("cannot open model config: " + args.model_config.string());
      std::stringstream ss;
      ss << is.rdbuf();
      mcfg = model::ModelConfig::from_json(ss.str());
    }
    mcfg.symbols = header.symbols;
    mcfg.speakers = header.speakers;
    mcfg.n_mels = header.n_mels;
    if (!args.speaker_embeddings.empty()) {
      const auto tensors = styf::read_file(args.speaker_embeddings);
      if (tensors.empty()) throw DataError("speaker embedding file is empty");
      mcfg.speaker_provider = "import";
      mcfg.speaker_dim = tensors[0].tensor.numel();
    }
  }

  model::StylerModel model(mcfg, flags.seed);
  if (!args.speaker_embeddings.empty() && args.resume.empty()) {
    const auto tensors = styf::read_file(args.speaker_embeddings);
    Tensor table({mcfg.n_speakers(), mcfg.speaker_dim});
    for (int64_t s = 0; s < mcfg.n_speakers(); ++s) {
      const Tensor& row = styf::find(tensors, mcfg.speakers[static_cast<size_t>(s)]);
      if (row.numel() != mcfg.speaker_dim)
        throw DataError("speaker embedding width mismatch for " +
                        mcfg.speakers[static_cast<size_t>(s)]);
      for (int64_t c = 0; c < mcfg.speaker_dim; ++c) table(s, c) = row[c];
    }
    model.import_speaker_table(table);
  }

  pipeline::TrainConfig tcfg;
  tcfg.batch_size = args.batch_size;
  tcfg.seed = flags.seed;
  tcfg.noise_modeling = !args.no_noise_modeling;
  tcfg.warmup_steps = args.warmup_steps;
  pipeline::Trainer trainer(model, tcfg, data);

  const pipeline::NormStats stats = pipeline::NormStats::from_header(header);
  if (!args.resume.empty()) {
    const auto info = pipeline::load_checkpoint(args.resume, model, &trainer.optimizer());
    trainer.set_steps_done(info.step);
  }

  fs::create_directories(args.run_dir);
  const fs::path log_path = args.run_dir / "loss_log.jsonl";
  std::ofstream log(log_path, args.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw DataError("cannot open loss log: " + log_path.string());

  fs::path last_ckpt;
  auto save = [&](int64_t step) {
    const fs::path p = args.run_dir / ("checkpoint_" + std::to_string(step) + ".styc");
    pipeline::save_checkpoint(p, model, trainer.optimizer(), step, stats);
    last_ckpt = p;
    return p;
  };

  int64_t ckpts_written = 0;
  try {
    while (trainer.steps_done() < args.steps) {
      const auto breakdown = trainer.step();
      const int64_t step = trainer.steps_done();
      log << objectives::to_json_line(breakdown, step, trainer.learning_rate(step))
          << "\n";
      if (args.ckpt_every > 0 && step % args.ckpt_every == 0 && step < args.steps) {
        save(step);
        ++ckpts_written;
      }
    }
  } catch (const TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what();
    if (!last_ckpt.empty()) std::cerr << " (last good checkpoint: " << last_ckpt.string() << ")";
    std::cerr << "\n";
    return 3;
  }
  const fs::path final_ckpt = save(trainer.steps_done());
  ++ckpts_written;
  log.flush();

  json j;
  j["steps"] = trainer.steps_done();
  j["checkpoint"] = final_ckpt.string();
  j["checkpoints_written"] = ckpts_written;
  j["loss_log"] = log_path.string();
  emit(flags, j,
       "trained to step " + std::to_string(trainer.steps_done()) + ", checkpoint " +
           final_ckpt.string());
  return 0;
}

// --- synthesize ----------------------------------------------------------------

struct SynthArgs {
  fs::path ckpt;
  std::string text;
  std::map<model::Factor, fs::path> refs;
  fs::path ref_all;
  std::string speaker;
  std::string mask_spec;
  bool render_noise = false;
  bool wav = false;
  bool plot = false;
  fs::path out;
  int gl_iterations = 60;
};

int cmd_synthesize(const SynthArgs& args, const CommonFlags& flags) {
  pipeline::Synthesizer synth(args.ckpt);
  pipeline::Synthesizer::Request req;
  req.phone_symbols = parse_text(args.text);
  req.masks = parse_masks(args.mask_spec);
  req.render_noise = args.render_noise;
  for (model::Factor f : model::audio_factors()) {
    auto it = args.refs.find(f);
    if (it != args.refs.end())
      req.refs[f] = it->second;
    else if (!args.ref_all.empty())
      req.refs[f] = args.ref_all;
  }
  if (!args.speaker.empty()) {
    if (args.speaker.size() > 5 &&
        args.speaker.substr(args.speaker.size() - 5) == ".styf")
      req.speaker_vector_file = args.speaker;
    else
      req.speaker_id = args.speaker;
  }

  const auto out = synth.synthesize(req);
  const fs::path mel_path = with_extension(args.out, ".styf");
  fs::create_directories(mel_path.parent_path().empty() ? "." : mel_path.parent_path());
  styf::write_file(mel_path, {{"mel", out.mel}});

  json j;
  j["mel"] = mel_path.string();
  j["frames"] = out.mel.rows();
  j["durations"] = out.durations;
  if (args.wav) {
    dsp::MelSpectrogram mel;
    mel.frames = out.mel;
    mel.hop_length = synth.stats().hop_length;
    const auto wav = dsp::mel_to_waveform(
        mel, args.gl_iterations,
        synth.stats().feature_config(static_cast<int>(synth.config().n_mels)));
    const fs::path wav_path = with_extension(args.out, ".wav");
    dsp::write_wav(wav_path, wav);
    j["wav"] = wav_path.string();
  }
  if (args.plot) {
    const fs::path png_path = with_extension(args.out, ".png");
    plot::render_mel_plot(out.mel, out.frame_pitch, out.frame_energy, png_path);
    j["plot"] = png_path.string();
  }
  emit(flags, j, "wrote " + mel_path.string() + " (" + std::to_string(out.mel.rows()) +
                     " frames)");
  return 0;
}

// --- ablate -----------------------------------------------------------------------

struct AblateArgs {
  fs::path ckpt;
  fs::path ref;
  std::string text;
  std::string speaker;
  fs::path out;
};

int cmd_ablate(const AblateArgs& args, const CommonFlags& flags) {
  pipeline::Synthesizer synth(args.ckpt);
  std::vector<std::string> phones;
  if (args.text.empty()) {
    // Default probe text: the first few symbols of the checkpoint's table.
    const auto& symbols = synth.config().symbols;
    for (size_t i = 0; i < symbols.size() && i < 8; ++i) phones.push_back(symbols[i]);
  } else {
    phones = parse_text(args.text);
  }
  std::string speaker = args.speaker;
  if (speaker.empty()) {
    if (synth.config().speakers.empty())
      throw ConfigError("ablate: checkpoint has no speakers; pass --speaker");
    speaker = synth.config().speakers.front();
  }

  struct Cell {
    std::string name;
    std::set<model::Factor> masks;
    bool render_noise = false;
  };
  std::vector<Cell> cells = {
      {"baseline", {}, false},
      {"noise_on", {}, true},
      {"noise_only",
       {model::Factor::Text, model::Factor::Duration, model::Factor::Pitch,
        model::Factor::Speaker, model::Factor::Energy},
       true},
  };
  for (model::Factor f : model::all_factors())
    cells.push_back({std::string("mask_") + model::factor_name(f), {f}, false});

  fs::create_directories(args.out);
  json j;
  json cell_list = json::array();
  std::ostringstream html;
  html << "<!doctype html><html><head><meta charset=\"utf-8\">"
       << "<title>style factor ablation</title></head><body>\n"
       << "<h1>Style factor ablation</h1>\n<table>\n";

  for (const Cell& cell : cells) {
    pipeline::Synthesizer::Request req;
    req.phone_symbols = phones;
    req.speaker_id = speaker;
    req.masks = cell.masks;
    req.render_noise = cell.render_noise;
    for (model::Factor f : model::audio_factors()) req.refs[f] = args.ref;
    const auto out = synth.synthesize(req);
    const fs::path mel_path = args.out / (cell.name + ".styf");
    const fs::path png_path = args.out / (cell.name + ".png");
    styf::write_file(mel_path, {{"mel", out.mel}});
    plot::render_mel_plot(out.mel, out.frame_pitch, out.frame_energy, png_path);
    cell_list.push_back({{"cell", cell.name},
                         {"mel", mel_path.string()},
                         {"plot", png_path.string()},
                         {"frames", out.mel.rows()}});
    html << "<tr><td><b>" << cell.name << "</b></td><td><img src=\""
         << png_path.filename().string() << "\" alt=\"" << cell.name
         << "\"></td></tr>\n";
  }
  html << "</table></body></html>\n";
  const fs::path index_path = args.out / "index.html";
  std::ofstream os(index_path);
  os << html.str();
  if (!os) throw DataError("ablate: cannot write index: " + index_path.string());

  j["cells"] = cell_list;
  j["index"] = index_path.string();
  emit(flags, j,
       "wrote " + std::to_string(cells.size()) + " ablation cells -> " +
           args.out.string());
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"styler: controllable non-autoregressive speech synthesis"};
  app.require_subcommand(1);
  CommonFlags flags;

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "extract features and build a manifest");
  pipeline::PreprocessOptions popts;
  pre->add_option("--corpus", popts.corpus_dir, "corpus directory")->required();
  pre->add_option("--noise", popts.noise_dir, "noise wav directory");
  pre->add_option("--out", popts.out_dir, "output directory")->required();
  pre->add_flag("--augment", popts.augment, "write one noise-mixed variant per utterance");
  pre->add_flag("--force", popts.force, "overwrite an existing manifest");
  pre->add_option("--seed", flags.seed, "rng seed");
  pre->add_flag("--json", flags.as_json, "machine-readable summary on stdout");

  // train
  auto* tr = app.add_subcommand("train", "train a model from a manifest");
  TrainArgs targs;
  targs.run_dir = default_run_dir();
  tr->add_option("--manifest", targs.manifest, "manifest path")->required();
  tr->add_option("--steps", targs.steps, "total optimizer steps");
  tr->add_option("--batch-size", targs.batch_size, "items per step");
  tr->add_option("--ckpt-every", targs.ckpt_every, "checkpoint cadence in steps");
  tr->add_option("--resume", targs.resume, "checkpoint to resume from");
  tr->add_flag("--no-noise-modeling", targs.no_noise_modeling,
               "disable the noisy decoding pass and augmentation classifiers");
  tr->add_option("--run-dir", targs.run_dir, "run directory (default $STYLER_RUN_DIR)");
  tr->add_option("--model-config", targs.model_config, "model config json");
  tr->add_option("--speaker-embeddings", targs.speaker_embeddings,
                 "styf file with one imported embedding per speaker id");
  tr->add_option("--warmup-steps", targs.warmup_steps, "lr warm-up steps");
  tr->add_option("--seed", flags.seed, "rng seed");
  tr->add_flag("--json", flags.as_json, "machine-readable summary on stdout");

  // synthesize
  auto* sy = app.add_subcommand("synthesize", "synthesize a mel from text and references");
  SynthArgs sargs;
  sy->add_option("--ckpt", sargs.ckpt, "checkpoint path")->required();
  sy->add_option("--text", sargs.text,
                 "space-separated phoneme symbols, or @file passthrough")->required();
  fs::path rd, rp, re, rn;
  sy->add_option("--ref-duration", rd, "duration reference audio");
  sy->add_option("--ref-pitch", rp, "pitch reference audio");
  sy->add_option("--ref-energy", re, "energy reference audio");
  sy->add_option("--ref-noise", rn, "noise reference audio");
  sy->add_option("--ref", sargs.ref_all, "reference audio for all audio factors");
  sy->add_option("--speaker", sargs.speaker, "speaker id or .styf embedding file");
  sy->add_option("--mask", sargs.mask_spec, "comma-separated factors to exclude");
  sy->add_flag("--render-noise", sargs.render_noise, "activate noisy decoding");
  sy->add_flag("--wav", sargs.wav, "also write an audio estimate (phase inversion)");
  sy->add_flag("--plot", sargs.plot, "also write a mel plot png");
  sy->add_option("--out", sargs.out, "output base path")->required();
  sy->add_option("--gl-iterations", sargs.gl_iterations, "phase estimation iterations");
  sy->add_option("--seed", flags.seed, "rng seed");
  sy->add_flag("--json", flags.as_json, "machine-readable summary on stdout");

  // ablate
  auto* ab = app.add_subcommand("ablate", "emit the factor-exclusion grid");
  AblateArgs aargs;
  ab->add_option("--ckpt", aargs.ckpt, "checkpoint path")->required();
  ab->add_option("--ref", aargs.ref, "reference audio for all factors")->required();
  ab->add_option("--text", aargs.text,
                 "phoneme symbols or @file (default: leading table symbols)");
  ab->add_option("--speaker", aargs.speaker, "speaker id (default: first in checkpoint)");
  ab->add_option("--out", aargs.out, "output directory")->required();
  ab->add_option("--seed", flags.seed, "rng seed");
  ab->add_flag("--json", flags.as_json, "machine-readable summary on stdout");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (pre->parsed()) return cmd_preprocess(popts, flags);
    if (tr->parsed()) return cmd_train(targs, flags);
    if (sy->parsed()) {
      if (!rd.empty()) sargs.refs[model::Factor::Duration] = rd;
      if (!rp.empty()) sargs.refs[model::Factor::Pitch] = rp;
      if (!re.empty()) sargs.refs[model::Factor::Energy] = re;
      if (!rn.empty()) sargs.refs[model::Factor::Noise] = rn;
      return cmd_synthesize(sargs, flags);
    }
    if (ab->parsed()) return cmd_ablate(aargs, flags);
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const UnknownSpeaker& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace cli
}  // namespace styler
