// styler/model.cpp

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

#include "styler/model.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "styler/errors.hpp"

namespace styler {
namespace model {

const char* factor_name(Factor f) {
  switch (f) {
    case Factor::Text: return "text";
    case Factor::Duration: return "duration";
    case Factor::Pitch: return "pitch";
    case Factor::Speaker: return "speaker";
    case Factor::Energy: return "energy";
    case Factor::Noise: return "noise";
  }
  return "?";
}

Factor factor_from_name(const std::string& name) {
  for (Factor f : all_factors())
    if (name == factor_name(f)) return f;
  throw InvalidInput("unknown style factor: " + name);
}

const std::vector<Factor>& all_factors() {
  static const std::vector<Factor> v = {Factor::Text, Factor::Duration,
                                        Factor::Pitch, Factor::Speaker,
                                        Factor::Energy, Factor::Noise};
  return v;
}

const std::vector<Factor>& audio_factors() {
  static const std::vector<Factor> v = {Factor::Duration, Factor::Pitch,
                                        Factor::Energy, Factor::Noise};
  return v;
}

int64_t ModelConfig::blstm_size(Factor f) const {
  return f == Factor::Duration ? blstm_size_duration : blstm_size_default;
}

int64_t ModelConfig::conv_dim(Factor f) const {
  switch (f) {
    case Factor::Duration: return conv_dim_duration;
    case Factor::Noise: return conv_dim_noise;
    case Factor::Pitch: return conv_dim_pitch;
    case Factor::Energy: return conv_dim_energy;
    default: throw InvalidInput("conv_dim: not an audio factor");
  }
}

void ModelConfig::validate() const {
  auto positive = [](int64_t v, const char* what) {
    if (v < 1) throw ConfigError(std::string("model config: ") + what + " must be positive");
  };
  positive(vocab_size(), "symbol inventory");
  positive(hidden_dim, "hidden_dim");
  positive(text_fft_blocks, "text_fft_blocks");
  positive(decoder_fft_blocks, "decoder_fft_blocks");
  positive(fft_conv_filter, "fft_conv_filter");
  positive(conv_layers, "conv_layers");
  positive(blstm_layers, "blstm_layers");
  positive(blstm_size_default, "blstm_size_default");
  positive(blstm_size_duration, "blstm_size_duration");
  positive(text_bottleneck_dim, "text_bottleneck_dim");
  positive(n_bins, "n_bins");
  positive(n_mels, "n_mels");
  positive(speaker_dim, "speaker_dim");
  positive(max_duration_frames, "max_duration_frames");
  if (text_heads < 1 || hidden_dim % text_heads != 0)
    throw ConfigError("model config: text head count must divide hidden_dim");
  if (decoder_heads < 1 || hidden_dim % decoder_heads != 0)
    throw ConfigError("model config: decoder head count must divide hidden_dim");
  for (Factor f : audio_factors()) {
    if (groupnorm_groups < 1 || conv_dim(f) % groupnorm_groups != 0)
      throw ConfigError(std::string("model config: group norm groups must divide the ") +
                        factor_name(f) + " conv dim");
  }
  if (conv_kernel < 1 || conv_kernel % 2 == 0)
    throw ConfigError("model config: conv_kernel must be odd");
  if (predictor_kernel < 1 || predictor_kernel % 2 == 0)
    throw ConfigError("model config: predictor_kernel must be odd");
  if (fft_conv_kernel1 < 1 || fft_conv_kernel1 % 2 == 0 || fft_conv_kernel2 < 1 ||
      fft_conv_kernel2 % 2 == 0)
    throw ConfigError("model config: fft conv kernels must be odd");
  if (speaker_provider != "lookup" && speaker_provider != "import")
    throw ConfigError("model config: speaker_provider must be lookup or import");
  if (pitch_target_domain != "normalized" && pitch_target_domain != "raw_hz")
    throw ConfigError("model config: pitch_target_domain must be normalized or raw_hz");
  if (dropout < 0.0f || dropout >= 1.0f || predictor_dropout < 0.0f ||
      predictor_dropout >= 1.0f)
    throw ConfigError("model config: dropout rates must be in [0, 1)");
}

namespace {
using nlohmann::json;
}

std::string ModelConfig::to_json() const {
  json j;
  j["symbols"] = symbols;
  j["speakers"] = speakers;
  j["hidden_dim"] = hidden_dim;
  j["text_fft_blocks"] = text_fft_blocks;
  j["text_heads"] = text_heads;
  j["decoder_fft_blocks"] = decoder_fft_blocks;
  j["decoder_heads"] = decoder_heads;
  j["fft_conv_filter"] = fft_conv_filter;
  j["fft_conv_kernel1"] = fft_conv_kernel1;
  j["fft_conv_kernel2"] = fft_conv_kernel2;
  j["conv_dim_duration"] = conv_dim_duration;
  j["conv_dim_noise"] = conv_dim_noise;
  j["conv_dim_pitch"] = conv_dim_pitch;
  j["conv_dim_energy"] = conv_dim_energy;
  j["conv_kernel"] = conv_kernel;
  j["conv_layers"] = conv_layers;
  j["groupnorm_groups"] = groupnorm_groups;
  j["blstm_layers"] = blstm_layers;
  j["blstm_size_default"] = blstm_size_default;
  j["blstm_size_duration"] = blstm_size_duration;
  j["text_bottleneck_dim"] = text_bottleneck_dim;
  j["n_bins"] = n_bins;
  j["n_mels"] = n_mels;
  j["speaker_dim"] = speaker_dim;
  j["speaker_provider"] = speaker_provider;
  j["dropout"] = dropout;
  j["predictor_dropout"] = predictor_dropout;
  j["predictor_kernel"] = predictor_kernel;
  j["pitch_target_domain"] = pitch_target_domain;
  j["max_duration_frames"] = max_duration_frames;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: bad json: ") + e.what());
  }
  ModelConfig d;
  try {
    d.symbols = j.value("symbols", d.symbols);
    d.speakers = j.value("speakers", d.speakers);
    d.hidden_dim = j.value("hidden_dim", d.hidden_dim);
    d.text_fft_blocks = j.value("text_fft_blocks", d.text_fft_blocks);
    d.text_heads = j.value("text_heads", d.text_heads);
    d.decoder_fft_blocks = j.value("decoder_fft_blocks", d.decoder_fft_blocks);
    d.decoder_heads = j.value("decoder_heads", d.decoder_heads);
    d.fft_conv_filter = j.value("fft_conv_filter", d.fft_conv_filter);
    d.fft_conv_kernel1 = j.value("fft_conv_kernel1", d.fft_conv_kernel1);
    d.fft_conv_kernel2 = j.value("fft_conv_kernel2", d.fft_conv_kernel2);
    d.conv_dim_duration = j.value("conv_dim_duration", d.conv_dim_duration);
    d.conv_dim_noise = j.value("conv_dim_noise", d.conv_dim_noise);
    d.conv_dim_pitch = j.value("conv_dim_pitch", d.conv_dim_pitch);
    d.conv_dim_energy = j.value("conv_dim_energy", d.conv_dim_energy);
    d.conv_kernel = j.value("conv_kernel", d.conv_kernel);
    d.conv_layers = j.value("conv_layers", d.conv_layers);
    d.groupnorm_groups = j.value("groupnorm_groups", d.groupnorm_groups);
    d.blstm_layers = j.value("blstm_layers", d.blstm_layers);
    d.blstm_size_default = j.value("blstm_size_default", d.blstm_size_default);
    d.blstm_size_duration = j.value("blstm_size_duration", d.blstm_size_duration);
    d.text_bottleneck_dim = j.value("text_bottleneck_dim", d.text_bottleneck_dim);
    d.n_bins = j.value("n_bins", d.n_bins);
    d.n_mels = j.value("n_mels", d.n_mels);
    d.speaker_dim = j.value("speaker_dim", d.speaker_dim);
    d.speaker_provider = j.value("speaker_provider", d.speaker_provider);
    d.dropout = j.value("dropout", d.dropout);
    d.predictor_dropout = j.value("predictor_dropout", d.predictor_dropout);
    d.predictor_kernel = j.value("predictor_kernel", d.predictor_kernel);
    d.pitch_target_domain = j.value("pitch_target_domain", d.pitch_target_domain);
    d.max_duration_frames = j.value("max_duration_frames", d.max_duration_frames);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: bad field type: ") + e.what());
  }
  return d;
}

ModelConfig ModelConfig::desk_scale(int64_t hidden) {
  if (hidden < 16 || hidden % 16 != 0)
    throw ConfigError("desk_scale: hidden must be a positive multiple of 16");
  ModelConfig c;
  c.hidden_dim = hidden;
  c.fft_conv_filter = 4 * hidden;
  c.conv_dim_duration = hidden;
  c.conv_dim_noise = hidden;
  c.conv_dim_pitch = hidden * 5 / 4;
  c.conv_dim_energy = hidden * 5 / 4;
  c.blstm_size_default = std::max<int64_t>(hidden / 4, 4);
  c.blstm_size_duration = std::max<int64_t>(hidden * 80 / 256, 5);
  c.speaker_dim = hidden;
  for (int64_t g : {16, 8, 4, 2, 1}) {
    if (c.conv_dim_duration % g == 0 && c.conv_dim_pitch % g == 0) {
      c.groupnorm_groups = g;
      break;
    }
  }
  return c;
}

// --- model ----------------------------------------------------------------

StylerModel::StylerModel(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng = Rng::stream(seed, {0x6d6f64656cULL});
  const int64_t d = cfg_.hidden_dim;

  text_emb_ = nn::EmbeddingTable(store_, "text.embedding", cfg_.vocab_size(), d, rng);
  for (int64_t i = 0; i < cfg_.text_fft_blocks; ++i)
    text_blocks_.emplace_back(store_, "text.fft" + std::to_string(i), d,
                              cfg_.text_heads, cfg_.fft_conv_filter,
                              cfg_.fft_conv_kernel1, cfg_.fft_conv_kernel2,
                              cfg_.dropout, rng);

  auto build_audio_encoder = [&](Factor f) {
    AudioEncoder enc;
    const std::string prefix = std::string("enc.") + factor_name(f);
    const int64_t conv_dim = cfg_.conv_dim(f);
    enc.quantized_input = (f == Factor::Pitch || f == Factor::Energy);
    int64_t in_dim = cfg_.n_mels;
    if (enc.quantized_input) {
      enc.bins = nn::EmbeddingTable(store_, prefix + ".bins", cfg_.n_bins, conv_dim, rng);
      in_dim = conv_dim;
    }
    for (int64_t i = 0; i < cfg_.conv_layers; ++i) {
      enc.convs.emplace_back(store_, prefix + ".conv" + std::to_string(i),
                             i == 0 ? in_dim : conv_dim, conv_dim, cfg_.conv_kernel, rng);
      enc.norms.emplace_back(store_, prefix + ".gn" + std::to_string(i), conv_dim,
                             cfg_.groupnorm_groups);
    }
    enc.lstm = nn::BiLstm(store_, prefix + ".lstm", conv_dim, cfg_.blstm_size(f),
                          cfg_.blstm_layers, rng);
    enc.up = nn::Linear(store_, prefix + ".up", cfg_.bottleneck_width(f), d, rng);
    return enc;
  };
  enc_duration_ = build_audio_encoder(Factor::Duration);
  enc_pitch_ = build_audio_encoder(Factor::Pitch);
  enc_energy_ = build_audio_encoder(Factor::Energy);
  enc_noise_ = build_audio_encoder(Factor::Noise);

  if (cfg_.n_speakers() > 0) {
    if (cfg_.speaker_provider == "lookup") {
      speaker_table_ = store_.parameter(
          "speaker.table",
          nn::init_normal(rng, {cfg_.n_speakers(), cfg_.speaker_dim},
                          1.0f / std::sqrt(static_cast<float>(cfg_.speaker_dim))));
    } else {
      // Imported embeddings are fixed; only the projection trains.
      speaker_table_ = store_.buffer("speaker.table",
                                     Tensor::zeros({cfg_.n_speakers(), cfg_.speaker_dim}));
    }
  }
  speaker_proj_ = nn::Linear(store_, "speaker.proj", cfg_.speaker_dim, d, rng);
  for (int64_t i = 0; i < cfg_.n_speakers(); ++i)
    speaker_index_[cfg_.speakers[static_cast<size_t>(i)]] = i;

  auto build_predictor = [&](Factor f) {
    Predictor p;
    const std::string prefix = std::string("pred.") + factor_name(f);
    p.text_down = nn::Linear(store_, prefix + ".text_down", d, cfg_.text_bottleneck_dim, rng);
    p.text_up = nn::Linear(store_, prefix + ".text_up", cfg_.text_bottleneck_dim, d, rng);
    for (int i = 0; i < 2; ++i) {
      p.convs.emplace_back(store_, prefix + ".conv" + std::to_string(i), d, d,
                           cfg_.predictor_kernel, rng);
      p.lns.emplace_back(store_, prefix + ".ln" + std::to_string(i), d);
    }
    p.out = nn::Linear(store_, prefix + ".out", d, 1, rng);
    return p;
  };
  pred_duration_ = build_predictor(Factor::Duration);
  pred_pitch_ = build_predictor(Factor::Pitch);
  pred_energy_ = build_predictor(Factor::Energy);
  pitch_spk_down_ = nn::Linear(store_, "pred.pitch.spk_down", d,
                               cfg_.bottleneck_width(Factor::Pitch), rng);
  pitch_spk_up_ = nn::Linear(store_, "pred.pitch.spk_up", d, d, rng);

  // Variance embeddings index an ordered value scale, so rows are laid out
  // smoothly over the bins (base + ramp + jitter): a prediction that lands a
  // bin or two away from the bins seen in training still embeds nearby.
  auto smooth_bin_table = [&](const std::string& name) {
    Tensor t({cfg_.n_bins, d});
    const float scale = 1.0f / std::sqrt(static_cast<float>(d));
    for (int64_t c = 0; c < d; ++c) {
      const float base = rng.normal() * scale;
      const float slope = rng.normal() * scale;
      for (int64_t b = 0; b < cfg_.n_bins; ++b) {
        const float frac = cfg_.n_bins > 1
                               ? static_cast<float>(b) / static_cast<float>(cfg_.n_bins - 1)
                               : 0.0f;
        t(b, c) = base + slope * frac + rng.normal() * 0.01f;
      }
    }
    nn::EmbeddingTable table;
    table.table = store_.parameter(name, std::move(t));
    return table;
  };
  varemb_pitch_ = smooth_bin_table("varemb.pitch");
  varemb_energy_ = smooth_bin_table("varemb.energy");

  auto build_dat_head = [&](Factor f) {
    DatHead h;
    const std::string prefix = std::string("dat.") + factor_name(f);
    h.fc1 = nn::Linear(store_, prefix + ".fc1", d, d, rng);
    h.ln = nn::LayerNormLayer(store_, prefix + ".ln", d);
    h.fc2 = nn::Linear(store_, prefix + ".fc2", d, 2, rng);
    return h;
  };
  dat_duration_ = build_dat_head(Factor::Duration);
  dat_pitch_ = build_dat_head(Factor::Pitch);
  dat_energy_ = build_dat_head(Factor::Energy);

  for (int64_t i = 0; i < cfg_.decoder_fft_blocks; ++i)
    decoder_blocks_.emplace_back(store_, "dec.fft" + std::to_string(i), d,
                                 cfg_.decoder_heads, cfg_.fft_conv_filter,
                                 cfg_.fft_conv_kernel1, cfg_.fft_conv_kernel2,
                                 cfg_.dropout, rng);
  dec_out_ = nn::Linear(store_, "dec.out", d, cfg_.n_mels, rng);
}

ad::Var StylerModel::zeros(int64_t rows, int64_t cols) const {
  return ad::constant(Tensor::zeros({rows, cols}));
}

StylerModel::AudioEncoder& StylerModel::audio_encoder(Factor f) {
  switch (f) {
    case Factor::Duration: return enc_duration_;
    case Factor::Pitch: return enc_pitch_;
    case Factor::Energy: return enc_energy_;
    case Factor::Noise: return enc_noise_;
    default: throw InvalidInput(std::string("not an audio factor: ") + factor_name(f));
  }
}

StylerModel::Predictor& StylerModel::predictor(Factor f) {
  switch (f) {
    case Factor::Duration: return pred_duration_;
    case Factor::Pitch: return pred_pitch_;
    case Factor::Energy: return pred_energy_;
    default: throw InvalidInput(std::string("no predictor for factor: ") + factor_name(f));
  }
}

StylerModel::DatHead& StylerModel::dat_head(Factor f) {
  switch (f) {
    case Factor::Duration: return dat_duration_;
    case Factor::Pitch: return dat_pitch_;
    case Factor::Energy: return dat_energy_;
    default:
      throw InvalidInput(std::string("no augmentation head for factor: ") + factor_name(f));
  }
}

ad::Var StylerModel::encode_text(nn::Ctx& ctx, const std::vector<int64_t>& phones) {
  if (phones.empty()) throw InvalidInput("encode_text: empty phone sequence");
  const int64_t n = static_cast<int64_t>(phones.size());
  ad::Var x = ad::add(text_emb_.forward(phones),
                      ad::constant(nn::sinusoid_table(n, cfg_.hidden_dim)));
  for (auto& block : text_blocks_) x = block.forward(ctx, x);
  return x;
}

ad::Var StylerModel::up_project(AudioEncoder& enc, const ad::Var& down) const {
  return ad::relu(enc.up.forward(down));
}

StylerModel::FactorEncoding StylerModel::run_audio_encoder(nn::Ctx& ctx,
                                                           AudioEncoder& enc,
                                                           const ad::Var& frames,
                                                           int64_t n_phones) {
  if (n_phones < 1) throw InvalidInput("audio encoder: phone count must be >= 1");
  ad::Var x = frames;
  for (size_t i = 0; i < enc.convs.size(); ++i) {
    x = enc.convs[i].forward(x);
    x = enc.norms[i].forward(x);
    x = ad::relu(x);
    x = ad::dropout(x, cfg_.dropout, ctx.rng, ctx.training);
  }
  x = ad::span_mean(x, n_phones);  // mel calibrator: frame rate -> phone rate
  FactorEncoding out;
  out.down = enc.lstm.forward(x);
  out.up = up_project(enc, out.down);
  return out;
}

StylerModel::FactorEncoding StylerModel::encode_audio_factor(nn::Ctx& ctx, Factor f,
                                                             const Tensor& mel,
                                                             int64_t n_phones) {
  if (f != Factor::Duration && f != Factor::Noise)
    throw InvalidInput(std::string("factor ") + factor_name(f) +
                       " does not take mel input");
  if (mel.rank() != 2 || mel.cols() != cfg_.n_mels)
    throw InvalidInput("encode_audio_factor: mel must be [T x n_mels]");
  if (mel.rows() < 1) throw InvalidInput("encode_audio_factor: empty mel");
  return run_audio_encoder(ctx, audio_encoder(f), ad::constant(mel), n_phones);
}

StylerModel::FactorEncoding StylerModel::encode_audio_factor(
    nn::Ctx& ctx, Factor f, const std::vector<int>& bins, int64_t n_phones) {
  if (f != Factor::Pitch && f != Factor::Energy)
    throw InvalidInput(std::string("factor ") + factor_name(f) +
                       " does not take quantized input");
  if (bins.empty()) throw InvalidInput("encode_audio_factor: empty bin sequence");
  AudioEncoder& enc = audio_encoder(f);
  std::vector<int64_t> ids(bins.begin(), bins.end());
  return run_audio_encoder(ctx, enc, enc.bins.forward(ids), n_phones);
}

ad::Var StylerModel::get_speaker_encoding(const SpeakerRef& ref) {
  if (ref.vector) {
    if (ref.vector->numel() != cfg_.speaker_dim)
      throw InvalidInput("speaker vector width " + std::to_string(ref.vector->numel()) +
                         " does not match speaker_dim " + std::to_string(cfg_.speaker_dim));
    Tensor row({1, cfg_.speaker_dim});
    for (int64_t i = 0; i < cfg_.speaker_dim; ++i) row[i] = (*ref.vector)[i];
    return speaker_proj_.forward(ad::constant(std::move(row)));
  }
  if (!ref.id) throw InvalidInput("speaker reference is empty");
  auto it = speaker_index_.find(*ref.id);
  if (it == speaker_index_.end())
    throw UnknownSpeaker("speaker not in table: " + *ref.id);
  return speaker_proj_.forward(ad::embedding(speaker_table_, {it->second}));
}

void StylerModel::import_speaker_table(const Tensor& table) {
  if (cfg_.speaker_provider != "import")
    throw ConfigError("import_speaker_table: provider is not 'import'");
  if (table.rank() != 2 || table.dim(0) != cfg_.n_speakers() ||
      table.dim(1) != cfg_.speaker_dim)
    throw InvalidInput("import_speaker_table: table must be [n_speakers x speaker_dim]");
  speaker_table_->value = table;
}

StyleEncodings StylerModel::encode(nn::Ctx& ctx, const std::vector<int64_t>& phones,
                                   const EncoderFeatures& features,
                                   const SpeakerRef& speaker) {
  const int64_t n = static_cast<int64_t>(phones.size());
  StyleEncodings enc;
  enc.text = encode_text(ctx, phones);
  const auto dur = encode_audio_factor(ctx, Factor::Duration, features.mel, n);
  const auto pit = encode_audio_factor(ctx, Factor::Pitch, features.pitch_bins, n);
  const auto ene = encode_audio_factor(ctx, Factor::Energy, features.energy_bins, n);
  const auto noi = encode_audio_factor(ctx, Factor::Noise, features.mel, n);
  enc.duration = dur.up;
  enc.pitch_down = pit.down;
  enc.pitch = pit.up;
  enc.energy = ene.up;
  enc.noise = noi.up;
  enc.speaker = get_speaker_encoding(speaker);
  project_text(Factor::Duration, enc.text, &enc.text_down);
  return enc;
}

StyleEncodings StylerModel::mask_encoding(const StyleEncodings& enc, Factor f) {
  auto zero_like = [](const ad::Var& v) {
    return ad::constant(Tensor::zeros(v->value.shape()));
  };
  StyleEncodings out = enc;
  switch (f) {
    case Factor::Text:
      out.text = zero_like(enc.text);
      out.text_down = zero_like(enc.text_down);
      break;
    case Factor::Duration: out.duration = zero_like(enc.duration); break;
    case Factor::Pitch:
      out.pitch_down = zero_like(enc.pitch_down);
      out.pitch = zero_like(enc.pitch);
      break;
    case Factor::Speaker: out.speaker = zero_like(enc.speaker); break;
    case Factor::Energy: out.energy = zero_like(enc.energy); break;
    case Factor::Noise: out.noise = zero_like(enc.noise); break;
  }
  return out;
}

ad::Var StylerModel::project_text(Factor which, const ad::Var& z_t, ad::Var* down_out) {
  Predictor& p = predictor(which);
  const ad::Var down = p.text_down.forward(z_t);
  if (down_out) *down_out = down;
  return p.text_up.forward(down);
}

ad::Var StylerModel::predictor_trunk(nn::Ctx& ctx, Predictor& p, const ad::Var& input) {
  ad::Var x = input;
  for (size_t i = 0; i < p.convs.size(); ++i) {
    x = ad::relu(p.convs[i].forward(x));
    x = p.lns[i].forward(x);
    x = ad::dropout(x, cfg_.predictor_dropout, ctx.rng, ctx.training);
  }
  return p.out.forward(x);  // [N x 1]
}

ad::Var StylerModel::predict_duration(nn::Ctx& ctx, const ad::Var& z_d,
                                      const ad::Var& z_t) {
  if (!z_d->value.same_shape(z_t->value))
    throw InvalidInput("predict_duration: encoding shapes differ");
  return predictor_trunk(ctx, pred_duration_,
                         ad::add(z_d, project_text(Factor::Duration, z_t)));
}

ad::Var StylerModel::predict_pitch(nn::Ctx& ctx, const ad::Var& z_p_down,
                                   const ad::Var& z_t, const ad::Var& z_s) {
  if (z_p_down->value.cols() != cfg_.bottleneck_width(Factor::Pitch))
    throw InvalidInput("predict_pitch: bottleneck width mismatch");
  const ad::Var injected = ad::add_rowvec(z_p_down, pitch_spk_down_.forward(z_s));
  ad::Var z_p = up_project(enc_pitch_, injected);
  z_p = ad::add_rowvec(z_p, pitch_spk_up_.forward(z_s));
  return predictor_trunk(ctx, pred_pitch_, ad::add(z_p, project_text(Factor::Pitch, z_t)));
}

ad::Var StylerModel::predict_energy(nn::Ctx& ctx, const ad::Var& z_e,
                                    const ad::Var& z_t) {
  if (!z_e->value.same_shape(z_t->value))
    throw InvalidInput("predict_energy: encoding shapes differ");
  return predictor_trunk(ctx, pred_energy_,
                         ad::add(z_e, project_text(Factor::Energy, z_t)));
}

ad::Var StylerModel::embed_variance(const std::vector<float>& values, VarianceKind kind) {
  std::vector<int64_t> ids(values.size());
  const float bins = static_cast<float>(cfg_.n_bins);
  for (size_t i = 0; i < values.size(); ++i) {
    const float v = std::clamp(values[i], 0.0f, 1.0f);
    ids[i] = std::min<int64_t>(static_cast<int64_t>(v * bins), cfg_.n_bins - 1);
  }
  return kind == VarianceKind::Pitch ? varemb_pitch_.forward(ids)
                                     : varemb_energy_.forward(ids);
}

const std::vector<Factor>& StylerModel::dat_factors() const {
  // Noise is the residual factor; attaching a head to it would let the
  // classifier strip the very information the noise encoder must keep.
  static const std::vector<Factor> v = {Factor::Duration, Factor::Pitch, Factor::Energy};
  return v;
}

ad::Var StylerModel::classify_augmentation(nn::Ctx& ctx, Factor f, const ad::Var& z) {
  DatHead& head = dat_head(f);
  const ad::Var pooled = ad::mean_rows(z);
  const ad::Var h = ad::relu(head.ln.forward(head.fc1.forward(pooled)));
  (void)ctx;
  return head.fc2.forward(h);  // [1 x 2]
}

ad::Var StylerModel::classify_augmentation_grl(nn::Ctx& ctx, Factor f,
                                               const ad::Var& z, float lambda) {
  return classify_augmentation(ctx, f, ad::grad_reverse(z, lambda));
}

ad::Var adversarial_loss(const std::vector<ad::Var>& logits_per_factor, int label) {
  if (logits_per_factor.empty())
    throw InvalidInput("adversarial_loss: no classifier outputs");
  ad::Var total = ad::cross_entropy2(logits_per_factor[0], label);
  for (size_t i = 1; i < logits_per_factor.size(); ++i)
    total = ad::add(total, ad::cross_entropy2(logits_per_factor[i], label));
  return total;
}

ad::Var StylerModel::assemble_decoder_input(const ad::Var& z_t, const ad::Var& pitch_emb,
                                            const ad::Var& energy_emb,
                                            const ad::Var& z_s) {
  return ad::add_rowvec(ad::add(ad::add(z_t, pitch_emb), energy_emb), z_s);
}

ad::Var StylerModel::decode_core(nn::Ctx& ctx, const ad::Var& frames) {
  ++decoder_calls_;
  ad::Var x = ad::add(frames, ad::constant(nn::sinusoid_table(frames->value.rows(),
                                                              cfg_.hidden_dim)));
  for (auto& block : decoder_blocks_) x = block.forward(ctx, x);
  return dec_out_.forward(x);
}

ad::Var StylerModel::decode_clean(nn::Ctx& ctx, const ad::Var& summed,
                                  const std::vector<int64_t>& durations) {
  return decode_core(ctx, ad::repeat_rows(summed, durations));
}

ad::Var StylerModel::decode_noisy(nn::Ctx& ctx, const ad::Var& summed,
                                  const std::vector<int64_t>& durations,
                                  const ad::Var& z_n) {
  // Gradient stop: only the noise encoder (and the shared decoder) learn
  // from the noisy target.
  const ad::Var detached = ad::stop_gradient(summed);
  return decode_core(ctx, ad::repeat_rows(ad::add(detached, z_n), durations));
}

int64_t StylerModel::duration_frames_from_log(float log_value, int64_t max_frames) {
  const double e = std::exp(std::min(static_cast<double>(log_value), 20.0));
  int64_t d = static_cast<int64_t>(std::llround(e));
  return std::clamp<int64_t>(d, 0, max_frames);
}

StylerModel::SynthesisOutput StylerModel::synthesize(const SynthesisInputs& inputs) {
  if (inputs.phones.empty()) throw InvalidInput("synthesize: empty phone sequence");
  nn::Ctx ctx;  // eval mode
  const int64_t n = static_cast<int64_t>(inputs.phones.size());
  const int64_t d = cfg_.hidden_dim;
  const bool masked_text = inputs.masks.count(Factor::Text) > 0;
  const bool masked_speaker = inputs.masks.count(Factor::Speaker) > 0;

  const ad::Var z_t = masked_text ? zeros(n, d) : encode_text(ctx, inputs.phones);
  const ad::Var z_s = masked_speaker ? zeros(1, d) : get_speaker_encoding(inputs.speaker);

  auto factor_features = [&](Factor f) -> const EncoderFeatures& {
    auto it = inputs.refs.find(f);
    if (it == inputs.refs.end())
      throw InvalidInput(std::string("synthesize: unmasked factor '") + factor_name(f) +
                         "' has no reference audio");
    return it->second;
  };

  ad::Var z_d = zeros(n, d);
  ad::Var z_p_down = zeros(n, cfg_.bottleneck_width(Factor::Pitch));
  ad::Var z_e = zeros(n, d);
  ad::Var z_n = zeros(n, d);
  if (!inputs.masks.count(Factor::Duration))
    z_d = encode_audio_factor(ctx, Factor::Duration, factor_features(Factor::Duration).mel, n).up;
  if (!inputs.masks.count(Factor::Pitch))
    z_p_down = encode_audio_factor(ctx, Factor::Pitch,
                                   factor_features(Factor::Pitch).pitch_bins, n).down;
  if (!inputs.masks.count(Factor::Energy))
    z_e = encode_audio_factor(ctx, Factor::Energy,
                              factor_features(Factor::Energy).energy_bins, n).up;
  const bool want_noise = inputs.render_noise && !inputs.masks.count(Factor::Noise);
  if (want_noise)
    z_n = encode_audio_factor(ctx, Factor::Noise, factor_features(Factor::Noise).mel, n).up;

  SynthesisOutput out;
  const ad::Var dur_log = predict_duration(ctx, z_d, z_t);
  out.durations.resize(static_cast<size_t>(n));
  int64_t total = 0;
  for (int64_t i = 0; i < n; ++i) {
    out.durations[static_cast<size_t>(i)] =
        duration_frames_from_log(dur_log->value[i], cfg_.max_duration_frames);
    total += out.durations[static_cast<size_t>(i)];
  }
  if (total == 0) {
    // Degenerate prediction (typically with text masked): keep one frame per
    // phone so decoding still produces a valid spectrogram.
    std::fill(out.durations.begin(), out.durations.end(), 1);
  }

  const ad::Var pitch_pred = predict_pitch(ctx, z_p_down, z_t, z_s);
  const ad::Var energy_pred = predict_energy(ctx, z_e, z_t);
  out.pitch.resize(static_cast<size_t>(n));
  out.energy.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    out.pitch[static_cast<size_t>(i)] = std::clamp(pitch_pred->value[i], 0.0f, 1.0f);
    out.energy[static_cast<size_t>(i)] = std::clamp(energy_pred->value[i], 0.0f, 1.0f);
  }

  const ad::Var summed = assemble_decoder_input(
      z_t, embed_variance(out.pitch, VarianceKind::Pitch),
      embed_variance(out.energy, VarianceKind::Energy), z_s);
  out.clean_mel = decode_clean(ctx, summed, out.durations)->value;
  out.mel = want_noise ? decode_noisy(ctx, summed, out.durations, z_n)->value
                       : out.clean_mel;

  for (int64_t i = 0; i < n; ++i) {
    for (int64_t r = 0; r < out.durations[static_cast<size_t>(i)]; ++r) {
      out.frame_pitch.push_back(out.pitch[static_cast<size_t>(i)]);
      out.frame_energy.push_back(out.energy[static_cast<size_t>(i)]);
    }
  }
  return out;
}

}  // namespace model
}  // namespace styler
