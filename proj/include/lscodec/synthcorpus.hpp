// Licensed to the Apache Software Foundation (ASF) under one
// or more contributor license agreements.  See the NOTICE file
// distributed with this work for additional information
// regarding copyright ownership.  The ASF licenses this file
// to you under the Apache License, Version 2.0 (the
// "License"); you may not use this file except in compliance
// with the License.  You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LSCODEC_SYNTHCORPUS_HPP
#define LSCODEC_SYNTHCORPUS_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lscodec/common.hpp"
#include "lscodec/container.hpp"
#include "lscodec/rng.hpp"
#include "lscodec/wave.hpp"

namespace lsc {

/// A synthetic talker. Identity is carried by the pitch register and the
/// formant scale, both of which a resampling speed effect corrupts. Spectral
/// tilt is deliberately shared across talkers so that scale-invariant cues
/// do not separate them.
struct SpeakerProfile {
  std::string id;
  double register_hz = 0.0;
  double formant_scale = 1.0;
  double tilt_db_per_octave = -6.0;
};

struct SegmentAlignment {
  int symbol = 0;
  std::size_t start_sample = 0;
  std::size_t end_sample = 0;
};

struct SynthUtterance {
  std::string utterance_id;
  std::string speaker_id;
  Waveform wave;
  /// Ground-truth pitch per analysis frame, zero where unvoiced.
  VecD f0_frames;
  std::vector<std::uint8_t> voiced_frames;
  std::vector<SegmentAlignment> segments;
  /// Per-utterance tilt offset. Utterance-level, not speaker-level, so a
  /// decoder can learn tilt from the prompt without tilt identifying anyone.
  double tilt_jitter_db_per_octave = 0.0;
};

struct CorpusConfig {
  int sample_rate = 24000;
  int frame_rate = 50;
  int num_speakers = 4;
  int utterances_per_speaker = 5;
  double min_duration_s = 6.2;
  double max_duration_s = 7.8;
  double base_register_hz = 112.0;
  double register_ratio = 1.18;
  double base_formant_scale = 0.88;
  double formant_ratio = 1.09;
  double tilt_db_per_octave = -6.0;
  double tilt_jitter_db_per_octave = 1.5;
  double noise_rms = 0.0015;
  std::uint64_t seed = 1234;

  void validate() const {
    check_arg(sample_rate > 0 && frame_rate > 0 && sample_rate % frame_rate == 0,
              "CorpusConfig: sample_rate must be a positive multiple of frame_rate");
    check_arg(num_speakers >= 1 && utterances_per_speaker >= 1,
              "CorpusConfig: need at least one speaker and one utterance each");
    check_arg(min_duration_s > 0 && max_duration_s >= min_duration_s,
              "CorpusConfig: bad duration range");
    check_arg(base_register_hz > 0 && register_ratio > 0,
              "CorpusConfig: bad register parameters");
  }
};

struct SynthCorpus {
  CorpusConfig config;
  std::vector<SpeakerProfile> speakers;
  std::vector<SynthUtterance> utterances;
};

namespace detail {

struct Vowel {
  double f1, f2, f3;      // formant centers in Hz at scale 1
  double b1, b2, b3;      // bandwidths in Hz
};

inline const std::vector<Vowel>& vowel_inventory() {
  static const std::vector<Vowel> kVowels = {
      {800.0, 1150.0, 2800.0, 90.0, 120.0, 170.0},   // open central
      {500.0, 1900.0, 2600.0, 80.0, 130.0, 170.0},   // mid front
      {300.0, 2300.0, 3000.0, 70.0, 140.0, 180.0},   // close front
      {450.0, 800.0, 2650.0, 80.0, 110.0, 170.0},    // mid back
      {325.0, 700.0, 2550.0, 70.0, 100.0, 160.0},    // close back
  };
  return kVowels;
}

/// Log-amplitude envelope at frequency f: a global tilt plus three formant
/// bumps. Tilt is measured against a 200 Hz reference.
inline double envelope_db(double f, const Vowel& v, double formant_scale, double tilt_db_oct) {
  const double tilt = tilt_db_oct * std::log2(std::max(f, 60.0) / 200.0);
  const double gains[3] = {14.0, 10.0, 6.0};
  const double centers[3] = {v.f1 * formant_scale, v.f2 * formant_scale, v.f3 * formant_scale};
  const double widths[3] = {v.b1 * formant_scale, v.b2 * formant_scale, v.b3 * formant_scale};
  double bump = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double d = (f - centers[i]) / widths[i];
    bump += gains[i] * std::exp(-0.5 * d * d);
  }
  return tilt + bump;
}

}  // namespace detail

/// Renders one utterance: a run of vowel segments, each a harmonic stack
/// shaped by a formant envelope, with per-segment pitch declination, slow
/// vibrato, optional short silences between segments, and a faint noise
/// floor. Every random draw is keyed to (seed, utterance_id) so generation
/// is order-independent and reproducible.
inline SynthUtterance synthesize_utterance(const CorpusConfig& cfg, const SpeakerProfile& spk,
                                           const std::string& utterance_id) {
  Rng rng(derive_seed(cfg.seed, utterance_id, 0x5c0));
  const int sr = cfg.sample_rate;
  const int hop = sr / cfg.frame_rate;

  SynthUtterance utt;
  utt.utterance_id = utterance_id;
  utt.speaker_id = spk.id;
  utt.wave.sample_rate = sr;
  utt.tilt_jitter_db_per_octave =
      rng.uniform(-cfg.tilt_jitter_db_per_octave, cfg.tilt_jitter_db_per_octave);
  const double tilt = spk.tilt_db_per_octave + utt.tilt_jitter_db_per_octave;

  const double duration = rng.uniform(cfg.min_duration_s, cfg.max_duration_s);
  const std::size_t total_samples = static_cast<std::size_t>(duration * sr);
  std::vector<double> audio(total_samples, 0.0);
  std::vector<double> f0_per_sample(total_samples, 0.0);

  const auto& vowels = detail::vowel_inventory();
  const int fade = sr / 100;  // 10 ms raised-cosine edges

  std::size_t cursor = 0;
  double declination = 1.04;  // pitch drifts down over the utterance
  while (cursor + static_cast<std::size_t>(sr) / 4 < total_samples) {
    // Optional short pause between segments.
    if (cursor > 0 && rng.uniform() < 0.25) {
      cursor += static_cast<std::size_t>(rng.uniform(0.04, 0.08) * sr);
      if (cursor >= total_samples) {
        break;
      }
    }
    const int symbol = rng.uniform_int(static_cast<int>(vowels.size()));
    const detail::Vowel& vowel = vowels[static_cast<std::size_t>(symbol)];
    std::size_t seg_len = static_cast<std::size_t>(rng.uniform(0.30, 0.75) * sr);
    seg_len = std::min(seg_len, total_samples - cursor);
    if (seg_len < static_cast<std::size_t>(2 * fade)) {
      break;
    }

    const double seg_f0 = spk.register_hz * declination * rng.uniform(0.97, 1.03);
    declination = std::max(0.95, declination - rng.uniform(0.005, 0.02));
    const double vib_rate = rng.uniform(4.5, 5.5);
    const double vib_depth = rng.uniform(0.01, 0.02);
    const double vib_phase = rng.uniform(0.0, 2.0 * M_PI);

    // Harmonic amplitudes are fixed per segment, sampled from the envelope
    // at the segment's mean pitch.
    const int num_harm = static_cast<int>(std::floor(11000.0 / (seg_f0 * 1.03)));
    std::vector<double> amp(static_cast<std::size_t>(num_harm));
    double power = 0.0;
    for (int k = 1; k <= num_harm; ++k) {
      const double db = detail::envelope_db(k * seg_f0, vowel, spk.formant_scale, tilt);
      amp[static_cast<std::size_t>(k - 1)] = std::pow(10.0, db / 20.0);
      power += amp[static_cast<std::size_t>(k - 1)] * amp[static_cast<std::size_t>(k - 1)];
    }
    const double target_rms = 0.12 * std::pow(10.0, rng.uniform(-1.5, 1.5) / 20.0);
    const double norm = target_rms / std::sqrt(power / 2.0);

    std::vector<double> phase(static_cast<std::size_t>(num_harm));
    for (int k = 0; k < num_harm; ++k) {
      phase[static_cast<std::size_t>(k)] = rng.uniform(0.0, 2.0 * M_PI);
    }

    for (std::size_t n = 0; n < seg_len; ++n) {
      const double tsec = static_cast<double>(n) / sr;
      const double f0 = seg_f0 * (1.0 + vib_depth * std::sin(2.0 * M_PI * vib_rate * tsec +
                                                             vib_phase));
      double s = 0.0;
      for (int k = 0; k < num_harm; ++k) {
        phase[static_cast<std::size_t>(k)] +=
            2.0 * M_PI * (k + 1) * f0 / sr;
        s += amp[static_cast<std::size_t>(k)] * std::sin(phase[static_cast<std::size_t>(k)]);
      }
      double gain = norm;
      if (n < static_cast<std::size_t>(fade)) {
        gain *= 0.5 - 0.5 * std::cos(M_PI * static_cast<double>(n) / fade);
      }
      if (n + 1 > seg_len - static_cast<std::size_t>(fade)) {
        const std::size_t r = seg_len - n - 1;
        gain *= 0.5 - 0.5 * std::cos(M_PI * static_cast<double>(r) / fade);
      }
      audio[cursor + n] = s * gain;
      f0_per_sample[cursor + n] = f0;
    }

    SegmentAlignment seg;
    seg.symbol = symbol;
    seg.start_sample = cursor;
    seg.end_sample = cursor + seg_len;
    utt.segments.push_back(seg);
    cursor += seg_len;
  }

  for (std::size_t n = 0; n < total_samples; ++n) {
    audio[n] += cfg.noise_rms * rng.normal();
  }
  double peak = 0.0;
  for (double v : audio) {
    peak = std::max(peak, std::abs(v));
  }
  if (peak > 0.89) {
    const double g = 0.89 / peak;
    for (double& v : audio) {
      v *= g;
    }
  }
  utt.wave.samples = std::move(audio);

  // Frame-level ground truth, sampled at frame midpoints. Frames inside a
  // fade or a pause are unvoiced.
  const std::size_t num_frames = total_samples / static_cast<std::size_t>(hop);
  utt.f0_frames = VecD::Zero(static_cast<Eigen::Index>(num_frames));
  utt.voiced_frames.assign(num_frames, 0);
  for (std::size_t t = 0; t < num_frames; ++t) {
    const std::size_t center = t * static_cast<std::size_t>(hop) +
                               static_cast<std::size_t>(hop) / 2;
    for (const SegmentAlignment& seg : utt.segments) {
      if (center >= seg.start_sample + static_cast<std::size_t>(fade) &&
          center + static_cast<std::size_t>(fade) < seg.end_sample) {
        utt.f0_frames[static_cast<Eigen::Index>(t)] = f0_per_sample[center];
        utt.voiced_frames[t] = 1;
        break;
      }
    }
  }
  return utt;
}

inline std::vector<SpeakerProfile> make_speakers(const CorpusConfig& cfg) {
  std::vector<SpeakerProfile> speakers;
  speakers.reserve(static_cast<std::size_t>(cfg.num_speakers));
  for (int s = 0; s < cfg.num_speakers; ++s) {
    SpeakerProfile p;
    p.id = "spk" + std::to_string(s);
    p.register_hz = cfg.base_register_hz * std::pow(cfg.register_ratio, s);
    p.formant_scale = cfg.base_formant_scale * std::pow(cfg.formant_ratio, s);
    p.tilt_db_per_octave = cfg.tilt_db_per_octave;
    speakers.push_back(p);
  }
  return speakers;
}

inline SynthCorpus generate_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  SynthCorpus corpus;
  corpus.config = cfg;
  corpus.speakers = make_speakers(cfg);
  for (const SpeakerProfile& spk : corpus.speakers) {
    for (int u = 0; u < cfg.utterances_per_speaker; ++u) {
      const std::string utt_id = spk.id + "_utt" + std::to_string(u);
      corpus.utterances.push_back(synthesize_utterance(cfg, spk, utt_id));
    }
  }
  return corpus;
}

/// Writes wavs/, per-utterance ground-truth pitch (.lscf, frames by
/// [f0, voiced]), segment alignments, and a manifest of
/// utterance_id <TAB> wav_path <TAB> speaker_id lines.
inline void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "wavs");
  fs::create_directories(dir / "f0");

  std::string manifest;
  std::string alignments;
  for (const SynthUtterance& utt : corpus.utterances) {
    const fs::path wav_path = dir / "wavs" / (utt.utterance_id + ".wav");
    wavio::write_wav(wav_path.string(), utt.wave, wavio::WavEncoding::kFloat32);

    MatD truth(utt.f0_frames.size(), 2);
    for (Eigen::Index t = 0; t < utt.f0_frames.size(); ++t) {
      truth(t, 0) = utt.f0_frames[t];
      truth(t, 1) = utt.voiced_frames[static_cast<std::size_t>(t)];
    }
    write_matrix_file((dir / "f0" / (utt.utterance_id + ".lscf")).string(), truth);

    manifest += utt.utterance_id + "\t" + wav_path.string() + "\t" + utt.speaker_id + "\n";
    for (const SegmentAlignment& seg : utt.segments) {
      alignments += utt.utterance_id + "\t" + std::to_string(seg.symbol) + "\t" +
                    std::to_string(seg.start_sample) + "\t" + std::to_string(seg.end_sample) +
                    "\n";
    }
  }
  binio::write_file_atomic((dir / "manifest.tsv").string(), manifest);
  binio::write_file_atomic((dir / "alignments.tsv").string(), alignments);

  std::string speakers_txt;
  for (const SpeakerProfile& p : corpus.speakers) {
    speakers_txt += p.id + "\t" + std::to_string(p.register_hz) + "\t" +
                    std::to_string(p.formant_scale) + "\t" +
                    std::to_string(p.tilt_db_per_octave) + "\n";
  }
  binio::write_file_atomic((dir / "speakers.tsv").string(), speakers_txt);
}

}  // namespace lsc

#endif  // LSCODEC_SYNTHCORPUS_HPP
