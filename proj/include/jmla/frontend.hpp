/*
 * Copyright 2026 The JMLA Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Waveform -> log-mel spectrogram -> 16x16 patch grid.

#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "jmla/tensor.hpp"

namespace jmla {

struct FrontendConfig {
  double sample_rate = 16000.0;
  std::size_t window = 400;
  std::size_t hop = 160;
  std::size_t n_fft = 512;
  std::size_t mel_bins = 64;
  double f_min = 0.0;
  double f_max = 0.0;  // 0 selects Nyquist
  double log_floor = 1e-10;

  void validate() const;
  double upper_frequency() const { return f_max > 0.0 ? f_max : sample_rate / 2.0; }
};

inline constexpr std::size_t kPatchSize = 16;
inline constexpr std::size_t kPatchValues = kPatchSize * kPatchSize;

struct Waveform {
  std::vector<double> samples;
  double sample_rate = 0.0;

  void validate() const;
};

// Time-major T x F log energies. Frames past valid_frames are padding.
struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t valid_frames = 0;
  std::vector<double> values;

  double at(std::size_t t, std::size_t f) const { return values[t * bins + f]; }
};

struct GridCell {
  std::size_t time = 0;
  std::size_t freq = 0;
  bool operator==(const GridCell&) const = default;
};

// P patches as a [P x 256] tensor, row-major over the (time, freq) patch grid.
struct PatchSequence {
  std::size_t time_patches = 0;
  std::size_t freq_patches = 0;
  Tensor values;
  std::vector<GridCell> cells;

  std::size_t count() const { return cells.size(); }
};

// Hertz <-> HTK mel.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Area-normalised triangular filters, [mel_bins x (n_fft/2 + 1)].
std::vector<double> mel_filterbank(const FrontendConfig& cfg);

Spectrogram log_mel(const Waveform& wave, const FrontendConfig& cfg = {});
PatchSequence patchify(const Spectrogram& spec);
Spectrogram unpatchify(const PatchSequence& patches, std::size_t frames, std::size_t bins);

// Mono 16-bit PCM RIFF/WAVE.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& wave);

}  // namespace jmla
