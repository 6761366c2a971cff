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

#include "jmla/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include <fftw3.h>

namespace jmla {

void FrontendConfig::validate() const {
  if (!(sample_rate > 0.0)) throw std::invalid_argument("frontend: sample_rate must be positive");
  if (window == 0 || hop == 0) throw std::invalid_argument("frontend: window and hop must be positive");
  if (n_fft < window) throw std::invalid_argument("frontend: n_fft smaller than window");
  if (mel_bins == 0 || mel_bins % kPatchSize != 0) {
    throw std::invalid_argument("frontend: mel_bins must be a positive multiple of 16");
  }
  if (!(log_floor > 0.0)) throw std::invalid_argument("frontend: log_floor must be positive");
  if (f_min < 0.0 || upper_frequency() <= f_min || upper_frequency() > sample_rate / 2.0) {
    throw std::invalid_argument("frontend: invalid mel frequency range");
  }
}

void Waveform::validate() const {
  if (!(sample_rate > 0.0)) throw std::invalid_argument("waveform: sample_rate must be positive");
  if (samples.empty()) throw std::invalid_argument("waveform: no samples");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_filterbank(const FrontendConfig& cfg) {
  const std::size_t n_bins = cfg.n_fft / 2 + 1;
  const double lo = hz_to_mel(cfg.f_min);
  const double hi = hz_to_mel(cfg.upper_frequency());
  std::vector<double> edges(cfg.mel_bins + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) /
                                  static_cast<double>(cfg.mel_bins + 1));
  }
  std::vector<double> bank(cfg.mel_bins * n_bins, 0.0);
  for (std::size_t m = 0; m < cfg.mel_bins; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    const double height = 2.0 / (right - left);
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.n_fft);
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      bank[m * n_bins + k] = w * height;
    }
  }
  return bank;
}

namespace {

std::mutex g_fftw_planner;

}  // namespace

Spectrogram log_mel(const Waveform& wave, const FrontendConfig& cfg) {
  cfg.validate();
  wave.validate();
  if (wave.sample_rate != cfg.sample_rate) {
    throw std::invalid_argument("log_mel: waveform at " + std::to_string(wave.sample_rate) +
                                " Hz, frontend expects " + std::to_string(cfg.sample_rate));
  }
  if (wave.samples.size() < cfg.window) {
    throw std::invalid_argument("log_mel: waveform shorter than one analysis window");
  }
  const std::size_t frames = 1 + (wave.samples.size() - cfg.window) / cfg.hop;
  const std::size_t padded = (frames + kPatchSize - 1) / kPatchSize * kPatchSize;
  const std::size_t n_bins = cfg.n_fft / 2 + 1;
  const std::vector<double> bank = mel_filterbank(cfg);

  std::vector<double> hann(cfg.window);
  for (std::size_t n = 0; n < cfg.window; ++n) {
    hann[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                   static_cast<double>(cfg.window));
  }

  double* frame = fftw_alloc_real(cfg.n_fft);
  fftw_complex* spectrum = fftw_alloc_complex(n_bins);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(g_fftw_planner);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(cfg.n_fft), frame, spectrum, FFTW_ESTIMATE);
  }

  Spectrogram out;
  out.frames = padded;
  out.bins = cfg.mel_bins;
  out.valid_frames = frames;
  out.values.assign(padded * cfg.mel_bins, std::log(cfg.log_floor));
  std::vector<double> magnitude(n_bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = wave.samples.data() + t * cfg.hop;
    for (std::size_t n = 0; n < cfg.window; ++n) frame[n] = src[n] * hann[n];
    std::fill(frame + cfg.window, frame + cfg.n_fft, 0.0);
    fftw_execute(plan);
    for (std::size_t k = 0; k < n_bins; ++k) {
      magnitude[k] = std::hypot(spectrum[k][0], spectrum[k][1]);
    }
    for (std::size_t m = 0; m < cfg.mel_bins; ++m) {
      const double* w = bank.data() + m * n_bins;
      double e = 0.0;
      for (std::size_t k = 0; k < n_bins; ++k) e += w[k] * magnitude[k];
      out.values[t * cfg.mel_bins + m] = std::log(e + cfg.log_floor);
    }
  }

  {
    std::lock_guard<std::mutex> lock(g_fftw_planner);
    fftw_destroy_plan(plan);
  }
  fftw_free(frame);
  fftw_free(spectrum);
  return out;
}

PatchSequence patchify(const Spectrogram& spec) {
  if (spec.frames == 0 || spec.bins == 0 || spec.frames % kPatchSize != 0 ||
      spec.bins % kPatchSize != 0) {
    throw DimensionError("patchify: spectrogram " + std::to_string(spec.frames) + "x" +
                         std::to_string(spec.bins) + " is not a multiple of 16 in both axes");
  }
  if (spec.values.size() != spec.frames * spec.bins) {
    throw DimensionError("patchify: value count does not match dimensions");
  }
  PatchSequence seq;
  seq.time_patches = spec.frames / kPatchSize;
  seq.freq_patches = spec.bins / kPatchSize;
  const std::size_t count = seq.time_patches * seq.freq_patches;
  std::vector<double> values(count * kPatchValues);
  for (std::size_t tp = 0; tp < seq.time_patches; ++tp) {
    for (std::size_t fp = 0; fp < seq.freq_patches; ++fp) {
      const std::size_t p = tp * seq.freq_patches + fp;
      seq.cells.push_back({tp, fp});
      for (std::size_t dt = 0; dt < kPatchSize; ++dt) {
        const double* src = spec.values.data() + (tp * kPatchSize + dt) * spec.bins + fp * kPatchSize;
        std::copy_n(src, kPatchSize, values.data() + p * kPatchValues + dt * kPatchSize);
      }
    }
  }
  seq.values = Tensor::matrix(count, kPatchValues, std::move(values));
  return seq;
}

Spectrogram unpatchify(const PatchSequence& patches, std::size_t frames, std::size_t bins) {
  const std::size_t count = patches.count();
  if (!patches.values.defined() || count * kPatchValues != frames * bins ||
      patches.values.size() != count * kPatchValues || frames % kPatchSize != 0 ||
      bins % kPatchSize != 0 || patches.freq_patches * kPatchSize != bins) {
    throw DimensionError("unpatchify: " + std::to_string(count) + " patches cannot fill " +
                         std::to_string(frames) + "x" + std::to_string(bins));
  }
  Spectrogram spec;
  spec.frames = frames;
  spec.bins = bins;
  spec.valid_frames = frames;
  spec.values.assign(frames * bins, 0.0);
  auto v = patches.values.values();
  for (std::size_t p = 0; p < count; ++p) {
    const GridCell cell = patches.cells[p];
    for (std::size_t dt = 0; dt < kPatchSize; ++dt) {
      std::copy_n(v.data() + p * kPatchValues + dt * kPatchSize, kPatchSize,
                  spec.values.data() + (cell.time * kPatchSize + dt) * bins + cell.freq * kPatchSize);
    }
  }
  return spec;
}

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw std::runtime_error("read_wav: " + path + " is not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint32_t rate = 0;
  Waveform wave;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = read_u32(bytes.data() + pos + 4);
    const unsigned char* body = bytes.data() + pos + 8;
    if (pos + 8 + len > bytes.size()) throw std::runtime_error("read_wav: truncated chunk");
    if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0) {
      if (len < 16) throw std::runtime_error("read_wav: short fmt chunk");
      const std::uint16_t format = read_u16(body);
      const std::uint16_t channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      const std::uint16_t bits = read_u16(body + 14);
      if (format != 1 || channels != 1 || bits != 16) {
        throw std::runtime_error("read_wav: only mono 16-bit PCM is supported");
      }
      have_fmt = true;
    } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
      if (!have_fmt) throw std::runtime_error("read_wav: data chunk before fmt chunk");
      wave.samples.resize(len / 2);
      for (std::size_t i = 0; i < wave.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(body + 2 * i));
        wave.samples[i] = static_cast<double>(raw) / 32768.0;
      }
      wave.sample_rate = static_cast<double>(rate);
      wave.validate();
      return wave;
    }
    pos += 8 + len + (len & 1u);
  }
  throw std::runtime_error("read_wav: no data chunk in " + path);
}

void write_wav(const std::string& path, const Waveform& wave) {
  wave.validate();
  std::string data;
  for (double s : wave.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    put_u16(data, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
  const auto rate = static_cast<std::uint32_t>(wave.sample_rate);
  std::string out = "RIFF";
  put_u32(out, static_cast<std::uint32_t>(36 + data.size()));
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  out += data;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_wav: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace jmla
