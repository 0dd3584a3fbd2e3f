// modfuse/audio_features.hpp

// Copyright 2026  The modfuse authors

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

#ifndef MODFUSE_AUDIO_FEATURES_HPP_
#define MODFUSE_AUDIO_FEATURES_HPP_

#include <string>
#include <vector>

#include "modfuse/tensor.hpp"

namespace modfuse {

struct Waveform {
  std::vector<double> samples;  // [-1, 1]
  int sample_rate = 0;
};

// Mel extraction parameters. The defaults follow the usual TTS-style
// preprocessing: 22.05 kHz input, ~50 ms Hann window, ~12.5 ms hop,
// amplitude spectra mapped through 80 triangular mel filters, dB-scaled and
// min-max normalized, then one frame kept in every 16.
struct MelConfig {
  int sample_rate = 22050;
  int n_fft = 2048;  // power of two
  int hop = 276;
  int win = 1102;  // <= n_fft, zero-padded to n_fft
  double preemphasis = 0.97;
  int n_mels = 80;  // fixed by the feature contract
  int reduction = 16;
  double db_floor = -100.0;
  double db_range = 100.0;

  void validate() const;
  // Canonical key=value rendering, used for cache fingerprints.
  std::string fingerprint() const;
};

// 16-bit PCM RIFF/WAVE reader; stereo is averaged down to mono.
Waveform read_wav(const std::string& path);

// y[0] = x[0]; y[n] = x[n] - coeff * x[n-1].
Waveform preemphasis(const Waveform& w, double coeff);

// Magnitude spectrogram [T_frames, n_fft/2+1]: reflect-padded, Hann-windowed
// frames at hop spacing, T_frames = 1 + floor(len / hop).
Tensor stft_magnitude(const Waveform& w, const MelConfig& cfg);

// 80 triangular filters on the HTK mel scale, [n_mels, n_fft/2+1].
Tensor mel_filterbank(const MelConfig& cfg);

// Full pipeline: preemphasis -> stft -> mel projection -> dB ->
// normalization to [0,1] -> frame reduction. Result is [T, 80].
Tensor extract_mel(const Waveform& w, const MelConfig& cfg);

// Keeps rows 0, factor, 2*factor, ... -> [ceil(T/factor), C].
Tensor reduce_frames(const Tensor& spec, int factor);

// Mel matrices persist as plain CSV, T rows by 80 full-precision decimals.
void write_mel_csv(const std::string& path, const Tensor& mel);
Tensor read_mel_csv(const std::string& path);

namespace fft_detail {
// In-place iterative radix-2 FFT over interleaved complex (re, im) pairs;
// n must be a power of two.
void fft_complex(std::vector<double>& re, std::vector<double>& im);
}  // namespace fft_detail

}  // namespace modfuse

#endif  // MODFUSE_AUDIO_FEATURES_HPP_
