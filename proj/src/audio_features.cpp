// modfuse/audio_features.cpp

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

#include "modfuse/audio_features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "modfuse/error.hpp"

namespace modfuse {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// Reflect index i (which may fall outside [0, n)) back into range without
// repeating the edge sample; bounces as many times as needed.
std::size_t reflect_index(long long i, long long n) {
  if (n == 1) return 0;
  const long long period = 2 * (n - 1);
  long long m = i % period;
  if (m < 0) m += period;
  if (m >= n) m = period - m;
  return static_cast<std::size_t>(m);
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

void MelConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("mel: sample_rate must be positive");
  if (!is_power_of_two(n_fft))
    throw ConfigError("mel: n_fft must be a power of two, got " +
                      std::to_string(n_fft));
  if (hop <= 0) throw ConfigError("mel: hop must be positive");
  if (win <= 0 || win > n_fft)
    throw ConfigError("mel: window must satisfy 0 < win <= n_fft");
  if (preemphasis < 0.0 || preemphasis >= 1.0)
    throw ConfigError("mel: preemphasis must lie in [0,1)");
  if (n_mels != 80)
    throw ConfigError("mel: the feature contract fixes n_mels at 80, got " +
                      std::to_string(n_mels));
  if (reduction < 1) throw ConfigError("mel: reduction must be >= 1");
  if (db_range <= 0.0) throw ConfigError("mel: db_range must be positive");
}

std::string MelConfig::fingerprint() const {
  std::ostringstream os;
  os << "sample_rate=" << sample_rate << ";n_fft=" << n_fft << ";hop=" << hop
     << ";win=" << win << ";preemphasis=" << preemphasis
     << ";n_mels=" << n_mels << ";reduction=" << reduction
     << ";db_floor=" << db_floor << ";db_range=" << db_range;
  return os.str();
}

Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("wav: cannot read " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError("wav: " + path + " is not a RIFF/WAVE file");

  int channels = 0, sample_rate = 0, bits = 0;
  std::size_t data_begin = 0, data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* tag = reinterpret_cast<const char*>(&bytes[pos]);
    const std::uint32_t chunk_len = read_u32(&bytes[pos + 4]);
    const std::size_t body = pos + 8;
    if (body + chunk_len > bytes.size())
      throw DataError("wav: " + path + " has a truncated chunk");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw DataError("wav: " + path + " fmt chunk too short");
      const std::uint16_t format = read_u16(&bytes[body]);
      channels = read_u16(&bytes[body + 2]);
      sample_rate = static_cast<int>(read_u32(&bytes[body + 4]));
      bits = read_u16(&bytes[body + 14]);
      if (format != 1)
        throw DataError("wav: " + path + ": only PCM is supported");
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data_begin = body;
      data_len = chunk_len;
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (channels == 0 || data_begin == 0)
    throw DataError("wav: " + path + " is missing fmt/data chunks");
  if (bits != 16)
    throw DataError("wav: " + path + ": only 16-bit PCM is supported, got " +
                    std::to_string(bits) + " bits");
  if (channels != 1 && channels != 2)
    throw DataError("wav: " + path + ": expected mono or stereo, got " +
                    std::to_string(channels) + " channels");

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * 2;
  const std::size_t n = data_len / frame_bytes;
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int ch = 0; ch < channels; ++ch) {
      const std::size_t off = data_begin + i * frame_bytes +
                              static_cast<std::size_t>(ch) * 2;
      const std::int16_t s =
          static_cast<std::int16_t>(bytes[off] | (bytes[off + 1] << 8));
      acc += static_cast<double>(s) / 32768.0;
    }
    w.samples[i] = acc / channels;
  }
  return w;
}

Waveform preemphasis(const Waveform& w, double coeff) {
  if (coeff < 0.0 || coeff >= 1.0)
    throw ConfigError("preemphasis: coefficient must lie in [0,1)");
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    out.samples[i] =
        i == 0 ? w.samples[0] : w.samples[i] - coeff * w.samples[i - 1];
  return out;
}

namespace fft_detail {

void fft_complex(std::vector<double>& re, std::vector<double>& im) {
  const std::size_t n = re.size();
  if (!is_power_of_two(static_cast<int>(n)))
    throw Error("fft: size must be a power of two");
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

}  // namespace fft_detail

Tensor stft_magnitude(const Waveform& w, const MelConfig& cfg) {
  cfg.validate();
  const long long len = static_cast<long long>(w.samples.size());
  if (len < cfg.win)
    throw DataError("stft: signal length " + std::to_string(len) +
                    " is shorter than one window (" + std::to_string(cfg.win) +
                    ")");
  const int n_fft = cfg.n_fft;
  const int n_bins = n_fft / 2 + 1;
  const int n_frames = 1 + static_cast<int>(len / cfg.hop);
  const int pad = n_fft / 2;

  // Periodic Hann, zero-padded symmetrically to n_fft.
  std::vector<double> window(static_cast<std::size_t>(n_fft), 0.0);
  const int off = (n_fft - cfg.win) / 2;
  for (int i = 0; i < cfg.win; ++i)
    window[static_cast<std::size_t>(off + i)] =
        0.5 * (1.0 - std::cos(2.0 * kPi * i / cfg.win));

  std::vector<double> values(static_cast<std::size_t>(n_frames) * n_bins);
  std::vector<double> re(static_cast<std::size_t>(n_fft));
  std::vector<double> im(static_cast<std::size_t>(n_fft));
  for (int t = 0; t < n_frames; ++t) {
    const long long start = static_cast<long long>(t) * cfg.hop - pad;
    for (int i = 0; i < n_fft; ++i) {
      const std::size_t src = reflect_index(start + i, len);
      re[static_cast<std::size_t>(i)] =
          w.samples[src] * window[static_cast<std::size_t>(i)];
      im[static_cast<std::size_t>(i)] = 0.0;
    }
    fft_detail::fft_complex(re, im);
    for (int k = 0; k < n_bins; ++k)
      values[static_cast<std::size_t>(t) * n_bins + k] =
          std::hypot(re[static_cast<std::size_t>(k)],
                     im[static_cast<std::size_t>(k)]);
  }
  return Tensor({n_frames, n_bins}, std::move(values));
}

Tensor mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const int n_bins = cfg.n_fft / 2 + 1;
  const int m = cfg.n_mels;
  const double mel_max = hz_to_mel(cfg.sample_rate / 2.0);
  std::vector<double> centers(static_cast<std::size_t>(m) + 2);
  for (int i = 0; i < m + 2; ++i)
    centers[static_cast<std::size_t>(i)] =
        mel_to_hz(mel_max * i / (m + 1));

  std::vector<double> values(static_cast<std::size_t>(m) * n_bins, 0.0);
  const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.n_fft;
  for (int i = 0; i < m; ++i) {
    const double lo = centers[static_cast<std::size_t>(i)];
    const double mid = centers[static_cast<std::size_t>(i) + 1];
    const double hi = centers[static_cast<std::size_t>(i) + 2];
    double row_sum = 0.0;
    for (int k = 0; k < n_bins; ++k) {
      const double f = k * bin_hz;
      double v = 0.0;
      if (f > lo && f < hi)
        v = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      values[static_cast<std::size_t>(i) * n_bins + k] = v;
      row_sum += v;
    }
    if (row_sum <= 0.0)
      throw ConfigError(
          "mel_filterbank: filter " + std::to_string(i) +
          " collapses to zero width; n_mels is incompatible with the FFT "
          "resolution");
  }
  return Tensor({m, n_bins}, std::move(values));
}

Tensor extract_mel(const Waveform& w, const MelConfig& cfg) {
  cfg.validate();
  if (w.sample_rate != cfg.sample_rate)
    throw DataError("extract_mel: waveform sample rate " +
                    std::to_string(w.sample_rate) +
                    " does not match configured " +
                    std::to_string(cfg.sample_rate));
  const Waveform pre = preemphasis(w, cfg.preemphasis);
  const Tensor mag = stft_magnitude(pre, cfg);
  const Tensor bank = mel_filterbank(cfg);

  const int t = mag.rows(), n_bins = mag.cols(), m = cfg.n_mels;
  const auto& mv = mag.values();
  const auto& fb = bank.values();
  std::vector<double> mel(static_cast<std::size_t>(t) * m);
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < m; ++j) {
      double acc = 0.0;
      for (int k = 0; k < n_bins; ++k)
        acc += mv[static_cast<std::size_t>(i) * n_bins + k] *
               fb[static_cast<std::size_t>(j) * n_bins + k];
      // 20*log10 amplitude, clipped at the floor, then mapped to [0,1].
      const double db =
          acc > 0.0 ? std::max(20.0 * std::log10(acc), cfg.db_floor)
                    : cfg.db_floor;
      const double norm = (db - cfg.db_floor) / cfg.db_range;
      mel[static_cast<std::size_t>(i) * m + j] = std::clamp(norm, 0.0, 1.0);
    }
  }
  return reduce_frames(Tensor({t, m}, std::move(mel)), cfg.reduction);
}

Tensor reduce_frames(const Tensor& spec, int factor) {
  if (factor < 1) throw ConfigError("reduce_frames: factor must be >= 1");
  const int t = spec.rows(), c = spec.cols();
  const int kept = (t + factor - 1) / factor;
  std::vector<double> values(static_cast<std::size_t>(kept) * c);
  const auto& sv = spec.values();
  for (int i = 0; i < kept; ++i)
    std::copy_n(sv.begin() + static_cast<std::size_t>(i) * factor * c, c,
                values.begin() + static_cast<std::size_t>(i) * c);
  return Tensor({kept, c}, std::move(values));
}

void write_mel_csv(const std::string& path, const Tensor& mel) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("mel: cannot write " + path);
  const int t = mel.rows(), c = mel.cols();
  char buf[40];
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < c; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", mel.at(i, j));
      if (j) f << ',';
      f << buf;
    }
    f << '\n';
  }
}

Tensor read_mel_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("mel: cannot read " + path);
  std::vector<double> values;
  std::string line;
  int cols = -1, rows = 0;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    int n = 0;
    std::istringstream is(line);
    std::string cell;
    while (std::getline(is, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError("mel: " + path + " line " + std::to_string(line_no) +
                        ": bad number '" + cell + "'");
      }
      ++n;
    }
    if (cols < 0) cols = n;
    if (n != cols)
      throw DataError("mel: " + path + " line " + std::to_string(line_no) +
                      ": expected " + std::to_string(cols) + " columns, got " +
                      std::to_string(n));
    ++rows;
  }
  if (rows == 0) throw DataError("mel: " + path + " is empty");
  if (cols != 80)
    throw DataError("mel: " + path + " has " + std::to_string(cols) +
                    " columns, expected 80");
  for (double v : values)
    if (!(v >= 0.0 && v <= 1.0))
      throw DataError("mel: " + path + " has values outside [0,1]");
  return Tensor({rows, cols}, std::move(values));
}

}  // namespace modfuse
