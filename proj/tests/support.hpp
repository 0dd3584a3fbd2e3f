// tests/support.hpp

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

#ifndef MODFUSE_TESTS_SUPPORT_HPP_
#define MODFUSE_TESTS_SUPPORT_HPP_

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "modfuse/tensor.hpp"

namespace testsupport {

// Unique scratch directory under the system temp root; removed on
// destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("modfuse_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

inline double max_abs_diff(const std::vector<double>& a,
                           const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::fabs(a[i] - b[i]));
  return worst;
}

inline double max_abs_diff(const modfuse::Tensor& a, const modfuse::Tensor& b) {
  return max_abs_diff(a.values(), b.values());
}

inline bool bitwise_equal(const modfuse::Tensor& a, const modfuse::Tensor& b) {
  if (a.shape() != b.shape()) return false;
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i)
    if (av[i] != bv[i]) return false;
  return true;
}

// Minimal PCM16 RIFF/WAVE writer for fixtures.
inline void write_wav_pcm16(const std::string& path,
                            const std::vector<double>& samples,
                            int sample_rate, int channels = 1) {
  const std::uint32_t data_len =
      static_cast<std::uint32_t>(samples.size() * 2);
  std::string out;
  auto u32 = [&out](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  auto u16 = [&out](std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
  };
  out += "RIFF";
  u32(36 + data_len);
  out += "WAVE";
  out += "fmt ";
  u32(16);
  u16(1);  // PCM
  u16(static_cast<std::uint16_t>(channels));
  u32(static_cast<std::uint32_t>(sample_rate));
  u32(static_cast<std::uint32_t>(sample_rate * channels * 2));
  u16(static_cast<std::uint16_t>(channels * 2));
  u16(16);
  out += "data";
  u32(data_len);
  for (double s : samples) {
    const double clamped = std::max(-1.0, std::min(1.0, s));
    const std::int16_t q = static_cast<std::int16_t>(
        std::lround(clamped * 32767.0));
    out.push_back(static_cast<char>(q & 0xff));
    out.push_back(static_cast<char>((q >> 8) & 0xff));
  }
  std::ofstream f(path, std::ios::binary);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

}  // namespace testsupport

#endif  // MODFUSE_TESTS_SUPPORT_HPP_
