// src/audio_io.cpp

// Copyright 2026  OVR-Lab Authors

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

#include "ovr/audio_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ovr {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff),
                     static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

}  // namespace

AudioBuffer read_wav(const std::string& path, int channel) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_wav: cannot open " + path);
  char tag[5] = {0};
  in.read(tag, 4);
  if (std::strncmp(tag, "RIFF", 4) != 0)
    throw std::runtime_error("read_wav: not a RIFF file: " + path);
  read_u32(in);  // riff size
  in.read(tag, 4);
  if (std::strncmp(tag, "WAVE", 4) != 0)
    throw std::runtime_error("read_wav: not a WAVE file: " + path);

  uint16_t format = 0, num_channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  std::vector<char> data;
  bool have_fmt = false, have_data = false;
  while (in.read(tag, 4)) {
    const uint32_t size = read_u32(in);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      format = read_u16(in);
      num_channels = read_u16(in);
      sample_rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      data.resize(size);
      in.read(data.data(), size);
      have_data = true;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!have_fmt || !have_data)
    throw std::runtime_error("read_wav: missing fmt/data chunk in " + path);
  if (sample_rate != kPipelineSampleRate)
    throw std::runtime_error("read_wav: unsupported sample rate " +
                             std::to_string(sample_rate) + " in " + path +
                             " (expected 16000, no resampling)");
  if (num_channels == 0 || channel < 0 || channel >= num_channels)
    throw std::runtime_error("read_wav: channel " + std::to_string(channel) +
                             " out of range in " + path);

  AudioBuffer buf;
  buf.sample_rate_hz = static_cast<int>(sample_rate);
  if (format == kFormatPcm && bits == 16) {
    const std::size_t stride = 2u * num_channels;
    const std::size_t frames = data.size() / stride;
    buf.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
      const unsigned char* p = reinterpret_cast<unsigned char*>(data.data()) +
                               i * stride + 2u * channel;
      const int16_t v = static_cast<int16_t>(p[0] | (p[1] << 8));
      buf.samples[i] = static_cast<double>(v) / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t stride = 4u * num_channels;
    const std::size_t frames = data.size() / stride;
    buf.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
      float v;
      std::memcpy(&v, data.data() + i * stride + 4u * channel, 4);
      buf.samples[i] = static_cast<double>(v);
    }
  } else {
    throw std::runtime_error("read_wav: unsupported codec (format " +
                             std::to_string(format) + ", " + std::to_string(bits) +
                             " bit) in " + path);
  }
  if (buf.samples.empty())
    throw std::runtime_error("read_wav: empty data chunk in " + path);
  return buf;
}

void write_wav(const std::string& path, const AudioBuffer& buf, WavFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_wav: cannot open " + path);
  const uint16_t bits = format == WavFormat::kPcm16 ? 16 : 32;
  const uint16_t fmt_code = format == WavFormat::kPcm16 ? kFormatPcm : kFormatFloat;
  const uint32_t bytes_per_sample = bits / 8;
  const uint32_t data_size =
      static_cast<uint32_t>(buf.samples.size() * bytes_per_sample);

  out.write("RIFF", 4);
  write_u32(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, fmt_code);
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<uint32_t>(buf.sample_rate_hz));
  write_u32(out, static_cast<uint32_t>(buf.sample_rate_hz) * bytes_per_sample);
  write_u16(out, static_cast<uint16_t>(bytes_per_sample));
  write_u16(out, bits);
  out.write("data", 4);
  write_u32(out, data_size);
  if (format == WavFormat::kPcm16) {
    for (double s : buf.samples) {
      const double clamped = std::max(-1.0, std::min(s, 32767.0 / 32768.0));
      const int16_t v = static_cast<int16_t>(std::lrint(clamped * 32768.0));
      write_u16(out, static_cast<uint16_t>(v));
    }
  } else {
    for (double s : buf.samples) {
      const float v = static_cast<float>(s);
      char b[4];
      std::memcpy(b, &v, 4);
      out.write(b, 4);
    }
  }
  if (!out) throw std::runtime_error("write_wav: write failed for " + path);
}

std::pair<AudioBuffer, NormalizationStats> normalize_zscore(const AudioBuffer& buf) {
  if (buf.samples.size() < 2)
    throw std::invalid_argument("normalize_zscore: need at least 2 samples");
  double mean = 0.0;
  for (double s : buf.samples) mean += s;
  mean /= static_cast<double>(buf.samples.size());
  double var = 0.0;
  for (double s : buf.samples) var += (s - mean) * (s - mean);
  var /= static_cast<double>(buf.samples.size());
  if (var == 0.0) throw std::invalid_argument("normalize_zscore: degenerate signal");
  NormalizationStats stats{mean, std::sqrt(var)};
  AudioBuffer out;
  out.sample_rate_hz = buf.sample_rate_hz;
  out.samples.resize(buf.samples.size());
  for (std::size_t i = 0; i < buf.samples.size(); ++i)
    out.samples[i] = (buf.samples[i] - stats.mean) / stats.std;
  return {std::move(out), stats};
}

AudioBuffer denormalize(const AudioBuffer& buf, const NormalizationStats& s) {
  AudioBuffer out;
  out.sample_rate_hz = buf.sample_rate_hz;
  out.samples.resize(buf.samples.size());
  for (std::size_t i = 0; i < buf.samples.size(); ++i)
    out.samples[i] = buf.samples[i] * s.std + s.mean;
  return out;
}

}  // namespace ovr
