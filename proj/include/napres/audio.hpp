// Copyright NAPReS contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <napres/error.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace napres {

/// Mono audio with its sample rate. Samples are nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 48000;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

enum class WavEncoding { kPcm16, kFloat32 };

/// How an SNR value maps to a noise level. kAmplitude: rms(noise) =
/// rms(signal) / snr. kPower: rms(noise) = rms(signal) / sqrt(snr).
enum class SnrMode { kAmplitude, kPower };

inline const char* to_string(SnrMode m) {
  return m == SnrMode::kAmplitude ? "amplitude" : "power";
}

inline double rms(std::span<const double> x) {
  if (x.empty()) throw Error("rms of empty signal");
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

inline double rms(const Waveform& w) { return rms(w.samples); }

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

/// splitmix64 finaliser; used to derive independent seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Reads RIFF/WAVE with PCM (8/16/24/32-bit) or IEEE float (32/64-bit)
/// samples. Multi-channel input is averaged to mono.
inline Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error("'" + path + "' is not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::uint32_t len = detail::read_u32(chunk + 4);
    std::size_t body = pos + 8;
    std::size_t avail = std::min<std::size_t>(len, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && avail >= 16) {
      format = detail::read_u16(chunk + 8);
      channels = detail::read_u16(chunk + 10);
      rate = detail::read_u32(chunk + 12);
      bits = detail::read_u16(chunk + 22);
      if (format == 0xFFFE && avail >= 26) {
        // WAVE_FORMAT_EXTENSIBLE: the subformat GUID starts with the tag.
        format = detail::read_u16(chunk + 32);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = avail;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt || data == nullptr) throw Error("'" + path + "' lacks fmt or data chunk");
  if (channels == 0 || rate == 0) throw Error("'" + path + "' has invalid fmt chunk");

  const bool pcm = format == 1;
  const bool flt = format == 3;
  if (!(pcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32)) &&
      !(flt && (bits == 32 || bits == 64))) {
    throw Error("'" + path + "' uses an unsupported encoding (format " +
                std::to_string(format) + ", " + std::to_string(bits) + " bits)");
  }

  const std::size_t bytes_per = bits / 8;
  const std::size_t frame_bytes = bytes_per * channels;
  const std::size_t frames = data_len / frame_bytes;
  if (frames == 0) throw Error("'" + path + "' contains no audio");

  auto sample_at = [&](const unsigned char* p) -> double {
    if (flt) {
      if (bits == 32) {
        float f;
        std::uint32_t u = detail::read_u32(p);
        std::memcpy(&f, &u, 4);
        return f;
      }
      std::uint64_t u = static_cast<std::uint64_t>(detail::read_u32(p)) |
                        (static_cast<std::uint64_t>(detail::read_u32(p + 4)) << 32);
      double d;
      std::memcpy(&d, &u, 8);
      return d;
    }
    switch (bits) {
      case 8: return (static_cast<int>(p[0]) - 128) / 128.0;
      case 16: return static_cast<std::int16_t>(detail::read_u16(p)) / 32768.0;
      case 24: {
        std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
        if (v & 0x800000) v -= 0x1000000;
        return v / 8388608.0;
      }
      default: return static_cast<std::int32_t>(detail::read_u32(p)) / 2147483648.0;
    }
  };

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const unsigned char* f = data + i * frame_bytes;
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) acc += sample_at(f + c * bytes_per);
    w.samples[i] = acc / channels;
  }
  return w;
}

/// Writes a mono WAV file. Returns the number of samples clipped to [-1, 1]
/// (always zero for float output).
inline std::size_t write_wav(const Waveform& w, const std::string& path,
                             WavEncoding enc = WavEncoding::kFloat32) {
  if (w.sample_rate <= 0) throw Error("sample rate must be positive");
  for (double v : w.samples) {
    if (!std::isfinite(v)) throw Error("cannot write non-finite samples");
  }
  const std::uint16_t bits = enc == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint16_t format = enc == WavEncoding::kPcm16 ? 1 : 3;
  const std::uint32_t data_len = static_cast<std::uint32_t>(w.samples.size() * (bits / 8));

  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  detail::put_u32(out, 36 + data_len);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, format);
  detail::put_u16(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * (bits / 8));
  detail::put_u16(out, bits / 8);
  detail::put_u16(out, bits);
  out += "data";
  detail::put_u32(out, data_len);

  std::size_t clipped = 0;
  for (double v : w.samples) {
    if (enc == WavEncoding::kPcm16) {
      if (v > 1.0 || v < -1.0) ++clipped;
      double c = std::clamp(v, -1.0, 1.0);
      long q = std::lround(c * 32768.0);
      q = std::clamp(q, -32768L, 32767L);
      detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else {
      float f = static_cast<float>(v);
      detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
  }

  std::ofstream o(path, std::ios::binary);
  if (!o) throw Error("cannot write '" + path + "'");
  o.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!o) throw Error("write failed for '" + path + "'");
  return clipped;
}

/// Standard normal deviates from mt19937_64 via Box-Muller. Implemented here
/// rather than with std::normal_distribution so streams match across
/// standard libraries.
class GaussianSource {
 public:
  static constexpr const char* kName = "mt19937_64/box-muller";

  explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform_open();
    double u2 = uniform_open();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  // (0, 1], 53-bit resolution.
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Returns w plus zero-mean Gaussian white noise scaled so that
/// rms(noise) = rms(w) / snr (amplitude mode). The noise vector is rescaled to
/// hit the target RMS exactly.
inline Waveform add_white_noise(const Waveform& w, double snr, std::uint64_t seed,
                                SnrMode mode = SnrMode::kAmplitude) {
  if (!(snr > 0.0)) throw Error("snr must be positive");
  if (w.empty()) throw Error("cannot add noise to an empty waveform");
  const double ratio = mode == SnrMode::kAmplitude ? snr : std::sqrt(snr);
  const double target = rms(w) / ratio;

  GaussianSource gauss(seed);
  std::vector<double> noise(w.size());
  for (double& v : noise) v = gauss();
  const double scale = target / rms(noise);

  Waveform out = w;
  for (std::size_t i = 0; i < out.size(); ++i) out.samples[i] += noise[i] * scale;
  return out;
}

}  // namespace napres
