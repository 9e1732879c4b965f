#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kinit/binio.hpp"
#include "kinit/error.hpp"

namespace kinit {

// The four Kinits, in the fixed class-index order used everywhere downstream.
enum class KinitLabel : int { Tizita = 0, Bati = 1, Ambassel = 2, Anchihoye = 3 };

inline constexpr int kNumClasses = 4;
inline constexpr int kCorpusRateHz = 16000;

inline const std::array<std::string_view, kNumClasses>& label_names() {
  static const std::array<std::string_view, kNumClasses> names{"Tizita", "Bati", "Ambassel",
                                                               "Anchihoye"};
  return names;
}

inline std::string_view label_name(KinitLabel label) {
  return label_names()[static_cast<std::size_t>(label)];
}

inline std::optional<KinitLabel> parse_label(std::string_view text) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
  };
  const std::string t = lower(text);
  for (int i = 0; i < kNumClasses; ++i) {
    if (t == lower(label_names()[static_cast<std::size_t>(i)])) {
      return static_cast<KinitLabel>(i);
    }
  }
  return std::nullopt;
}

// A clip as the rest of the pipeline sees it: normalized float samples in
// [-1, 1] plus the rate the file declared.
struct AudioClip {
  std::vector<float> samples;
  int sample_rate_hz = kCorpusRateHz;
  std::string source_id;
  std::optional<KinitLabel> label;

  double duration_s() const {
    return sample_rate_hz > 0 ? static_cast<double>(samples.size()) / sample_rate_hz : 0.0;
  }
};

struct WavInfo {
  int sample_rate_hz = 0;
  int channels = 0;
  std::uint64_t n_frames = 0;

  double duration_s() const {
    return sample_rate_hz > 0 ? static_cast<double>(n_frames) / sample_rate_hz : 0.0;
  }
};

namespace detail {

struct WavChunks {
  int format = 0;
  int channels = 0;
  int sample_rate = 0;
  int bits = 0;
  std::size_t data_offset = 0;
  std::size_t data_size = 0;
};

inline WavChunks parse_wav_chunks(const std::string& bytes, const std::string& name) {
  ByteReader r(bytes, Errc::MalformedContainer);
  require(bytes.size() >= 12, Errc::MalformedContainer, name + ": too short for RIFF header");
  require(r.str(4) == "RIFF", Errc::MalformedContainer, name + ": missing RIFF tag");
  r.u32();  // declared size; tolerated if inconsistent
  require(r.str(4) == "WAVE", Errc::MalformedContainer, name + ": missing WAVE tag");

  WavChunks out;
  bool have_fmt = false, have_data = false;
  while (r.remaining() >= 8) {
    const std::string id = r.str(4);
    const std::uint32_t size = r.u32();
    if (id == "fmt ") {
      require(size >= 16 && size <= r.remaining(), Errc::MalformedContainer,
              name + ": bad fmt chunk");
      const std::size_t next = std::min(r.pos() + size + (size & 1), bytes.size());
      out.format = r.u16();
      out.channels = r.u16();
      out.sample_rate = static_cast<int>(r.u32());
      r.u32();  // byte rate
      r.u16();  // block align
      out.bits = r.u16();
      have_fmt = true;
      r.seek(next);
    } else if (id == "data") {
      require(size <= r.remaining(), Errc::MalformedContainer, name + ": truncated data chunk");
      out.data_offset = r.pos();
      out.data_size = size;
      have_data = true;
      break;  // first data chunk wins
    } else {
      require(size <= r.remaining(), Errc::MalformedContainer,
              name + ": truncated chunk '" + id + "'");
      r.skip(std::min<std::size_t>(size + (size & 1), r.remaining()));
    }
  }
  require(have_fmt, Errc::MalformedContainer, name + ": no fmt chunk");
  require(have_data, Errc::MalformedContainer, name + ": no data chunk");
  require(out.channels > 0 && out.sample_rate > 0, Errc::MalformedContainer,
          name + ": bad fmt fields");
  require(out.format == 1, Errc::UnsupportedEncoding,
          name + ": only integer PCM (format 1) is supported");
  require(out.bits == 16, Errc::UnsupportedEncoding, name + ": only 16-bit samples supported");
  return out;
}

}  // namespace detail

// Header-only probe; does not touch the sample payload.
inline WavInfo wav_info(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  const auto c = detail::parse_wav_chunks(bytes, path.filename().string());
  WavInfo info;
  info.sample_rate_hz = c.sample_rate;
  info.channels = c.channels;
  info.n_frames = c.data_size / (static_cast<std::size_t>(c.channels) * 2);
  return info;
}

// 16-bit PCM WAV -> AudioClip. Samples are divided by 32768 so the most
// negative code maps to exactly -1.0; multi-channel input is downmixed by
// per-frame arithmetic mean.
inline AudioClip read_wav(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  const std::string name = path.filename().string();
  const auto c = detail::parse_wav_chunks(bytes, name);

  const std::size_t frame_bytes = static_cast<std::size_t>(c.channels) * 2;
  const std::size_t n_frames = c.data_size / frame_bytes;
  require(n_frames > 0, Errc::EmptyAudio, name + ": zero data frames");

  AudioClip clip;
  clip.sample_rate_hz = c.sample_rate;
  clip.source_id = path.stem().string();
  clip.samples.resize(n_frames);

  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + c.data_offset;
  for (std::size_t f = 0; f < n_frames; ++f) {
    double acc = 0.0;
    for (int ch = 0; ch < c.channels; ++ch) {
      const std::size_t o = f * frame_bytes + static_cast<std::size_t>(ch) * 2;
      const auto v = static_cast<std::int16_t>(p[o] | (p[o + 1] << 8));
      acc += static_cast<double>(v);
    }
    clip.samples[f] = static_cast<float>(acc / c.channels / 32768.0);
  }
  return clip;
}

// Mono 16-bit PCM writer with the canonical 44-byte header. Samples are
// stored as clamp(round(s * 32767), -32768, 32767).
inline void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  std::string out;
  out.reserve(44 + clip.samples.size() * 2);
  const auto data_size = static_cast<std::uint32_t>(clip.samples.size() * 2);
  put_bytes(out, "RIFF", 4);
  put_u32(out, 36 + data_size);
  put_bytes(out, "WAVE", 4);
  put_bytes(out, "fmt ", 4);
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_bytes(out, "data", 4);
  put_u32(out, data_size);
  for (const float s : clip.samples) {
    const long long q = std::llround(static_cast<double>(s) * 32767.0);
    put_i16(out, static_cast<std::int16_t>(std::clamp<long long>(q, -32768, 32767)));
  }
  write_file_bytes(path, out);
}

// Linear-interpolation resampler. Desk-scale fidelity only; good enough to
// normalize online-sourced clips to the 16 kHz corpus rate.
inline AudioClip resample_linear(const AudioClip& clip, int target_hz) {
  require(target_hz > 0, Errc::BadArgument, "target rate must be positive");
  require(!clip.samples.empty() && clip.sample_rate_hz > 0, Errc::BadArgument,
          "resample_linear needs a valid clip");
  if (target_hz == clip.sample_rate_hz) return clip;

  const std::size_t n = clip.samples.size();
  const auto out_len = static_cast<std::size_t>(std::max<long long>(
      1, std::llround(static_cast<double>(n) * target_hz / clip.sample_rate_hz)));

  AudioClip out;
  out.sample_rate_hz = target_hz;
  out.source_id = clip.source_id;
  out.label = clip.label;
  out.samples.resize(out_len);
  const double step = static_cast<double>(clip.sample_rate_hz) / target_hz;
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) * step;
    const auto lo = std::min<std::size_t>(static_cast<std::size_t>(pos), n - 1);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    out.samples[i] = static_cast<float>((1.0 - frac) * clip.samples[lo] +
                                        frac * clip.samples[hi]);
  }
  return out;
}

}  // namespace kinit
