#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kinit/audio_io.hpp"
#include "kinit/binio.hpp"
#include "kinit/csv.hpp"
#include "kinit/dsp.hpp"
#include "kinit/error.hpp"
#include "kinit/sha256.hpp"

namespace kinit {

enum class FeatureKind : int { FilterBank = 0, MelSpec = 1, Chroma = 2, MFCC = 3 };

inline std::string_view feature_kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::FilterBank: return "filterbank";
    case FeatureKind::MelSpec: return "melspec";
    case FeatureKind::Chroma: return "chroma";
    case FeatureKind::MFCC: return "mfcc";
  }
  return "unknown";
}

inline std::optional<FeatureKind> parse_feature_kind(std::string_view s) {
  for (const FeatureKind k : {FeatureKind::FilterBank, FeatureKind::MelSpec, FeatureKind::Chroma,
                              FeatureKind::MFCC}) {
    if (s == feature_kind_name(k)) return k;
  }
  return std::nullopt;
}

struct FeatureConfig {
  FeatureKind kind = FeatureKind::MFCC;
  int fft_size = 2048;
  int hop_size = 512;
  int n_filterbank = 40;
  int n_melspec = 128;
  int n_chroma = 12;
  int n_mfcc_bands = 40;
  int n_mfcc_coeffs = 13;
  double segment_seconds = 3.0;
  double overlap_fraction = 0.5;
  double log_floor_eps = 1e-10;

  void validate() const {
    require(is_pow2(fft_size), Errc::BadArgument, "fft_size must be a power of two");
    require(hop_size > 0 && hop_size <= fft_size, Errc::BadArgument,
            "hop_size must be in (0, fft_size]");
    require(n_filterbank > 0 && n_melspec > 0 && n_chroma > 0 && n_mfcc_bands > 0 &&
                n_mfcc_coeffs > 0,
            Errc::BadArgument, "band counts must be positive");
    require(n_mfcc_coeffs <= n_mfcc_bands, Errc::BadArgument,
            "cannot keep more DCT coefficients than mel bands");
    require(segment_seconds > 0, Errc::BadArgument, "segment_seconds must be positive");
    require(overlap_fraction >= 0.0 && overlap_fraction < 1.0, Errc::BadArgument,
            "overlap_fraction must be in [0, 1)");
    require(log_floor_eps > 0, Errc::BadArgument, "log_floor_eps must be positive");
  }

  int n_bins() const {
    switch (kind) {
      case FeatureKind::FilterBank: return n_filterbank;
      case FeatureKind::MelSpec: return n_melspec;
      case FeatureKind::Chroma: return n_chroma;
      case FeatureKind::MFCC: return n_mfcc_coeffs;
    }
    return 0;
  }

  // Stable fingerprint of every field that influences the output values,
  // including the rate the segments were sampled at.
  std::string digest_hex(int sample_rate_hz) const {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "kind=%s;fft=%d;hop=%d;fb=%d;mel=%d;chroma=%d;mfb=%d;mfc=%d;"
                  "seg=%.17g;ov=%.17g;eps=%.17g;rate=%d",
                  std::string(feature_kind_name(kind)).c_str(), fft_size, hop_size, n_filterbank,
                  n_melspec, n_chroma, n_mfcc_bands, n_mfcc_coeffs, segment_seconds,
                  overlap_fraction, log_floor_eps, sample_rate_hz);
    return to_hex(sha256(buf));
  }
};

// Fixed-length window of a clip; the training/evaluation unit.
struct Segment {
  std::vector<float> samples;
  int sample_rate_hz = kCorpusRateHz;
  std::string parent_id;
  std::int64_t start_sample = 0;
  std::optional<KinitLabel> label;
};

struct FeatureMatrix {
  int n_frames = 0;
  int n_bins = 0;
  FeatureKind kind = FeatureKind::MFCC;
  std::string config_digest;       // hex-encoded
  std::vector<double> values;      // row-major [n_frames x n_bins]

  double& at(int f, int b) { return values[static_cast<std::size_t>(f) * n_bins + b]; }
  double at(int f, int b) const { return values[static_cast<std::size_t>(f) * n_bins + b]; }
  const double* row(int f) const { return values.data() + static_cast<std::size_t>(f) * n_bins; }

  bool all_finite() const {
    for (const double v : values) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

// Windows of L = segment_seconds * rate samples starting at 0, L/2, ...;
// a trailing remainder shorter than L is dropped so every example is
// identically shaped.
inline std::vector<Segment> segment_clip(const AudioClip& clip, const FeatureConfig& cfg) {
  cfg.validate();
  require(clip.sample_rate_hz > 0, Errc::BadArgument, "clip has no sample rate");
  const auto seg_len = static_cast<std::int64_t>(
      std::llround(cfg.segment_seconds * clip.sample_rate_hz));
  require(seg_len >= 1, Errc::BadArgument, "segment length rounds to zero samples");
  const auto n = static_cast<std::int64_t>(clip.samples.size());
  require(n >= seg_len, Errc::ClipTooShort,
          clip.source_id + ": " + std::to_string(n) + " samples, need " +
              std::to_string(seg_len));
  const auto hop = std::max<std::int64_t>(
      1, std::llround(static_cast<double>(seg_len) * (1.0 - cfg.overlap_fraction)));

  std::vector<Segment> out;
  for (std::int64_t start = 0; start + seg_len <= n; start += hop) {
    Segment s;
    s.samples.assign(clip.samples.begin() + start, clip.samples.begin() + start + seg_len);
    s.sample_rate_hz = clip.sample_rate_hz;
    s.parent_id = clip.source_id;
    s.start_sample = start;
    s.label = clip.label;
    out.push_back(std::move(s));
  }
  return out;
}

namespace detail {

// Reflection padding without edge duplication; valid for any offset.
inline std::size_t reflect_index(std::int64_t t, std::size_t n) {
  if (n == 1) return 0;
  const auto period = 2 * (static_cast<std::int64_t>(n) - 1);
  std::int64_t m = t % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<std::int64_t>(n) ? m : period - m);
}

}  // namespace detail

// Power spectrogram of one segment: reflect-centered, periodic Hann,
// |X[k]|^2 for k = 0 .. fft_size/2. n_frames = 1 + floor(len / hop).
inline Mat stft_power(const Segment& seg, const FeatureConfig& cfg) {
  cfg.validate();
  const std::size_t n = seg.samples.size();
  require(n > 0, Errc::BadArgument, "empty segment");

  const int fft = cfg.fft_size;
  const int n_bins = fft / 2 + 1;
  const int n_frames = 1 + static_cast<int>(n / static_cast<std::size_t>(cfg.hop_size));
  const std::vector<double> window = hann_periodic(fft);

  Mat out(n_frames, n_bins);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(fft));
  for (int f = 0; f < n_frames; ++f) {
    const std::int64_t start = static_cast<std::int64_t>(f) * cfg.hop_size - fft / 2;
    for (int i = 0; i < fft; ++i) {
      const double x = seg.samples[detail::reflect_index(start + i, n)];
      buf[static_cast<std::size_t>(i)] = {x * window[static_cast<std::size_t>(i)], 0.0};
    }
    fft_inplace(buf);
    double* row = out.row(f);
    for (int k = 0; k < n_bins; ++k) row[k] = std::norm(buf[static_cast<std::size_t>(k)]);
  }
  return out;
}

namespace detail {

inline Mat log_mel_matrix(const Segment& seg, const FeatureConfig& cfg, int n_mels) {
  const Mat power = stft_power(seg, cfg);
  const Mat fb = mel_filterbank_matrix(n_mels, cfg.fft_size, seg.sample_rate_hz);

  // filters are triangles; skipping their zero tails dominates the cost
  std::vector<std::pair<int, int>> span(static_cast<std::size_t>(n_mels), {0, 0});
  for (int m = 0; m < n_mels; ++m) {
    int lo = 0, hi = fb.cols;
    while (lo < fb.cols && fb.at(m, lo) == 0.0) ++lo;
    while (hi > lo && fb.at(m, hi - 1) == 0.0) --hi;
    span[static_cast<std::size_t>(m)] = {lo, hi};
  }

  Mat out(power.rows, n_mels);
  for (int f = 0; f < power.rows; ++f) {
    const double* p = power.row(f);
    double* o = out.row(f);
    for (int m = 0; m < n_mels; ++m) {
      const auto [lo, hi] = span[static_cast<std::size_t>(m)];
      const double* w = fb.row(m);
      double e = 0.0;
      for (int k = lo; k < hi; ++k) e += w[k] * p[k];
      o[m] = std::log(e + cfg.log_floor_eps);
    }
  }
  return out;
}

inline FeatureMatrix from_mat(Mat&& m, FeatureKind kind, const FeatureConfig& cfg,
                              int sample_rate_hz) {
  FeatureMatrix out;
  out.n_frames = m.rows;
  out.n_bins = m.cols;
  out.kind = kind;
  out.config_digest = cfg.digest_hex(sample_rate_hz);
  out.values = std::move(m.v);
  return out;
}

}  // namespace detail

// Natural-log mel filterbank energies, 40 bands.
inline FeatureMatrix filterbank_features(const Segment& seg, const FeatureConfig& cfg) {
  Mat lm = detail::log_mel_matrix(seg, cfg, cfg.n_filterbank);
  return detail::from_mat(std::move(lm), FeatureKind::FilterBank, cfg, seg.sample_rate_hz);
}

// Same computation at 128 bands: the full log mel spectrogram.
inline FeatureMatrix melspec_features(const Segment& seg, const FeatureConfig& cfg) {
  Mat lm = detail::log_mel_matrix(seg, cfg, cfg.n_melspec);
  return detail::from_mat(std::move(lm), FeatureKind::MelSpec, cfg, seg.sample_rate_hz);
}

// 12-dimensional pitch-class energy profile. Bin k >= 1 with center
// frequency f_k maps to class (round(12 log2(f_k / 440)) + 9) mod 12, so
// class 0 is C; each frame is normalized by its maximum.
inline FeatureMatrix chroma_features(const Segment& seg, const FeatureConfig& cfg) {
  const Mat power = stft_power(seg, cfg);
  const double hz_per_bin = static_cast<double>(seg.sample_rate_hz) / cfg.fft_size;

  std::vector<int> pitch_class(static_cast<std::size_t>(power.cols), 0);
  for (int k = 1; k < power.cols; ++k) {
    const double f = k * hz_per_bin;
    const auto steps = static_cast<long long>(std::llround(12.0 * std::log2(f / 440.0)));
    pitch_class[static_cast<std::size_t>(k)] =
        static_cast<int>((((steps + 9) % 12) + 12) % 12);
  }

  Mat out(power.rows, cfg.n_chroma);
  for (int f = 0; f < power.rows; ++f) {
    const double* p = power.row(f);
    double* o = out.row(f);
    for (int k = 1; k < power.cols; ++k) {
      o[pitch_class[static_cast<std::size_t>(k)] % cfg.n_chroma] += p[k];
    }
    double peak = 0.0;
    for (int c = 0; c < cfg.n_chroma; ++c) peak = std::max(peak, o[c]);
    if (peak > 0.0) {
      for (int c = 0; c < cfg.n_chroma; ++c) o[c] /= peak;
    }
  }
  return detail::from_mat(std::move(out), FeatureKind::Chroma, cfg, seg.sample_rate_hz);
}

// Log mel energies over n_mfcc_bands, then the first n_mfcc_coeffs
// orthonormal DCT-II coefficients per frame. Reuses the filterbank path so
// the two stay numerically identical by construction.
inline FeatureMatrix mfcc_features(const Segment& seg, const FeatureConfig& cfg) {
  const Mat lm = detail::log_mel_matrix(seg, cfg, cfg.n_mfcc_bands);
  const Mat dct = dct_ii_matrix(cfg.n_mfcc_coeffs, cfg.n_mfcc_bands);

  Mat out(lm.rows, cfg.n_mfcc_coeffs);
  for (int f = 0; f < lm.rows; ++f) {
    const double* in = lm.row(f);
    double* o = out.row(f);
    for (int c = 0; c < cfg.n_mfcc_coeffs; ++c) {
      const double* d = dct.row(c);
      double acc = 0.0;
      for (int m = 0; m < cfg.n_mfcc_bands; ++m) acc += d[m] * in[m];
      o[c] = acc;
    }
  }
  return detail::from_mat(std::move(out), FeatureKind::MFCC, cfg, seg.sample_rate_hz);
}

inline FeatureMatrix extract_features(const Segment& seg, const FeatureConfig& cfg) {
  switch (cfg.kind) {
    case FeatureKind::FilterBank: return filterbank_features(seg, cfg);
    case FeatureKind::MelSpec: return melspec_features(seg, cfg);
    case FeatureKind::Chroma: return chroma_features(seg, cfg);
    case FeatureKind::MFCC: return mfcc_features(seg, cfg);
  }
  fail(Errc::BadArgument, "unknown feature kind");
}

// ---------------------------------------------------------------------------
// Per-bin standardization. Stats come from the training set only and are
// reused verbatim on validation/test data.

struct BinStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // floored at 1e-8

  int n_bins() const { return static_cast<int>(mean.size()); }
};

inline constexpr double kStdFloor = 1e-8;

inline BinStats compute_bin_stats(const std::vector<FeatureMatrix>& set) {
  require(!set.empty(), Errc::BadArgument, "cannot compute stats of an empty set");
  const int bins = set.front().n_bins;
  for (const auto& f : set) {
    require(f.n_bins == bins, Errc::BinMismatch, "feature matrices disagree on bin count");
  }

  BinStats stats;
  stats.mean.assign(static_cast<std::size_t>(bins), 0.0);
  stats.stddev.assign(static_cast<std::size_t>(bins), 0.0);
  std::uint64_t n_rows = 0;
  for (const auto& f : set) {
    for (int r = 0; r < f.n_frames; ++r) {
      const double* row = f.row(r);
      for (int b = 0; b < bins; ++b) stats.mean[static_cast<std::size_t>(b)] += row[b];
    }
    n_rows += static_cast<std::uint64_t>(f.n_frames);
  }
  require(n_rows > 0, Errc::BadArgument, "no frames to standardize over");
  for (auto& m : stats.mean) m /= static_cast<double>(n_rows);

  for (const auto& f : set) {
    for (int r = 0; r < f.n_frames; ++r) {
      const double* row = f.row(r);
      for (int b = 0; b < bins; ++b) {
        const double d = row[b] - stats.mean[static_cast<std::size_t>(b)];
        stats.stddev[static_cast<std::size_t>(b)] += d * d;
      }
    }
  }
  for (auto& s : stats.stddev) {
    s = std::max(std::sqrt(s / static_cast<double>(n_rows)), kStdFloor);
  }
  return stats;
}

inline void apply_standardize(std::vector<FeatureMatrix>& feats, const BinStats& stats) {
  for (auto& f : feats) {
    require(f.n_bins == stats.n_bins(), Errc::BinMismatch,
            "stats have " + std::to_string(stats.n_bins()) + " bins, features have " +
                std::to_string(f.n_bins));
    for (int r = 0; r < f.n_frames; ++r) {
      double* row = f.values.data() + static_cast<std::size_t>(r) * f.n_bins;
      for (int b = 0; b < f.n_bins; ++b) {
        row[b] = (row[b] - stats.mean[static_cast<std::size_t>(b)]) /
                 stats.stddev[static_cast<std::size_t>(b)];
      }
    }
  }
}

// When stats are absent they are computed from the supplied set (the caller
// passes the training set); either way the stats actually used are returned.
inline BinStats standardize(std::vector<FeatureMatrix>& feats,
                            const std::optional<BinStats>& given = std::nullopt) {
  const BinStats stats = given ? *given : compute_bin_stats(feats);
  apply_standardize(feats, stats);
  return stats;
}

// Standardization stats artifact: bin,mean,std rows, full double precision.
inline void write_stats_csv(const BinStats& stats, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"bin", "mean", "std"});
  char buf[64];
  for (int b = 0; b < stats.n_bins(); ++b) {
    std::vector<std::string> row{std::to_string(b)};
    std::snprintf(buf, sizeof(buf), "%.17g", stats.mean[static_cast<std::size_t>(b)]);
    row.emplace_back(buf);
    std::snprintf(buf, sizeof(buf), "%.17g", stats.stddev[static_cast<std::size_t>(b)]);
    row.emplace_back(buf);
    rows.push_back(std::move(row));
  }
  write_csv(path, rows);
}

inline BinStats read_stats_csv(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  require(rows.size() >= 2 && rows.front() == std::vector<std::string>{"bin", "mean", "std"},
          Errc::BadArgument, path.string() + ": not a stats file");
  BinStats stats;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    require(rows[i].size() == 3, Errc::BadArgument, path.string() + ": bad stats row");
    stats.mean.push_back(std::stod(rows[i][1]));
    stats.stddev.push_back(std::stod(rows[i][2]));
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Feature cache file: "FEAT" magic, version, kind, frame/bin counts, the
// 32-byte config digest, then row-major float32 values. One file per segment.

inline constexpr std::uint32_t kFeatVersion = 1;

inline std::string feat_filename(const std::string& clip_id, int segment_index) {
  return clip_id + "_seg" + std::to_string(segment_index) + ".feat";
}

inline std::vector<std::uint8_t> hex_to_bytes(std::string_view hex) {
  require(hex.size() % 2 == 0, Errc::BadArgument, "hex string has odd length");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    fail(Errc::BadArgument, "invalid hex digit");
  };
  std::vector<std::uint8_t> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
  }
  return out;
}

inline void write_feat_file(const FeatureMatrix& f, const std::filesystem::path& path) {
  require(f.config_digest.size() == 64, Errc::BadArgument,
          "feature matrix has no config digest");
  std::string out;
  out.reserve(49 + f.values.size() * 4);
  put_bytes(out, "FEAT", 4);
  put_u32(out, kFeatVersion);
  put_u8(out, static_cast<std::uint8_t>(f.kind));
  put_u32(out, static_cast<std::uint32_t>(f.n_frames));
  put_u32(out, static_cast<std::uint32_t>(f.n_bins));
  const auto digest = hex_to_bytes(f.config_digest);
  put_bytes(out, digest.data(), digest.size());
  for (const double v : f.values) put_f32(out, static_cast<float>(v));
  write_file_bytes(path, out);
}

inline FeatureMatrix read_feat_file(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  ByteReader r(bytes, Errc::MalformedContainer);
  require(r.str(4) == "FEAT", Errc::MalformedContainer, path.string() + ": bad magic");
  require(r.u32() == kFeatVersion, Errc::MalformedContainer,
          path.string() + ": unsupported version");
  FeatureMatrix f;
  const std::uint8_t kind = r.u8();
  require(kind < 4, Errc::MalformedContainer, path.string() + ": bad feature kind");
  f.kind = static_cast<FeatureKind>(kind);
  f.n_frames = static_cast<int>(r.u32());
  f.n_bins = static_cast<int>(r.u32());
  const std::string digest = r.str(32);
  f.config_digest = to_hex(reinterpret_cast<const std::uint8_t*>(digest.data()), 32);
  const auto count = static_cast<std::size_t>(f.n_frames) * static_cast<std::size_t>(f.n_bins);
  require(r.remaining() == count * 4, Errc::MalformedContainer,
          path.string() + ": payload size mismatch");
  f.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) f.values[i] = static_cast<double>(r.f32());
  return f;
}

}  // namespace kinit
