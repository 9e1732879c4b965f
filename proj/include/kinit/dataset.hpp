#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "kinit/audio_io.hpp"
#include "kinit/csv.hpp"
#include "kinit/error.hpp"
#include "kinit/rng.hpp"

namespace kinit {

enum class Split : int { Train = 0, Val = 1, Test = 2 };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "unknown";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  return std::nullopt;
}

struct ManifestEntry {
  std::string clip_id;
  std::filesystem::path path;
  KinitLabel label = KinitLabel::Tizita;
  double duration_s = 0.0;
  std::optional<Split> split;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;

  std::array<int, kNumClasses> class_counts() const {
    std::array<int, kNumClasses> counts{};
    for (const auto& e : entries) ++counts[static_cast<std::size_t>(e.label)];
    return counts;
  }
};

struct ScanResult {
  Manifest manifest;
  std::vector<std::string> warnings;
};

// Recursively collects .wav files whose stem matches `<Kinit><number>`
// (case-insensitive). Unparseable or unreadable files become warnings, not
// errors; output is sorted by clip_id so the scan is order-independent.
inline ScanResult scan_dataset(const std::filesystem::path& root) {
  require(std::filesystem::exists(root), Errc::IoFailure, root.string() + " does not exist");
  static const std::regex stem_re("^(tizita|bati|ambassel|anchihoye)([0-9]+)$",
                                  std::regex::icase);

  std::vector<std::filesystem::path> wavs;
  for (const auto& de : std::filesystem::recursive_directory_iterator(root)) {
    if (!de.is_regular_file()) continue;
    std::string ext = de.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".wav") wavs.push_back(de.path());
  }
  std::sort(wavs.begin(), wavs.end());

  ScanResult result;
  result.manifest.root = root;
  std::set<std::string> seen;
  for (const auto& path : wavs) {
    const std::string stem = path.stem().string();
    std::smatch m;
    if (!std::regex_match(stem, m, stem_re)) {
      result.warnings.push_back(path.string() + ": name does not encode a Kinit label, skipped");
      continue;
    }
    const auto label = parse_label(m[1].str());
    if (!seen.insert(stem).second) {
      result.warnings.push_back(path.string() + ": duplicate clip_id '" + stem + "', skipped");
      continue;
    }
    ManifestEntry entry;
    entry.clip_id = stem;
    entry.path = path;
    entry.label = *label;
    try {
      entry.duration_s = wav_info(path).duration_s();
    } catch (const KinitError& e) {
      result.warnings.push_back(path.string() + ": " + e.what() + ", skipped");
      seen.erase(stem);
      continue;
    }
    if (entry.duration_s > 30.0) {
      result.warnings.push_back(path.string() + ": duration " +
                                std::to_string(entry.duration_s) + " s exceeds 30 s");
    }
    result.manifest.entries.push_back(std::move(entry));
  }
  std::sort(result.manifest.entries.begin(), result.manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.clip_id < b.clip_id; });
  require(!result.manifest.entries.empty(), Errc::EmptyDataset,
          "no parsable .wav files under " + root.string());
  return result;
}

struct SplitFractions {
  double train = 0.70;
  double val = 0.10;
  double test = 0.20;

  void validate() const {
    require(train > 0 && val >= 0 && test > 0, Errc::BadArgument,
            "train and test fractions must be positive");
    require(std::abs(train + val + test - 1.0) < 1e-9, Errc::BadArgument,
            "split fractions must sum to 1");
  }
};

struct SplitSpec {
  SplitFractions fractions;
  std::uint64_t seed = 0;
  std::map<std::string, Split> assignment;  // clip_id -> split
};

namespace detail {

// floor(n * frac) with a guard against products like 0.7 * 30 landing one
// ulp under the exact integer.
inline int floor_count(int n, double frac) {
  return static_cast<int>(std::floor(static_cast<double>(n) * frac + 1e-9));
}

}  // namespace detail

// Stratified clip-level split: within each class, clips are shuffled by a
// seeded PRNG and partitioned train = floor, val = floor, test = remainder.
// All segments of a clip inherit its assignment.
inline SplitSpec split_dataset(const Manifest& manifest, SplitFractions fractions,
                               std::uint64_t seed) {
  fractions.validate();
  SplitSpec spec;
  spec.fractions = fractions;
  spec.seed = seed;

  std::array<std::vector<std::string>, kNumClasses> by_class;
  for (const auto& e : manifest.entries) {
    by_class[static_cast<std::size_t>(e.label)].push_back(e.clip_id);
  }
  for (int c = 0; c < kNumClasses; ++c) {
    auto& ids = by_class[static_cast<std::size_t>(c)];
    const auto class_label = label_name(static_cast<KinitLabel>(c));
    require(!ids.empty(), Errc::InsufficientData,
            std::string("class ") + std::string(class_label) + " has no clips");
    std::sort(ids.begin(), ids.end());
    Rng rng(derive_seed(seed, "split", static_cast<std::uint64_t>(c)));
    rng.shuffle(ids);

    const int n = static_cast<int>(ids.size());
    const int n_train = detail::floor_count(n, fractions.train);
    const int n_val = detail::floor_count(n, fractions.val);
    const int n_test = n - n_train - n_val;
    require(n_train > 0 && n_test > 0, Errc::InsufficientData,
            std::string("class ") + std::string(class_label) + " with " + std::to_string(n) +
                " clips would get an empty train or test set");
    for (int i = 0; i < n; ++i) {
      const Split s = i < n_train           ? Split::Train
                      : i < n_train + n_val ? Split::Val
                                            : Split::Test;
      spec.assignment[ids[static_cast<std::size_t>(i)]] = s;
    }
  }
  return spec;
}

inline void apply_split(Manifest& manifest, const SplitSpec& spec) {
  for (auto& e : manifest.entries) {
    const auto it = spec.assignment.find(e.clip_id);
    require(it != spec.assignment.end(), Errc::BadArgument,
            "clip " + e.clip_id + " missing from split assignment");
    e.split = it->second;
  }
}

// ---------------------------------------------------------------------------
// Synthetic corpus. Each class gets its own pentatonic pitch-class set; clips
// are random walks over those notes, so the corpus exercises exactly the
// scale-discrimination mechanism the classifier is meant to learn without
// claiming musicological fidelity.

struct SynthSpec {
  std::array<std::array<int, 5>, kNumClasses> class_pitch_sets{{
      {0, 2, 4, 7, 9},    // major pentatonic on C
      {1, 3, 6, 8, 10},   // major pentatonic on C#
      {0, 3, 5, 7, 10},   // minor pentatonic on C
      {1, 4, 6, 9, 11},
  }};
  int notes_per_clip = 60;
  double note_duration_s = 0.5;  // 60 x 0.5 s = 30 s clips by default
  double amplitude = 0.3;
  std::uint64_t seed = 42;

  void validate() const {
    require(notes_per_clip > 0 && note_duration_s > 0, Errc::BadArgument,
            "clip must contain at least one note");
    require(amplitude >= 0.0 && amplitude <= 1.0, Errc::BadArgument,
            "amplitude must be within [0, 1]");
    std::set<std::array<int, 5>> distinct(class_pitch_sets.begin(), class_pitch_sets.end());
    require(distinct.size() == class_pitch_sets.size(), Errc::BadArgument,
            "class pitch sets must be pairwise distinct");
  }
};

// One 16 kHz mono clip: a random walk over the class's pitch classes across
// octaves 3-5, each note a sine with 10 ms raised-cosine attack/release.
// Deterministic per (class_index, clip_seed).
inline AudioClip synth_clip(int class_index, const SynthSpec& spec, std::uint64_t clip_seed) {
  spec.validate();
  require(class_index >= 0 && class_index < kNumClasses, Errc::BadArgument,
          "class index out of range");

  const int rate = kCorpusRateHz;
  const auto note_len = static_cast<std::size_t>(std::llround(spec.note_duration_s * rate));
  require(note_len > 0, Errc::BadArgument, "note duration rounds to zero samples");

  std::vector<double> note_hz;
  for (int octave = 3; octave <= 5; ++octave) {
    for (const int pc : spec.class_pitch_sets[static_cast<std::size_t>(class_index)]) {
      const int midi = 12 * (octave + 1) + pc;
      note_hz.push_back(440.0 * std::pow(2.0, (midi - 69) / 12.0));
    }
  }
  std::sort(note_hz.begin(), note_hz.end());

  Rng rng(derive_seed(derive_seed(spec.seed, "synth", static_cast<std::uint64_t>(class_index)),
                      "clip", clip_seed));

  AudioClip clip;
  clip.sample_rate_hz = rate;
  clip.label = static_cast<KinitLabel>(class_index);
  clip.samples.resize(static_cast<std::size_t>(spec.notes_per_clip) * note_len);

  const auto ramp_len = std::min<std::size_t>(
      static_cast<std::size_t>(std::llround(0.010 * rate)), note_len / 2);
  auto idx = static_cast<int>(rng.below(note_hz.size()));
  for (int n = 0; n < spec.notes_per_clip; ++n) {
    const double freq = note_hz[static_cast<std::size_t>(idx)];
    const double omega = 2.0 * std::numbers::pi * freq / rate;
    float* out = clip.samples.data() + static_cast<std::size_t>(n) * note_len;
    for (std::size_t i = 0; i < note_len; ++i) {
      double env = 1.0;
      if (ramp_len > 0 && i < ramp_len) {
        env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / ramp_len);
      } else if (ramp_len > 0 && i >= note_len - ramp_len) {
        env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(note_len - 1 - i) /
                                   ramp_len);
      }
      out[i] = static_cast<float>(spec.amplitude * env *
                                  std::sin(omega * static_cast<double>(i)));
    }
    idx = std::clamp(idx + rng.range_int(-2, 2), 0, static_cast<int>(note_hz.size()) - 1);
  }
  return clip;
}

// Writes n_per_class WAVs per class named <Class><k>.wav and rescans the
// directory, so the returned manifest is exactly what a later scan sees.
inline Manifest make_synth_corpus(const SynthSpec& spec, int n_per_class,
                                  const std::filesystem::path& out_dir) {
  spec.validate();
  require(n_per_class >= 5, Errc::InsufficientData,
          "need at least 5 clips per class for a 70/10/20 split");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require(!ec, Errc::IoFailure, "cannot create " + out_dir.string());

  for (int c = 0; c < kNumClasses; ++c) {
    for (int k = 1; k <= n_per_class; ++k) {
      AudioClip clip = synth_clip(c, spec, static_cast<std::uint64_t>(k));
      const std::string name =
          std::string(label_name(static_cast<KinitLabel>(c))) + std::to_string(k) + ".wav";
      write_wav(clip, out_dir / name);
    }
  }
  return scan_dataset(out_dir).manifest;
}

// ---------------------------------------------------------------------------
// Manifest CSV: clip_id,path,label,duration_s,split (split may be empty).

inline void write_manifest_csv(const Manifest& manifest, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"clip_id", "path", "label", "duration_s", "split"});
  for (const auto& e : manifest.entries) {
    char dur[32];
    std::snprintf(dur, sizeof(dur), "%.3f", e.duration_s);
    rows.push_back({e.clip_id, e.path.string(), std::string(label_name(e.label)), dur,
                    e.split ? std::string(split_name(*e.split)) : ""});
  }
  write_csv(path, rows);
}

inline Manifest read_manifest_csv(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  require(!rows.empty(), Errc::BadArgument, path.string() + ": empty manifest");
  const std::vector<std::string> header{"clip_id", "path", "label", "duration_s", "split"};
  require(rows.front() == header, Errc::BadArgument,
          path.string() + ": unexpected manifest header");

  Manifest manifest;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    require(r.size() == 5, Errc::BadArgument,
            path.string() + ": row " + std::to_string(i) + " has wrong field count");
    ManifestEntry e;
    e.clip_id = r[0];
    e.path = r[1];
    const auto label = parse_label(r[2]);
    require(label.has_value(), Errc::BadArgument,
            path.string() + ": unknown label '" + r[2] + "'");
    e.label = *label;
    e.duration_s = std::stod(r[3]);
    if (!r[4].empty()) {
      const auto split = parse_split(r[4]);
      require(split.has_value(), Errc::BadArgument,
              path.string() + ": unknown split '" + r[4] + "'");
      e.split = split;
    }
    manifest.entries.push_back(std::move(e));
  }
  require(!manifest.entries.empty(), Errc::EmptyDataset, path.string() + ": no entries");
  return manifest;
}

}  // namespace kinit
