#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "kinit/csv.hpp"
#include "kinit/dataset.hpp"
#include "kinit/ekm.hpp"

namespace kinit {

struct PerClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Segment-level evaluation summary. Confusion rows are ground truth,
// columns are predictions.
struct EvalReport {
  double accuracy = 0.0;
  std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> confusion{};
  std::array<PerClassMetrics, kNumClasses> per_class{};
  std::int64_t n_segments = 0;
  double wall_clock_train_s = 0.0;
};

// ---------------------------------------------------------------------------
// Evaluation.

template <typename T>
std::vector<int> predict_labels(const EkmModel<T>& model,
                                const std::vector<LabeledExample<T>>& examples,
                                int workers = -1) {
  std::vector<int> preds(examples.size(), -1);
  const std::size_t chunk = 32;
  std::vector<EkmCache<T>> caches(std::min(chunk, std::max<std::size_t>(examples.size(), 1)));
  for (std::size_t start = 0; start < examples.size(); start += chunk) {
    const std::size_t n = std::min(chunk, examples.size() - start);
    parallel_for(
        n,
        [&](std::size_t s) {
          ekm_forward(model, examples[start + s].x, caches[s]);
          preds[start + s] = detail::argmax4(caches[s].probs);
        },
        workers);
  }
  return preds;
}

// Builds the report and verifies its own bookkeeping: entries conserve the
// test set, row sums match per-class truth counts, and the accuracy equals
// trace/total to 1e-12. Violations are internal errors, not user errors.
inline EvalReport report_from_predictions(const std::vector<int>& predictions,
                                          const std::vector<int>& truths) {
  require(!truths.empty(), Errc::EmptyTestSet, "no test segments to evaluate");
  require(predictions.size() == truths.size(), Errc::ShapeMismatch,
          "predictions/truths length mismatch");

  EvalReport report;
  report.n_segments = static_cast<std::int64_t>(truths.size());
  std::int64_t correct = 0;
  std::array<std::int64_t, kNumClasses> truth_counts{};
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int t = truths[i], p = predictions[i];
    require(t >= 0 && t < kNumClasses && p >= 0 && p < kNumClasses, Errc::BadArgument,
            "class index out of range");
    ++report.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    ++truth_counts[static_cast<std::size_t>(t)];
    if (t == p) ++correct;
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(report.n_segments);

  // conservation + accuracy-from-trace identity, checked on every evaluation
  std::int64_t total = 0, trace = 0;
  for (int r = 0; r < kNumClasses; ++r) {
    std::int64_t row_sum = 0;
    for (int c = 0; c < kNumClasses; ++c) {
      row_sum += report.confusion[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    if (row_sum != truth_counts[static_cast<std::size_t>(r)]) {
      throw std::runtime_error("confusion row sum does not conserve class counts");
    }
    total += row_sum;
    trace += report.confusion[static_cast<std::size_t>(r)][static_cast<std::size_t>(r)];
  }
  if (total != report.n_segments) {
    throw std::runtime_error("confusion total does not conserve segment count");
  }
  if (std::abs(report.accuracy - static_cast<double>(trace) / static_cast<double>(total)) >
      1e-12) {
    throw std::runtime_error("accuracy does not equal confusion trace / total");
  }

  for (int c = 0; c < kNumClasses; ++c) {
    std::int64_t col_sum = 0;
    for (int r = 0; r < kNumClasses; ++r) {
      col_sum += report.confusion[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    const auto diag =
        static_cast<double>(report.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)]);
    auto& m = report.per_class[static_cast<std::size_t>(c)];
    m.precision = col_sum > 0 ? diag / static_cast<double>(col_sum) : 0.0;
    m.recall = truth_counts[static_cast<std::size_t>(c)] > 0
                   ? diag / static_cast<double>(truth_counts[static_cast<std::size_t>(c)])
                   : 0.0;
    m.f1 = (m.precision + m.recall) > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                                        : 0.0;
  }
  return report;
}

template <typename T>
EvalReport evaluate(const EkmModel<T>& model, const std::vector<LabeledExample<T>>& test_set,
                    int workers = -1) {
  require(!test_set.empty(), Errc::EmptyTestSet, "test set is empty");
  const std::vector<int> preds = predict_labels(model, test_set, workers);
  std::vector<int> truths(test_set.size());
  for (std::size_t i = 0; i < test_set.size(); ++i) truths[i] = test_set[i].label;
  return report_from_predictions(preds, truths);
}

// ---------------------------------------------------------------------------
// Experiment harness.

struct ExperimentRow {
  std::string condition;
  std::string provenance;  // "measured" or "reference(not recomputed)"
  std::vector<double> run_accuracies;  // fractions in [0, 1]
  double mean_accuracy = 0.0;
  double mean_train_seconds = 0.0;
  std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> confusion{};  // summed over runs
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
};

struct HarnessConfig {
  int runs = 5;
  int epochs = 250;
  int batch_size = 32;
  float lr = 1e-3f;
  std::uint64_t seed = 42;
  double segment_seconds = 3.0;
  SplitFractions fractions{};
  std::filesystem::path out_dir;  // artifacts are written when non-empty
  int workers = -1;
  bool deterministic = true;  // zeroes timing columns in written history CSVs
  std::function<void(const std::string&)> log;

  void say(const std::string& msg) const {
    if (log) log(msg);
  }
};

inline std::string format_hhmmss(double seconds) {
  const auto s = static_cast<long long>(seconds + 0.5);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%02lld:%02lld:%02lld", s / 3600, (s / 60) % 60, s % 60);
  return buf;
}

inline void write_history_csv(const TrainHistory& history, const std::filesystem::path& path,
                              bool deterministic) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"epoch", "train_loss", "train_acc", "val_loss", "val_acc", "seconds_elapsed"});
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  for (const auto& e : history.epochs) {
    rows.push_back({std::to_string(e.epoch), num(e.train_loss), num(e.train_acc),
                    num(e.val_loss), num(e.val_acc),
                    num(deterministic ? 0.0 : e.seconds_elapsed)});
  }
  write_csv(path, rows);
}

inline void write_confusion_csv(
    const std::array<std::array<std::int64_t, kNumClasses>, kNumClasses>& confusion,
    const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{""};
  for (int c = 0; c < kNumClasses; ++c) header.emplace_back(label_name(static_cast<KinitLabel>(c)));
  rows.push_back(header);
  for (int r = 0; r < kNumClasses; ++r) {
    std::vector<std::string> row{std::string(label_name(static_cast<KinitLabel>(r)))};
    for (int c = 0; c < kNumClasses; ++c) {
      row.push_back(std::to_string(confusion[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]));
    }
    rows.push_back(row);
  }
  write_csv(path, rows);
}

inline void write_table_csv(const ExperimentResult& result, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back(
      {"condition", "provenance", "run_accuracies_pct", "mean_accuracy_pct", "mean_train_time"});
  for (const auto& r : result.rows) {
    std::string runs;
    for (std::size_t i = 0; i < r.run_accuracies.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * r.run_accuracies[i]);
      if (i) runs += ';';
      runs += buf;
    }
    char mean[32];
    std::snprintf(mean, sizeof(mean), "%.2f", 100.0 * r.mean_accuracy);
    rows.push_back({r.condition, r.provenance, runs, mean, format_hhmmss(r.mean_train_seconds)});
  }
  write_csv(path, rows);
}

namespace detail {

// Clips are loaded once per harness invocation and normalized to the
// 16 kHz corpus rate.
inline std::map<std::string, AudioClip> load_clips(const Manifest& manifest,
                                                   const HarnessConfig& hc) {
  std::vector<AudioClip> loaded(manifest.entries.size());
  parallel_for(
      manifest.entries.size(),
      [&](std::size_t i) {
        AudioClip clip = read_wav(manifest.entries[i].path);
        if (clip.sample_rate_hz != kCorpusRateHz) {
          clip = resample_linear(clip, kCorpusRateHz);
        }
        clip.label = manifest.entries[i].label;
        clip.source_id = manifest.entries[i].clip_id;
        loaded[i] = std::move(clip);
      },
      hc.workers);
  std::map<std::string, AudioClip> clips;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    clips[manifest.entries[i].clip_id] = std::move(loaded[i]);
  }
  return clips;
}

struct PreparedSets {
  std::vector<LabeledExample<float>> train, val, test;
  int frames = 0;
  int bins = 0;
  BinStats stats;
};

// Segment + extract + standardize, with the stats taken from the training
// split only. Clips shorter than one segment are reported and skipped.
inline PreparedSets prepare_sets(const std::map<std::string, AudioClip>& clips,
                                 const SplitSpec& split, const FeatureConfig& fcfg,
                                 const HarnessConfig& hc) {
  struct ClipFeatures {
    std::vector<FeatureMatrix> feats;
    int label = 0;
    Split split = Split::Train;
    bool too_short = false;
  };
  std::vector<const AudioClip*> ordered;
  std::vector<Split> splits;
  for (const auto& [id, clip] : clips) {
    const auto it = split.assignment.find(id);
    require(it != split.assignment.end(), Errc::BadArgument,
            "clip " + id + " missing from split");
    ordered.push_back(&clip);
    splits.push_back(it->second);
  }

  std::vector<ClipFeatures> extracted(ordered.size());
  parallel_for(
      ordered.size(),
      [&](std::size_t i) {
        const AudioClip& clip = *ordered[i];
        auto& out = extracted[i];
        out.label = static_cast<int>(*clip.label);
        out.split = splits[i];
        try {
          for (const Segment& seg : segment_clip(clip, fcfg)) {
            out.feats.push_back(extract_features(seg, fcfg));
          }
        } catch (const KinitError& e) {
          if (e.code() != Errc::ClipTooShort) throw;
          out.too_short = true;
        }
      },
      hc.workers);

  std::vector<FeatureMatrix> train_feats, val_feats, test_feats;
  std::vector<int> train_labels, val_labels, test_labels;
  for (auto& cf : extracted) {
    if (cf.too_short) {
      hc.say("warning: clip too short for " + std::to_string(fcfg.segment_seconds) +
             " s segments, skipped");
      continue;
    }
    for (auto& f : cf.feats) {
      switch (cf.split) {
        case Split::Train:
          train_feats.push_back(std::move(f));
          train_labels.push_back(cf.label);
          break;
        case Split::Val:
          val_feats.push_back(std::move(f));
          val_labels.push_back(cf.label);
          break;
        case Split::Test:
          test_feats.push_back(std::move(f));
          test_labels.push_back(cf.label);
          break;
      }
    }
  }
  require(!train_feats.empty(), Errc::EmptyTrainingSet, "no training segments after extraction");

  PreparedSets sets;
  sets.stats = standardize(train_feats);
  apply_standardize(val_feats, sets.stats);
  apply_standardize(test_feats, sets.stats);
  sets.frames = train_feats.front().n_frames;
  sets.bins = train_feats.front().n_bins;

  auto convert = [](std::vector<FeatureMatrix>& feats, const std::vector<int>& labels,
                    std::vector<LabeledExample<float>>& out) {
    out.reserve(feats.size());
    for (std::size_t i = 0; i < feats.size(); ++i) {
      out.push_back({feature_to_tensor<float>(feats[i]), labels[i]});
      feats[i].values.clear();
      feats[i].values.shrink_to_fit();
    }
  };
  convert(train_feats, train_labels, sets.train);
  convert(val_feats, val_labels, sets.val);
  convert(test_feats, test_labels, sets.test);
  return sets;
}

struct RunOutcome {
  EvalReport report;
  TrainHistory history;
};

inline RunOutcome run_once(const std::map<std::string, AudioClip>& clips, const SplitSpec& split,
                           const FeatureConfig& fcfg, const HarnessConfig& hc, int run_index) {
  PreparedSets sets = prepare_sets(clips, split, fcfg, hc);

  EkmModel<float> model = build_ekm<float>(ModelConfig{}, sets.frames, sets.bins,
                                           derive_seed(hc.seed, "init", static_cast<std::uint64_t>(run_index)));
  TrainConfig tc;
  tc.epochs = hc.epochs;
  tc.batch_size = hc.batch_size;
  tc.lr = hc.lr;
  tc.seed = derive_seed(hc.seed, "train", static_cast<std::uint64_t>(run_index));
  tc.deterministic = hc.deterministic;

  RunOutcome outcome;
  outcome.history = train_ekm(model, sets.train, sets.val, tc, nullptr, hc.workers);
  outcome.report = evaluate(model, sets.test, hc.workers);
  outcome.report.wall_clock_train_s = outcome.history.wall_clock_s;
  return outcome;
}

inline ExperimentRow run_condition(const std::map<std::string, AudioClip>& clips,
                                   const std::vector<SplitSpec>& splits,
                                   const FeatureConfig& fcfg, const std::string& condition,
                                   const HarnessConfig& hc) {
  ExperimentRow row;
  row.condition = condition;
  row.provenance = "measured";
  double total_seconds = 0.0;
  for (int r = 0; r < static_cast<int>(splits.size()); ++r) {
    hc.say("condition " + condition + ", run " + std::to_string(r));
    RunOutcome outcome = run_once(clips, splits[static_cast<std::size_t>(r)], fcfg, hc, r);
    row.run_accuracies.push_back(outcome.report.accuracy);
    total_seconds += outcome.history.wall_clock_s;
    for (int i = 0; i < kNumClasses; ++i) {
      for (int j = 0; j < kNumClasses; ++j) {
        row.confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
            outcome.report.confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
    }
    if (!hc.out_dir.empty()) {
      write_history_csv(outcome.history,
                        hc.out_dir / ("history_" + condition + "_" + std::to_string(r) + ".csv"),
                        hc.deterministic);
    }
  }
  double sum = 0.0;
  for (const double a : row.run_accuracies) sum += a;
  row.mean_accuracy = sum / static_cast<double>(row.run_accuracies.size());
  row.mean_train_seconds = total_seconds / static_cast<double>(splits.size());
  if (!hc.out_dir.empty()) {
    write_confusion_csv(row.confusion, hc.out_dir / ("confusion_" + condition + ".csv"));
  }
  return row;
}

inline std::vector<SplitSpec> make_run_splits(const Manifest& manifest, const HarnessConfig& hc) {
  std::vector<SplitSpec> splits;
  for (int r = 0; r < hc.runs; ++r) {
    splits.push_back(split_dataset(manifest, hc.fractions,
                                   derive_seed(hc.seed, "split", static_cast<std::uint64_t>(r))));
  }
  return splits;
}

inline void prepare_out_dir(const HarnessConfig& hc) {
  if (hc.out_dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(hc.out_dir, ec);
  require(!ec, Errc::IoFailure, "cannot create " + hc.out_dir.string());
}

}  // namespace detail

// Experiment 1: the four feature kinds, paired splits within each run.
inline ExperimentResult experiment_features(const Manifest& manifest, const HarnessConfig& hc) {
  require(hc.runs >= 1, Errc::BadArgument, "need at least one run");
  detail::prepare_out_dir(hc);
  const auto clips = detail::load_clips(manifest, hc);
  const auto splits = detail::make_run_splits(manifest, hc);

  ExperimentResult result;
  for (const FeatureKind kind : {FeatureKind::FilterBank, FeatureKind::MelSpec,
                                 FeatureKind::Chroma, FeatureKind::MFCC}) {
    FeatureConfig fcfg;
    fcfg.kind = kind;
    fcfg.segment_seconds = hc.segment_seconds;
    result.rows.push_back(detail::run_condition(clips, splits, fcfg,
                                                std::string(feature_kind_name(kind)), hc));
  }
  if (!hc.out_dir.empty()) write_table_csv(result, hc.out_dir / "table.csv");
  return result;
}

// Experiment 2: MFCC at 1 s / 3 s / 5 s sample lengths, paired splits.
inline ExperimentResult experiment_lengths(const Manifest& manifest, const HarnessConfig& hc) {
  require(hc.runs >= 1, Errc::BadArgument, "need at least one run");
  detail::prepare_out_dir(hc);
  const auto clips = detail::load_clips(manifest, hc);
  const auto splits = detail::make_run_splits(manifest, hc);

  ExperimentResult result;
  for (const double len : {1.0, 3.0, 5.0}) {
    FeatureConfig fcfg;
    fcfg.kind = FeatureKind::MFCC;
    fcfg.segment_seconds = len;
    char cond[16];
    std::snprintf(cond, sizeof(cond), "%gs", len);
    result.rows.push_back(detail::run_condition(clips, splits, fcfg, cond, hc));
  }
  if (!hc.out_dir.empty()) write_table_csv(result, hc.out_dir / "table.csv");
  return result;
}

// Experiment 3: one measured EKM run (MFCC, 3 s) plus the published baseline
// rows, which are emitted as labeled reference values rather than recomputed.
inline ExperimentResult experiment_timing(const Manifest& manifest, const HarnessConfig& hc) {
  detail::prepare_out_dir(hc);
  HarnessConfig single = hc;
  single.runs = 1;
  const auto clips = detail::load_clips(manifest, single);
  const auto splits = detail::make_run_splits(manifest, single);

  FeatureConfig fcfg;
  fcfg.kind = FeatureKind::MFCC;
  fcfg.segment_seconds = hc.segment_seconds;

  ExperimentResult result;
  auto reference = [](const std::string& name, double acc_pct, int h, int m, int s) {
    ExperimentRow row;
    row.condition = name;
    row.provenance = "reference(not recomputed)";
    row.mean_accuracy = acc_pct / 100.0;
    row.mean_train_seconds = h * 3600.0 + m * 60.0 + s;
    return row;
  };
  result.rows.push_back(reference("LSTM", 87.50, 0, 8, 46));
  result.rows.push_back(reference("AlexNet", 89.83, 1, 9, 41));
  result.rows.push_back(reference("ResNet50", 90.50, 1, 37, 4));
  result.rows.push_back(reference("VGG16", 93.00, 1, 34, 9));
  result.rows.push_back(detail::run_condition(clips, splits, fcfg, "EKM", single));
  if (!hc.out_dir.empty()) write_table_csv(result, hc.out_dir / "table.csv");
  return result;
}

}  // namespace kinit
