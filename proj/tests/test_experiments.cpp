#include <gtest/gtest.h>

#include <filesystem>

#include "kinit/experiments.hpp"

namespace fs = std::filesystem;
using namespace kinit;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

// ---------------------------------------------------------------------------
// Report construction.

TEST(EvalReportBuild, PerfectPredictorIsDiagonal) {
  const std::vector<int> truths{0, 1, 2, 3, 0, 1, 2, 3, 2};
  const EvalReport r = report_from_predictions(truths, truths);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.n_segments, 9);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (i != j) EXPECT_EQ(r.confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], 0);
    }
    EXPECT_DOUBLE_EQ(r.per_class[static_cast<std::size_t>(i)].precision, 1.0);
    EXPECT_DOUBLE_EQ(r.per_class[static_cast<std::size_t>(i)].recall, 1.0);
    EXPECT_DOUBLE_EQ(r.per_class[static_cast<std::size_t>(i)].f1, 1.0);
  }
}

TEST(EvalReportBuild, ConstantPredictorMatchesClassShare) {
  const std::vector<int> truths{0, 0, 0, 1, 2, 3, 1, 2, 3, 0};
  const std::vector<int> preds(truths.size(), 0);
  const EvalReport r = report_from_predictions(preds, truths);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.4);  // four class-0 items of ten
  for (int i = 0; i < 4; ++i) {
    for (int j = 1; j < 4; ++j) {
      EXPECT_EQ(r.confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], 0);
    }
  }
  EXPECT_EQ(r.confusion[0][0], 4);
  EXPECT_EQ(r.confusion[1][0], 2);
}

TEST(EvalReportBuild, RowSumsConserveClassCounts) {
  std::vector<int> truths, preds;
  Rng rng(12);
  std::array<std::int64_t, 4> expected_rows{};
  for (int i = 0; i < 500; ++i) {
    const int t = static_cast<int>(rng.below(4));
    truths.push_back(t);
    preds.push_back(static_cast<int>(rng.below(4)));
    ++expected_rows[static_cast<std::size_t>(t)];
  }
  const EvalReport r = report_from_predictions(preds, truths);
  for (int i = 0; i < 4; ++i) {
    std::int64_t row = 0;
    for (int j = 0; j < 4; ++j) {
      row += r.confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    EXPECT_EQ(row, expected_rows[static_cast<std::size_t>(i)]);
  }
}

TEST(EvalReportBuild, HandCheckedPerClassMetrics) {
  // class 0: tp=2 fp=1 fn=1 -> precision 2/3, recall 2/3, f1 2/3
  const std::vector<int> truths{0, 0, 0, 1, 1};
  const std::vector<int> preds{0, 0, 1, 1, 0};
  const EvalReport r = report_from_predictions(preds, truths);
  EXPECT_NEAR(r.per_class[0].precision, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.per_class[0].recall, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.per_class[0].f1, 2.0 / 3.0, 1e-12);
  // class 2 never occurs: all metrics zero rather than NaN
  EXPECT_EQ(r.per_class[2].precision, 0.0);
  EXPECT_EQ(r.per_class[2].recall, 0.0);
  EXPECT_EQ(r.per_class[2].f1, 0.0);
}

TEST(EvalReportBuild, EmptyTestSetRejected) {
  try {
    report_from_predictions({}, {});
    FAIL() << "expected EmptyTestSet";
  } catch (const KinitError& e) {
    EXPECT_EQ(e.code(), Errc::EmptyTestSet);
  }
}

// ---------------------------------------------------------------------------
// Formatting and CSV artifacts.

TEST(FormatHhmmss, PaperStyleDurations) {
  EXPECT_EQ(format_hhmmss(9 * 60 + 17), "00:09:17");
  EXPECT_EQ(format_hhmmss(3600 + 37 * 60 + 4), "01:37:04");
  EXPECT_EQ(format_hhmmss(0.4), "00:00:00");
  EXPECT_EQ(format_hhmmss(86400), "24:00:00");
}

TEST(ConfusionCsv, HeaderAndRows) {
  std::array<std::array<std::int64_t, 4>, 4> confusion{};
  confusion[0][0] = 33;
  confusion[2][1] = 7;
  const fs::path p = fresh_dir("csv_out") / "confusion_test.csv";
  write_confusion_csv(confusion, p);
  const auto rows = read_csv(p);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"", "Tizita", "Bati", "Ambassel", "Anchihoye"}));
  EXPECT_EQ(rows[1][0], "Tizita");
  EXPECT_EQ(rows[1][1], "33");
  EXPECT_EQ(rows[3][2], "7");
}

TEST(HistoryCsv, DeterministicModeZeroesTiming) {
  TrainHistory h;
  for (int e = 1; e <= 3; ++e) {
    EpochStats s;
    s.epoch = e;
    s.train_loss = 1.0 / e;
    s.train_acc = 0.2 * e;
    s.val_loss = 2.0 / e;
    s.val_acc = 0.1 * e;
    s.seconds_elapsed = 1.5 * e;
    h.epochs.push_back(s);
  }
  const fs::path dir = fresh_dir("csv_hist");
  write_history_csv(h, dir / "det.csv", /*deterministic=*/true);
  write_history_csv(h, dir / "wall.csv", /*deterministic=*/false);
  const auto det = read_csv(dir / "det.csv");
  const auto wall = read_csv(dir / "wall.csv");
  ASSERT_EQ(det.size(), 4u);
  EXPECT_EQ(det[0], (std::vector<std::string>{"epoch", "train_loss", "train_acc", "val_loss",
                                              "val_acc", "seconds_elapsed"}));
  EXPECT_EQ(det[1][5], "0.000000");
  EXPECT_EQ(wall[1][5], "1.500000");
  EXPECT_EQ(det[2][1], wall[2][1]);  // losses identical either way
}

// ---------------------------------------------------------------------------
// Harness runs on a small synthetic corpus.

namespace {

Manifest small_corpus(const fs::path& dir, int n_per_class = 5, int notes = 12) {
  SynthSpec spec;
  spec.notes_per_clip = notes;  // 12 notes x 0.5 s = 6 s clips
  return make_synth_corpus(spec, n_per_class, dir);
}

}  // namespace

TEST(ExperimentLengths, ThreeRowsWithPairedSplitsAndArtifacts) {
  const fs::path corpus = fresh_dir("exp2_corpus");
  const Manifest manifest = small_corpus(corpus);

  HarnessConfig hc;
  hc.runs = 1;
  hc.epochs = 1;
  hc.seed = 7;
  hc.out_dir = fresh_dir("exp2_out");
  const ExperimentResult result = experiment_lengths(manifest, hc);

  ASSERT_EQ(result.rows.size(), 3u);
  EXPECT_EQ(result.rows[0].condition, "1s");
  EXPECT_EQ(result.rows[1].condition, "3s");
  EXPECT_EQ(result.rows[2].condition, "5s");
  for (const auto& row : result.rows) {
    EXPECT_EQ(row.provenance, "measured");
    ASSERT_EQ(row.run_accuracies.size(), 1u);
    EXPECT_NEAR(row.mean_accuracy, row.run_accuracies[0], 1e-12);
    std::int64_t total = 0;
    for (const auto& r : row.confusion) {
      for (const std::int64_t v : r) total += v;
    }
    EXPECT_GT(total, 0);
    EXPECT_TRUE(fs::exists(hc.out_dir / ("confusion_" + row.condition + ".csv")));
    EXPECT_TRUE(fs::exists(hc.out_dir / ("history_" + row.condition + "_0.csv")));
  }
  EXPECT_TRUE(fs::exists(hc.out_dir / "table.csv"));

  // segment counts scale with length: 6 s clips -> 11 / 3 / 1 segments
  const auto t1 = result.rows[0].confusion;
  std::int64_t n1 = 0, n5 = 0;
  for (const auto& r : t1) {
    for (const std::int64_t v : r) n1 += v;
  }
  for (const auto& r : result.rows[2].confusion) {
    for (const std::int64_t v : r) n5 += v;
  }
  EXPECT_EQ(n1, 8 * 11);  // 2 test clips per class
  EXPECT_EQ(n5, 8 * 1);
}

TEST(ExperimentTiming, ReferenceRowsPlusOneMeasured) {
  const fs::path corpus = fresh_dir("exp3_corpus");
  const Manifest manifest = small_corpus(corpus);

  HarnessConfig hc;
  hc.runs = 1;
  hc.epochs = 1;
  hc.seed = 3;
  hc.segment_seconds = 3.0;
  hc.out_dir = fresh_dir("exp3_out");
  const ExperimentResult result = experiment_timing(manifest, hc);

  ASSERT_EQ(result.rows.size(), 5u);
  int measured = 0, reference = 0;
  for (const auto& row : result.rows) {
    if (row.provenance == "measured") {
      ++measured;
      EXPECT_EQ(row.condition, "EKM");
      EXPECT_GT(row.mean_train_seconds, 0.0);
    } else {
      ++reference;
      EXPECT_EQ(row.provenance, "reference(not recomputed)");
      EXPECT_TRUE(row.run_accuracies.empty());
    }
  }
  EXPECT_EQ(measured, 1);
  EXPECT_EQ(reference, 4);

  // published baselines carried through verbatim
  EXPECT_EQ(result.rows[0].condition, "LSTM");
  EXPECT_NEAR(result.rows[0].mean_accuracy, 0.875, 1e-12);
  EXPECT_EQ(format_hhmmss(result.rows[0].mean_train_seconds), "00:08:46");
  EXPECT_EQ(result.rows[3].condition, "VGG16");
  EXPECT_EQ(format_hhmmss(result.rows[3].mean_train_seconds), "01:34:09");

  const auto table = read_csv(hc.out_dir / "table.csv");
  ASSERT_EQ(table.size(), 6u);
  EXPECT_EQ(table[0][0], "condition");
  EXPECT_EQ(table[5][0], "EKM");
}

TEST(RunSplits, DeterministicAndDistinctAcrossRuns) {
  const fs::path corpus = fresh_dir("splits_corpus");
  const Manifest manifest = small_corpus(corpus, 6, 2);
  HarnessConfig hc;
  hc.runs = 3;
  hc.seed = 9;
  const auto a = detail::make_run_splits(manifest, hc);
  const auto b = detail::make_run_splits(manifest, hc);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(a[r].assignment, b[r].assignment);
  }
  EXPECT_NE(a[0].assignment, a[1].assignment);
}
