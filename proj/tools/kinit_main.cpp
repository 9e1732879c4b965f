// kinit - Kinit (Ethiopian pentatonic scale) classification pipeline.
//
// Subcommands cover the whole workflow: synthesize a labeled corpus, scan a
// real one, split it, extract feature caches, train and evaluate the EKM
// classifier, aggregate judge votes, and run the three experiment harnesses.
//
// Exit codes: 0 success, 2 user/validation error, 1 internal error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kinit/kinit.hpp"

namespace fs = std::filesystem;
using namespace kinit;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 42;
  int threads = -1;  // -1: KINIT_THREADS env or hardware default
  bool deterministic = true;
};

int workers(const GlobalOpts& g) { return g.threads >= 0 ? g.threads : default_workers(); }

void log_config(const GlobalOpts& g, const std::string& cmd, const std::string& extra) {
  std::cerr << "kinit " << cmd << ": seed=" << g.seed << " threads=" << workers(g)
            << " deterministic=" << (g.deterministic ? "on" : "off")
            << (extra.empty() ? "" : " ") << extra << "\n";
}

std::string fmt(double v, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Feature cache loading shared by train/eval.

struct CachedSplit {
  std::vector<FeatureMatrix> feats;
  std::vector<int> labels;
};

struct FeatureCache {
  std::map<Split, CachedSplit> by_split;
  std::string digest;
  FeatureKind kind = FeatureKind::MFCC;
  int frames = 0;
  int bins = 0;
};

FeatureCache load_feature_cache(const Manifest& manifest, const fs::path& feat_dir) {
  FeatureCache cache;
  int clips_loaded = 0;
  for (const auto& entry : manifest.entries) {
    require(entry.split.has_value(), Errc::BadArgument,
            "manifest has no split assignment for " + entry.clip_id +
                "; run `kinit split` first");
    bool any = false;
    for (int k = 0;; ++k) {
      const fs::path p = feat_dir / feat_filename(entry.clip_id, k);
      if (!fs::exists(p)) break;
      FeatureMatrix f = read_feat_file(p);
      if (cache.digest.empty()) {
        cache.digest = f.config_digest;
        cache.kind = f.kind;
        cache.frames = f.n_frames;
        cache.bins = f.n_bins;
      }
      require(f.config_digest == cache.digest, Errc::BadArgument,
              p.string() + ": feature cache mixes extraction configs");
      require(f.n_frames == cache.frames && f.n_bins == cache.bins, Errc::BadArgument,
              p.string() + ": feature shape differs from the rest of the cache");
      auto& bucket = cache.by_split[*entry.split];
      bucket.feats.push_back(std::move(f));
      bucket.labels.push_back(static_cast<int>(entry.label));
      any = true;
    }
    if (any) ++clips_loaded;
  }
  require(clips_loaded > 0, Errc::BadArgument,
          "no .feat files matching the manifest under " + feat_dir.string());
  return cache;
}

std::vector<LabeledExample<float>> to_examples(const CachedSplit& bucket) {
  std::vector<LabeledExample<float>> out;
  out.reserve(bucket.feats.size());
  for (std::size_t i = 0; i < bucket.feats.size(); ++i) {
    out.push_back({feature_to_tensor<float>(bucket.feats[i]), bucket.labels[i]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommand bodies.

int cmd_synth(const GlobalOpts& g, const fs::path& out_dir, int per_class, int notes,
              double note_seconds, double amplitude) {
  log_config(g, "synth", "out=" + out_dir.string() + " per_class=" + std::to_string(per_class));
  SynthSpec spec;
  spec.notes_per_clip = notes;
  spec.note_duration_s = note_seconds;
  spec.amplitude = amplitude;
  spec.seed = g.seed;
  Manifest manifest = make_synth_corpus(spec, per_class, out_dir);
  write_manifest_csv(manifest, out_dir / "manifest.csv");
  std::cout << "wrote " << manifest.entries.size() << " clips ("
            << fmt(manifest.entries.front().duration_s, "%.1f") << " s each) and manifest.csv to "
            << out_dir.string() << "\n";
  return 0;
}

int cmd_scan(const GlobalOpts& g, const fs::path& root, const fs::path& out_csv) {
  log_config(g, "scan", "root=" + root.string());
  const ScanResult result = scan_dataset(root);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  write_manifest_csv(result.manifest, out_csv);
  const auto counts = result.manifest.class_counts();
  std::cout << "scanned " << result.manifest.entries.size() << " clips:";
  for (int c = 0; c < kNumClasses; ++c) {
    std::cout << " " << label_name(static_cast<KinitLabel>(c)) << "="
              << counts[static_cast<std::size_t>(c)];
  }
  std::cout << "\nmanifest written to " << out_csv.string() << "\n";
  return 0;
}

int cmd_split(const GlobalOpts& g, const fs::path& manifest_csv, const fs::path& out_csv,
              double train_frac, double val_frac) {
  log_config(g, "split",
             "train=" + fmt(train_frac, "%.2f") + " val=" + fmt(val_frac, "%.2f"));
  Manifest manifest = read_manifest_csv(manifest_csv);
  SplitFractions fractions;
  fractions.train = train_frac;
  fractions.val = val_frac;
  fractions.test = 1.0 - train_frac - val_frac;
  const SplitSpec spec = split_dataset(manifest, fractions, derive_seed(g.seed, "split", 0));
  apply_split(manifest, spec);
  write_manifest_csv(manifest, out_csv);

  std::array<int, 3> totals{};
  for (const auto& e : manifest.entries) ++totals[static_cast<std::size_t>(*e.split)];
  std::cout << "split " << manifest.entries.size() << " clips: train=" << totals[0]
            << " val=" << totals[1] << " test=" << totals[2] << " -> " << out_csv.string()
            << "\n";
  return 0;
}

int cmd_extract(const GlobalOpts& g, const fs::path& manifest_csv, const std::string& kind_name,
                double seg_seconds, const fs::path& out_dir, int fft_size, int hop_size) {
  const auto kind = parse_feature_kind(kind_name);
  require(kind.has_value(), Errc::BadArgument, "unknown feature kind '" + kind_name + "'");
  log_config(g, "extract", "kind=" + kind_name + " len=" + fmt(seg_seconds, "%.0f") + "s");

  FeatureConfig cfg;
  cfg.kind = *kind;
  cfg.segment_seconds = seg_seconds;
  cfg.fft_size = fft_size;
  cfg.hop_size = hop_size;
  cfg.validate();

  const Manifest manifest = read_manifest_csv(manifest_csv);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, Errc::IoFailure, "cannot create " + out_dir.string());

  std::array<std::int64_t, kNumClasses> seg_counts{};
  std::vector<int> per_clip(manifest.entries.size(), 0);
  std::vector<std::string> warnings(manifest.entries.size());
  parallel_for(
      manifest.entries.size(),
      [&](std::size_t i) {
        const auto& entry = manifest.entries[i];
        AudioClip clip = read_wav(entry.path);
        if (clip.sample_rate_hz != kCorpusRateHz) clip = resample_linear(clip, kCorpusRateHz);
        clip.label = entry.label;
        clip.source_id = entry.clip_id;
        try {
          const auto segments = segment_clip(clip, cfg);
          for (std::size_t k = 0; k < segments.size(); ++k) {
            const FeatureMatrix f = extract_features(segments[k], cfg);
            write_feat_file(f, out_dir / feat_filename(entry.clip_id, static_cast<int>(k)));
          }
          per_clip[i] = static_cast<int>(segments.size());
        } catch (const KinitError& e) {
          if (e.code() != Errc::ClipTooShort) throw;
          warnings[i] = entry.clip_id + ": clip too short for " + fmt(seg_seconds, "%.0f") +
                        " s segments, skipped";
        }
      },
      workers(g));

  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    if (!warnings[i].empty()) std::cerr << "warning: " << warnings[i] << "\n";
    seg_counts[static_cast<std::size_t>(manifest.entries[i].label)] += per_clip[i];
  }
  std::int64_t total = 0;
  std::cout << "segments per class:";
  for (int c = 0; c < kNumClasses; ++c) {
    std::cout << " " << label_name(static_cast<KinitLabel>(c)) << "="
              << seg_counts[static_cast<std::size_t>(c)];
    total += seg_counts[static_cast<std::size_t>(c)];
  }
  std::cout << "\nwrote " << total << " .feat files to " << out_dir.string() << "\n";
  return 0;
}

int cmd_train(const GlobalOpts& g, const fs::path& manifest_csv, const fs::path& feat_dir,
              const fs::path& out_dir, int epochs, int batch, double lr) {
  log_config(g, "train", "epochs=" + std::to_string(epochs) + " batch=" + std::to_string(batch) +
                             " lr=" + fmt(lr, "%g"));
  const Manifest manifest = read_manifest_csv(manifest_csv);
  FeatureCache cache = load_feature_cache(manifest, feat_dir);
  auto& train_bucket = cache.by_split[Split::Train];
  require(!train_bucket.feats.empty(), Errc::EmptyTrainingSet,
          "no training segments in the feature cache");

  const BinStats stats = standardize(train_bucket.feats);
  apply_standardize(cache.by_split[Split::Val].feats, stats);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, Errc::IoFailure, "cannot create " + out_dir.string());
  write_stats_csv(stats, out_dir / "stats.csv");

  const auto train_set = to_examples(train_bucket);
  const auto val_set = to_examples(cache.by_split[Split::Val]);
  std::cerr << "training on " << train_set.size() << " segments (" << cache.frames << "x"
            << cache.bins << " " << feature_kind_name(cache.kind) << "), validating on "
            << val_set.size() << "\n";

  EkmModel<float> model =
      build_ekm<float>(ModelConfig{}, cache.frames, cache.bins, derive_seed(g.seed, "init", 0));
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = batch;
  tc.lr = static_cast<float>(lr);
  tc.seed = derive_seed(g.seed, "train", 0);
  tc.deterministic = g.deterministic;

  const TrainHistory history = train_ekm(
      model, train_set, val_set, tc,
      [&](const EpochStats& s) {
        std::cerr << "[epoch " << s.epoch << "/" << epochs << "] loss " << fmt(s.train_loss)
                  << " acc " << fmt(s.train_acc) << " val_loss " << fmt(s.val_loss) << " val_acc "
                  << fmt(s.val_acc) << " (" << fmt(s.seconds_elapsed, "%.1f") << " s)\n";
      },
      workers(g));

  save_checkpoint(model, out_dir / "checkpoint.ekmw");
  write_history_csv(history, out_dir / "history.csv", g.deterministic);
  std::cout << "trained " << epochs << " epochs in " << format_hhmmss(history.wall_clock_s)
            << "; final train acc " << fmt(history.epochs.back().train_acc) << "; artifacts in "
            << out_dir.string() << "\n";
  return 0;
}

void print_confusion(const std::array<std::array<std::int64_t, 4>, 4>& confusion) {
  std::printf("%12s", "truth\\pred");
  for (int c = 0; c < kNumClasses; ++c) {
    std::printf("%11s", std::string(label_name(static_cast<KinitLabel>(c))).c_str());
  }
  std::printf("\n");
  for (int r = 0; r < kNumClasses; ++r) {
    std::printf("%12s", std::string(label_name(static_cast<KinitLabel>(r))).c_str());
    for (int c = 0; c < kNumClasses; ++c) {
      std::printf("%11lld",
                  static_cast<long long>(confusion[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]));
    }
    std::printf("\n");
  }
}

int cmd_eval(const GlobalOpts& g, const fs::path& manifest_csv, const fs::path& feat_dir,
             const fs::path& model_dir, const fs::path& out_dir) {
  log_config(g, "eval", "model=" + model_dir.string());
  const Manifest manifest = read_manifest_csv(manifest_csv);
  FeatureCache cache = load_feature_cache(manifest, feat_dir);
  auto& test_bucket = cache.by_split[Split::Test];
  require(!test_bucket.feats.empty(), Errc::EmptyTestSet,
          "no test segments in the feature cache");

  const BinStats stats = read_stats_csv(model_dir / "stats.csv");
  apply_standardize(test_bucket.feats, stats);
  const EkmModel<float> model = load_checkpoint(model_dir / "checkpoint.ekmw");
  require(model.in_frames == cache.frames && model.in_bins == cache.bins, Errc::ShapeMismatch,
          "checkpoint input shape does not match the feature cache");

  const EvalReport report = evaluate(model, to_examples(test_bucket), workers(g));

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, Errc::IoFailure, "cannot create " + out_dir.string());
  write_confusion_csv(report.confusion, out_dir / "confusion.csv");
  {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"class", "precision", "recall", "f1"});
    for (int c = 0; c < kNumClasses; ++c) {
      const auto& m = report.per_class[static_cast<std::size_t>(c)];
      rows.push_back({std::string(label_name(static_cast<KinitLabel>(c))), fmt(m.precision, "%.6f"),
                      fmt(m.recall, "%.6f"), fmt(m.f1, "%.6f")});
    }
    rows.push_back({"accuracy", fmt(report.accuracy, "%.6f"), "", ""});
    rows.push_back({"n_segments", std::to_string(report.n_segments), "", ""});
    write_csv(out_dir / "metrics.csv", rows);
  }

  std::cout << "segment-level accuracy " << fmt(report.accuracy) << " over " << report.n_segments
            << " segments\n";
  print_confusion(report.confusion);
  std::cout << "reports written to " << out_dir.string() << "\n";
  return 0;
}

int cmd_kappa(const GlobalOpts& g, const fs::path& votes_csv, const std::string& variant_name,
              int threshold, bool exclude_rejected, const fs::path& out_csv) {
  log_config(g, "kappa", "variant=" + variant_name);
  const KappaVariant variant =
      variant_name == "free-marginal" ? KappaVariant::FreeMarginal : KappaVariant::Fleiss;
  require(variant_name == "fleiss" || variant_name == "free-marginal", Errc::BadArgument,
          "variant must be fleiss or free-marginal");

  const VotesTable table = read_votes_csv(votes_csv);
  std::vector<std::optional<KinitLabel>> accepted;
  RatingsMatrix rated = table.matrix;
  if (exclude_rejected) rated.counts.clear();
  int n_accepted = 0;
  for (std::size_t i = 0; i < table.matrix.counts.size(); ++i) {
    const auto label =
        majority_label(table.matrix.counts[i], table.matrix.raters_per_item, threshold);
    accepted.push_back(label);
    if (label) ++n_accepted;
    if (exclude_rejected && label) rated.counts.push_back(table.matrix.counts[i]);
  }
  const AgreementReport report = fleiss_kappa(rated, variant);

  std::cout << "items=" << table.matrix.counts.size() << " accepted=" << n_accepted
            << " rejected=" << (table.matrix.counts.size() - static_cast<std::size_t>(n_accepted))
            << "\n";
  std::cout << "p_bar_0=" << fmt(report.p_bar_0, "%.6f") << " p_bar_e="
            << fmt(report.p_bar_e, "%.6f") << "\n";
  std::cout << "kappa=" << fmt(report.kappa, "%.6f") << " (" << variant_name << ")\n";

  if (!out_csv.empty()) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"clip_id", "label"});
    for (std::size_t i = 0; i < table.clip_ids.size(); ++i) {
      rows.push_back({table.clip_ids[i],
                      accepted[i] ? std::string(label_name(*accepted[i])) : "REJECTED"});
    }
    write_csv(out_csv, rows);
    std::cout << "accepted labels written to " << out_csv.string() << "\n";
  }
  return 0;
}

void print_table(const ExperimentResult& result) {
  std::printf("%-12s %-26s %-10s %-10s %s\n", "condition", "provenance", "mean_acc%", "time",
              "runs%");
  for (const auto& row : result.rows) {
    std::string runs;
    for (std::size_t i = 0; i < row.run_accuracies.size(); ++i) {
      if (i) runs += ";";
      runs += fmt(100.0 * row.run_accuracies[i], "%.2f");
    }
    std::printf("%-12s %-26s %-10s %-10s %s\n", row.condition.c_str(), row.provenance.c_str(),
                fmt(100.0 * row.mean_accuracy, "%.2f").c_str(),
                format_hhmmss(row.mean_train_seconds).c_str(), runs.c_str());
  }
}

int cmd_experiment(const GlobalOpts& g, int which, const fs::path& manifest_csv,
                   const fs::path& out_dir, int runs, int epochs, int batch, double lr,
                   double seg_seconds) {
  log_config(g, "experiment " + std::to_string(which),
             "runs=" + std::to_string(runs) + " epochs=" + std::to_string(epochs));
  const Manifest manifest = read_manifest_csv(manifest_csv);

  HarnessConfig hc;
  hc.runs = runs;
  hc.epochs = epochs;
  hc.batch_size = batch;
  hc.lr = static_cast<float>(lr);
  hc.seed = g.seed;
  hc.segment_seconds = seg_seconds;
  hc.out_dir = out_dir;
  hc.workers = workers(g);
  hc.deterministic = g.deterministic;
  hc.log = [](const std::string& msg) { std::cerr << msg << "\n"; };

  ExperimentResult result;
  switch (which) {
    case 1: result = experiment_features(manifest, hc); break;
    case 2: result = experiment_lengths(manifest, hc); break;
    case 3: result = experiment_timing(manifest, hc); break;
    default: fail(Errc::BadArgument, "experiment number must be 1, 2 or 3");
  }
  print_table(result);
  std::cout << "artifacts written to " << out_dir.string() << "\n";
  return 0;
}

int cmd_report(const GlobalOpts& g, const fs::path& dir) {
  log_config(g, "report", "dir=" + dir.string());
  const fs::path table_csv = dir / "table.csv";
  require(fs::exists(table_csv), Errc::BadArgument, "no table.csv under " + dir.string());
  const auto rows = read_csv(table_csv);
  require(!rows.empty() && rows.front().size() == 5, Errc::BadArgument,
          table_csv.string() + ": unexpected table format");

  ExperimentResult result;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ExperimentRow row;
    row.condition = rows[i][0];
    row.provenance = rows[i][1];
    std::string runs = rows[i][2];
    std::size_t pos = 0;
    while (pos < runs.size()) {
      const std::size_t next = runs.find(';', pos);
      const std::string tok = runs.substr(pos, next == std::string::npos ? next : next - pos);
      if (!tok.empty()) row.run_accuracies.push_back(std::stod(tok) / 100.0);
      if (next == std::string::npos) break;
      pos = next + 1;
    }
    row.mean_accuracy = std::stod(rows[i][3]) / 100.0;
    const std::string& t = rows[i][4];
    require(t.size() == 8 && t[2] == ':' && t[5] == ':', Errc::BadArgument,
            "bad time field '" + t + "'");
    row.mean_train_seconds =
        std::stod(t.substr(0, 2)) * 3600 + std::stod(t.substr(3, 2)) * 60 + std::stod(t.substr(6, 2));
    result.rows.push_back(std::move(row));
  }
  print_table(result);

  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("confusion_", 0) != 0 || entry.path().extension() != ".csv") continue;
    const auto conf = read_csv(entry.path());
    if (conf.size() != 5) continue;
    std::printf("\n%s (rows = truth)\n", name.c_str());
    std::array<std::array<std::int64_t, 4>, 4> m{};
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        m[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
            std::stoll(conf[static_cast<std::size_t>(r) + 1][static_cast<std::size_t>(c) + 1]);
      }
    }
    print_confusion(m);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kinit classification pipeline: WAV ingestion, feature extraction, EKM "
               "training, agreement analysis and experiment harnesses"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "root seed; all randomness derives from it")
      ->capture_default_str();
  app.add_option("--threads", g.threads,
                 "worker count (0 = sequential; default: KINIT_THREADS or hardware)");
  app.add_flag("--deterministic,!--no-deterministic", g.deterministic,
               "write byte-reproducible artifacts (zeroes wall-clock columns)")
      ->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "generate a labeled synthetic pentatonic corpus");
  fs::path synth_out;
  int per_class = 25, notes = 60;
  double note_seconds = 0.5, amplitude = 0.3;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--per-class", per_class, "clips per class")->capture_default_str();
  synth->add_option("--notes", notes, "notes per clip")->capture_default_str();
  synth->add_option("--note-seconds", note_seconds, "seconds per note")->capture_default_str();
  synth->add_option("--amplitude", amplitude, "sine amplitude")->capture_default_str();

  // scan
  auto* scan = app.add_subcommand("scan", "scan a corpus directory into a manifest CSV");
  fs::path scan_root, scan_out;
  scan->add_option("--root", scan_root, "corpus directory")->required();
  scan->add_option("--out", scan_out, "manifest CSV to write")->required();

  // split
  auto* split = app.add_subcommand("split", "assign train/val/test splits in a manifest");
  fs::path split_manifest, split_out;
  double train_frac = 0.70, val_frac = 0.10;
  split->add_option("--manifest", split_manifest, "manifest CSV")->required();
  split->add_option("--out", split_out, "output manifest CSV")->required();
  split->add_option("--train", train_frac, "train fraction")->capture_default_str();
  split->add_option("--val", val_frac, "validation fraction")->capture_default_str();

  // extract
  auto* extract = app.add_subcommand("extract", "extract feature caches for every clip");
  fs::path ex_manifest, ex_out;
  std::string ex_kind = "mfcc";
  double ex_len = 3.0;
  int ex_fft = 2048, ex_hop = 512;
  extract->add_option("--manifest", ex_manifest, "manifest CSV")->required();
  extract->add_option("--kind", ex_kind, "mfcc|melspec|filterbank|chroma")->capture_default_str();
  extract->add_option("--len", ex_len, "segment length in seconds (1, 3 or 5)")
      ->capture_default_str();
  extract->add_option("--out", ex_out, "feature cache directory")->required();
  extract->add_option("--fft", ex_fft, "FFT size")->capture_default_str();
  extract->add_option("--hop", ex_hop, "hop size")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "train EKM on a feature cache");
  fs::path tr_manifest, tr_features, tr_out;
  int tr_epochs = 250, tr_batch = 32;
  double tr_lr = 1e-3;
  train->add_option("--manifest", tr_manifest, "manifest CSV with splits")->required();
  train->add_option("--features", tr_features, "feature cache directory")->required();
  train->add_option("--out", tr_out, "model output directory")->required();
  train->add_option("--epochs", tr_epochs, "training epochs")->capture_default_str();
  train->add_option("--batch", tr_batch, "mini-batch size")->capture_default_str();
  train->add_option("--lr", tr_lr, "Adam learning rate")->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a trained model on the test split");
  fs::path ev_manifest, ev_features, ev_model, ev_out;
  eval->add_option("--manifest", ev_manifest, "manifest CSV with splits")->required();
  eval->add_option("--features", ev_features, "feature cache directory")->required();
  eval->add_option("--model", ev_model, "model directory (checkpoint.ekmw + stats.csv)")
      ->required();
  eval->add_option("--out", ev_out, "report output directory")->required();

  // kappa
  auto* kappa = app.add_subcommand("kappa", "inter-judge agreement from a votes CSV");
  fs::path ka_votes, ka_out;
  std::string ka_variant = "fleiss";
  int ka_threshold = 3;
  bool ka_exclude = false;
  kappa->add_option("--votes", ka_votes, "votes CSV (clip_id,judge1,...)")->required();
  kappa->add_option("--variant", ka_variant, "fleiss|free-marginal")->capture_default_str();
  kappa->add_option("--threshold", ka_threshold, "majority threshold")->capture_default_str();
  kappa->add_flag("--exclude-rejected", ka_exclude,
                  "compute kappa over accepted items only");
  kappa->add_option("--out", ka_out, "write accepted labels CSV");

  // experiment
  auto* experiment = app.add_subcommand("experiment", "run experiment 1, 2 or 3");
  int which = 1, xp_runs = 5, xp_epochs = 250, xp_batch = 32;
  double xp_lr = 1e-3, xp_len = 3.0;
  fs::path xp_manifest, xp_out;
  experiment->add_option("number", which, "1 = features, 2 = lengths, 3 = timing")->required();
  experiment->add_option("--manifest", xp_manifest, "manifest CSV")->required();
  experiment->add_option("--out", xp_out, "artifact directory")->required();
  experiment->add_option("--runs", xp_runs, "repetitions per condition")->capture_default_str();
  experiment->add_option("--epochs", xp_epochs, "training epochs")->capture_default_str();
  experiment->add_option("--batch", xp_batch, "mini-batch size")->capture_default_str();
  experiment->add_option("--lr", xp_lr, "Adam learning rate")->capture_default_str();
  experiment->add_option("--len", xp_len, "segment seconds (experiments 1 and 3)")
      ->capture_default_str();

  // report
  auto* report = app.add_subcommand("report", "pretty-print experiment artifacts");
  fs::path rp_dir;
  report->add_option("--dir", rp_dir, "experiment artifact directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help/version exit 0, any parse error is a usage error
  }

  try {
    if (*synth) return cmd_synth(g, synth_out, per_class, notes, note_seconds, amplitude);
    if (*scan) return cmd_scan(g, scan_root, scan_out);
    if (*split) return cmd_split(g, split_manifest, split_out, train_frac, val_frac);
    if (*extract) return cmd_extract(g, ex_manifest, ex_kind, ex_len, ex_out, ex_fft, ex_hop);
    if (*train) return cmd_train(g, tr_manifest, tr_features, tr_out, tr_epochs, tr_batch, tr_lr);
    if (*eval) return cmd_eval(g, ev_manifest, ev_features, ev_model, ev_out);
    if (*kappa) return cmd_kappa(g, ka_votes, ka_variant, ka_threshold, ka_exclude, ka_out);
    if (*experiment) {
      return cmd_experiment(g, which, xp_manifest, xp_out, xp_runs, xp_epochs, xp_batch, xp_lr,
                            xp_len);
    }
    if (*report) return cmd_report(g, rp_dir);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const KinitError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
