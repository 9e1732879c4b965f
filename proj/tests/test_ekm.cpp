#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "kinit/dataset.hpp"
#include "kinit/ekm.hpp"
#include "kinit/rng.hpp"

namespace fs = std::filesystem;
using namespace kinit;

namespace {

// Labeled MFCC examples from short synthetic clips: four classes, five 1 s
// segments each.
std::vector<LabeledExample<float>> tiny_training_set() {
  SynthSpec spec;
  spec.notes_per_clip = 6;  // 3 s clip
  FeatureConfig fcfg;
  fcfg.kind = FeatureKind::MFCC;
  fcfg.segment_seconds = 1.0;

  std::vector<FeatureMatrix> feats;
  std::vector<int> labels;
  for (int c = 0; c < 4; ++c) {
    const AudioClip clip = synth_clip(c, spec, 1);
    for (const Segment& seg : segment_clip(clip, fcfg)) {
      feats.push_back(mfcc_features(seg, fcfg));
      labels.push_back(c);
    }
  }
  standardize(feats);
  std::vector<LabeledExample<float>> out;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    out.push_back({feature_to_tensor<float>(feats[i]), labels[i]});
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Shape propagation and parameter counts.

TEST(EkmShapes, MfccThreeSecondInput) {
  // 94 x 13 input: pool1 (3x3, ceil) -> 32 x 5, pools 2-4 identity,
  // flatten = 32 * 5 * 256
  const ShapeInfo info = ekm_shapes(ModelConfig{}, 94, 13);
  EXPECT_EQ(info.pool_out[0].h, 32);
  EXPECT_EQ(info.pool_out[0].w, 5);
  EXPECT_EQ(info.pool_out[0].c, 32);
  EXPECT_EQ(info.pool_out[3].h, 32);
  EXPECT_EQ(info.pool_out[3].w, 5);
  EXPECT_EQ(info.pool_out[3].c, 256);
  EXPECT_EQ(info.flatten_len, 40960);
}

TEST(EkmShapes, FlattenMatchesRuntimeTensor) {
  for (const auto& [frames, bins] : std::vector<std::pair<int, int>>{
           {94, 13}, {32, 13}, {94, 40}, {94, 128}, {59, 12}, {3, 2}}) {
    const ShapeInfo info = ekm_shapes(ModelConfig{}, frames, bins);
    EkmModel<float> model = build_ekm<float>(ModelConfig{}, frames, bins, 1);
    nn::Tensor<float> x({frames, bins, 1});
    EkmCache<float> cache;
    ekm_forward(model, x, cache);
    EXPECT_EQ(static_cast<std::int64_t>(cache.flat.numel()), info.flatten_len)
        << frames << "x" << bins;
    EXPECT_EQ(model.flatten_len(), info.flatten_len);
  }
}

TEST(EkmBuild, ParameterCounts) {
  const EkmModel<float> model = build_ekm<float>(ModelConfig{}, 94, 13, 0);
  EXPECT_EQ(model.conv[0].param_count(), 320);  // 3*3*1*32 + 32
  EXPECT_EQ(model.conv[1].param_count(), 3 * 3 * 32 * 64 + 64);
  EXPECT_EQ(model.conv[2].param_count(), 3 * 3 * 64 * 128 + 128);
  EXPECT_EQ(model.conv[3].param_count(), 2 * 2 * 128 * 256 + 256);
  EXPECT_EQ(model.dense.param_count(), 40960 * 4 + 4);
}

TEST(EkmBuild, DeterministicPerSeed) {
  const auto a = build_ekm<float>(ModelConfig{}, 32, 13, 77);
  const auto b = build_ekm<float>(ModelConfig{}, 32, 13, 77);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(a.conv[static_cast<std::size_t>(i)].w.data, b.conv[static_cast<std::size_t>(i)].w.data);
  }
  EXPECT_EQ(a.dense.w.data, b.dense.w.data);
  const auto c = build_ekm<float>(ModelConfig{}, 32, 13, 78);
  EXPECT_NE(a.dense.w.data, c.dense.w.data);
}

TEST(EkmBuild, RejectsTooSmallInput) {
  try {
    build_ekm<float>(ModelConfig{}, 2, 13, 0);
    FAIL() << "expected ShapeTooSmall";
  } catch (const KinitError& e) {
    EXPECT_EQ(e.code(), Errc::ShapeTooSmall);
  }
  EXPECT_THROW(build_ekm<float>(ModelConfig{}, 94, 1, 0), KinitError);
}

// ---------------------------------------------------------------------------
// Prediction basics.

TEST(EkmPredict, ZeroDenseWeightsGiveExactlyUniformProbs) {
  EkmModel<float> model = build_ekm<float>(ModelConfig{}, 32, 13, 3);
  model.dense.w.zero();
  model.dense.b.zero();
  Rng rng(4);
  nn::Tensor<float> x({32, 13, 1});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const auto probs = predict_segment(model, x);
  for (const double p : probs) EXPECT_EQ(p, 0.25);
}

TEST(EkmPredict, ProbsSumToOneAndRepeatDeterministically) {
  const EkmModel<float> model = build_ekm<float>(ModelConfig{}, 32, 13, 5);
  Rng rng(6);
  nn::Tensor<float> x({32, 13, 1});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const auto a = predict_segment(model, x);
  const auto b = predict_segment(model, x);
  EXPECT_EQ(a, b);
  double sum = 0.0;
  for (const double p : a) sum += p;
  EXPECT_NEAR(sum, 1.0, 1e-6);
}

TEST(EkmPredict, UntrainedLossNearLogFour) {
  const auto examples = tiny_training_set();
  const auto& first = examples.front();
  const EkmModel<float> model =
      build_ekm<float>(ModelConfig{}, first.x.dim(0), first.x.dim(1), 9);
  double loss_sum = 0.0;
  int n = 0;
  EkmCache<float> cache;
  for (const auto& ex : examples) {
    ekm_forward(model, ex.x, cache);
    loss_sum += static_cast<double>(
        nn::softmax_cross_entropy_index(cache.logits, ex.label, cache.probs));
    ++n;
  }
  const double mean_loss = loss_sum / n;
  EXPECT_GT(mean_loss, 1.0);
  EXPECT_LT(mean_loss, 2.0);
  EXPECT_NEAR(mean_loss, std::log(4.0), 0.35);
}

// ---------------------------------------------------------------------------
// Training loop.

TEST(EkmTrain, ZeroLearningRateLeavesParamsUnchanged) {
  const auto examples = tiny_training_set();
  EkmModel<float> model =
      build_ekm<float>(ModelConfig{}, examples[0].x.dim(0), examples[0].x.dim(1), 11);
  const auto before = model.cast<float>();
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.lr = 0.0f;
  train_ekm(model, examples, {}, cfg);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(model.conv[static_cast<std::size_t>(i)].w.data,
              before.conv[static_cast<std::size_t>(i)].w.data);
  }
  EXPECT_EQ(model.dense.w.data, before.dense.w.data);
  EXPECT_EQ(model.dense.b.data, before.dense.b.data);
}

TEST(EkmTrain, OverfitsTinySyntheticSet) {
  const auto examples = tiny_training_set();
  ASSERT_EQ(examples.size(), 20u);
  EkmModel<float> model =
      build_ekm<float>(ModelConfig{}, examples[0].x.dim(0), examples[0].x.dim(1), 13);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.seed = 5;
  const TrainHistory history = train_ekm(model, examples, {}, cfg);
  ASSERT_EQ(history.epochs.size(), 30u);
  EXPECT_LT(history.epochs.back().train_loss, history.epochs.front().train_loss);
  EXPECT_GT(history.epochs.back().train_acc, 0.5);
}

TEST(EkmTrain, DeterministicHistoryAndWeights) {
  const auto examples = tiny_training_set();
  std::vector<LabeledExample<float>> val(examples.begin(), examples.begin() + 4);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 21;

  auto run = [&] {
    EkmModel<float> model =
        build_ekm<float>(ModelConfig{}, examples[0].x.dim(0), examples[0].x.dim(1), 31);
    const TrainHistory h = train_ekm(model, examples, val, cfg);
    return std::make_pair(std::move(model), h);
  };
  const auto [m1, h1] = run();
  const auto [m2, h2] = run();
  ASSERT_EQ(h1.epochs.size(), h2.epochs.size());
  for (std::size_t e = 0; e < h1.epochs.size(); ++e) {
    EXPECT_EQ(h1.epochs[e].train_loss, h2.epochs[e].train_loss);
    EXPECT_EQ(h1.epochs[e].val_loss, h2.epochs[e].val_loss);
    EXPECT_EQ(h1.epochs[e].train_acc, h2.epochs[e].train_acc);
  }
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(m1.conv[static_cast<std::size_t>(i)].w.data,
              m2.conv[static_cast<std::size_t>(i)].w.data);
    EXPECT_EQ(m1.conv[static_cast<std::size_t>(i)].b.data,
              m2.conv[static_cast<std::size_t>(i)].b.data);
  }
  EXPECT_EQ(m1.dense.w.data, m2.dense.w.data);
}

TEST(EkmTrain, WorkerCountDoesNotChangeResults) {
  const auto examples = tiny_training_set();
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 8;
  auto run = [&](int workers) {
    EkmModel<float> model =
        build_ekm<float>(ModelConfig{}, examples[0].x.dim(0), examples[0].x.dim(1), 15);
    train_ekm(model, examples, {}, cfg, nullptr, workers);
    return model;
  };
  const auto sequential = run(1);
  const auto parallel = run(4);
  EXPECT_EQ(sequential.dense.w.data, parallel.dense.w.data);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(sequential.conv[static_cast<std::size_t>(i)].w.data,
              parallel.conv[static_cast<std::size_t>(i)].w.data);
  }
}

TEST(EkmTrain, EmptyTrainingSetRejected) {
  EkmModel<float> model = build_ekm<float>(ModelConfig{}, 32, 13, 1);
  try {
    train_ekm(model, {}, {}, TrainConfig{});
    FAIL() << "expected EmptyTrainingSet";
  } catch (const KinitError& e) {
    EXPECT_EQ(e.code(), Errc::EmptyTrainingSet);
  }
}

TEST(EkmTrain, MonotoneTimeAxisAndEpochNumbers) {
  const auto examples = tiny_training_set();
  EkmModel<float> model =
      build_ekm<float>(ModelConfig{}, examples[0].x.dim(0), examples[0].x.dim(1), 2);
  TrainConfig cfg;
  cfg.epochs = 4;
  const TrainHistory history = train_ekm(model, examples, {}, cfg);
  for (std::size_t e = 0; e < history.epochs.size(); ++e) {
    EXPECT_EQ(history.epochs[e].epoch, static_cast<int>(e) + 1);
    if (e > 0) {
      EXPECT_GE(history.epochs[e].seconds_elapsed, history.epochs[e - 1].seconds_elapsed);
    }
  }
  EXPECT_GE(history.wall_clock_s, history.epochs.back().seconds_elapsed);
}

// ---------------------------------------------------------------------------
// Clip-level aggregation.

TEST(ClipVote, MajorityWins) {
  EXPECT_EQ(clip_vote_winner({3, 1, 0, 0}, {2.0, 1.5, 0.3, 0.2}), 0);
  EXPECT_EQ(clip_vote_winner({1, 0, 3, 0}, {2.0, 1.5, 0.3, 0.2}), 2);
}

TEST(ClipVote, TieBreaksBySummedProbs) {
  EXPECT_EQ(clip_vote_winner({2, 2, 0, 0}, {1.1, 1.9, 0.5, 0.5}), 1);
  EXPECT_EQ(clip_vote_winner({2, 2, 0, 0}, {1.9, 1.1, 0.5, 0.5}), 0);
}

TEST(ClipVote, FullTieFallsToLowestIndex) {
  EXPECT_EQ(clip_vote_winner({1, 1, 1, 1}, {1.0, 1.0, 1.0, 1.0}), 0);
}

TEST(PredictClip, SingleSegmentClipReturnsItsArgmax) {
  SynthSpec spec;
  spec.notes_per_clip = 2;  // exactly 1 s
  const AudioClip clip = synth_clip(0, spec, 1);
  FeatureConfig fcfg;
  fcfg.kind = FeatureKind::MFCC;
  fcfg.segment_seconds = 1.0;

  std::vector<FeatureMatrix> feats{mfcc_features(segment_clip(clip, fcfg)[0], fcfg)};
  const BinStats stats = compute_bin_stats(feats);

  const EkmModel<float> model = build_ekm<float>(ModelConfig{}, feats[0].n_frames, 13, 7);
  const ClipPrediction pred = predict_clip(model, clip, fcfg, stats);
  ASSERT_EQ(pred.segment_argmax.size(), 1u);
  EXPECT_EQ(static_cast<int>(pred.label), pred.segment_argmax[0]);
  int total_votes = 0;
  for (const int v : pred.votes) total_votes += v;
  EXPECT_EQ(total_votes, 1);
}

// ---------------------------------------------------------------------------
// Checkpoints.

TEST(Checkpoint, RoundTripBitExact) {
  const EkmModel<float> model = build_ekm<float>(ModelConfig{}, 32, 13, 123);
  const fs::path p = fs::path(::testing::TempDir()) / "model.ekmw";
  save_checkpoint(model, p);
  const EkmModel<float> back = load_checkpoint(p);
  EXPECT_EQ(back.in_frames, 32);
  EXPECT_EQ(back.in_bins, 13);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(back.conv[static_cast<std::size_t>(i)].w.shape,
              model.conv[static_cast<std::size_t>(i)].w.shape);
    EXPECT_EQ(back.conv[static_cast<std::size_t>(i)].w.data,
              model.conv[static_cast<std::size_t>(i)].w.data);
    EXPECT_EQ(back.conv[static_cast<std::size_t>(i)].b.data,
              model.conv[static_cast<std::size_t>(i)].b.data);
  }
  EXPECT_EQ(back.dense.w.data, model.dense.w.data);
  EXPECT_EQ(back.dense.b.data, model.dense.b.data);

  // same predictions after the round trip
  Rng rng(9);
  nn::Tensor<float> x({32, 13, 1});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  EXPECT_EQ(predict_segment(model, x), predict_segment(back, x));
}

TEST(Checkpoint, SameSeedSameBytes) {
  const fs::path a = fs::path(::testing::TempDir()) / "ckpt_a.ekmw";
  const fs::path b = fs::path(::testing::TempDir()) / "ckpt_b.ekmw";
  save_checkpoint(build_ekm<float>(ModelConfig{}, 32, 13, 5), a);
  save_checkpoint(build_ekm<float>(ModelConfig{}, 32, 13, 5), b);
  EXPECT_EQ(read_file_bytes(a), read_file_bytes(b));
}

TEST(Checkpoint, CorruptFileRejected) {
  const fs::path p = fs::path(::testing::TempDir()) / "bad.ekmw";
  write_file_bytes(p, "EKMWnope");
  try {
    load_checkpoint(p);
    FAIL() << "expected MalformedContainer";
  } catch (const KinitError& e) {
    EXPECT_EQ(e.code(), Errc::MalformedContainer);
  }
}
