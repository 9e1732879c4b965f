#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "kinit/binio.hpp"
#include "kinit/features.hpp"
#include "kinit/nn.hpp"
#include "kinit/parallel.hpp"

namespace kinit {

// The EKM stack: conv32-3x3 / pool3x3, conv64-3x3, conv128-3x3 and
// conv256-2x2 each with ReLU and identity 1x1 pools, then flatten,
// dense(4), softmax.
struct ModelConfig {
  std::array<int, 4> conv_channels{32, 64, 128, 256};
  std::array<int, 4> conv_kernels{3, 3, 3, 2};
  std::array<int, 4> pool_sizes{3, 1, 1, 1};
  int n_classes = kNumClasses;
};

struct StageShape {
  int h = 0, w = 0, c = 0;
};

struct ShapeInfo {
  std::array<StageShape, 4> conv_out;  // post-conv (== pool input)
  std::array<StageShape, 4> pool_out;
  std::int64_t flatten_len = 0;
};

// Same-padded convs keep spatial dims; pools use ceil semantics.
inline ShapeInfo ekm_shapes(const ModelConfig& cfg, int frames, int bins) {
  require(frames >= 3 && bins >= 2, Errc::ShapeTooSmall,
          "EKM needs input of at least 3 frames x 2 bins, got " + std::to_string(frames) +
              "x" + std::to_string(bins));
  ShapeInfo info;
  int h = frames, w = bins;
  for (int i = 0; i < 4; ++i) {
    info.conv_out[static_cast<std::size_t>(i)] = {h, w, cfg.conv_channels[static_cast<std::size_t>(i)]};
    const int p = cfg.pool_sizes[static_cast<std::size_t>(i)];
    h = (h + p - 1) / p;
    w = (w + p - 1) / p;
    info.pool_out[static_cast<std::size_t>(i)] = {h, w, cfg.conv_channels[static_cast<std::size_t>(i)]};
  }
  info.flatten_len = static_cast<std::int64_t>(h) * w * cfg.conv_channels[3];
  return info;
}

template <typename T>
struct EkmModel {
  struct Layer {
    nn::Tensor<T> w;
    nn::Tensor<T> b;

    std::int64_t param_count() const { return w.numel() + b.numel(); }
  };

  ModelConfig cfg;
  int in_frames = 0;
  int in_bins = 0;
  std::array<Layer, 4> conv;
  Layer dense;

  std::int64_t flatten_len() const { return ekm_shapes(cfg, in_frames, in_bins).flatten_len; }

  std::int64_t param_count() const {
    std::int64_t n = dense.param_count();
    for (const auto& l : conv) n += l.param_count();
    return n;
  }

  template <typename U>
  EkmModel<U> cast() const {
    EkmModel<U> out;
    out.cfg = cfg;
    out.in_frames = in_frames;
    out.in_bins = in_bins;
    for (int i = 0; i < 4; ++i) {
      out.conv[static_cast<std::size_t>(i)].w = conv[static_cast<std::size_t>(i)].w.template cast<U>();
      out.conv[static_cast<std::size_t>(i)].b = conv[static_cast<std::size_t>(i)].b.template cast<U>();
    }
    out.dense.w = dense.w.template cast<U>();
    out.dense.b = dense.b.template cast<U>();
    return out;
  }
};

// Glorot-style uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero
// biases, one derived seed per layer. Pure fan_in scaling inflates the
// logits of the very wide dense layer enough to push the untrained loss
// past 2; summing both fans keeps it at ~ln 4.
template <typename T>
EkmModel<T> build_ekm(const ModelConfig& cfg, int frames, int bins, std::uint64_t seed) {
  const ShapeInfo shapes = ekm_shapes(cfg, frames, bins);
  EkmModel<T> model;
  model.cfg = cfg;
  model.in_frames = frames;
  model.in_bins = bins;

  int in_ch = 1;
  for (int i = 0; i < 4; ++i) {
    const int k = cfg.conv_kernels[static_cast<std::size_t>(i)];
    const int out_ch = cfg.conv_channels[static_cast<std::size_t>(i)];
    const int fan = k * k * (in_ch + out_ch);
    model.conv[static_cast<std::size_t>(i)].w = nn::seeded_init<T>(
        {k, k, in_ch, out_ch}, fan, derive_seed(seed, "init", static_cast<std::uint64_t>(i)));
    model.conv[static_cast<std::size_t>(i)].b = nn::Tensor<T>({out_ch});
    in_ch = out_ch;
  }
  const auto flat = static_cast<int>(shapes.flatten_len);
  model.dense.w = nn::seeded_init<T>({flat, cfg.n_classes}, flat + cfg.n_classes,
                                     derive_seed(seed, "init", 4));
  model.dense.b = nn::Tensor<T>({cfg.n_classes});
  return model;
}

// ---------------------------------------------------------------------------
// Forward/backward plumbing.

template <typename T>
struct EkmCache {
  std::array<nn::Tensor<T>, 4> act;     // conv output after in-place ReLU
  std::array<nn::Tensor<T>, 4> pooled;
  std::array<nn::Tensor<std::int64_t>, 4> argmax;
  nn::Tensor<T> flat;
  nn::Tensor<T> logits;
  nn::Tensor<T> probs;
  // backward scratch
  nn::Tensor<T> dlogits, dflat, dpool, dact, dprev;
};

template <typename T>
struct EkmGrads {
  std::array<nn::Tensor<T>, 4> conv_w;
  std::array<nn::Tensor<T>, 4> conv_b;
  nn::Tensor<T> dense_w;
  nn::Tensor<T> dense_b;

  void init_like(const EkmModel<T>& m) {
    for (int i = 0; i < 4; ++i) {
      conv_w[static_cast<std::size_t>(i)] = nn::Tensor<T>(m.conv[static_cast<std::size_t>(i)].w.shape);
      conv_b[static_cast<std::size_t>(i)] = nn::Tensor<T>(m.conv[static_cast<std::size_t>(i)].b.shape);
    }
    dense_w = nn::Tensor<T>(m.dense.w.shape);
    dense_b = nn::Tensor<T>(m.dense.b.shape);
  }

  void zero() {
    for (auto& t : conv_w) t.zero();
    for (auto& t : conv_b) t.zero();
    dense_w.zero();
    dense_b.zero();
  }

  void add(const EkmGrads& other) {
    auto acc = [](nn::Tensor<T>& a, const nn::Tensor<T>& b) {
      for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
    };
    for (int i = 0; i < 4; ++i) {
      acc(conv_w[static_cast<std::size_t>(i)], other.conv_w[static_cast<std::size_t>(i)]);
      acc(conv_b[static_cast<std::size_t>(i)], other.conv_b[static_cast<std::size_t>(i)]);
    }
    acc(dense_w, other.dense_w);
    acc(dense_b, other.dense_b);
  }

  void scale(T s) {
    for (auto& t : conv_w) {
      for (auto& v : t.data) v *= s;
    }
    for (auto& t : conv_b) {
      for (auto& v : t.data) v *= s;
    }
    for (auto& v : dense_w.data) v *= s;
    for (auto& v : dense_b.data) v *= s;
  }
};

// Fills cache.logits and cache.probs.
template <typename T>
void ekm_forward(const EkmModel<T>& model, const nn::Tensor<T>& input, EkmCache<T>& cache) {
  require(input.shape == std::vector<int>({model.in_frames, model.in_bins, 1}),
          Errc::ShapeMismatch,
          "input shape " + nn::shape_string(input.shape) + " does not match model input " +
              nn::shape_string({model.in_frames, model.in_bins, 1}));
  const nn::Tensor<T>* cur = &input;
  for (int i = 0; i < 4; ++i) {
    auto& act = cache.act[static_cast<std::size_t>(i)];
    nn::conv2d_forward(*cur, model.conv[static_cast<std::size_t>(i)].w,
                       model.conv[static_cast<std::size_t>(i)].b, act);
    nn::relu_inplace(act);
    nn::maxpool_forward(act, model.cfg.pool_sizes[static_cast<std::size_t>(i)],
                        cache.pooled[static_cast<std::size_t>(i)],
                        cache.argmax[static_cast<std::size_t>(i)]);
    cur = &cache.pooled[static_cast<std::size_t>(i)];
  }
  const auto flat_len = static_cast<int>(cur->numel());
  if (cache.flat.shape != std::vector<int>{flat_len}) cache.flat = nn::Tensor<T>({flat_len});
  cache.flat.data = cur->data;
  nn::dense_forward(cache.flat, model.dense.w, model.dense.b, cache.logits);
  nn::softmax_cross_entropy_index(cache.logits, 0, cache.probs);  // probs only; loss ignored
}

// Backward from cache.dlogits (caller sets it, typically probs - one_hot).
// Accumulates into grads, which the caller zeroes per item.
template <typename T>
void ekm_backward(const EkmModel<T>& model, const nn::Tensor<T>& input, EkmCache<T>& cache,
                  EkmGrads<T>& grads) {
  nn::dense_backward(cache.flat, model.dense.w, cache.dlogits, cache.dflat, grads.dense_w,
                     grads.dense_b);

  // reshape the flat gradient back onto the last pooled map
  cache.dpool = cache.dflat;
  cache.dpool.shape = cache.pooled[3].shape;

  for (int i = 3; i >= 0; --i) {
    nn::maxpool_backward(cache.argmax[static_cast<std::size_t>(i)], cache.dpool,
                         cache.act[static_cast<std::size_t>(i)].shape, cache.dact);
    nn::relu_backward(cache.act[static_cast<std::size_t>(i)], cache.dact, cache.dact);
    const nn::Tensor<T>& stage_in = i == 0 ? input : cache.pooled[static_cast<std::size_t>(i) - 1];
    nn::conv2d_backward(stage_in, model.conv[static_cast<std::size_t>(i)].w, cache.dact,
                        cache.dprev, grads.conv_w[static_cast<std::size_t>(i)],
                        grads.conv_b[static_cast<std::size_t>(i)]);
    if (i > 0) {
      cache.dpool = cache.dprev;
      cache.dpool.shape = cache.pooled[static_cast<std::size_t>(i) - 1].shape;
    }
  }
}

// ---------------------------------------------------------------------------
// Training.

template <typename T>
struct LabeledExample {
  nn::Tensor<T> x;  // [frames x bins x 1]
  int label = 0;
};

struct TrainConfig {
  int epochs = 250;
  int batch_size = 32;
  float lr = 1e-3f;
  std::uint64_t seed = 42;
  // All code paths are bit-reproducible for a fixed seed regardless of
  // worker count; the flag additionally zeroes wall-clock columns in written
  // artifacts so whole files compare byte-equal across runs.
  bool deterministic = true;

  void validate() const {
    require(epochs >= 1, Errc::BadArgument, "epochs must be >= 1");
    require(batch_size >= 1, Errc::BadArgument, "batch_size must be >= 1");
  }
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double seconds_elapsed = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  double wall_clock_s = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

namespace detail {

template <typename T>
int argmax4(const nn::Tensor<T>& probs) {
  int best = 0;
  for (int j = 1; j < probs.dim(0); ++j) {
    if (probs.data[static_cast<std::size_t>(j)] > probs.data[static_cast<std::size_t>(best)]) best = j;
  }
  return best;
}

}  // namespace detail

// Mini-batch SGD with Adam: per epoch the train set is reshuffled with a
// seeded PRNG, batches of batch_size (last partial batch kept) run forward/
// backward and one Adam step on the mean gradient. Batch items execute in
// parallel into per-item buffers that are reduced in item order, so results
// are bit-identical to a sequential run for any worker count.
template <typename T>
TrainHistory train_ekm(EkmModel<T>& model, const std::vector<LabeledExample<T>>& train_set,
                       const std::vector<LabeledExample<T>>& val_set, const TrainConfig& cfg,
                       const EpochCallback& on_epoch = nullptr, int workers = -1) {
  cfg.validate();
  require(!train_set.empty(), Errc::EmptyTrainingSet, "training set is empty");

  const auto t0 = std::chrono::steady_clock::now();
  const int bs = cfg.batch_size;

  std::vector<nn::AdamState<T>> opt;
  auto add_state = [&](const nn::Tensor<T>& p) {
    opt.emplace_back(p.shape, static_cast<T>(cfg.lr));
  };
  for (int i = 0; i < 4; ++i) {
    add_state(model.conv[static_cast<std::size_t>(i)].w);
    add_state(model.conv[static_cast<std::size_t>(i)].b);
  }
  add_state(model.dense.w);
  add_state(model.dense.b);

  std::vector<EkmCache<T>> caches(static_cast<std::size_t>(bs));
  std::vector<EkmGrads<T>> slot_grads(static_cast<std::size_t>(bs));
  for (auto& g : slot_grads) g.init_like(model);
  EkmGrads<T> batch_grads;
  batch_grads.init_like(model);
  std::vector<double> slot_loss(static_cast<std::size_t>(bs));
  std::vector<int> slot_correct(static_cast<std::size_t>(bs));

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainHistory history;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::int64_t epoch_correct = 0;
    for (std::size_t batch_start = 0; batch_start < order.size(); batch_start += static_cast<std::size_t>(bs)) {
      const auto batch_n = std::min<std::size_t>(static_cast<std::size_t>(bs),
                                                 order.size() - batch_start);
      parallel_for(
          batch_n,
          [&](std::size_t s) {
            const auto& ex = train_set[order[batch_start + s]];
            auto& cache = caches[s];
            ekm_forward(model, ex.x, cache);
            slot_loss[s] = static_cast<double>(
                nn::softmax_cross_entropy_index(cache.logits, ex.label, cache.probs));
            slot_correct[s] = detail::argmax4(cache.probs) == ex.label ? 1 : 0;
            cache.dlogits = cache.probs;
            cache.dlogits.data[static_cast<std::size_t>(ex.label)] -= T(1);
            slot_grads[s].zero();
            ekm_backward(model, ex.x, cache, slot_grads[s]);
          },
          workers);

      batch_grads.zero();
      for (std::size_t s = 0; s < batch_n; ++s) {
        batch_grads.add(slot_grads[s]);
        epoch_loss += slot_loss[s];
        epoch_correct += slot_correct[s];
      }
      batch_grads.scale(T(1) / static_cast<T>(batch_n));

      std::size_t k = 0;
      for (int i = 0; i < 4; ++i) {
        nn::adam_step(model.conv[static_cast<std::size_t>(i)].w,
                      batch_grads.conv_w[static_cast<std::size_t>(i)], opt[k++]);
        nn::adam_step(model.conv[static_cast<std::size_t>(i)].b,
                      batch_grads.conv_b[static_cast<std::size_t>(i)], opt[k++]);
      }
      nn::adam_step(model.dense.w, batch_grads.dense_w, opt[k++]);
      nn::adam_step(model.dense.b, batch_grads.dense_b, opt[k++]);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(train_set.size());
    stats.train_acc = static_cast<double>(epoch_correct) / static_cast<double>(train_set.size());

    if (!val_set.empty()) {
      double val_loss = 0.0;
      std::int64_t val_correct = 0;
      for (std::size_t start = 0; start < val_set.size(); start += static_cast<std::size_t>(bs)) {
        const auto n = std::min<std::size_t>(static_cast<std::size_t>(bs), val_set.size() - start);
        parallel_for(
            n,
            [&](std::size_t s) {
              const auto& ex = val_set[start + s];
              auto& cache = caches[s];
              ekm_forward(model, ex.x, cache);
              slot_loss[s] = static_cast<double>(
                  nn::softmax_cross_entropy_index(cache.logits, ex.label, cache.probs));
              slot_correct[s] = detail::argmax4(cache.probs) == ex.label ? 1 : 0;
            },
            workers);
        for (std::size_t s = 0; s < n; ++s) {
          val_loss += slot_loss[s];
          val_correct += slot_correct[s];
        }
      }
      stats.val_loss = val_loss / static_cast<double>(val_set.size());
      stats.val_acc = static_cast<double>(val_correct) / static_cast<double>(val_set.size());
    } else {
      stats.val_loss = std::numeric_limits<double>::quiet_NaN();
      stats.val_acc = std::numeric_limits<double>::quiet_NaN();
    }

    stats.seconds_elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  history.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return history;
}

// ---------------------------------------------------------------------------
// Prediction.

template <typename T>
std::array<double, kNumClasses> predict_segment(const EkmModel<T>& model,
                                                const nn::Tensor<T>& x) {
  EkmCache<T> cache;
  ekm_forward(model, x, cache);
  std::array<double, kNumClasses> out{};
  for (int j = 0; j < model.cfg.n_classes; ++j) {
    out[static_cast<std::size_t>(j)] = static_cast<double>(cache.probs.data[static_cast<std::size_t>(j)]);
  }
  return out;
}

template <typename T>
nn::Tensor<T> feature_to_tensor(const FeatureMatrix& f) {
  nn::Tensor<T> t({f.n_frames, f.n_bins, 1});
  for (std::size_t i = 0; i < f.values.size(); ++i) t.data[i] = static_cast<T>(f.values[i]);
  return t;
}

struct ClipPrediction {
  KinitLabel label = KinitLabel::Tizita;
  std::array<int, kNumClasses> votes{};
  std::array<double, kNumClasses> summed_probs{};
  std::vector<int> segment_argmax;
};

// Majority with ties broken by summed probabilities, then lowest index.
inline int clip_vote_winner(const std::array<int, kNumClasses>& votes,
                            const std::array<double, kNumClasses>& summed_probs) {
  int winner = 0;
  for (int j = 1; j < kNumClasses; ++j) {
    const auto js = static_cast<std::size_t>(j);
    const auto ws = static_cast<std::size_t>(winner);
    if (votes[js] > votes[ws] ||
        (votes[js] == votes[ws] && summed_probs[js] > summed_probs[ws])) {
      winner = j;
    }
  }
  return winner;
}

// Majority vote over segment argmaxes; ties break by summed probabilities,
// then by lowest class index.
template <typename T>
ClipPrediction predict_clip(const EkmModel<T>& model, const AudioClip& clip,
                            const FeatureConfig& fcfg, const BinStats& stats) {
  ClipPrediction pred;
  std::vector<FeatureMatrix> feats;
  for (const Segment& seg : segment_clip(clip, fcfg)) {
    feats.push_back(extract_features(seg, fcfg));
  }
  apply_standardize(feats, stats);
  for (const auto& f : feats) {
    const auto probs = predict_segment(model, feature_to_tensor<T>(f));
    int best = 0;
    for (int j = 1; j < kNumClasses; ++j) {
      if (probs[static_cast<std::size_t>(j)] > probs[static_cast<std::size_t>(best)]) best = j;
    }
    pred.segment_argmax.push_back(best);
    ++pred.votes[static_cast<std::size_t>(best)];
    for (int j = 0; j < kNumClasses; ++j) {
      pred.summed_probs[static_cast<std::size_t>(j)] += probs[static_cast<std::size_t>(j)];
    }
  }
  pred.label = static_cast<KinitLabel>(clip_vote_winner(pred.votes, pred.summed_probs));
  return pred;
}

// ---------------------------------------------------------------------------
// Checkpoint: "EKMW" magic, version, entry count, then named float32
// tensors. A 2-element "input.shape" entry records frames x bins.

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const EkmModel<T>& model, const std::filesystem::path& path) {
  std::string out;
  auto put_tensor = [&out](const std::string& name, const std::vector<int>& shape,
                           const std::vector<T>& data) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    put_bytes(out, name.data(), name.size());
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (const int d : shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (const T v : data) put_f32(out, static_cast<float>(v));
  };

  put_bytes(out, "EKMW", 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, 11);
  put_tensor("input.shape", {2},
             {static_cast<T>(model.in_frames), static_cast<T>(model.in_bins)});
  for (int i = 0; i < 4; ++i) {
    const std::string base = "conv" + std::to_string(i + 1);
    put_tensor(base + ".weight", model.conv[static_cast<std::size_t>(i)].w.shape,
               model.conv[static_cast<std::size_t>(i)].w.data);
    put_tensor(base + ".bias", model.conv[static_cast<std::size_t>(i)].b.shape,
               model.conv[static_cast<std::size_t>(i)].b.data);
  }
  put_tensor("dense.weight", model.dense.w.shape, model.dense.w.data);
  put_tensor("dense.bias", model.dense.b.shape, model.dense.b.data);
  write_file_bytes(path, out);
}

inline EkmModel<float> load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  ByteReader r(bytes, Errc::MalformedContainer);
  require(r.str(4) == "EKMW", Errc::MalformedContainer, path.string() + ": bad magic");
  require(r.u32() == kCheckpointVersion, Errc::MalformedContainer,
          path.string() + ": unsupported version");
  const std::uint32_t n_entries = r.u32();

  std::map<std::string, nn::Tensor<float>> entries;
  for (std::uint32_t e = 0; e < n_entries; ++e) {
    const std::uint32_t name_len = r.u32();
    require(name_len > 0 && name_len < 256, Errc::MalformedContainer,
            path.string() + ": bad tensor name length");
    const std::string name = r.str(name_len);
    const std::uint32_t rank = r.u32();
    require(rank >= 1 && rank <= 4, Errc::MalformedContainer, path.string() + ": bad rank");
    std::vector<int> shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32();
      require(dim > 0 && dim <= (1u << 24), Errc::MalformedContainer,
              path.string() + ": bad dimension");
      shape.push_back(static_cast<int>(dim));
    }
    nn::Tensor<float> t(shape);
    for (auto& v : t.data) v = r.f32();
    entries[name] = std::move(t);
  }

  auto take = [&entries, &path](const std::string& name) -> nn::Tensor<float> {
    const auto it = entries.find(name);
    require(it != entries.end(), Errc::MalformedContainer,
            path.string() + ": missing tensor '" + name + "'");
    return std::move(it->second);
  };

  EkmModel<float> model;
  const auto input_shape = take("input.shape");
  require(input_shape.numel() == 2, Errc::MalformedContainer,
          path.string() + ": input.shape must have 2 entries");
  model.in_frames = static_cast<int>(input_shape.data[0]);
  model.in_bins = static_cast<int>(input_shape.data[1]);
  for (int i = 0; i < 4; ++i) {
    const std::string base = "conv" + std::to_string(i + 1);
    model.conv[static_cast<std::size_t>(i)].w = take(base + ".weight");
    model.conv[static_cast<std::size_t>(i)].b = take(base + ".bias");
  }
  model.dense.w = take("dense.weight");
  model.dense.b = take("dense.bias");

  // structural sanity: dense input must match the propagated flatten length
  const ShapeInfo shapes = ekm_shapes(model.cfg, model.in_frames, model.in_bins);
  require(model.dense.w.rank() == 2 &&
              model.dense.w.dim(0) == static_cast<int>(shapes.flatten_len) &&
              model.dense.w.dim(1) == model.cfg.n_classes,
          Errc::MalformedContainer, path.string() + ": dense layer inconsistent with input shape");
  return model;
}

}  // namespace kinit
