#pragma once

// Patch-based MSE training with Adam for PR-CNN and PR-RNN.
//
// Every step draws its batch from a generator seeded by (seed, step), so a run
// resumed from a checkpoint sees exactly the batches the uninterrupted run
// would have seen.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "prn/adam.hpp"
#include "prn/codec_sim.hpp"
#include "prn/errors.hpp"
#include "prn/image.hpp"
#include "prn/nn/prcnn.hpp"
#include "prn/nn/prrnn.hpp"
#include "prn/params.hpp"
#include "prn/rng.hpp"
#include "prn/sideinfo.hpp"
#include "prn/tensor.hpp"

namespace prn {

// Planes are stored normalised to [0, 1].
inline Image<float> normalize_plane(const LumaPlane& p) {
  Image<float> out(p.width, p.height);
  for (std::size_t i = 0; i < p.data.size(); ++i) out.data[i] = static_cast<float>(p.data[i]) / 255.0f;
  return out;
}

inline Image<float> normalize_plane(const Image<float>& p) {
  Image<float> out = p;
  for (auto& v : out.data) v /= 255.0f;
  return out;
}

template <typename T>
Tensor<T> plane_tensor(const Image<float>& p) {
  Tensor<T> t(Shape{1, 1, p.height, p.width});
  for (std::size_t i = 0; i < p.data.size(); ++i) t.data()[i] = static_cast<T>(p.data[i]);
  return t;
}

template <typename T>
LumaPlane tensor_to_luma(const Tensor<T>& t) {
  const Shape& s = t.shape();
  if (s.n != 1 || s.c != 1) throw DimensionError("expected a single luma plane, got " + s.str());
  LumaPlane out(s.w, s.h);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = clamp_round_u8(static_cast<double>(t.data()[i]) * 255.0);
  }
  return out;
}

struct CnnSample {
  Image<float> input;
  std::array<Image<float>, kMmcuLevels> maps;
  Image<float> target;
};

struct RnnSample {
  std::array<Image<float>, kStates> frames;  // current, neighbour, peak-quality
  Image<float> target;
};

inline CnnSample make_cnn_sample(const LumaPlane& degraded, const PartitionForest& forest, const LumaPlane& raw) {
  if (!degraded.same_size(raw)) throw DimensionError("training sample: degraded and original sizes differ");
  CnnSample s;
  s.input = normalize_plane(degraded);
  const MMCUMaps maps = generate_mmcu(degraded, forest);
  for (std::size_t l = 0; l < s.maps.size(); ++l) s.maps[l] = normalize_plane(maps.level[l]);
  s.target = normalize_plane(raw);
  return s;
}

inline RnnSample make_rnn_sample(const LumaPlane& current, const LumaPlane& neighbour, const LumaPlane& peak,
                                 const LumaPlane& raw) {
  if (!current.same_size(neighbour) || !current.same_size(peak) || !current.same_size(raw)) {
    throw DimensionError("training sample: frame sizes differ");
  }
  RnnSample s;
  s.frames = {normalize_plane(current), normalize_plane(neighbour), normalize_plane(peak)};
  s.target = normalize_plane(raw);
  return s;
}

inline const Image<float>& sample_plane(const CnnSample& s) { return s.input; }
inline const Image<float>& sample_plane(const RnnSample& s) { return s.target; }

struct TrainSchedule {
  std::size_t steps = 500;
  std::size_t batch = 8;
  std::size_t patch = 64;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  bool flips = true;
};

struct PatchCrop {
  std::size_t index = 0;
  std::size_t x = 0;
  std::size_t y = 0;
  bool hflip = false;
  bool vflip = false;
};

template <typename Sample>
std::vector<PatchCrop> draw_crops(const std::vector<Sample>& data, const TrainSchedule& s, std::uint64_t step) {
  if (data.empty()) throw TrainingError("empty training dataset");
  Rng rng(derive_seed(s.seed, step));
  std::vector<PatchCrop> crops(s.batch);
  for (auto& c : crops) {
    c.index = rng.below(data.size());
    const Image<float>& p = sample_plane(data[c.index]);
    if (p.width < s.patch || p.height < s.patch) {
      throw TrainingError("training sample " + std::to_string(c.index) + " is smaller than the patch size");
    }
    c.x = rng.below(p.width - s.patch + 1);
    c.y = rng.below(p.height - s.patch + 1);
    c.hflip = s.flips && rng.coin();
    c.vflip = s.flips && rng.coin();
  }
  return crops;
}

// Gathers the cropped (and flipped) patch of `pick(sample)` for every crop
// into one [B,1,P,P] tensor.
template <typename T, typename Sample, typename Pick>
Tensor<T> gather_patches(const std::vector<Sample>& data, const std::vector<PatchCrop>& crops, std::size_t patch,
                         Pick pick) {
  Tensor<T> t(Shape{crops.size(), 1, patch, patch});
  for (std::size_t b = 0; b < crops.size(); ++b) {
    const PatchCrop& c = crops[b];
    const Image<float>& src = pick(data[c.index]);
    T* dst = t.ptr() + b * patch * patch;
    for (std::size_t y = 0; y < patch; ++y) {
      const std::size_t sy = c.y + (c.vflip ? patch - 1 - y : y);
      for (std::size_t x = 0; x < patch; ++x) {
        const std::size_t sx = c.x + (c.hflip ? patch - 1 - x : x);
        dst[y * patch + x] = static_cast<T>(src(sx, sy));
      }
    }
  }
  return t;
}

template <typename T>
Tensor<T> batch_forward(Graph<T>& g, const Prcnn<T>& model, const std::vector<CnnSample>& data,
                        const std::vector<PatchCrop>& crops, std::size_t patch) {
  const Tensor<T> x = gather_patches<T>(data, crops, patch, [](const CnnSample& s) -> const Image<float>& { return s.input; });
  std::array<Tensor<T>, kMmcuLevels> maps;
  for (std::size_t l = 0; l < maps.size(); ++l) {
    maps[l] = gather_patches<T>(data, crops, patch, [l](const CnnSample& s) -> const Image<float>& { return s.maps[l]; });
  }
  return model.forward(g, x, maps);
}

template <typename T>
Tensor<T> batch_forward(Graph<T>& g, const Prrnn<T>& model, const std::vector<RnnSample>& data,
                        const std::vector<PatchCrop>& crops, std::size_t patch) {
  std::array<Tensor<T>, kStates> frames;
  for (std::size_t s = 0; s < kStates; ++s) {
    frames[s] = gather_patches<T>(data, crops, patch, [s](const RnnSample& r) -> const Image<float>& { return r.frames[s]; });
  }
  return model.forward(g, frames);
}

template <typename T, typename Sample>
Tensor<T> batch_target(const std::vector<Sample>& data, const std::vector<PatchCrop>& crops, std::size_t patch) {
  return gather_patches<T>(data, crops, patch, [](const Sample& s) -> const Image<float>& { return s.target; });
}

struct LossRecord {
  std::uint64_t step = 0;  // 1-based
  double loss = 0;
};

template <typename T>
struct TrainState {
  AdamState<T> adam;
  std::uint64_t step = 0;  // completed steps
  std::vector<LossRecord> log;
};

// One optimisation step. The recorded loss is the batch MSE before the update.
template <typename T, typename Model, typename Sample>
double train_step(Model& model, TrainState<T>& st, const std::vector<Sample>& data, const TrainSchedule& s) {
  const auto crops = draw_crops(data, s, st.step);
  Graph<T> g;
  const Tensor<T> out = batch_forward(g, model, data, crops, s.patch);
  const Tensor<T> loss = mse(g, out, batch_target<T>(data, crops, s.patch));
  const double value = static_cast<double>(loss.item());
  if (!std::isfinite(value)) {
    throw TrainingError("loss became non-finite at step " + std::to_string(st.step + 1));
  }
  g.backward(loss);
  auto params = model.params().tensors();
  st.adam.hyper.lr = s.lr;
  adam_step(params, st.adam);
  for (const auto& p : params) {
    if (!all_finite(p)) throw TrainingError("parameters became non-finite at step " + std::to_string(st.step + 1));
  }
  st.step += 1;
  st.log.push_back({st.step, value});
  return value;
}

// Runs until st.step == s.steps. `on_step` (optional) sees each record.
template <typename T, typename Model, typename Sample>
void train(Model& model, TrainState<T>& st, const std::vector<Sample>& data, const TrainSchedule& s,
           const std::function<void(const LossRecord&)>& on_step = {}) {
  if (data.empty()) throw TrainingError("empty training dataset");
  if (s.batch == 0 || s.patch == 0) throw TrainingError("batch and patch sizes must be positive");
  while (st.step < s.steps) {
    train_step(model, st, data, s);
    if (on_step) on_step(st.log.back());
  }
}

template <typename T>
double evaluate_one(Graph<T>& g, const Prcnn<T>& model, const CnnSample& s) {
  std::array<Tensor<T>, kMmcuLevels> maps;
  for (std::size_t l = 0; l < maps.size(); ++l) maps[l] = plane_tensor<T>(s.maps[l]);
  return static_cast<double>(mse(g, model.forward(g, plane_tensor<T>(s.input), maps), plane_tensor<T>(s.target)).item());
}

template <typename T>
double evaluate_one(Graph<T>& g, const Prrnn<T>& model, const RnnSample& s) {
  std::array<Tensor<T>, kStates> frames;
  for (std::size_t i = 0; i < kStates; ++i) frames[i] = plane_tensor<T>(s.frames[i]);
  return static_cast<double>(mse(g, model.forward(g, frames), plane_tensor<T>(s.target)).item());
}

// Mean per-sample MSE of the model over whole samples (no cropping).
template <typename T, typename Model, typename Sample>
double evaluate_mse(const Model& model, const std::vector<Sample>& data) {
  if (data.empty()) throw ArgumentError("evaluate_mse: empty dataset");
  double total = 0;
  for (const auto& s : data) {
    Graph<T> g = Graph<T>::inference();
    total += evaluate_one(g, model, s);
  }
  return total / static_cast<double>(data.size());
}

// MSE of passing the degraded input straight through.
inline double identity_mse(const std::vector<CnnSample>& data) {
  double total = 0;
  for (const auto& s : data) {
    double e = 0;
    for (std::size_t i = 0; i < s.input.data.size(); ++i) {
      const double d = static_cast<double>(s.input.data[i]) - static_cast<double>(s.target.data[i]);
      e += d * d;
    }
    total += e / static_cast<double>(s.input.data.size());
  }
  return total / static_cast<double>(data.size());
}

inline std::string format_loss_log(const std::vector<LossRecord>& log) {
  std::ostringstream out;
  out.precision(9);
  for (const auto& r : log) out << r.step << ' ' << r.loss << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Checkpoints carrying optimiser state

inline constexpr const char* kTrainStepName = "train.step";

// Model parameters, model metadata, the completed step count (split into two
// 24-bit halves so float storage is exact) and the Adam moments.
template <typename T, typename Model>
std::vector<NamedArray> training_checkpoint(const Model& model, const TrainState<T>& st) {
  std::vector<NamedArray> arrays = model.params().to_arrays();
  arrays.push_back(model.meta());
  if (st.step >= (std::uint64_t{1} << 48)) throw TrainingError("step counter too large for checkpoint");
  arrays.push_back(NamedArray{kTrainStepName, {2},
                              {static_cast<float>(st.step >> 24), static_cast<float>(st.step & 0xFFFFFF)}});
  if (!st.adam.m.empty()) {
    const auto& entries = model.params().entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
      for (int which = 0; which < 2; ++which) {
        const auto& buf = which == 0 ? st.adam.m[k] : st.adam.v[k];
        NamedArray a{(which == 0 ? "adam.m." : "adam.v.") + entries[k].name, entries[k].dims, {}};
        a.values.reserve(buf.size());
        for (T v : buf) a.values.push_back(static_cast<float>(v));
        arrays.push_back(std::move(a));
      }
    }
  }
  return arrays;
}

// Restores the step counter and Adam moments saved by training_checkpoint.
// Checkpoints without optimiser state (plain model files) give a fresh state.
template <typename T, typename Model>
TrainState<T> restore_train_state(const Model& model, const std::vector<NamedArray>& arrays) {
  TrainState<T> st;
  if (const NamedArray* s = find_array(arrays, kTrainStepName)) {
    if (s->values.size() != 2) throw IoError("malformed train.step entry");
    st.step = (static_cast<std::uint64_t>(s->values[0]) << 24) + static_cast<std::uint64_t>(s->values[1]);
  }
  st.adam.t = st.step;
  const auto& entries = model.params().entries();
  if (st.step == 0 || entries.empty() || !find_array(arrays, "adam.m." + entries[0].name)) {
    st.adam.t = 0;
    return st;
  }
  for (const auto& e : entries) {
    for (int which = 0; which < 2; ++which) {
      const std::string name = (which == 0 ? "adam.m." : "adam.v.") + e.name;
      const NamedArray* a = find_array(arrays, name);
      if (!a || a->dims != e.dims) throw IoError("checkpoint optimiser state is missing or malformed: " + name);
      std::vector<T> buf(a->values.begin(), a->values.end());
      (which == 0 ? st.adam.m : st.adam.v).push_back(std::move(buf));
    }
  }
  return st;
}

}  // namespace prn
