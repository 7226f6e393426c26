#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "rfsep/adam.hpp"
#include "rfsep/datagen.hpp"
#include "rfsep/error.hpp"
#include "rfsep/json_util.hpp"
#include "rfsep/ops.hpp"
#include "rfsep/rng.hpp"
#include "rfsep/wavenet.hpp"

namespace rfsep::train {

using datagen::MixtureExample;
using wavenet::WaveNetModel;

struct TrainConfig {
  int max_epochs = 20;
  int batch_size = 4;
  int steps_per_epoch = 0;  // 0: one pass over the training set
  double lr = 1e-3;
  double plateau_factor = 0.5;
  int plateau_patience = 2;
  int early_stop_patience = 5;
  double min_lr = 1e-6;
  double improvement_threshold = 1e-4;  // relative
  std::uint64_t seed = 0;
  std::string checkpoint_path;
  int crop_len = 0;  // 0: full example length
  double dilation_lr_scale = 1.0;

  void validate() const {
    if (max_epochs < 1 || batch_size < 1 || steps_per_epoch < 0) {
      throw Error(ErrorCode::invalid_argument, "train: epoch, batch and step counts must be positive");
    }
    if (!(lr > 0.0) || !(min_lr < lr) || min_lr < 0.0) {
      throw Error(ErrorCode::invalid_argument, "train: need 0 <= min_lr < lr");
    }
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) {
      throw Error(ErrorCode::invalid_argument, "train: plateau_factor must be in (0, 1)");
    }
    if (plateau_patience < 1 || early_stop_patience < 1) {
      throw Error(ErrorCode::invalid_argument, "train: patience values must be >= 1");
    }
    if (crop_len < 0) throw Error(ErrorCode::invalid_argument, "train: crop_len must be >= 0");
    if (!(dilation_lr_scale > 0.0)) throw Error(ErrorCode::invalid_argument, "train: dilation_lr_scale must be > 0");
  }
};

inline void to_json(Json& j, const TrainConfig& c) {
  j = Json{{"max_epochs", c.max_epochs},
           {"batch_size", c.batch_size},
           {"steps_per_epoch", c.steps_per_epoch},
           {"lr", c.lr},
           {"plateau_factor", c.plateau_factor},
           {"plateau_patience", c.plateau_patience},
           {"early_stop_patience", c.early_stop_patience},
           {"min_lr", c.min_lr},
           {"improvement_threshold", c.improvement_threshold},
           {"seed", c.seed},
           {"checkpoint_path", c.checkpoint_path},
           {"crop_len", c.crop_len},
           {"dilation_lr_scale", c.dilation_lr_scale}};
}

inline void from_json(const Json& j, TrainConfig& c) {
  const std::string where = "train";
  reject_unknown_keys(j, {"max_epochs", "batch_size", "steps_per_epoch", "lr", "plateau_factor", "plateau_patience",
                          "early_stop_patience", "min_lr", "improvement_threshold", "seed", "checkpoint_path",
                          "crop_len", "dilation_lr_scale"},
                      where);
  read_optional(j, "max_epochs", c.max_epochs, where);
  read_optional(j, "batch_size", c.batch_size, where);
  read_optional(j, "steps_per_epoch", c.steps_per_epoch, where);
  read_optional(j, "lr", c.lr, where);
  read_optional(j, "plateau_factor", c.plateau_factor, where);
  read_optional(j, "plateau_patience", c.plateau_patience, where);
  read_optional(j, "early_stop_patience", c.early_stop_patience, where);
  read_optional(j, "min_lr", c.min_lr, where);
  read_optional(j, "improvement_threshold", c.improvement_threshold, where);
  read_optional(j, "seed", c.seed, where);
  read_optional(j, "checkpoint_path", c.checkpoint_path, where);
  read_optional(j, "crop_len", c.crop_len, where);
  read_optional(j, "dilation_lr_scale", c.dilation_lr_scale, where);
}

// ---------------------------------------------------------------------------
// Plateau / early-stop bookkeeping

enum class PlateauAction { none, reduce_lr, stop };

struct PlateauState {
  double lr;
  double min_lr;
  double factor;
  int plateau_patience;
  int early_stop_patience;
  double threshold = 1e-4;
  double best = std::numeric_limits<double>::infinity();
  int since_improvement = 0;  // drives early stopping
  int since_reduction = 0;    // drives lr reduction; reset on reduce

  static PlateauState from(const TrainConfig& c) {
    return {c.lr, c.min_lr, c.plateau_factor, c.plateau_patience, c.early_stop_patience, c.improvement_threshold};
  }
};

/// An improvement is val_loss < best * (1 - threshold). After plateau_patience
/// checks without one the lr drops (never below min_lr); after
/// early_stop_patience checks training stops. Both counters reset on improvement.
inline PlateauAction plateau_update(PlateauState& s, double val_loss) {
  if (!std::isfinite(val_loss)) throw Error(ErrorCode::non_finite, "plateau_update: validation loss is not finite");
  if (val_loss < s.best * (1.0 - s.threshold)) {
    s.best = val_loss;
    s.since_improvement = 0;
    s.since_reduction = 0;
    return PlateauAction::none;
  }
  ++s.since_improvement;
  ++s.since_reduction;
  if (s.since_improvement >= s.early_stop_patience) return PlateauAction::stop;
  if (s.since_reduction >= s.plateau_patience) {
    s.since_reduction = 0;
    if (s.lr > s.min_lr) {
      s.lr = std::max(s.lr * s.factor, s.min_lr);
      return PlateauAction::reduce_lr;
    }
  }
  return PlateauAction::none;
}

// ---------------------------------------------------------------------------
// History

enum class StopReason { max_epochs, early_stop };

NLOHMANN_JSON_SERIALIZE_ENUM(StopReason, {{StopReason::max_epochs, "MAX_EPOCHS"}, {StopReason::early_stop, "EARLY_STOP"}})

struct EpochRecord {
  int epoch;
  double train_loss;
  double val_loss;
  double lr;
  std::vector<double> dilations;
};

inline void to_json(Json& j, const EpochRecord& r) {
  j = Json{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}, {"lr", r.lr},
           {"dilations", r.dilations}};
}

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  StopReason stop_reason = StopReason::max_epochs;
};

// One JSON object per epoch, newline-terminated.
inline std::string history_jsonl(const TrainHistory& h) {
  std::string out;
  for (const auto& r : h.epochs) out += Json(r).dump() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Loop

inline double example_loss(const WaveNetModel& model, const MixtureExample& ex) {
  ad::NoGradGuard guard;
  const auto pred = wavenet::wavenet_forward(model, wavenet::signal_to_tensor(ex.mixture));
  return ad::mse_loss(pred, wavenet::signal_to_tensor(ex.soi)).item();
}

inline double mean_loss(const WaveNetModel& model, const std::vector<MixtureExample>& set) {
  if (set.empty()) throw Error(ErrorCode::invalid_argument, "mean_loss: empty example set");
  double acc = 0.0;
  for (const auto& ex : set) acc += example_loss(model, ex);
  return acc / static_cast<double>(set.size());
}

// Seeded Fisher-Yates.
inline std::vector<std::size_t> permutation(std::size_t n, Xoshiro256pp& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

struct TrainResult {
  WaveNetModel best;
  TrainHistory history;
};

/// Minimizes MSE between the separator output and the SOI with Adam. Each
/// epoch ends with a validation pass that drives checkpointing (on strict
/// improvement), lr reduction and early stopping. Returns the model with the
/// best validation loss, not the last one.
inline TrainResult train(WaveNetModel& model, const std::vector<MixtureExample>& train_set,
                         const std::vector<MixtureExample>& val_set, const TrainConfig& config) {
  config.validate();
  if (train_set.empty() || val_set.empty()) {
    throw Error(ErrorCode::invalid_argument, "train: training and validation sets must be non-empty");
  }
  {
    std::set<std::uint64_t> seeds;
    for (const auto& ex : train_set) seeds.insert(ex.seed);
    for (const auto& ex : val_set) {
      if (seeds.count(ex.seed)) throw Error(ErrorCode::precondition, "train: validation example also in training set");
    }
  }
  for (const auto& [name, t] : wavenet::named_tensors(model)) {
    if (!ad::all_finite(t.data())) throw Error(ErrorCode::non_finite, "train: parameter '" + name + "' is not finite");
  }

  auto params = wavenet::model_params(model);
  for (auto& p : params) {
    if (p.bounds) p.lr_scale = config.dilation_lr_scale;
  }
  ad::AdamState adam(params, ad::AdamOptions{config.lr});
  PlateauState plateau = PlateauState::from(config);
  Xoshiro256pp rng(config.seed);

  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t steps = config.steps_per_epoch > 0 ? static_cast<std::size_t>(config.steps_per_epoch)
                                                       : (train_set.size() + batch - 1) / batch;
  std::vector<std::size_t> order = permutation(train_set.size(), rng);
  std::size_t cursor = 0;

  TrainResult result{wavenet::clone_model(model), {}};
  std::string last_good = config.checkpoint_path;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double epoch_lr = plateau.lr;
    adam.options.lr = epoch_lr;
    double loss_acc = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t step = 0; step < steps; ++step) {
      ad::zero_grad(params);
      for (std::size_t b = 0; b < batch; ++b) {
        if (cursor == order.size()) {
          order = permutation(train_set.size(), rng);
          cursor = 0;
        }
        const auto& ex = train_set[order[cursor++]];
        std::size_t begin = 0;
        std::size_t len = ex.mixture.size();
        if (config.crop_len > 0 && static_cast<std::size_t>(config.crop_len) < len) {
          begin = rng.below(len - static_cast<std::size_t>(config.crop_len) + 1);
          len = static_cast<std::size_t>(config.crop_len);
        }
        const auto x = wavenet::signal_to_tensor(std::span(ex.mixture).subspan(begin, len));
        const auto y = wavenet::signal_to_tensor(std::span(ex.soi).subspan(begin, len));
        auto loss = ad::mse_loss(wavenet::wavenet_forward(model, x), y);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw Error(ErrorCode::non_finite,
                      "train: loss became NaN/Inf at epoch " + std::to_string(epoch) + "; last good checkpoint: " +
                          (last_good.empty() ? std::string("<none>") : last_good));
        }
        loss_acc += value;
        ++loss_count;
        auto scaled = ad::scale(loss, 1.0 / static_cast<double>(batch));
        ad::backward(scaled);
      }
      ad::adam_step(params, adam);
    }

    EpochRecord rec{epoch, loss_acc / static_cast<double>(loss_count), mean_loss(model, val_set), epoch_lr,
                    wavenet::dilations(model)};
    result.history.epochs.push_back(rec);
    if (rec.val_loss < result.history.best_val) {
      result.history.best_val = rec.val_loss;
      result.history.best_epoch = epoch;
      result.best = wavenet::clone_model(model);
      if (!config.checkpoint_path.empty()) {
        wavenet::save_checkpoint(model, config.checkpoint_path, {{"epoch", epoch}, {"val_loss", rec.val_loss}});
      }
    }
    if (plateau_update(plateau, rec.val_loss) == PlateauAction::stop) {
      result.history.stop_reason = StopReason::early_stop;
      break;
    }
  }
  return result;
}

}  // namespace rfsep::train
