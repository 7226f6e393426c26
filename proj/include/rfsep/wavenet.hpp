#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rfsep/adam.hpp"
#include "rfsep/bytes.hpp"
#include "rfsep/dsp.hpp"
#include "rfsep/error.hpp"
#include "rfsep/json_util.hpp"
#include "rfsep/ops.hpp"
#include "rfsep/rng.hpp"
#include "rfsep/tensor.hpp"

namespace rfsep::wavenet {

using ad::DilationParam;
using ad::Tensor;

struct WaveNetConfig {
  int residual_channels = 64;
  int skip_channels = 64;
  int kernel_size = 3;
  int num_blocks = 9;
  int dilation_cycle_length = 3;
  double d_max_factor = 2.0;
  bool learnable_dilation = true;

  void validate() const {
    if (residual_channels < 1 || skip_channels < 1) {
      throw Error(ErrorCode::invalid_argument, "wavenet: channel counts must be positive");
    }
    if (kernel_size < 1 || kernel_size % 2 == 0) {
      throw Error(ErrorCode::invalid_argument, "wavenet: kernel_size must be odd and positive");
    }
    if (num_blocks < 1) throw Error(ErrorCode::invalid_argument, "wavenet: num_blocks must be >= 1");
    if (dilation_cycle_length < 1) {
      throw Error(ErrorCode::invalid_argument, "wavenet: dilation_cycle_length must be >= 1");
    }
    if (!(d_max_factor > 1.0)) throw Error(ErrorCode::invalid_argument, "wavenet: d_max_factor must be > 1");
  }

  double initial_dilation(int block) const {
    return std::ldexp(1.0, block % dilation_cycle_length);
  }
};

inline void to_json(Json& j, const WaveNetConfig& c) {
  j = Json{{"residual_channels", c.residual_channels},
           {"skip_channels", c.skip_channels},
           {"kernel_size", c.kernel_size},
           {"num_blocks", c.num_blocks},
           {"dilation_cycle_length", c.dilation_cycle_length},
           {"d_max_factor", c.d_max_factor},
           {"learnable_dilation", c.learnable_dilation}};
}

inline void from_json(const Json& j, WaveNetConfig& c) {
  const std::string where = "model";
  reject_unknown_keys(j, {"residual_channels", "skip_channels", "kernel_size", "num_blocks",
                          "dilation_cycle_length", "d_max_factor", "learnable_dilation"},
                      where);
  read_optional(j, "residual_channels", c.residual_channels, where);
  read_optional(j, "skip_channels", c.skip_channels, where);
  read_optional(j, "kernel_size", c.kernel_size, where);
  read_optional(j, "num_blocks", c.num_blocks, where);
  read_optional(j, "dilation_cycle_length", c.dilation_cycle_length, where);
  read_optional(j, "d_max_factor", c.d_max_factor, where);
  read_optional(j, "learnable_dilation", c.learnable_dilation, where);
}

struct Conv {
  Tensor weight;  // [out, in, taps]
  Tensor bias;    // [out]
};

struct Block {
  Conv filter;
  Conv gate;
  Conv residual;
  Conv skip;
  DilationParam dilation;  // shared by filter and gate
};

struct WaveNetModel {
  WaveNetConfig config;
  Conv input;
  std::vector<Block> blocks;
  Conv head_hidden;
  Conv head_out;
};

namespace detail {

inline Conv make_conv(std::size_t out_ch, std::size_t in_ch, std::size_t taps, Xoshiro256pp& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * taps));
  std::vector<double> w(out_ch * in_ch * taps);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  std::vector<double> b(out_ch);
  for (auto& v : b) v = rng.uniform(-bound, bound);
  return {Tensor::from({out_ch, in_ch, taps}, std::move(w), true), Tensor::from({out_ch}, std::move(b), true)};
}

inline Tensor apply(const Conv& conv, const Tensor& x) {
  return ad::add_bias(ad::conv1x1(x, conv.weight), conv.bias);
}

inline Tensor apply(const Conv& conv, const Tensor& x, const DilationParam& d) {
  return ad::add_bias(ad::conv1d_frac(x, conv.weight, d), conv.bias);
}

}  // namespace detail

/// Every weight and bias is drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with
/// fan_in = in_channels * taps, in construction order: input, blocks (filter,
/// gate, residual, skip), head. Block i starts at dilation
/// 2^(i mod cycle) and may move within [1, d_max_factor * initial].
inline WaveNetModel wavenet_init(const WaveNetConfig& config, std::uint64_t seed) {
  config.validate();
  Xoshiro256pp rng(seed);
  const auto r = static_cast<std::size_t>(config.residual_channels);
  const auto s = static_cast<std::size_t>(config.skip_channels);
  const auto k = static_cast<std::size_t>(config.kernel_size);
  WaveNetModel m;
  m.config = config;
  m.input = detail::make_conv(r, 2, 1, rng);
  for (int i = 0; i < config.num_blocks; ++i) {
    Block b;
    b.filter = detail::make_conv(r, r, k, rng);
    b.gate = detail::make_conv(r, r, k, rng);
    b.residual = detail::make_conv(r, r, 1, rng);
    b.skip = detail::make_conv(s, r, 1, rng);
    const double d0 = config.initial_dilation(i);
    b.dilation = DilationParam::make(d0, d0 * config.d_max_factor, config.learnable_dilation);
    m.blocks.push_back(std::move(b));
  }
  m.head_hidden = detail::make_conv(s, s, 1, rng);
  m.head_out = detail::make_conv(2, s, 1, rng);
  return m;
}

/// Every tensor of the model, dilations included, in checkpoint order.
inline std::vector<std::pair<std::string, Tensor>> named_tensors(const WaveNetModel& m) {
  std::vector<std::pair<std::string, Tensor>> out;
  auto conv = [&out](const std::string& prefix, const Conv& c) {
    out.emplace_back(prefix + ".weight", c.weight);
    out.emplace_back(prefix + ".bias", c.bias);
  };
  conv("input", m.input);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const std::string p = "blocks." + std::to_string(i);
    conv(p + ".filter", m.blocks[i].filter);
    conv(p + ".gate", m.blocks[i].gate);
    conv(p + ".residual", m.blocks[i].residual);
    conv(p + ".skip", m.blocks[i].skip);
    out.emplace_back(p + ".dilation", m.blocks[i].dilation.value);
  }
  conv("head.hidden", m.head_hidden);
  conv("head.out", m.head_out);
  return out;
}

/// Optimizer view of the model. Dilations appear only when learnable.
inline std::vector<ad::Parameter> model_params(const WaveNetModel& m) {
  std::vector<ad::Parameter> out;
  for (auto& [name, tensor] : named_tensors(m)) {
    if (name.ends_with(".dilation")) {
      if (!m.config.learnable_dilation) continue;
      const auto& block = m.blocks[std::stoul(name.substr(7, name.find('.', 7) - 7))];
      out.push_back(ad::as_parameter(name, block.dilation));
    } else {
      out.push_back({name, tensor, std::nullopt});
    }
  }
  return out;
}

inline std::size_t parameter_count(const WaveNetModel& m) {
  std::size_t n = 0;
  for (const auto& p : model_params(m)) n += p.tensor.size();
  return n;
}

inline std::vector<double> dilations(const WaveNetModel& m) {
  std::vector<double> out;
  for (const auto& b : m.blocks) out.push_back(b.dilation.rate());
  return out;
}

/// 1 + (k - 1) * sum of the current (possibly fractional) dilations.
inline double receptive_field(const WaveNetModel& m) {
  double sum = 0.0;
  for (const auto& b : m.blocks) sum += b.dilation.rate();
  return 1.0 + (m.config.kernel_size - 1) * sum;
}

/// Input projection, gated residual blocks with summed skips, then a
/// two-layer pointwise head. Output has the input's [2, T] shape.
inline Tensor wavenet_forward(const WaveNetModel& m, const Tensor& mixture) {
  if (mixture.shape().size() != 2 || mixture.dim(0) != 2) {
    throw Error(ErrorCode::shape_mismatch,
                "wavenet_forward: expected [2, T] input, got " + ad::shape_string(mixture.shape()));
  }
  if (!ad::all_finite(mixture.data())) {
    throw Error(ErrorCode::non_finite, "wavenet_forward: mixture contains NaN or Inf");
  }
  const double residual_scale = std::sqrt(0.5);
  const double skip_scale = 1.0 / std::sqrt(static_cast<double>(m.blocks.size()));

  Tensor h = ad::relu(detail::apply(m.input, mixture));
  Tensor skips;
  for (const auto& b : m.blocks) {
    Tensor z = ad::gated_unit(detail::apply(b.filter, h, b.dilation), detail::apply(b.gate, h, b.dilation));
    h = ad::scale(ad::add(h, detail::apply(b.residual, z)), residual_scale);
    Tensor s = detail::apply(b.skip, z);
    skips = skips.defined() ? ad::add(skips, s) : s;
  }
  skips = ad::scale(skips, skip_scale);
  return detail::apply(m.head_out, ad::relu(detail::apply(m.head_hidden, skips)));
}

// [2, T] tensor of (I, Q) rows.
inline Tensor signal_to_tensor(std::span<const dsp::Sample> sig) {
  const std::size_t n = sig.size();
  std::vector<double> data(2 * n);
  for (std::size_t t = 0; t < n; ++t) {
    data[t] = sig[t].real();
    data[n + t] = sig[t].imag();
  }
  return Tensor::from({2, n}, std::move(data));
}

inline dsp::ComplexSignal tensor_to_signal(const Tensor& t) {
  if (t.shape().size() != 2 || t.dim(0) != 2) {
    throw Error(ErrorCode::shape_mismatch, "expected a [2, T] tensor");
  }
  const std::size_t n = t.dim(1);
  dsp::ComplexSignal out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {t.data()[i], t.data()[n + i]};
  return out;
}

// Inference without graph recording.
inline dsp::ComplexSignal separate(const WaveNetModel& m, std::span<const dsp::Sample> mixture) {
  ad::NoGradGuard guard;
  return tensor_to_signal(wavenet_forward(m, signal_to_tensor(mixture)));
}

// Deep copy with fresh storage; learnability flags are preserved.
inline WaveNetModel clone_model(const WaveNetModel& m) {
  WaveNetModel c = m;
  auto copy = [](Conv& conv) {
    conv.weight = conv.weight.clone(true);
    conv.bias = conv.bias.clone(true);
  };
  copy(c.input);
  for (auto& b : c.blocks) {
    copy(b.filter);
    copy(b.gate);
    copy(b.residual);
    copy(b.skip);
    b.dilation.value = b.dilation.value.clone(m.config.learnable_dilation);
  }
  copy(c.head_hidden);
  copy(c.head_out);
  return c;
}

// ---------------------------------------------------------------------------
// Checkpoint: "RFSEPCK1" | u32-LE JSON length | JSON | f64-LE payloads.

inline constexpr std::string_view checkpoint_magic = "RFSEPCK1";

inline bytes::Buffer encode_checkpoint(const WaveNetModel& m, const Json& meta = Json::object()) {
  Json manifest;
  manifest["format"] = std::string(checkpoint_magic);
  manifest["config"] = m.config;
  manifest["meta"] = meta;
  Json entries = Json::array();
  std::size_t offset = 0;
  const auto tensors = named_tensors(m);
  for (const auto& [name, t] : tensors) {
    const std::size_t nbytes = t.size() * 8;
    entries.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "f64"}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  manifest["tensors"] = entries;
  auto out = bytes::join_header(checkpoint_magic, manifest.dump());
  out.reserve(out.size() + offset);
  for (const auto& [name, t] : tensors) {
    for (double v : t.data()) bytes::put_f64(out, v);
  }
  return out;
}

struct Checkpoint {
  WaveNetModel model;
  Json meta;
};

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> file) {
  const auto [text, payload_at] = bytes::split_header(file, checkpoint_magic);
  const Json manifest = parse_json(text, "checkpoint manifest");
  Checkpoint ck;
  try {
    ck.model = wavenet_init(manifest.at("config").get<WaveNetConfig>(), 0);
    ck.meta = manifest.value("meta", Json::object());
    const auto tensors = named_tensors(ck.model);
    const auto& entries = manifest.at("tensors");
    if (entries.size() != tensors.size()) {
      throw Error(ErrorCode::format, "checkpoint lists " + std::to_string(entries.size()) +
                                         " tensors, config implies " + std::to_string(tensors.size()));
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      auto [name, t] = tensors[i];
      const auto& e = entries[i];
      if (e.at("name").get<std::string>() != name || e.at("shape").get<ad::Shape>() != t.shape() ||
          e.at("dtype").get<std::string>() != "f64") {
        throw Error(ErrorCode::format, "checkpoint tensor " + std::to_string(i) + " does not match '" + name + "'");
      }
      const std::size_t at = payload_at + e.at("offset").get<std::size_t>();
      const std::size_t nbytes = e.at("nbytes").get<std::size_t>();
      if (nbytes != t.size() * 8) {
        throw Error(ErrorCode::format, "checkpoint tensor '" + name + "' has wrong byte count");
      }
      if (at + nbytes > file.size()) {
        throw Error(ErrorCode::format, "truncated payload at byte offset " + std::to_string(file.size()) +
                                           " while reading '" + name + "'");
      }
      auto data = t.data();
      for (std::size_t k = 0; k < data.size(); ++k) data[k] = bytes::get_f64(file, at + 8 * k);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, std::string("checkpoint manifest: ") + e.what());
  }
  for (const auto& b : ck.model.blocks) {
    if (!(b.dilation.rate() >= b.dilation.d_min && b.dilation.rate() <= b.dilation.d_max)) {
      throw Error(ErrorCode::format, "checkpoint dilation out of bounds");
    }
  }
  return ck;
}

inline void save_checkpoint(const WaveNetModel& m, const std::string& path, const Json& meta = Json::object()) {
  bytes::write_file(path, encode_checkpoint(m, meta));
}

inline Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(bytes::read_file(path)); }

}  // namespace rfsep::wavenet
