#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rfsep/bytes.hpp"
#include "rfsep/dsp.hpp"
#include "rfsep/error.hpp"
#include "rfsep/json_util.hpp"
#include "rfsep/rng.hpp"

namespace rfsep::datagen {

enum class SoiKind { qpsk, ofdm_qpsk };
enum class InterferenceKind { emi_surrogate, comm_surrogate };
enum class Split { train, val, test };

NLOHMANN_JSON_SERIALIZE_ENUM(SoiKind, {{SoiKind::qpsk, "QPSK"}, {SoiKind::ofdm_qpsk, "OFDM_QPSK"}})
NLOHMANN_JSON_SERIALIZE_ENUM(InterferenceKind, {{InterferenceKind::emi_surrogate, "EMI_SURROGATE"},
                                                {InterferenceKind::comm_surrogate, "COMM_SURROGATE"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Split, {{Split::train, "TRAIN"}, {Split::val, "VAL"}, {Split::test, "TEST"}})

// Signal-of-interest waveform parameters.
inline dsp::QpskParams soi_qpsk_params() { return {16, 0.5, 8}; }
inline dsp::OfdmParams soi_ofdm_params() { return {64, 16, 48}; }

struct MixtureExample {
  dsp::ComplexSignal mixture;
  dsp::ComplexSignal soi;
  dsp::BitString bits;
  SoiKind soi_kind = SoiKind::qpsk;
  InterferenceKind interference_kind = InterferenceKind::comm_surrogate;
  double sinr_db = 0.0;
  std::uint64_t seed = 0;
  // Seed of the generated example an augmented one descends from; 0 otherwise.
  std::uint64_t parent_seed = 0;
  bool augmented = false;

  bool operator==(const MixtureExample&) const = default;
};

struct DatasetSpec {
  SoiKind soi_kind = SoiKind::qpsk;
  InterferenceKind interference_kind = InterferenceKind::comm_surrogate;
  int n_segments = 1;
  int examples_per_segment = 11;
  std::vector<double> sinr_grid_db = {-15, -12, -9, -6, -3, 0, 3, 6, 9, 12, 15};
  int example_len = 4096;
  std::uint64_t master_seed = 0;
  Split split = Split::train;

  std::size_t count() const {
    return static_cast<std::size_t>(n_segments) * static_cast<std::size_t>(examples_per_segment);
  }

  void validate() const;
};

inline void to_json(Json& j, const DatasetSpec& s) {
  j = Json{{"soi_kind", s.soi_kind},
           {"interference_kind", s.interference_kind},
           {"n_segments", s.n_segments},
           {"examples_per_segment", s.examples_per_segment},
           {"sinr_grid_db", s.sinr_grid_db},
           {"example_len", s.example_len},
           {"master_seed", s.master_seed},
           {"split", s.split}};
}

inline void from_json(const Json& j, DatasetSpec& s) {
  const std::string where = "dataset";
  reject_unknown_keys(j, {"soi_kind", "interference_kind", "n_segments", "examples_per_segment", "sinr_grid_db",
                          "example_len", "master_seed", "split"},
                      where);
  read_optional(j, "soi_kind", s.soi_kind, where);
  read_optional(j, "interference_kind", s.interference_kind, where);
  read_optional(j, "n_segments", s.n_segments, where);
  read_optional(j, "examples_per_segment", s.examples_per_segment, where);
  read_optional(j, "sinr_grid_db", s.sinr_grid_db, where);
  read_optional(j, "example_len", s.example_len, where);
  read_optional(j, "master_seed", s.master_seed, where);
  read_optional(j, "split", s.split, where);
}

inline std::size_t soi_symbol_count(SoiKind kind, std::size_t length) {
  if (kind == SoiKind::qpsk) return dsp::qpsk_symbols_for_length(length, soi_qpsk_params());
  return length / soi_ofdm_params().symbol_length();
}

inline std::size_t soi_bit_count(SoiKind kind, std::size_t length) {
  const std::size_t symbols = soi_symbol_count(kind, length);
  return kind == SoiKind::qpsk ? 2 * symbols : symbols * soi_ofdm_params().bits_per_symbol();
}

inline void DatasetSpec::validate() const {
  if (n_segments < 1 || examples_per_segment < 1) {
    throw Error(ErrorCode::invalid_argument, "dataset: segment and example counts must be positive");
  }
  if (sinr_grid_db.empty()) throw Error(ErrorCode::invalid_argument, "dataset: empty SINR grid");
  for (std::size_t i = 1; i < sinr_grid_db.size(); ++i) {
    if (!(sinr_grid_db[i] > sinr_grid_db[i - 1])) {
      throw Error(ErrorCode::invalid_argument, "dataset: SINR grid must be strictly increasing");
    }
  }
  if (example_len < 1 || soi_bit_count(soi_kind, static_cast<std::size_t>(example_len)) == 0) {
    throw Error(ErrorCode::invalid_argument,
                "dataset: example_len " + std::to_string(example_len) + " cannot hold one SOI symbol");
  }
}

// ---------------------------------------------------------------------------
// Seeds

inline constexpr std::uint64_t split_code(Split s) { return static_cast<std::uint64_t>(s); }

/// Example seed: the top two bits hold the split (TRAIN 0, VAL 1, TEST 2) and
/// the low 62 bits come from hash_seed(master, split, segment, index). Splits
/// therefore never share a seed.
inline std::uint64_t example_seed(std::uint64_t master, Split split, std::uint64_t segment, std::uint64_t index) {
  const std::uint64_t code = split_code(split);
  return (code << 62) | (hash_seed(master, code, segment, index) >> 2);
}

inline std::uint64_t split_prefix(std::uint64_t seed) { return seed >> 62; }

// Sub-streams of an example seed.
inline std::uint64_t soi_stream(std::uint64_t seed) { return hash_seed(seed, 1); }
inline std::uint64_t interference_stream(std::uint64_t seed) { return hash_seed(seed, 2); }

inline std::uint64_t augmented_seed(std::uint64_t seed) {
  return (seed & (std::uint64_t{3} << 62)) | (hash_seed(seed, 3) >> 2);
}

// ---------------------------------------------------------------------------
// Synthesis

struct SoiWaveform {
  dsp::ComplexSignal signal;
  dsp::BitString bits;
};

/// SOI of `length` samples: whole symbols followed by zero padding.
inline SoiWaveform synthesize_soi(SoiKind kind, std::uint64_t seed, std::size_t length) {
  Xoshiro256pp rng(soi_stream(seed));
  SoiWaveform out;
  out.bits = dsp::random_bits(rng, soi_bit_count(kind, length));
  if (out.bits.empty()) throw Error(ErrorCode::invalid_argument, "example too short for one SOI symbol");
  if (kind == SoiKind::qpsk) {
    out.signal = dsp::qpsk_waveform(out.bits, soi_qpsk_params());
  } else {
    out.signal = dsp::ofdm_modulate(out.bits, soi_ofdm_params(), soi_symbol_count(kind, length));
  }
  out.signal.resize(length, dsp::Sample{0.0, 0.0});
  return out;
}

inline dsp::BitString demodulate_soi(std::span<const dsp::Sample> sig, SoiKind kind) {
  const std::size_t symbols = soi_symbol_count(kind, sig.size());
  if (kind == SoiKind::qpsk) return dsp::qpsk_demodulate(sig, soi_qpsk_params(), 2 * symbols);
  const auto p = soi_ofdm_params();
  return dsp::ofdm_demodulate(sig.first(symbols * p.symbol_length()), p, symbols);
}

inline std::uint64_t root_seed(const MixtureExample& ex) { return ex.augmented ? ex.parent_seed : ex.seed; }

struct CommTruth {
  dsp::BitString bits;
  dsp::CommCarrier carrier;
};

/// Generator ground truth of a comm-surrogate interference component. Bits
/// come from the root example; an augmented example draws a fresh carrier
/// from its own seed.
inline CommTruth comm_ground_truth(const MixtureExample& ex) {
  const std::size_t len = ex.soi.size();
  auto base = dsp::synthesize_comm_surrogate(interference_stream(root_seed(ex)), len);
  CommTruth truth{std::move(base.bits), base.carrier};
  if (ex.augmented) {
    Xoshiro256pp rng(interference_stream(ex.seed));
    truth.carrier = dsp::draw_comm_carrier(rng);
  }
  return truth;
}

inline dsp::ComplexSignal synthesize_interference(InterferenceKind kind, std::uint64_t seed, std::size_t length) {
  if (kind == InterferenceKind::emi_surrogate) return dsp::gen_emi_surrogate(interference_stream(seed), length);
  return dsp::gen_comm_surrogate(interference_stream(seed), length);
}

inline MixtureExample synthesize_example(SoiKind soi_kind, InterferenceKind interference_kind, std::uint64_t seed,
                                         double sinr_db, std::size_t length) {
  auto soi = synthesize_soi(soi_kind, seed, length);
  const auto interference = synthesize_interference(interference_kind, seed, length);
  auto mixed = dsp::mix_at_sinr(soi.signal, interference, sinr_db);
  MixtureExample ex;
  ex.mixture = std::move(mixed.mixture);
  ex.soi = std::move(soi.signal);
  ex.bits = std::move(soi.bits);
  ex.soi_kind = soi_kind;
  ex.interference_kind = interference_kind;
  ex.sinr_db = sinr_db;
  ex.seed = seed;
  return ex;
}

/// Rebuilds an example's mixture from its seeds and metadata alone.
inline MixtureExample regenerate(const MixtureExample& ex) {
  const std::size_t len = ex.soi.size();
  MixtureExample out = synthesize_example(ex.soi_kind, ex.interference_kind, root_seed(ex), ex.sinr_db, len);
  if (ex.augmented) {
    out.seed = ex.seed;
    out.parent_seed = ex.parent_seed;
    out.augmented = true;
    const auto truth = comm_ground_truth(out);
    const auto clean = dsp::comm_waveform(truth.bits, truth.carrier, len);
    out.mixture = dsp::mix_at_sinr(out.soi, clean, ex.sinr_db).mixture;
  }
  return out;
}

inline std::size_t worker_count(std::size_t requested, std::size_t jobs) {
  std::size_t n = requested == 0 ? 1 : requested;
  return std::max<std::size_t>(1, std::min(n, jobs));
}

/// SINR levels are assigned round-robin over the grid in (segment, index)
/// order, continuing across segment boundaries.
inline std::vector<MixtureExample> synthesize_dataset(const DatasetSpec& spec, std::size_t threads = 1) {
  spec.validate();
  const std::size_t n = spec.count();
  const std::size_t per = static_cast<std::size_t>(spec.examples_per_segment);
  std::vector<MixtureExample> out(n);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint64_t seed = example_seed(spec.master_seed, spec.split, i / per, i % per);
      const double sinr = spec.sinr_grid_db[i % spec.sinr_grid_db.size()];
      out[i] = synthesize_example(spec.soi_kind, spec.interference_kind, seed, sinr,
                                  static_cast<std::size_t>(spec.example_len));
    }
  };
  const std::size_t workers = worker_count(threads, n);
  if (workers == 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back(work, std::min(n, w * chunk), std::min(n, (w + 1) * chunk));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resynthesis augmentation

/// Demodulates the comm-surrogate interference of `ex`. If every recovered bit
/// matches the generator's bits, the bits are re-modulated into a clean
/// waveform on a fresh carrier and mixed with the same SOI at the same SINR.
/// Returns nullopt (reject) when any bit is wrong. Throws for interference
/// kinds that cannot be demodulated.
inline std::optional<MixtureExample> augment_resynthesize(const MixtureExample& ex) {
  if (ex.interference_kind != InterferenceKind::comm_surrogate) {
    throw Error(ErrorCode::precondition, "augment_resynthesize: interference is not demodulable");
  }
  if (ex.mixture.size() != ex.soi.size()) {
    throw Error(ErrorCode::shape_mismatch, "augment_resynthesize: mixture and SOI lengths differ");
  }
  const std::size_t len = ex.soi.size();
  dsp::ComplexSignal component(len);
  for (std::size_t i = 0; i < len; ++i) component[i] = ex.mixture[i] - ex.soi[i];

  const auto truth = comm_ground_truth(ex);
  const auto recovered = dsp::demodulate_comm(component, truth.carrier, truth.bits.size());
  if (dsp::count_bit_errors(recovered, truth.bits) != 0) return std::nullopt;

  MixtureExample out = ex;
  out.seed = augmented_seed(ex.seed);
  out.parent_seed = root_seed(ex);
  out.augmented = true;
  Xoshiro256pp rng(interference_stream(out.seed));
  const auto carrier = dsp::draw_comm_carrier(rng);
  const auto clean = dsp::comm_waveform(recovered, carrier, len);
  out.mixture = dsp::mix_at_sinr(ex.soi, clean, ex.sinr_db).mixture;
  return out;
}

struct AugmentSummary {
  std::vector<MixtureExample> accepted;
  std::size_t rejected = 0;
};

inline AugmentSummary augment_all(const std::vector<MixtureExample>& examples) {
  AugmentSummary s;
  for (const auto& ex : examples) {
    if (auto a = augment_resynthesize(ex)) {
      s.accepted.push_back(std::move(*a));
    } else {
      ++s.rejected;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// sigpack: "RFSIGPK1" | u32-LE manifest length | JSON manifest | payloads.
// Payload per example: mixture then soi as interleaved (I, Q) f64-LE, then
// the bits packed 8 per byte, least significant bit first. Manifest offsets
// are relative to the first payload byte.

inline constexpr std::string_view sigpack_magic = "RFSIGPK1";

inline std::size_t payload_bytes(std::size_t length, std::size_t n_bits) {
  return 2 * length * 16 + (n_bits + 7) / 8;
}

inline bytes::Buffer encode_sigpack(const std::vector<MixtureExample>& examples, const Json& spec = nullptr) {
  Json records = Json::array();
  std::size_t offset = 0;
  for (const auto& ex : examples) {
    if (ex.mixture.size() != ex.soi.size()) {
      throw Error(ErrorCode::shape_mismatch, "write_sigpack: mixture and SOI lengths differ");
    }
    records.push_back({{"offset", offset},
                       {"length", ex.soi.size()},
                       {"n_bits", ex.bits.size()},
                       {"soi_kind", ex.soi_kind},
                       {"interference_kind", ex.interference_kind},
                       {"sinr_db", ex.sinr_db},
                       {"seed", ex.seed},
                       {"parent_seed", ex.parent_seed},
                       {"augmented", ex.augmented}});
    offset += payload_bytes(ex.soi.size(), ex.bits.size());
  }
  Json manifest{{"format", std::string(sigpack_magic)}, {"count", examples.size()}, {"spec", spec},
                {"examples", records}};
  auto out = bytes::join_header(sigpack_magic, manifest.dump());
  out.reserve(out.size() + offset);
  for (const auto& ex : examples) {
    for (const auto& signal : {&ex.mixture, &ex.soi}) {
      for (const auto& s : *signal) {
        bytes::put_f64(out, s.real());
        bytes::put_f64(out, s.imag());
      }
    }
    std::uint8_t acc = 0;
    for (std::size_t i = 0; i < ex.bits.size(); ++i) {
      if (ex.bits[i]) acc |= static_cast<std::uint8_t>(1u << (i % 8));
      if (i % 8 == 7) {
        out.push_back(acc);
        acc = 0;
      }
    }
    if (ex.bits.size() % 8 != 0) out.push_back(acc);
  }
  return out;
}

struct Sigpack {
  std::vector<MixtureExample> examples;
  Json spec;
};

inline Sigpack decode_sigpack(std::span<const std::uint8_t> file) {
  const auto [text, payload_at] = bytes::split_header(file, sigpack_magic);
  const Json manifest = parse_json(text, "sigpack manifest");
  Sigpack pack;
  try {
    pack.spec = manifest.value("spec", Json());
    const auto& records = manifest.at("examples");
    if (manifest.at("count").get<std::size_t>() != records.size()) {
      throw Error(ErrorCode::format, "sigpack count disagrees with example list at byte offset 12");
    }
    std::size_t expected_offset = 0;
    for (const auto& r : records) {
      const std::size_t offset = r.at("offset").get<std::size_t>();
      const std::size_t length = r.at("length").get<std::size_t>();
      const std::size_t n_bits = r.at("n_bits").get<std::size_t>();
      if (offset != expected_offset) {
        throw Error(ErrorCode::format, "manifest offset " + std::to_string(offset) + " does not match payload at byte offset " +
                                           std::to_string(payload_at + expected_offset));
      }
      const std::size_t at = payload_at + offset;
      const std::size_t need = payload_bytes(length, n_bits);
      if (at + need > file.size()) {
        throw Error(ErrorCode::format, "truncated payload at byte offset " + std::to_string(file.size()) +
                                           " (example needs bytes up to " + std::to_string(at + need) + ")");
      }
      MixtureExample ex;
      ex.soi_kind = r.at("soi_kind").get<SoiKind>();
      ex.interference_kind = r.at("interference_kind").get<InterferenceKind>();
      ex.sinr_db = r.at("sinr_db").get<double>();
      ex.seed = r.at("seed").get<std::uint64_t>();
      ex.parent_seed = r.at("parent_seed").get<std::uint64_t>();
      ex.augmented = r.at("augmented").get<bool>();
      std::size_t pos = at;
      for (auto* signal : {&ex.mixture, &ex.soi}) {
        signal->resize(length);
        for (auto& s : *signal) {
          s = {bytes::get_f64(file, pos), bytes::get_f64(file, pos + 8)};
          pos += 16;
        }
      }
      ex.bits.resize(n_bits);
      for (std::size_t i = 0; i < n_bits; ++i) ex.bits[i] = (file[pos + i / 8] >> (i % 8)) & 1u;
      pack.examples.push_back(std::move(ex));
      expected_offset += need;
    }
    if (payload_at + expected_offset != file.size()) {
      throw Error(ErrorCode::format, "trailing bytes after payload at byte offset " +
                                         std::to_string(payload_at + expected_offset));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, std::string("sigpack manifest: ") + e.what());
  }
  return pack;
}

inline void write_sigpack(const std::vector<MixtureExample>& examples, const std::string& path,
                          const Json& spec = nullptr) {
  bytes::write_file(path, encode_sigpack(examples, spec));
}

inline Sigpack read_sigpack(const std::string& path) { return decode_sigpack(bytes::read_file(path)); }

/// Synthesizes the dataset, writes it as a sigpack at `out_path` and its
/// manifest beside it at `out_path + ".manifest.json"`. Returns the manifest.
inline Json generate_dataset(const DatasetSpec& spec, const std::string& out_path, std::size_t threads = 1) {
  const auto examples = synthesize_dataset(spec, threads);
  const auto image = encode_sigpack(examples, Json(spec));
  bytes::write_file(out_path, image);
  std::vector<std::size_t> per_level(spec.sinr_grid_db.size(), 0);
  for (std::size_t i = 0; i < examples.size(); ++i) ++per_level[i % per_level.size()];
  Json manifest{{"sigpack", std::filesystem::path(out_path).filename().string()},
                {"count", examples.size()},
                {"spec", spec},
                {"examples_per_level", per_level},
                {"content_hash", "fnv1a64:" + bytes::fnv1a_hex(image)}};
  const auto text = manifest.dump(2) + "\n";
  bytes::write_file(out_path + ".manifest.json",
                    std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return manifest;
}

}  // namespace rfsep::datagen
