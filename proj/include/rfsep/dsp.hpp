#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "rfsep/error.hpp"
#include "rfsep/rng.hpp"

// Complex-baseband synthesis and recovery. Everything runs in normalized
// discrete time; timing and carrier are known by construction, so there is
// no synchronization stage anywhere.
namespace rfsep::dsp {

using Sample = std::complex<double>;
using ComplexSignal = std::vector<Sample>;
using BitString = std::vector<std::uint8_t>;

struct QpskParams {
  int oversampling = 16;
  double rolloff = 0.5;
  int rrc_span = 8;  // filter half-length in symbols

  void validate() const {
    if (oversampling < 2) throw Error(ErrorCode::invalid_argument, "qpsk: oversampling must be >= 2");
    if (!(rolloff > 0.0 && rolloff <= 1.0)) {
      throw Error(ErrorCode::invalid_argument, "qpsk: rolloff must be in (0, 1]");
    }
    if (rrc_span < 1) throw Error(ErrorCode::invalid_argument, "qpsk: rrc_span must be >= 1");
  }

  std::size_t filter_length() const {
    return 2 * static_cast<std::size_t>(rrc_span) * static_cast<std::size_t>(oversampling) + 1;
  }
  std::size_t tail_length() const { return filter_length() - 1; }
};

struct OfdmParams {
  int fft_size = 64;
  int cp_len = 16;
  int active_subcarriers = 48;

  void validate() const {
    if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0) {
      throw Error(ErrorCode::invalid_argument, "ofdm: fft_size must be a power of two");
    }
    if (cp_len < 0 || cp_len >= fft_size) {
      throw Error(ErrorCode::invalid_argument, "ofdm: cp_len must be in [0, fft_size)");
    }
    if (active_subcarriers < 2 || active_subcarriers % 2 != 0 || active_subcarriers >= fft_size) {
      throw Error(ErrorCode::invalid_argument,
                  "ofdm: active_subcarriers must be even and leave the DC bin unused");
    }
  }

  std::size_t symbol_length() const { return static_cast<std::size_t>(fft_size + cp_len); }
  std::size_t bits_per_symbol() const { return 2 * static_cast<std::size_t>(active_subcarriers); }
};

inline BitString random_bits(Xoshiro256pp& rng, std::size_t count) {
  BitString bits(count);
  for (auto& b : bits) b = static_cast<std::uint8_t>(rng() >> 63);
  return bits;
}

inline std::size_t count_bit_errors(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::shape_mismatch, "bit strings differ in length");
  }
  std::size_t errors = 0;
  for (std::size_t i = 0; i < a.size(); ++i) errors += (a[i] != b[i]);
  return errors;
}

// ---------------------------------------------------------------------------
// QPSK

/// Gray mapping: (b0, b1) -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2).
inline std::vector<Sample> qpsk_map(std::span<const std::uint8_t> bits) {
  if (bits.size() % 2 != 0) {
    throw Error(ErrorCode::invalid_argument,
                "qpsk_map: odd bit count " + std::to_string(bits.size()));
  }
  constexpr double a = std::numbers::sqrt2 / 2.0;
  std::vector<Sample> symbols(bits.size() / 2);
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    symbols[i] = {bits[2 * i] ? -a : a, bits[2 * i + 1] ? -a : a};
  }
  return symbols;
}

// Sign decisions; an exactly-zero component decides bit 0.
inline BitString qpsk_decide(std::span<const Sample> symbols) {
  BitString bits(2 * symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    bits[2 * i] = symbols[i].real() < 0.0;
    bits[2 * i + 1] = symbols[i].imag() < 0.0;
  }
  return bits;
}

/// Root-raised-cosine taps over [-span, span] symbols, normalized to unit energy.
inline std::vector<double> rrc_taps(const QpskParams& p) {
  p.validate();
  const std::size_t n = p.filter_length();
  const double beta = p.rolloff;
  const double sps = p.oversampling;
  const long half = static_cast<long>(n / 2);
  std::vector<double> h(n);
  constexpr double pi = std::numbers::pi;
  for (long i = -half; i <= half; ++i) {
    const double t = static_cast<double>(i) / sps;  // in symbol periods
    double v;
    if (i == 0) {
      v = 1.0 + beta * (4.0 / pi - 1.0);
    } else if (std::abs(std::abs(4.0 * beta * t) - 1.0) < 1e-12) {
      v = beta / std::numbers::sqrt2 *
          ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * beta)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * beta)));
    } else {
      const double num = std::sin(pi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(pi * t * (1.0 + beta));
      const double den = pi * t * (1.0 - (4.0 * beta * t) * (4.0 * beta * t));
      v = num / den;
    }
    h[static_cast<std::size_t>(i + half)] = v;
  }
  double energy = 0.0;
  for (double v : h) energy += v * v;
  const double norm = 1.0 / std::sqrt(energy);
  for (double& v : h) v *= norm;
  return h;
}

inline std::size_t qpsk_waveform_length(std::size_t n_symbols, const QpskParams& p) {
  return n_symbols * static_cast<std::size_t>(p.oversampling) + p.tail_length();
}

// Largest symbol count whose waveform (tails included) fits in `length`.
inline std::size_t qpsk_symbols_for_length(std::size_t length, const QpskParams& p) {
  if (length < p.tail_length()) return 0;
  return (length - p.tail_length()) / static_cast<std::size_t>(p.oversampling);
}

/// Upsample and pulse-shape. The transmit pulse is the unit-energy RRC scaled
/// by sqrt(oversampling), which gives unit average power per sample. Both
/// filter tails are kept: length = n_symbols * sps + 2 * span * sps.
inline ComplexSignal qpsk_waveform(std::span<const std::uint8_t> bits, const QpskParams& p) {
  const auto symbols = qpsk_map(bits);
  const auto h = rrc_taps(p);
  const std::size_t sps = static_cast<std::size_t>(p.oversampling);
  const double gain = std::sqrt(static_cast<double>(sps));
  ComplexSignal out(qpsk_waveform_length(symbols.size(), p), Sample{0.0, 0.0});
  for (std::size_t n = 0; n < symbols.size(); ++n) {
    const Sample s = gain * symbols[n];
    Sample* dst = out.data() + n * sps;
    for (std::size_t i = 0; i < h.size(); ++i) dst[i] += s * h[i];
  }
  return out;
}

/// Matched-filter outputs at the known symbol instants.
inline std::vector<Sample> qpsk_matched_symbols(std::span<const Sample> sig, const QpskParams& p,
                                                std::size_t n_symbols) {
  const auto h = rrc_taps(p);
  const std::size_t sps = static_cast<std::size_t>(p.oversampling);
  if (n_symbols > 0 && sig.size() < (n_symbols - 1) * sps + h.size()) {
    throw Error(ErrorCode::invalid_argument,
                "qpsk_demodulate: signal of " + std::to_string(sig.size()) + " samples is too short for " +
                    std::to_string(n_symbols) + " symbols");
  }
  const double norm = 1.0 / std::sqrt(static_cast<double>(sps));
  std::vector<Sample> out(n_symbols);
  for (std::size_t n = 0; n < n_symbols; ++n) {
    Sample acc{0.0, 0.0};
    const Sample* src = sig.data() + n * sps;
    for (std::size_t i = 0; i < h.size(); ++i) acc += src[i] * h[i];
    out[n] = acc * norm;
  }
  return out;
}

inline BitString qpsk_demodulate(std::span<const Sample> sig, const QpskParams& p, std::size_t n_bits) {
  if (n_bits % 2 != 0) {
    throw Error(ErrorCode::invalid_argument, "qpsk_demodulate: odd bit count " + std::to_string(n_bits));
  }
  return qpsk_decide(qpsk_matched_symbols(sig, p, n_bits / 2));
}

// ---------------------------------------------------------------------------
// OFDM

namespace detail {

// Unitary DFT (sign = -1) or inverse DFT (sign = +1) by direct summation with
// an exact-index twiddle table.
inline std::vector<Sample> unitary_dft(std::span<const Sample> x, int sign) {
  const std::size_t n = x.size();
  std::vector<Sample> twiddle(n);
  for (std::size_t m = 0; m < n; ++m) {
    twiddle[m] = std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n));
  }
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  std::vector<Sample> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Sample acc{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * twiddle[(k * i) % n];
    out[k] = acc * norm;
  }
  return out;
}

}  // namespace detail

inline std::vector<Sample> dft_unitary(std::span<const Sample> x) { return detail::unitary_dft(x, -1); }
inline std::vector<Sample> idft_unitary(std::span<const Sample> x) { return detail::unitary_dft(x, +1); }

/// FFT bins carrying data: subcarriers -A/2 .. -1 then 1 .. A/2; DC stays null.
inline std::vector<std::size_t> ofdm_active_bins(const OfdmParams& p) {
  p.validate();
  std::vector<std::size_t> bins;
  const int half = p.active_subcarriers / 2;
  for (int k = -half; k <= half; ++k) {
    if (k == 0) continue;
    bins.push_back(static_cast<std::size_t>((k + p.fft_size) % p.fft_size));
  }
  return bins;
}

inline ComplexSignal ofdm_modulate(std::span<const std::uint8_t> bits, const OfdmParams& p,
                                   std::size_t n_symbols) {
  p.validate();
  if (bits.size() != n_symbols * p.bits_per_symbol()) {
    throw Error(ErrorCode::invalid_argument,
                "ofdm_modulate: expected " + std::to_string(n_symbols * p.bits_per_symbol()) +
                    " bits, got " + std::to_string(bits.size()));
  }
  const auto bins = ofdm_active_bins(p);
  const auto symbols = qpsk_map(bits);
  const std::size_t fft = static_cast<std::size_t>(p.fft_size);
  const std::size_t cp = static_cast<std::size_t>(p.cp_len);
  ComplexSignal out;
  out.reserve(n_symbols * p.symbol_length());
  std::vector<Sample> freq(fft);
  for (std::size_t s = 0; s < n_symbols; ++s) {
    std::fill(freq.begin(), freq.end(), Sample{0.0, 0.0});
    for (std::size_t i = 0; i < bins.size(); ++i) freq[bins[i]] = symbols[s * bins.size() + i];
    const auto time = idft_unitary(freq);
    out.insert(out.end(), time.end() - static_cast<std::ptrdiff_t>(cp), time.end());
    out.insert(out.end(), time.begin(), time.end());
  }
  return out;
}

/// CP removal, unitary DFT, optional per-bin equalization by a known channel
/// response (one value per FFT bin), QPSK decisions on the active bins.
inline BitString ofdm_demodulate(std::span<const Sample> sig, const OfdmParams& p, std::size_t n_symbols,
                                 std::span<const Sample> channel = {}) {
  p.validate();
  if (sig.size() != n_symbols * p.symbol_length()) {
    throw Error(ErrorCode::invalid_argument,
                "ofdm_demodulate: expected " + std::to_string(n_symbols * p.symbol_length()) +
                    " samples, got " + std::to_string(sig.size()));
  }
  const std::size_t fft = static_cast<std::size_t>(p.fft_size);
  if (!channel.empty() && channel.size() != fft) {
    throw Error(ErrorCode::shape_mismatch, "ofdm_demodulate: channel response needs one value per bin");
  }
  const auto bins = ofdm_active_bins(p);
  std::vector<Sample> decided;
  decided.reserve(n_symbols * bins.size());
  for (std::size_t s = 0; s < n_symbols; ++s) {
    const auto body = sig.subspan(s * p.symbol_length() + static_cast<std::size_t>(p.cp_len), fft);
    const auto freq = dft_unitary(body);
    for (auto bin : bins) decided.push_back(channel.empty() ? freq[bin] : freq[bin] / channel[bin]);
  }
  return qpsk_decide(decided);
}

// ---------------------------------------------------------------------------
// Power and mixing

inline double mean_power(std::span<const Sample> sig) {
  if (sig.empty()) throw Error(ErrorCode::invalid_argument, "mean_power: empty signal");
  double acc = 0.0;
  for (const auto& s : sig) acc += s.real() * s.real() + s.imag() * s.imag();
  return acc / static_cast<double>(sig.size());
}

struct Mixture {
  ComplexSignal mixture;
  double scale;
};

/// mixture = soi + scale * interference with
/// scale = sqrt(P_soi / (P_interference * 10^(sinr_db / 10))).
inline Mixture mix_at_sinr(std::span<const Sample> soi, std::span<const Sample> interference, double sinr_db) {
  if (soi.size() != interference.size()) {
    throw Error(ErrorCode::shape_mismatch, "mix_at_sinr: lengths " + std::to_string(soi.size()) + " and " +
                                               std::to_string(interference.size()) + " differ");
  }
  const double p_soi = mean_power(soi);
  const double p_int = mean_power(interference);
  if (p_soi <= 0.0 || p_int <= 0.0) {
    throw Error(ErrorCode::invalid_argument, "mix_at_sinr: zero-power component");
  }
  if (!std::isfinite(sinr_db)) throw Error(ErrorCode::non_finite, "mix_at_sinr: sinr_db is not finite");
  const double scale = std::sqrt(p_soi / (p_int * std::pow(10.0, sinr_db / 10.0)));
  Mixture out{ComplexSignal(soi.size()), scale};
  for (std::size_t i = 0; i < soi.size(); ++i) out.mixture[i] = soi[i] + scale * interference[i];
  return out;
}

inline double sinr_db_of(std::span<const Sample> soi, std::span<const Sample> interference_component) {
  return 10.0 * std::log10(mean_power(soi) / mean_power(interference_component));
}

inline void normalize_power(ComplexSignal& sig) {
  const double p = mean_power(sig);
  if (!(p > 0.0)) throw Error(ErrorCode::invalid_argument, "cannot normalize a zero-power signal");
  const double g = 1.0 / std::sqrt(p);
  for (auto& s : sig) s *= g;
}

// ---------------------------------------------------------------------------
// Interference surrogates

/// Impulsive-plus-swept stand-in for recorded EMI: Bernoulli-started bursts of
/// complex Gaussian samples with geometric lengths, on top of a linear chirp
/// across a random band. Unit mean power.
inline ComplexSignal gen_emi_surrogate(std::uint64_t seed, std::size_t length) {
  if (length == 0) throw Error(ErrorCode::invalid_argument, "gen_emi_surrogate: length must be >= 1");
  constexpr double burst_start_p = 0.004;
  constexpr double burst_end_p = 1.0 / 24.0;
  constexpr double burst_sigma = 4.0;
  Xoshiro256pp rng(seed);
  const double f0 = rng.uniform(-0.25, 0.25);
  const double f1 = rng.uniform(-0.25, 0.25);
  const double phase0 = rng.uniform(0.0, 2.0 * std::numbers::pi);

  ComplexSignal out(length);
  bool in_burst = false;
  double phase = phase0;
  const double n = static_cast<double>(length);
  for (std::size_t i = 0; i < length; ++i) {
    const double f = f0 + (f1 - f0) * static_cast<double>(i) / n;
    out[i] = std::polar(1.0, phase);
    phase = std::fmod(phase + 2.0 * std::numbers::pi * f, 2.0 * std::numbers::pi);
    in_burst = in_burst ? !rng.bernoulli(burst_end_p) : rng.bernoulli(burst_start_p);
    if (in_burst) {
      const double re = rng.normal();
      const double im = rng.normal();
      out[i] += burst_sigma * std::numbers::sqrt2 / 2.0 * Sample{re, im};
    }
  }
  normalize_power(out);
  return out;
}

// Modulation used by the comm surrogate; deliberately not the SOI's oversampling.
inline QpskParams comm_surrogate_params() { return {8, 0.35, 8}; }

struct CommCarrier {
  double cfo = 0.0;    // cycles per sample
  double phase = 0.0;  // radians
};

struct CommSurrogate {
  ComplexSignal signal;
  BitString bits;
  CommCarrier carrier;
};

inline CommCarrier draw_comm_carrier(Xoshiro256pp& rng) {
  CommCarrier c;
  c.cfo = rng.uniform(-0.1, 0.1);
  c.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return c;
}

inline std::size_t comm_surrogate_symbols(std::size_t length) {
  const auto n = qpsk_symbols_for_length(length, comm_surrogate_params());
  return n == 0 ? 1 : n;
}

/// Modulate, fit to `length` (zero pad or crop), rotate onto the carrier and
/// normalize to unit power.
inline ComplexSignal comm_waveform(std::span<const std::uint8_t> bits, const CommCarrier& carrier,
                                   std::size_t length) {
  auto sig = qpsk_waveform(bits, comm_surrogate_params());
  sig.resize(length, Sample{0.0, 0.0});
  for (std::size_t i = 0; i < length; ++i) {
    const double angle = 2.0 * std::numbers::pi * std::fmod(carrier.cfo * static_cast<double>(i), 1.0) + carrier.phase;
    sig[i] *= std::polar(1.0, angle);
  }
  normalize_power(sig);
  return sig;
}

inline BitString demodulate_comm(std::span<const Sample> sig, const CommCarrier& carrier, std::size_t n_bits) {
  ComplexSignal baseband(sig.begin(), sig.end());
  for (std::size_t i = 0; i < baseband.size(); ++i) {
    const double angle = 2.0 * std::numbers::pi * std::fmod(carrier.cfo * static_cast<double>(i), 1.0) + carrier.phase;
    baseband[i] *= std::polar(1.0, -angle);
  }
  return qpsk_demodulate(baseband, comm_surrogate_params(), n_bits);
}

/// Single-carrier QPSK stand-in for a recorded communication signal. Draw
/// order from the seed: carrier offset, carrier phase, then the bits.
inline CommSurrogate synthesize_comm_surrogate(std::uint64_t seed, std::size_t length) {
  if (length == 0) throw Error(ErrorCode::invalid_argument, "gen_comm_surrogate: length must be >= 1");
  Xoshiro256pp rng(seed);
  CommSurrogate out;
  out.carrier = draw_comm_carrier(rng);
  out.bits = random_bits(rng, 2 * comm_surrogate_symbols(length));
  out.signal = comm_waveform(out.bits, out.carrier, length);
  return out;
}

inline ComplexSignal gen_comm_surrogate(std::uint64_t seed, std::size_t length) {
  return synthesize_comm_surrogate(seed, length).signal;
}

}  // namespace rfsep::dsp
