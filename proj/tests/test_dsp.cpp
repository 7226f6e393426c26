#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <numbers>
#include <random>

#include "rfsep/dsp.hpp"

using namespace rfsep;
using namespace rfsep::dsp;

namespace {

bool bit_identical(const ComplexSignal& a, const ComplexSignal& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i].real()) != std::bit_cast<std::uint64_t>(b[i].real()) ||
        std::bit_cast<std::uint64_t>(a[i].imag()) != std::bit_cast<std::uint64_t>(b[i].imag())) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST(Rng, DeterministicAndInRange) {
  Xoshiro256pp a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
  Xoshiro256pp r(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.below(13), 13u);
  }
  EXPECT_NE(Xoshiro256pp(1)(), Xoshiro256pp(2)());
}

TEST(Rng, NormalMoments) {
  Xoshiro256pp r(3);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Qpsk, MapExamples) {
  const double h = std::numbers::sqrt2 / 2.0;
  const BitString zz{0, 0}, oo{1, 1};
  EXPECT_NEAR(qpsk_map(zz)[0].real(), h, 1e-15);
  EXPECT_NEAR(qpsk_map(zz)[0].imag(), h, 1e-15);
  EXPECT_NEAR(qpsk_map(oo)[0].real(), -h, 1e-15);
  EXPECT_NEAR(qpsk_map(oo)[0].imag(), -h, 1e-15);
  Xoshiro256pp r(1);
  const auto syms = qpsk_map(random_bits(r, 8));
  ASSERT_EQ(syms.size(), 4u);
  for (auto s : syms) EXPECT_NEAR(std::abs(s), 1.0, 1e-15);
  const BitString odd{1, 0, 1};
  EXPECT_THROW(qpsk_map(odd), Error);
}

TEST(Qpsk, DecisionRule) {
  const std::vector<Sample> s{{0.9, -0.4}, {0.0, 0.0}, {-1e-300, 2.0}};
  EXPECT_EQ(qpsk_decide(s), (BitString{0, 1, 0, 0, 1, 0}));
}

TEST(Qpsk, RrcIsUnitEnergyAndSymmetric) {
  for (const QpskParams p : {QpskParams{16, 0.5, 8}, QpskParams{8, 0.35, 8}, QpskParams{4, 0.25, 6}}) {
    const auto h = rrc_taps(p);
    ASSERT_EQ(h.size(), p.filter_length());
    double e = 0.0;
    for (double v : h) e += v * v;
    EXPECT_NEAR(e, 1.0, 1e-12);
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(h[i], h[h.size() - 1 - i], 1e-15);
  }
}

TEST(Qpsk, RrcMatchesClosedForm) {
  // Textbook RRC impulse response, then unit-energy normalization.
  const QpskParams p{16, 0.5, 8};
  const double beta = p.rolloff, sps = p.oversampling;
  std::vector<double> ref;
  for (int i = -p.rrc_span * p.oversampling; i <= p.rrc_span * p.oversampling; ++i) {
    const double t = i / sps;
    double v;
    if (i == 0) {
      v = 1.0 - beta + 4.0 * beta / std::numbers::pi;
    } else if (std::abs(std::abs(4.0 * beta * t) - 1.0) < 1e-12) {
      v = beta / std::numbers::sqrt2 *
          ((1 + 2 / std::numbers::pi) * std::sin(std::numbers::pi / (4 * beta)) +
           (1 - 2 / std::numbers::pi) * std::cos(std::numbers::pi / (4 * beta)));
    } else {
      v = (std::sin(std::numbers::pi * t * (1 - beta)) + 4 * beta * t * std::cos(std::numbers::pi * t * (1 + beta))) /
          (std::numbers::pi * t * (1 - 16 * beta * beta * t * t));
    }
    ref.push_back(v);
  }
  double e = 0.0;
  for (double v : ref) e += v * v;
  const auto h = rrc_taps(p);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(h[i], ref[i] / std::sqrt(e), 1e-12);
}

TEST(Qpsk, SingleSymbolRecoveredByMatchedFilter) {
  const QpskParams p;
  const BitString bits{1, 0};
  const auto sig = qpsk_waveform(bits, p);
  const auto sym = qpsk_matched_symbols(sig, p, 1)[0];
  const auto expect = qpsk_map(bits)[0];
  EXPECT_NEAR(sym.real(), expect.real(), 1e-9);
  EXPECT_NEAR(sym.imag(), expect.imag(), 1e-9);
}

TEST(Qpsk, AllZeroBitsHaveUnitPowerAfterTailTrim) {
  const QpskParams p;
  const BitString bits(64, 0);
  const auto sig = qpsk_waveform(bits, p);
  const std::size_t tail = static_cast<std::size_t>(p.rrc_span * p.oversampling);
  const std::span<const Sample> body(sig.data() + tail, sig.size() - 2 * tail);
  EXPECT_NEAR(mean_power(body), 1.0, 0.05);
}

TEST(Qpsk, NoiselessRoundtrip) {
  for (const QpskParams p : {QpskParams{}, comm_surrogate_params()}) {
    Xoshiro256pp r(10);
    const auto bits = random_bits(r, 10000);
    const auto sig = qpsk_waveform(bits, p);
    EXPECT_EQ(sig.size(), qpsk_waveform_length(5000, p));
    EXPECT_EQ(count_bit_errors(qpsk_demodulate(sig, p, bits.size()), bits), 0u);
  }
}

TEST(Qpsk, RoundtripAt20dBSnr) {
  const QpskParams p;
  Xoshiro256pp r(12);
  const auto bits = random_bits(r, 10000);
  auto sig = qpsk_waveform(bits, p);
  const double sigma = std::sqrt(std::pow(10.0, -2.0) / 2.0);  // per-sample SNR 20 dB, unit signal power
  for (auto& s : sig) s += sigma * Sample{r.normal(), r.normal()};
  EXPECT_EQ(count_bit_errors(qpsk_demodulate(sig, p, bits.size()), bits), 0u);
}

TEST(Qpsk, TooShortSignalErrors) {
  const QpskParams p;
  const ComplexSignal sig(100);
  EXPECT_THROW(qpsk_demodulate(sig, p, 20), Error);
}

TEST(Ofdm, NullAllocationGivesZeroWaveform) {
  const OfdmParams p;
  const auto freq = std::vector<Sample>(64, Sample{0.0, 0.0});
  for (auto v : idft_unitary(freq)) EXPECT_EQ(std::abs(v), 0.0);
}

TEST(Ofdm, SingleSubcarrierMatchesDftDefinition) {
  const std::size_t n = 64;
  const Sample s{0.3, -0.8};
  for (int k : {1, 5, -7, 24}) {
    std::vector<Sample> freq(n);
    freq[static_cast<std::size_t>((k + 64) % 64)] = s;
    const auto time = idft_unitary(freq);
    for (std::size_t t = 0; t < n; ++t) {
      const auto expect = s * std::polar(1.0, 2.0 * std::numbers::pi * k * static_cast<double>(t) / n) / 8.0;
      ASSERT_NEAR(std::abs(time[t] - expect), 0.0, 1e-13) << "k=" << k << " t=" << t;
    }
  }
}

TEST(Ofdm, ActiveBinsSkipDc) {
  const auto bins = ofdm_active_bins(OfdmParams{});
  ASSERT_EQ(bins.size(), 48u);
  EXPECT_EQ(bins.front(), 40u);
  EXPECT_EQ(bins[23], 63u);
  EXPECT_EQ(bins[24], 1u);
  EXPECT_EQ(bins.back(), 24u);
}

TEST(Ofdm, RoundtripOnRandomBitStrings) {
  const OfdmParams p;
  Xoshiro256pp r(5);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n_sym = 1 + r.below(4);
    const auto bits = random_bits(r, n_sym * p.bits_per_symbol());
    const auto sig = ofdm_modulate(bits, p, n_sym);
    ASSERT_EQ(sig.size(), n_sym * 80);
    ASSERT_EQ(ofdm_demodulate(sig, p, n_sym), bits);
  }
}

TEST(Ofdm, TenThousandBitsRoundtrip) {
  const OfdmParams p;
  Xoshiro256pp r(6);
  const std::size_t n_sym = (10000 + p.bits_per_symbol() - 1) / p.bits_per_symbol();
  const auto bits = random_bits(r, n_sym * p.bits_per_symbol());
  ASSERT_GE(bits.size(), 10000u);
  EXPECT_EQ(count_bit_errors(ofdm_demodulate(ofdm_modulate(bits, p, n_sym), p, n_sym), bits), 0u);
}

TEST(Ofdm, ParsevalPerSymbol) {
  const OfdmParams p{64, 0, 48};
  Xoshiro256pp r(9);
  const auto bits = random_bits(r, p.bits_per_symbol());
  const auto sig = ofdm_modulate(bits, p, 1);
  const auto syms = qpsk_map(bits);
  double e_time = 0.0, e_freq = 0.0;
  for (auto v : sig) e_time += std::norm(v);
  for (auto v : syms) e_freq += std::norm(v);
  EXPECT_NEAR(e_time, e_freq, 1e-10);
}

TEST(Ofdm, CircularDelayWithinCpEqualizedByKnownRotation) {
  const OfdmParams p;
  Xoshiro256pp r(13);
  const auto bits = random_bits(r, p.bits_per_symbol());
  const auto sig = ofdm_modulate(bits, p, 1);
  const std::size_t delay = 9;  // < cp_len
  ComplexSignal delayed(sig.size());
  for (std::size_t i = 0; i < sig.size(); ++i) delayed[(i + delay) % sig.size()] = sig[i];
  // With the CP in place, a delay of D shifts the FFT window; bin k sees e^{-j2πkD/N}.
  std::vector<Sample> channel(64);
  for (std::size_t k = 0; k < 64; ++k) channel[k] = std::polar(1.0, -2.0 * std::numbers::pi * k * delay / 64.0);
  EXPECT_EQ(ofdm_demodulate(delayed, p, 1, channel), bits);
}

TEST(Ofdm, ZeroWaveformDecidesAllZeroBits) {
  const OfdmParams p;
  const ComplexSignal zero(2 * p.symbol_length());
  EXPECT_EQ(ofdm_demodulate(zero, p, 2), BitString(2 * p.bits_per_symbol(), 0));
}

TEST(Ofdm, Errors) {
  const OfdmParams p;
  EXPECT_THROW(ofdm_modulate(BitString(95, 0), p, 1), Error);
  EXPECT_THROW(ofdm_demodulate(ComplexSignal(79), p, 1), Error);
}

TEST(Power, MeanPowerExamples) {
  EXPECT_EQ(mean_power(ComplexSignal(10, Sample{1, 0})), 1.0);
  EXPECT_EQ(mean_power(ComplexSignal(10, Sample{1, 1})), 2.0);
  ComplexSignal a(16, Sample{0.5, 0.0}), b(16, Sample{2.0, 1.0}), ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  EXPECT_DOUBLE_EQ(mean_power(ab), 0.5 * (mean_power(a) + mean_power(b)));
  EXPECT_THROW(mean_power(ComplexSignal{}), Error);
}

TEST(Power, MixAtSinrScaleExamples) {
  const ComplexSignal s(32, Sample{1, 0}), i(32, Sample{0, 1});
  EXPECT_DOUBLE_EQ(mix_at_sinr(s, i, 0.0).scale, 1.0);
  EXPECT_NEAR(mix_at_sinr(s, i, 10.0).scale, 0.31622777, 1e-8);
  EXPECT_NEAR(mix_at_sinr(s, i, -10.0).scale, 3.1622777, 1e-7);
  EXPECT_THROW(mix_at_sinr(s, ComplexSignal(32), 0.0), Error);
  EXPECT_THROW(mix_at_sinr(s, ComplexSignal(31, Sample{1, 0}), 0.0), Error);
}

TEST(Power, MixAtSinrHitsEveryGridLevel) {
  Xoshiro256pp r(4);
  const auto soi = qpsk_waveform(random_bits(r, 480), QpskParams{});
  const auto intf = gen_comm_surrogate(77, soi.size());
  for (int k = 0; k <= 10; ++k) {
    const double target = -15.0 + 3.0 * k;
    const auto mix = mix_at_sinr(soi, intf, target);
    ComplexSignal component(soi.size());
    for (std::size_t n = 0; n < soi.size(); ++n) component[n] = mix.mixture[n] - soi[n];
    EXPECT_NEAR(sinr_db_of(soi, component), target, 1e-9);
  }
}

TEST(Surrogates, UnitPowerAndDeterministic) {
  for (std::size_t len : {1u, 100u, 4096u}) {
    EXPECT_NEAR(mean_power(gen_emi_surrogate(5, len)), 1.0, 1e-6);
    EXPECT_NEAR(mean_power(gen_comm_surrogate(5, len)), 1.0, 1e-6);
  }
  EXPECT_TRUE(bit_identical(gen_emi_surrogate(31, 4096), gen_emi_surrogate(31, 4096)));
  EXPECT_TRUE(bit_identical(gen_comm_surrogate(31, 4096), gen_comm_surrogate(31, 4096)));
  EXPECT_FALSE(bit_identical(gen_emi_surrogate(31, 4096), gen_emi_surrogate(32, 4096)));
  EXPECT_THROW(gen_emi_surrogate(1, 0), Error);
}

TEST(Surrogates, CommSurrogateIsDemodulable) {
  const auto c = synthesize_comm_surrogate(17, 4096);
  EXPECT_EQ(c.bits.size(), 2 * comm_surrogate_symbols(4096));
  EXPECT_EQ(count_bit_errors(demodulate_comm(c.signal, c.carrier, c.bits.size()), c.bits), 0u);
}
