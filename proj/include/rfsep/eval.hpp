#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rfsep/bytes.hpp"
#include "rfsep/datagen.hpp"
#include "rfsep/dsp.hpp"
#include "rfsep/error.hpp"
#include "rfsep/json_util.hpp"
#include "rfsep/wavenet.hpp"

namespace rfsep::eval {

using datagen::MixtureExample;

struct BerPoint {
  double sinr_db;
  double ber;
  std::size_t n_bits;
  std::size_t bit_errors;
};

struct BerCurve {
  std::vector<BerPoint> points;
  std::string label;
};

struct MsePoint {
  double sinr_db;
  double mse;
  std::size_t n_examples;
};

struct MseCurve {
  std::vector<MsePoint> points;
  std::string label;
};

/// Anything that maps an example to an SOI estimate of the same length.
using Separator = std::function<dsp::ComplexSignal(const MixtureExample&)>;

inline Separator oracle_separator() {
  return [](const MixtureExample& ex) { return ex.soi; };
}

inline Separator null_separator() {
  return [](const MixtureExample& ex) { return ex.mixture; };
}

inline Separator wavenet_separator(const wavenet::WaveNetModel& model) {
  return [&model](const MixtureExample& ex) { return wavenet::separate(model, ex.mixture); };
}

// Mean squared error over the I and Q rows, matching the training loss.
inline double waveform_mse(std::span<const dsp::Sample> estimate, std::span<const dsp::Sample> truth) {
  if (estimate.size() != truth.size() || truth.empty()) {
    throw Error(ErrorCode::shape_mismatch, "waveform_mse: length mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) acc += std::norm(estimate[i] - truth[i]);
  return acc / (2.0 * static_cast<double>(truth.size()));
}

struct EvalResult {
  BerCurve ber;
  MseCurve mse;
};

/// Runs the separator on every example, demodulates the estimate and pools
/// bit errors per SINR level; MSE is averaged per level. When `grid` is
/// given every level in it must have at least one example.
inline EvalResult evaluate(const Separator& separator, const std::vector<MixtureExample>& test_set,
                           const std::string& label, const std::vector<double>& grid = {},
                           std::size_t threads = 1) {
  if (test_set.empty()) throw Error(ErrorCode::invalid_argument, "evaluate: empty test set");
  struct PerExample {
    std::size_t errors = 0;
    std::size_t bits = 0;
    double mse = 0.0;
  };
  std::vector<PerExample> per(test_set.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& ex = test_set[i];
      const auto estimate = separator(ex);
      if (estimate.size() != ex.soi.size()) {
        throw Error(ErrorCode::shape_mismatch, "evaluate: separator changed the signal length");
      }
      const auto bits = datagen::demodulate_soi(estimate, ex.soi_kind);
      per[i] = {dsp::count_bit_errors(bits, ex.bits), ex.bits.size(), waveform_mse(estimate, ex.soi)};
    }
  };
  const std::size_t workers = datagen::worker_count(threads, test_set.size());
  if (workers == 1) {
    work(0, test_set.size());
  } else {
    std::vector<std::exception_ptr> failures(workers);
    {
      std::vector<std::jthread> pool;
      const std::size_t chunk = (test_set.size() + workers - 1) / workers;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            work(std::min(test_set.size(), w * chunk), std::min(test_set.size(), (w + 1) * chunk));
          } catch (...) {
            failures[w] = std::current_exception();
          }
        });
      }
    }
    for (auto& f : failures) {
      if (f) std::rethrow_exception(f);
    }
  }

  // Ordered reduction so results do not depend on the thread count.
  struct Level {
    std::size_t errors = 0, bits = 0, count = 0;
    double mse_sum = 0.0;
  };
  std::map<double, Level> levels;
  for (double s : grid) levels[s];
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    if (!grid.empty() && !levels.count(test_set[i].sinr_db)) continue;
    auto& l = levels[test_set[i].sinr_db];
    l.errors += per[i].errors;
    l.bits += per[i].bits;
    l.mse_sum += per[i].mse;
    ++l.count;
  }
  EvalResult r;
  r.ber.label = label;
  r.mse.label = label;
  for (const auto& [sinr, l] : levels) {
    if (l.count == 0 || l.bits == 0) {
      throw Error(ErrorCode::invalid_argument, "evaluate: no examples at SINR " + std::to_string(sinr) + " dB");
    }
    r.ber.points.push_back({sinr, static_cast<double>(l.errors) / static_cast<double>(l.bits), l.bits, l.errors});
    r.mse.points.push_back({sinr, l.mse_sum / static_cast<double>(l.count), l.count});
  }
  return r;
}

/// Lowest SINR at which the curve reaches target_ber, interpolated linearly in
/// (sinr_db, log10 ber) between the bracketing points. Zero-BER points count
/// as 1 / (2 n_bits) for this purpose. nullopt when the target is never reached.
inline std::optional<double> sinr_at_target_ber(const BerCurve& curve, double target_ber) {
  if (curve.points.size() < 2) {
    throw Error(ErrorCode::invalid_argument, "sinr_at_target_ber: need at least two points");
  }
  if (!(target_ber > 0.0 && target_ber < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "sinr_at_target_ber: target must be in (0, 1)");
  }
  auto clamped = [](const BerPoint& p) {
    return p.ber > 0.0 ? p.ber : 1.0 / (2.0 * static_cast<double>(p.n_bits));
  };
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const double b = clamped(curve.points[i]);
    if (b > target_ber) continue;
    if (i == 0 || b == target_ber) return curve.points[i].sinr_db;
    const double b0 = clamped(curve.points[i - 1]);
    const double s0 = curve.points[i - 1].sinr_db;
    const double s1 = curve.points[i].sinr_db;
    const double frac = (std::log10(target_ber) - std::log10(b0)) / (std::log10(b) - std::log10(b0));
    return s0 + frac * (s1 - s0);
  }
  return std::nullopt;
}

/// 100 * (base - new) / base on dB values; the base must be positive.
inline double percent_improvement(double base_sinr_db, double new_sinr_db) {
  if (!(base_sinr_db > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "percent_improvement: baseline SINR must be > 0 dB");
  }
  return 100.0 * (base_sinr_db - new_sinr_db) / base_sinr_db;
}

struct Comparison {
  std::string baseline;
  std::string candidate;
  double target_ber = 1e-3;
  std::optional<double> baseline_sinr_db;
  std::optional<double> candidate_sinr_db;

  // nullopt when either side never reaches the target or the baseline is <= 0 dB.
  std::optional<double> improvement_pct() const {
    if (!baseline_sinr_db || !candidate_sinr_db || !(*baseline_sinr_db > 0.0)) return std::nullopt;
    return percent_improvement(*baseline_sinr_db, *candidate_sinr_db);
  }
};

inline Comparison compare(const BerCurve& baseline, const BerCurve& candidate, double target_ber) {
  return {baseline.label, candidate.label, target_ber, sinr_at_target_ber(baseline, target_ber),
          sinr_at_target_ber(candidate, target_ber)};
}

inline Json to_json(const Comparison& c) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return Json{{"baseline", c.baseline},
              {"candidate", c.candidate},
              {"target_ber", c.target_ber},
              {"baseline_sinr_db", opt(c.baseline_sinr_db)},
              {"candidate_sinr_db", opt(c.candidate_sinr_db)},
              {"improvement_pct", opt(c.improvement_pct())}};
}

// ---------------------------------------------------------------------------
// Report files

inline std::string format_g12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string file_stem(const std::string& label) {
  std::string s = label.empty() ? "curve" : label;
  for (auto& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

inline std::string curve_csv(const BerCurve& c) {
  std::string out = "sinr_db,metric,n\n";
  for (const auto& p : c.points) out += format_g12(p.sinr_db) + "," + format_g12(p.ber) + "," + std::to_string(p.n_bits) + "\n";
  return out;
}

inline std::string curve_csv(const MseCurve& c) {
  std::string out = "sinr_db,metric,n\n";
  for (const auto& p : c.points) {
    out += format_g12(p.sinr_db) + "," + format_g12(p.mse) + "," + std::to_string(p.n_examples) + "\n";
  }
  return out;
}

struct CsvRow {
  double sinr_db;
  double metric;
  std::size_t n;
};

inline std::vector<CsvRow> parse_curve_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "sinr_db,metric,n") {
    throw Error(ErrorCode::format, "curve CSV: missing header");
  }
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    CsvRow r{};
    char c1 = 0, c2 = 0;
    std::istringstream ls(line);
    if (!(ls >> r.sinr_db >> c1 >> r.metric >> c2 >> r.n) || c1 != ',' || c2 != ',') {
      throw Error(ErrorCode::format, "curve CSV: malformed row '" + line + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  bytes::write_file(path.string(), std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

struct ReportFiles {
  std::vector<std::filesystem::path> csv;
  std::filesystem::path summary;
};

/// Writes <label>_ber.csv / <label>_mse.csv per curve and summary.json with
/// the per-level data and every comparison.
inline ReportFiles emit_report(const std::vector<BerCurve>& ber_curves, const std::vector<MseCurve>& mse_curves,
                               const std::vector<Comparison>& comparisons, const std::filesystem::path& out_dir) {
  if (ber_curves.empty() && mse_curves.empty() && comparisons.empty()) {
    throw Error(ErrorCode::invalid_argument, "emit_report: nothing to report");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create '" + out_dir.string() + "': " + ec.message());
  ReportFiles files;
  Json curves = Json::array();
  for (const auto& c : ber_curves) {
    files.csv.push_back(out_dir / (file_stem(c.label) + "_ber.csv"));
    write_text(files.csv.back(), curve_csv(c));
    Json pts = Json::array();
    for (const auto& p : c.points) pts.push_back({{"sinr_db", p.sinr_db}, {"ber", p.ber}, {"n_bits", p.n_bits}, {"bit_errors", p.bit_errors}});
    curves.push_back({{"label", c.label}, {"metric", "ber"}, {"points", pts}});
  }
  for (const auto& c : mse_curves) {
    files.csv.push_back(out_dir / (file_stem(c.label) + "_mse.csv"));
    write_text(files.csv.back(), curve_csv(c));
    Json pts = Json::array();
    for (const auto& p : c.points) pts.push_back({{"sinr_db", p.sinr_db}, {"mse", p.mse}, {"n_examples", p.n_examples}});
    curves.push_back({{"label", c.label}, {"metric", "mse"}, {"points", pts}});
  }
  Json comps = Json::array();
  for (const auto& c : comparisons) comps.push_back(to_json(c));
  Json summary{{"curves", curves}, {"comparisons", comps}};
  files.summary = out_dir / "summary.json";
  write_text(files.summary, summary.dump(2) + "\n");
  return files;
}

}  // namespace rfsep::eval
