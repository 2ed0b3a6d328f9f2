#include "factorlab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "factorlab/digest.hpp"
#include "factorlab/types.hpp"

namespace factorlab {

void SynthConfig::validate() const {
  if (!(planted_ic >= 0.0 && planted_ic <= 0.3)) throw ConfigError("planted_ic must be in [0, 0.3]");
  if (n_assets < 1 || n_days < 3) throw ConfigError("synth needs at least 1 asset and 3 days");
  if (!(daily_vol > 0.0) || !(market_vol >= 0.0)) throw ConfigError("synth volatilities must be positive");
  if (!(signal_phi > -1.0 && signal_phi < 1.0)) throw ConfigError("signal_phi must be in (-1, 1)");
  parse_date(start);
}

std::string synth_csv(const SynthConfig& cfg) {
  cfg.validate();
  const Date d0 = parse_date(cfg.start);
  const std::size_t A = cfg.n_assets, D = cfg.n_days;
  const double loading = cfg.planted_ic * cfg.daily_vol;
  const double noise = std::sqrt(1.0 - cfg.planted_ic * cfg.planted_ic) * cfg.daily_vol;
  const double innov = std::sqrt(1.0 - cfg.signal_phi * cfg.signal_phi);

  Rng market_rng(derive_seed(cfg.seed, "synth-market"));
  std::vector<double> market(D);
  for (auto& m : market) m = cfg.market_vol * market_rng.normal();

  struct Row {
    double open, high, low, close, volume, mcap, signal;
  };
  std::vector<Row> rows(A * D);
  for (std::size_t i = 0; i < A; ++i) {
    Rng rng(derive_seed(cfg.seed, "synth-asset-" + std::to_string(i)));
    const double shares = 1e7 * std::exp(rng.normal());
    const double volume_level = 2e6 * std::exp(0.5 * rng.normal());
    double close = 10.0 * std::exp(rng.normal());
    std::vector<double> s(D);
    s[0] = rng.normal();
    for (std::size_t d = 1; d < D; ++d) s[d] = cfg.signal_phi * s[d - 1] + innov * rng.normal();
    for (std::size_t d = 0; d < D; ++d) {
      const double prev = close;
      double r = noise * rng.normal() + market[d];
      if (d >= 2) r += loading * s[d - 2];
      r = std::max(r, -0.5);
      close = prev * (1.0 + r);
      Row& row = rows[i * D + d];
      row.open = prev;
      row.close = close;
      row.high = std::max(row.open, row.close) * (1.0 + 0.01 * std::fabs(rng.normal()));
      row.low = std::min(row.open, row.close) * (1.0 - 0.01 * std::min(std::fabs(rng.normal()), 5.0));
      row.volume = volume_level * std::exp(0.4 * rng.normal());
      row.mcap = close * shares;
      row.signal = s[d];
    }
  }

  std::string out = "date,symbol,open,high,low,close,volume,market_cap,signal\n";
  out.reserve(A * D * 110);
  char sym[32];
  for (std::size_t d = 0; d < D; ++d) {
    const std::string date = format_date(d0 + std::chrono::days(static_cast<int>(d)));
    for (std::size_t i = 0; i < A; ++i) {
      std::snprintf(sym, sizeof sym, "SYN%03zu", i);
      const Row& r = rows[i * D + d];
      out += date;
      out += ',';
      out += sym;
      for (double v : {r.open, r.high, r.low, r.close, r.volume, r.mcap, r.signal}) {
        out += ',';
        out += format_double(v);
      }
      out += '\n';
    }
  }
  return out;
}

void write_synth_csv(const SynthConfig& cfg, const std::filesystem::path& path) {
  const std::string csv = synth_csv(cfg);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << csv;
}

}  // namespace factorlab
