#pragma once

// Synthetic daily market with a planted predictive column.
//
// Each asset carries an AR(1) column `signal` with unit variance. The
// return realized on day d loads on signal(d - 2) with weight planted_ic,
// so the default target formed on day t (close t+1 -> t+2) has a
// cross-sectional Pearson correlation of about planted_ic with signal(t).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

namespace factorlab {

struct SynthConfig {
  std::uint64_t seed = 42;
  std::size_t n_assets = 50;
  std::size_t n_days = 1826;
  double planted_ic = 0.05;
  std::string start = "2020-01-01";
  double daily_vol = 0.03;      // idiosyncratic + planted part
  double market_vol = 0.02;     // common factor, removed by cross-sectional stats
  double signal_phi = 0.7;      // AR(1) persistence of the planted column

  // Throws ConfigError unless planted_ic is in [0, 0.3] and sizes are positive.
  void validate() const;
};

inline constexpr const char* kPlantedColumn = "signal";

// CSV with header date,symbol,open,high,low,close,volume,market_cap,signal.
std::string synth_csv(const SynthConfig& cfg);
void write_synth_csv(const SynthConfig& cfg, const std::filesystem::path& path);

}  // namespace factorlab
