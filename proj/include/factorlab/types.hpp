#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace factorlab {

using Date = std::chrono::sys_days;

// Missing cells are quiet NaN throughout the library. Any non-finite value
// produced by a transform is normalized to missing.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return !std::isfinite(v); }
inline double finite_or_missing(double v) { return std::isfinite(v) ? v : kMissing; }

// Parses YYYY-MM-DD. Throws std::invalid_argument on anything else.
Date parse_date(std::string_view text);
std::string format_date(Date d);

// Dense asset x date grid of optional doubles, stored asset-major so that a
// single asset's history is contiguous.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t n_assets, std::size_t n_dates, double fill = kMissing)
      : n_assets_(n_assets), n_dates_(n_dates), data_(n_assets * n_dates, fill) {}

  std::size_t n_assets() const { return n_assets_; }
  std::size_t n_dates() const { return n_dates_; }
  bool same_shape(const Matrix& other) const {
    return n_assets_ == other.n_assets_ && n_dates_ == other.n_dates_;
  }

  double& operator()(std::size_t asset, std::size_t date) { return data_[asset * n_dates_ + date]; }
  double operator()(std::size_t asset, std::size_t date) const { return data_[asset * n_dates_ + date]; }

  std::span<double> row(std::size_t asset) { return {data_.data() + asset * n_dates_, n_dates_}; }
  std::span<const double> row(std::size_t asset) const {
    return {data_.data() + asset * n_dates_, n_dates_};
  }

  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }

  std::size_t count_present() const;

  // Bitwise comparison; two missing cells compare equal.
  bool identical(const Matrix& other) const;

 private:
  std::size_t n_assets_ = 0;
  std::size_t n_dates_ = 0;
  std::vector<double> data_;
};

// Boolean asset x date mask (tradable flags).
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t n_assets, std::size_t n_dates, bool fill = false)
      : n_assets_(n_assets), n_dates_(n_dates), data_(n_assets * n_dates, fill ? 1 : 0) {}

  std::size_t n_assets() const { return n_assets_; }
  std::size_t n_dates() const { return n_dates_; }
  bool operator()(std::size_t asset, std::size_t date) const { return data_[asset * n_dates_ + date] != 0; }
  void set(std::size_t asset, std::size_t date, bool v) { data_[asset * n_dates_ + date] = v ? 1 : 0; }
  std::size_t count() const;
  std::span<const unsigned char> bytes() const { return data_; }
  bool operator==(const Mask&) const = default;

 private:
  std::size_t n_assets_ = 0;
  std::size_t n_dates_ = 0;
  std::vector<unsigned char> data_;
};

// Base class for errors callers may want to map onto distinct exit codes.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// True when every value equals the first (or there are fewer than two).
// Used as the zero-dispersion test so rounding noise in a mean cannot turn
// a constant series into a tiny nonzero standard deviation.
bool all_identical(std::span<const double> v);

// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace factorlab
