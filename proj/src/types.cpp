#include "factorlab/types.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>

namespace factorlab {

Date parse_date(std::string_view text) {
  // Accept only the strict ISO-8601 calendar form.
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw std::invalid_argument("bad date '" + std::string(text) + "'");
  }
  auto field = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, v);
    if (ec != std::errc{} || ptr != text.data() + pos + len) {
      throw std::invalid_argument("bad date '" + std::string(text) + "'");
    }
    return v;
  };
  const int y = field(0, 4);
  const int m = field(5, 2);
  const int d = field(8, 2);
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) {
    throw std::invalid_argument("bad date '" + std::string(text) + "'");
  }
  return Date{ymd};
}

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::size_t Matrix::count_present() const {
  return static_cast<std::size_t>(
      std::count_if(data_.begin(), data_.end(), [](double v) { return !is_missing(v); }));
}

bool Matrix::identical(const Matrix& other) const {
  if (!same_shape(other)) return false;
  for (std::size_t k = 0; k < data_.size(); ++k) {
    const double a = data_[k];
    const double b = other.data_[k];
    if (is_missing(a) && is_missing(b)) continue;
    if (std::memcmp(&a, &b, sizeof(double)) != 0) return false;
  }
  return true;
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), 1));
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

bool all_identical(std::span<const double> v) {
  for (double x : v)
    if (!(x == v.front())) return false;
  return true;
}

}  // namespace factorlab
