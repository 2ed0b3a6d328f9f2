#include "factorlab/panel.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace factorlab {

namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t k = 0; k <= line.size(); ++k) {
    if (k == line.size() || line[k] == ',') {
      out.push_back(trim(line.substr(start, k - start)));
      start = k + 1;
    }
  }
  return out;
}

bool parse_number(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

struct Row {
  std::string asset;
  Date date;
  std::vector<double> values;  // open, high, low, close, volume, mcap, extras...
};

}  // namespace

const std::vector<std::string>& raw_column_names() {
  static const std::vector<std::string> names{col::kOpen,  col::kHigh,   col::kLow,
                                              col::kClose, col::kVolume, col::kMcap};
  return names;
}

const std::vector<std::string>& derived_column_names() {
  static const std::vector<std::string> names{"ret",  "logret", "relvol",        "rvol",
                                              "price_to_ma", "range", "vol_pct_change"};
  return names;
}

std::string IngestReport::to_jsonl() const {
  std::string out;
  json summary = {{"event", "summary"},      {"source", source},   {"rows_read", rows_read},
                  {"rows_kept", rows_kept},  {"dropped", dropped()}, {"n_assets", n_assets},
                  {"n_dates", n_dates}};
  out += summary.dump() + "\n";
  for (const auto& v : violations) {
    json line = {{"event", "violation"}, {"line", v.line}, {"asset", v.asset}, {"date", v.date},
                 {"reason", v.reason}};
    out += line.dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Panel

Panel::Panel(std::vector<std::string> assets, std::vector<Date> dates, std::map<std::string, Matrix> columns,
             Mask tradable, std::map<std::string, std::string> provenance)
    : assets_(std::move(assets)),
      dates_(std::move(dates)),
      columns_(std::move(columns)),
      tradable_(std::move(tradable)),
      provenance_(std::move(provenance)) {
  for (std::size_t t = 1; t < dates_.size(); ++t) {
    if (!(dates_[t - 1] < dates_[t])) throw std::invalid_argument("panel dates must be strictly increasing");
  }
  for (const auto& [name, m] : columns_) {
    if (m.n_assets() != assets_.size() || m.n_dates() != dates_.size()) {
      throw std::invalid_argument("column '" + name + "' has the wrong shape");
    }
  }
  if (tradable_.n_assets() != assets_.size() || tradable_.n_dates() != dates_.size()) {
    throw std::invalid_argument("tradable mask has the wrong shape");
  }
}

const Matrix& Panel::column(const std::string& name) const {
  auto it = columns_.find(name);
  if (it == columns_.end()) throw std::out_of_range("no panel column '" + name + "'");
  return it->second;
}

std::vector<std::string> Panel::column_names() const {
  std::vector<std::string> out;
  out.reserve(columns_.size());
  for (const auto& [name, m] : columns_) out.push_back(name);
  return out;
}

std::optional<std::size_t> Panel::date_index(Date d) const {
  auto it = std::lower_bound(dates_.begin(), dates_.end(), d);
  if (it == dates_.end() || *it != d) return std::nullopt;
  return static_cast<std::size_t>(it - dates_.begin());
}

Panel Panel::with_column(const std::string& name, Matrix values) const {
  Panel out = *this;
  if (values.n_assets() != n_assets() || values.n_dates() != n_dates()) {
    throw std::invalid_argument("column '" + name + "' has the wrong shape");
  }
  out.columns_[name] = std::move(values);
  return out;
}

Panel Panel::with_tradable(Mask mask) const {
  if (mask.n_assets() != n_assets() || mask.n_dates() != n_dates()) {
    throw std::invalid_argument("tradable mask has the wrong shape");
  }
  Panel out = *this;
  out.tradable_ = std::move(mask);
  return out;
}

Panel Panel::with_provenance(const std::string& key, const std::string& value) const {
  Panel out = *this;
  out.provenance_[key] = value;
  return out;
}

Panel Panel::truncated(std::size_t n) const {
  n = std::min(n, n_dates());
  std::vector<Date> dates(dates_.begin(), dates_.begin() + static_cast<std::ptrdiff_t>(n));
  std::map<std::string, Matrix> cols;
  for (const auto& [name, m] : columns_) {
    Matrix c(n_assets(), n);
    for (std::size_t i = 0; i < n_assets(); ++i)
      for (std::size_t t = 0; t < n; ++t) c(i, t) = m(i, t);
    cols.emplace(name, std::move(c));
  }
  Mask mask(n_assets(), n);
  for (std::size_t i = 0; i < n_assets(); ++i)
    for (std::size_t t = 0; t < n; ++t) mask.set(i, t, tradable_(i, t));
  return Panel(assets_, std::move(dates), std::move(cols), std::move(mask), provenance_);
}

Panel Panel::select_assets(const std::vector<std::size_t>& keep) const {
  std::vector<std::string> assets;
  for (auto i : keep) assets.push_back(assets_.at(i));
  std::map<std::string, Matrix> cols;
  for (const auto& [name, m] : columns_) {
    Matrix c(keep.size(), n_dates());
    for (std::size_t k = 0; k < keep.size(); ++k)
      for (std::size_t t = 0; t < n_dates(); ++t) c(k, t) = m(keep[k], t);
    cols.emplace(name, std::move(c));
  }
  Mask mask(keep.size(), n_dates());
  for (std::size_t k = 0; k < keep.size(); ++k)
    for (std::size_t t = 0; t < n_dates(); ++t) mask.set(k, t, tradable_(keep[k], t));
  return Panel(std::move(assets), dates_, std::move(cols), std::move(mask), provenance_);
}

bool Panel::operator==(const Panel& other) const {
  if (assets_ != other.assets_ || dates_ != other.dates_ || !(tradable_ == other.tradable_) ||
      provenance_ != other.provenance_ || columns_.size() != other.columns_.size()) {
    return false;
  }
  for (const auto& [name, m] : columns_) {
    auto it = other.columns_.find(name);
    if (it == other.columns_.end() || !m.identical(it->second)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Ingest

LoadResult load_panel_from_string(const std::string& csv, const CsvSchema& schema, const std::string& source) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": empty file");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM

  std::vector<std::string> header;
  for (auto f : split_fields(line)) header.emplace_back(f);
  auto find_col = [&](const std::string& name) -> std::size_t {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return k;
    throw DataError(source + ": missing required column '" + name + "'");
  };
  const std::size_t date_col = find_col(schema.date);
  const std::size_t sym_col = find_col(schema.symbol);
  std::vector<std::size_t> value_cols{find_col(schema.open),  find_col(schema.high),
                                      find_col(schema.low),   find_col(schema.close),
                                      find_col(schema.volume), find_col(schema.market_cap)};
  std::vector<std::string> value_names = raw_column_names();
  for (const auto& extra : schema.extra) {
    value_cols.push_back(find_col(extra));
    value_names.push_back(extra);
  }

  IngestReport report;
  report.source = source;
  std::vector<Row> rows;
  std::set<std::pair<std::string, Date>> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++report.rows_read;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    }
    Row row;
    row.asset = std::string(fields[sym_col]);
    if (row.asset.empty()) throw DataError(source + ":" + std::to_string(line_no) + ": empty symbol");
    try {
      row.date = parse_date(fields[date_col]);
    } catch (const std::invalid_argument&) {
      throw DataError(source + ":" + std::to_string(line_no) + ": unparseable date '" +
                      std::string(fields[date_col]) + "'");
    }
    row.values.resize(value_cols.size());
    for (std::size_t k = 0; k < value_cols.size(); ++k) {
      if (!parse_number(fields[value_cols[k]], row.values[k])) {
        throw DataError(source + ":" + std::to_string(line_no) + ": unparseable number in column '" +
                        std::string(header[value_cols[k]]) + "'");
      }
    }
    if (!seen.emplace(row.asset, row.date).second) {
      throw DataError(source + ":" + std::to_string(line_no) + ": duplicate key (" + row.asset + ", " +
                      format_date(row.date) + ")");
    }
    const double open = row.values[0], high = row.values[1], low = row.values[2], close = row.values[3];
    const double volume = row.values[4], mcap = row.values[5];
    std::string reason;
    if (open <= 0 || high <= 0 || low <= 0 || close <= 0) {
      reason = "non-positive price";
    } else if (volume < 0) {
      reason = "negative volume";
    } else if (mcap < 0) {
      reason = "negative market cap";
    } else if (!(low <= std::min(open, close) && std::max(open, close) <= high)) {
      reason = "ohlc ordering";
    }
    if (!reason.empty()) {
      report.violations.push_back({line_no, row.asset, format_date(row.date), reason});
      continue;
    }
    rows.push_back(std::move(row));
  }
  report.rows_kept = rows.size();

  std::set<std::string> asset_set;
  std::set<Date> date_set;
  for (const auto& r : rows) {
    asset_set.insert(r.asset);
    date_set.insert(r.date);
  }
  std::vector<std::string> assets(asset_set.begin(), asset_set.end());
  std::vector<Date> dates(date_set.begin(), date_set.end());
  std::unordered_map<std::string, std::size_t> asset_idx;
  for (std::size_t i = 0; i < assets.size(); ++i) asset_idx[assets[i]] = i;

  std::vector<Matrix> mats(value_names.size(), Matrix(assets.size(), dates.size()));
  Mask tradable(assets.size(), dates.size());
  for (const auto& r : rows) {
    const std::size_t i = asset_idx[r.asset];
    const auto t = static_cast<std::size_t>(std::lower_bound(dates.begin(), dates.end(), r.date) - dates.begin());
    for (std::size_t k = 0; k < mats.size(); ++k) mats[k](i, t) = r.values[k];
    tradable.set(i, t, true);
  }
  std::map<std::string, Matrix> columns;
  for (std::size_t k = 0; k < mats.size(); ++k) columns.emplace(value_names[k], std::move(mats[k]));

  report.n_assets = assets.size();
  report.n_dates = dates.size();
  Panel panel(std::move(assets), std::move(dates), std::move(columns), std::move(tradable),
              {{"source", source}});
  return {std::move(panel), std::move(report)};
}

LoadResult load_panel(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open data file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_panel_from_string(buf.str(), schema, path.string());
}

// ---------------------------------------------------------------------------
// Universe filter

Panel filter_universe(const Panel& panel, const UniverseFilter& filter) {
  if (filter.min_history_days < 1) throw ConfigError("min_history_days must be >= 1");
  const Matrix& close = panel.column(col::kClose);
  const Matrix& volume = panel.column(col::kVolume);
  const std::size_t n_dates = panel.n_dates();

  std::vector<std::size_t> keep;
  std::vector<std::vector<bool>> flags;
  for (std::size_t i = 0; i < panel.n_assets(); ++i) {
    std::vector<std::size_t> observed;
    double vol_sum = 0.0;
    for (std::size_t t = 0; t < n_dates; ++t) {
      if (!is_missing(close(i, t))) {
        observed.push_back(t);
        vol_sum += is_missing(volume(i, t)) ? 0.0 : volume(i, t);
      }
    }
    if (observed.size() < filter.min_history_days) continue;

    std::vector<bool> ok(n_dates, false);
    for (std::size_t k = filter.min_history_days - 1; k < observed.size(); ++k) {
      const std::size_t t = observed[k];
      ok[t] = panel.tradable()(i, t);
    }
    if (filter.volume_mode == VolumeFilterMode::full_history) {
      const double avg = vol_sum / static_cast<double>(observed.size());
      if (avg < filter.min_avg_volume) continue;
    } else {
      // Trailing mean over the last min_history_days observations.
      bool any = false;
      for (std::size_t k = filter.min_history_days - 1; k < observed.size(); ++k) {
        double s = 0.0;
        for (std::size_t j = k + 1 - filter.min_history_days; j <= k; ++j) {
          const double v = volume(i, observed[j]);
          s += is_missing(v) ? 0.0 : v;
        }
        const double avg = s / static_cast<double>(filter.min_history_days);
        if (avg < filter.min_avg_volume) ok[observed[k]] = false;
        any = any || ok[observed[k]];
      }
      if (!any) continue;
    }
    keep.push_back(i);
    flags.push_back(std::move(ok));
  }
  if (keep.empty()) throw DataError("universe filter removed every asset");

  Panel out = panel.select_assets(keep);
  Mask mask(keep.size(), n_dates);
  for (std::size_t k = 0; k < keep.size(); ++k)
    for (std::size_t t = 0; t < n_dates; ++t) mask.set(k, t, flags[k][t]);

  json settings = {{"min_history_days", filter.min_history_days},
                   {"min_avg_volume", filter.min_avg_volume},
                   {"volume_mode", filter.volume_mode == VolumeFilterMode::full_history ? "full_history" : "rolling"}};
  return out.with_tradable(std::move(mask)).with_provenance("filter", settings.dump());
}

// ---------------------------------------------------------------------------
// Derived columns

namespace {

// Trailing window over date positions [t - w + 1, t]; every cell must be present.
bool window_values(std::span<const double> row, std::size_t t, int w, std::vector<double>& out) {
  out.clear();
  if (w < 1 || t + 1 < static_cast<std::size_t>(w)) return false;
  for (std::size_t j = t + 1 - static_cast<std::size_t>(w); j <= t; ++j) {
    if (is_missing(row[j])) return false;
    out.push_back(row[j]);
  }
  return true;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std_of(const std::vector<double>& v) {
  if (v.size() < 2) return kMissing;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

Panel compute_derived(const Panel& panel, const DerivedWindows& windows) {
  const Matrix& high = panel.column(col::kHigh);
  const Matrix& low = panel.column(col::kLow);
  const Matrix& close = panel.column(col::kClose);
  const Matrix& volume = panel.column(col::kVolume);
  const std::size_t A = panel.n_assets();
  const std::size_t T = panel.n_dates();

  Matrix ret(A, T), logret(A, T), relvol(A, T), rvol(A, T), ptma(A, T), range(A, T), vpc(A, T);
  std::vector<double> buf;
  for (std::size_t i = 0; i < A; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      const double c = close(i, t);
      if (!is_missing(c) && !is_missing(high(i, t)) && !is_missing(low(i, t))) {
        range(i, t) = finite_or_missing((high(i, t) - low(i, t)) / c);
      }
      if (t >= 1) {
        const double cp = close(i, t - 1);
        if (!is_missing(c) && !is_missing(cp)) {
          ret(i, t) = finite_or_missing(c / cp - 1.0);
          logret(i, t) = finite_or_missing(std::log(c) - std::log(cp));
        }
        const double v = volume(i, t), vp = volume(i, t - 1);
        if (!is_missing(v) && !is_missing(vp) && vp != 0.0) vpc(i, t) = finite_or_missing(v / vp - 1.0);
      }
    }
    const auto vol_row = volume.row(i);
    const auto close_row = close.row(i);
    const auto logret_row = logret.row(i);
    for (std::size_t t = 0; t < T; ++t) {
      if (window_values(vol_row, t, windows.relvol, buf)) {
        const double m = mean_of(buf);
        if (m != 0.0) relvol(i, t) = finite_or_missing(volume(i, t) / m);
      }
      if (window_values(close_row, t, windows.price_to_ma, buf)) {
        ptma(i, t) = finite_or_missing(close(i, t) / mean_of(buf));
      }
      if (window_values(std::span<const double>(logret_row.data(), logret_row.size()), t, windows.rvol, buf)) {
        rvol(i, t) = finite_or_missing(sample_std_of(buf));
      }
    }
  }
  json settings = {{"relvol", windows.relvol}, {"rvol", windows.rvol}, {"price_to_ma", windows.price_to_ma}};
  return panel.with_column("ret", std::move(ret))
      .with_column("logret", std::move(logret))
      .with_column("relvol", std::move(relvol))
      .with_column("rvol", std::move(rvol))
      .with_column("price_to_ma", std::move(ptma))
      .with_column("range", std::move(range))
      .with_column("vol_pct_change", std::move(vpc))
      .with_provenance("derived_windows", settings.dump());
}

Matrix forward_return(const Panel& panel, int exec_lag, int hold) {
  if (exec_lag < 1 || hold < 1) throw ConfigError("exec_lag and hold must be >= 1");
  const Matrix& close = panel.column(col::kClose);
  const std::size_t A = panel.n_assets();
  const std::size_t T = panel.n_dates();
  const auto entry_off = static_cast<std::size_t>(exec_lag);
  const auto exit_off = static_cast<std::size_t>(exec_lag + hold);
  Matrix out(A, T);
  for (std::size_t i = 0; i < A; ++i) {
    for (std::size_t t = 0; t + exit_off < T; ++t) {
      const double entry = close(i, t + entry_off);
      const double exit = close(i, t + exit_off);
      if (!is_missing(entry) && !is_missing(exit)) out(i, t) = finite_or_missing(exit / entry - 1.0);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits

void SplitConfig::validate() const {
  for (const auto* r : {&train, &validation, &oos}) {
    if (r->end < r->start) throw ConfigError("split range ends before it starts");
  }
  if (!(train.end < validation.start) || !(validation.end < oos.start)) {
    throw ConfigError("split ranges must be disjoint and ordered train < validation < oos");
  }
}

const char* window_name(Window w) {
  switch (w) {
    case Window::train: return "train";
    case Window::validation: return "validation";
    case Window::oos: return "oos";
  }
  return "?";
}

const std::vector<std::size_t>& SplitIndices::get(Window w) const {
  switch (w) {
    case Window::train: return train;
    case Window::validation: return validation;
    case Window::oos: return oos;
  }
  return train;
}

SplitIndices split(const Panel& panel, const SplitConfig& cfg) {
  cfg.validate();
  SplitIndices out;
  for (std::size_t t = 0; t < panel.n_dates(); ++t) {
    const Date d = panel.dates()[t];
    if (cfg.train.contains(d)) out.train.push_back(t);
    else if (cfg.validation.contains(d)) out.validation.push_back(t);
    else if (cfg.oos.contains(d)) out.oos.push_back(t);
  }
  if (out.train.empty()) throw DataError("train partition is empty");
  if (out.validation.empty()) throw DataError("validation partition is empty");
  if (out.oos.empty()) throw DataError("oos partition is empty");
  return out;
}

// ---------------------------------------------------------------------------
// Cache

namespace {
constexpr char kCacheMagic[8] = {'F', 'L', 'P', 'A', 'N', 'E', 'L', '1'};
static_assert(std::endian::native == std::endian::little, "panel cache assumes a little-endian host");
}  // namespace

void write_panel_cache(const Panel& panel, const std::filesystem::path& path) {
  json header;
  header["assets"] = panel.assets();
  std::vector<std::string> dates;
  for (auto d : panel.dates()) dates.push_back(format_date(d));
  header["dates"] = dates;
  header["columns"] = panel.column_names();
  header["provenance"] = panel.provenance();
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write panel cache '" + path.string() + "'");
  out.write(kCacheMagic, sizeof(kCacheMagic));
  const std::uint64_t len = header_text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto& [name, m] : panel.columns()) {
    const auto v = m.values();
    // Canonical NaN bits keep the file byte-stable.
    for (double x : v) {
      const double y = is_missing(x) ? kMissing : x;
      out.write(reinterpret_cast<const char*>(&y), sizeof(y));
    }
  }
  const auto bytes = panel.tradable().bytes();
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing panel cache '" + path.string() + "'");
}

Panel read_panel_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open panel cache '" + path.string() + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0) {
    throw DataError("'" + path.string() + "' is not a panel cache");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_text(len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated panel cache header");
  const json header = json::parse(header_text);
  auto assets = header.at("assets").get<std::vector<std::string>>();
  std::vector<Date> dates;
  for (const auto& d : header.at("dates")) dates.push_back(parse_date(d.get<std::string>()));
  const auto names = header.at("columns").get<std::vector<std::string>>();
  std::map<std::string, Matrix> columns;
  for (const auto& name : names) {
    Matrix m(assets.size(), dates.size());
    auto v = m.values();
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    columns.emplace(name, std::move(m));
  }
  Mask mask(assets.size(), dates.size());
  for (std::size_t i = 0; i < assets.size(); ++i) {
    for (std::size_t t = 0; t < dates.size(); ++t) {
      char c = 0;
      in.read(&c, 1);
      mask.set(i, t, c != 0);
    }
  }
  if (!in) throw DataError("truncated panel cache '" + path.string() + "'");
  auto provenance = header.at("provenance").get<std::map<std::string, std::string>>();
  return Panel(std::move(assets), std::move(dates), std::move(columns), std::move(mask), std::move(provenance));
}

}  // namespace factorlab
