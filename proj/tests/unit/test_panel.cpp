#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "factorlab/panel.hpp"
#include "factorlab/pipeline.hpp"
#include "oracles.hpp"

using namespace factorlab;
namespace fs = std::filesystem;

namespace {

const char* kHeader = "date,symbol,open,high,low,close,volume,market_cap\n";

std::string bar(const std::string& date, const std::string& sym, double close, double volume = 1e6,
                double mcap = 1e9) {
  std::ostringstream o;
  o << date << "," << sym << "," << close << "," << close * 1.01 << "," << close * 0.99 << "," << close << ","
    << volume << "," << mcap << "\n";
  return o.str();
}

// One row per day from 2021-01-01 for every listed close.
std::string series_csv(const std::vector<std::pair<std::string, std::vector<double>>>& assets, double volume = 1e6) {
  std::string csv = kHeader;
  const Date start = parse_date("2021-01-01");
  for (const auto& [sym, closes] : assets) {
    for (std::size_t t = 0; t < closes.size(); ++t) {
      csv += bar(format_date(start + std::chrono::days(static_cast<int>(t))), sym, closes[t], volume);
    }
  }
  return csv;
}

std::vector<double> ramp(std::size_t n, double start = 100.0, double step = 0.5) {
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = start + step * static_cast<double>(k % 17) + 0.01 * k;
  return v;
}

}  // namespace

TEST_CASE("load_panel: well-formed 2 x 3 input") {
  const auto r = load_panel_from_string(series_csv({{"BTC", {1, 2, 3}}, {"ETH", {4, 5, 6}}}));
  CHECK(r.panel.n_assets() == 2);
  CHECK(r.panel.n_dates() == 3);
  CHECK(r.report.dropped() == 0);
  CHECK(r.report.rows_read == 6);
  CHECK(r.panel.column(col::kClose)(1, 2) == 6.0);
  CHECK(r.panel.assets() == std::vector<std::string>{"BTC", "ETH"});
}

TEST_CASE("load_panel: bar invariant violation drops the row") {
  std::string csv = series_csv({{"BTC", {1, 2, 3}}});
  csv += "2021-01-04,BTC,10,9,11,10,100,1000\n";  // high < low
  const auto r = load_panel_from_string(csv);
  CHECK(r.report.dropped() == 1);
  CHECK(r.report.violations[0].reason == "ohlc ordering");
  CHECK(r.panel.n_dates() == 3);
}

TEST_CASE("load_panel: errors") {
  std::string dup = series_csv({{"BTC", {1, 2}}});
  dup += bar("2021-01-01", "BTC", 3);
  CHECK_THROWS_WITH_AS(load_panel_from_string(dup), doctest::Contains("duplicate key"), DataError);
  CHECK_THROWS_AS(load_panel("/nonexistent/market.csv"), DataError);
  CHECK_THROWS_WITH_AS(load_panel_from_string("date,symbol,open,high,low,close,volume\n"),
                       doctest::Contains("market_cap"), DataError);
  CHECK_THROWS_AS(load_panel_from_string(std::string(kHeader) + "2021-13-01,BTC,1,1,1,1,1,1\n"), DataError);
  CHECK_THROWS_AS(load_panel_from_string(std::string(kHeader) + "2021-01-01,BTC,1,x,1,1,1,1\n"), DataError);
}

TEST_CASE("load_panel: header mapping and extra columns") {
  CsvSchema schema;
  schema.date = "day";
  schema.symbol = "ticker";
  schema.market_cap = "mcap_usd";
  schema.extra = {"sentiment"};
  const std::string csv =
      "ticker,day,open,high,low,close,volume,mcap_usd,sentiment\n"
      "AAA,2021-01-01,1,1,1,1,10,100,0.5\n"
      "AAA,2021-01-02,1,1,1,1,10,100,-0.25\n";
  const auto r = load_panel_from_string(csv, schema);
  CHECK(r.panel.column("sentiment")(0, 1) == -0.25);
  CHECK(r.panel.column(col::kMcap)(0, 0) == 100.0);
}

TEST_CASE("filter_universe: 100 days of history against a 180-day threshold removes the asset") {
  const auto r = load_panel_from_string(series_csv({{"NEW", ramp(100)}, {"OLD", ramp(200)}}));
  const Panel p = filter_universe(r.panel, UniverseFilter{});
  REQUIRE(p.n_assets() == 1);
  CHECK(p.assets()[0] == "OLD");
  // First 179 observations are untradable, the 180th is tradable.
  CHECK_FALSE(p.tradable()(0, 178));
  CHECK(p.tradable()(0, 179));
}

TEST_CASE("filter_universe: zero volume and empty universe") {
  const auto r = load_panel_from_string(series_csv({{"DRY", ramp(200)}}, 0.0));
  CHECK_THROWS_AS(filter_universe(r.panel, UniverseFilter{}), DataError);
  UniverseFilter f;
  f.min_avg_volume = 0.0;
  CHECK(filter_universe(r.panel, f).n_assets() == 1);
}

TEST_CASE("filter_universe: survivors keep their data and filtering is idempotent") {
  const auto r = load_panel_from_string(series_csv({{"A", ramp(40)}, {"B", ramp(40, 50.0)}}));
  UniverseFilter f;
  f.min_history_days = 10;
  const Panel once = filter_universe(r.panel, f);
  CHECK(once.n_assets() == 2);
  for (const auto& name : raw_column_names()) CHECK(once.column(name).identical(r.panel.column(name)));
  CHECK(once.tradable().count() == 2 * (40 - 9));
  CHECK(filter_universe(once, f) == once);
}

TEST_CASE("filter_universe: rolling volume mode masks thin stretches") {
  std::string csv = kHeader;
  const Date start = parse_date("2021-01-01");
  for (int t = 0; t < 30; ++t) {
    const double vol = t < 15 ? 0.0 : 1e6;
    csv += bar(format_date(start + std::chrono::days(t)), "A", 10.0 + t, vol);
  }
  UniverseFilter f;
  f.min_history_days = 5;
  f.volume_mode = VolumeFilterMode::rolling;
  const Panel p = filter_universe(load_panel_from_string(csv).panel, f);
  CHECK_FALSE(p.tradable()(0, 10));
  CHECK(p.tradable()(0, 29));
}

TEST_CASE("compute_derived: returns") {
  const auto flat = compute_derived(load_panel_from_string(series_csv({{"A", {5, 5, 5, 5}}})).panel);
  const Matrix& ret = flat.column("ret");
  CHECK(is_missing(ret(0, 0)));
  for (std::size_t t = 1; t < 4; ++t) CHECK(ret(0, t) == 0.0);

  const auto two = compute_derived(load_panel_from_string(series_csv({{"A", {100, 110}}})).panel);
  CHECK(two.column("ret")(0, 1) == doctest::Approx(0.10).epsilon(1e-15));
  CHECK(two.column("logret")(0, 1) == doctest::Approx(std::log(1.1)).epsilon(1e-15));
}

TEST_CASE("compute_derived: rvol against a hand-rolled standard deviation") {
  const std::vector<double> closes{100, 103, 101, 106, 104, 109};
  DerivedWindows w;
  w.rvol = 3;
  const auto p = compute_derived(load_panel_from_string(series_csv({{"A", closes}})).panel, w);
  std::vector<double> lr;
  for (std::size_t t = 1; t < closes.size(); ++t) lr.push_back(std::log(closes[t]) - std::log(closes[t - 1]));
  // Day index 5 uses the log returns of days 3, 4, 5.
  const double a = lr[2], b = lr[3], c = lr[4];
  const double m = (a + b + c) / 3.0;
  const double sd = std::sqrt(((a - m) * (a - m) + (b - m) * (b - m) + (c - m) * (c - m)) / 2.0);
  CHECK(p.column("rvol")(0, 5) == doctest::Approx(sd).epsilon(1e-12));
  CHECK(is_missing(p.column("rvol")(0, 2)));  // needs three log returns
  CHECK_FALSE(is_missing(p.column("rvol")(0, 3)));
}

TEST_CASE("compute_derived: every derived column is point-in-time") {
  Rng rng(11);
  std::vector<std::pair<std::string, std::vector<double>>> assets;
  for (int a = 0; a < 4; ++a) {
    std::vector<double> c(60);
    double px = 50.0 + a;
    for (auto& v : c) v = px *= std::exp(0.03 * rng.normal());
    assets.emplace_back("S" + std::to_string(a), c);
  }
  const Panel raw = load_panel_from_string(series_csv(assets)).panel;
  DerivedWindows w{5, 4, 6};
  const Panel full = compute_derived(raw, w);
  for (std::size_t cut : {1u, 7u, 33u, 59u}) {
    const Panel part = compute_derived(raw.truncated(cut), w);
    for (const auto& name : derived_column_names()) {
      for (std::size_t i = 0; i < full.n_assets(); ++i) {
        for (std::size_t t = 0; t < cut; ++t) {
          const double x = part.column(name)(i, t), y = full.column(name)(i, t);
          CHECK((x == y || (is_missing(x) && is_missing(y))));
        }
      }
    }
  }
  for (const auto& name : raw_column_names()) CHECK(full.column(name).count_present() == raw.column(name).count_present());
}

TEST_CASE("forward_return") {
  const Panel p = load_panel_from_string(series_csv({{"A", {100, 100, 120}}})).panel;
  CHECK(forward_return(p)(0, 0) == doctest::Approx(0.20).epsilon(1e-15));
  CHECK(is_missing(forward_return(p)(0, 1)));

  // Asset that stops trading at t + 1.
  std::string csv = series_csv({{"A", {1, 2, 3, 4}}});
  csv += bar("2021-01-01", "B", 7);
  const Panel q = load_panel_from_string(csv).panel;
  CHECK(is_missing(forward_return(q)(1, 0)));

  // Naive per-asset loop.
  Rng rng(5);
  const Panel r = oracle::random_panel(rng, 6, 40);
  for (int lag : {1, 2}) {
    for (int hold : {1, 3}) {
      const Matrix got = forward_return(r, lag, hold);
      const Matrix& c = r.column(col::kClose);
      for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t t = 0; t < 40; ++t) {
          double want = kMissing;
          const std::size_t a = t + lag, b = t + lag + hold;
          if (b < 40 && !is_missing(c(i, a)) && !is_missing(c(i, b))) want = finite_or_missing(c(i, b) / c(i, a) - 1.0);
          const double g = got(i, t);
          CHECK((g == want || (is_missing(g) && is_missing(want))));
        }
      }
    }
  }
  CHECK_THROWS_AS(forward_return(p, 0, 1), ConfigError);
}

TEST_CASE("split: 2020-2025 with the default protocol") {
  std::vector<double> closes(2192, 100.0);  // 2020-01-01 .. 2025-12-31
  std::string csv = kHeader;
  const Date start = parse_date("2020-01-01");
  for (std::size_t t = 0; t < closes.size(); ++t) csv += bar(format_date(start + std::chrono::days(t)), "A", 100.0);
  const Panel p = load_panel_from_string(csv).panel;
  REQUIRE(format_date(p.dates().back()) == "2025-12-31");
  const SplitConfig cfg = SessionConfig{}.split;
  const auto s = split(p, cfg);
  CHECK(format_date(p.dates()[s.train.front()]) == "2020-01-01");
  CHECK(format_date(p.dates()[s.train.back()]) == "2022-12-31");
  CHECK(format_date(p.dates()[s.validation.front()]) == "2023-01-01");
  CHECK(format_date(p.dates()[s.oos.front()]) == "2024-01-01");
  CHECK(s.train.size() + s.validation.size() + s.oos.size() == p.n_dates());
}

TEST_CASE("split: excluded dates, disjointness and errors") {
  const Panel p = load_panel_from_string(series_csv({{"A", ramp(40)}})).panel;
  SplitConfig cfg{{parse_date("2021-01-02"), parse_date("2021-01-10")},
                  {parse_date("2021-01-12"), parse_date("2021-01-20")},
                  {parse_date("2021-01-25"), parse_date("2021-01-30")}};
  const auto s = split(p, cfg);
  std::vector<int> seen(p.n_dates(), 0);
  for (auto w : {Window::train, Window::validation, Window::oos})
    for (std::size_t t : s.get(w)) ++seen[t];
  CHECK(seen[0] == 0);   // 2021-01-01 precedes every range
  CHECK(seen[10] == 0);  // 2021-01-11 sits between ranges
  std::size_t total = 0;
  for (int n : seen) {
    CHECK(n <= 1);
    total += n;
  }
  CHECK(total == 9 + 9 + 6);

  SplitConfig overlap = cfg;
  overlap.validation.start = parse_date("2021-01-05");
  CHECK_THROWS_AS(overlap.validate(), ConfigError);
  SplitConfig empty = cfg;
  empty.oos = {parse_date("2022-01-01"), parse_date("2022-02-01")};
  CHECK_THROWS_AS(split(p, empty), DataError);
}

TEST_CASE("panel cache: round trip and stable bytes") {
  Rng rng(9);
  Panel p = oracle::random_panel(rng, 5, 30);
  Mask m(5, 30, true);
  m.set(2, 3, false);
  p = p.with_tradable(m).with_provenance("source", "unit-test");
  const fs::path dir = fs::temp_directory_path() / "factorlab_panel_cache_test";
  fs::create_directories(dir);
  write_panel_cache(p, dir / "a.bin");
  write_panel_cache(read_panel_cache(dir / "a.bin"), dir / "b.bin");
  CHECK(read_panel_cache(dir / "a.bin") == p);
  CHECK(read_file(dir / "a.bin") == read_file(dir / "b.bin"));
  write_file(dir / "bad.bin", "not a cache");
  CHECK_THROWS_AS(read_panel_cache(dir / "bad.bin"), DataError);
  fs::remove_all(dir);
}

TEST_CASE("ingest report jsonl lists every violation") {
  std::string csv = series_csv({{"A", {1, 2}}});
  csv += "2021-01-03,A,1,1,1,-1,1,1\n";
  csv += "2021-01-04,A,1,1,1,1,-5,1\n";
  const auto r = load_panel_from_string(csv);
  const auto text = r.report.to_jsonl();
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  CHECK(text.find("non-positive price") != std::string::npos);
  CHECK(text.find("negative volume") != std::string::npos);
}
