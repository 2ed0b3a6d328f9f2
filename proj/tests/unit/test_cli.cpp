#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>

#include "factorlab/pipeline.hpp"

using namespace factorlab;
namespace fs = std::filesystem;

namespace {

const fs::path& work() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("factorlab_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args) {
  const fs::path log = work() / "stdout.txt";
  const std::string cmd = std::string("\"") + FACTORLAB_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(log)};
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

SynthConfig small_market() {
  SynthConfig s;
  s.seed = 9;
  s.n_assets = 20;
  s.start = "2019-07-01";
  s.n_days = static_cast<std::size_t>((parse_date("2021-06-30") - parse_date("2019-07-01")).count()) + 1;
  return s;
}

fs::path write_config(const std::string& name, const std::function<void(SessionConfig&)>& edit = {}) {
  SessionConfig cfg;
  cfg.data_path = (work() / "market.csv").string();
  cfg.schema.extra = {kPlantedColumn};
  cfg.split = {{parse_date("2020-01-01"), parse_date("2020-09-30")},
               {parse_date("2020-10-01"), parse_date("2020-12-31")},
               {parse_date("2021-01-01"), parse_date("2021-06-28")}};
  cfg.agent.focus_columns = {kPlantedColumn};
  cfg.output_dir = (work() / name).string();
  if (edit) edit(cfg);
  const fs::path p = work() / (name + ".json");
  write_file(p, cfg.to_json().dump(2) + "\n");
  return p;
}

double mean_planted_ic(const SynthConfig& s) {
  CsvSchema schema;
  schema.extra = {kPlantedColumn};
  const auto loaded = load_panel_from_string(synth_csv(s), schema, "synthetic");
  const Panel panel = compute_derived(loaded.panel);
  const Matrix y = forward_return(panel);
  const auto ic = daily_ic(panel.column(kPlantedColumn), y, 5);
  return summarize_ic(ic).mean_ic;
}

}  // namespace

TEST_CASE("synth: same seed gives identical bytes") {
  const auto a = work() / "a.csv", b = work() / "b.csv", c = work() / "c.csv";
  CHECK(cli("synth -o " + q(a) + " --seed 3 --assets 12 --days 200").code == 0);
  CHECK(cli("synth -o " + q(b) + " --seed 3 --assets 12 --days 200").code == 0);
  CHECK(cli("synth -o " + q(c) + " --seed 4 --assets 12 --days 200").code == 0);
  CHECK(read_file(a) == read_file(b));
  CHECK(read_file(a) != read_file(c));
  CHECK(read_file(a).rfind("date,symbol,open,high,low,close,volume,market_cap,signal\n", 0) == 0);
  CHECK(cli("synth -o " + q(a) + " --planted-ic 0.5").code == 2);
}

TEST_CASE("synth: planted IC calibration") {
  SynthConfig s;
  s.n_assets = 50;
  s.n_days = 750;
  s.seed = 21;
  s.planted_ic = 0.0;
  const double n = 748.0, A = 50.0;
  CHECK(std::fabs(mean_planted_ic(s)) < 3.0 / std::sqrt(n * A));
  s.planted_ic = 0.05;
  CHECK(std::fabs(mean_planted_ic(s) - 0.05) < 0.02);
}

TEST_CASE("validate-recipe: exit codes and output") {
  auto ok = cli("validate-recipe \"cs_rank( lag(1, col(close)))\"");
  CHECK(ok.code == 0);
  CHECK(ok.out.find("canonical: cs_rank(lag(1, col(close)))") != std::string::npos);
  auto bad = cli("validate-recipe \"cs_rank(col(close))\"");
  CHECK(bad.code == 1);
  CHECK(bad.out.find("invalid") != std::string::npos);
  auto broken = cli("validate-recipe \"cs_rank(col(close)\"");
  CHECK(broken.code == 1);
  CHECK(broken.out.find("parse error at byte 18") != std::string::npos);
  CHECK(cli("validate-recipe \"abs(col(signal))\" --columns signal").code == 0);
  CHECK(cli("validate-recipe \"abs(col(signal))\"").code == 1);
}

TEST_CASE("session commands: exit codes, digests and integrity") {
  write_synth_csv(small_market(), work() / "market.csv");
  const auto cfg = write_config("run1");

  CHECK(cli("ingest -c " + q(work() / "missing.json")).code == 2);
  const auto bad_data = write_config("bad", [](SessionConfig& c) { c.data_path = "/nonexistent/market.csv"; });
  CHECK(cli("ingest -c " + q(bad_data)).code == 3);

  CHECK(cli("round -c " + q(cfg)).code == 6);  // no panel cache yet
  const auto first = cli("ingest -c " + q(cfg));
  REQUIRE(first.code == 0);
  const auto second = cli("ingest -c " + q(cfg));
  CHECK(first.out == second.out);  // cache digest is stable
  CHECK(first.out.find("cache sha256 ") != std::string::npos);

  CHECK(cli("curate -c " + q(cfg)).code == 6);  // no trace yet
  CHECK(cli("round -c " + q(cfg) + " -n 5").code == 0);
  CHECK(cli("round -c " + q(cfg)).code == 2);  // round budget spent
  CHECK(cli("report -c " + q(cfg)).code == 6);  // no backtest yet

  // Editing the gate after the trace exists freezes the session.
  const auto edited = write_config("run1", [](SessionConfig& c) { c.gate.tau_t = 1.5; });
  CHECK(cli("curate -c " + q(edited)).code == 4);
  write_config("run1");

  const fs::path trace = work() / "run1" / artifact::kTrace;
  CHECK(cli("verify-trace " + q(trace)).code == 0);

  // A second session from the same config reproduces the trace bytes.
  const auto cfg2 = write_config("run2");
  REQUIRE(cli("ingest -c " + q(cfg2)).code == 0);
  REQUIRE(cli("round -c " + q(cfg2) + " -n 5").code == 0);
  CHECK(sha256_hex(read_file(trace)) == sha256_hex(read_file(work() / "run2" / artifact::kTrace)));

  for (const char* step : {"curate", "combine", "backtest", "fee-sweep", "report"}) {
    const auto r = cli(std::string(step) + " -c " + q(cfg));
    CHECK_MESSAGE(r.code == 0, step << ": " << r.out);
  }
  CHECK(fs::exists(work() / "run1" / artifact::kReport));
  CHECK(fs::exists(work() / "run1" / artifact::kModel));

  std::string bytes = read_file(trace);
  bytes[bytes.size() / 2] ^= 0x08;
  write_file(trace, bytes);
  const auto tampered = cli("verify-trace " + q(trace));
  CHECK(tampered.code == 5);
  CHECK(tampered.out.find("FAILED") != std::string::npos);
  CHECK(cli("curate -c " + q(cfg)).code == 5);
  CHECK(cli("verify-trace " + q(work() / "nope.jsonl")).code == 3);
}

TEST_CASE("usage errors") {
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("--help").code == 0);
  fs::remove_all(work());
}
