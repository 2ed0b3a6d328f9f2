// factorlab command-line tool.
//
// Exit codes: 0 ok, 1 other failure or invalid recipe, 2 config error,
// 3 data error, 4 protocol frozen, 5 trace integrity failure,
// 6 missing prerequisite artifact.

#include <CLI11.hpp>

#include <cstdio>
#include <functional>
#include <iostream>

#include "factorlab/pipeline.hpp"

namespace fl = factorlab;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kFrozen = 4, kIntegrity = 5, kDependency = 6 };

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const fl::ProtocolFrozenError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kFrozen;
  } catch (const fl::TraceIntegrityError& ex) {
    std::cerr << "integrity failure: " << ex.what() << "\n";
    return kIntegrity;
  } catch (const fl::DependencyError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kDependency;
  } catch (const fl::ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return kConfig;
  } catch (const fl::DataError& ex) {
    std::cerr << "data error: " << ex.what() << "\n";
    return kData;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kFailure;
  }
}

void print_integrity(const fl::IntegrityResult& r) {
  if (r.ok) {
    std::cout << "ok: " << r.valid_records << " records verified\n";
    return;
  }
  std::cout << "FAILED: " << r.message << "\n";
  if (!r.header_ok) std::cout << "header: invalid\n";
  if (r.first_bad_seq) std::cout << "first_bad_seq: " << *r.first_bad_seq << "\n";
  std::cout << "valid_records: " << r.valid_records << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"factorlab: auditable cross-sectional factor search"};
  app.require_subcommand(1);

  std::string config_path;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Session config (JSON)")->required()->check(CLI::ExistingFile);
  };

  auto* ingest = app.add_subcommand("ingest", "Load, filter and cache the market panel");
  add_config(ingest);

  fl::SynthConfig synth_cfg;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic market CSV with a planted signal column");
  synth->add_option("-o,--out", synth_out, "Output CSV path")->required();
  synth->add_option("--seed", synth_cfg.seed, "Random seed");
  synth->add_option("--assets", synth_cfg.n_assets, "Number of assets");
  synth->add_option("--days", synth_cfg.n_days, "Number of calendar days");
  synth->add_option("--planted-ic", synth_cfg.planted_ic, "Target IC of the planted column, in [0, 0.3]");
  synth->add_option("--start", synth_cfg.start, "First date (YYYY-MM-DD)");

  int round_count = 1;
  auto* round = app.add_subcommand("round", "Run search rounds and append them to the trace");
  add_config(round);
  round->add_option("-n,--count", round_count, "Number of rounds to run")->check(CLI::PositiveNumber);

  auto* curate = app.add_subcommand("curate", "Curate the good pool from the hold pool");
  add_config(curate);
  auto* combine = app.add_subcommand("combine", "Fit the ridge combination on the good pool");
  add_config(combine);
  auto* backtest = app.add_subcommand("backtest", "Quintile backtests per window and weighting");
  add_config(backtest);
  auto* sweep = app.add_subcommand("fee-sweep", "Long-short fee sensitivity tables");
  add_config(sweep);
  auto* report = app.add_subcommand("report", "Summarize the session into report.md");
  add_config(report);

  std::string trace_path;
  auto* verify = app.add_subcommand("verify-trace", "Recompute the trace hash chain");
  verify->add_option("trace", trace_path, "Trace file")->required();

  std::string recipe_text;
  std::vector<std::string> columns;
  std::size_t max_depth = fl::dsl::kDefaultMaxDepth;
  auto* validate = app.add_subcommand("validate-recipe", "Parse and validate a recipe");
  validate->add_option("recipe", recipe_text, "Recipe text")->required();
  validate->add_option("--columns", columns, "Approved columns (default: raw and derived panel columns)")
      ->delimiter(',');
  validate->add_option("--max-depth", max_depth, "Maximum tree depth");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  auto config = [&] { return fl::SessionConfig::load(config_path); };

  if (*ingest) {
    return guarded([&] {
      const auto out = fl::cmd_ingest(config());
      std::cout << "rows read " << out.report.rows_read << ", kept " << out.report.rows_kept << ", dropped "
                << out.report.dropped() << "; panel " << out.report.n_assets << " assets x " << out.report.n_dates
                << " dates\ncache sha256 " << out.cache_digest << "\n";
      return kOk;
    });
  }
  if (*synth) {
    return guarded([&] {
      fl::cmd_synth(synth_cfg, synth_out);
      std::cout << "wrote " << synth_out << "\n";
      return kOk;
    });
  }
  if (*round) {
    return guarded([&] {
      const auto cfg = config();
      for (int k = 0; k < round_count; ++k) std::cout << fl::cmd_round(cfg).to_text() << "\n";
      return kOk;
    });
  }
  if (*curate) {
    return guarded([&] {
      const auto pools = fl::cmd_curate(config());
      std::cout << "good pool (" << pools.good.size() << " of " << pools.hold.size() << "):";
      for (const auto& n : pools.good) std::cout << " " << n;
      std::cout << "\n";
      return kOk;
    });
  }
  if (*combine) {
    return guarded([&] {
      const auto m = fl::cmd_combine(config());
      for (std::size_t k = 0; k < m.beta.size(); ++k) {
        std::cout << m.factor_names[k] << " " << fl::format_double(m.beta[k]) << "\n";
      }
      return kOk;
    });
  }
  if (*backtest || *sweep) {
    return guarded([&] {
      const auto cfg = config();
      const auto files = *backtest ? fl::cmd_backtest(cfg) : fl::cmd_fee_sweep(cfg);
      for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
      return kOk;
    });
  }
  if (*report) {
    return guarded([&] {
      std::cout << "wrote " << fl::cmd_report(config()).string() << "\n";
      return kOk;
    });
  }
  if (*verify) {
    return guarded([&] {
      const auto r = fl::cmd_verify_trace(trace_path);
      print_integrity(r);
      return r.ok ? kOk : kIntegrity;
    });
  }
  if (*validate) {
    return guarded([&] {
      std::set<std::string> allowed(columns.begin(), columns.end());
      if (allowed.empty()) {
        for (const auto& c : fl::raw_column_names()) allowed.insert(c);
        for (const auto& c : fl::derived_column_names()) allowed.insert(c);
      }
      fl::dsl::ExprPtr e;
      try {
        e = fl::dsl::parse_recipe(recipe_text);
      } catch (const fl::dsl::RecipeParseError& ex) {
        std::cout << "parse error at byte " << ex.offset() << ": " << ex.what() << "\n";
        return kFailure;
      }
      const auto rep = fl::dsl::validate(*e, allowed, max_depth);
      std::cout << "canonical: " << fl::dsl::canonical_form(*e) << "\n";
      for (const auto& v : rep.violations) std::cout << "violation " << v.rule << " at " << v.path << ": " << v.message << "\n";
      for (const auto& n : rep.notes) std::cout << "note: " << n << "\n";
      std::cout << (rep.ok ? "valid" : "invalid") << "\n";
      return rep.ok ? kOk : kFailure;
    });
  }
  return kFailure;
}
