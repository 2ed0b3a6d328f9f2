// Python bindings for the factorlab core.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "factorlab/pipeline.hpp"

namespace py = pybind11;
namespace fl = factorlab;

namespace {

py::array_t<double> to_numpy(const fl::Matrix& m) {
  py::array_t<double> out({m.n_assets(), m.n_dates()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

fl::Matrix from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array (assets x dates)");
  fl::Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.values().begin());
  return m;
}

std::vector<std::string> date_strings(const std::vector<fl::Date>& dates) {
  std::vector<std::string> out;
  out.reserve(dates.size());
  for (const auto& d : dates) out.push_back(fl::format_date(d));
  return out;
}

py::dict metrics_dict(const fl::EvalMetrics& m) {
  py::dict d;
  d["mean_ic"] = m.mean_ic;
  d["ic_tstat"] = m.ic_tstat;
  d["tstat_degenerate"] = m.tstat_degenerate;
  d["ls_sharpe"] = m.ls_sharpe;
  d["coverage"] = m.coverage;
  d["n_days"] = m.n_days;
  return d;
}

py::dict perf_dict(const fl::PerformanceRow& p) {
  py::dict d;
  d["ann_ret"] = p.ann_ret;
  d["ann_vol"] = p.ann_vol;
  d["sharpe"] = p.sharpe;
  d["max_dd"] = p.max_dd;
  d["calmar"] = p.calmar;
  d["turnover"] = p.turnover;
  d["n_obs"] = p.n_obs;
  return d;
}

py::dict integrity_dict(const fl::IntegrityResult& r) {
  py::dict d;
  d["ok"] = r.ok;
  d["header_ok"] = r.header_ok;
  d["first_bad_seq"] = r.first_bad_seq ? py::cast(*r.first_bad_seq) : py::none();
  d["partial_tail"] = r.partial_tail;
  d["valid_records"] = r.valid_records;
  d["message"] = r.message;
  return d;
}

fl::Panel prepared_panel(const std::string& csv_path, const std::vector<std::string>& extra) {
  fl::CsvSchema schema;
  schema.extra = extra;
  const auto loaded = fl::load_panel(csv_path, schema);
  return fl::compute_derived(fl::filter_universe(loaded.panel, fl::UniverseFilter{}));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "factorlab core: recipe DSL, signal evaluation, audit trace and session commands";

  py::register_exception<fl::dsl::RecipeParseError>(m, "RecipeParseError", PyExc_ValueError);
  py::register_exception<fl::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<fl::DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<fl::ProtocolFrozenError>(m, "ProtocolFrozenError", PyExc_RuntimeError);
  py::register_exception<fl::TraceIntegrityError>(m, "TraceIntegrityError", PyExc_RuntimeError);
  py::register_exception<fl::DependencyError>(m, "DependencyError", PyExc_RuntimeError);

  // Recipes.
  m.def("canonical_form", [](const std::string& text) { return fl::dsl::canonical_form(*fl::dsl::parse_recipe(text)); },
        py::arg("recipe"));
  m.def(
      "validate_recipe",
      [](const std::string& text, std::vector<std::string> columns, std::size_t max_depth) {
        if (columns.empty()) {
          columns = fl::raw_column_names();
          for (const auto& c : fl::derived_column_names()) columns.push_back(c);
        }
        const auto e = fl::dsl::parse_recipe(text);
        const auto r = fl::dsl::validate(*e, {columns.begin(), columns.end()}, max_depth);
        py::list violations;
        for (const auto& v : r.violations) violations.append(py::make_tuple(v.rule, v.path, v.message));
        py::dict d;
        d["ok"] = r.ok;
        d["canonical"] = fl::dsl::canonical_form(*e);
        d["depth"] = fl::dsl::depth(*e);
        d["violations"] = violations;
        return d;
      },
      py::arg("recipe"), py::arg("columns") = std::vector<std::string>{},
      py::arg("max_depth") = fl::dsl::kDefaultMaxDepth);

  // Panels.
  py::class_<fl::Panel>(m, "Panel")
      .def_property_readonly("assets", &fl::Panel::assets)
      .def_property_readonly("dates", [](const fl::Panel& p) { return date_strings(p.dates()); })
      .def_property_readonly("columns", &fl::Panel::column_names)
      .def("column", [](const fl::Panel& p, const std::string& name) { return to_numpy(p.column(name)); })
      .def("tradable", [](const fl::Panel& p) {
        const auto& t = p.tradable();
        py::array_t<bool> out({p.n_assets(), p.n_dates()});
        auto v = out.mutable_unchecked<2>();
        for (std::size_t i = 0; i < p.n_assets(); ++i)
          for (std::size_t d = 0; d < p.n_dates(); ++d) v(i, d) = t(i, d);
        return out;
      });
  m.def("load_panel", &prepared_panel, py::arg("csv_path"), py::arg("extra_columns") = std::vector<std::string>{},
        "Load a daily CSV, apply the universe filter and add derived columns.");
  m.def(
      "evaluate_recipe",
      [](const std::string& text, const fl::Panel& p) { return to_numpy(fl::dsl::evaluate(*fl::dsl::parse_recipe(text), p)); },
      py::arg("recipe"), py::arg("panel"));
  m.def(
      "forward_return", [](const fl::Panel& p, int exec_lag, int hold) { return to_numpy(fl::forward_return(p, exec_lag, hold)); },
      py::arg("panel"), py::arg("exec_lag") = 1, py::arg("hold") = 1);

  // Statistics.
  m.def(
      "daily_ic",
      [](const py::array_t<double>& scores, const py::array_t<double>& targets, std::size_t min_names) {
        return fl::daily_ic(from_numpy(scores), from_numpy(targets), min_names);
      },
      py::arg("scores"), py::arg("targets"), py::arg("min_names") = 5);
  m.def(
      "summarize_ic",
      [](const std::vector<double>& ic) {
        const auto s = fl::summarize_ic(ic);
        return py::make_tuple(s.mean_ic, s.ic_tstat, s.n_days);
      },
      py::arg("ic"));
  m.def(
      "evaluate_signal",
      [](const std::string& text, const fl::Panel& p, const std::string& start, const std::string& end) {
        const auto scores = fl::dsl::evaluate(*fl::dsl::parse_recipe(text), p);
        const auto targets = fl::forward_return(p);
        const fl::DateRange r{fl::parse_date(start), fl::parse_date(end)};
        std::vector<std::size_t> dates;
        for (std::size_t t = 0; t < p.n_dates(); ++t)
          if (r.contains(p.dates()[t])) dates.push_back(t);
        return metrics_dict(fl::evaluate_signal(scores, targets, p.tradable(), dates, {}));
      },
      py::arg("recipe"), py::arg("panel"), py::arg("start"), py::arg("end"));
  m.def(
      "performance_metrics",
      [](const std::vector<double>& net, const std::vector<double>& turnover) {
        return perf_dict(fl::performance_metrics(net, turnover));
      },
      py::arg("net"), py::arg("turnover"));

  // Synthetic data.
  m.def(
      "synth_csv",
      [](std::uint64_t seed, std::size_t n_assets, std::size_t n_days, double planted_ic, const std::string& start) {
        fl::SynthConfig c;
        c.seed = seed;
        c.n_assets = n_assets;
        c.n_days = n_days;
        c.planted_ic = planted_ic;
        c.start = start;
        return fl::synth_csv(c);
      },
      py::arg("seed") = 42, py::arg("n_assets") = 50, py::arg("n_days") = 1826, py::arg("planted_ic") = 0.05,
      py::arg("start") = "2020-01-01");

  // Trace.
  m.def("verify_trace", [](const std::filesystem::path& p) { return integrity_dict(fl::cmd_verify_trace(p)); },
        py::arg("path"));
  m.def("verify_trace_bytes", [](const std::string& content) { return integrity_dict(fl::verify_integrity(content)); },
        py::arg("content"));

  // Session commands, driven by a JSON config file.
  auto load = [](const std::filesystem::path& p) { return fl::SessionConfig::load(p); };
  m.def("ingest", [load](const std::filesystem::path& c) { return fl::cmd_ingest(load(c)).cache_digest; },
        py::arg("config"), "Returns the SHA-256 of the panel cache.");
  m.def("run_round", [load](const std::filesystem::path& c) { return fl::cmd_round(load(c)).to_text(); },
        py::arg("config"));
  m.def(
      "curate",
      [load](const std::filesystem::path& c) {
        const auto p = fl::cmd_curate(load(c));
        return py::make_tuple(p.hold, p.good);
      },
      py::arg("config"), "Returns (hold, good).");
  m.def(
      "combine",
      [load](const std::filesystem::path& c) {
        const auto model = fl::cmd_combine(load(c));
        py::dict d;
        for (std::size_t k = 0; k < model.beta.size(); ++k) d[py::str(model.factor_names[k])] = model.beta[k];
        return d;
      },
      py::arg("config"), "Returns factor name -> ridge weight.");
  m.def("backtest", [load](const std::filesystem::path& c) { return fl::cmd_backtest(load(c)); }, py::arg("config"));
  m.def("fee_sweep", [load](const std::filesystem::path& c) { return fl::cmd_fee_sweep(load(c)); }, py::arg("config"));
  m.def("report", [load](const std::filesystem::path& c) { return fl::cmd_report(load(c)); }, py::arg("config"));
  m.def("default_config", [] { return fl::SessionConfig{}.to_json().dump(2); },
        "Default session config as a JSON string.");
}
