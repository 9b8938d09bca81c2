#include "cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crowdsig/equicorr.hpp"
#include "crowdsig/error.hpp"
#include "crowdsig/estimator.hpp"
#include "crowdsig/factor.hpp"
#include "crowdsig/io.hpp"
#include "crowdsig/panel.hpp"
#include "crowdsig/sigplot.hpp"
#include "crowdsig/svg.hpp"

#ifndef CROWDSIG_VERSION
#define CROWDSIG_VERSION "0.0.0"
#endif

namespace crowdsig::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << v;
  return o.str();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Rethrows a library error with the offending path in front.
template <typename F>
auto with_path(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

struct Formats {
  bool csv = false;
  bool json = false;
  bool svg = false;
};

Formats parse_formats(const std::vector<std::string>& list) {
  Formats f;
  for (const auto& s : list) {
    if (s == "csv") f.csv = true;
    else if (s == "json") f.json = true;
    else if (s == "svg") f.svg = true;
    else throw Error(Errc::parse, "unknown output format '" + s + "' (csv, json, svg)");
  }
  return f;
}

// Collects emitted files and warnings; writes the manifest last.
class Bundle {
 public:
  Bundle(std::string command, std::string out_dir, std::ostream& err)
      : command_(std::move(command)), dir_(std::move(out_dir)), err_(err) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error(Errc::io, "cannot create output directory '" + dir_ + "'");
  }

  void input(const std::string& path, const std::string& content) {
    inputs_.push_back({{"path", path}, {"fnv1a64", hex(fnv1a(content))}});
  }
  void seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }
  void config(json c) { config_ = std::move(c); }

  void write(const std::string& name, const std::string& content) {
    const auto path = (fs::path(dir_) / name).string();
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) throw Error(Errc::io, "cannot write '" + path + "'");
    files_.insert(name);
  }

  void warn(const std::string& message) {
    err_ << "warning: " << message << '\n';
    warnings_.push_back(message);
  }
  void note(const std::string& message) { notes_.push_back(message); }

  int finish() {
    // Paths are left out of the hash; the input content hashes stand in for them.
    json keyed_config = config_;
    for (const char* key : {"--panel", "--levels", "--realizations", "--cov"}) keyed_config.erase(key);
    std::string keyed = command_ + '\n' + keyed_config.dump() + '\n';
    for (const auto& in : inputs_) keyed += in["fnv1a64"].get<std::string>() + '\n';
    json m{{"tool", "crowdsig"},
           {"version", CROWDSIG_VERSION},
           {"command", command_},
           {"config", config_},
           {"config_hash", hex(fnv1a(keyed))},
           {"inputs", inputs_},
           {"seeds", seeds_},
           {"files", std::vector<std::string>(files_.begin(), files_.end())},
           {"warnings", warnings_},
           {"notes", notes_},
           {"status", warnings_.empty() ? "ok" : "partial"}};
    write("manifest.json", m.dump(2) + '\n');
    return warnings_.empty() ? kOk : kPartial;
  }

 private:
  std::string command_;
  std::string dir_;
  std::ostream& err_;
  json inputs_ = json::array();
  json config_ = json::object();
  std::map<std::string, std::uint64_t> seeds_;
  std::set<std::string> files_;
  std::vector<std::string> warnings_;
  std::vector<std::string> notes_;
};

template <typename Writer, typename T>
std::string to_text(Writer w, const T& value) {
  std::ostringstream s;
  w(s, value);
  return s.str();
}

void emit_plot(Bundle& b, const Formats& f, const std::string& stem, const SignaturePlot& plot) {
  if (f.csv) b.write(stem + ".csv", to_text(write_plot_csv, plot));
  if (f.json) b.write(stem + ".json", plot_json(plot).dump(2) + '\n');
}

struct LoadedPanel {
  std::string path;
  std::string label;
  ErrorPanel panel;
};

// Reads a panel CSV and, when present, its metadata sidecar (same stem, .json).
LoadedPanel load_panel(Bundle& b, const std::string& path) {
  const std::string body = slurp(path);
  b.input(path, body);
  std::optional<json> meta;
  const auto sidecar = fs::path(path).replace_extension(".json");
  if (fs::exists(sidecar)) {
    const std::string text = slurp(sidecar.string());
    b.input(sidecar.string(), text);
    try {
      meta = json::parse(text);
    } catch (const json::exception& e) {
      throw Error(Errc::parse, sidecar.string() + ": " + e.what());
    }
  }
  std::istringstream in(body);
  auto panel = with_path(path, [&] { return read_panel_csv(in, meta); });
  return {path, fs::path(path).stem().string(), std::move(panel)};
}

std::size_t widest_period(const ErrorPanel& p) {
  std::size_t w = 0;
  for (std::size_t t = 0; t < p.periods(); ++t) w = std::max(w, p.respondents(t).size());
  return w;
}

// Crowd-size cap for a panel: the configured k_max, bounded by the largest
// per-period cross-section.
int cap_k(Bundle& b, const LoadedPanel& lp, int k_max) {
  const auto w = static_cast<int>(widest_period(lp.panel));
  if (k_max > w) {
    b.note(lp.label + ": k_max lowered from " + std::to_string(k_max) + " to " +
           std::to_string(w));
    return w;
  }
  return k_max;
}

std::string variable_prefix(const std::string& variable) {
  if (variable == "growth") return "RGDP";
  if (variable == "inflation") return "PGDP";
  return variable;
}

// ---------------------------------------------------------------- ingest

struct IngestOptions {
  std::string levels;
  std::string realizations;
  std::string variable = "growth";
  std::vector<int> horizons{1, 2, 3, 4};
  int level_count = 6;
  int position_offset = -1;
  std::string window;
  std::string realization_column = "VALUE";
};

PeriodWindow parse_window(const std::string& text) {
  const auto colon = text.find('-');
  if (colon == std::string::npos)
    throw Error(Errc::parse, "window must look like 1990Q2-2019Q4");
  return {Quarter::parse(text.substr(0, colon)), Quarter::parse(text.substr(colon + 1))};
}

int cmd_ingest(const IngestOptions& o, Bundle& b, const Formats& f) {
  for (int h : o.horizons) {
    const int top = std::min(4, o.level_count - 1);
    if (h < 1 || h > top)
      throw Error(Errc::range, "horizon " + std::to_string(h) + " outside 1.." + std::to_string(top));
  }
  const std::string prefix = variable_prefix(o.variable);
  const std::string level_text = slurp(o.levels);
  const std::string real_text = slurp(o.realizations);
  b.input(o.levels, level_text);
  b.input(o.realizations, real_text);

  ColumnLayout layout;
  layout.level_count = o.level_count;
  layout.first_position_offset = o.position_offset;
  std::istringstream lin(level_text);
  const auto levels = with_path(o.levels, [&] { return load_spf_levels(lin, prefix, layout); });
  RealizationLayout rl;
  rl.value_column = o.realization_column;
  std::istringstream rin(real_text);
  const auto realized = with_path(o.realizations, [&] { return load_realizations(rin, rl); });

  // Participation: a forecaster counts in a survey when any level is reported.
  {
    std::map<Quarter, std::set<int>> by_survey;
    std::set<int> ids;
    for (const auto& r : levels.records) {
      if (std::none_of(r.levels.begin(), r.levels.end(), [](const auto& v) { return v.has_value(); }))
        continue;
      by_survey[r.survey].insert(r.forecaster_id);
      ids.insert(r.forecaster_id);
    }
    if (!by_survey.empty()) {
      std::vector<int> id_list(ids.begin(), ids.end());
      std::vector<Quarter> periods;
      for (const auto& [q, _] : by_survey) periods.push_back(q);
      std::vector<double> zeros(id_list.size() * periods.size(), 0.0);
      std::vector<std::uint8_t> mask(zeros.size(), 0);
      for (std::size_t i = 0; i < id_list.size(); ++i)
        for (std::size_t t = 0; t < periods.size(); ++t)
          mask[i * periods.size() + t] = by_survey[periods[t]].count(id_list[i]) ? 1 : 0;
      const auto summary = participation_summary(ErrorPanel(id_list, periods, zeros, mask));
      if (f.csv) b.write("participation_" + prefix + ".csv", to_text(write_participation_csv, summary));
      if (f.json) b.write("participation_" + prefix + ".json", participation_json(summary).dump(2) + '\n');
      if (f.svg) {
        SignaturePlot counts;
        counts.label = "respondents";
        for (std::size_t t = 0; t < summary.respondents.size(); ++t)
          counts.points.push_back(SignaturePoint{static_cast<int>(t + 1),
                                                 static_cast<double>(summary.respondents[t])});
        SvgStyle style;
        style.title = prefix + " respondents per survey, from " + periods.front().str();
        style.x_label = "survey index";
        b.write("participation_" + prefix + ".svg", render_svg({counts}, style));
      }
    } else {
      b.warn(o.levels + ": no forecaster reported any level");
    }
  }

  for (int h : o.horizons) {
    const auto growth = levels_to_growth(levels, h);
    const std::string stem = "panel_" + prefix + "_h" + std::to_string(h);
    ErrorPanel panel;
    try {
      panel = compute_errors(growth, realized);
    } catch (const Error& e) {
      if (e.code() != Errc::empty_panel) throw;
      b.warn(stem + ": " + e.what());
      continue;
    }
    // Panels are always written as CSV plus the JSON sidecar the readers need.
    b.write(stem + ".csv", to_text(write_panel_csv, panel));
    b.write(stem + ".json", panel_metadata(panel).dump(2) + '\n');
    if (!o.window.empty()) {
      try {
        const auto bal = extract_balanced(panel, parse_window(o.window));
        b.write(stem + "_balanced.csv", to_text(write_panel_csv, bal));
        b.write(stem + "_balanced.json", panel_metadata(bal).dump(2) + '\n');
      } catch (const Error& e) {
        if (e.code() != Errc::empty_result) throw;
        b.warn(stem + ": " + e.what());
      }
    }
  }
  return b.finish();
}

// ---------------------------------------------------------------- signature

struct SignatureOptions {
  std::vector<std::string> panels;
  std::vector<std::string> methods{"all"};
  std::size_t b = 30000;
  std::uint64_t seed = 20240101;
  int k_max = 20;
  std::string group_mode = "per_period";
  double membership = 1.0;
  bool distribution = true;
  std::size_t distribution_b = 1000;
};

int cmd_signature(const SignatureOptions& o, Bundle& b, const Formats& f) {
  std::set<PlotMethod> methods;
  for (const auto& m : o.methods) {
    if (m == "all") {
      methods.insert({PlotMethod::exact, PlotMethod::monte_carlo, PlotMethod::closed_form});
    } else {
      const auto pm = parse_plot_method(m);
      if (pm == PlotMethod::model) throw Error(Errc::parse, "method 'model' is not a data method");
      methods.insert(pm);
    }
  }
  if (o.k_max < 1) throw Error(Errc::range, "k_max must be >= 1");
  MonteCarloConfig mc;
  mc.replications = o.b;
  mc.seed = o.seed;
  mc.group_mode = parse_group_mode(o.group_mode);
  mc.membership_fraction = o.membership;
  b.seed("monte_carlo", o.seed);

  std::vector<LoadedPanel> panels;
  for (const auto& p : o.panels) panels.push_back(load_panel(b, p));

  std::map<PlotMethod, std::vector<SignaturePlot>> ratio_by_method, dmse_by_method;
  for (const auto& lp : panels) {
    const int k_max = cap_k(b, lp, o.k_max);
    for (const auto method : methods) {
      SignaturePlot plot;
      try {
        switch (method) {
          case PlotMethod::exact: plot = mse_exact(lp.panel, k_max); break;
          case PlotMethod::monte_carlo: {
            auto cfg = mc;
            cfg.k_max = k_max;
            plot = mse_monte_carlo(lp.panel, cfg);
            break;
          }
          case PlotMethod::closed_form:
            plot = mse_closed_form(sample_moments(lp.panel), k_max);
            break;
          case PlotMethod::model: break;
        }
      } catch (const Error& e) {
        b.warn(lp.label + ": " + std::string(to_string(method)) + " skipped: " + e.what());
        continue;
      }
      plot.label = lp.label;
      const std::string stem = "sig_" + lp.label + "_" + std::string(to_string(method));
      emit_plot(b, f, stem + "_mse", plot);
      try {
        auto ratio = to_ratio(plot);
        emit_plot(b, f, stem + "_mse_ratio", ratio);
        ratio_by_method[method].push_back(std::move(ratio));
        if (plot.size() >= 2) {
          emit_plot(b, f, stem + "_dmse", to_dmse(plot, false));
          auto dr = to_dmse(plot, true);
          emit_plot(b, f, stem + "_dmse_ratio", dr);
          dmse_by_method[method].push_back(std::move(dr));
        }
      } catch (const Error& e) {
        b.warn(lp.label + ": transforms of the " + std::string(to_string(method)) +
               " plot skipped: " + e.what());
      }
    }

    if (o.distribution) {
      auto cfg = mc;
      cfg.k_max = k_max;
      cfg.replications = o.distribution_b;
      try {
        auto dist = squared_error_distribution(lp.panel, cfg);
        dist.label = lp.label;
        if (f.csv) b.write("dist_" + lp.label + ".csv", to_text(write_distribution_csv, dist));
        if (f.json) b.write("dist_" + lp.label + ".json", distribution_json(dist).dump(2) + '\n');
        if (f.svg) {
          SvgStyle style;
          style.title = lp.label + ": squared k-average errors / median at k=1";
          b.write("dist_" + lp.label + ".svg", render_svg(dist, style));
        }
      } catch (const Error& e) {
        b.warn(lp.label + ": distribution skipped: " + e.what());
      }
    }
  }

  if (f.svg) {
    for (const auto& [method, plots] : ratio_by_method) {
      SvgStyle style;
      style.title = "MSE ratio (" + std::string(to_string(method)) + ")";
      style.y_label = "MSE(k) / MSE(1)";
      b.write("sig_" + std::string(to_string(method)) + "_mse_ratio.svg", render_svg(plots, style));
    }
    for (const auto& [method, plots] : dmse_by_method) {
      SvgStyle style;
      style.title = "DMSE ratio (" + std::string(to_string(method)) + ")";
      style.y_label = "DMSE(k) / DMSE(1)";
      b.write("sig_" + std::string(to_string(method)) + "_dmse_ratio.svg", render_svg(plots, style));
    }
  }
  return b.finish();
}

// ---------------------------------------------------------------- estimate

struct EstimateOptions {
  std::vector<std::string> panels;
  std::vector<std::string> methods{"numeric_profile", "closed_form"};
  int k_max = 20;
  std::string fit_plot = "auto";
  std::size_t b = 30000;
  std::uint64_t seed = 20240101;
  std::size_t b_boot = 1000;
  std::uint64_t boot_seed = 20240102;
  std::size_t block = 1;
  std::size_t boot_b = 200;
  int grid = 400;
};

// Direct plot the numeric estimator fits.
SignaturePlot fit_plot(const ErrorPanel& p, const std::string& kind, int k_max,
                       const MonteCarloConfig& mc) {
  std::string use = kind;
  if (use == "auto") use = p.is_balanced() ? "closed_form" : "monte_carlo";
  if (use == "exact") return mse_exact(p, k_max);
  if (use == "closed_form") return mse_closed_form(sample_moments(p), k_max);
  if (use == "monte_carlo") {
    auto cfg = mc;
    cfg.k_max = k_max;
    return mse_monte_carlo(p, cfg);
  }
  throw Error(Errc::parse, "unknown fit plot '" + kind + "' (auto, exact, closed_form, monte_carlo)");
}

int cmd_estimate(const EstimateOptions& o, Bundle& b, const Formats& f) {
  std::vector<EstimatorMethod> methods;
  for (const auto& m : o.methods) methods.push_back(parse_estimator_method(m));
  if (o.k_max < 2) throw Error(Errc::range, "k_max must be >= 2 to identify rho");
  MonteCarloConfig mc;
  mc.replications = o.b;
  mc.seed = o.seed;
  b.seed("monte_carlo", o.seed);
  b.seed("bootstrap", o.boot_seed);

  std::vector<LoadedPanel> panels;
  for (const auto& p : o.panels) panels.push_back(load_panel(b, p));

  // table[(variable, method)] = columns of (panel label, estimate)
  using Column = std::pair<std::string, std::optional<MatchEstimate>>;
  std::map<std::pair<std::string, EstimatorMethod>, std::vector<Column>> table;
  json all = json::array();

  for (const auto& lp : panels) {
    const int k_max = cap_k(b, lp, o.k_max);
    const std::size_t n = widest_period(lp.panel);
    std::optional<SignaturePlot> plot;
    for (const auto method : methods) {
      std::optional<MatchEstimate> est;
      try {
        if (method == EstimatorMethod::closed_form) {
          est = closed_form_estimate(sample_moments(lp.panel));
        } else {
          if (!plot) plot = fit_plot(lp.panel, o.fit_plot, k_max, mc);
          est = matching_estimate(*plot, n);
        }
        if (o.b_boot > 0) {
          BootstrapConfig bc;
          bc.replicates = o.b_boot;
          bc.seed = o.boot_seed;
          bc.block_length = o.block;
          bc.k_max = k_max;
          if (method == EstimatorMethod::numeric_profile &&
              (o.fit_plot == "monte_carlo" || (o.fit_plot == "auto" && !lp.panel.is_balanced()))) {
            auto inner = mc;
            inner.replications = o.boot_b;
            bc.plot_builder = [inner](const ErrorPanel& p, int k) {
              auto cfg = inner;
              cfg.k_max = std::min<int>(k, static_cast<int>(widest_period(p)));
              return mse_monte_carlo(p, cfg);
            };
          }
          const auto boot = bootstrap_se(lp.panel, method, bc);
          est->se_rho = boot.se_rho;
          est->se_sigma2 = boot.se_sigma2;
          est->invalid_replicates = boot.invalid_replicates;
          if (boot.invalid_replicates > 0)
            b.note(lp.label + ": " + std::to_string(boot.invalid_replicates) +
                   " invalid bootstrap replicates excluded (" + std::string(to_string(method)) + ")");
        }
        if (!est->valid) b.warn(lp.label + ": " + std::string(to_string(method)) +
                                " estimate outside the admissible rho interval");
      } catch (const Error& e) {
        b.warn(lp.label + ": " + std::string(to_string(method)) + " failed: " + e.what());
      }
      const std::string var = lp.panel.variable().empty() ? "panel" : lp.panel.variable();
      table[{var, method}].push_back({lp.label, est});
      if (est) {
        auto j = estimate_json(*est);
        j["label"] = lp.label;
        j["horizon"] = lp.panel.horizon();
        j["variable"] = lp.panel.variable();
        all.push_back(std::move(j));
      }
    }

    // Profile curve and Q trace over the rho domain.
    if (plot && plot->size() >= 2 && o.grid >= 2) {
      const auto coeffs = ProfileCoefficients::from_plot(*plot);
      const double lo = rho_lower_bound(n);
      std::ostringstream prof, trace;
      prof << "rho,sigma2\n";
      trace << "rho,q\n";
      for (int i = 1; i < o.grid; ++i) {
        const double rho = lo + (1.0 - lo) * i / o.grid;
        const double s2 = profile_sigma2(coeffs, rho);
        const double q = profile_objective(*plot, coeffs, rho);
        prof << format_double(rho) << ',' << format_double(s2) << '\n';
        trace << format_double(rho) << ',' << format_double(q) << '\n';
      }
      if (f.csv) {
        b.write("profile_" + lp.label + ".csv", prof.str());
        b.write("qtrace_" + lp.label + ".csv", trace.str());
      }
    }
  }

  if (f.csv) {
    for (const auto& [key, cols] : table) {
      const auto& [var, method] = key;
      std::ostringstream t;
      t << "parameter";
      for (const auto& [label, _] : cols) t << ',' << label;
      t << '\n';
      auto row = [&](const std::string& name, auto value) {
        t << name;
        for (const auto& [label, est] : cols) {
          t << ',';
          if (est) t << value(*est);
        }
        t << '\n';
      };
      auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
      row("sigma2", [](const MatchEstimate& e) { return format_double(e.sigma2); });
      row("se_sigma2", [&](const MatchEstimate& e) { return opt(e.se_sigma2); });
      row("rho", [](const MatchEstimate& e) { return format_double(e.rho); });
      row("se_rho", [&](const MatchEstimate& e) { return opt(e.se_rho); });
      for (int k : {1, 5, 15})
        row("mse_r_" + std::to_string(k), [k](const MatchEstimate& e) {
          return e.rho < 1.0 ? format_double(model_mse_ratio(k, e.rho)) : std::string();
        });
      row("q", [](const MatchEstimate& e) { return format_double(e.q); });
      row("valid", [](const MatchEstimate& e) { return std::string(e.valid ? "true" : "false"); });
      b.write("table_" + var + "_" + std::string(to_string(method)) + ".csv", t.str());
    }
  }
  if (f.json) b.write("estimates.json", all.dump(2) + '\n');
  return b.finish();
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
  std::size_t n = 40;
  std::size_t t = 160;
  std::vector<double> rho{0.5};
  double sigma2 = 1.0;
  std::uint64_t seed = 20240101;
  int k_max = 20;
  bool model_curves = false;
  bool triple = false;
  std::size_t b = 30000;
  std::string group_mode = "per_period";
};

int cmd_simulate(const SimulateOptions& o, Bundle& b, const Formats& f) {
  b.seed("simulate", o.seed);
  std::vector<SignaturePlot> curves, triples;
  for (double rho : o.rho) {
    const std::string tag = "rho" + format_double(rho);
    const auto panel = simulate_equicorrelated(o.n, o.t, rho, o.sigma2, o.seed);
    b.write("sim_" + tag + ".csv", to_text(write_panel_csv, panel));
    b.write("sim_" + tag + ".json", panel_metadata(panel, "simulated").dump(2) + '\n');
    if (o.model_curves) {
      auto curve = model_plot({rho, o.sigma2}, o.k_max, PlotKind::mse_ratio);
      curve.label = "rho=" + format_double(rho);
      emit_plot(b, f, "model_" + tag + "_mse_ratio", curve);
      curves.push_back(std::move(curve));
    }
    if (o.triple) {
      MonteCarloConfig mc;
      mc.replications = o.b;
      mc.seed = o.seed;
      mc.k_max = std::min<int>(o.k_max, static_cast<int>(o.n));
      mc.group_mode = parse_group_mode(o.group_mode);
      b.seed("monte_carlo", o.seed);
      auto plot = mse_monte_carlo(panel, mc);
      plot.label = "rho=" + format_double(rho);
      emit_plot(b, f, "triple_" + tag, plot);
      triples.push_back(std::move(plot));
    }
  }
  if (f.svg && !curves.empty()) {
    SvgStyle style;
    style.title = "Model MSE ratio";
    style.y_label = "MSE(k) / MSE(1)";
    b.write("model_mse_ratio.svg", render_svg(curves, style));
  }
  if (f.svg) {
    for (const auto& t : triples) {
      SvgStyle style;
      style.title = "Random groups: average, min and max MSE (" + t.label + ")";
      style.y_label = "MSE(k)";
      b.write("triple_rho" + t.label.substr(4) + ".svg", render_svg({t}, style));
    }
  }
  return b.finish();
}

// ---------------------------------------------------------------- weights

struct WeightsOptions {
  std::string cov;
  std::vector<double> sd;
  std::optional<double> rho;
};

int cmd_weights(const WeightsOptions& o, Bundle& b, const Formats& f, std::ostream& out) {
  Eigen::VectorXd w;
  if (!o.cov.empty()) {
    const auto text = slurp(o.cov);
    b.input(o.cov, text);
    std::istringstream in(text);
    const auto sigma = with_path(o.cov, [&] { return read_matrix_csv(in); });
    w = optimal_weights(sigma);
  } else if (!o.sd.empty() && o.rho) {
    w = weak_equicorr_weights(o.sd, *o.rho);
  } else {
    throw Error(Errc::schema, "weights needs --cov PATH, or --sd LIST with --rho");
  }
  std::ostringstream csv;
  csv << "index,weight\n";
  json j = json::array();
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    csv << i + 1 << ',' << format_double(w(i)) << '\n';
    j.push_back(w(i));
    out << format_double(w(i)) << '\n';
  }
  if (f.csv) b.write("weights.csv", csv.str());
  if (f.json) b.write("weights.json", json{{"weights", j}}.dump(2) + '\n');
  return b.finish();
}

// ---------------------------------------------------------------- factor

struct FactorOptions {
  std::vector<double> loadings;
  double phi = 0.0;
  double shock_variance = 1.0;
  std::vector<double> idio;
  double tol = 1e-9;
  std::string panel;
  std::string cov;
};

int cmd_factor(const FactorOptions& o, Bundle& b, const Formats& f, std::ostream& out) {
  std::optional<CovarianceSummary> moments;
  std::vector<int> ids;
  json report = json::object();

  if (!o.loadings.empty()) {
    const FactorParams p{o.loadings, o.phi, o.shock_variance, o.idio};
    const auto m = implied_moments(p);
    json corr = json::array();
    for (Eigen::Index i = 0; i < m.correlations.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < m.correlations.cols(); ++j) row.push_back(m.correlations(i, j));
      corr.push_back(std::move(row));
    }
    report["factor_variance"] = m.factor_variance;
    report["variances"] = m.variances;
    report["correlations"] = std::move(corr);
    try {
      const auto r = check_restrictions(p, o.tol);
      report["weak"] = r.weak;
      report["strong"] = r.strong;
      out << "weak: " << (r.weak ? "true" : "false") << "\nstrong: " << (r.strong ? "true" : "false")
          << '\n';
    } catch (const Error& e) {
      b.warn(std::string("restriction check skipped: ") + e.what());
    }
    moments = moments_from_matrix(m.covariances);
  }
  if (!o.panel.empty()) {
    const auto lp = load_panel(b, o.panel);
    moments = sample_moments(lp.panel);
    ids = lp.panel.ids();
  } else if (!o.cov.empty()) {
    const auto text = slurp(o.cov);
    b.input(o.cov, text);
    std::istringstream in(text);
    moments = moments_from_matrix(with_path(o.cov, [&] { return read_matrix_csv(in); }));
  }
  if (!moments) throw Error(Errc::schema, "factor needs --loadings/--idio, --panel or --cov");

  if (f.json && !report.empty()) b.write("implied.json", report.dump(2) + '\n');
  try {
    const auto grid = deviation_grid(*moments, ids);
    if (f.csv) b.write("grid.csv", to_text(write_grid_csv, grid));
    if (f.svg) {
      SvgStyle style;
      style.title = "Deviation from class median";
      b.write("grid.svg", render_svg(grid, style));
    }
  } catch (const Error& e) {
    b.warn(std::string("deviation grid skipped: ") + e.what());
  }
  return b.finish();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Crowd size signature plots and equicorrelation estimates", "crowdsig"};
  app.set_version_flag("--version", CROWDSIG_VERSION);
  app.set_config("--config", "", "INI file; [section] per command, flags win");
  app.require_subcommand(1);
  app.fallthrough();

  std::string out_dir = "out";
  std::vector<std::string> formats{"csv", "json"};
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--formats", formats, "csv,json,svg")->delimiter(',')->capture_default_str();

  IngestOptions ingest;
  auto* c_ingest = app.add_subcommand("ingest", "level forecasts + realizations -> error panels");
  c_ingest->add_option("--levels", ingest.levels, "SPF-style level file")->required();
  c_ingest->add_option("--realizations", ingest.realizations, "realized growth (YEAR,QUARTER,VALUE)")->required();
  c_ingest->add_option("--variable", ingest.variable, "growth, inflation or a column prefix")->capture_default_str();
  c_ingest->add_option("--horizons", ingest.horizons)->delimiter(',')->capture_default_str();
  c_ingest->add_option("--level-count", ingest.level_count)->capture_default_str();
  c_ingest->add_option("--position-offset", ingest.position_offset,
                       "quarter of position 1 relative to the survey")->capture_default_str();
  c_ingest->add_option("--window", ingest.window, "also extract a balanced panel, e.g. 1990Q2-2019Q4");
  c_ingest->add_option("--realization-column", ingest.realization_column)->capture_default_str();

  SignatureOptions sig;
  auto* c_sig = app.add_subcommand("signature", "signature plots per panel");
  c_sig->add_option("--panel", sig.panels, "error panel CSV (repeatable)")->required();
  c_sig->add_option("--methods", sig.methods, "exact,monte_carlo,closed_form or all")->delimiter(',')->capture_default_str();
  c_sig->add_option("--b", sig.b, "Monte Carlo replications")->capture_default_str();
  c_sig->add_option("--seed", sig.seed)->capture_default_str();
  c_sig->add_option("--kmax", sig.k_max)->capture_default_str();
  c_sig->add_option("--group-mode", sig.group_mode, "per_period or fixed_group")->capture_default_str();
  c_sig->add_option("--membership", sig.membership, "fixed_group presence fraction")->capture_default_str();
  c_sig->add_flag("--distribution,!--no-distribution", sig.distribution, "boxplot summaries");
  c_sig->add_option("--dist-b", sig.distribution_b, "replications for the distribution plot")->capture_default_str();

  EstimateOptions est;
  auto* c_est = app.add_subcommand("estimate", "equicorrelation estimates per panel");
  c_est->add_option("--panel", est.panels, "error panel CSV (repeatable)")->required();
  c_est->add_option("--methods", est.methods, "numeric_profile,closed_form")->delimiter(',')->capture_default_str();
  c_est->add_option("--kmax", est.k_max)->capture_default_str();
  c_est->add_option("--fit-plot", est.fit_plot, "auto, exact, closed_form, monte_carlo")->capture_default_str();
  c_est->add_option("--b", est.b, "Monte Carlo replications for the fitted plot")->capture_default_str();
  c_est->add_option("--seed", est.seed)->capture_default_str();
  c_est->add_option("--bboot", est.b_boot, "bootstrap replicates (0 = none)")->capture_default_str();
  c_est->add_option("--boot-seed", est.boot_seed)->capture_default_str();
  c_est->add_option("--block", est.block, "bootstrap block length")->capture_default_str();
  c_est->add_option("--boot-b", est.boot_b, "Monte Carlo replications inside each bootstrap replicate")->capture_default_str();
  c_est->add_option("--grid", est.grid, "points in the profile and Q traces")->capture_default_str();

  SimulateOptions sim;
  auto* c_sim = app.add_subcommand("simulate", "synthetic equicorrelated panels");
  c_sim->add_option("--n", sim.n)->capture_default_str();
  c_sim->add_option("--t", sim.t)->capture_default_str();
  c_sim->add_option("--rho", sim.rho)->delimiter(',')->capture_default_str();
  c_sim->add_option("--sigma2", sim.sigma2)->capture_default_str();
  c_sim->add_option("--seed", sim.seed)->capture_default_str();
  c_sim->add_option("--kmax", sim.k_max)->capture_default_str();
  c_sim->add_flag("--model-curves", sim.model_curves, "theoretical ratio curves per rho");
  c_sim->add_flag("--triple", sim.triple, "Monte Carlo min/avg/max on each panel");
  c_sim->add_option("--b", sim.b)->capture_default_str();
  c_sim->add_option("--group-mode", sim.group_mode)->capture_default_str();

  WeightsOptions wopt;
  auto* c_w = app.add_subcommand("weights", "optimal combining weights");
  c_w->add_option("--cov", wopt.cov, "covariance matrix CSV");
  c_w->add_option("--sd", wopt.sd, "standard deviations (weak equicorrelation)")->delimiter(',');
  c_w->add_option("--rho", wopt.rho);

  FactorOptions fopt;
  auto* c_f = app.add_subcommand("factor", "implied moments, restrictions, deviation grid");
  c_f->add_option("--loadings", fopt.loadings)->delimiter(',');
  c_f->add_option("--phi", fopt.phi)->capture_default_str();
  c_f->add_option("--shock-var", fopt.shock_variance)->capture_default_str();
  c_f->add_option("--idio", fopt.idio, "idiosyncratic variances")->delimiter(',');
  c_f->add_option("--tol", fopt.tol)->capture_default_str();
  c_f->add_option("--panel", fopt.panel, "grid from sample moments of an error panel");
  c_f->add_option("--cov", fopt.cov, "grid from a covariance matrix CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    const Formats fm = parse_formats(formats);
    auto* sub = app.get_subcommands().front();
    Bundle bundle(sub->get_name(), out_dir, err);

    // Resolved options, minus the output location, key the manifest hash.
    json cfg = json::object();
    for (const auto* opt : sub->get_options()) {
      if (opt->get_name() == "--help" || opt->count() == 0) continue;
      cfg[opt->get_name()] = opt->results();
    }
    cfg["--formats"] = formats;
    bundle.config(cfg);

    const std::string& name = sub->get_name();
    if (name == "ingest") return cmd_ingest(ingest, bundle, fm);
    if (name == "signature") return cmd_signature(sig, bundle, fm);
    if (name == "estimate") return cmd_estimate(est, bundle, fm);
    if (name == "simulate") return cmd_simulate(sim, bundle, fm);
    if (name == "weights") return cmd_weights(wopt, bundle, fm, out);
    if (name == "factor") return cmd_factor(fopt, bundle, fm, out);
    return kInvalid;
  } catch (const Error& e) {
    err << "error [" << errc_name(e.code()) << "]: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  }
}

}  // namespace crowdsig::cli
