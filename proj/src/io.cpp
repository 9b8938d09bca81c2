#include "crowdsig/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "crowdsig/error.hpp"
#include "text.hpp"

namespace crowdsig {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

std::vector<std::string> read_header(std::istream& in, const std::string& what) {
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::schema, what + ": empty input");
  return detail::split_fields(line, ',');
}

std::size_t column(const std::vector<std::string>& header, const std::string& name,
                   const std::string& what) {
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == name) return c;
  throw Error(Errc::schema, what + ": missing column '" + name + "'");
}

std::optional<std::size_t> optional_column(const std::vector<std::string>& header,
                                           const std::string& name) {
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == name) return c;
  return std::nullopt;
}

std::optional<double> optional_field(const std::vector<std::string>& f,
                                     std::optional<std::size_t> c) {
  if (!c || *c >= f.size()) return std::nullopt;
  return detail::parse_number(f[*c]);
}

}  // namespace

void write_panel_csv(std::ostream& out, const ErrorPanel& panel) {
  out << "period,forecaster_id,error\n";
  for (std::size_t t = 0; t < panel.periods(); ++t)
    for (std::size_t i = 0; i < panel.forecasters(); ++i)
      if (panel.present(i, t))
        out << panel.period_ids()[t].str() << ',' << panel.ids()[i] << ','
            << format_double(panel.value(i, t)) << '\n';
}

nlohmann::json panel_metadata(const ErrorPanel& panel, const std::string& units) {
  nlohmann::json periods = nlohmann::json::array();
  for (const auto& q : panel.period_ids()) periods.push_back(q.str());
  return {{"horizon", panel.horizon()},
          {"variable", panel.variable()},
          {"units", units},
          {"forecasters", panel.forecasters()},
          {"periods_count", panel.periods()},
          {"balanced", panel.is_balanced()},
          {"forecaster_ids", panel.ids()},
          {"periods", periods}};
}

ErrorPanel read_panel_csv(std::istream& in, const std::optional<nlohmann::json>& metadata) {
  const auto header = read_header(in, "panel file");
  const auto pc = column(header, "period", "panel file");
  const auto ic = column(header, "forecaster_id", "panel file");
  const auto ec = column(header, "error", "panel file");

  std::map<std::pair<Quarter, int>, double> cells;
  std::set<Quarter> period_set;
  std::set<int> id_set;
  std::string line;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_fields(line, ',');
    if (f.size() <= std::max({pc, ic, ec}))
      throw Error(Errc::parse, "panel file row " + std::to_string(row) + ": too few fields");
    const auto q = Quarter::parse(f[pc]);
    const auto id = detail::parse_integer(f[ic]);
    const auto v = detail::parse_number(f[ec]);
    if (!id) throw Error(Errc::parse, "panel file row " + std::to_string(row) + ": bad id");
    if (!v) continue;
    if (!cells.emplace(std::make_pair(q, static_cast<int>(*id)), *v).second)
      throw Error(Errc::duplicate_key, "panel file row " + std::to_string(row) +
                                           ": duplicate (period, forecaster)");
    period_set.insert(q);
    id_set.insert(static_cast<int>(*id));
  }

  std::vector<int> ids(id_set.begin(), id_set.end());
  std::vector<Quarter> periods(period_set.begin(), period_set.end());
  int horizon = 0;
  std::string variable;
  if (metadata) {
    if (metadata->contains("forecaster_ids"))
      ids = (*metadata)["forecaster_ids"].get<std::vector<int>>();
    if (metadata->contains("periods")) {
      periods.clear();
      for (const auto& p : (*metadata)["periods"]) periods.push_back(Quarter::parse(p.get<std::string>()));
    }
    horizon = metadata->value("horizon", 0);
    variable = metadata->value("variable", std::string{});
  }

  std::unordered_map<int, std::size_t> row_of;
  for (std::size_t i = 0; i < ids.size(); ++i) row_of[ids[i]] = i;
  std::map<Quarter, std::size_t> col_of;
  for (std::size_t j = 0; j < periods.size(); ++j) col_of[periods[j]] = j;
  const std::size_t t = periods.size();
  std::vector<double> values(ids.size() * t, 0.0);
  std::vector<std::uint8_t> mask(ids.size() * t, 0);
  for (const auto& [key, v] : cells) {
    const auto r = row_of.find(key.second);
    const auto c = col_of.find(key.first);
    if (r == row_of.end() || c == col_of.end())
      throw Error(Errc::schema, "panel cell outside the metadata's ids/periods");
    values[r->second * t + c->second] = v;
    mask[r->second * t + c->second] = 1;
  }
  return ErrorPanel(std::move(ids), std::move(periods), std::move(values), std::move(mask),
                    horizon, std::move(variable));
}

void write_plot_csv(std::ostream& out, const SignaturePlot& plot) {
  out << "k,value,min,max,replications,excluded\n";
  for (const auto& p : plot.points) {
    out << p.k << ',' << format_double(p.value) << ',' << opt(p.min) << ',' << opt(p.max)
        << ',';
    if (p.replications) out << *p.replications;
    out << ',' << p.excluded << '\n';
  }
}

nlohmann::json plot_json(const SignaturePlot& plot) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : plot.points) {
    nlohmann::json j{{"k", p.k}, {"value", p.value}};
    if (p.min) j["min"] = *p.min;
    if (p.max) j["max"] = *p.max;
    if (p.replications) j["replications"] = *p.replications;
    if (p.excluded) j["excluded"] = p.excluded;
    points.push_back(std::move(j));
  }
  return {{"kind", std::string(to_string(plot.kind))},
          {"method", std::string(to_string(plot.method))},
          {"approximate", plot.approximate},
          {"label", plot.label},
          {"points", std::move(points)}};
}

SignaturePlot read_plot_csv(std::istream& in, PlotKind kind, PlotMethod method) {
  const auto header = read_header(in, "plot file");
  const auto kc = column(header, "k", "plot file");
  const auto vc = column(header, "value", "plot file");
  const auto lo = optional_column(header, "min");
  const auto hi = optional_column(header, "max");
  const auto rc = optional_column(header, "replications");
  const auto xc = optional_column(header, "excluded");
  SignaturePlot plot{kind, method, {}, false, {}};
  std::string line;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_fields(line, ',');
    if (f.size() <= std::max(kc, vc)) throw Error(Errc::parse, "plot file: short row '" + line + "'");
    const auto k = detail::parse_integer(f[kc]);
    const auto v = detail::parse_number(f[vc]);
    if (!k || !v) throw Error(Errc::parse, "plot file: bad row '" + line + "'");
    SignaturePoint p{static_cast<int>(*k), *v};
    p.min = optional_field(f, lo);
    p.max = optional_field(f, hi);
    if (const auto r = optional_field(f, rc)) p.replications = static_cast<std::size_t>(*r);
    if (const auto x = optional_field(f, xc)) p.excluded = static_cast<std::size_t>(*x);
    plot.points.push_back(p);
  }
  plot.validate();
  return plot;
}

void write_distribution_csv(std::ostream& out, const DistributionPlot& plot) {
  out << "k,q1,median,q3,lo,hi,count,outliers\n";
  for (const auto& b : plot.boxes) {
    out << b.k << ',' << format_double(b.q1) << ',' << format_double(b.median) << ','
        << format_double(b.q3) << ',' << format_double(b.lower_whisker) << ','
        << format_double(b.upper_whisker) << ',' << b.count << ',';
    for (std::size_t i = 0; i < b.outliers.size(); ++i)
      out << (i ? ";" : "") << format_double(b.outliers[i]);
    out << '\n';
  }
}

nlohmann::json distribution_json(const DistributionPlot& plot) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& b : plot.boxes)
    boxes.push_back({{"k", b.k},
                     {"q1", b.q1},
                     {"median", b.median},
                     {"q3", b.q3},
                     {"lo", b.lower_whisker},
                     {"hi", b.upper_whisker},
                     {"count", b.count},
                     {"n_outliers", b.outliers.size()}});
  return {{"scale", plot.scale}, {"label", plot.label}, {"boxes", std::move(boxes)}};
}

nlohmann::json estimate_json(const MatchEstimate& e) {
  nlohmann::json j{{"rho", e.rho},
                   {"sigma2", e.sigma2},
                   {"q", e.q},
                   {"method", std::string(to_string(e.method))},
                   {"valid", e.valid},
                   {"at_boundary", e.at_boundary},
                   {"n", e.n},
                   {"se_rho", nullptr},
                   {"se_sigma2", nullptr},
                   {"n_invalid_replicates", e.invalid_replicates}};
  if (e.se_rho) j["se_rho"] = *e.se_rho;
  if (e.se_sigma2) j["se_sigma2"] = *e.se_sigma2;
  return j;
}

void write_grid_csv(std::ostream& out, const DeviationGrid& grid) {
  out << "row_id,col_id,value,deviation_pct,bin\n";
  for (const auto& c : grid.cells) {
    const auto label = [&](std::size_t i) {
      return grid.ids.empty() ? static_cast<int>(i + 1) : grid.ids[i];
    };
    out << label(c.row) << ',' << label(c.col) << ',' << format_double(c.value) << ','
        << format_double(c.deviation_pct) << ',' << to_string(c.bin) << '\n';
  }
}

void write_participation_csv(std::ostream& out, const PanelSummary& s) {
  out << "period,respondents\n";
  for (std::size_t j = 0; j < s.periods.size(); ++j)
    out << s.periods[j].str() << ',' << s.respondents[j] << '\n';
}

nlohmann::json participation_json(const PanelSummary& s) {
  return {{"periods", s.periods.size()},
          {"forecasters", s.tenure.size()},
          {"tenure_mean", s.tenure_mean},
          {"tenure_min", s.tenure_min},
          {"tenure_max", s.tenure_max},
          {"max_respondents",
           s.respondents.empty() ? 0 : *std::max_element(s.respondents.begin(), s.respondents.end())}};
}

Eigen::MatrixXd read_matrix_csv(std::istream& in, char delimiter) {
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line, delimiter);
    std::vector<double> row;
    bool numeric = true;
    for (const auto& f : fields) {
      const auto v = detail::parse_number(f);
      if (!v) {
        numeric = false;
        break;
      }
      row.push_back(*v);
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw Error(Errc::parse, "matrix file: non-numeric row '" + line + "'");
    }
    first = false;
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (n == 0) throw Error(Errc::schema, "matrix file is empty");
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != n)
      throw Error(Errc::schema, "matrix file is not square");
    for (Eigen::Index j = 0; j < n; ++j)
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

CovarianceSummary moments_from_matrix(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0)
    throw Error(Errc::schema, "covariance matrix must be square and nonempty");
  CovarianceSummary s;
  s.covariances = 0.5 * (sigma + sigma.transpose());
  for (Eigen::Index i = 0; i < sigma.rows(); ++i) {
    s.variances.push_back(s.covariances(i, i));
    s.variance_counts.push_back(1);
  }
  s.pair_counts.setOnes(sigma.rows(), sigma.cols());
  return s;
}

}  // namespace crowdsig
