#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "expanded.hpp"
#include "fleet.hpp"
#include "generator.hpp"
#include "grid.hpp"
#include "markov.hpp"
#include "qp_admm.hpp"
#include "synthesis.hpp"

namespace tclcoord {

using json = nlohmann::json;

/// Everything needed to plan and simulate one scenario, resolved from a JSON file.
struct ScenarioConfig
{
  TclParams params;
  double lambda_min{20};
  double lambda_max{22};
  int q{10};
  int m{2};
  long n_tcl{20000};
  int tau{5};
  double dt_min{1};
  int horizon{360};
  std::uint64_t seed{1};
  std::string weather_path;
  std::string r_ba_path;
  bool monotone{true};
  bool cycling_guard{true};
  NoiseModel noise{NoiseModel::ode};
  SwitchTiming timing{SwitchTiming::latched};
  int substeps{1};
  int max_iter{200000};
  double eps_abs{1e-6};
  double eps_rel{1e-6};

  GridSpec grid() const { return build_grid(lambda_min, lambda_max, q, m); }
  double P_agg() const { return aggregate_capacity(params, n_tcl); }
};

/// Shortest decimal text that parses back to the same double.
inline std::string format_exact(double v)
{
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string & text, const std::string & where)
{
  const char * first = text.data();
  const char * last = text.data() + text.size();
  while (first < last && (*first == ' ' || *first == '\t')) { ++first; }
  while (last > first && (last[-1] == ' ' || last[-1] == '\t' || last[-1] == '\r')) { --last; }
  double v = 0;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ConfigError(where + ": cannot parse number '" + text + "'");
  }
  return v;
}

inline std::vector<std::string> split(const std::string & line, char sep = ',')
{
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) { out.push_back(cell); }
  if (!line.empty() && line.back() == sep) { out.emplace_back(); }
  return out;
}

inline json to_json(const ScenarioConfig & c)
{
  return json{
      {"params",
       {{"R", c.params.R}, {"C", c.params.C}, {"P0", c.params.P0}, {"eta", c.params.eta},
        {"sigma2", c.params.sigma2}, {"lambda_set", c.params.lambda_set}}},
      {"grid", {{"lambda_min", c.lambda_min}, {"lambda_max", c.lambda_max}, {"q", c.q}, {"m", c.m}}},
      {"n_tcl", c.n_tcl},
      {"tau_steps", c.tau},
      {"dt_min", c.dt_min},
      {"horizon", c.horizon},
      {"seed", c.seed},
      {"weather", c.weather_path},
      {"r_ba", c.r_ba_path},
      {"monotone", c.monotone},
      {"cycling_guard", c.cycling_guard},
      {"noise", c.noise == NoiseModel::sde ? "sde" : "ode"},
      {"switch_timing", to_string(c.timing)},
      {"substeps", c.substeps},
      {"solver", {{"max_iter", c.max_iter}, {"eps_abs", c.eps_abs}, {"eps_rel", c.eps_rel}}},
  };
}

/// Parse a config object. Relative data paths are resolved against base_dir.
inline ScenarioConfig config_from_json(const json & j, const std::filesystem::path & base_dir = {})
{
  ScenarioConfig c;
  try {
    if (j.contains("params")) {
      const auto & p = j.at("params");
      c.params.R = p.value("R", c.params.R);
      c.params.C = p.value("C", c.params.C);
      c.params.P0 = p.value("P0", c.params.P0);
      c.params.eta = p.value("eta", c.params.eta);
      c.params.sigma2 = p.value("sigma2", c.params.sigma2);
      c.params.lambda_set = p.value("lambda_set", c.params.lambda_set);
    }
    if (j.contains("grid")) {
      const auto & g = j.at("grid");
      c.lambda_min = g.value("lambda_min", c.lambda_min);
      c.lambda_max = g.value("lambda_max", c.lambda_max);
      c.q = g.value("q", c.q);
      c.m = g.value("m", c.m);
    }
    c.n_tcl = j.value("n_tcl", c.n_tcl);
    c.dt_min = j.value("dt_min", c.dt_min);
    if (j.contains("tau_steps")) {
      c.tau = j.at("tau_steps").get<int>();
    } else if (j.contains("lockout_min")) {
      const double ratio = j.at("lockout_min").get<double>() / c.dt_min;
      if (std::abs(ratio - std::round(ratio)) > 1e-9) {
        throw ConfigError("config: lockout_min must be a whole number of steps");
      }
      c.tau = static_cast<int>(std::round(ratio));
    }
    c.horizon = j.value("horizon", c.horizon);
    c.seed = j.value("seed", c.seed);
    const auto resolve = [&](const std::string & key) -> std::string {
      if (!j.contains(key)) { return {}; }
      std::filesystem::path p = j.at(key).get<std::string>();
      if (p.is_relative() && !base_dir.empty()) { p = base_dir / p; }
      return p.lexically_normal().string();
    };
    c.weather_path = resolve("weather");
    c.r_ba_path = resolve("r_ba");
    c.monotone = j.value("monotone", c.monotone);
    c.cycling_guard = j.value("cycling_guard", c.cycling_guard);
    const std::string noise = j.value("noise", std::string("ode"));
    if (noise != "ode" && noise != "sde") { throw ConfigError("config: noise must be 'ode' or 'sde'"); }
    c.noise = noise == "sde" ? NoiseModel::sde : NoiseModel::ode;
    const std::string timing = j.value("switch_timing", std::string("latched"));
    const auto parsed = parse_switch_timing(timing);
    if (!parsed) { throw ConfigError("config: switch_timing must be 'latched', 'immediate' or 'model'"); }
    c.timing = *parsed;
    c.substeps = j.value("substeps", c.substeps);
    if (j.contains("solver")) {
      const auto & s = j.at("solver");
      c.max_iter = s.value("max_iter", c.max_iter);
      c.eps_abs = s.value("eps_abs", c.eps_abs);
      c.eps_rel = s.value("eps_rel", c.eps_rel);
    }
  } catch (const json::exception & e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline ScenarioConfig load_config(const std::string & path)
{
  std::ifstream in(path);
  if (!in) { throw ConfigError("config: cannot open " + path); }
  json j;
  try {
    in >> j;
  } catch (const json::exception & e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return config_from_json(j, std::filesystem::path(path).parent_path());
}

/// Minutes since 1970 for "YYYY-MM-DDTHH:MM[:SS]" (also "YYYY-MM-DD HH:MM"), or a bare number of minutes.
inline double parse_timestamp_minutes(const std::string & text)
{
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double sec = 0;
  char sep = 0;
  if (std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%lf", &y, &mo, &d, &sep, &h, &mi, &sec) >= 6 &&
      (sep == 'T' || sep == ' ')) {
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) { throw ConfigError("weather: invalid date '" + text + "'"); }
    const double days = std::chrono::sys_days{ymd}.time_since_epoch().count();
    return days * 1440.0 + h * 60.0 + mi + sec / 60.0;
  }
  return parse_double(text, "weather timestamp");
}

/// Data rows of a CSV file, skipping '#' comments and a non-numeric header row.
inline std::vector<std::vector<std::string>> read_csv_rows(const std::string & path, const std::string & what)
{
  std::ifstream in(path);
  if (!in) { throw ConfigError(what + ": cannot open '" + path + "'"); }
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') { line.pop_back(); }
    if (line.empty() || line[0] == '#') { continue; }
    auto cells = split(line);
    if (first) {
      first = false;
      double probe = 0;
      const auto & c0 = cells.empty() ? line : cells.back();
      if (std::from_chars(c0.data(), c0.data() + c0.size(), probe).ec != std::errc()) { continue; }
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

/// Ambient temperature at each planning step, linearly interpolated from (timestamp, degC) samples.
inline std::vector<double> load_weather(const std::string & path, double dt_min, int horizon)
{
  std::vector<std::pair<double, double>> samples;
  for (const auto & row : read_csv_rows(path, "weather")) {
    if (row.size() < 2) { throw ConfigError("weather: expected 'timestamp,degC' rows"); }
    samples.emplace_back(parse_timestamp_minutes(row[0]), parse_double(row[1], "weather"));
  }
  if (samples.empty()) { throw ConfigError("weather: no samples in '" + path + "'"); }
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].first > samples[i - 1].first)) { throw ConfigError("weather: timestamps must increase"); }
  }
  const double t0 = samples.front().first;
  const double t_end = t0 + (horizon - 1) * dt_min;
  if (samples.back().first < t_end - 1e-9) {
    std::ostringstream msg;
    msg << "weather: samples cover " << samples.back().first - t0 << " min but the horizon needs "
        << t_end - t0 << " min";
    throw ConfigError(msg.str());
  }
  std::vector<double> out(horizon);
  std::size_t i = 0;
  for (int k = 0; k < horizon; ++k) {
    const double t = t0 + k * dt_min;
    while (i + 2 < samples.size() && samples[i + 1].first <= t) { ++i; }
    const auto & [ta, va] = samples[i];
    const auto & [tb, vb] = samples.size() > 1 ? samples[i + 1] : samples[i];
    out[k] = tb > ta ? va + (vb - va) * (t - ta) / (tb - ta) : va;
  }
  return out;
}

/// BA target per step [kW] from (step, kW) rows. Values are taken as given.
inline std::vector<double> load_r_ba(const std::string & path, int horizon)
{
  std::vector<double> out(horizon, std::nan(""));
  for (const auto & row : read_csv_rows(path, "r_ba")) {
    if (row.size() < 2) { throw ConfigError("r_ba: expected 'step,kW' rows"); }
    const double k = parse_double(row[0], "r_ba step");
    if (k < 0 || k != std::floor(k)) { throw ConfigError("r_ba: step must be a non-negative integer"); }
    if (k < horizon) { out[static_cast<std::size_t>(k)] = parse_double(row[1], "r_ba"); }
  }
  for (int k = 0; k < horizon; ++k) {
    if (std::isnan(out[k])) {
      throw ConfigError("r_ba: no target for step " + std::to_string(k) + " of the horizon");
    }
  }
  return out;
}

/// Stationary marginal of the thermostat-only chain at ambient theta_a.
inline Vector thermostat_stationary(const GridSpec & g, const TclParams & p, int tau, double dt_min,
                                    double theta_a)
{
  const auto f = step_factors(g, p, theta_a, dt_min);
  return stationary_distribution(expand_policy(PolicyPair::zeros(g.N), g, tau), expanded_dynamics(f, tau));
}

/// Config plus the series it points to, checked against every module precondition.
struct Scenario
{
  ScenarioConfig config;
  GridSpec grid;
  std::vector<double> theta_a;
  std::vector<double> r_ba;
  Vector nu_hat;

  PlanProblem plan_problem() const
  {
    PlanProblem pr;
    pr.grid = grid;
    pr.params = config.params;
    pr.tau = config.tau;
    pr.dt_min = config.dt_min;
    pr.n_tcl = config.n_tcl;
    pr.r_ba = r_ba;
    pr.theta_a = theta_a;
    pr.nu_hat = nu_hat;
    pr.monotone = config.monotone;
    pr.cycling_guard = config.cycling_guard;
    return pr;
  }

  AdmmSettings solver_settings() const
  {
    AdmmSettings s;
    s.max_iter = config.max_iter;
    s.eps_abs = config.eps_abs;
    s.eps_rel = config.eps_rel;
    return s;
  }

  /// Largest one-step temperature change inside the deadband over the ambient series [degC].
  double step_reach() const
  {
    const auto [lo, hi] = std::minmax_element(theta_a.begin(), theta_a.end());
    return max_deadband_drift(grid, config.params, *lo, *hi) * minutes_to_hours(config.dt_min);
  }

  /// Allowed distance outside the deadband: one step of drift, plus a noise quantile under SDE.
  double excursion_bound() const
  {
    double b = step_reach();
    if (config.noise == NoiseModel::sde) {
      b += 4.0 * std::sqrt(config.params.sigma2 * minutes_to_hours(config.dt_min));
    }
    return b;
  }

  FleetConfig fleet_config() const
  {
    FleetConfig f;
    f.grid = grid;
    f.params = config.params;
    f.tau = config.tau;
    f.dt_min = config.dt_min;
    f.noise = config.noise;
    f.timing = config.timing;
    f.substeps = config.substeps;
    f.init_margin = max_deadband_drift(grid, config.params, theta_a.front(), theta_a.front()) *
                    minutes_to_hours(config.dt_min);
    return f;
  }
};

/// Validate every precondition before any computation runs. Throws ConfigError naming the first failure.
inline void check_config(const ScenarioConfig & c)
{
  const auto fail = [](const std::string & msg) { throw ConfigError(msg); };
  if (!(c.params.R > 0 && c.params.C > 0 && c.params.P0 > 0 && c.params.eta > 0)) {
    fail("params: R, C, P0 and eta must be positive");
  }
  if (!(c.params.sigma2 >= 0)) { fail("params: sigma2 must be non-negative"); }
  if (!(c.lambda_max > c.lambda_min)) { fail("grid: lambda_max must exceed lambda_min"); }
  if (c.q < 3) { fail("grid: q must be at least 3"); }
  if (c.m < 1) { fail("grid: m must be at least 1"); }
  if (c.tau < 1) { fail("tau_steps must be at least 1"); }
  if (!(c.dt_min > 0)) { fail("dt_min must be positive"); }
  if (c.horizon < 1) { fail("horizon must be at least 1"); }
  if (c.n_tcl < 1) { fail("n_tcl must be at least 1"); }
  if (c.substeps < 1) { fail("substeps must be at least 1"); }
  if (c.max_iter < 1 || !(c.eps_abs >= 0) || !(c.eps_rel >= 0)) { fail("solver settings out of range"); }
  const GridSpec g = c.grid();
  if (c.params.sigma2 > 0) {
    const double bound = 60.0 * g.delta_lambda * g.delta_lambda / c.params.sigma2;
    if (!(c.dt_min < bound)) {
      std::ostringstream msg;
      msg << "dt bound: dt = " << c.dt_min << " min must be < dl^2/sigma^2 = " << bound << " min";
      fail(msg.str());
    }
  }
}

inline Scenario load_scenario(const ScenarioConfig & c)
{
  check_config(c);
  Scenario s;
  s.config = c;
  s.grid = c.grid();
  if (c.weather_path.empty()) { throw ConfigError("config: 'weather' path is required"); }
  if (c.r_ba_path.empty()) { throw ConfigError("config: 'r_ba' path is required"); }
  s.theta_a = load_weather(c.weather_path, c.dt_min, c.horizon);
  s.r_ba = load_r_ba(c.r_ba_path, c.horizon);
  try {
    for (int k = 0; k < c.horizon; ++k) {
      const SparseMatrix A =
          build_rate_matrix(s.grid, c.params, s.theta_a[k], gamma_for_step(s.grid, c.params, c.dt_min));
      transition_matrix(A, c.dt_min);
    }
  } catch (const Error & e) {
    throw ConfigError(std::string("consistency: ") + e.what());
  }
  s.nu_hat = thermostat_stationary(s.grid, c.params, c.tau, c.dt_min, s.theta_a.front());
  return s;
}

inline std::string provenance_header(const ScenarioConfig & c) { return "# config: " + to_json(c).dump(); }

/// Config embedded in the first line of an output file.
inline ScenarioConfig read_provenance(const std::string & path)
{
  std::ifstream in(path);
  if (!in) { throw ConfigError("cannot open '" + path + "'"); }
  std::string line;
  std::getline(in, line);
  const std::string tag = "# config: ";
  if (line.rfind(tag, 0) != 0) { throw ConfigError("'" + path + "' has no config header"); }
  try {
    return config_from_json(json::parse(line.substr(tag.size())));
  } catch (const json::exception & e) {
    throw ConfigError("'" + path + "': bad config header: " + e.what());
  }
}

/// Planned schedule as stored on disk.
struct PlanFile
{
  ScenarioConfig config;
  std::vector<double> r_ba;
  std::vector<double> reference;
  std::vector<double> theta_a;
  std::vector<PolicyPair> policies;
};

/**
 * Plan CSV: provenance line, then header
 * k,r_ba_kw,r_kw,theta_a_c,kappa_on_1..kappa_on_N,kappa_off_1..kappa_off_N
 * with kappa_on_j the probability of switching on from off bin j and
 * kappa_off_j the probability of switching off from on bin j (fixed boundary
 * entries included).
 */
inline void write_plan(const std::string & path, const PlanFile & plan, const GridSpec & g)
{
  std::ofstream out(path);
  if (!out) { throw Error("cannot write '" + path + "'"); }
  out << provenance_header(plan.config) << "\n";
  out << "k,r_ba_kw,r_kw,theta_a_c";
  for (int j = 1; j <= g.N; ++j) { out << ",kappa_on_" << j; }
  for (int j = 1; j <= g.N; ++j) { out << ",kappa_off_" << j; }
  out << "\n";
  for (std::size_t k = 0; k < plan.policies.size(); ++k) {
    out << k << "," << format_exact(plan.r_ba[k]) << "," << format_exact(plan.reference[k]) << ","
        << format_exact(plan.theta_a[k]);
    for (int j = 1; j <= g.N; ++j) { out << "," << format_exact(switch_probability(plan.policies[k], g, Mode::off, j)); }
    for (int j = 1; j <= g.N; ++j) { out << "," << format_exact(switch_probability(plan.policies[k], g, Mode::on, j)); }
    out << "\n";
  }
}

inline PlanFile read_plan(const std::string & path)
{
  PlanFile plan;
  plan.config = read_provenance(path);
  const GridSpec g = plan.config.grid();
  for (const auto & row : read_csv_rows(path, "plan")) {
    if (static_cast<int>(row.size()) != 4 + 2 * g.N) { throw ConfigError("plan: wrong number of columns"); }
    plan.r_ba.push_back(parse_double(row[1], "plan"));
    plan.reference.push_back(parse_double(row[2], "plan"));
    plan.theta_a.push_back(parse_double(row[3], "plan"));
    PolicyPair p = PolicyPair::zeros(g.N);
    for (int j = 1; j <= g.N; ++j) {
      const double on = parse_double(row[3 + j], "plan");
      const double off = parse_double(row[3 + g.N + j], "plan");
      if (in_on_support(g, j)) {
        p.kappa_on(j - 1) = on;
      } else if (on != thermostat_probability(g, Mode::off, j)) {
        throw StructureViolation("plan: fixed kappa_on entry at off bin " + std::to_string(j) + " altered");
      }
      if (in_off_support(g, j)) {
        p.kappa_off(j - 1) = off;
      } else if (off != thermostat_probability(g, Mode::on, j)) {
        throw StructureViolation("plan: fixed kappa_off entry at on bin " + std::to_string(j) + " altered");
      }
    }
    validate(p, g);
    plan.policies.push_back(p);
  }
  return plan;
}

/// Bins whose probabilities are broadcast: kappa_on over off bins m+1..N-1, kappa_off over on bins 2..q.
inline std::pair<std::vector<int>, std::vector<int>> broadcast_bins(const GridSpec & g)
{
  std::vector<int> on_bins, off_bins;
  for (int j = g.m + 1; j <= g.N - 1; ++j) { on_bins.push_back(j); }
  for (int j = 2; j <= g.q; ++j) { off_bins.push_back(j); }
  return {on_bins, off_bins};
}

inline int broadcast_width(const GridSpec & g)
{
  const auto [a, b] = broadcast_bins(g);
  return static_cast<int>(a.size() + b.size());
}

/// Numbers sent at one step, in broadcast_bins order.
inline std::vector<double> broadcast_payload(const PolicyPair & p, const GridSpec & g)
{
  const auto [on_bins, off_bins] = broadcast_bins(g);
  std::vector<double> out;
  for (int j : on_bins) { out.push_back(p.kappa_on(j - 1)); }
  for (int j : off_bins) { out.push_back(in_off_support(g, j) ? p.kappa_off(j - 1) : 0.0); }
  return out;
}

/**
 * Broadcast CSV: provenance line, a '# fixed:' line listing the entries every
 * TCL holds locally, then header k,on_<bin>...,off_<bin>... and one row of
 * 2(q-1) numbers per step.
 */
inline void write_broadcast(const std::string & path, const ScenarioConfig & config,
                            const std::vector<PolicyPair> & schedule)
{
  const GridSpec g = config.grid();
  std::ofstream out(path);
  if (!out) { throw Error("cannot write '" + path + "'"); }
  out << provenance_header(config) << "\n";
  out << "# fixed: kappa_on(off " << g.N << ")=1; kappa_on(off 1.." << g.m << ")=0; kappa_off(on 1)=1; kappa_off(on "
      << g.q + 1 << ".." << g.N << ")=0\n";
  const auto [on_bins, off_bins] = broadcast_bins(g);
  out << "k";
  for (int j : on_bins) { out << ",on_" << j; }
  for (int j : off_bins) { out << ",off_" << j; }
  out << "\n";
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    out << k;
    for (double v : broadcast_payload(schedule[k], g)) { out << "," << format_exact(v); }
    out << "\n";
  }
}

inline std::vector<PolicyPair> read_broadcast(const std::string & path, const GridSpec & g)
{
  const auto [on_bins, off_bins] = broadcast_bins(g);
  std::vector<PolicyPair> schedule;
  for (const auto & row : read_csv_rows(path, "broadcast")) {
    if (row.size() != 1 + on_bins.size() + off_bins.size()) {
      throw ConfigError("broadcast: expected " + std::to_string(broadcast_width(g)) + " numbers per step");
    }
    PolicyPair p = PolicyPair::zeros(g.N);
    std::size_t c = 1;
    for (int j : on_bins) { p.kappa_on(j - 1) = parse_double(row[c++], "broadcast"); }
    for (int j : off_bins) { p.kappa_off(j - 1) = parse_double(row[c++], "broadcast"); }
    validate(p, g);
    schedule.push_back(p);
  }
  return schedule;
}

/// Piecewise-constant random schedule on the free entries, redrawn every `hold` steps.
inline std::vector<PolicyPair> random_schedule(const GridSpec & g, int tau, bool cycling_guard, int horizon,
                                               std::uint64_t seed, int hold, double kappa_max)
{
  const SwitchStructure st = switch_structure(g, tau, cycling_guard);
  RngStream rng(seed, 0xfeedULL);
  std::vector<PolicyPair> out;
  PolicyPair p = PolicyPair::zeros(g.N);
  for (int k = 0; k < horizon; ++k) {
    if (k % hold == 0) {
      for (int j = 1; j <= g.N; ++j) {
        p.kappa_on(j - 1) = st.free_on[j - 1] ? kappa_max * rng.uniform() : 0.0;
        p.kappa_off(j - 1) = st.free_off[j - 1] ? kappa_max * rng.uniform() : 0.0;
      }
    }
    out.push_back(p);
  }
  return out;
}

/// Model marginals nu_k obtained by propagating nu_hat under a schedule.
inline std::vector<Vector> propagate_schedule(const GridSpec & g, const TclParams & p, int tau, double dt_min,
                                              const Vector & nu_hat, const std::vector<PolicyPair> & schedule,
                                              const std::vector<double> & theta_a)
{
  std::vector<Vector> out;
  Vector nu = nu_hat;
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    out.push_back(nu);
    const auto f = step_factors(g, p, theta_a[k], dt_min);
    nu = step(nu, expand_policy(schedule[k], g, tau), expanded_dynamics(f, tau));
  }
  return out;
}

/// Mean-over-horizon TV between fleet histograms and model marginals, one entry per seed.
struct ModelValidation
{
  std::vector<std::uint64_t> seeds;
  std::vector<double> mean_tv;
  std::vector<double> max_tv;

  double average() const
  {
    double s = 0;
    for (double v : mean_tv) { s += v; }
    return mean_tv.empty() ? 0.0 : s / static_cast<double>(mean_tv.size());
  }
};

/**
 * @brief Drive fleets of the scenario size with a fixed random schedule and
 * compare their histograms against the propagated model marginals.
 *
 * Fleet seeds are config.seed, config.seed + 1, ... so runs at different fleet
 * sizes share their first TCLs.
 */
inline ModelValidation validate_model(const Scenario & s, int seeds, std::uint64_t schedule_seed, int hold = 30,
                                      double kappa_max = 0.2)
{
  const ScenarioConfig & c = s.config;
  const auto schedule = random_schedule(s.grid, c.tau, c.cycling_guard, c.horizon, schedule_seed, hold, kappa_max);
  const auto marginals = propagate_schedule(s.grid, c.params, c.tau, c.dt_min, s.nu_hat, schedule, s.theta_a);
  ModelValidation out;
  for (int r = 0; r < seeds; ++r) {
    const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(r);
    const FleetTrace trace = simulate(s.fleet_config(), c.n_tcl, s.nu_hat, seed, schedule, s.theta_a, &marginals);
    const AuditReport a = audit(trace, {}, s.grid, c.tau, c.P_agg(), s.excursion_bound());
    out.seeds.push_back(seed);
    out.mean_tv.push_back(a.mean_tv);
    out.max_tv.push_back(a.max_tv);
  }
  return out;
}

}  // namespace tclcoord
