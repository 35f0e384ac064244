#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "errors.hpp"
#include "expanded.hpp"
#include "generator.hpp"
#include "grid.hpp"

namespace tclcoord {

/**
 * @brief SplitMix64 generator, one per TCL.
 *
 * Satisfies UniformRandomBitGenerator. Streams are keyed by (master seed, TCL
 * index) so results do not depend on how TCLs are partitioned across workers.
 */
class RngStream
{
public:
  using result_type = std::uint64_t;

  RngStream() = default;
  RngStream(std::uint64_t seed, std::uint64_t index) : state_(mix(seed ^ mix(index + 0x632be59bd9b4e019ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()()
  {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal()
  {
    std::normal_distribution<double> dist;
    return dist(*this);
  }

private:
  static std::uint64_t mix(std::uint64_t z)
  {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_{0};
};

enum class NoiseModel { ode, sde };

/**
 * @brief What drives the temperature during the step in which a switch is decided.
 *
 * immediate: the new mode.
 * latched: grid-support switches keep the old mode; switches forced at the
 *   deadband edge use the new mode.
 * model: as the transition factors prescribe; grid-support switches keep the
 *   old mode and forced switches hold the temperature for that step.
 */
enum class SwitchTiming { immediate, latched, model };

inline std::string to_string(SwitchTiming t)
{
  return t == SwitchTiming::immediate ? "immediate" : t == SwitchTiming::model ? "model" : "latched";
}

inline std::optional<SwitchTiming> parse_switch_timing(const std::string & s)
{
  if (s == "immediate") { return SwitchTiming::immediate; }
  if (s == "latched") { return SwitchTiming::latched; }
  if (s == "model") { return SwitchTiming::model; }
  return std::nullopt;
}

struct FleetConfig
{
  GridSpec grid;
  TclParams params;
  int tau{5};
  double dt_min{1.0};
  NoiseModel noise{NoiseModel::ode};
  SwitchTiming timing{SwitchTiming::latched};
  int substeps{1};
  /// If non-negative, initial temperatures are kept within this distance of the
  /// deadband (the reach of one step of drift); bins are otherwise sampled whole.
  double init_margin{-1};
};

struct TclState
{
  double theta{0};
  Mode mode{Mode::off};
  int lockout{0};
};

/// Per-TCL history needed by the audit.
struct TclRecord
{
  std::vector<int> switches;  ///< decision steps; an initial lockout l adds a switch at step 1-l
  double theta_min{std::numeric_limits<double>::infinity()};
  double theta_max{-std::numeric_limits<double>::infinity()};
};

inline int expanded_index(const TclState & s, const GridSpec & g, int tau)
{
  return ExpandedLayout{g.N, tau}.index(s.mode, bin_temperature(s.theta, s.mode, g), s.lockout);
}

class Fleet
{
public:
  /// Samples (mode, bin, lockout) i.i.d. from nu_hat and the temperature uniformly within the bin.
  Fleet(FleetConfig cfg, long n_tcl, const Vector & nu_hat, std::uint64_t seed)
      : cfg_(std::move(cfg)), states_(n_tcl), streams_(n_tcl), records_(n_tcl)
  {
    const ExpandedLayout X{cfg_.grid.N, cfg_.tau};
    if (nu_hat.size() != X.size()) { throw DimensionMismatch("fleet: nu_hat has the wrong length"); }
    if (n_tcl < 1) { throw InvalidParameter("fleet: need at least one TCL"); }
    if (cfg_.substeps < 1) { throw InvalidParameter("fleet: substeps must be positive"); }
    std::vector<double> cdf(X.size());
    double acc = 0;
    for (int s = 0; s < X.size(); ++s) { cdf[s] = acc += std::max(0.0, nu_hat(s)); }
    for (long i = 0; i < n_tcl; ++i) {
      streams_[i] = RngStream(seed, static_cast<std::uint64_t>(i));
      const double u = streams_[i].uniform() * acc;
      const int s = std::min<int>(X.size() - 1, std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      TclState & st = states_[i];
      st.mode = s >= X.block() ? Mode::on : Mode::off;
      const int r = s % X.block();
      st.lockout = r / cfg_.grid.N;
      const int bin = r % cfg_.grid.N + 1;
      double lo = cfg_.grid.left_edge(st.mode, bin);
      double hi = lo + cfg_.grid.delta_lambda;
      if (cfg_.init_margin >= 0) {
        const double band_lo = cfg_.grid.lambda_min - cfg_.init_margin;
        const double band_hi = cfg_.grid.lambda_max + cfg_.init_margin;
        lo = std::clamp(lo, band_lo, band_hi);
        hi = std::clamp(hi, band_lo, band_hi);
      }
      st.theta = lo + streams_[i].uniform() * (hi - lo);
      if (st.lockout > 0) { records_[i].switches.push_back(1 - st.lockout); }
      observe(i);
    }
  }

  /// One decision-then-integrate step under policy kappa and ambient theta_a.
  void step(const PolicyPair & kappa, double theta_a)
  {
    validate(kappa, cfg_.grid);
    const GridSpec & g = cfg_.grid;
    const double h = minutes_to_hours(cfg_.dt_min) / cfg_.substeps;
    const double noise_scale = std::sqrt(cfg_.params.sigma2 * h);
    for (std::size_t i = 0; i < states_.size(); ++i) {
      TclState & s = states_[i];
      RngStream & rng = streams_[i];
      const int bin = bin_temperature(s.theta, s.mode, g);
      const double p = s.lockout == 0 ? switch_probability(kappa, g, s.mode, bin)
                                      : thermostat_probability(g, s.mode, bin);
      const bool flip = p >= 1.0 || (p > 0.0 && rng.uniform() < p);
      Mode drive = s.mode;
      bool hold = false;
      if (flip) {
        const Mode next = s.mode == Mode::on ? Mode::off : Mode::on;
        const bool forced = thermostat_probability(g, s.mode, bin) == 1.0;
        if (cfg_.timing == SwitchTiming::immediate || (forced && cfg_.timing == SwitchTiming::latched)) {
          drive = next;
        }
        hold = forced && cfg_.timing == SwitchTiming::model;
        s.mode = next;
        s.lockout = 1;
        records_[i].switches.push_back(k_);
      } else if (s.lockout > 0) {
        s.lockout = s.lockout < cfg_.tau ? s.lockout + 1 : 0;
      }
      for (int sub = 0; sub < cfg_.substeps && !hold; ++sub) {
        s.theta += drift(s.theta, drive, theta_a, cfg_.params) * h;
        if (cfg_.noise == NoiseModel::sde) { s.theta += noise_scale * rng.normal(); }
      }
      observe(i);
    }
    ++k_;
  }

  int k() const { return k_; }
  long size() const { return static_cast<long>(states_.size()); }
  const std::vector<TclState> & states() const { return states_; }
  const std::vector<TclRecord> & records() const { return records_; }
  const FleetConfig & config() const { return cfg_; }

  /// Aggregate power P0 * (number of TCLs on) [kW].
  double power() const
  {
    long on = 0;
    for (const auto & s : states_) { on += s.mode == Mode::on; }
    return cfg_.params.P0 * static_cast<double>(on);
  }

  /// Empirical distribution over the expanded state space.
  Vector histogram() const
  {
    const ExpandedLayout X{cfg_.grid.N, cfg_.tau};
    Vector h = Vector::Zero(X.size());
    for (const auto & s : states_) { h(expanded_index(s, cfg_.grid, cfg_.tau)) += 1.0; }
    return h / static_cast<double>(states_.size());
  }

private:
  void observe(std::size_t i)
  {
    records_[i].theta_min = std::min(records_[i].theta_min, states_[i].theta);
    records_[i].theta_max = std::max(records_[i].theta_max, states_[i].theta);
  }

  FleetConfig cfg_;
  std::vector<TclState> states_;
  std::vector<RngStream> streams_;
  std::vector<TclRecord> records_;
  int k_{0};
};

inline double total_variation(const Vector & a, const Vector & b)
{
  if (a.size() != b.size()) { throw DimensionMismatch("total_variation: length mismatch"); }
  return 0.5 * (a - b).cwiseAbs().sum();
}

/// Aggregate series of one run plus the per-TCL records.
struct FleetTrace
{
  std::vector<double> power;   ///< y_k [kW], k = 0..T-1
  std::vector<double> tv;      ///< TV(h_k, nu_k) when model marginals were supplied
  std::vector<TclRecord> records;
  std::vector<TclState> final_states;
};

/**
 * @brief Run a fresh fleet through a policy schedule.
 *
 * Snapshot k is taken before the decision of step k, so power[k] and tv[k]
 * line up with the planned marginal nu_k.
 */
inline FleetTrace simulate(const FleetConfig & cfg, long n_tcl, const Vector & nu_hat, std::uint64_t seed,
                           const std::vector<PolicyPair> & policies, const std::vector<double> & theta_a,
                           const std::vector<Vector> * marginals = nullptr)
{
  if (policies.size() != theta_a.size()) { throw DimensionMismatch("simulate: schedule and ambient lengths differ"); }
  if (marginals && marginals->size() < policies.size()) { throw DimensionMismatch("simulate: too few marginals"); }
  Fleet fleet(cfg, n_tcl, nu_hat, seed);
  FleetTrace trace;
  for (std::size_t k = 0; k < policies.size(); ++k) {
    trace.power.push_back(fleet.power());
    if (marginals) { trace.tv.push_back(total_variation(fleet.histogram(), (*marginals)[k])); }
    fleet.step(policies[k], theta_a[k]);
  }
  trace.records = fleet.records();
  trace.final_states = fleet.states();
  return trace;
}

/// Largest |drift| over the deadband for both modes and the given ambient range [degC/h].
inline double max_deadband_drift(const GridSpec & g, const TclParams & p, double ambient_lo, double ambient_hi)
{
  double worst = 0;
  for (double theta : {g.lambda_min, g.lambda_max}) {
    for (double ta : {ambient_lo, ambient_hi}) {
      for (Mode mode : {Mode::off, Mode::on}) { worst = std::max(worst, std::abs(drift(theta, mode, ta, p))); }
    }
  }
  return worst;
}

struct AuditReport
{
  long cycling_violations{0};   ///< consecutive switches closer than tau steps
  int min_gap_steps{std::numeric_limits<int>::max()};
  long switches{0};
  double max_excursion{0};      ///< [degC] beyond [lambda_min, lambda_max]
  double excursion_p999{0};
  double excursion_bound{0};
  long excursion_violations{0}; ///< TCLs whose excursion exceeds the bound
  double rmse{0};               ///< [kW]
  double rmse_ratio{0};         ///< rmse / P_agg
  double mean_tv{0};
  double max_tv{0};
};

inline double percentile(std::vector<double> v, double q)
{
  if (v.empty()) { return 0; }
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/**
 * @brief Quality-of-service and tracking audit.
 *
 * reference may be empty, in which case no tracking error is computed.
 * excursion_bound is the allowed distance outside the deadband [degC]; excursions are
 * compared with a 1e-9 degC allowance for rounding in lambda -/+ bound.
 */
inline AuditReport audit(const FleetTrace & trace, const std::vector<double> & reference, const GridSpec & g,
                         int tau, double P_agg, double excursion_bound)
{
  AuditReport rep;
  rep.excursion_bound = excursion_bound;
  std::vector<double> excursions;
  excursions.reserve(trace.records.size());
  for (const auto & rec : trace.records) {
    for (std::size_t i = 1; i < rec.switches.size(); ++i) {
      const int gap = rec.switches[i] - rec.switches[i - 1];
      rep.min_gap_steps = std::min(rep.min_gap_steps, gap);
      if (gap < tau) { ++rep.cycling_violations; }
    }
    rep.switches += static_cast<long>(rec.switches.size());
    const double e = std::max({0.0, rec.theta_max - g.lambda_max, g.lambda_min - rec.theta_min});
    excursions.push_back(e);
    rep.max_excursion = std::max(rep.max_excursion, e);
    if (e > excursion_bound + 1e-9) { ++rep.excursion_violations; }
  }
  rep.excursion_p999 = percentile(excursions, 0.999);

  if (!reference.empty()) {
    const std::size_t n = std::min(reference.size(), trace.power.size());
    double sq = 0;
    for (std::size_t k = 0; k < n; ++k) { sq += (trace.power[k] - reference[k]) * (trace.power[k] - reference[k]); }
    rep.rmse = n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
    rep.rmse_ratio = rep.rmse / P_agg;
  }
  if (!trace.tv.empty()) {
    double s = 0;
    for (double v : trace.tv) {
      s += v;
      rep.max_tv = std::max(rep.max_tv, v);
    }
    rep.mean_tv = s / static_cast<double>(trace.tv.size());
  }
  return rep;
}

}  // namespace tclcoord
