#include "riskssp/risk.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "riskssp/rng.hpp"

namespace riskssp {

namespace {

constexpr double kDistTol = 1e-12;
constexpr double kZetaFloor = 1e-8;
constexpr double kZetaCeil = 1e8;
constexpr int kCoarsePoints = 33;

// Essential supremum: largest value carrying positive probability.
double max_value(const Distribution& d) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (d.probs[i] > 0.0) m = std::max(m, d.values[i]);
  }
  return m;
}

}  // namespace

void validate_distribution(const Distribution& d) {
  if (d.values.size() != d.probs.size()) {
    throw std::invalid_argument("distribution: values and probs differ in length");
  }
  if (d.values.empty()) throw std::invalid_argument("distribution: empty support");
  double sum = 0.0;
  for (std::size_t i = 0; i < d.probs.size(); ++i) {
    if (!(d.probs[i] >= 0.0)) throw std::invalid_argument("distribution: negative probability");
    if (!std::isfinite(d.values[i])) throw std::invalid_argument("distribution: non-finite value");
    sum += d.probs[i];
  }
  if (std::abs(sum - 1.0) > kDistTol) {
    throw std::invalid_argument("distribution: probabilities do not sum to 1");
  }
}

void validate_risk_spec(const RiskSpec& spec) {
  if (spec.kind == RiskKind::Expectation) return;
  if (!(spec.epsilon > 0.0 && spec.epsilon <= 1.0)) {
    throw std::invalid_argument("epsilon out of range (0,1]");
  }
  if (spec.kind == RiskKind::EVaR) {
    if (!(spec.evar_bracket.zeta_min > 0.0 &&
          spec.evar_bracket.zeta_min < spec.evar_bracket.zeta_max)) {
      throw std::invalid_argument("EVaR bracket must satisfy 0 < zeta_min < zeta_max");
    }
    if (!(spec.tol > 0.0)) throw std::invalid_argument("EVaR tolerance must be positive");
  }
}

std::string to_string(RiskKind kind) {
  switch (kind) {
    case RiskKind::Expectation: return "expectation";
    case RiskKind::CVaR: return "cvar";
    case RiskKind::EVaR: return "evar";
  }
  return "unknown";
}

RiskSpec parse_risk_spec(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view kind = text.substr(0, colon);
  RiskSpec spec;
  if (kind == "expectation" || kind == "mean" || kind == "e") {
    if (colon != std::string_view::npos) {
      throw std::invalid_argument("expectation takes no epsilon: \"" + std::string(text) + "\"");
    }
    return spec;
  }
  if (kind == "cvar") {
    spec.kind = RiskKind::CVaR;
  } else if (kind == "evar") {
    spec.kind = RiskKind::EVaR;
  } else {
    throw std::invalid_argument("unknown risk measure \"" + std::string(kind) + "\"");
  }
  if (colon == std::string_view::npos) {
    throw std::invalid_argument("risk measure \"" + std::string(kind) +
                                "\" needs an epsilon, e.g. " + std::string(kind) + ":0.3");
  }
  const std::string_view num = text.substr(colon + 1);
  double eps = 0.0;
  auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), eps);
  if (ec != std::errc() || ptr != num.data() + num.size()) {
    throw std::invalid_argument("bad epsilon \"" + std::string(num) + "\"");
  }
  spec.epsilon = eps;
  validate_risk_spec(spec);
  return spec;
}

std::string risk_label(const RiskSpec& spec) {
  if (spec.kind == RiskKind::Expectation) return "expectation";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, spec.epsilon);
  return to_string(spec.kind) + ":" + std::string(buf, ptr);
}

double sigma_expectation(const Distribution& d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < d.values.size(); ++i) acc += d.probs[i] * d.values[i];
  return acc;
}

double sigma_cvar(const Distribution& d, double eps) {
  if (eps >= 1.0) return sigma_expectation(d);
  if (d.values.size() == 1) return d.values[0];

  std::vector<std::size_t> order(d.values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return d.values[a] > d.values[b]; });

  // Mass budget eps in probability units; q_i = take_i / eps.
  double acc = 0.0;
  double used = 0.0;
  for (std::size_t i : order) {
    const double take = std::min(d.probs[i], eps - used);
    if (take <= 0.0) break;
    acc += take * d.values[i];
    used += take;
  }
  return acc / eps;
}

CvarPrimal sigma_cvar_primal(const Distribution& d, double eps) {
  auto objective = [&](double zeta) {
    double tail = 0.0;
    for (std::size_t i = 0; i < d.values.size(); ++i) {
      tail += d.probs[i] * std::max(d.values[i] - zeta, 0.0);
    }
    return zeta + tail / eps;
  };
  std::vector<double> breakpoints(d.values.begin(), d.values.end());
  std::sort(breakpoints.begin(), breakpoints.end());
  breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());

  CvarPrimal best{objective(breakpoints.front()), breakpoints.front()};
  for (std::size_t i = 1; i < breakpoints.size(); ++i) {
    const double f = objective(breakpoints[i]);
    if (f < best.value) best = {f, breakpoints[i]};
  }
  return best;
}

EvarResult evaluate_evar(const Distribution& d, double eps, const EvarBracket& bracket,
                         double tol) {
  if (eps >= 1.0) return {sigma_expectation(d), 0.0, false};
  if (d.values.size() == 1) return {d.values[0], 0.0, false};

  const double vmax = max_value(d);
  double mass_at_max = 0.0;
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (d.values[i] == vmax) mass_at_max += d.probs[i];
  }
  // The eps-tail sits entirely on the maximum, so CVaR = max and the sandwich closes.
  if (mass_at_max >= eps) return {vmax, 0.0, false};

  const double log_eps = std::log(eps);
  // h(zeta) - vmax with the exponent shifted by vmax, as a function of u = log zeta.
  auto excess = [&](double u) {
    const double zeta = std::exp(u);
    double s = 0.0;
    for (std::size_t i = 0; i < d.values.size(); ++i) {
      s += d.probs[i] * std::exp(zeta * (d.values[i] - vmax));
    }
    return (std::log(s) - log_eps) / zeta;
  };

  double lo = std::log(std::max(bracket.zeta_min, kZetaFloor));
  double hi = std::log(std::min(bracket.zeta_max, kZetaCeil));
  const double floor_u = std::log(kZetaFloor);
  const double ceil_u = std::log(kZetaCeil);

  std::vector<double> grid(kCoarsePoints);
  std::vector<double> fgrid(kCoarsePoints);
  int best = 0;
  for (;;) {
    for (int j = 0; j < kCoarsePoints; ++j) {
      grid[j] = lo + (hi - lo) * j / (kCoarsePoints - 1);
      fgrid[j] = excess(grid[j]);
    }
    best = static_cast<int>(std::min_element(fgrid.begin(), fgrid.end()) - fgrid.begin());
    if (best == 0 && lo > floor_u + 1e-12) {
      lo = std::max(lo - std::log(10.0), floor_u);
    } else if (best == kCoarsePoints - 1 && hi < ceil_u - 1e-12) {
      hi = std::min(hi + std::log(10.0), ceil_u);
    } else {
      break;
    }
  }

  const double cvar = std::min(sigma_cvar(d, eps), vmax);
  auto clamp = [&](double v) { return std::clamp(v, cvar, vmax); };

  if (best == 0 || best == kCoarsePoints - 1) {
    return {clamp(vmax + fgrid[best]), std::exp(grid[best]), true};
  }

  // Golden-section search on [grid[best-1], grid[best+1]].
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = grid[best - 1];
  double b = grid[best + 1];
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = excess(x1);
  double f2 = excess(x2);
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = excess(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = excess(x2);
    }
  }
  double u_best = f1 <= f2 ? x1 : x2;
  double f_best = std::min(f1, f2);
  if (fgrid[best] < f_best) {
    f_best = fgrid[best];
    u_best = grid[best];
  }
  return {clamp(vmax + f_best), std::exp(u_best), false};
}

double sigma_evar(const Distribution& d, double eps, const EvarBracket& bracket, double tol) {
  return evaluate_evar(d, eps, bracket, tol).value;
}

double sigma_unchecked(const Distribution& d, const RiskSpec& spec) {
  switch (spec.kind) {
    case RiskKind::Expectation: return sigma_expectation(d);
    case RiskKind::CVaR: return sigma_cvar(d, spec.epsilon);
    case RiskKind::EVaR: return sigma_evar(d, spec.epsilon, spec.evar_bracket, spec.tol);
  }
  throw std::logic_error("unknown risk kind");
}

double sigma(const Distribution& d, const RiskSpec& spec) {
  validate_distribution(d);
  validate_risk_spec(spec);
  return sigma_unchecked(d, spec);
}

SigmaFn make_sigma(const RiskSpec& spec) {
  validate_risk_spec(spec);
  return [spec](const Distribution& d) { return sigma_unchecked(d, spec); };
}

std::string to_string(Axiom axiom) {
  switch (axiom) {
    case Axiom::Convexity: return "convexity";
    case Axiom::Monotonicity: return "monotonicity";
    case Axiom::TranslationalInvariance: return "translational-invariance";
    case Axiom::PositiveHomogeneity: return "positive-homogeneity";
  }
  return "unknown";
}

std::size_t PropertyReport::count(std::string_view property) const {
  for (const auto& [name, n] : per_property_) {
    if (name == property) return n;
  }
  return 0;
}

bool PropertyRecorder::check(const std::string& property, double lhs, double rhs, bool equality,
                             double rel, const std::function<Witness()>& make_witness) {
  ++report_.checks;
  const double slack = rel * std::max({1.0, std::abs(lhs), std::abs(rhs)});
  const bool pass = equality ? std::abs(lhs - rhs) <= slack : lhs <= rhs + slack;
  if (pass) return true;
  ++report_.violations;
  auto it = std::find_if(report_.per_property_.begin(), report_.per_property_.end(),
                         [&](const auto& e) { return e.first == property; });
  if (it == report_.per_property_.end()) {
    report_.per_property_.emplace_back(property, 1);
  } else {
    ++it->second;
  }
  if (report_.witnesses.size() < max_witnesses_) {
    Witness w = make_witness();
    w.property = property;
    w.lhs = lhs;
    w.rhs = rhs;
    report_.witnesses.push_back(std::move(w));
  }
  return false;
}

PropertyReport coherence_probe(const SigmaFn& sigma_fn, std::size_t trials,
                               std::uint64_t rng_seed) {
  constexpr double kRel = 1e-9;
  SplitMix64 rng(rng_seed);
  PropertyRecorder rec;

  for (std::size_t trial = 0; trial < trials; ++trial) {
    rec.add_trial();
    const std::size_t k = 1 + rng.below(8);
    std::vector<double> p(k), v(k), w(k);
    double total = 0.0;
    for (auto& x : p) total += (x = rng.uniform(0.01, 1.0));
    for (auto& x : p) x /= total;
    // Every fourth trial uses integer values so that ties occur.
    const bool ties = trial % 4 == 0;
    for (std::size_t i = 0; i < k; ++i) {
      v[i] = rng.uniform(-10.0, 10.0);
      w[i] = rng.uniform(-10.0, 10.0);
      if (ties) {
        v[i] = std::round(v[i] / 4.0);
        w[i] = std::round(w[i] / 4.0);
      }
    }
    auto eval = [&](const std::vector<double>& vals) { return sigma_fn({vals, p}); };
    const double sv = eval(v);

    // Convexity.
    const double lambda = rng.uniform(0.01, 0.99);
    std::vector<double> mix(k);
    for (std::size_t i = 0; i < k; ++i) mix[i] = lambda * v[i] + (1.0 - lambda) * w[i];
    rec.check(to_string(Axiom::Convexity), eval(mix), lambda * sv + (1.0 - lambda) * eval(w),
              false, kRel, [&] { return Witness{{}, p, mix, w, 0, 0, "lambda"}; });

    // Monotonicity: v <= up elementwise.
    std::vector<double> up(v);
    for (auto& x : up) x += rng.bernoulli(0.3) ? 0.0 : rng.uniform(0.0, 5.0);
    rec.check(to_string(Axiom::Monotonicity), sv, eval(up), false, kRel,
              [&] { return Witness{{}, p, v, up, 0, 0, ""}; });

    // Translational invariance.
    const double kappa = rng.uniform(-10.0, 10.0);
    std::vector<double> shifted(v);
    for (auto& x : shifted) x += kappa;
    rec.check(to_string(Axiom::TranslationalInvariance), eval(shifted), sv + kappa, true, kRel,
              [&] { return Witness{{}, p, shifted, v, 0, 0, "kappa=" + std::to_string(kappa)}; });

    // Positive homogeneity, including beta = 0 every tenth trial.
    const double beta = trial % 10 == 0 ? 0.0 : rng.uniform(0.0, 10.0);
    std::vector<double> scaled(v);
    for (auto& x : scaled) x *= beta;
    rec.check(to_string(Axiom::PositiveHomogeneity), eval(scaled), beta * sv, true, kRel,
              [&] { return Witness{{}, p, scaled, v, 0, 0, "beta=" + std::to_string(beta)}; });
  }
  return rec.take();
}

}  // namespace riskssp
