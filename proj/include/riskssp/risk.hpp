#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace riskssp {

/// Next-stage risk values on the support of one transition row, and the
/// matching probabilities. A non-owning view.
struct Distribution {
  std::span<const double> values;
  std::span<const double> probs;
};

/// Throws std::invalid_argument unless lengths match, probs >= 0 and they sum
/// to one within 1e-12.
void validate_distribution(const Distribution& d);

enum class RiskKind { Expectation, CVaR, EVaR };

struct EvarBracket {
  double zeta_min = 1e-4;
  double zeta_max = 1e2;
};

/// One-step coherent risk measure selection.
struct RiskSpec {
  RiskKind kind = RiskKind::Expectation;
  double epsilon = 1.0;  ///< confidence level in (0, 1]; ignored for Expectation
  EvarBracket evar_bracket{};
  double tol = 1e-10;  ///< relative tolerance of the EVaR search on zeta

  static RiskSpec expectation() { return {}; }
  static RiskSpec cvar(double eps) { return {RiskKind::CVaR, eps}; }
  static RiskSpec evar(double eps) { return {RiskKind::EVaR, eps}; }
};

/// Throws std::invalid_argument("epsilon out of range (0,1]") and friends.
void validate_risk_spec(const RiskSpec& spec);

/// Parses "expectation", "cvar:0.3", "evar:0.7". Throws std::invalid_argument.
RiskSpec parse_risk_spec(std::string_view text);

/// Canonical "kind[:eps]" label, e.g. "cvar:0.3".
std::string risk_label(const RiskSpec& spec);
std::string to_string(RiskKind kind);

double sigma_expectation(const Distribution& d);

/// CVaR by its dual: sup of <q, v> over 0 <= q_i <= p_i / eps, sum q = 1,
/// solved greedily from the largest value down.
double sigma_cvar(const Distribution& d, double eps);

struct CvarPrimal {
  double value;
  double zeta;  ///< a minimizer of zeta + E[(v - zeta)_+] / eps
};

/// Rockafellar-Uryasev form evaluated at every breakpoint. Oracle for sigma_cvar.
CvarPrimal sigma_cvar_primal(const Distribution& d, double eps);

struct EvarResult {
  double value;
  double zeta;            ///< minimizer; 0 when resolved in closed form
  bool boundary_hit;      ///< search ended on the edge of the widest bracket
};

/**
 * EVaR_eps(v) = inf_{zeta > 0} (log E[exp(zeta v)] - log eps) / zeta.
 *
 * eps = 1 returns the expectation. When the mass at max(v) is at least eps
 * the infimum is max(v), reached as zeta -> infinity. Otherwise the objective
 * is minimized over log(zeta) by golden-section search on a bracket that is
 * widened by 10x per side (up to [1e-8, 1e8]) while the coarse minimum sits on
 * an edge. The result is clamped into [CVaR_eps(v), max(v)].
 */
EvarResult evaluate_evar(const Distribution& d, double eps, const EvarBracket& bracket = {},
                         double tol = 1e-10);

double sigma_evar(const Distribution& d, double eps, const EvarBracket& bracket = {},
                  double tol = 1e-10);

/// Dispatch on spec.kind. Validates the distribution.
double sigma(const Distribution& d, const RiskSpec& spec);

/// Same as sigma() without validating the distribution; for solver hot loops
/// whose rows were validated once up front.
double sigma_unchecked(const Distribution& d, const RiskSpec& spec);

using SigmaFn = std::function<double(const Distribution&)>;

SigmaFn make_sigma(const RiskSpec& spec);

enum class Axiom { Convexity, Monotonicity, TranslationalInvariance, PositiveHomogeneity };

std::string to_string(Axiom axiom);

/// A failed property check with the inputs that exposed it.
struct Witness {
  std::string property;
  std::vector<double> probs;
  std::vector<double> lhs_values;
  std::vector<double> rhs_values;
  double lhs = 0.0;
  double rhs = 0.0;
  std::string detail;
};

struct PropertyReport {
  std::size_t trials = 0;
  std::size_t checks = 0;
  std::size_t violations = 0;
  std::vector<Witness> witnesses;  ///< the first few violations

  bool ok() const { return violations == 0; }
  std::size_t count(std::string_view property) const;

 private:
  friend class PropertyRecorder;
  std::vector<std::pair<std::string, std::size_t>> per_property_;
};

/// Accumulates checks into a PropertyReport, keeping at most `max_witnesses`.
class PropertyRecorder {
 public:
  explicit PropertyRecorder(std::size_t max_witnesses = 8) : max_witnesses_(max_witnesses) {}

  /// Records a check of lhs <= rhs (or |lhs - rhs| <= slack when `equality`).
  /// Slack is `rel` times max(1, |lhs|, |rhs|).
  bool check(const std::string& property, double lhs, double rhs, bool equality, double rel,
             const std::function<Witness()>& make_witness);

  void add_trial() { ++report_.trials; }
  PropertyReport take() { return std::move(report_); }

 private:
  std::size_t max_witnesses_;
  PropertyReport report_;
};

/**
 * Randomized check of the four coherence axioms on distributions with 1-8
 * atoms: convexity, monotonicity, translational invariance and positive
 * homogeneity, each within 1e-9 relative.
 */
PropertyReport coherence_probe(const SigmaFn& sigma, std::size_t trials, std::uint64_t rng_seed);

}  // namespace riskssp
