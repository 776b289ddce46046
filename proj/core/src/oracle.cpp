#include "vat/oracle.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace vat::oracle {

namespace {

constexpr double kZeroFloor = 1e-300;
constexpr double kSumTol = 1e-12;
constexpr double kResidualTol = 1e-9;

void check_prob_vector(std::span<const double> p, const char* what) {
  double sum = 0.0;
  for (double v : p) {
    if (v < 0.0 || !std::isfinite(v)) {
      throw std::invalid_argument(std::string(what) + ": entries must be finite and >= 0");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument(std::string(what) + ": entries must sum to 1, got " +
                                std::to_string(sum));
  }
}

}  // namespace

DiscreteJoint DiscreteJoint::validated(int x_size, int y_size, std::vector<double> table) {
  if (x_size < 1 || y_size < 1) {
    throw std::invalid_argument("DiscreteJoint: sizes must be >= 1");
  }
  if (table.size() != static_cast<size_t>(x_size) * y_size) {
    throw std::invalid_argument("DiscreteJoint: table size mismatch");
  }
  double sum = 0.0;
  for (double v : table) {
    if (v < 0.0 || !std::isfinite(v)) {
      throw std::invalid_argument("DiscreteJoint: entries must be finite and >= 0");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTol) {
    throw std::invalid_argument("DiscreteJoint: entries must sum to 1 within 1e-12, got " +
                                std::to_string(sum));
  }
  return DiscreteJoint{x_size, y_size, std::move(table)};
}

FactoredQ FactoredQ::validated(int x_size, int y_size, std::vector<double> marginal,
                               std::vector<double> conditional) {
  if (x_size < 1 || y_size < 1) {
    throw std::invalid_argument("FactoredQ: sizes must be >= 1");
  }
  if (marginal.size() != static_cast<size_t>(x_size) ||
      conditional.size() != static_cast<size_t>(x_size) * y_size) {
    throw std::invalid_argument("FactoredQ: shape mismatch");
  }
  check_prob_vector(marginal, "FactoredQ.marginal");
  for (int x = 0; x < x_size; ++x) {
    check_prob_vector({conditional.data() + static_cast<size_t>(x) * y_size,
                       static_cast<size_t>(y_size)},
                      "FactoredQ.conditional row");
  }
  return FactoredQ{x_size, y_size, std::move(marginal), std::move(conditional)};
}

DiscreteJoint FactoredQ::as_joint() const {
  std::vector<double> table(static_cast<size_t>(x_size) * y_size);
  for (int x = 0; x < x_size; ++x) {
    for (int y = 0; y < y_size; ++y) {
      table[static_cast<size_t>(x) * y_size + y] = marginal[x] * cond(x, y);
    }
  }
  // Renormalize away accumulated rounding so the invariant check passes.
  double sum = 0.0;
  for (double v : table) sum += v;
  for (double& v : table) v /= sum;
  return DiscreteJoint::validated(x_size, y_size, std::move(table));
}

ClassConditional ClassConditional::validated(int n, int y_size, std::vector<double> class_prior,
                                             std::vector<double> likelihoods,
                                             std::vector<int> interested) {
  if (n < 1 || y_size < 1) {
    throw std::invalid_argument("ClassConditional: sizes must be >= 1");
  }
  if (class_prior.size() != static_cast<size_t>(n) ||
      likelihoods.size() != static_cast<size_t>(n) * y_size) {
    throw std::invalid_argument("ClassConditional: shape mismatch");
  }
  check_prob_vector(class_prior, "ClassConditional.class_prior");
  for (int i = 0; i < n; ++i) {
    check_prob_vector({likelihoods.data() + static_cast<size_t>(i) * y_size,
                       static_cast<size_t>(y_size)},
                      "ClassConditional.likelihood row");
  }
  if (interested.empty() || interested.size() > static_cast<size_t>(n)) {
    throw std::invalid_argument("ClassConditional: interested subset size must be in [1, n]");
  }
  std::vector<bool> seen(static_cast<size_t>(n), false);
  for (int idx : interested) {
    if (idx < 0 || idx >= n) {
      throw std::invalid_argument("ClassConditional: interested index out of range");
    }
    if (seen[idx]) {
      throw std::invalid_argument("ClassConditional: interested indices must be unique");
    }
    seen[idx] = true;
  }
  return ClassConditional{n, y_size, std::move(class_prior), std::move(likelihoods),
                          std::move(interested)};
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h < 0.0 ? 0.0 : h;  // clip -0.0 from rounding
}

double kl_joint(const DiscreteJoint& q, const DiscreteJoint& p) {
  if (q.x_size != p.x_size || q.y_size != p.y_size) {
    throw std::invalid_argument("kl_joint: domain mismatch");
  }
  double kl = 0.0;
  for (size_t i = 0; i < q.table.size(); ++i) {
    const double qi = q.table[i];
    if (qi == 0.0) continue;
    const double pi = p.table[i];
    if (pi < kZeroFloor) {
      throw std::domain_error("kl_joint: undefined divergence, q positive where p vanishes");
    }
    kl += qi * std::log(qi / pi);
  }
  return kl < 0.0 ? 0.0 : kl;
}

double decomposed_objective(const FactoredQ& q, const DiscreteJoint& p, int entropy_sign) {
  if (entropy_sign != 1 && entropy_sign != -1) {
    throw std::invalid_argument("decomposed_objective: entropy_sign must be +1 or -1");
  }
  if (q.x_size != p.x_size || q.y_size != p.y_size) {
    throw std::invalid_argument("decomposed_objective: domain mismatch");
  }
  // Factor p into P(y) and P(x|y).
  std::vector<double> p_y(static_cast<size_t>(p.y_size), 0.0);
  for (int x = 0; x < p.x_size; ++x) {
    for (int y = 0; y < p.y_size; ++y) p_y[y] += p.at(x, y);
  }
  double value = 0.0;
  for (int x = 0; x < q.x_size; ++x) {
    const double qx = q.marginal[x];
    if (qx == 0.0) continue;
    double inner = 0.0;
    for (int y = 0; y < q.y_size; ++y) {
      const double qyx = q.cond(x, y);
      if (qyx == 0.0) continue;
      if (p_y[y] < kZeroFloor) {
        throw std::domain_error("decomposed_objective: zero-probability conditioning event");
      }
      const double p_x_given_y = p.at(x, y) / p_y[y];
      if (p_x_given_y < kZeroFloor) {
        throw std::domain_error("decomposed_objective: q positive where P(x|y) vanishes");
      }
      inner += qyx * (-std::log(p_x_given_y) - std::log(p_y[y]));
    }
    std::span<const double> row{q.conditional.data() + static_cast<size_t>(x) * q.y_size,
                                static_cast<size_t>(q.y_size)};
    value += qx * (inner + entropy_sign * entropy(row));
  }
  return value;
}

namespace {

// Random strictly-positive probability vector with entries bounded away from
// zero, so logs stay small and the 1e-9 residual check is meaningful.
std::vector<double> random_simplex(std::mt19937_64& rng, int size) {
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  std::vector<double> v(static_cast<size_t>(size));
  double sum = 0.0;
  for (double& x : v) {
    x = unif(rng);
    sum += x;
  }
  for (double& x : v) x /= sum;
  return v;
}

}  // namespace

DecompositionReport verify_decomposition(int trials, int x_size, int y_size, std::uint64_t seed) {
  if (trials < 1) {
    throw std::invalid_argument("verify_decomposition: trials must be >= 1");
  }
  std::mt19937_64 rng(seed);
  DecompositionReport report;
  report.trials = trials;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> p_table = random_simplex(rng, x_size * y_size);
    auto p = DiscreteJoint::validated(x_size, y_size, std::move(p_table));
    std::vector<double> cond;
    cond.reserve(static_cast<size_t>(x_size) * y_size);
    for (int x = 0; x < x_size; ++x) {
      auto row = random_simplex(rng, y_size);
      cond.insert(cond.end(), row.begin(), row.end());
    }
    auto q = FactoredQ::validated(x_size, y_size, random_simplex(rng, x_size), std::move(cond));

    const double kl = kl_joint(q.as_joint(), p);
    const double h_qx = entropy(q.marginal);
    double best_residual = 0.0;
    int votes = 0;
    int instance_sign = 0;
    for (int sign : {+1, -1}) {
      // The decomposition should match KL up to the constant -H(Q(x)).
      const double residual = std::abs(kl - (decomposed_objective(q, p, sign) - h_qx));
      if (residual < kResidualTol) {
        ++votes;
        instance_sign = sign;
        best_residual = residual;
      }
    }
    if (votes == 0) {
      throw std::runtime_error("verify_decomposition: no entropy sign satisfies the identity");
    }
    if (votes == 1) {
      if (report.resolved_sign == 0) {
        report.resolved_sign = instance_sign;
      } else if (report.resolved_sign != instance_sign) {
        throw std::runtime_error("verify_decomposition: entropy sign flipped between instances");
      }
      report.max_residual = std::max(report.max_residual, best_residual);
    }
    // votes == 2 happens only when the conditional entropy term is ~0
    // (degenerate instance); it carries no sign information.
  }
  return report;
}

MarginalNll marginal_nll(const ClassConditional& cc, int y_index) {
  if (y_index < 0 || y_index >= cc.y_size) {
    throw std::invalid_argument("marginal_nll: y_index out of range");
  }
  double full_sum = 0.0;
  for (int i = 0; i < cc.n; ++i) {
    full_sum += cc.likelihood(i, y_index) * cc.class_prior[i];
  }
  if (full_sum < kZeroFloor) {
    throw std::domain_error("marginal_nll: zero total likelihood at y_index");
  }
  double marginal_sum = 0.0;
  for (int i : cc.interested) {
    marginal_sum += cc.likelihood(i, y_index);
  }
  if (marginal_sum < kZeroFloor) {
    throw std::domain_error("marginal_nll: zero interested-subset likelihood at y_index");
  }
  return MarginalNll{-std::log(full_sum), -std::log(marginal_sum)};
}

}  // namespace vat::oracle
