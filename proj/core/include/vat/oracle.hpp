#pragma once

#include <cstdint>
#include <span>
#include <vector>

// Exact computations over finite discrete distributions. Used to verify the
// variational decomposition of the joint-distribution KL objective and the
// total-probability expansion of the likelihood term, all in double precision
// with no sampling involved.
namespace vat::oracle {

// Joint distribution over a finite grid X x Y, row-major (x * y_size + y).
struct DiscreteJoint {
  int x_size = 0;
  int y_size = 0;
  std::vector<double> table;

  // Validates non-negativity and normalization (sum within 1e-12 of 1).
  static DiscreteJoint validated(int x_size, int y_size, std::vector<double> table);

  double at(int x, int y) const { return table[static_cast<size_t>(x) * y_size + y]; }
};

// Factored approximation Q(x, y) = Q(x) * Q(y | x) with a fixed marginal and a
// row-stochastic conditional (rows indexed by x).
struct FactoredQ {
  int x_size = 0;
  int y_size = 0;
  std::vector<double> marginal;     // over X
  std::vector<double> conditional;  // row-major, each row over Y sums to 1

  static FactoredQ validated(int x_size, int y_size, std::vector<double> marginal,
                             std::vector<double> conditional);

  double cond(int x, int y) const { return conditional[static_cast<size_t>(x) * y_size + y]; }

  // Materializes the joint table Q(x) * Q(y|x).
  DiscreteJoint as_joint() const;
};

// Class-conditional mixture: prior over n object classes, per-class likelihood
// rows over a finite observation domain, and the index subset of classes the
// downstream task cares about.
struct ClassConditional {
  int n = 0;       // number of object classes
  int y_size = 0;  // observation domain size
  std::vector<double> class_prior;  // over n
  std::vector<double> likelihoods;  // n x y_size, rows sum to 1
  std::vector<int> interested;      // unique indices in [0, n)

  static ClassConditional validated(int n, int y_size, std::vector<double> class_prior,
                                    std::vector<double> likelihoods,
                                    std::vector<int> interested);

  double likelihood(int i, int y) const {
    return likelihoods[static_cast<size_t>(i) * y_size + y];
  }
};

// Shannon entropy -sum p log p (natural log), with 0 log 0 = 0.
double entropy(std::span<const double> p);

// KL[q || p] = sum q log(q/p). Throws std::invalid_argument on domain mismatch
// and std::domain_error when q has support where p vanishes (below 1e-300).
double kl_joint(const DiscreteJoint& q, const DiscreteJoint& p);

// E_{x~Q}[ E_{y~Q(y|x)}( -log P(x|y) - log P(y) ) ] + entropy_sign * E_x[ H(Q(y|x)) ],
// where P(y) and P(x|y) are derived from the joint p. entropy_sign must be +1 or -1.
double decomposed_objective(const FactoredQ& q, const DiscreteJoint& p, int entropy_sign);

struct DecompositionReport {
  double max_residual = 0.0;
  int resolved_sign = 0;  // +1 or -1; 0 when every trial was sign-indifferent
  int trials = 0;
};

// Draws random (q, p) instances and checks, per instance, which entropy sign
// makes kl_joint(q_as_joint, p) == decomposed_objective(q, p, sign) - H(Q(x))
// hold to 1e-9. Degenerate draws are resampled. Throws std::runtime_error when
// an instance admits no sign or the resolved sign flips between instances.
DecompositionReport verify_decomposition(int trials, int x_size, int y_size, std::uint64_t seed);

struct MarginalNll {
  double full = 0.0;      // -log sum_i P(y|c_i) P(c_i)
  double marginal = 0.0;  // -log sum_{i in interested} P(y|c_i), no prior factor
};

// Evaluates the exact mixture negative log-likelihood at observation y_index,
// both over all classes with the prior and restricted to the interested subset
// with the prior dropped. Throws std::domain_error when the total likelihood
// at y_index is zero.
MarginalNll marginal_nll(const ClassConditional& cc, int y_index);

}  // namespace vat::oracle
