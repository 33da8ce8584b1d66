// Bootstrap quantification of GMM parameter uncertainty and the credible
// regions that make up the ambiguity set.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgopf/gmm.hpp"
#include "dgopf/types.hpp"

namespace dgopf {

/// Per-component confidence interval of the mixing weights.
struct WeightRegion {
  Vector lower;  // probabilities
  Vector upper;
  double delta = 0.0;
};

/// Ellipsoid { mu : (mu - center)' shape^-1 (mu - center) <= radius }.
struct MeanRegion {
  Vector center;  // MW
  Matrix shape;   // MW^2, SPD
  double radius = 0.0;
};

/// Frobenius ball { S : ||S - center||_F <= radius, S SPD }.
struct CovRegion {
  Matrix center;  // MW^2, SPD
  double radius = 0.0;
};

struct AmbiguitySet {
  double delta = 0.0;
  WeightRegion weight_region;
  std::vector<MeanRegion> mean_regions;
  std::vector<CovRegion> cov_regions;

  Index components() const { return weight_region.lower.size(); }
  Index dim() const {
    return mean_regions.empty() ? 0 : mean_regions.front().center.size();
  }
};

void validate_ambiguity(const AmbiguitySet& amb);

/// Degenerate set whose only member is `params` (all radii zero, weight
/// bounds tight).
AmbiguitySet singleton_ambiguity(const GmmParams& params);

/// True when `params` lies inside every region of the set (tolerance `tol`).
bool contains_params(const AmbiguitySet& amb, const GmmParams& params,
                     double tol = 1e-9);

/// Order-statistic quantile with linear interpolation at position (n-1)q.
double quantile(std::vector<double> values, double q);

struct BootstrapResult {
  std::vector<GmmParams> fits;  // aligned to the base fit's labeling
  int dropped = 0;
  std::vector<std::string> warnings;
};

/// N resamples with replacement; EM warm-started from the base parameters
/// with the base component count; components re-aligned to the base labels.
/// Resamples whose EM keeps failing are dropped with a warning.
BootstrapResult bootstrap_fits(const SampleSet& data, const FitResult& base,
                               int n_resamples, std::uint64_t seed,
                               const EmOptions& options = {}, int threads = 1);

/// Permutation p minimizing sum_m |base.mean[m] - fit.mean[p[m]]|^2; exact
/// assignment for M <= 10, greedy beyond.
std::vector<Index> align_components(const GmmParams& base,
                                    const GmmParams& fit);

GmmParams apply_alignment(const GmmParams& fit,
                          const std::vector<Index>& perm);

WeightRegion build_weight_region(const std::vector<GmmParams>& boot,
                                 double delta,
                                 std::vector<std::string>* warnings = nullptr);

MeanRegion build_mean_region(const std::vector<GmmParams>& boot, Index m,
                             double delta);

CovRegion build_cov_region(const std::vector<GmmParams>& boot, Index m,
                           double delta);

struct AmbiguityBuild {
  AmbiguitySet set;
  FitResult base;
  BootstrapResult bootstrap;
  std::vector<std::string> warnings;
};

/// Full pipeline: BIC model selection, bootstrap, region construction.
/// Warns (never fails) if the base fit falls outside a region.
AmbiguityBuild build_ambiguity_set(const SampleSet& data, double delta,
                                   int n_resamples, int m_lo, int m_hi,
                                   std::uint64_t seed,
                                   const EmOptions& options = {},
                                   int threads = 1);

}  // namespace dgopf
