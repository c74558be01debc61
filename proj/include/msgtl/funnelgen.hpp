#pragma once

#include "msgtl/dataset.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace msgtl {

/// One stage of a synthetic funnel.
struct StageSpec {
    std::string name;
    /// Numeric features first collected at this stage.
    std::size_t new_feature_count = 0;
    /// Fraction of the stage's participants that advance, in (0, 1].
    double survival_rate = 1.0;
    /// Weight a of the latent quality in each new feature: a*z + (1-a)*noise.
    double informativeness = 0.5;
    /// Levels of one categorical attribute (0 = none), one-hot expanded.
    std::size_t categorical_levels = 0;
    std::string phase;
};

struct FunnelConfig {
    std::vector<StageSpec> stages;
    std::size_t initial_population = 10000;
    /// Per-cohort shift of every numeric feature mean, and relative growth of
    /// the feature noise, per unit of cohort index.
    double drift = 0.0;
    /// Standard deviation of the feature noise in cohort 0.
    double noise_scale = 1.0;
    /// Standard deviation of the per-stage noise added to the latent
    /// quality when ranking applicants for advancement.
    double decision_noise = 0.25;
    std::uint64_t seed = 1;
    /// Cohort (year) index; 0 is the reference cohort.
    int cohort = 0;

    /// Throws std::invalid_argument on: fewer than 2 stages, population
    /// below 100, survival outside (0, 1], informativeness outside [0, 1],
    /// negative drift or non-positive noise.
    void validate() const;
};

/// The 12-stage selection funnel (7 conversion stages, 5 evaluation stages)
/// shrinking 10^4 applicants to about 25. `embedding_width` is the width of
/// the dense text/video embedding blocks at the star and video stages.
FunnelConfig paper_like_preset(std::uint64_t seed, double drift = 0.3, std::size_t embedding_width = 40);

/// `stage_count` generic stages with 4 new features each.
FunnelConfig minimal_preset(std::size_t stage_count, std::uint64_t seed);

/// Expected number of applicants reaching each stage, plus the number that
/// pass the last one (size = stages + 1).
std::vector<std::size_t> expected_stage_sizes(const FunnelConfig& config);

/// Draw a funnel. Every applicant gets a latent quality z ~ N(0, 1); stage
/// features load on z; at each stage the top survival fraction by
/// z + decision noise advance. Structural draws (feature loadings, drift
/// directions) depend on the seed only, so cohorts share one feature space.
FunnelDataset generate(const FunnelConfig& config);

}  // namespace msgtl
