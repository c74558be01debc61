#include "msgtl/funnelgen.hpp"

#include "msgtl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace msgtl {

namespace {

constexpr std::uint64_t kCohortIdStride = 1'000'000'000ULL;

enum : std::uint64_t { kStructure = 11, kLatent = 12, kDecision = 13, kFeatures = 14 };

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::size_t survivors(std::size_t participants, double rate) {
    return static_cast<std::size_t>(std::llround(rate * static_cast<double>(participants)));
}

}  // namespace

void FunnelConfig::validate() const {
    if (stages.size() < 2) throw std::invalid_argument("FunnelConfig: at least 2 stages are required");
    if (initial_population < 100) throw std::invalid_argument("FunnelConfig: initial population must be >= 100");
    if (!(drift >= 0.0)) throw std::invalid_argument("FunnelConfig: drift must be >= 0");
    if (!(noise_scale > 0.0)) throw std::invalid_argument("FunnelConfig: noise scale must be positive");
    if (!(decision_noise >= 0.0)) throw std::invalid_argument("FunnelConfig: decision noise must be >= 0");
    if (cohort < 0) throw std::invalid_argument("FunnelConfig: cohort index must be >= 0");
    for (const auto& s : stages) {
        if (!(s.survival_rate > 0.0 && s.survival_rate <= 1.0)) {
            throw std::invalid_argument("FunnelConfig: stage '" + s.name + "' survival rate must lie in (0, 1]");
        }
        if (!(s.informativeness >= 0.0 && s.informativeness <= 1.0)) {
            throw std::invalid_argument("FunnelConfig: stage '" + s.name + "' informativeness must lie in [0, 1]");
        }
        if (s.new_feature_count + s.categorical_levels == 0) {
            throw std::invalid_argument("FunnelConfig: stage '" + s.name + "' adds no features");
        }
        if (s.categorical_levels == 1) {
            throw std::invalid_argument("FunnelConfig: stage '" + s.name + "' categorical attribute needs >= 2 levels");
        }
    }
}

FunnelConfig paper_like_preset(std::uint64_t seed, double drift, std::size_t embedding_width) {
    FunnelConfig c;
    c.seed = seed;
    c.drift = drift;
    c.initial_population = 10000;
    c.noise_scale = 1.0;
    c.decision_noise = 0.25;
    const std::string conv = "conversion", eval = "evaluation";
    c.stages = {
        {"demographics", 3, 0.60, 0.35, 8, conv},
        {"payment", 1, 0.60, 0.25, 2, conv},
        {"education", 4, 0.70, 0.45, 6, conv},
        {"profile_tests", 10, 0.70, 0.40, 0, conv},
        {"star", embedding_width, 0.70, 0.15, 0, conv},
        {"logic_tests", 6, 0.70, 0.50, 0, conv},
        {"video_submission", embedding_width, 0.80, 0.15, 0, conv},
        {"video_evaluation", 2, 0.35, 0.30, 0, eval},
        {"interview", 2, 0.40, 0.30, 0, eval},
        {"panel", 2, 0.50, 0.30, 0, eval},
        {"committee", 2, 0.75, 0.30, 0, eval},
        {"final", 2, 0.70, 0.30, 0, eval},
    };
    return c;
}

FunnelConfig minimal_preset(std::size_t stage_count, std::uint64_t seed) {
    FunnelConfig c;
    c.seed = seed;
    c.initial_population = 2000;
    for (std::size_t q = 0; q < stage_count; ++q) {
        c.stages.push_back({"stage_" + std::to_string(q), 4, 0.6, 0.5, 0, ""});
    }
    return c;
}

std::vector<std::size_t> expected_stage_sizes(const FunnelConfig& config) {
    std::vector<std::size_t> sizes{config.initial_population};
    for (const auto& s : config.stages) sizes.push_back(survivors(sizes.back(), s.survival_rate));
    return sizes;
}

FunnelDataset generate(const FunnelConfig& config) {
    config.validate();
    const std::size_t m0 = config.initial_population;
    const std::uint64_t cohort = static_cast<std::uint64_t>(config.cohort);

    std::size_t total_cols = 0;
    for (const auto& s : config.stages) total_cols += s.new_feature_count + s.categorical_levels;

    // Feature loading signs and drift directions: shared by every cohort.
    Rng structure(config.seed, {kStructure});
    std::vector<double> loading(total_cols), drift_dir(total_cols);
    for (std::size_t c = 0; c < total_cols; ++c) {
        loading[c] = structure.bernoulli(0.5) ? 1.0 : -1.0;
        drift_dir[c] = structure.bernoulli(0.5) ? 1.0 : -1.0;
    }

    Rng latent_rng(config.seed, {kLatent, cohort});
    std::vector<double> z(m0);
    for (auto& v : z) v = latent_rng.normal();

    const double noise_sd = config.noise_scale * (1.0 + config.drift * static_cast<double>(cohort));
    const double shift = config.drift * static_cast<double>(cohort);

    FunnelDataset ds;
    ds.cohort = config.cohort;
    ds.feature_names.reserve(total_cols);
    ds.indicator.reserve(total_cols);

    Matrix all(m0, total_cols);
    std::vector<std::size_t> participants(m0);
    std::iota(participants.begin(), participants.end(), std::size_t{0});
    std::size_t col = 0;

    for (std::size_t q = 0; q < config.stages.size(); ++q) {
        const auto& spec = config.stages[q];
        const double a = spec.informativeness;
        Rng feature_rng(config.seed, {kFeatures, cohort, q});
        for (std::size_t f = 0; f < spec.new_feature_count; ++f, ++col) {
            ds.feature_names.push_back(spec.name + "_" + std::to_string(f));
            ds.indicator.push_back(0);
            for (auto i : participants) {
                const double eps = feature_rng.normal();
                all(i, col) = shift * drift_dir[col] + a * loading[col] * z[i] + (1.0 - a) * noise_sd * eps;
            }
        }
        if (spec.categorical_levels > 0) {
            const std::size_t levels = spec.categorical_levels;
            for (std::size_t k = 0; k < levels; ++k) {
                ds.feature_names.push_back(spec.name + "_cat=" + std::to_string(k));
                ds.indicator.push_back(1);
            }
            const double sd = std::sqrt(a * a + (1.0 - a) * (1.0 - a) * noise_sd * noise_sd);
            for (auto i : participants) {
                const double latent = a * z[i] + (1.0 - a) * noise_sd * feature_rng.normal();
                const double u = sd > 0.0 ? normal_cdf(latent / sd) : 0.5;
                const auto level = std::min(levels - 1, static_cast<std::size_t>(u * static_cast<double>(levels)));
                all(i, col + level) = 1.0;
            }
            col += levels;
        }

        // Rank by latent quality plus stage noise; the top fraction advances.
        Rng decision_rng(config.seed, {kDecision, cohort, q});
        std::vector<std::pair<double, std::size_t>> ranked;
        ranked.reserve(participants.size());
        for (auto i : participants) ranked.emplace_back(z[i] + config.decision_noise * decision_rng.normal(), i);
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto& x, const auto& y) { return x.first > y.first; });
        const std::size_t keep = survivors(participants.size(), spec.survival_rate);
        std::vector<std::uint8_t> advances(m0, 0);
        std::vector<std::size_t> next;
        for (std::size_t k = 0; k < keep; ++k) {
            advances[ranked[k].second] = 1;
            next.push_back(ranked[k].second);
        }
        std::sort(next.begin(), next.end());

        StageData stage;
        stage.name = spec.name;
        stage.phase = spec.phase;
        stage.features = Matrix(participants.size(), col);
        for (std::size_t r = 0; r < participants.size(); ++r) {
            const std::size_t i = participants[r];
            std::copy_n(all.row(i).begin(), col, stage.features.row(r).begin());
            stage.labels.push_back(advances[i]);
            stage.ids.push_back(cohort * kCohortIdStride + i);
        }
        ds.stages.push_back(std::move(stage));
        participants = std::move(next);
    }
    return ds;
}

}  // namespace msgtl
