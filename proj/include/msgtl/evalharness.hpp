#pragma once

#include "msgtl/config.hpp"
#include "msgtl/dataset.hpp"
#include "msgtl/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace msgtl {

/// Positive-class precision, recall and F1 with their confusion counts.
struct MetricSet {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t count() const noexcept { return tp + fp + tn + fn; }
    bool operator==(const MetricSet&) const = default;
};

/// Zero denominators give 0. Throws std::invalid_argument on a length
/// mismatch or empty input.
MetricSet f1_positive(std::span<const std::uint8_t> decisions, std::span<const std::uint8_t> labels);

enum class Variant : std::uint8_t { nn, nn_do, msgtl, msgtl_r, msgtl_da };

/// "NN", "NN-DO", "MSGTL", "MSGTL-R", "MSGTL-DA"
std::string variant_name(Variant v);
/// Case-insensitive; '_' and '-' are interchangeable.
Variant parse_variant(const std::string& text);

/// Training config of a variant derived from `base`. NN and NN-DO train every
/// stage from scratch (NN-DO with dropout 0.5); MSGTL transfers; MSGTL-R adds
/// dropout 0.5; MSGTL-DA adds the adversarial head (lambda 0.1 unless `base`
/// sets one).
TrainConfig variant_config(Variant v, TrainConfig base);

/// One cross-validation fold: applicant ids and, per stage, row indices.
struct Fold {
    std::vector<std::uint64_t> train_ids;
    std::vector<std::uint64_t> test_ids;
    std::vector<std::vector<std::size_t>> train_rows;
    std::vector<std::vector<std::size_t>> test_rows;
};

/// Applicant-level k-fold split. Ids are assigned to folds once at the first
/// stage, stratified by how deep into the funnel each applicant gets, and the
/// assignment carries over to every later stage by id. Late stages may end up
/// with an empty test set in some folds. Throws std::invalid_argument if
/// k < 2 or any stage has fewer than k rows.
std::vector<Fold> kfold_split(const FunnelDataset& dataset, std::size_t k, std::uint64_t seed);

enum class Protocol : std::uint8_t { crossval, longitudinal, registry };
std::string protocol_name(Protocol p);
Protocol parse_protocol(const std::string& text);

/// Fold label of the row pooling every fold's test predictions.
inline constexpr int kPooledFold = -1;

/// One results.csv row. Metrics are absent when the run failed.
struct ResultRow {
    std::string protocol;
    std::string variant;
    std::string stage_name;
    std::size_t stage_index = 0;
    double rho = 0.0;
    std::size_t omega = 0;
    std::size_t gamma = 0;
    std::uint64_t seed = 0;
    int fold = 0;
    std::optional<MetricSet> metrics;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::optional<double> runtime_ms;
    std::string phase;

    bool operator==(const ResultRow&) const = default;
};

struct ExperimentPlan {
    Protocol protocol = Protocol::crossval;
    std::size_t folds = 10;
    std::vector<Variant> variants{Variant::msgtl};
    std::vector<double> rhos{0.3};
    std::vector<std::size_t> omegas{6};
    std::vector<std::size_t> gammas{2};
    std::vector<std::uint64_t> seeds{1};
    /// Everything not swept (epochs, learning rate, ...).
    TrainConfig base;
    double threshold = 0.5;
    /// Record wall-clock runtime per row; off keeps results reproducible.
    bool record_runtime = false;
    /// Parallel tasks (0 = OpenMP default).
    std::size_t jobs = 0;

    /// Throws std::invalid_argument: folds < 2 or an empty grid axis.
    void validate() const;
};

/// Counts every pass over held-out validation data, per configuration.
struct ValidationAccessLog {
    std::vector<std::string> passes;
};

/// k-fold cross-validation of one configuration on one dataset. Standardizes
/// with training-fold statistics, trains on the training ids, predicts each
/// stage's test rows. Emits one row per (fold, stage) plus one pooled row per
/// stage computed from all folds' test predictions.
std::vector<ResultRow> crossval_run(const FunnelDataset& dataset, Variant variant, const TrainConfig& config,
                                    std::size_t folds, double threshold = 0.5, bool record_runtime = false);

/// Train on one cohort (early stopping on an inner split of it), then a
/// single evaluation pass over the other cohort. Throws std::invalid_argument
/// if the cohorts' schemas differ.
std::vector<ResultRow> longitudinal_run(const FunnelDataset& train_cohort, const FunnelDataset& validate_cohort,
                                        Variant variant, const TrainConfig& config, double threshold = 0.5,
                                        bool record_runtime = false, ValidationAccessLog* log = nullptr);

/// Score a trained registry on a dataset (already prepared the same way as
/// its training data). One row per registry stage, fold 0.
std::vector<ResultRow> registry_run(const ModelRegistry& registry, const FunnelDataset& dataset,
                                    const std::string& variant, double threshold = 0.5);

/// Builds the dataset (or cohort pair) for one seed.
struct DatasetSource {
    std::function<FunnelDataset(std::uint64_t seed)> train;
    /// Required for the longitudinal protocol.
    std::function<FunnelDataset(std::uint64_t seed)> validate;
};

/// Full-factorial sweep (variant x rho x omega x gamma x seed), run in
/// parallel over tasks. A failing task contributes rows with missing
/// metrics for every stage instead of aborting the sweep. Rows come back in
/// task order regardless of scheduling.
std::vector<ResultRow> sweep(const DatasetSource& source, const ExperimentPlan& plan);

void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
std::string results_csv_text(const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);
std::vector<ResultRow> parse_results_csv(const std::string& text);

/// Mean and sample standard deviation of F1 for one (protocol, variant,
/// hyperparameters, stage) cell.
struct SummaryCell {
    std::size_t stage_index = 0;
    std::string stage_name;
    std::string phase;
    std::string protocol;
    std::string variant;
    double rho = 0.0;
    std::size_t omega = 0;
    std::size_t gamma = 0;
    std::size_t runs = 0;
    std::size_t missing = 0;
    double mean_f1 = 0.0;
    double sd_f1 = 0.0;
};

/// Cells aggregate one row per run: pooled rows where the protocol emits
/// them, every row otherwise. Missing metrics are counted, not averaged.
std::vector<SummaryCell> summarize(const std::vector<ResultRow>& rows);

/// results.csv, summary.md and per-protocol plot data (stage vs mean F1 per
/// variant, and F1 against each swept hyperparameter). Returns the written
/// paths. Throws std::runtime_error if `out_dir` cannot be written.
std::vector<std::filesystem::path> report(const std::vector<ResultRow>& rows, const std::filesystem::path& out_dir);

/// Exact one-sided Wilcoxon signed-rank test of H1: x > y (paired). Zero
/// differences are dropped; ties get midranks and the null distribution is
/// enumerated exactly over the tied ranks. Returns 1 when no pair differs.
double wilcoxon_signed_rank_greater(std::span<const double> x, std::span<const double> y);

/// Kendall tau-b (tie-corrected). Returns 0 when either input is constant.
double kendall_tau_b(std::span<const double> x, std::span<const double> y);

}  // namespace msgtl
