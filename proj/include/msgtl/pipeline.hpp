#pragma once

#include "msgtl/config.hpp"
#include "msgtl/dataset.hpp"
#include "msgtl/engine.hpp"
#include "msgtl/network.hpp"
#include "msgtl/transfer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace msgtl {

inline constexpr std::uint32_t kRegistryFormatVersion = 1;

/// A stage whose labels are all equal: the balanced loss has no positive
/// (or no negative) term to learn from.
class DegenerateStageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StageEntry {
    std::size_t stage_index = 0;
    std::string name;
    /// Feature columns of the stage's own data (before any appended score).
    std::size_t raw_feature_count = 0;
    TrainConfig config;
    StageNetwork network;
    TransferReport report;

    bool operator==(const StageEntry& o) const {
        return stage_index == o.stage_index && name == o.name && raw_feature_count == o.raw_feature_count &&
               config == o.config && network.same_parameters(o.network) && report == o.report;
    }
};

/// The trained networks of one run, one per stage, contiguous from `start`.
struct ModelRegistry {
    std::uint32_t format_version = kRegistryFormatVersion;
    std::vector<StageEntry> stages;

    std::size_t start() const;
    bool contains(std::size_t stage) const noexcept;
    const StageEntry& at(std::size_t stage) const;

    bool operator==(const ModelRegistry&) const = default;
};

struct StagePrediction {
    std::size_t stage = 0;
    std::uint64_t id = 0;
    double score = 0.0;
    bool decision = false;
};

/// Called after every optimizer step with the step index and the network.
using StepObserver = std::function<void(std::size_t step, const StageNetwork& net)>;

struct StageTrainingOptions {
    /// Stage index used to derive this stage's random streams.
    std::size_t stage_index = 0;
    /// Previous-stage rows (already padded to the current width) used as the
    /// source domain when config.da_lambda > 0.
    const Matrix* source_rows = nullptr;
    StepObserver on_step = nullptr;
};

struct TrainStageResult {
    /// Mean training loss per epoch actually run.
    std::vector<double> loss_trace;
    std::size_t steps = 0;
    std::size_t epochs_run = 0;
    /// Epoch whose parameters were kept (early stopping), else epochs_run.
    std::size_t best_epoch = 0;
    std::size_t single_domain_batches = 0;
};

/// Mini-batch training of one stage network with the balanced loss
/// (beta from the training labels): epochs x ceil(m / batch_size) steps.
/// With config.patience > 0 a stratified validation split is held out and
/// the best-validation parameters are restored.
TrainStageResult train_stage(const Matrix& features, std::span<const std::uint8_t> labels, StageNetwork& net,
                             const TrainConfig& config, const StageTrainingOptions& options = {});

/// Which stage data each training step read, for leakage audits.
struct DataAccessLog {
    struct Access {
        std::size_t training_stage;
        std::size_t data_stage;
    };
    std::vector<Access> accesses;
};

struct MsgtlOptions {
    std::size_t start = 0;
    /// Last stage to train (inclusive); defaults to the final stage.
    std::size_t stop = std::numeric_limits<std::size_t>::max();
    DataAccessLog* access_log = nullptr;
    /// Per stage (stage index, step, network) observer.
    std::function<void(std::size_t, std::size_t, const StageNetwork&)> on_step;
    /// Called once per trained stage.
    std::function<void(const StageEntry&, const TrainStageResult&)> on_stage;
};

/// Sequential multi-stage training: the start stage from scratch, every
/// later stage initialized fresh and (if config.transfer) seeded with the
/// previous trained network via transfer_weights, then trained.
ModelRegistry train_msgtl(const FunnelDataset& dataset, const TrainConfig& config, const MsgtlOptions& options = {});

/// Network input for `stage` given that stage's feature matrix: the matrix
/// itself, or with the previous stage's score appended when the registry
/// was trained with prev_score_feature.
Matrix stage_input(const ModelRegistry& registry, std::size_t stage, const Matrix& features);

/// Scores and thresholded decisions (score >= threshold is positive).
std::vector<StagePrediction> predict(const ModelRegistry& registry, std::size_t stage, const Matrix& features,
                                     double threshold = 0.5, std::span<const std::uint64_t> ids = {});

class RegistryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class RegistryVersionError : public RegistryError {
public:
    using RegistryError::RegistryError;
};
class RegistryChecksumError : public RegistryError {
public:
    using RegistryError::RegistryError;
};
class RegistryTruncatedError : public RegistryError {
public:
    using RegistryError::RegistryError;
};

std::string serialize_registry(const ModelRegistry& registry);
ModelRegistry deserialize_registry(const std::string& bytes);
void save_registry(const ModelRegistry& registry, const std::filesystem::path& path);
ModelRegistry load_registry(const std::filesystem::path& path);

}  // namespace msgtl
