#include "msgtl/pipeline.hpp"

#include "msgtl/adversarial.hpp"
#include "msgtl/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace msgtl {

std::size_t ModelRegistry::start() const {
    if (stages.empty()) throw std::out_of_range("model registry is empty");
    return stages.front().stage_index;
}

bool ModelRegistry::contains(std::size_t stage) const noexcept {
    return !stages.empty() && stage >= stages.front().stage_index && stage - stages.front().stage_index < stages.size();
}

const StageEntry& ModelRegistry::at(std::size_t stage) const {
    if (!contains(stage)) throw std::out_of_range("model registry has no stage " + std::to_string(stage));
    return stages[stage - stages.front().stage_index];
}

namespace {

void check_finite(const Matrix& m, const char* what) {
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!std::isfinite(m.values()[i])) {
            throw std::invalid_argument(std::string(what) + ": non-finite value at row " +
                                        std::to_string(i / std::max<std::size_t>(1, m.cols())) + ", column " +
                                        std::to_string(i % std::max<std::size_t>(1, m.cols())));
        }
    }
}

Matrix stack_rows(const Matrix& top, const Matrix& bottom) {
    Matrix out(top.rows() + bottom.rows(), top.cols());
    std::copy(top.values().begin(), top.values().end(), out.values().begin());
    std::copy(bottom.values().begin(), bottom.values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(top.size()));
    return out;
}

Matrix pad_columns(const Matrix& m, std::size_t width) {
    if (m.cols() >= width) return m.leading_columns(width);
    Matrix out(m.rows(), width);
    for (std::size_t r = 0; r < m.rows(); ++r) std::copy(m.row(r).begin(), m.row(r).end(), out.row(r).begin());
    return out;
}

Matrix append_column(const Matrix& m, std::span<const double> column) {
    Matrix out(m.rows(), m.cols() + 1);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        std::copy(m.row(r).begin(), m.row(r).end(), out.row(r).begin());
        out(r, m.cols()) = column[r];
    }
    return out;
}

// Holdout rows for early stopping: the same fraction of each class, at
// least one row of each class always left for training.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_split(std::span<const std::uint8_t> labels,
                                                                           double fraction, Rng& rng) {
    std::vector<std::size_t> train, valid;
    for (std::uint8_t cls : {std::uint8_t{0}, std::uint8_t{1}}) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == cls) rows.push_back(i);
        }
        rng.shuffle(std::span<std::size_t>(rows));
        std::size_t take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rows.size())));
        if (take >= rows.size()) take = rows.empty() ? 0 : rows.size() - 1;
        valid.insert(valid.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take));
        train.insert(train.end(), rows.begin() + static_cast<std::ptrdiff_t>(take), rows.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(valid.begin(), valid.end());
    return {train, valid};
}

}  // namespace

TrainStageResult train_stage(const Matrix& features, std::span<const std::uint8_t> labels, StageNetwork& net,
                             const TrainConfig& config, const StageTrainingOptions& options) {
    config.validate();
    if (features.rows() == 0) throw std::invalid_argument("train_stage: empty dataset");
    if (labels.size() != features.rows()) throw std::invalid_argument("train_stage: label count differs from row count");
    if (features.cols() != net.topology.input_width()) {
        throw std::invalid_argument("train_stage: " + std::to_string(features.cols()) +
                                    " feature columns for a network of input width " +
                                    std::to_string(net.topology.input_width()));
    }
    check_finite(features, "train_stage");

    TrainStageResult result;
    if (config.epochs == 0) return result;

    const std::uint64_t stage = options.stage_index;
    std::vector<std::size_t> train_rows(features.rows());
    std::iota(train_rows.begin(), train_rows.end(), std::size_t{0});
    std::vector<std::size_t> valid_rows;
    if (config.patience > 0) {
        Rng holdout_rng(config.seed, {static_cast<std::uint64_t>(Stream::holdout), stage});
        auto split = holdout_split(labels, config.validation_fraction, holdout_rng);
        if (!split.second.empty()) {
            train_rows = std::move(split.first);
            valid_rows = std::move(split.second);
        }
    }

    std::vector<std::uint8_t> train_labels(train_rows.size());
    for (std::size_t i = 0; i < train_rows.size(); ++i) train_labels[i] = labels[train_rows[i]];
    const double beta = beta_of(train_labels);

    Matrix valid_x;
    std::vector<std::uint8_t> valid_y;
    if (!valid_rows.empty()) {
        valid_x = features.select_rows(valid_rows);
        for (auto r : valid_rows) valid_y.push_back(labels[r]);
    }

    // Source-domain rows for the adversarial head.
    const bool adversarial = config.da_lambda > 0.0 && options.source_rows != nullptr && options.source_rows->rows() > 0;
    std::optional<AdversarialHead> head;
    std::optional<HeadOptimizer> head_opt;
    std::vector<std::size_t> source_order;
    std::size_t source_cursor = 0;
    if (adversarial) {
        if (options.source_rows->cols() != features.cols()) {
            throw std::invalid_argument("train_stage: source rows must be padded to the stage width");
        }
        Rng head_rng(config.seed, {static_cast<std::uint64_t>(Stream::adversary), stage});
        head = AdversarialHead::create(config.gamma, config.da_hidden, config.da_lambda, head_rng);
        head_opt = HeadOptimizer::for_head(*head);
        source_order.resize(options.source_rows->rows());
        std::iota(source_order.begin(), source_order.end(), std::size_t{0});
    }

    Rng shuffle_rng(config.seed, {static_cast<std::uint64_t>(Stream::shuffle), stage});
    Rng dropout_rng(config.seed, {static_cast<std::uint64_t>(Stream::dropout), stage});
    Rng source_rng(config.seed, {static_cast<std::uint64_t>(Stream::adversary), stage, 1});

    const std::size_t m = train_rows.size();
    const std::size_t batches = (m + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = config.epochs * batches;
    OptimizerState opt = OptimizerState::for_network(net);

    double best_valid = std::numeric_limits<double>::infinity();
    std::optional<StageNetwork> best_net;
    std::size_t since_best = 0;

    std::vector<std::size_t> order = train_rows;
    std::vector<std::size_t> batch_rows;
    std::vector<std::uint8_t> batch_labels;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t lo = b * config.batch_size;
            const std::size_t hi = std::min(m, lo + config.batch_size);
            batch_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(lo),
                              order.begin() + static_cast<std::ptrdiff_t>(hi));
            batch_labels.clear();
            for (auto r : batch_rows) batch_labels.push_back(labels[r]);
            Matrix batch = features.select_rows(batch_rows);

            std::size_t source_count = 0;
            if (adversarial) {
                std::vector<std::size_t> picked;
                for (std::size_t i = 0; i < batch_rows.size(); ++i) {
                    if (source_cursor == 0) source_rng.shuffle(std::span<std::size_t>(source_order));
                    picked.push_back(source_order[source_cursor]);
                    source_cursor = (source_cursor + 1) % source_order.size();
                }
                batch = stack_rows(batch, options.source_rows->select_rows(picked));
                source_count = picked.size();
            }

            const ForwardCache cache = forward(net, batch, config.dropout_p, PassMode::train, &dropout_rng);
            std::span<const double> target_scores(cache.scores().data(), batch_labels.size());
            loss_sum += balanced_ce(target_scores, batch_labels, beta) * static_cast<double>(batch_labels.size());

            BackwardOptions bopts;
            GrlResult grl;
            if (adversarial) {
                std::vector<std::uint8_t> domains(batch_labels.size(), 0);
                domains.resize(batch_labels.size() + source_count, 1);
                const std::size_t gl = net.topology.gamma_layer();
                grl = grl_step(cache.activations[gl], domains, *head);
                if (!grl.skipped) bopts.extra = HiddenGradient{gl, &grl.trunk_grad};
            }
            const Gradients grads = backward(net, cache, batch_labels, beta, bopts);
            apply_update(net, grads, opt, result.steps, total_steps, config);
            if (adversarial && !grl.skipped) {
                const double progress = static_cast<double>(result.steps) / static_cast<double>(total_steps);
                update_head(*head, grl.head,
                            *head_opt,
                            inverse_decay_rate(config.eta0, config.decay_omega, config.decay_phi, std::min(1.0, progress)));
            }
            if (options.on_step) options.on_step(result.steps, net);
            ++result.steps;
        }
        result.loss_trace.push_back(loss_sum / static_cast<double>(m));
        result.epochs_run = epoch + 1;

        if (!valid_rows.empty()) {
            const double v = balanced_ce(infer(net, valid_x), valid_y, beta);
            if (v < best_valid) {
                best_valid = v;
                best_net = net;
                result.best_epoch = epoch + 1;
                since_best = 0;
            } else if (++since_best >= config.patience) {
                break;
            }
        }
    }
    if (best_net) {
        const std::uint64_t revision = net.revision + 1;
        net = std::move(*best_net);
        net.revision = revision;
    } else {
        result.best_epoch = result.epochs_run;
    }
    if (head) result.single_domain_batches = head->single_domain_batches;
    return result;
}

namespace {

// Stage input while the registry holds stages up to (excluding) `stage`.
Matrix build_input(const ModelRegistry& registry, std::size_t stage, const Matrix& raw, bool prev_score) {
    if (!prev_score || !registry.contains(stage - 1) || stage == 0) return raw;
    const StageEntry& prev = registry.at(stage - 1);
    const Matrix prev_input = stage_input(registry, stage - 1, raw);
    const std::vector<double> scores = infer(prev.network, prev_input);
    return append_column(raw, scores);
}

}  // namespace

Matrix stage_input(const ModelRegistry& registry, std::size_t stage, const Matrix& features) {
    const StageEntry& entry = registry.at(stage);
    if (features.cols() < entry.raw_feature_count) {
        throw std::invalid_argument("stage " + std::to_string(stage) + " expects " +
                                    std::to_string(entry.raw_feature_count) + " feature columns, got " +
                                    std::to_string(features.cols()));
    }
    const Matrix raw = features.leading_columns(entry.raw_feature_count);
    return build_input(registry, stage, raw, entry.config.prev_score_feature);
}

ModelRegistry train_msgtl(const FunnelDataset& dataset, const TrainConfig& config, const MsgtlOptions& options) {
    config.validate();
    if (dataset.stages.empty()) throw std::invalid_argument("train_msgtl: dataset has no stages");
    if (options.start >= dataset.stages.size()) {
        throw std::invalid_argument("train_msgtl: start stage " + std::to_string(options.start) + " but dataset has " +
                                    std::to_string(dataset.stages.size()) + " stages");
    }
    const std::size_t stop = std::min(options.stop, dataset.stages.size() - 1);
    if (stop < options.start) throw std::invalid_argument("train_msgtl: stop stage precedes start stage");
    for (std::size_t q = options.start + 1; q <= stop; ++q) {
        if (dataset.stages[q].feature_count() < dataset.stages[q - 1].feature_count()) {
            throw std::invalid_argument("train_msgtl: stage " + std::to_string(q) + " has fewer features than stage " +
                                        std::to_string(q - 1));
        }
    }

    ModelRegistry registry;
    for (std::size_t q = options.start; q <= stop; ++q) {
        const StageData& data = dataset.stages[q];
        const std::size_t pos = data.positives();
        if (pos == 0 || pos == data.rows()) {
            throw DegenerateStageError("stage " + std::to_string(q) + " ('" + data.name + "'): all " +
                                       std::to_string(data.rows()) + " labels are " + (pos == 0 ? "0" : "1") +
                                       "; the balanced loss is undefined");
        }
        if (options.access_log) options.access_log->accesses.push_back({q, q});
        const Matrix input = build_input(registry, q, data.features, config.prev_score_feature);

        const Topology topo = width_schedule(input.cols(), config.gamma, config.omega);
        Rng init_rng(config.seed, {static_cast<std::uint64_t>(Stream::init), q});
        StageNetwork net = init_network(topo, init_rng);

        TransferReport report;
        report.stage_index = q;
        report.regions.assign(net.layers.size(), Region{});
        report.fresh_parameters = net.parameter_count();
        const bool transfer = config.transfer && q > options.start;
        if (transfer) {
            const std::uint64_t mask_seed = derive_seed(config.seed, {static_cast<std::uint64_t>(Stream::mask), q});
            auto [embedded, rep] =
                transfer_weights(registry.stages.back().network, std::move(net), config.rho, config.shared_mask,
                                 mask_seed, q);
            net = std::move(embedded);
            report = std::move(rep);
        }

        StageTrainingOptions topts;
        topts.stage_index = q;
        Matrix source;
        if (config.da_lambda > 0.0 && q > options.start) {
            if (options.access_log) options.access_log->accesses.push_back({q, q - 1});
            source = pad_columns(dataset.stages[q - 1].features, input.cols());
            topts.source_rows = &source;
        }
        if (options.on_step) {
            topts.on_step = [&options, q](std::size_t step, const StageNetwork& n) { options.on_step(q, step, n); };
        }
        const TrainStageResult trained = train_stage(input, data.labels, net, config, topts);

        StageEntry entry;
        entry.stage_index = q;
        entry.name = data.name;
        entry.raw_feature_count = data.feature_count();
        entry.config = config;
        entry.network = std::move(net);
        entry.report = std::move(report);
        registry.stages.push_back(std::move(entry));
        if (options.on_stage) options.on_stage(registry.stages.back(), trained);
    }
    return registry;
}

std::vector<StagePrediction> predict(const ModelRegistry& registry, std::size_t stage, const Matrix& features,
                                     double threshold, std::span<const std::uint64_t> ids) {
    const StageEntry& entry = registry.at(stage);
    if (features.cols() != entry.raw_feature_count) {
        throw std::invalid_argument("predict: stage " + std::to_string(stage) + " expects " +
                                    std::to_string(entry.raw_feature_count) + " feature columns, got " +
                                    std::to_string(features.cols()));
    }
    if (!ids.empty() && ids.size() != features.rows()) throw std::invalid_argument("predict: id count differs from row count");
    const std::vector<double> scores = infer(entry.network, stage_input(registry, stage, features));
    std::vector<StagePrediction> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i].stage = stage;
        out[i].id = ids.empty() ? i : ids[i];
        out[i].score = scores[i];
        out[i].decision = scores[i] >= threshold;
    }
    return out;
}

}  // namespace msgtl
