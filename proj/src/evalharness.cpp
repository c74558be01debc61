#include "msgtl/evalharness.hpp"

#include "msgtl/features.hpp"
#include "msgtl/rng.hpp"

#include <omp.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <map>
#include <stdexcept>

namespace msgtl {

MetricSet f1_positive(std::span<const std::uint8_t> decisions, std::span<const std::uint8_t> labels) {
    if (decisions.size() != labels.size()) throw std::invalid_argument("f1_positive: length mismatch");
    if (decisions.empty()) throw std::invalid_argument("f1_positive: empty input");
    MetricSet m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool d = decisions[i] != 0, y = labels[i] != 0;
        if (d && y) ++m.tp;
        else if (d) ++m.fp;
        else if (y) ++m.fn;
        else ++m.tn;
    }
    m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
    m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::nn: return "NN";
        case Variant::nn_do: return "NN-DO";
        case Variant::msgtl: return "MSGTL";
        case Variant::msgtl_r: return "MSGTL-R";
        case Variant::msgtl_da: return "MSGTL-DA";
    }
    return "NN";
}

Variant parse_variant(const std::string& text) {
    std::string t;
    for (char c : text) t += c == '_' ? '-' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (Variant v : {Variant::nn, Variant::nn_do, Variant::msgtl, Variant::msgtl_r, Variant::msgtl_da}) {
        if (variant_name(v) == t) return v;
    }
    throw std::invalid_argument("unknown variant '" + text + "' (expected nn, nn-do, msgtl, msgtl-r or msgtl-da)");
}

TrainConfig variant_config(Variant v, TrainConfig base) {
    base.transfer = v == Variant::msgtl || v == Variant::msgtl_r || v == Variant::msgtl_da;
    base.dropout_p = (v == Variant::nn_do || v == Variant::msgtl_r) ? 0.5 : 0.0;
    if (v == Variant::msgtl_da) {
        if (base.da_lambda <= 0.0) base.da_lambda = 0.1;
    } else {
        base.da_lambda = 0.0;
    }
    return base;
}

std::string protocol_name(Protocol p) {
    switch (p) {
        case Protocol::crossval: return "crossval";
        case Protocol::longitudinal: return "longitudinal";
        case Protocol::registry: return "registry";
    }
    return "crossval";
}

Protocol parse_protocol(const std::string& text) {
    for (Protocol p : {Protocol::crossval, Protocol::longitudinal, Protocol::registry}) {
        if (protocol_name(p) == text) return p;
    }
    throw std::invalid_argument("unknown protocol '" + text + "' (expected crossval, longitudinal or registry)");
}

void ExperimentPlan::validate() const {
    if (protocol == Protocol::crossval && folds < 2) throw std::invalid_argument("plan: folds must be at least 2");
    if (variants.empty() || rhos.empty() || omegas.empty() || gammas.empty() || seeds.empty()) {
        throw std::invalid_argument("plan: every grid axis needs at least one value");
    }
    if (protocol == Protocol::registry) throw std::invalid_argument("plan: sweeps need the crossval or longitudinal protocol");
}

std::vector<Fold> kfold_split(const FunnelDataset& dataset, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold_split: k must be at least 2");
    if (dataset.stages.empty()) throw std::invalid_argument("kfold_split: dataset has no stages");
    for (std::size_t q = 0; q < dataset.stages.size(); ++q) {
        if (dataset.stages[q].rows() < k) {
            throw std::invalid_argument("kfold_split: stage " + std::to_string(q) + " '" + dataset.stages[q].name +
                                        "' has " + std::to_string(dataset.stages[q].rows()) + " rows, fewer than k = " +
                                        std::to_string(k));
        }
    }

    // Depth: last stage reached, times two, plus that stage's label.
    const auto& first = dataset.stages.front();
    std::map<std::size_t, std::vector<std::uint64_t>> strata;
    for (std::size_t r = 0; r < first.rows(); ++r) {
        const std::uint64_t id = first.ids[r];
        std::size_t depth = 0;
        std::uint8_t label = first.labels[r];
        for (std::size_t q = 1; q < dataset.stages.size(); ++q) {
            const std::size_t row = dataset.stages[q].row_of(id);
            if (row == static_cast<std::size_t>(-1)) break;
            depth = q;
            label = dataset.stages[q].labels[row];
        }
        strata[2 * depth + label].push_back(id);
    }

    Rng rng(seed, {static_cast<std::uint64_t>(Stream::folds)});
    std::map<std::uint64_t, std::size_t> fold_of;
    std::size_t counter = 0;
    for (auto& [depth, ids] : strata) {
        rng.shuffle(std::span<std::uint64_t>(ids));
        for (auto id : ids) fold_of[id] = counter++ % k;
    }

    std::vector<Fold> folds(k);
    for (auto& f : folds) {
        f.train_rows.resize(dataset.stages.size());
        f.test_rows.resize(dataset.stages.size());
    }
    for (const auto& [id, fold] : fold_of) {
        for (std::size_t f = 0; f < k; ++f) (f == fold ? folds[f].test_ids : folds[f].train_ids).push_back(id);
    }
    for (std::size_t q = 0; q < dataset.stages.size(); ++q) {
        const auto& s = dataset.stages[q];
        for (std::size_t r = 0; r < s.rows(); ++r) {
            const std::size_t fold = fold_of.at(s.ids[r]);
            for (std::size_t f = 0; f < k; ++f) (f == fold ? folds[f].test_rows[q] : folds[f].train_rows[q]).push_back(r);
        }
    }
    return folds;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

ResultRow base_row(const std::string& protocol, const std::string& variant, const TrainConfig& config,
                   const StageData& stage, std::size_t q, int fold) {
    ResultRow row;
    row.protocol = protocol;
    row.variant = variant;
    row.stage_name = stage.name;
    row.stage_index = q;
    row.phase = stage.phase;
    row.rho = config.rho;
    row.omega = config.omega;
    row.gamma = config.gamma;
    row.seed = config.seed;
    row.fold = fold;
    return row;
}

std::vector<std::uint8_t> decisions_of(const std::vector<StagePrediction>& preds) {
    std::vector<std::uint8_t> d(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) d[i] = preds[i].decision ? 1 : 0;
    return d;
}

}  // namespace

std::vector<ResultRow> crossval_run(const FunnelDataset& dataset, Variant variant, const TrainConfig& config,
                                    std::size_t k, double threshold, bool record_runtime) {
    const TrainConfig cfg = variant_config(variant, config);
    const std::string vname = variant_name(variant);
    const std::size_t stages = dataset.stages.size();
    const std::vector<Fold> folds = kfold_split(dataset, k, cfg.seed);

    std::vector<ResultRow> rows;
    std::vector<std::vector<std::uint8_t>> pooled_decisions(stages), pooled_labels(stages);
    std::vector<std::size_t> pooled_train(stages, 0);
    bool pooled_ok = true;
    double total_ms = 0.0;

    for (std::size_t f = 0; f < k; ++f) {
        const Fold& fold = folds[f];
        const auto t0 = Clock::now();
        std::vector<ResultRow> fold_rows;
        for (std::size_t q = 0; q < stages; ++q) {
            fold_rows.push_back(base_row("crossval", vname, cfg, dataset.stages[q], q, static_cast<int>(f)));
            fold_rows.back().n_train = fold.train_rows[q].size();
            fold_rows.back().n_test = fold.test_rows[q].size();
            pooled_train[q] += fold.train_rows[q].size();
        }
        try {
            const FunnelDataset prepared = Standardizer::fit(dataset, fold.train_ids).apply(dataset);
            const ModelRegistry registry = train_msgtl(prepared.restrict_to(fold.train_ids), cfg);
            for (std::size_t q = 0; q < stages; ++q) {
                const auto& test = fold.test_rows[q];
                if (test.empty()) continue;
                const StageData& s = prepared.stages[q];
                const auto preds = predict(registry, q, s.features.select_rows(test), threshold);
                std::vector<std::uint8_t> labels;
                for (auto r : test) labels.push_back(s.labels[r]);
                const auto decisions = decisions_of(preds);
                fold_rows[q].metrics = f1_positive(decisions, labels);
                pooled_decisions[q].insert(pooled_decisions[q].end(), decisions.begin(), decisions.end());
                pooled_labels[q].insert(pooled_labels[q].end(), labels.begin(), labels.end());
            }
        } catch (const std::exception&) {
            pooled_ok = false;
        }
        const double ms = ms_since(t0);
        total_ms += ms;
        if (record_runtime) {
            for (auto& r : fold_rows) r.runtime_ms = ms;
        }
        rows.insert(rows.end(), fold_rows.begin(), fold_rows.end());
    }
    for (std::size_t q = 0; q < stages; ++q) {
        ResultRow row = base_row("crossval", vname, cfg, dataset.stages[q], q, kPooledFold);
        row.n_train = pooled_train[q];
        row.n_test = dataset.stages[q].rows();
        if (pooled_ok) row.metrics = f1_positive(pooled_decisions[q], pooled_labels[q]);
        if (record_runtime) row.runtime_ms = total_ms;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<ResultRow> longitudinal_run(const FunnelDataset& train_cohort, const FunnelDataset& validate_cohort,
                                        Variant variant, const TrainConfig& config, double threshold,
                                        bool record_runtime, ValidationAccessLog* log) {
    if (!train_cohort.same_schema(validate_cohort)) {
        throw std::invalid_argument("longitudinal_run: training and validation cohorts have different schemas");
    }
    const TrainConfig cfg = variant_config(variant, config);
    const std::string vname = variant_name(variant);
    const auto t0 = Clock::now();

    const Standardizer st = Standardizer::fit(train_cohort, all_ids(train_cohort));
    const ModelRegistry registry = train_msgtl(st.apply(train_cohort), cfg);

    // The only pass over the validation cohort.
    if (log) log->passes.push_back(vname + " rho=" + format_double(cfg.rho) + " omega=" + std::to_string(cfg.omega) +
                                   " gamma=" + std::to_string(cfg.gamma) + " seed=" + std::to_string(cfg.seed));
    const FunnelDataset validation = st.apply(validate_cohort);
    std::vector<ResultRow> rows;
    for (std::size_t q = 0; q < validation.stages.size(); ++q) {
        const StageData& s = validation.stages[q];
        ResultRow row = base_row("longitudinal", vname, cfg, s, q, 0);
        row.n_train = train_cohort.stages[q].rows();
        row.n_test = s.rows();
        if (s.rows() > 0) row.metrics = f1_positive(decisions_of(predict(registry, q, s.features, threshold)), s.labels);
        rows.push_back(std::move(row));
    }
    if (record_runtime) {
        const double ms = ms_since(t0);
        for (auto& r : rows) r.runtime_ms = ms;
    }
    return rows;
}

std::vector<ResultRow> registry_run(const ModelRegistry& registry, const FunnelDataset& dataset,
                                    const std::string& variant, double threshold) {
    std::vector<ResultRow> rows;
    for (const auto& entry : registry.stages) {
        const std::size_t q = entry.stage_index;
        if (q >= dataset.stages.size()) throw std::invalid_argument("registry_run: dataset lacks stage " + std::to_string(q));
        const StageData& s = dataset.stages[q];
        ResultRow row = base_row("registry", variant, entry.config, s, q, 0);
        row.n_test = s.rows();
        if (s.rows() > 0) row.metrics = f1_positive(decisions_of(predict(registry, q, s.features, threshold)), s.labels);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<ResultRow> sweep(const DatasetSource& source, const ExperimentPlan& plan) {
    plan.validate();
    if (!source.train) throw std::invalid_argument("sweep: no dataset source");
    if (plan.protocol == Protocol::longitudinal && !source.validate) {
        throw std::invalid_argument("sweep: the longitudinal protocol needs a validation cohort source");
    }

    struct Task {
        Variant variant;
        TrainConfig config;
        std::size_t seed_index;
    };
    std::vector<Task> tasks;
    for (auto v : plan.variants) {
        for (double rho : plan.rhos) {
            for (auto omega : plan.omegas) {
                for (auto gamma : plan.gammas) {
                    for (std::size_t s = 0; s < plan.seeds.size(); ++s) {
                        TrainConfig c = plan.base;
                        c.rho = rho;
                        c.omega = omega;
                        c.gamma = gamma;
                        c.seed = plan.seeds[s];
                        tasks.push_back({v, c, s});
                    }
                }
            }
        }
    }

    std::vector<FunnelDataset> train_sets, validate_sets;
    for (auto seed : plan.seeds) {
        train_sets.push_back(source.train(seed));
        if (plan.protocol == Protocol::longitudinal) validate_sets.push_back(source.validate(seed));
    }

    std::vector<std::vector<ResultRow>> out(tasks.size());
    const int threads = plan.jobs > 0 ? static_cast<int>(plan.jobs) : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const Task& task = tasks[t];
        const FunnelDataset& data = train_sets[task.seed_index];
        try {
            if (plan.protocol == Protocol::crossval) {
                out[t] = crossval_run(data, task.variant, task.config, plan.folds, plan.threshold, plan.record_runtime);
            } else {
                out[t] = longitudinal_run(data, validate_sets[task.seed_index], task.variant, task.config,
                                          plan.threshold, plan.record_runtime);
            }
        } catch (const std::exception&) {
            const TrainConfig cfg = variant_config(task.variant, task.config);
            const int fold = plan.protocol == Protocol::crossval ? kPooledFold : 0;
            std::vector<ResultRow> missing;
            for (std::size_t q = 0; q < data.stages.size(); ++q) {
                missing.push_back(base_row(protocol_name(plan.protocol), variant_name(task.variant), cfg, data.stages[q],
                                           q, fold));
                missing.back().n_test = data.stages[q].rows();
            }
            out[t] = std::move(missing);
        }
    }
    std::vector<ResultRow> rows;
    for (auto& r : out) rows.insert(rows.end(), r.begin(), r.end());
    return rows;
}

}  // namespace msgtl
