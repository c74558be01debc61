// msgtl command-line front end: gen-data, train, eval, sweep, report, replay.

#include "msgtl/dataset_io.hpp"
#include "msgtl/evalharness.hpp"
#include "msgtl/features.hpp"
#include "msgtl/funnelgen.hpp"
#include "msgtl/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#ifndef MSGTL_VERSION
#define MSGTL_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace msgtl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitAssert = 2;

struct AssertionFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

// ---------------------------------------------------------------- options

struct DataOptions {
    std::string preset = "paper-like";
    std::size_t stages = 0;
    int cohort = 0;
    double drift = 0.3;
    std::size_t embedding_width = 40;
    std::size_t population = 0;
    double decision_noise = 0.25;
    std::string data;
    std::string validate;
    int validate_cohort = 1;
};

struct TrainOptions {
    std::vector<std::string> variants{"msgtl"};
    std::vector<double> rhos{0.3};
    std::vector<std::size_t> omegas{6};
    std::vector<std::size_t> gammas{2};
    std::uint64_t seed = 1;
    std::size_t seeds = 1;
    TrainConfig config;
    std::string optimizer = "adam";
};

struct Options {
    DataOptions data;
    TrainOptions train;
    std::string out;
    std::string manifest;
    std::size_t start = 0;
    std::size_t stop = std::numeric_limits<std::size_t>::max();
    std::string protocol = "crossval";
    std::size_t folds = 10;
    std::string registry;
    std::vector<std::string> inputs;
    double threshold = 0.5;
    bool check = false;
    double min_f1 = 0.5;
    std::size_t jobs = 0;
    bool record_runtime = false;
    std::string replay_manifest;
};

FunnelConfig preset_config(const DataOptions& d, std::uint64_t seed, int cohort) {
    FunnelConfig c;
    if (d.preset == "paper-like") {
        c = paper_like_preset(seed, d.drift, d.embedding_width);
        if (d.stages > 0) {
            if (d.stages > c.stages.size()) throw std::invalid_argument("--stages exceeds the preset's 12 stages");
            c.stages.resize(d.stages);
        }
    } else if (d.preset == "minimal") {
        c = minimal_preset(d.stages > 0 ? d.stages : 3, seed);
        c.drift = d.drift;
    } else {
        throw std::invalid_argument("unknown preset '" + d.preset + "' (expected paper-like or minimal)");
    }
    if (d.population > 0) c.initial_population = d.population;
    c.decision_noise = d.decision_noise;
    c.cohort = cohort;
    return c;
}

void add_preset_options(CLI::App* cmd, DataOptions& d) {
    cmd->add_option("--preset", d.preset, "Synthetic funnel preset: paper-like or minimal")
        ->check(CLI::IsMember({"paper-like", "minimal"}));
    cmd->add_option("--stages", d.stages, "Stage count (minimal) or leading stages kept (paper-like); 0 = preset");
    cmd->add_option("--drift", d.drift, "Per-cohort covariate shift")->check(CLI::NonNegativeNumber);
    cmd->add_option("--embedding-width", d.embedding_width, "Width of the text/video embedding blocks")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--population", d.population, "Initial population; 0 = preset");
    cmd->add_option("--decision-noise", d.decision_noise, "Noise added to latent quality at each decision")
        ->check(CLI::NonNegativeNumber);
}

void add_train_options(CLI::App* cmd, TrainOptions& t, bool lists) {
    auto& c = t.config;
    if (lists) {
        cmd->add_option("--variant", t.variants, "Variants: nn, nn-do, msgtl, msgtl-r, msgtl-da")->delimiter(',');
        cmd->add_option("--rho", t.rhos, "Mask probabilities")->delimiter(',');
        cmd->add_option("--omega", t.omegas, "Maximum layer counts")->delimiter(',');
        cmd->add_option("--gamma", t.gammas, "Widths of the last hidden layer")->delimiter(',');
    } else {
        t.variants.resize(1);
        t.rhos.resize(1);
        t.omegas.resize(1);
        t.gammas.resize(1);
        cmd->add_option("--variant", t.variants[0], "Variant: nn, nn-do, msgtl, msgtl-r, msgtl-da");
        cmd->add_option("--rho", t.rhos[0], "Mask probability")->check(CLI::Range(0.0, 1.0));
        cmd->add_option("--omega", t.omegas[0], "Maximum layer count")->check(CLI::Range(3, 64));
        cmd->add_option("--gamma", t.gammas[0], "Width of the last hidden layer")->check(CLI::PositiveNumber);
    }
    cmd->add_option("--seed", t.seed, "Base seed (MSGTL_SEED overrides the default and config file)");
    cmd->add_option("--epochs", c.epochs, "Epochs per stage");
    cmd->add_option("--batch-size", c.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--optimizer", t.optimizer, "adam or sgd")->check(CLI::IsMember({"adam", "sgd"}));
    cmd->add_option("--eta0", c.eta0, "Initial learning rate");
    cmd->add_option("--decay-omega", c.decay_omega, "Inverse-decay rate multiplier");
    cmd->add_option("--decay-phi", c.decay_phi, "Inverse-decay exponent");
    cmd->add_option("--da-lambda", c.da_lambda, "Gradient reversal strength for msgtl-da (0 = 0.1)");
    cmd->add_option("--da-hidden", c.da_hidden, "Hidden units of the domain discriminator");
    cmd->add_option("--shared-mask", c.shared_mask, "Use one mask for both passes (true/false)");
    cmd->add_option("--prev-score", c.prev_score_feature, "Append the previous stage's score as a feature (true/false)");
    cmd->add_option("--patience", c.patience, "Early-stopping patience in epochs (0 disables)");
    cmd->add_option("--validation-fraction", c.validation_fraction, "Inner validation split for early stopping");
}

TrainConfig resolved_config(const TrainOptions& t, double rho, std::size_t omega, std::size_t gamma) {
    TrainConfig c = t.config;
    c.rho = rho;
    c.omega = omega;
    c.gamma = gamma;
    c.seed = t.seed;
    c.optimizer = t.optimizer == "sgd" ? OptimizerKind::sgd : OptimizerKind::adam;
    c.validate();
    return c;
}

std::vector<std::uint64_t> seed_list(const TrainOptions& t) {
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < t.seeds; ++i) seeds.push_back(t.seed + i);
    return seeds;
}

// ---------------------------------------------------------------- manifest

class RunManifest {
public:
    RunManifest(fs::path path, std::string command, std::vector<std::string> arguments, std::string config,
                std::uint64_t seed)
        : path_(std::move(path)), start_(std::chrono::steady_clock::now()) {
        doc_["tool"] = "msgtl";
        doc_["version"] = MSGTL_VERSION;
        doc_["command"] = std::move(command);
        doc_["arguments"] = std::move(arguments);
        doc_["working_directory"] = fs::current_path().string();
        doc_["seed"] = seed;
        doc_["resolved_config"] = std::move(config);
        doc_["artifacts"] = json::array();
        doc_["status"] = "running";
        doc_["started_at"] = utc_now();
        write();
    }

    void artifact(const fs::path& p) { doc_["artifacts"].push_back(p.string()); }

    void finish(const std::string& status, int exit_code, const std::string& message = {}) {
        doc_["status"] = status;
        doc_["exit_code"] = exit_code;
        if (!message.empty()) doc_["message"] = message;
        doc_["finished_at"] = utc_now();
        doc_["wall_clock_ms"] =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
        write();
    }

    const fs::path& path() const { return path_; }

private:
    void write() { write_file(path_, doc_.dump(2) + "\n"); }

    fs::path path_;
    std::chrono::steady_clock::time_point start_;
    json doc_;
};

// ---------------------------------------------------------------- datasets

FunnelDataset load_or_generate(const DataOptions& d, std::uint64_t seed, bool validation) {
    if (validation) {
        if (!d.validate.empty()) return load_stage_csv(d.validate);
        if (!d.data.empty()) throw std::invalid_argument("the longitudinal protocol needs --validate with --data");
        return generate(preset_config(d, seed, d.validate_cohort));
    }
    if (!d.data.empty()) return load_stage_csv(d.data);
    return generate(preset_config(d, seed, d.cohort));
}

void print_funnel(const FunnelDataset& ds) {
    std::printf("%-3s %-20s %-11s %8s %6s %8s\n", "q", "stage", "phase", "m", "n", "advance");
    for (std::size_t q = 0; q < ds.stages.size(); ++q) {
        const auto& s = ds.stages[q];
        std::printf("%-3zu %-20s %-11s %8zu %6zu %8zu\n", q, s.name.c_str(), s.phase.c_str(), s.rows(),
                    s.feature_count(), s.positives());
    }
}

fs::path scaling_path(const fs::path& registry) { return fs::path(registry.string() + ".scaling.csv"); }

// ---------------------------------------------------------------- commands

int cmd_gen_data(const Options& o, RunManifest& manifest) {
    const FunnelDataset ds = generate(preset_config(o.data, o.train.seed, o.data.cohort));
    const fs::path path = export_dataset(ds, o.out);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(o.out)) {
        if (entry.path() != manifest.path()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) manifest.artifact(f);
    print_funnel(ds);
    std::printf("wrote %s\n", path.string().c_str());
    return kExitOk;
}

int cmd_train(const Options& o, RunManifest& manifest) {
    if (o.train.variants.size() != 1) throw std::invalid_argument("train takes exactly one --variant");
    const Variant variant = parse_variant(o.train.variants[0]);
    const TrainConfig config =
        variant_config(variant, resolved_config(o.train, o.train.rhos[0], o.train.omegas[0], o.train.gammas[0]));
    const FunnelDataset raw = load_or_generate(o.data, o.train.seed, false);
    const Standardizer scaling = Standardizer::fit(raw, all_ids(raw));
    const FunnelDataset ds = scaling.apply(raw);

    MsgtlOptions mo;
    mo.start = o.start;
    mo.stop = o.stop;
    std::printf("%-3s %-20s %7s %5s %7s %12s %10s %9s\n", "q", "stage", "m", "n", "layers", "transferred", "loss",
                "train_f1");
    mo.on_stage = [&](const StageEntry& e, const TrainStageResult& r) {
        const StageData& s = ds.stages[e.stage_index];
        std::vector<std::uint8_t> decisions;
        for (const auto& p : predict(ModelRegistry{kRegistryFormatVersion, {e}}, e.stage_index, s.features)) {
            decisions.push_back(p.decision ? 1 : 0);
        }
        const MetricSet m = f1_positive(decisions, s.labels);
        std::printf("%-3zu %-20s %7zu %5zu %7zu %12zu %10.4f %9.3f\n", e.stage_index, e.name.c_str(), s.rows(),
                    s.feature_count(), e.network.topology.layer_count(), e.report.transferred_parameters,
                    r.loss_trace.empty() ? 0.0 : r.loss_trace.back(), m.f1);
        std::fflush(stdout);
    };
    if (config.prev_score_feature) {
        // Stage-by-stage printing needs the earlier stages for the appended score.
        mo.on_stage = nullptr;
    }
    const ModelRegistry registry = train_msgtl(ds, config, mo);
    save_registry(registry, o.out);
    write_file(scaling_path(o.out), scaling.to_text());
    manifest.artifact(o.out);
    manifest.artifact(scaling_path(o.out));
    std::printf("wrote %s (%zu stages)\n", o.out.c_str(), registry.stages.size());
    return kExitOk;
}

bool assert_min_f1(const std::vector<ResultRow>& rows, double min_f1) {
    bool has_eval = false;
    for (const auto& r : rows) has_eval |= r.phase == "evaluation";
    std::map<std::string, std::pair<double, std::size_t>> per_variant;
    for (const auto& c : summarize(rows)) {
        if (has_eval && c.phase != "evaluation") continue;
        auto& [sum, n] = per_variant[c.variant];
        if (c.runs > 0) {
            sum += c.mean_f1;
            ++n;
        }
    }
    bool ok = true;
    for (const auto& [variant, acc] : per_variant) {
        const double mean = acc.second ? acc.first / static_cast<double>(acc.second) : 0.0;
        const bool pass = acc.second > 0 && mean >= min_f1;
        std::printf("assert %s mean F1 %.4f >= %.4f: %s\n", variant.c_str(), mean, min_f1, pass ? "PASS" : "FAIL");
        ok &= pass;
    }
    return ok;
}

// Final-stage mean F1 at the best interior rho must reach both endpoints.
bool assert_rho_peak(const std::vector<ResultRow>& rows) {
    std::size_t last = 0;
    for (const auto& r : rows) last = std::max(last, r.stage_index);
    std::map<std::tuple<std::string, std::string, std::size_t, std::size_t>, std::map<double, double>> curves;
    for (const auto& c : summarize(rows)) {
        if (c.stage_index == last && c.runs > 0) curves[{c.protocol, c.variant, c.omega, c.gamma}][c.rho] = c.mean_f1;
    }
    bool ok = true;
    for (const auto& [key, curve] : curves) {
        if (curve.size() < 3) continue;
        double interior = -1.0;
        for (auto it = std::next(curve.begin()); it != std::prev(curve.end()); ++it) interior = std::max(interior, it->second);
        const bool pass = interior >= curve.begin()->second && interior >= curve.rbegin()->second;
        std::printf("assert %s interior rho peak %.4f vs endpoints %.4f / %.4f: %s\n", std::get<1>(key).c_str(), interior,
                    curve.begin()->second, curve.rbegin()->second, pass ? "PASS" : "FAIL");
        ok &= pass;
    }
    return ok;
}

ExperimentPlan make_plan(const Options& o) {
    ExperimentPlan plan;
    plan.protocol = parse_protocol(o.protocol);
    plan.folds = o.folds;
    plan.variants.clear();
    for (const auto& v : o.train.variants) plan.variants.push_back(parse_variant(v));
    plan.rhos = o.train.rhos;
    plan.omegas = o.train.omegas;
    plan.gammas = o.train.gammas;
    plan.seeds = seed_list(o.train);
    plan.base = resolved_config(o.train, o.train.rhos[0], o.train.omegas[0], o.train.gammas[0]);
    plan.threshold = o.threshold;
    plan.record_runtime = o.record_runtime;
    plan.jobs = o.jobs;
    plan.validate();
    return plan;
}

std::vector<ResultRow> run_plan(const Options& o, const ExperimentPlan& plan) {
    DatasetSource source;
    // A dataset on disk is shared by every seed; presets are drawn per seed.
    if (!o.data.data.empty()) {
        auto shared = std::make_shared<FunnelDataset>(load_stage_csv(o.data.data));
        source.train = [shared](std::uint64_t) { return *shared; };
        if (plan.protocol == Protocol::longitudinal) {
            if (o.data.validate.empty()) throw std::invalid_argument("the longitudinal protocol needs --validate");
            auto other = std::make_shared<FunnelDataset>(load_stage_csv(o.data.validate));
            source.validate = [other](std::uint64_t) { return *other; };
        }
    } else {
        const DataOptions d = o.data;
        source.train = [d](std::uint64_t seed) { return generate(preset_config(d, seed, d.cohort)); };
        source.validate = [d](std::uint64_t seed) { return generate(preset_config(d, seed, d.validate_cohort)); };
    }
    return sweep(source, plan);
}

int finish_results(const Options& o, const std::vector<ResultRow>& rows, RunManifest& manifest, bool rho_check) {
    fs::create_directories(o.out);
    const fs::path path = fs::path(o.out) / "results.csv";
    write_results_csv(rows, path);
    manifest.artifact(path);
    std::size_t missing = 0;
    for (const auto& r : rows) missing += !r.metrics;
    std::printf("wrote %s (%zu rows, %zu NA)\n", path.string().c_str(), rows.size(), missing);
    for (const auto& c : summarize(rows)) {
        std::printf("  %-12s %-9s rho=%-5s omega=%zu gamma=%zu %2zu %-20s F1 %.3f +- %.3f (%zu runs)\n",
                    c.protocol.c_str(), c.variant.c_str(), format_double(c.rho).c_str(), c.omega, c.gamma,
                    c.stage_index, c.stage_name.c_str(), c.mean_f1, c.sd_f1, c.runs);
    }
    if (!o.check) return kExitOk;
    bool ok = rho_check ? assert_rho_peak(rows) : true;
    if (!rho_check) ok = assert_min_f1(rows, o.min_f1);
    if (!ok) throw AssertionFailure("acceptance assertion failed");
    return kExitOk;
}

int cmd_eval(const Options& o, RunManifest& manifest) {
    const Protocol protocol = parse_protocol(o.protocol);
    if (protocol == Protocol::registry) {
        if (o.registry.empty()) throw std::invalid_argument("--protocol registry needs --registry");
        const ModelRegistry registry = load_registry(o.registry);
        FunnelDataset ds = load_or_generate(o.data, o.train.seed, false);
        if (fs::exists(scaling_path(o.registry))) {
            ds = Standardizer::parse(read_file(scaling_path(o.registry))).apply(ds);
        }
        const std::string variant = o.train.variants.empty() ? "registry" : o.train.variants[0];
        return finish_results(o, registry_run(registry, ds, variant, o.threshold), manifest, false);
    }
    return finish_results(o, run_plan(o, make_plan(o)), manifest, false);
}

int cmd_sweep(const Options& o, RunManifest& manifest) {
    const ExperimentPlan plan = make_plan(o);
    return finish_results(o, run_plan(o, plan), manifest, plan.rhos.size() >= 3);
}

int cmd_report(const Options& o, RunManifest& manifest) {
    std::vector<ResultRow> rows;
    for (const auto& in : o.inputs) {
        auto part = read_results_csv(in);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    const fs::path out = o.out.empty() ? fs::path(o.inputs.front()).parent_path() : fs::path(o.out);
    for (const auto& p : report(rows, out.empty() ? fs::path(".") : out)) {
        manifest.artifact(p);
        std::printf("wrote %s\n", p.string().c_str());
    }
    return kExitOk;
}

// ---------------------------------------------------------------- main

bool given_on_command_line(const std::vector<std::string>& args, const std::string& flag) {
    for (const auto& a : args) {
        if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
}

int run(std::vector<std::string> args, bool from_replay);

int run_replay(const std::string& manifest_path) {
    const json doc = json::parse(read_file(manifest_path));
    const std::string command = doc.at("command").get<std::string>();
    // Relative paths in the recorded config resolve against the original directory.
    if (doc.contains("working_directory")) fs::current_path(doc.at("working_directory").get<std::string>());
    const fs::path config = fs::path(manifest_path).replace_extension(".replay.toml");
    write_file(config, "[" + command + "]\n" + doc.at("resolved_config").get<std::string>());
    std::vector<std::string> args{"--config", config.string(), command};
    const int rc = run(args, true);
    fs::remove(config);
    return rc;
}

int run(std::vector<std::string> args, bool from_replay) {
    CLI::App app{"Multi-stage transfer learning over dual-funnel selection processes", "msgtl"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "TOML-style file of flag values, one [command] section per command");
    app.set_version_flag("--version", std::string(MSGTL_VERSION));

    Options o;
    auto common = [&](CLI::App* cmd) {
        cmd->add_option("--manifest", o.manifest, "Run manifest path (default: next to the outputs)");
    };

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic funnel and write stage CSVs");
    add_preset_options(gen, o.data);
    gen->add_option("--seed", o.train.seed, "Generator seed (MSGTL_SEED overrides the default and config file)");
    gen->add_option("--cohort", o.data.cohort, "Cohort (year) index")->check(CLI::NonNegativeNumber);
    gen->add_option("--out", o.out, "Output directory")->required();
    common(gen);

    auto* train = app.add_subcommand("train", "Train one variant stage by stage and save the registry");
    train->add_option("--data", o.data.data, "Dataset manifest (default: generate from --preset)");
    add_preset_options(train, o.data);
    add_train_options(train, o.train, false);
    train->add_option("--start", o.start, "First stage to train");
    train->add_option("--stop", o.stop, "Last stage to train (default: final stage)");
    train->add_option("--out", o.out, "Registry file to write")->required();
    common(train);

    auto* eval = app.add_subcommand("eval", "Cross-validation, longitudinal or registry evaluation");
    eval->add_option("--protocol", o.protocol, "crossval, longitudinal or registry")
        ->check(CLI::IsMember({"crossval", "longitudinal", "registry"}));
    eval->add_option("--folds", o.folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
    eval->add_option("--data", o.data.data, "Dataset manifest (default: generate from --preset)");
    eval->add_option("--validate", o.data.validate, "Validation cohort manifest (longitudinal)");
    eval->add_option("--validate-cohort", o.data.validate_cohort, "Preset cohort used for validation (longitudinal)");
    eval->add_option("--registry", o.registry, "Registry file (registry protocol)");
    add_preset_options(eval, o.data);
    add_train_options(eval, o.train, true);
    eval->add_option("--seeds", o.train.seeds, "Number of consecutive seeds starting at --seed")->check(CLI::PositiveNumber);
    eval->add_option("--threshold", o.threshold, "Decision threshold (score >= threshold is positive)");
    eval->add_option("--jobs", o.jobs, "Parallel tasks (0 = all cores)");
    eval->add_flag("--record-runtime", o.record_runtime, "Fill runtime_ms (results are then not reproducible)");
    eval->add_flag("--assert", o.check, "Exit 2 when the mean evaluation-phase F1 is below --min-f1");
    eval->add_option("--min-f1", o.min_f1, "Threshold for --assert");
    eval->add_option("--out", o.out, "Output directory")->required();
    common(eval);

    auto* sw = app.add_subcommand("sweep", "Full-factorial hyperparameter sweep");
    sw->add_option("--protocol", o.protocol, "crossval or longitudinal")
        ->check(CLI::IsMember({"crossval", "longitudinal"}));
    sw->add_option("--folds", o.folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
    sw->add_option("--data", o.data.data, "Dataset manifest (default: generate from --preset per seed)");
    sw->add_option("--validate", o.data.validate, "Validation cohort manifest (longitudinal)");
    sw->add_option("--validate-cohort", o.data.validate_cohort, "Preset cohort used for validation (longitudinal)");
    add_preset_options(sw, o.data);
    add_train_options(sw, o.train, true);
    sw->add_option("--seeds", o.train.seeds, "Number of consecutive seeds starting at --seed")->check(CLI::PositiveNumber);
    sw->add_option("--threshold", o.threshold, "Decision threshold");
    sw->add_option("--jobs", o.jobs, "Parallel tasks (0 = all cores)");
    sw->add_flag("--record-runtime", o.record_runtime, "Fill runtime_ms (results are then not reproducible)");
    sw->add_flag("--assert", o.check,
                 "Exit 2 unless the final-stage F1 peaks at an interior rho (3+ rho values), else as eval");
    sw->add_option("--min-f1", o.min_f1, "Threshold for --assert with fewer than 3 rho values");
    sw->add_option("--out", o.out, "Output directory")->required();
    common(sw);

    auto* rep = app.add_subcommand("report", "Summary table and plot data from results files");
    rep->add_option("--in", o.inputs, "results.csv files")->required()->check(CLI::ExistingFile);
    rep->add_option("--out", o.out, "Output directory (default: next to the first input)");
    common(rep);

    auto* replay = app.add_subcommand("replay", "Re-run a command from its run manifest");
    replay->add_option("manifest", o.replay_manifest, "run manifest JSON")->required()->check(CLI::ExistingFile);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitInput;
    }

    if (replay->parsed()) return run_replay(o.replay_manifest);

    CLI::App* cmd = app.get_subcommands().front();
    if (!from_replay && !given_on_command_line(args, "--seed")) {
        if (const char* env = std::getenv("MSGTL_SEED")) {
            try {
                o.train.seed = std::stoull(env);
            } catch (const std::exception&) {
                std::fprintf(stderr, "error: MSGTL_SEED='%s' is not an unsigned integer\n", env);
                return kExitInput;
            }
            CLI::Option* seed = cmd->get_option("--seed");
            seed->clear();
            seed->add_result(std::to_string(o.train.seed));
        }
    }

    fs::path manifest_path = o.manifest;
    if (manifest_path.empty()) {
        if (cmd == train) manifest_path = o.out + ".manifest.json";
        else if (cmd == rep && o.out.empty()) manifest_path = fs::path(o.inputs.front()).parent_path() / "run_manifest.json";
        else manifest_path = fs::path(o.out) / "run_manifest.json";
    }

    std::unique_ptr<RunManifest> manifest;
    try {
        manifest = std::make_unique<RunManifest>(manifest_path, cmd->get_name(), args, cmd->config_to_str(true, false),
                                                 o.train.seed);
        int rc = kExitOk;
        if (cmd == gen) rc = cmd_gen_data(o, *manifest);
        else if (cmd == train) rc = cmd_train(o, *manifest);
        else if (cmd == eval) rc = cmd_eval(o, *manifest);
        else if (cmd == sw) rc = cmd_sweep(o, *manifest);
        else rc = cmd_report(o, *manifest);
        manifest->finish("ok", rc);
        return rc;
    } catch (const AssertionFailure& e) {
        std::fprintf(stderr, "assertion failed: %s\n", e.what());
        if (manifest) manifest->finish("assertion_failed", kExitAssert, e.what());
        return kExitAssert;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        if (manifest) manifest->finish("failed", kExitInput, e.what());
        return kExitInput;
    }
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(std::move(args), false);
}
