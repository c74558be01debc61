#include "doctest.h"

#include "msgtl/evalharness.hpp"
#include "msgtl/funnelgen.hpp"
#include "msgtl/rng.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace msgtl;
namespace fs = std::filesystem;

namespace {

FunnelDataset small_funnel(std::size_t stages, std::uint64_t seed, int cohort = 0, double drift = 0.0) {
    FunnelConfig c = minimal_preset(stages, seed);
    c.initial_population = 300;
    c.cohort = cohort;
    c.drift = drift;
    return generate(c);
}

TrainConfig quick() {
    TrainConfig c;
    c.epochs = 2;
    c.batch_size = 32;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("f1 examples") {
    const std::vector<std::uint8_t> y{1, 0, 1, 1, 0};
    CHECK(f1_positive(y, y).f1 == 1.0);

    // tp 2, fp 1, fn 1
    const std::vector<std::uint8_t> d{1, 1, 1, 0, 0};
    const MetricSet m = f1_positive(d, y);
    CHECK(m.tp == 2);
    CHECK(m.fp == 1);
    CHECK(m.fn == 1);
    CHECK(m.tn == 1);
    CHECK(m.precision == doctest::Approx(2.0 / 3.0));
    CHECK(m.recall == doctest::Approx(2.0 / 3.0));
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0));

    const std::vector<std::uint8_t> none(5, 0);
    CHECK(f1_positive(none, y).f1 == 0.0);
    CHECK_THROWS_AS(f1_positive(none, std::vector<std::uint8_t>{1}), std::invalid_argument);
    CHECK_THROWS_AS(f1_positive(std::vector<std::uint8_t>{}, std::vector<std::uint8_t>{}), std::invalid_argument);
}

TEST_CASE("f1 identity on random confusion tables") {
    Rng rng(3);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t n = 1 + rng.below(50);
        std::vector<std::uint8_t> d(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            d[i] = rng.bernoulli(0.5);
            y[i] = rng.bernoulli(0.3);
        }
        const MetricSet m = f1_positive(d, y);
        CHECK(m.count() == n);
        const double denom = 2.0 * m.tp + m.fp + m.fn;
        const double expected = denom > 0 ? 2.0 * m.tp / denom : 0.0;
        CHECK(m.f1 == doctest::Approx(expected).epsilon(1e-12));
        if (m.precision + m.recall > 0) {
            CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall / (m.precision + m.recall)).epsilon(1e-12));
        }
    }
}

TEST_CASE("variant names and configurations") {
    for (Variant v : {Variant::nn, Variant::nn_do, Variant::msgtl, Variant::msgtl_r, Variant::msgtl_da}) {
        CHECK(parse_variant(variant_name(v)) == v);
    }
    CHECK(parse_variant("msgtl_da") == Variant::msgtl_da);
    CHECK_THROWS_AS(parse_variant("cnn"), std::invalid_argument);

    const TrainConfig base;
    CHECK_FALSE(variant_config(Variant::nn, base).transfer);
    CHECK(variant_config(Variant::nn_do, base).dropout_p == 0.5);
    CHECK(variant_config(Variant::msgtl, base).transfer);
    CHECK(variant_config(Variant::msgtl, base).dropout_p == 0.0);
    CHECK(variant_config(Variant::msgtl_r, base).dropout_p == 0.5);
    CHECK(variant_config(Variant::msgtl_da, base).da_lambda == 0.1);
    CHECK(variant_config(Variant::msgtl, base).da_lambda == 0.0);
}

TEST_CASE("dropout baseline equals regularized transfer with nothing transferred") {
    FunnelDataset one = small_funnel(2, 4);
    one.stages.resize(1);
    const ModelRegistry a = train_msgtl(one, variant_config(Variant::nn_do, quick()));
    const ModelRegistry b = train_msgtl(one, variant_config(Variant::msgtl_r, quick()));
    CHECK(a.at(0).network.same_parameters(b.at(0).network));
}

TEST_CASE("two folds over ten applicants") {
    FunnelDataset ds = small_funnel(2, 1);
    ds = ds.restrict_to(std::span<const std::uint64_t>(ds.stages[0].ids.data(), 10));
    const auto folds = kfold_split(ds, 2, 7);
    REQUIRE(folds.size() == 2);
    CHECK(folds[0].test_ids.size() == 5);
    CHECK(folds[1].test_ids.size() == 5);
    CHECK(folds[0].test_ids == folds[1].train_ids);
}

TEST_CASE("folds partition applicants consistently across stages") {
    const FunnelDataset ds = generate(paper_like_preset(2));
    for (std::size_t k : {2, 3, 5, 10}) {
        for (std::uint64_t seed : {1, 2}) {
            const auto folds = kfold_split(ds, k, seed);
            std::set<std::uint64_t> seen;
            for (const auto& f : folds) {
                for (auto id : f.test_ids) CHECK(seen.insert(id).second);
                CHECK(f.test_ids.size() + f.train_ids.size() == ds.stages[0].rows());
                for (std::size_t q = 0; q < ds.stage_count(); ++q) {
                    CHECK(f.test_rows[q].size() + f.train_rows[q].size() == ds.stages[q].rows());
                    for (auto r : f.test_rows[q]) {
                        CHECK(std::binary_search(f.test_ids.begin(), f.test_ids.end(), ds.stages[q].ids[r]));
                    }
                }
            }
            CHECK(seen.size() == ds.stages[0].rows());
        }
    }
}

TEST_CASE("late stages follow the applicant assignment even when a fold is empty") {
    FunnelConfig c = minimal_preset(4, 3);
    c.initial_population = 200;
    for (auto& s : c.stages) s.survival_rate = 0.25;
    const FunnelDataset ds = generate(c);
    REQUIRE(ds.stages.back().rows() < 10);
    // Fewer rows than folds at the last stage is rejected.
    CHECK_THROWS_AS(kfold_split(ds, 10, 1), std::invalid_argument);
    const auto folds = kfold_split(ds, 3, 1);
    std::size_t total = 0;
    for (const auto& f : folds) total += f.test_rows.back().size();
    CHECK(total == ds.stages.back().rows());
}

TEST_CASE("cross-validation rows") {
    const FunnelDataset ds = small_funnel(3, 5);
    const auto rows = crossval_run(ds, Variant::msgtl, quick(), 3);
    CHECK(rows.size() == 3 * 3 + 3);
    std::size_t pooled = 0;
    for (const auto& r : rows) {
        CHECK(r.protocol == "crossval");
        CHECK(r.variant == "MSGTL");
        CHECK(r.metrics.has_value());
        CHECK_FALSE(r.runtime_ms.has_value());
        if (r.fold == kPooledFold) {
            ++pooled;
            CHECK(r.n_test == ds.stages[r.stage_index].rows());
            CHECK(r.metrics->count() == r.n_test);
        }
    }
    CHECK(pooled == 3);
    CHECK(crossval_run(ds, Variant::msgtl, quick(), 3) == rows);
    const auto timed = crossval_run(ds, Variant::msgtl, quick(), 3, 0.5, true);
    CHECK(timed.front().runtime_ms.has_value());
}

TEST_CASE("longitudinal protocol reads the validation cohort once") {
    const FunnelDataset a = small_funnel(3, 6, 0, 0.3), b = small_funnel(3, 6, 1, 0.3);
    ValidationAccessLog log;
    const auto rows = longitudinal_run(a, b, Variant::msgtl, quick(), 0.5, false, &log);
    CHECK(log.passes.size() == 1);
    CHECK(rows.size() == 3);
    for (const auto& r : rows) {
        CHECK(r.n_test == b.stages[r.stage_index].rows());
        CHECK(r.metrics.has_value());
    }
    FunnelDataset other = small_funnel(2, 6, 1);
    CHECK_THROWS_AS(longitudinal_run(a, other, Variant::msgtl, quick()), std::invalid_argument);

    FunnelDataset a1 = a, b1 = b;
    a1.stages.resize(1);
    b1.stages.resize(1);
    CHECK(longitudinal_run(a1, b1, Variant::nn, quick()).size() == 1);
}

TEST_CASE("registry evaluation scores every registry stage") {
    const FunnelDataset ds = small_funnel(3, 7);
    const ModelRegistry reg = train_msgtl(ds, quick(), MsgtlOptions{.start = 1});
    const auto rows = registry_run(reg, ds, "MSGTL");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].stage_index == 1);
    CHECK(rows[1].stage_index == 2);
}

TEST_CASE("sweep cardinality and ordering") {
    ExperimentPlan plan;
    plan.folds = 2;
    plan.rhos = {0.0, 0.3, 1.0};
    plan.variants = {Variant::msgtl, Variant::nn};
    plan.base = quick();
    DatasetSource src;
    src.train = [](std::uint64_t seed) { return small_funnel(3, seed); };
    const auto rows = sweep(src, plan);
    std::size_t pooled_per_variant[2] = {0, 0};
    for (const auto& r : rows) {
        if (r.fold == kPooledFold) ++pooled_per_variant[r.variant == "MSGTL" ? 0 : 1];
    }
    CHECK(pooled_per_variant[0] == 9);
    CHECK(pooled_per_variant[1] == 9);
    plan.jobs = 1;
    CHECK(sweep(src, plan) == rows);

    plan.rhos.clear();
    CHECK_THROWS_AS(sweep(src, plan), std::invalid_argument);
}

TEST_CASE("failing sweep tasks yield missing rows") {
    ExperimentPlan plan;
    plan.folds = 2;
    plan.base = quick();
    DatasetSource src;
    src.train = [](std::uint64_t seed) {
        FunnelDataset ds = small_funnel(2, seed);
        std::fill(ds.stages[1].labels.begin(), ds.stages[1].labels.end(), 0);
        return ds;
    };
    const auto rows = sweep(src, plan);
    std::size_t missing = 0;
    for (const auto& r : rows) missing += !r.metrics.has_value();
    CHECK(missing > 0);
}

TEST_CASE("exact signed-rank test against known values") {
    auto p = [](std::vector<double> d) {
        std::vector<double> zero(d.size(), 0.0);
        return wilcoxon_signed_rank_greater(d, zero);
    };
    CHECK(p({1, 2, 3, 4, 5}) == doctest::Approx(1.0 / 32));
    CHECK(p({1, -2, 3, 4, 5}) == doctest::Approx(3.0 / 32));
    CHECK(p({1, 1, -2}) == doctest::Approx(0.625));
    // Tied magnitudes: enumerate all 2^8 sign flips over the midranks.
    const std::vector<double> ranks{3.5, 2, 5, 7, 6, 8, 3.5, 1};
    const double observed = 3.5 + 5 + 7 + 8 + 3.5 + 1;
    int extreme = 0;
    for (unsigned m = 0; m < 256; ++m) {
        double w = 0;
        for (unsigned i = 0; i < 8; ++i) w += (m >> i & 1u) ? ranks[i] : 0.0;
        extreme += w >= observed - 1e-9;
    }
    CHECK(p({0.5, -0.25, 0.75, 1.5, -1.0, 2.0, 0.5, 0.125}) == doctest::Approx(extreme / 256.0));
    CHECK(p({0, 0}) == 1.0);
    CHECK(p({-1, -2, -3}) == 1.0);
    const std::vector<double> a{1, 2}, b{1};
    CHECK_THROWS_AS(wilcoxon_signed_rank_greater(a, b), std::invalid_argument);
}

TEST_CASE("kendall tau-b against known values") {
    auto tau = [](std::vector<double> x, std::vector<double> y) { return kendall_tau_b(x, y); };
    CHECK(tau({1, 2, 3, 4}, {1, 3, 2, 4}) == doctest::Approx(2.0 / 3.0));
    CHECK(tau({1, 1, 2, 3}, {1, 2, 2, 3}) == doctest::Approx(0.8));
    CHECK(tau({3, 2, 1, 0, 5}, {1, 2, 2, 9, 0}) == doctest::Approx(-0.9486832980505137));
    CHECK(tau({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(tau({1, 1, 1}, {1, 2, 3}) == 0.0);
}

TEST_CASE("results csv round trip keeps missing values explicit") {
    ResultRow r;
    r.protocol = "crossval";
    r.variant = "MSGTL";
    r.stage_name = "a, \"quoted\"";
    r.stage_index = 2;
    r.rho = 0.3;
    r.omega = 6;
    r.gamma = 2;
    r.seed = 9;
    r.fold = kPooledFold;
    r.metrics = MetricSet{0.5, 0.25, 1.0 / 3.0, 1, 1, 5, 3};
    r.n_train = 40;
    r.n_test = 10;
    r.phase = "evaluation";
    ResultRow missing = r;
    missing.fold = 3;
    missing.metrics.reset();
    missing.runtime_ms = 12.5;
    const std::vector<ResultRow> rows{r, missing};
    const std::string text = results_csv_text(rows);
    CHECK(text.rfind("protocol,variant,stage_name,stage_index,rho,omega,gamma,seed,fold,precision,recall,f1,n_train,"
                     "n_test,runtime_ms",
                     0) == 0);
    CHECK(text.find(",NA,NA,NA,") != std::string::npos);
    CHECK(text.find("pooled") != std::string::npos);
    const auto back = parse_results_csv(text);
    REQUIRE(back.size() == 2);
    CHECK(back[0].metrics->f1 == r.metrics->f1);
    CHECK(back[0].metrics->precision == r.metrics->precision);
    CHECK(back[0].stage_name == r.stage_name);
    CHECK(back[0].fold == kPooledFold);
    CHECK_FALSE(back[1].metrics.has_value());
    CHECK(back[1].runtime_ms == 12.5);
    CHECK(results_csv_text(back) == text);
}

TEST_CASE("summary of one run has zero spread") {
    const FunnelDataset ds = small_funnel(2, 8);
    const auto rows = crossval_run(ds, Variant::msgtl, quick(), 2);
    const auto cells = summarize(rows);
    REQUIRE(cells.size() == 2);
    for (const auto& c : cells) {
        CHECK(c.runs == 1);
        CHECK(c.sd_f1 == 0.0);
    }
}

TEST_CASE("summary statistics use pooled rows and count missing runs") {
    std::vector<ResultRow> rows;
    for (int seed = 1; seed <= 3; ++seed) {
        ResultRow r;
        r.protocol = "crossval";
        r.variant = "MSGTL";
        r.stage_name = "s";
        r.seed = static_cast<std::uint64_t>(seed);
        r.fold = kPooledFold;
        if (seed < 3) r.metrics = MetricSet{0, 0, seed == 1 ? 0.4 : 0.6, 0, 0, 0, 0};
        rows.push_back(r);
        ResultRow fold = r;
        fold.fold = 0;
        fold.metrics = MetricSet{0, 0, 0.99, 0, 0, 0, 0};
        rows.push_back(fold);
    }
    const auto cells = summarize(rows);
    REQUIRE(cells.size() == 1);
    CHECK(cells[0].runs == 2);
    CHECK(cells[0].missing == 1);
    CHECK(cells[0].mean_f1 == doctest::Approx(0.5));
    CHECK(cells[0].sd_f1 == doctest::Approx(std::sqrt(0.02)));
}

TEST_CASE("report writes tables and plot data that re-ingest exactly") {
    const FunnelDataset ds = small_funnel(3, 9);
    auto rows = crossval_run(ds, Variant::msgtl, quick(), 2);
    auto more = crossval_run(ds, Variant::nn, quick(), 2);
    rows.insert(rows.end(), more.begin(), more.end());
    rows.back().metrics.reset();

    const fs::path dir = fs::temp_directory_path() / "msgtl_report_test";
    fs::remove_all(dir);
    const auto written = report(rows, dir);
    CHECK(written.size() >= 4);
    CHECK(fs::exists(dir / "summary.md"));
    CHECK(fs::exists(dir / "plot_stage_f1_crossval.csv"));
    CHECK(fs::exists(dir / "plot_hyperparams_crossval.csv"));
    const std::string md = slurp(dir / "summary.md");
    CHECK(md.find("NA") != std::string::npos);

    const auto back = read_results_csv(dir / "results.csv");
    CHECK(back.size() == rows.size());
    const auto a = summarize(rows), b = summarize(back);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].mean_f1 == b[i].mean_f1);
        CHECK(a[i].sd_f1 == b[i].sd_f1);
        CHECK(a[i].missing == b[i].missing);
    }
    // Report from re-ingested rows is byte-identical.
    const fs::path dir2 = dir / "again";
    report(back, dir2);
    CHECK(slurp(dir2 / "summary.md") == md);
    fs::remove_all(dir);
}
