#include "doctest.h"

#include "msgtl/funnelgen.hpp"
#include "msgtl/pipeline.hpp"
#include "msgtl/transfer.hpp"
#include "support/oracles.hpp"

#include <algorithm>
#include <numeric>

using namespace msgtl;

namespace {

FunnelDataset small_funnel(std::size_t stages, std::uint64_t seed) {
    FunnelConfig c = minimal_preset(stages, seed);
    c.initial_population = 400;
    return generate(c);
}

TrainConfig quick_config() {
    TrainConfig c;
    c.epochs = 4;
    c.batch_size = 32;
    return c;
}

// Separable with margin: label = x0 + x1 > 0, points at distance >= 0.5.
std::pair<Matrix, std::vector<std::uint8_t>> separable_set(std::size_t n, Rng& rng) {
    Matrix x(n, 2);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double a, b;
        do {
            a = 4.0 * rng.uniform() - 2.0;
            b = 4.0 * rng.uniform() - 2.0;
        } while (std::abs(a + b) < 0.5 * std::sqrt(2.0));
        x(i, 0) = a;
        x(i, 1) = b;
        y[i] = a + b > 0 ? 1 : 0;
    }
    return {x, y};
}

double best_threshold_f1(const std::vector<double>& scores, const std::vector<std::uint8_t>& y) {
    double best = 0;
    for (double t : scores) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const bool d = scores[i] >= t;
            tp += d && y[i];
            fp += d && !y[i];
            fn += !d && y[i];
        }
        best = std::max(best, 2.0 * tp / static_cast<double>(2 * tp + fp + fn));
    }
    return best;
}

}  // namespace

TEST_CASE("zero epochs leaves the network unchanged") {
    Rng rng(1);
    auto [x, y] = separable_set(50, rng);
    StageNetwork net = init_network(width_schedule(2, 2, 6), rng);
    const StageNetwork before = net;
    TrainConfig c;
    c.epochs = 0;
    const auto result = train_stage(x, y, net, c);
    CHECK(result.steps == 0);
    CHECK(net.same_parameters(before));
}

TEST_CASE("separable toy set is learned perfectly") {
    Rng rng(2);
    auto [x, y] = separable_set(200, rng);
    StageNetwork net = init_network(width_schedule(2, 2, 6), rng);
    TrainConfig c;
    c.epochs = 200;
    c.batch_size = 32;
    c.eta0 = 0.01;
    train_stage(x, y, net, c);
    const auto scores = infer(net, x);
    // The oracle: a threshold achieving F1 = 1 exists, and 0.5 is one.
    CHECK(best_threshold_f1(scores, y) == 1.0);
    std::size_t errors = 0;
    for (std::size_t i = 0; i < y.size(); ++i) errors += (scores[i] >= 0.5) != (y[i] == 1);
    CHECK(errors == 0);
}

TEST_CASE("train_stage validates its inputs") {
    Rng rng(3);
    StageNetwork net = init_network(width_schedule(2, 2, 6), rng);
    TrainConfig c = quick_config();
    const std::vector<std::uint8_t> y{1, 0};
    CHECK_THROWS_AS(train_stage(Matrix(0, 2), {}, net, c), std::invalid_argument);
    CHECK_THROWS_AS(train_stage(Matrix(3, 2), y, net, c), std::invalid_argument);
    CHECK_THROWS_AS(train_stage(Matrix(2, 3), y, net, c), std::invalid_argument);
    Matrix bad(2, 2);
    bad(1, 1) = std::nan("");
    CHECK_THROWS_AS(train_stage(bad, y, net, c), std::invalid_argument);
}

TEST_CASE("rho zero keeps the transferred region frozen through training") {
    const FunnelDataset ds = small_funnel(2, 4);
    TrainConfig c = quick_config();
    c.rho = 0.0;
    StageNetwork after_transfer;
    MsgtlOptions opts;
    opts.on_step = [&](std::size_t q, std::size_t step, const StageNetwork& net) {
        if (q == 1 && step == 0) after_transfer = net;
    };
    const ModelRegistry reg = train_msgtl(ds, c, opts);
    const StageNetwork& prev = reg.at(0).network;
    const StageNetwork& net = reg.at(1).network;
    CHECK(snapshot_equals_transfer(net, prev));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        for (std::size_t r = 0; r < layer.transferred.rows; ++r) {
            for (std::size_t col = 0; col < layer.transferred.cols; ++col) {
                CHECK(layer.live_weights(r, col) == layer.snapshot_weights(r, col));
                CHECK(layer.live_weights(r, col) == after_transfer.layers[l].live_weights(r, col));
            }
        }
    }
}

TEST_CASE("rho one trains exactly like unmasked fine-tuning from the transferred weights") {
    const FunnelDataset ds = small_funnel(2, 5);
    TrainConfig c = quick_config();
    c.rho = 1.0;
    const ModelRegistry first = train_msgtl(ds, c, MsgtlOptions{.start = 0, .stop = 0});
    const Matrix& x = ds.stages[1].features;
    const auto& y = ds.stages[1].labels;

    Rng init_rng(c.seed, {static_cast<std::uint64_t>(Stream::init), 1});
    StageNetwork fresh = init_network(width_schedule(x.cols(), c.gamma, c.omega), init_rng);
    auto [masked, report] = transfer_weights(first.at(0).network, fresh, 1.0, false, 3, 1);
    StageNetwork twin = zero_network(masked.topology);
    for (std::size_t l = 0; l < twin.layers.size(); ++l) {
        twin.layers[l].live_weights = masked.layers[l].live_weights;
        twin.layers[l].live_bias = masked.layers[l].live_bias;
    }

    std::vector<StageNetwork> trace_masked, trace_twin;
    StageTrainingOptions o1{.stage_index = 1, .on_step = [&](std::size_t, const StageNetwork& n) { trace_masked.push_back(n); }};
    StageTrainingOptions o2{.stage_index = 1, .on_step = [&](std::size_t, const StageNetwork& n) { trace_twin.push_back(n); }};
    train_stage(x, y, masked, c, o1);
    train_stage(x, y, twin, c, o2);
    REQUIRE(trace_masked.size() == trace_twin.size());
    REQUIRE(!trace_masked.empty());
    for (std::size_t s = 0; s < trace_masked.size(); ++s) {
        for (std::size_t l = 0; l < twin.layers.size(); ++l) {
            REQUIRE(trace_masked[s].layers[l].live_weights == trace_twin[s].layers[l].live_weights);
            REQUIRE(trace_masked[s].layers[l].live_bias == trace_twin[s].layers[l].live_bias);
        }
    }
}

TEST_CASE("single-stage dataset matches plain network training") {
    const FunnelDataset ds = small_funnel(2, 6);
    FunnelDataset one = ds;
    one.stages.resize(1);
    TrainConfig c = quick_config();
    const ModelRegistry reg = train_msgtl(one, c);
    REQUIRE(reg.stages.size() == 1);

    Rng init_rng(c.seed, {static_cast<std::uint64_t>(Stream::init), 0});
    StageNetwork net = init_network(width_schedule(one.stages[0].feature_count(), c.gamma, c.omega), init_rng);
    train_stage(one.stages[0].features, one.stages[0].labels, net, c);
    CHECK(net.same_parameters(reg.at(0).network));
}

TEST_CASE("three-stage funnel yields three transferring stages") {
    const FunnelDataset ds = small_funnel(3, 7);
    const ModelRegistry reg = train_msgtl(ds, quick_config());
    REQUIRE(reg.stages.size() == 3);
    CHECK(reg.start() == 0);
    CHECK(reg.at(0).report.transferred_parameters == 0);
    for (std::size_t q = 1; q < 3; ++q) {
        CHECK(reg.at(q).report.transferred_parameters > 0);
        CHECK(reg.at(q).network.topology.input_width() == ds.stages[q].feature_count());
        CHECK(reg.at(q).report.transferred_parameters + reg.at(q).report.fresh_parameters ==
              reg.at(q).network.parameter_count());
    }
}

TEST_CASE("training is deterministic and prefix-stable") {
    const FunnelDataset ds = small_funnel(3, 8);
    const TrainConfig c = quick_config();
    const ModelRegistry a = train_msgtl(ds, c);
    const ModelRegistry b = train_msgtl(ds, c);
    CHECK(serialize_registry(a) == serialize_registry(b));

    // Networks for a prefix do not depend on later stages.
    FunnelDataset prefix = ds;
    prefix.stages.resize(2);
    const ModelRegistry p = train_msgtl(prefix, c);
    CHECK(p.at(0) == a.at(0));
    CHECK(p.at(1) == a.at(1));
}

TEST_CASE("start and stop select a contiguous stage range") {
    const FunnelDataset ds = small_funnel(4, 9);
    const ModelRegistry reg = train_msgtl(ds, quick_config(), MsgtlOptions{.start = 1, .stop = 2});
    REQUIRE(reg.stages.size() == 2);
    CHECK(reg.start() == 1);
    CHECK(reg.contains(2));
    CHECK_FALSE(reg.contains(0));
    CHECK_FALSE(reg.contains(3));
    CHECK(reg.at(1).report.transferred_parameters == 0);
    CHECK_THROWS_AS(reg.at(3), std::out_of_range);
    CHECK_THROWS_AS(train_msgtl(ds, quick_config(), MsgtlOptions{.start = 9}), std::invalid_argument);
}

TEST_CASE("no transfer variant trains every stage independently") {
    const FunnelDataset ds = small_funnel(3, 10);
    TrainConfig c = quick_config();
    c.transfer = false;
    const ModelRegistry reg = train_msgtl(ds, c);
    for (const auto& e : reg.stages) {
        CHECK(e.report.transferred_parameters == 0);
        for (const auto& layer : e.network.layers) CHECK(layer.transferred == Region{});
    }
}

TEST_CASE("stage training only reads its own stage") {
    const FunnelDataset ds = small_funnel(4, 11);
    DataAccessLog log;
    train_msgtl(ds, quick_config(), MsgtlOptions{.access_log = &log});
    REQUIRE(log.accesses.size() == 4);
    for (const auto& a : log.accesses) CHECK(a.training_stage == a.data_stage);

    TrainConfig da = quick_config();
    da.da_lambda = 0.1;
    DataAccessLog da_log;
    train_msgtl(ds, da, MsgtlOptions{.access_log = &da_log});
    for (const auto& a : da_log.accesses) {
        CHECK((a.data_stage == a.training_stage || a.data_stage + 1 == a.training_stage));
    }
}

TEST_CASE("adversarial variant trains and stays deterministic") {
    const FunnelDataset ds = small_funnel(3, 12);
    TrainConfig c = quick_config();
    c.da_lambda = 0.1;
    const ModelRegistry a = train_msgtl(ds, c);
    const ModelRegistry b = train_msgtl(ds, c);
    CHECK(serialize_registry(a) == serialize_registry(b));
    const ModelRegistry plain = train_msgtl(ds, quick_config());
    CHECK_FALSE(plain.at(1).network.same_parameters(a.at(1).network));
    CHECK(plain.at(0).network.same_parameters(a.at(0).network));
}

TEST_CASE("degenerate stages are rejected") {
    FunnelDataset ds = small_funnel(2, 13);
    std::fill(ds.stages[1].labels.begin(), ds.stages[1].labels.end(), 1);
    CHECK_THROWS_AS(train_msgtl(ds, quick_config()), DegenerateStageError);
}

TEST_CASE("early stopping restores the best validation network") {
    const FunnelDataset ds = small_funnel(2, 14);
    TrainConfig c = quick_config();
    c.epochs = 40;
    c.patience = 3;
    Rng rng(1);
    StageNetwork net = init_network(width_schedule(ds.stages[0].feature_count(), 2, 6), rng);
    const auto r = train_stage(ds.stages[0].features, ds.stages[0].labels, net, c);
    CHECK(r.epochs_run <= 40);
    CHECK(r.best_epoch >= 1);
    CHECK(r.best_epoch <= r.epochs_run);
    if (r.epochs_run < 40) CHECK(r.epochs_run == r.best_epoch + 3);
    CHECK(r.loss_trace.size() == r.epochs_run);
}

TEST_CASE("previous score feature adds one input column") {
    const FunnelDataset ds = small_funnel(3, 15);
    TrainConfig c = quick_config();
    c.prev_score_feature = true;
    const ModelRegistry reg = train_msgtl(ds, c);
    CHECK(reg.at(0).network.topology.input_width() == ds.stages[0].feature_count());
    CHECK(reg.at(1).network.topology.input_width() == ds.stages[1].feature_count() + 1);
    const auto preds = predict(reg, 2, ds.stages[2].features, 0.5, ds.stages[2].ids);
    CHECK(preds.size() == ds.stages[2].rows());
}

TEST_CASE("predict decisions and thresholds") {
    const FunnelDataset ds = small_funnel(2, 16);
    ModelRegistry reg = train_msgtl(ds, quick_config());
    const Matrix& x = ds.stages[1].features;

    ModelRegistry zero = reg;
    zero.stages[1].network = zero_network(reg.at(1).network.topology);
    for (const auto& p : predict(zero, 1, x)) {
        CHECK(p.score == 0.5);
        CHECK(p.decision);
    }
    for (const auto& p : predict(reg, 1, x, 0.0)) CHECK(p.decision);
    for (const auto& p : predict(reg, 1, x, 1.01)) CHECK_FALSE(p.decision);
    for (const auto& p : predict(reg, 1, x, 0.5)) CHECK(p.decision == (p.score >= 0.5));

    const auto with_ids = predict(reg, 1, x, 0.5, ds.stages[1].ids);
    CHECK(with_ids.front().id == ds.stages[1].ids.front());
    CHECK_THROWS_AS(predict(reg, 1, x.leading_columns(2)), std::invalid_argument);
}

TEST_CASE("scores are invariant to row order") {
    const FunnelDataset ds = small_funnel(2, 17);
    const ModelRegistry reg = train_msgtl(ds, quick_config());
    const Matrix& x = ds.stages[1].features;
    std::vector<std::size_t> perm(x.rows());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(3);
    rng.shuffle(std::span<std::size_t>(perm));
    const auto base = predict(reg, 1, x);
    const auto shuffled = predict(reg, 1, x.select_rows(perm));
    for (std::size_t i = 0; i < perm.size(); ++i) CHECK(shuffled[i].score == base[perm[i]].score);
}
