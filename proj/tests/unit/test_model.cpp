#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "demtrain/checkpoint.hpp"
#include "demtrain/classifier.hpp"
#include "demtrain/errors.hpp"
#include "demtrain/train.hpp"
#include "reference_net.hpp"
#include "test_utils.hpp"

using namespace demtrain;
using demtrain::testing::evaluate_loss;
using demtrain::testing::finite_diff_input;
using demtrain::testing::relative_error;

TEST_CASE("architecture roster honors the probe contract") {
    auto cnn = model::build_architecture(model::ArchId::kSmallCnn, {3, 32, 32}, 10, 1);
    CHECK(cnn.probe_points().size() >= 4);
    CHECK(cnn.deepest_probe() == "final.dense");
    Tensor zero({1, 3, 32, 32});
    Tensor logits = cnn.forward(zero);
    CHECK(logits.dim(1) == 10);
    for (std::int64_t i = 0; i < logits.numel(); ++i) CHECK(std::isfinite(logits[i]));

    // Probe order must follow layer order.
    int prev = -1;
    for (const auto& p : cnn.probe_points()) {
        CHECK(p.layer_index > prev);
        prev = p.layer_index;
    }

    auto mlp = model::build_architecture(model::ArchId::kMlp, {1, 28, 28}, 10, 1);
    for (const auto& p : mlp.probe_points()) {
        CHECK(mlp.layer(p.layer_index - 1).kind() == "dense");  // probes sit on dense+relu
        CHECK(p.name.find("dense") != std::string::npos);
    }

    CHECK_THROWS_AS(model::build_architecture(model::ArchId::kSmallCnn, {3, 4, 4}, 10, 1),
                    ConfigError);
    CHECK_THROWS_AS(model::build_architecture(model::ArchId::kSmallCnn, {3, 32}, 10, 1),
                    ConfigError);
}

TEST_CASE("probing never perturbs the forward computation") {
    auto net = model::build_architecture(model::ArchId::kSmallCnn, {3, 16, 16}, 4, 3);
    Rng rng(10);
    Tensor batch({5, 3, 16, 16});
    for (auto& v : batch.vec()) v = static_cast<float>(rng.uniform());

    Tensor plain = net.forward(batch);
    auto probed = net.forward_with_probes(batch, net.probe_names());
    REQUIRE(plain.numel() == probed.logits.numel());
    for (std::int64_t i = 0; i < plain.numel(); ++i) {
        CHECK(plain[i] == probed.logits[i]);  // bitwise
    }
    for (const auto& [name, acts] : probed.probes) {
        CHECK(acts.dim(0) == 5);
        CHECK(acts.sample_size() == net.probe_width(name));
    }
    CHECK_THROWS_AS(net.forward_with_probes(batch, {"nope"}), ConfigError);
}

TEST_CASE("hand-built linear stack reproduces hand-computed probe values") {
    // Two dense layers with known weights; probe after the first.
    Rng rng(1);
    std::vector<std::unique_ptr<model::Layer>> layers;
    layers.push_back(model::make_dense("fc1", 2, 2, rng));
    layers.push_back(model::make_dense("fc2", 2, 2, rng));
    std::vector<model::ProbePoint> probes{{"fc1.out", 0}};
    auto net = model::ProbedClassifier::assemble(model::ArchId::kMlp, {1, 1, 2}, 2, 1,
                                                 std::move(layers), std::move(probes));
    // W1 = [[1,2],[3,4]], b1 = [0.5,-0.5]; W2 = I, b2 = 0.
    auto params = net.parameters();
    params[0].tensor->vec() = {1, 2, 3, 4};
    params[1].tensor->vec() = {0.5f, -0.5f};
    params[2].tensor->vec() = {1, 0, 0, 1};
    params[3].tensor->vec() = {0, 0};

    Tensor x({1, 1, 1, 2});
    x.vec() = {2.0f, -1.0f};
    auto res = net.forward_with_probes(x, {"fc1.out"});
    const Tensor& probe = res.probes.at("fc1.out");
    CHECK(probe[0] == doctest::Approx(1 * 2 + 2 * -1 + 0.5));   // 0.5
    CHECK(probe[1] == doctest::Approx(3 * 2 + 4 * -1 - 0.5));   // 1.5
    CHECK(res.logits[0] == doctest::Approx(0.5));
    CHECK(res.logits[1] == doctest::Approx(1.5));
}

TEST_CASE("production forward matches the double-precision reference") {
    for (auto arch : {model::ArchId::kSmallCnn, model::ArchId::kMlp}) {
        auto net = model::build_architecture(arch, {3, 8, 8}, 4, 23);
        Rng rng(13);
        Tensor batch({3, 3, 8, 8});
        for (auto& v : batch.vec()) v = static_cast<float>(rng.uniform());
        auto res = net.forward_with_probes(batch, net.probe_names());

        testing::ReferenceNet ref(net);
        auto dbatch = testing::to_double_batch(batch);
        for (int s = 0; s < 3; ++s) {
            auto outs = ref.forward_all(dbatch[static_cast<size_t>(s)]);
            for (const auto& p : net.probe_points()) {
                const auto& acts = res.probes.at(p.name);
                const auto& ref_acts = outs[static_cast<size_t>(p.layer_index)];
                for (std::int64_t i = 0; i < acts.sample_size(); ++i) {
                    double got = acts[s * acts.sample_size() + i];
                    double want = ref_acts[static_cast<size_t>(i)];
                    CHECK(std::fabs(got - want) <= 1e-4 * std::max(1.0, std::fabs(want)));
                }
            }
            auto ref_logits = outs.back();
            for (int k = 0; k < 4; ++k) {
                CHECK(std::fabs(res.logits[s * 4 + k] - ref_logits[static_cast<size_t>(k)]) <=
                      1e-4);
            }
        }
    }
}

TEST_CASE("constant loss yields exactly zero input gradient") {
    auto net = model::build_architecture(model::ArchId::kSmallCnn, {3, 8, 8}, 4, 5);
    Rng rng(11);
    Tensor batch({2, 3, 8, 8});
    for (auto& v : batch.vec()) v = static_cast<float>(rng.uniform());
    Tensor g = model::input_gradient(net, batch, model::ConstantLoss(3.0));
    for (std::int64_t i = 0; i < g.numel(); ++i) CHECK(g[i] == 0.0f);
}

TEST_CASE("linear model with squared error matches the analytic gradient") {
    Rng rng(2);
    std::vector<std::unique_ptr<model::Layer>> layers;
    layers.push_back(model::make_dense("fc", 3, 2, rng));
    auto net = model::ProbedClassifier::assemble(model::ArchId::kMlp, {1, 1, 3}, 2, 1,
                                                 std::move(layers), {});
    auto params = net.parameters();
    const std::vector<float> w{0.5f, -1.0f, 2.0f, 1.5f, 0.25f, -0.75f};
    params[0].tensor->vec().assign(w.begin(), w.end());
    params[1].tensor->vec() = {0.0f, 0.0f};

    Tensor x({1, 1, 1, 3});
    x.vec() = {1.0f, 2.0f, -1.0f};
    Tensor y({1, 2});
    y.vec() = {1.0f, -1.0f};

    Tensor g = model::input_gradient(net, x, model::SquaredErrorLoss(y));
    // gradient = 2 W^T (W x - y)
    const float wx0 = 0.5f * 1 + -1.0f * 2 + 2.0f * -1;   // -3.5
    const float wx1 = 1.5f * 1 + 0.25f * 2 + -0.75f * -1; // 2.75
    const float r0 = wx0 - 1.0f, r1 = wx1 + 1.0f;
    const float expected[3] = {2 * (0.5f * r0 + 1.5f * r1), 2 * (-1.0f * r0 + 0.25f * r1),
                               2 * (2.0f * r0 + -0.75f * r1)};
    for (int i = 0; i < 3; ++i) CHECK(g[i] == doctest::Approx(expected[i]).epsilon(1e-5));
}

TEST_CASE("input gradients agree with central finite differences on every architecture") {
    // The finite differences run against an independent double-precision
    // reference forward; ReLU/maxpool losses are only piecewise smooth, so
    // coordinates whose FD window straddles a kink are rejected by an
    // h-consistency check before comparing against the analytic gradient.
    struct Case {
        model::ArchId arch;
        std::vector<int> shape;
    };
    const Case cases[] = {
        {model::ArchId::kSmallCnn, {3, 8, 8}},
        {model::ArchId::kWideSmall, {3, 8, 8}},
        {model::ArchId::kMlp, {1, 6, 6}},
    };
    for (const auto& c : cases) {
        CAPTURE(model::to_string(c.arch));
        auto net = model::build_architecture(c.arch, c.shape, 4, 17);
        Rng rng(29);
        Tensor batch({2, c.shape[0], c.shape[1], c.shape[2]});
        for (auto& v : batch.vec()) v = static_cast<float>(rng.uniform(0.2, 0.8));
        auto loss = model::CrossEntropyLoss::toward_class(1);
        Tensor g = model::input_gradient(net, batch, loss);

        testing::ReferenceNet ref(net);
        auto dbatch = testing::to_double_batch(batch);
        const int target = 1;
        auto fd_at = [&](std::int64_t idx, double h) {
            auto plus = dbatch, minus = dbatch;
            size_t s = static_cast<size_t>(idx / batch.sample_size());
            size_t i = static_cast<size_t>(idx % batch.sample_size());
            plus[s][i] += h;
            minus[s][i] -= h;
            return (ref.cce_toward(plus, target) - ref.cce_toward(minus, target)) / (2.0 * h);
        };

        int checked = 0;
        for (int attempt = 0; attempt < 200 && checked < 5; ++attempt) {
            std::int64_t idx =
                static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(batch.numel())));
            double f1 = fd_at(idx, 1e-4);
            double f2 = fd_at(idx, 2e-5);
            if (std::fabs(f1) < 0.01) continue;                              // measurable slope
            if (std::fabs(f1 - f2) > 1e-6 * std::max(1.0, std::fabs(f1))) continue;  // kink
            CAPTURE(idx);
            CHECK(relative_error(f2, g[idx]) <= 1e-3);
            ++checked;
        }
        CHECK(checked == 5);
    }
}

TEST_CASE("probe entropy loss gradient also passes finite differences") {
    auto net = model::build_architecture(model::ArchId::kSmallCnn, {3, 8, 8}, 4, 19);
    Rng rng(31);
    Tensor batch({2, 3, 8, 8});
    for (auto& v : batch.vec()) v = static_cast<float>(rng.uniform(0.2, 0.8));
    const std::string probe = net.deepest_probe();
    model::ProbeEntropyLoss loss(probe, -1.0);
    Tensor g = model::input_gradient(net, batch, loss);

    testing::ReferenceNet ref(net);
    auto dbatch = testing::to_double_batch(batch);
    const int probe_layer = net.probe_layer(probe);
    auto neg_entropy = [&](const std::vector<std::vector<double>>& b) {
        double total = 0.0;
        for (const auto& x : b) {
            auto acts = ref.forward_all(x)[static_cast<size_t>(probe_layer)];
            double m = acts[0];
            for (double v : acts) m = std::max(m, v);
            double sum = 0.0;
            for (double v : acts) sum += std::exp(v - m);
            double log_z = std::log(sum);
            double h = 0.0;
            for (double v : acts) {
                double t = v - m - log_z;
                h -= std::exp(t) * t;
            }
            total += -h;
        }
        return total / static_cast<double>(b.size());
    };
    auto fd_at = [&](std::int64_t idx, double h) {
        auto plus = dbatch, minus = dbatch;
        size_t s = static_cast<size_t>(idx / batch.sample_size());
        size_t i = static_cast<size_t>(idx % batch.sample_size());
        plus[s][i] += h;
        minus[s][i] -= h;
        return (neg_entropy(plus) - neg_entropy(minus)) / (2.0 * h);
    };

    int checked = 0;
    for (int attempt = 0; attempt < 300 && checked < 5; ++attempt) {
        std::int64_t idx =
            static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(batch.numel())));
        double f1 = fd_at(idx, 1e-4);
        double f2 = fd_at(idx, 2e-5);
        if (std::fabs(f1) < 0.005) continue;
        if (std::fabs(f1 - f2) > 1e-6 * std::max(1.0, std::fabs(f1))) continue;
        CAPTURE(idx);
        CHECK(relative_error(f2, g[idx]) <= 1e-3);
        ++checked;
    }
    CHECK(checked >= 3);
}

TEST_CASE("training rejects bad configs and reports divergence") {
    auto pair = testing::tiny_blobs("train_guard");
    auto net = model::build_architecture(model::ArchId::kSmallCnn, {3, 8, 8}, 4, 7);

    model::TrainConfig zero_epochs;
    zero_epochs.epochs = 0;
    CHECK_THROWS_AS(model::train_baseline(net, pair.train, zero_epochs), ConfigError);

    model::TrainConfig wrong_split;
    CHECK_THROWS_AS(model::train_baseline(net, pair.test, wrong_split), ConfigError);

    model::TrainConfig absurd;
    absurd.epochs = 12;
    absurd.learning_rate = 1e9;  // drives the loss to NaN
    try {
        model::train_baseline(net, pair.train, absurd);
        FAIL("expected divergence");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("training is deterministic and preserves the parameter count") {
    auto pair = testing::tiny_blobs("train_det");
    auto net = model::build_architecture(model::ArchId::kSmallCnn, {3, 8, 8}, 4, 7);
    const auto params_before = net.parameter_count();

    model::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 32;
    cfg.learning_rate = 0.02;
    cfg.seed = 5;
    auto a = model::train_baseline(net, pair.train, cfg);
    auto b = model::train_baseline(net, pair.train, cfg);
    CHECK(a.model.checksum() == b.model.checksum());
    CHECK(a.model.parameter_count() == params_before);
    CHECK(a.epoch_loss.back() < a.epoch_loss.front());

    // Momentum path is deterministic too.
    cfg.optimizer_kind = model::OptimizerKind::kSgdMomentum;
    auto c = model::train_baseline(net, pair.train, cfg);
    auto d = model::train_baseline(net, pair.train, cfg);
    CHECK(c.model.checksum() == d.model.checksum());
    CHECK(c.model.checksum() != a.model.checksum());
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    auto net = model::build_architecture(model::ArchId::kSmallCnn, {3, 8, 8}, 4, 21);
    auto dir = std::filesystem::temp_directory_path() / "demtrain_ckpt_test";
    std::filesystem::remove_all(dir);
    model::save_checkpoint(net, dir);
    auto loaded = model::load_checkpoint(dir);
    CHECK(loaded.checksum() == net.checksum());
    CHECK(loaded.probe_names() == net.probe_names());
    CHECK(model::checkpoint_checksum(dir) == net.checksum());
    CHECK_THROWS_AS(model::load_checkpoint(dir / "missing"), IoError);
}

TEST_CASE("blobs remain linearly separable (logistic oracle)") {
    auto pair = testing::default_blobs("logistic_default");
    testing::LogisticOracle oracle(3 * 16 * 16, 4);
    oracle.fit(pair.train, 20, 0.02);
    CHECK(oracle.accuracy(pair.test) >= 0.95);
}
