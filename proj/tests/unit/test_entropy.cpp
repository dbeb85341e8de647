#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "demtrain/entropy.hpp"
#include "demtrain/errors.hpp"
#include "demtrain/perturbation.hpp"
#include "demtrain/rng.hpp"
#include "test_utils.hpp"

using namespace demtrain;

TEST_CASE("uniform activation maximizes entropy at ln d") {
    std::vector<float> acts(1000, 3.7f);
    CHECK(entropy::layer_entropy(acts) == doctest::Approx(6.907755278982137).epsilon(1e-12));
    std::vector<float> two(2, 0.0f);
    CHECK(entropy::layer_entropy(two) == doctest::Approx(0.6931471805599453).epsilon(1e-12));
}

TEST_CASE("spiked activation matches the high-precision value") {
    // Frozen from an arbitrary-precision evaluation of -sum p ln p with
    // p = softmax([10, 0, 0, 0]).
    std::vector<float> acts{10.0f, 0.0f, 0.0f, 0.0f};
    const double expected = 0.0014980029292489210;
    double h = entropy::layer_entropy(acts);
    CHECK(std::fabs(h - expected) / expected < 1e-9);
}

TEST_CASE("entropy bounds hold over random activations") {
    Rng rng(123);
    for (int trial = 0; trial < 1000; ++trial) {
        int d = 1 + static_cast<int>(rng.below(64));
        std::vector<float> acts(static_cast<size_t>(d));
        for (auto& v : acts) v = static_cast<float>(rng.uniform(-12.0, 12.0));
        double h = entropy::layer_entropy(acts);
        CHECK(h >= -1e-9);
        CHECK(h <= std::log(static_cast<double>(d)) + 1e-9);
    }
}

TEST_CASE("entropy is shift and permutation invariant") {
    Rng rng(321);
    for (int trial = 0; trial < 1000; ++trial) {
        int d = 2 + static_cast<int>(rng.below(48));
        std::vector<float> acts(static_cast<size_t>(d));
        for (auto& v : acts) v = static_cast<float>(rng.uniform(-8.0, 8.0));
        double h = entropy::layer_entropy(acts);

        float c = static_cast<float>(rng.uniform(-5.0, 5.0));
        std::vector<float> shifted = acts;
        for (auto& v : shifted) v += c;
        CHECK(std::fabs(entropy::layer_entropy(shifted) - h) <= 1e-5 * std::max(1.0, h));

        std::vector<float> permuted = acts;
        rng.shuffle(permuted);
        CHECK(std::fabs(entropy::layer_entropy(permuted) - h) <= 1e-7 * std::max(1.0, h));
    }
}

TEST_CASE("entropy rejects empty and non-finite activations") {
    CHECK_THROWS_AS(entropy::layer_entropy(std::vector<float>{}), NumericError);
    std::vector<float> bad{1.0f, std::numeric_limits<float>::quiet_NaN()};
    CHECK_THROWS_AS(entropy::layer_entropy(bad), NumericError);
    std::vector<float> inf{1.0f, std::numeric_limits<float>::infinity()};
    CHECK_THROWS_AS(entropy::layer_entropy(inf), NumericError);
}

TEST_CASE("entropy gradient matches finite differences") {
    Rng rng(77);
    std::vector<float> acts(12);
    for (auto& v : acts) v = static_cast<float>(rng.uniform(-2.0, 2.0));
    std::vector<float> grad(acts.size());
    entropy::layer_entropy_grad(acts, grad);
    for (size_t j = 0; j < acts.size(); ++j) {
        std::vector<float> plus = acts, minus = acts;
        const float h = 1e-3f;
        plus[j] += h;
        minus[j] -= h;
        double fd = (entropy::layer_entropy(plus) - entropy::layer_entropy(minus)) / (2.0 * h);
        CHECK(std::fabs(fd - grad[j]) < 1e-4);
    }
}

TEST_CASE("quartiles are ordered and interpolate correctly") {
    auto q = entropy::quartiles_of({4.0, 1.0, 2.0, 3.0});
    CHECK(q.min == 1.0);
    CHECK(q.q1 == doctest::Approx(1.75));
    CHECK(q.median == doctest::Approx(2.5));
    CHECK(q.q3 == doctest::Approx(3.25));
    CHECK(q.max == 4.0);
    CHECK(q.min <= q.q1);
    CHECK(q.q1 <= q.median);
    CHECK(q.median <= q.q3);
    CHECK(q.q3 <= q.max);
}

namespace {

model::ProbedClassifier tiny_model() {
    return model::build_architecture(model::ArchId::kMlp, {3, 4, 4}, 4, 42);
}

Tensor random_batch(int n, Rng& rng) {
    Tensor batch({n, 3, 4, 4});
    for (auto& v : batch.vec()) v = static_cast<float>(rng.uniform());
    return batch;
}

}  // namespace

TEST_CASE("batch spectrum preserves order and batching does not change values") {
    auto net = tiny_model();
    Rng rng(5);
    Tensor batch = random_batch(2, rng);

    auto spectra = entropy::batch_spectrum(net, batch, net.probe_names());
    REQUIRE(spectra.size() == net.probe_names().size());

    Tensor first({1, 3, 4, 4}), second({1, 3, 4, 4});
    std::copy_n(batch.data(), first.numel(), first.data());
    std::copy_n(batch.data() + batch.sample_size(), second.numel(), second.data());
    auto s1 = entropy::batch_spectrum(net, first, net.probe_names());
    auto s2 = entropy::batch_spectrum(net, second, net.probe_names());
    for (size_t p = 0; p < spectra.size(); ++p) {
        CHECK(spectra[p].per_sample_entropy[0] == s1[p].per_sample_entropy[0]);
        CHECK(spectra[p].per_sample_entropy[1] == s2[p].per_sample_entropy[0]);
    }
}

TEST_CASE("identical samples produce constant spectra; singletons degenerate") {
    auto net = tiny_model();
    Rng rng(6);
    Tensor one = random_batch(1, rng);
    Tensor rep({3, 3, 4, 4});
    for (int s = 0; s < 3; ++s) {
        std::copy_n(one.data(), one.numel(), rep.data() + s * one.numel());
    }
    auto spectra = entropy::batch_spectrum(net, rep, {net.deepest_probe()});
    for (double h : spectra[0].per_sample_entropy) {
        CHECK(h == spectra[0].per_sample_entropy[0]);
    }
    auto single = entropy::batch_spectrum(net, one, {net.deepest_probe()});
    CHECK(single[0].summary.min == single[0].summary.max);
    CHECK(single[0].summary.median == single[0].summary.min);
}

TEST_CASE("zero perturbation yields identical spectra and exactly zero gap") {
    auto net = tiny_model();
    Rng rng(7);
    Tensor batch = random_batch(6, rng);
    auto zero = attack::zero_perturbation({3, 4, 4}, 10.0 / 255.0, 1);
    auto report = entropy::run_entropy_analysis(net, batch, zero, net.probe_names());
    CHECK(report.entropy_gap == 0.0);
    for (const auto& name : report.probe_order) {
        const auto& pa = report.per_probe.at(name);
        for (size_t i = 0; i < pa.clean.per_sample_entropy.size(); ++i) {
            CHECK(pa.clean.per_sample_entropy[i] == pa.perturbed.per_sample_entropy[i]);
        }
    }
}

TEST_CASE("entropy analysis rejects an empty probe list") {
    auto net = tiny_model();
    Rng rng(8);
    Tensor batch = random_batch(2, rng);
    auto zero = attack::zero_perturbation({3, 4, 4}, 0.01, 0);
    CHECK_THROWS_AS(entropy::run_entropy_analysis(net, batch, zero, {}), ConfigError);
}
