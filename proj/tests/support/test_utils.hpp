#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "demtrain/classifier.hpp"
#include "demtrain/dataset.hpp"
#include "demtrain/rng.hpp"
#include "demtrain/train.hpp"

namespace demtrain::testing {

inline double evaluate_loss(const model::ProbedClassifier& net, const Tensor& batch,
                            const model::ScalarLoss& loss) {
    auto pr = net.forward_with_probes(batch, loss.probes());
    return loss.value(pr.logits, pr.probes);
}

// Central finite difference of the mean-batch loss w.r.t. one input coordinate.
inline double finite_diff_input(const model::ProbedClassifier& net, const Tensor& batch,
                                const model::ScalarLoss& loss, std::int64_t flat_index,
                                double h) {
    Tensor plus = batch, minus = batch;
    plus[flat_index] = static_cast<float>(plus[flat_index] + h);
    minus[flat_index] = static_cast<float>(minus[flat_index] - h);
    return (evaluate_loss(net, plus, loss) - evaluate_loss(net, minus, loss)) / (2.0 * h);
}

inline double relative_error(double a, double b, double floor = 1e-4) {
    double denom = std::max({std::fabs(a), std::fabs(b), floor});
    return std::fabs(a - b) / denom;
}

// ReLU/maxpool losses are only piecewise smooth; at a kink the central
// difference converges to the average of the one-sided slopes, not the
// gradient. Pick coordinates where the FD estimate is self-consistent across
// two step sizes (a smoothness check that never looks at the analytic value)
// and carries a measurable derivative.
struct FdProbe {
    std::int64_t index;
    double fd;
};

inline std::vector<FdProbe> smooth_fd_coordinates(const model::ProbedClassifier& net,
                                                  const Tensor& batch,
                                                  const model::ScalarLoss& loss, int want,
                                                  Rng& rng, double h = 5e-3,
                                                  double min_grad = 0.05) {
    std::vector<FdProbe> picked;
    for (int attempt = 0; attempt < 400 && static_cast<int>(picked.size()) < want; ++attempt) {
        std::int64_t idx =
            static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(batch.numel())));
        double fd1 = finite_diff_input(net, batch, loss, idx, h);
        if (std::fabs(fd1) < min_grad) continue;
        double fd2 = finite_diff_input(net, batch, loss, idx, h / 2.0);
        if (std::fabs(fd1 - fd2) > 2e-4 * std::max(std::fabs(fd1), 1.0)) continue;
        picked.push_back({idx, fd2});
    }
    return picked;
}

// Small, easy blob dataset cached under tmp; shapes stay conv-friendly. This
// fixture is for exercising mechanics quickly, not for acceptance thresholds.
inline data::DatasetPair tiny_blobs(const std::string& tag, int train_count = 240,
                                    int test_count = 80, int hw = 8,
                                    std::uint64_t seed = 99) {
    data::BlobsParams p;
    p.train_count = train_count;
    p.test_count = test_count;
    p.height = hw;
    p.width = hw;
    p.blob_sigma = hw / 3.0;
    p.amplitude_lo = 0.25;
    p.amplitude_hi = 0.5;
    p.distractor_scale = 0.0;
    p.pixel_noise = 0.06;
    p.center_jitter = 1.0;
    p.seed = seed;
    std::filesystem::path root =
        std::filesystem::temp_directory_path() / ("demtrain_tests_" + tag);
    return data::load_synthetic_blobs(root, p);
}

// The real (acceptance-scale) synthetic dataset with default parameters.
inline data::DatasetPair default_blobs(const std::string& tag) {
    std::filesystem::path root =
        std::filesystem::temp_directory_path() / ("demtrain_tests_" + tag);
    return data::load_synthetic_blobs(root, data::BlobsParams{});
}

// Multinomial logistic regression on flattened pixels, trained with plain
// gradient descent; an implementation-independent separability oracle.
class LogisticOracle {
public:
    LogisticOracle(int dim, int classes) : dim_(dim), classes_(classes),
        w_(static_cast<size_t>(dim * classes), 0.0), b_(static_cast<size_t>(classes), 0.0) {}

    void fit(const data::LabeledDataset& ds, int epochs, double lr) {
        const int n = ds.count();
        std::vector<double> logits(static_cast<size_t>(classes_));
        std::vector<double> probs(static_cast<size_t>(classes_));
        for (int epoch = 0; epoch < epochs; ++epoch) {
            for (int i = 0; i < n; ++i) {
                auto x = ds.images.sample(i);
                int y = ds.labels[static_cast<size_t>(i)];
                softmax(x, logits, probs);
                for (int c = 0; c < classes_; ++c) {
                    double g = probs[static_cast<size_t>(c)] - (c == y ? 1.0 : 0.0);
                    b_[static_cast<size_t>(c)] -= lr * g;
                    double* wc = w_.data() + static_cast<std::int64_t>(c) * dim_;
                    for (int d = 0; d < dim_; ++d) {
                        wc[d] -= lr * g * static_cast<double>(x[static_cast<size_t>(d)]);
                    }
                }
            }
        }
    }

    double accuracy(const data::LabeledDataset& ds) const {
        std::vector<double> logits(static_cast<size_t>(classes_));
        std::vector<double> probs(static_cast<size_t>(classes_));
        int correct = 0;
        for (int i = 0; i < ds.count(); ++i) {
            softmax(ds.images.sample(i), logits, probs);
            int best = 0;
            for (int c = 1; c < classes_; ++c) {
                if (logits[static_cast<size_t>(c)] > logits[static_cast<size_t>(best)]) best = c;
            }
            if (best == ds.labels[static_cast<size_t>(i)]) ++correct;
        }
        return static_cast<double>(correct) / ds.count();
    }

private:
    void softmax(std::span<const float> x, std::vector<double>& logits,
                 std::vector<double>& probs) const {
        for (int c = 0; c < classes_; ++c) {
            double z = b_[static_cast<size_t>(c)];
            const double* wc = w_.data() + static_cast<std::int64_t>(c) * dim_;
            for (int d = 0; d < dim_; ++d) z += wc[d] * static_cast<double>(x[static_cast<size_t>(d)]);
            logits[static_cast<size_t>(c)] = z;
        }
        double m = logits[0];
        for (double v : logits) m = std::max(m, v);
        double sum = 0.0;
        for (int c = 0; c < classes_; ++c) {
            probs[static_cast<size_t>(c)] = std::exp(logits[static_cast<size_t>(c)] - m);
            sum += probs[static_cast<size_t>(c)];
        }
        for (auto& p : probs) p /= sum;
    }

    int dim_, classes_;
    std::vector<double> w_, b_;
};

}  // namespace demtrain::testing
