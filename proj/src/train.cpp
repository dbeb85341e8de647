#include "demtrain/train.hpp"

#include <algorithm>
#include <cmath>

#include "demtrain/entropy_math.hpp"
#include "demtrain/errors.hpp"
#include "demtrain/rng.hpp"

namespace demtrain::model {

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::kSgd;
    if (s == "sgd_momentum") return OptimizerKind::kSgdMomentum;
    throw ConfigError("unknown optimizer '" + s + "' (expected sgd|sgd_momentum)");
}

std::string to_string(OptimizerKind kind) {
    return kind == OptimizerKind::kSgd ? "sgd" : "sgd_momentum";
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
}

int argmax_lowest(std::span<const float> v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i) {
        if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
    }
    return best;
}

namespace {

// Per-sample CCE pieces in double precision; returns the summed loss and
// writes (softmax - onehot) * seed_scale into d_logits when requested.
double cce_sum_and_seeds(const Tensor& logits, const std::vector<int>& targets,
                         double seed_scale, Tensor* d_logits) {
    const int batch = logits.dim(0);
    const int classes = logits.dim(1);
    double total = 0.0;
    for (int s = 0; s < batch; ++s) {
        auto z = logits.sample(s);
        int t = targets[static_cast<size_t>(s)];
        float m = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (float v : z) sum += std::exp(static_cast<double>(v - m));
        double log_z = std::log(sum);
        total += log_z - (static_cast<double>(z[static_cast<size_t>(t)]) - m);
        if (d_logits) {
            float* d = d_logits->data() + static_cast<std::int64_t>(s) * classes;
            for (int k = 0; k < classes; ++k) {
                double p = std::exp(static_cast<double>(z[static_cast<size_t>(k)] - m) - log_z);
                double g = p - (k == t ? 1.0 : 0.0);
                d[k] = static_cast<float>(g * seed_scale);
            }
        }
    }
    return total;
}

std::vector<int> fixed_targets(int target, int batch) {
    return std::vector<int>(static_cast<size_t>(batch), target);
}

}  // namespace

CrossEntropyLoss CrossEntropyLoss::toward_class(int target_class, double scale) {
    CrossEntropyLoss l;
    l.fixed_target_ = target_class;
    l.scale_ = scale;
    return l;
}

CrossEntropyLoss CrossEntropyLoss::on_labels(std::vector<int> labels, double scale) {
    CrossEntropyLoss l;
    l.labels_ = std::move(labels);
    l.scale_ = scale;
    return l;
}

double CrossEntropyLoss::value(const Tensor& logits, const ProbeMap&) const {
    const int batch = logits.dim(0);
    auto targets = fixed_target_ >= 0 ? fixed_targets(fixed_target_, batch) : labels_;
    if (static_cast<int>(targets.size()) != batch) {
        throw ConfigError("CCE loss: label count does not match batch");
    }
    return scale_ * cce_sum_and_seeds(logits, targets, 0.0, nullptr) / batch;
}

void CrossEntropyLoss::seeds(const Tensor& logits, const ProbeMap&, Tensor& d_logits,
                             ProbeMap&) const {
    const int batch = logits.dim(0);
    auto targets = fixed_target_ >= 0 ? fixed_targets(fixed_target_, batch) : labels_;
    if (static_cast<int>(targets.size()) != batch) {
        throw ConfigError("CCE loss: label count does not match batch");
    }
    d_logits = Tensor(logits.shape());
    cce_sum_and_seeds(logits, targets, scale_ / batch, &d_logits);
}

double ProbeEntropyLoss::value(const Tensor&, const ProbeMap& probe_acts) const {
    const auto it = probe_acts.find(probe_);
    if (it == probe_acts.end()) throw ConfigError("entropy loss: probe '" + probe_ + "' missing");
    const Tensor& acts = it->second;
    const int batch = acts.dim(0);
    double total = 0.0;
    for (int s = 0; s < batch; ++s) total += entropy::layer_entropy(acts.sample(s));
    return scale_ * total / batch;
}

void ProbeEntropyLoss::seeds(const Tensor&, const ProbeMap& probe_acts, Tensor& d_logits,
                             ProbeMap& d_probes) const {
    const auto it = probe_acts.find(probe_);
    if (it == probe_acts.end()) throw ConfigError("entropy loss: probe '" + probe_ + "' missing");
    const Tensor& acts = it->second;
    const int batch = acts.dim(0);
    Tensor grad(acts.shape());
    const float f = static_cast<float>(scale_ / batch);
    for (int s = 0; s < batch; ++s) {
        entropy::layer_entropy_grad(acts.sample(s), grad.sample(s));
        float* g = grad.data() + s * acts.sample_size();
        for (std::int64_t i = 0; i < acts.sample_size(); ++i) g[i] *= f;
    }
    d_probes[probe_] = std::move(grad);
    (void)d_logits;
}

EntropyRegularizedTargetLoss::EntropyRegularizedTargetLoss(int target_class, double rho,
                                                           std::string probe)
    : cce_(CrossEntropyLoss::toward_class(target_class, 1.0 - rho)),
      entropy_(std::move(probe), -rho), rho_(rho) {
    if (rho < 0.0 || rho >= 1.0) throw ConfigError("rho must be in [0,1)");
}

std::vector<std::string> EntropyRegularizedTargetLoss::probes() const {
    if (rho_ == 0.0) return {};
    return entropy_.probes();
}

double EntropyRegularizedTargetLoss::value(const Tensor& logits,
                                           const ProbeMap& probe_acts) const {
    double v = cce_.value(logits, probe_acts);
    if (rho_ != 0.0) v += entropy_.value(logits, probe_acts);
    return v;
}

void EntropyRegularizedTargetLoss::seeds(const Tensor& logits, const ProbeMap& probe_acts,
                                         Tensor& d_logits, ProbeMap& d_probes) const {
    cce_.seeds(logits, probe_acts, d_logits, d_probes);
    if (rho_ != 0.0) {
        Tensor unused;
        entropy_.seeds(logits, probe_acts, unused, d_probes);
    }
}

double SquaredErrorLoss::value(const Tensor& logits, const ProbeMap&) const {
    if (!logits.same_shape(targets_)) throw ConfigError("squared error: shape mismatch");
    const int batch = logits.dim(0);
    double total = 0.0;
    for (std::int64_t i = 0; i < logits.numel(); ++i) {
        double d = static_cast<double>(logits[i]) - static_cast<double>(targets_[i]);
        total += d * d;
    }
    return total / batch;
}

void SquaredErrorLoss::seeds(const Tensor& logits, const ProbeMap&, Tensor& d_logits,
                             ProbeMap&) const {
    if (!logits.same_shape(targets_)) throw ConfigError("squared error: shape mismatch");
    const int batch = logits.dim(0);
    d_logits = Tensor(logits.shape());
    const float f = 2.0f / static_cast<float>(batch);
    for (std::int64_t i = 0; i < logits.numel(); ++i) {
        d_logits[i] = f * (logits[i] - targets_[i]);
    }
}

void ConstantLoss::seeds(const Tensor& logits, const ProbeMap&, Tensor& d_logits,
                         ProbeMap&) const {
    d_logits = Tensor(logits.shape());
}

Tensor input_gradient(const ProbedClassifier& model, const Tensor& batch,
                      const ScalarLoss& loss) {
    ForwardPass fp = model.forward_full(batch);
    ProbeMap probe_acts;
    for (const auto& name : loss.probes()) {
        probe_acts.emplace(name, fp.outs[static_cast<size_t>(model.probe_layer(name))]);
    }
    Tensor d_logits;
    ProbeMap d_probes;
    loss.seeds(fp.outs.back(), probe_acts, d_logits, d_probes);

    BackwardSeeds seeds;
    if (d_logits.numel() > 0) {
        seeds.add(model.layer_count() - 1, std::move(d_logits));
    }
    for (auto& [name, grad] : d_probes) {
        seeds.add(model.probe_layer(name), std::move(grad));
    }
    return model.backward(fp, seeds, nullptr);
}

std::vector<int> predict(const ProbedClassifier& model, const Tensor& images, int batch_size) {
    const int n = images.dim(0);
    std::vector<int> preds(static_cast<size_t>(n));
    const std::int64_t per = images.sample_size();
    for (int start = 0; start < n; start += batch_size) {
        const int b = std::min(batch_size, n - start);
        Tensor chunk({b, model.input_shape()[0], model.input_shape()[1], model.input_shape()[2]});
        std::copy_n(images.data() + static_cast<std::int64_t>(start) * per, b * per,
                    chunk.data());
        Tensor logits = model.forward(chunk);
        for (int s = 0; s < b; ++s) {
            preds[static_cast<size_t>(start + s)] = argmax_lowest(logits.sample(s));
        }
    }
    return preds;
}

double classification_accuracy(const ProbedClassifier& model, const data::LabeledDataset& ds,
                               int batch_size) {
    std::vector<int> preds = predict(model, ds.images, batch_size);
    std::int64_t correct = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == ds.labels[i]) ++correct;
    }
    return preds.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(preds.size());
}

TrainOutcome train_baseline(ProbedClassifier model, const data::LabeledDataset& train,
                            const TrainConfig& cfg) {
    cfg.validate();
    if (train.split_tag != data::SplitTag::kTrain) {
        throw ConfigError("train_baseline expects the train split");
    }
    if (train.count() == 0) throw ConfigError("train_baseline: empty dataset");

    Rng rng(cfg.seed);
    const int n = train.count();
    const std::int64_t per = train.images.sample_size();
    const bool momentum = cfg.optimizer_kind == OptimizerKind::kSgdMomentum;
    const double mu = 0.9;
    GradientSet velocity = momentum ? model.zero_gradients() : GradientSet{};

    std::vector<double> epoch_losses;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order = index_permutation(n, rng);
        double loss_sum = 0.0;
        std::int64_t seen = 0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int b = std::min(cfg.batch_size, n - start);
            Tensor batch({b, train.images.dim(1), train.images.dim(2), train.images.dim(3)});
            std::vector<int> labels(static_cast<size_t>(b));
            for (int s = 0; s < b; ++s) {
                int idx = order[static_cast<size_t>(start + s)];
                std::copy_n(train.images.data() + static_cast<std::int64_t>(idx) * per, per,
                            batch.data() + static_cast<std::int64_t>(s) * per);
                labels[static_cast<size_t>(s)] = train.labels[static_cast<size_t>(idx)];
            }

            ForwardPass fp = model.forward_full(batch);
            Tensor d_logits(fp.outs.back().shape());
            double batch_loss =
                cce_sum_and_seeds(fp.outs.back(), labels, 1.0 / b, &d_logits) / b;
            if (!std::isfinite(batch_loss)) {
                throw NumericError("training diverged (non-finite loss) at epoch " +
                                   std::to_string(epoch) + ", batch " +
                                   std::to_string(start / cfg.batch_size));
            }
            loss_sum += batch_loss * b;
            seen += b;

            BackwardSeeds seeds;
            seeds.add(model.layer_count() - 1, std::move(d_logits));
            GradientSet grads = model.zero_gradients();
            model.backward(fp, seeds, &grads);
            if (momentum) {
                for (size_t k = 0; k < grads.size(); ++k) {
                    for (size_t p = 0; p < grads[k].size(); ++p) {
                        Tensor& v = velocity[k][p];
                        const Tensor& g = grads[k][p];
                        for (std::int64_t i = 0; i < v.numel(); ++i) {
                            v[i] = static_cast<float>(mu * v[i] + g[i]);
                        }
                    }
                }
                model.apply_sgd(velocity, cfg.learning_rate, 1.0);
            } else {
                model.apply_sgd(grads, cfg.learning_rate, 1.0);
            }
        }
        epoch_losses.push_back(loss_sum / static_cast<double>(seen));
    }
    return {std::move(model), std::move(epoch_losses)};
}

}  // namespace demtrain::model
