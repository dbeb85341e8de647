#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "demtrain/classifier.hpp"
#include "demtrain/dataset.hpp"

namespace demtrain::model {

enum class OptimizerKind { kSgd, kSgdMomentum };

OptimizerKind optimizer_from_string(const std::string& s);
std::string to_string(OptimizerKind kind);

struct TrainConfig {
    int epochs = 5;
    int batch_size = 64;
    double learning_rate = 0.01;
    std::uint64_t seed = 1;
    OptimizerKind optimizer_kind = OptimizerKind::kSgd;

    void validate() const;  // learning_rate > 0, epochs >= 1, batch_size >= 1
};

using ProbeMap = std::map<std::string, Tensor>;

// A scalar objective (mean over the batch) differentiable through the model.
// value() lets a finite-difference harness treat the model as a black box;
// seeds() emits the gradients w.r.t. logits and any probe activations that
// backward() folds into the chain.
class ScalarLoss {
public:
    virtual ~ScalarLoss() = default;
    virtual std::vector<std::string> probes() const { return {}; }
    virtual double value(const Tensor& logits, const ProbeMap& probe_acts) const = 0;
    virtual void seeds(const Tensor& logits, const ProbeMap& probe_acts, Tensor& d_logits,
                       ProbeMap& d_probes) const = 0;
};

// mean CCE; target is either one fixed class for the whole batch or
// per-sample true labels. scale = -1 turns minimization into ascent.
class CrossEntropyLoss final : public ScalarLoss {
public:
    static CrossEntropyLoss toward_class(int target_class, double scale = 1.0);
    static CrossEntropyLoss on_labels(std::vector<int> labels, double scale = 1.0);

    double value(const Tensor& logits, const ProbeMap&) const override;
    void seeds(const Tensor& logits, const ProbeMap&, Tensor& d_logits,
               ProbeMap& d_probes) const override;

private:
    int fixed_target_ = -1;
    std::vector<int> labels_;
    double scale_ = 1.0;
};

// scale * mean over the batch of the layer-wise entropy at one probe.
class ProbeEntropyLoss final : public ScalarLoss {
public:
    ProbeEntropyLoss(std::string probe, double scale) : probe_(std::move(probe)), scale_(scale) {}
    std::vector<std::string> probes() const override { return {probe_}; }
    double value(const Tensor& logits, const ProbeMap& probe_acts) const override;
    void seeds(const Tensor& logits, const ProbeMap& probe_acts, Tensor& d_logits,
               ProbeMap& d_probes) const override;

private:
    std::string probe_;
    double scale_;
};

// (1-rho) * CCE(y_t) - rho * mean entropy at the probe. With rho == 0 the
// entropy term is skipped entirely so the objective is bit-identical to the
// plain targeted loss.
class EntropyRegularizedTargetLoss final : public ScalarLoss {
public:
    EntropyRegularizedTargetLoss(int target_class, double rho, std::string probe);
    std::vector<std::string> probes() const override;
    double value(const Tensor& logits, const ProbeMap& probe_acts) const override;
    void seeds(const Tensor& logits, const ProbeMap& probe_acts, Tensor& d_logits,
               ProbeMap& d_probes) const override;

private:
    CrossEntropyLoss cce_;
    ProbeEntropyLoss entropy_;
    double rho_;
};

// mean over the batch of ||logits - target_s||^2; closed-form gradients make
// it a convenient oracle subject.
class SquaredErrorLoss final : public ScalarLoss {
public:
    explicit SquaredErrorLoss(Tensor targets) : targets_(std::move(targets)) {}
    double value(const Tensor& logits, const ProbeMap&) const override;
    void seeds(const Tensor& logits, const ProbeMap&, Tensor& d_logits,
               ProbeMap& d_probes) const override;

private:
    Tensor targets_;
};

class ConstantLoss final : public ScalarLoss {
public:
    explicit ConstantLoss(double c) : c_(c) {}
    double value(const Tensor&, const ProbeMap&) const override { return c_; }
    void seeds(const Tensor& logits, const ProbeMap&, Tensor& d_logits,
               ProbeMap& d_probes) const override;

private:
    double c_;
};

// Gradient of loss.value w.r.t. the input batch (same shape as batch).
Tensor input_gradient(const ProbedClassifier& model, const Tensor& batch,
                      const ScalarLoss& loss);

struct TrainOutcome {
    ProbedClassifier model;
    std::vector<double> epoch_loss;  // mean CCE per epoch
};

// Plain (optionally momentum) SGD on mean CCE over shuffled minibatches.
// Deterministic for a fixed seed; throws NumericError naming the epoch/batch
// if the loss stops being finite.
TrainOutcome train_baseline(ProbedClassifier model, const data::LabeledDataset& train,
                            const TrainConfig& cfg);

// Fraction of samples whose argmax prediction (lowest index wins ties)
// matches the label.
double classification_accuracy(const ProbedClassifier& model, const data::LabeledDataset& ds,
                               int batch_size = 256);

std::vector<int> predict(const ProbedClassifier& model, const Tensor& images,
                         int batch_size = 256);

int argmax_lowest(std::span<const float> v);

}  // namespace demtrain::model
