#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "demtrain/attack.hpp"
#include "demtrain/classifier.hpp"
#include "demtrain/dataset.hpp"
#include "demtrain/perturbation.hpp"

namespace demtrain::eval {

// All rates are exact integer counts over exact denominators, accumulated
// per-sample so results cannot depend on evaluation batch size.
struct EvalReport {
    double sr = 0.0;
    double aacc = 0.0;
    double clean_acc = 0.0;
    double delta_clean_acc = 0.0;
    double entropy_gap = 0.0;
    std::map<std::string, std::string> metadata;
};

// Eq.-style targeted success rate: fraction of non-target-class samples
// classified as y_t once the perturbation is applied. Throws ConfigError if
// every sample belongs to the target class.
double success_rate(const model::ProbedClassifier& model, const data::LabeledDataset& test,
                    const attack::Perturbation& delta, int target_class);

// Fraction of all samples whose perturbed prediction differs from their
// clean prediction.
double nontargeted_success_rate(const model::ProbedClassifier& model,
                                const data::LabeledDataset& test,
                                const attack::Perturbation& delta);

// Fraction of all samples still classified to their true label after the
// perturbation is applied.
double adversarial_accuracy(const model::ProbedClassifier& model,
                            const data::LabeledDataset& test,
                            const attack::Perturbation& delta);

struct MetricCounts {
    std::int64_t to_target_among_nontarget = 0;
    std::int64_t correct_among_nontarget = 0;
    std::int64_t correct_total = 0;
    std::int64_t changed_prediction = 0;
    std::int64_t nontarget_total = 0;
    std::int64_t total = 0;
};

// One pass over per-sample predictions; the individual metrics above are
// ratios of these counters.
MetricCounts count_metrics(const std::vector<int>& perturbed_pred,
                           const std::vector<int>& clean_pred,
                           const std::vector<int>& labels, std::optional<int> target_class);

EvalReport evaluate_perturbation(const model::ProbedClassifier& model,
                                 const data::LabeledDataset& test,
                                 const attack::Perturbation& delta,
                                 std::map<std::string, std::string> metadata = {});

enum class AttackKind { kTargeted, kSpgd, kPatch, kNontargeted, kAdaptive };

AttackKind attack_kind_from_string(const std::string& s);
std::string to_string(AttackKind kind);

attack::Perturbation craft_by_kind(const model::ProbedClassifier& model,
                                   const data::LabeledDataset& craft_data, AttackKind kind,
                                   int target_class, double epsilon,
                                   const attack::AttackConfig& cfg);

// Secondary white-box attack: craft a fresh perturbation of the given kind
// against the (already repaired) model at the original budget and report its
// SR/AAcc on held-out data.
struct ReattackResult {
    attack::Perturbation perturbation;
    EvalReport report;
};

ReattackResult adaptive_reattack_protocol(const model::ProbedClassifier& defended_model,
                                          const data::LabeledDataset& craft_data,
                                          const data::LabeledDataset& eval_data,
                                          AttackKind kind, int target_class, double epsilon,
                                          const attack::AttackConfig& cfg);

// One report per epsilon: a fresh targeted UAP is crafted against the fixed
// model at each budget and evaluated on held-out data.
std::vector<EvalReport> epsilon_sweep(const model::ProbedClassifier& model,
                                      const data::LabeledDataset& craft_data,
                                      const data::LabeledDataset& eval_data, int target_class,
                                      const std::vector<double>& epsilons,
                                      const attack::AttackConfig& cfg);

}  // namespace demtrain::eval
