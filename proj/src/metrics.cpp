#include "demtrain/metrics.hpp"

#include <algorithm>

#include "demtrain/errors.hpp"
#include "demtrain/train.hpp"

namespace demtrain::eval {

namespace {

std::vector<int> perturbed_predictions(const model::ProbedClassifier& model,
                                       const data::LabeledDataset& test,
                                       const attack::Perturbation& delta) {
    Tensor adv = attack::apply_perturbation(test.images, delta);
    return model::predict(model, adv);
}

}  // namespace

MetricCounts count_metrics(const std::vector<int>& perturbed_pred,
                           const std::vector<int>& clean_pred, const std::vector<int>& labels,
                           std::optional<int> target_class) {
    MetricCounts c;
    c.total = static_cast<std::int64_t>(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        const bool is_target_sample = target_class && labels[i] == *target_class;
        if (!is_target_sample) {
            ++c.nontarget_total;
            if (target_class && perturbed_pred[i] == *target_class) ++c.to_target_among_nontarget;
            if (perturbed_pred[i] == labels[i]) ++c.correct_among_nontarget;
        }
        if (perturbed_pred[i] == labels[i]) ++c.correct_total;
        if (!clean_pred.empty() && perturbed_pred[i] != clean_pred[i]) ++c.changed_prediction;
    }
    return c;
}

double success_rate(const model::ProbedClassifier& model, const data::LabeledDataset& test,
                    const attack::Perturbation& delta, int target_class) {
    if (target_class < 0 || target_class >= test.num_classes) {
        throw ConfigError("success_rate: target class out of range");
    }
    auto preds = perturbed_predictions(model, test, delta);
    auto counts = count_metrics(preds, {}, test.labels, target_class);
    if (counts.nontarget_total == 0) {
        throw ConfigError("success_rate: evaluation set contains only target-class samples");
    }
    return static_cast<double>(counts.to_target_among_nontarget) /
           static_cast<double>(counts.nontarget_total);
}

double nontargeted_success_rate(const model::ProbedClassifier& model,
                                const data::LabeledDataset& test,
                                const attack::Perturbation& delta) {
    auto clean_preds = model::predict(model, test.images);
    auto preds = perturbed_predictions(model, test, delta);
    auto counts = count_metrics(preds, clean_preds, test.labels, std::nullopt);
    return counts.total == 0
               ? 0.0
               : static_cast<double>(counts.changed_prediction) / static_cast<double>(counts.total);
}

double adversarial_accuracy(const model::ProbedClassifier& model,
                            const data::LabeledDataset& test,
                            const attack::Perturbation& delta) {
    auto preds = perturbed_predictions(model, test, delta);
    auto counts = count_metrics(preds, {}, test.labels, std::nullopt);
    return counts.total == 0
               ? 0.0
               : static_cast<double>(counts.correct_total) / static_cast<double>(counts.total);
}

EvalReport evaluate_perturbation(const model::ProbedClassifier& model,
                                 const data::LabeledDataset& test,
                                 const attack::Perturbation& delta,
                                 std::map<std::string, std::string> metadata) {
    EvalReport report;
    report.clean_acc = model::classification_accuracy(model, test);
    report.aacc = adversarial_accuracy(model, test, delta);
    if (delta.target_class) {
        report.sr = success_rate(model, test, delta, *delta.target_class);
    } else {
        report.sr = nontargeted_success_rate(model, test, delta);
    }
    report.metadata = std::move(metadata);
    return report;
}

AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "targeted") return AttackKind::kTargeted;
    if (s == "spgd") return AttackKind::kSpgd;
    if (s == "patch") return AttackKind::kPatch;
    if (s == "nontargeted") return AttackKind::kNontargeted;
    if (s == "adaptive") return AttackKind::kAdaptive;
    throw ConfigError("unknown attack kind '" + s +
                      "' (expected targeted|spgd|patch|nontargeted|adaptive)");
}

std::string to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::kTargeted: return "targeted";
        case AttackKind::kSpgd: return "spgd";
        case AttackKind::kPatch: return "patch";
        case AttackKind::kNontargeted: return "nontargeted";
        case AttackKind::kAdaptive: return "adaptive";
    }
    return "?";
}

attack::Perturbation craft_by_kind(const model::ProbedClassifier& model,
                                   const data::LabeledDataset& craft_data, AttackKind kind,
                                   int target_class, double epsilon,
                                   const attack::AttackConfig& cfg) {
    switch (kind) {
        case AttackKind::kTargeted:
            return attack::craft_targeted_uap(model, craft_data, target_class, epsilon, cfg);
        case AttackKind::kSpgd:
            return attack::craft_spgd_uap(model, craft_data, target_class, epsilon, cfg);
        case AttackKind::kPatch:
            return attack::craft_patch_uap(model, craft_data, target_class, cfg.patch_fraction,
                                           cfg);
        case AttackKind::kNontargeted:
            return attack::craft_nontargeted_uap(model, craft_data, epsilon, cfg);
        case AttackKind::kAdaptive:
            return attack::craft_adaptive_uap(model, craft_data, target_class, epsilon, cfg);
    }
    throw ConfigError("unreachable attack kind");
}

ReattackResult adaptive_reattack_protocol(const model::ProbedClassifier& defended_model,
                                          const data::LabeledDataset& craft_data,
                                          const data::LabeledDataset& eval_data,
                                          AttackKind kind, int target_class, double epsilon,
                                          const attack::AttackConfig& cfg) {
    ReattackResult result;
    result.perturbation =
        craft_by_kind(defended_model, craft_data, kind, target_class, epsilon, cfg);
    result.report = evaluate_perturbation(defended_model, eval_data, result.perturbation,
                                          {{"protocol", "secondary_whitebox"},
                                           {"attack_kind", to_string(kind)}});
    return result;
}

std::vector<EvalReport> epsilon_sweep(const model::ProbedClassifier& model,
                                      const data::LabeledDataset& craft_data,
                                      const data::LabeledDataset& eval_data, int target_class,
                                      const std::vector<double>& epsilons,
                                      const attack::AttackConfig& cfg) {
    std::vector<EvalReport> reports;
    reports.reserve(epsilons.size());
    for (double eps : epsilons) {
        attack::Perturbation pert =
            attack::craft_targeted_uap(model, craft_data, target_class, eps, cfg);
        EvalReport rep = evaluate_perturbation(model, eval_data, pert,
                                               {{"epsilon", std::to_string(eps)}});
        reports.push_back(std::move(rep));
    }
    return reports;
}

}  // namespace demtrain::eval
