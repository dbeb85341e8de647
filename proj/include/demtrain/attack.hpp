#pragma once

#include <cstdint>
#include <string>

#include "demtrain/classifier.hpp"
#include "demtrain/dataset.hpp"
#include "demtrain/perturbation.hpp"

namespace demtrain::attack {

enum class PatchCorner { kTopLeft, kTopRight, kBottomLeft, kBottomRight };

PatchCorner corner_from_string(const std::string& s);
std::string to_string(PatchCorner corner);

struct AttackConfig {
    int iterations = 300;       // cap on total minibatch update steps
    double step_size = 0.0;     // 0 -> eps/10 for noise attacks, 0.05 for patches
    int batch_size = 64;
    std::uint64_t seed = 7;
    double rho = 0.0;           // entropy-regularized attacks only, in [0,1)
    int epochs_over_data = 8;   // passes over the crafting set
    double patch_fraction = 0.02;
    PatchCorner patch_corner = PatchCorner::kTopLeft;

    void validate(double epsilon) const;  // step_size <= eps for bounded attacks
    double noise_step(double epsilon) const;
    double patch_step() const;
};

// Targeted noise UAP: per-minibatch signed-gradient descent on CCE toward
// y_t, projected onto the eps-ball after every step. eps == 0 degenerates to
// the zero perturbation.
Perturbation craft_targeted_uap(const model::ProbedClassifier& model,
                                const data::LabeledDataset& data, int target_class,
                                double epsilon, const AttackConfig& cfg);

// Same skeleton, but each step moves along the batch-averaged raw gradient
// (normalized by its max magnitude) instead of its sign.
Perturbation craft_spgd_uap(const model::ProbedClassifier& model,
                            const data::LabeledDataset& data, int target_class,
                            double epsilon, const AttackConfig& cfg);

// Square patch at a configured corner covering ceil(fraction * H * W) pixels
// (smallest square side s with s*s >= that count); patch pixels live in [0,1]
// and are applied by masked replacement.
Perturbation craft_patch_uap(const model::ProbedClassifier& model,
                             const data::LabeledDataset& data, int target_class,
                             double patch_area_fraction, const AttackConfig& cfg);

int patch_side_for_fraction(double fraction, int height, int width);

// Non-targeted noise UAP: ascends CCE on the true labels.
Perturbation craft_nontargeted_uap(const model::ProbedClassifier& model,
                                   const data::LabeledDataset& data, double epsilon,
                                   const AttackConfig& cfg);

// Entropy-regularized targeted UAP with loss
// (1-rho)*CCE(y_t) - rho*H(deepest probe); rho == 0 reproduces
// craft_targeted_uap bit for bit under the same seed.
Perturbation craft_adaptive_uap(const model::ProbedClassifier& model,
                                const data::LabeledDataset& data, int target_class,
                                double epsilon, const AttackConfig& cfg);

}  // namespace demtrain::attack
