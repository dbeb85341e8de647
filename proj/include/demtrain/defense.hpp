#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "demtrain/classifier.hpp"
#include "demtrain/dataset.hpp"
#include "demtrain/perturbation.hpp"
#include "demtrain/rng.hpp"

namespace demtrain::defense {

struct DefenseConfig {
    double alpha = 0.5;          // weight of the low-entropy loss term, in (0,1)
    int epochs = 5;              // n
    int sg_iterations = 4;       // m
    double epsilon = 10.0 / 255.0;
    double learning_rate = 0.01; // gamma_theta
    int batch_size = 32;
    std::string probe;           // empty -> deepest probe of the model
    std::uint64_t seed = 11;

    void validate() const;  // 0 < alpha < 1, m >= 1, epochs >= 1, eps > 0
    std::string resolved_probe(const model::ProbedClassifier& model) const;
};

// Low-entropy counterparts of a clean batch: m ascent steps of size eps/4 on
// the negated probe entropy, re-projected onto the eps-ball around the clean
// batch (and [0,1]) after every step.
Tensor sample_generator(const Tensor& clean_batch, const model::ProbedClassifier& model,
                        int m, double epsilon, const std::string& probe);

struct DefenseLogRecord {
    int epoch = 0;
    int batch = 0;
    double combined_loss = 0;
    double clean_loss = 0;
    double low_entropy_loss = 0;
    double mean_generated_entropy = 0;
};

struct DefenseOutcome {
    model::ProbedClassifier model;
    std::vector<DefenseLogRecord> log;
};

// Entropy-guided finetuning: every batch is paired with its low-entropy
// counterpart and the model is stepped on
//   alpha * CCE(low_entropy, y) + (1 - alpha) * CCE(clean, y)
// with vanilla SGD. The routine sees only clean data: no perturbation and no
// attack target class appear in the interface.
DefenseOutcome democratic_training(model::ProbedClassifier model,
                                   const data::LabeledDataset& clean_set,
                                   const DefenseConfig& cfg);

void write_defense_log(const std::vector<DefenseLogRecord>& log,
                       const std::filesystem::path& path);

enum class AdvTrainMode { kTargetedPgd, kNontargetedPgd, kKnownUap };

AdvTrainMode adv_mode_from_string(const std::string& s);
std::string to_string(AdvTrainMode mode);

// Each clean sample is perturbed with probability 0.5 by a uniformly chosen
// perturbation from the list; returns how many samples were perturbed.
int perturb_with_random_uaps(Tensor& batch, const std::vector<attack::Perturbation>& uaps,
                             Rng& rng);

// Adversarial-training baselines matched to the defense budget: PGD examples
// are generated on the fly with cfg.sg_iterations steps (step eps/4); in
// known-UAP mode pretrained perturbations are mixed in with 50% probability.
// target_class is required (and used) only in targeted PGD mode.
model::ProbedClassifier adversarial_training_baseline(
    model::ProbedClassifier model, const data::LabeledDataset& data, AdvTrainMode mode,
    const std::vector<attack::Perturbation>& known_uaps, const DefenseConfig& cfg,
    int target_class = -1);

}  // namespace demtrain::defense
