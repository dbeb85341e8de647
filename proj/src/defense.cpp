#include "demtrain/defense.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "demtrain/entropy_math.hpp"
#include "demtrain/errors.hpp"
#include "demtrain/train.hpp"

namespace demtrain::defense {

void DefenseConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("defense: alpha must be in (0,1)");
    if (epochs < 1) throw ConfigError("defense: epochs must be >= 1");
    if (sg_iterations < 1) throw ConfigError("defense: sg_iterations must be >= 1");
    if (!(epsilon > 0.0)) throw ConfigError("defense: epsilon must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("defense: learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("defense: batch_size must be >= 1");
}

std::string DefenseConfig::resolved_probe(const model::ProbedClassifier& model) const {
    if (probe.empty()) return model.deepest_probe();
    model.probe_layer(probe);  // validates
    return probe;
}

Tensor sample_generator(const Tensor& clean_batch, const model::ProbedClassifier& model,
                        int m, double epsilon, const std::string& probe) {
    if (m < 1) throw ConfigError("sample_generator: m must be >= 1");
    if (!(epsilon > 0.0)) throw ConfigError("sample_generator: epsilon must be positive");
    model.probe_layer(probe);  // throws on unknown probe

    // One shared perturbation for the whole batch, mimicking the effect of a
    // universal perturbation: ascend -H (reduce the mean probe entropy) with
    // sign steps of eps/4, re-projecting after every step. A batch-common
    // direction cannot align with every sample's own class, so the generated
    // samples carry a planted dominant feature the way UAP-infected inputs do.
    model::ProbeEntropyLoss loss(probe, -1.0);
    const float step = static_cast<float>(epsilon / 4.0);
    const int batch = clean_batch.dim(0);
    const std::int64_t per = clean_batch.sample_size();
    Tensor delta(std::vector<int>(clean_batch.shape().begin() + 1, clean_batch.shape().end()));

    Tensor current = clean_batch;
    for (int it = 0; it < m; ++it) {
        Tensor grads = model::input_gradient(model, current, loss);
        // Mean gradient w.r.t. the shared perturbation, masked where the
        // pixel range saturates (fixed sample order).
        Tensor g(delta.shape());
        for (int s = 0; s < batch; ++s) {
            const float* x = clean_batch.data() + s * per;
            const float* gs = grads.data() + s * per;
            for (std::int64_t i = 0; i < per; ++i) {
                float v = x[i] + delta[i];
                if (v > 0.0f && v < 1.0f) g[i] += gs[i];
            }
        }
        const float eps = static_cast<float>(epsilon);
        for (std::int64_t i = 0; i < per; ++i) {
            float gv = g[i];
            float v = delta[i] + step * (gv > 0.0f ? 1.0f : (gv < 0.0f ? -1.0f : 0.0f));
            delta[i] = std::min(eps, std::max(-eps, v));
        }
        for (int s = 0; s < batch; ++s) {
            const float* x = clean_batch.data() + s * per;
            float* y = current.data() + s * per;
            for (std::int64_t i = 0; i < per; ++i) {
                float v = x[i] + delta[i];
                y[i] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
            }
        }
    }
    return current;
}

namespace {

double mean_probe_entropy(const model::ProbedClassifier& model, const Tensor& batch,
                          const std::string& probe) {
    auto res = model.forward_with_probes(batch, {probe});
    const Tensor& acts = res.probes.at(probe);
    double total = 0.0;
    for (int s = 0; s < acts.dim(0); ++s) {
        total += entropy::layer_entropy(acts.sample(s));
    }
    return total / acts.dim(0);
}

Tensor gather(const data::LabeledDataset& ds, const std::vector<int>& order, int start, int b,
              std::vector<int>& labels) {
    const std::int64_t per = ds.images.sample_size();
    Tensor batch({b, ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)});
    labels.resize(static_cast<size_t>(b));
    for (int s = 0; s < b; ++s) {
        int idx = order[static_cast<size_t>(start + s)];
        std::copy_n(ds.images.data() + static_cast<std::int64_t>(idx) * per, per,
                    batch.data() + static_cast<std::int64_t>(s) * per);
        labels[static_cast<size_t>(s)] = ds.labels[static_cast<size_t>(idx)];
    }
    return batch;
}

// One SGD step on mean CCE for the given batch; returns the loss.
double cce_step(model::ProbedClassifier& model, const Tensor& batch,
                const std::vector<int>& labels, double lr) {
    auto loss = model::CrossEntropyLoss::on_labels(labels);
    model::ForwardPass fp = model.forward_full(batch);
    model::ProbeMap no_probes;
    double value = loss.value(fp.outs.back(), no_probes);
    Tensor d_logits;
    model::ProbeMap d_probes;
    loss.seeds(fp.outs.back(), no_probes, d_logits, d_probes);
    model::BackwardSeeds seeds;
    seeds.add(model.layer_count() - 1, std::move(d_logits));
    model::GradientSet grads = model.zero_gradients();
    model.backward(fp, seeds, &grads);
    model.apply_sgd(grads, lr, 1.0);
    return value;
}

}  // namespace

DefenseOutcome democratic_training(model::ProbedClassifier model,
                                   const data::LabeledDataset& clean_set,
                                   const DefenseConfig& cfg) {
    cfg.validate();
    if (clean_set.split_tag != data::SplitTag::kCleanSubset) {
        throw ConfigError("democratic_training expects a clean_subset split");
    }
    if (clean_set.count() == 0) throw ConfigError("democratic_training: empty clean set");
    const std::string probe = cfg.resolved_probe(model);

    Rng rng(cfg.seed);
    std::vector<DefenseLogRecord> log;
    const int n = clean_set.count();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order = index_permutation(n, rng);
        int batch_index = 0;
        for (int start = 0; start < n; start += cfg.batch_size, ++batch_index) {
            const int b = std::min(cfg.batch_size, n - start);
            std::vector<int> labels;
            Tensor clean = gather(clean_set, order, start, b, labels);
            Tensor low_entropy = sample_generator(clean, model, cfg.sg_iterations, cfg.epsilon,
                                                  probe);

            // Combined objective: alpha * CCE(low-entropy) + (1-alpha) * CCE(clean),
            // both terms using the clean samples' true labels.
            auto loss_en = model::CrossEntropyLoss::on_labels(labels, cfg.alpha);
            auto loss_clean = model::CrossEntropyLoss::on_labels(labels, 1.0 - cfg.alpha);
            model::ProbeMap no_probes;

            model::ForwardPass fp_en = model.forward_full(low_entropy);
            model::ForwardPass fp_clean = model.forward_full(clean);
            double v_en = loss_en.value(fp_en.outs.back(), no_probes) / cfg.alpha;
            double v_clean =
                loss_clean.value(fp_clean.outs.back(), no_probes) / (1.0 - cfg.alpha);
            double combined = cfg.alpha * v_en + (1.0 - cfg.alpha) * v_clean;
            if (!std::isfinite(combined)) {
                throw NumericError("defense diverged (non-finite loss) at epoch " +
                                   std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index));
            }

            model::GradientSet grads = model.zero_gradients();
            {
                Tensor d_logits;
                model::ProbeMap d_probes;
                loss_en.seeds(fp_en.outs.back(), no_probes, d_logits, d_probes);
                model::BackwardSeeds seeds;
                seeds.add(model.layer_count() - 1, std::move(d_logits));
                model.backward(fp_en, seeds, &grads);
            }
            {
                Tensor d_logits;
                model::ProbeMap d_probes;
                loss_clean.seeds(fp_clean.outs.back(), no_probes, d_logits, d_probes);
                model::BackwardSeeds seeds;
                seeds.add(model.layer_count() - 1, std::move(d_logits));
                model.backward(fp_clean, seeds, &grads);
            }
            model.apply_sgd(grads, cfg.learning_rate, 1.0);

            DefenseLogRecord rec;
            rec.epoch = epoch;
            rec.batch = batch_index;
            rec.combined_loss = combined;
            rec.clean_loss = v_clean;
            rec.low_entropy_loss = v_en;
            rec.mean_generated_entropy = mean_probe_entropy(model, low_entropy, probe);
            log.push_back(rec);
        }
    }
    return {std::move(model), std::move(log)};
}

void write_defense_log(const std::vector<DefenseLogRecord>& log,
                       const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open defense log for writing: " + path.string());
    out << "epoch,batch,combined_loss,clean_loss,low_entropy_loss,mean_generated_entropy\n";
    for (const auto& r : log) {
        out << r.epoch << "," << r.batch << "," << r.combined_loss << "," << r.clean_loss << ","
            << r.low_entropy_loss << "," << r.mean_generated_entropy << "\n";
    }
    if (!out) throw IoError("short write: " + path.string());
}

AdvTrainMode adv_mode_from_string(const std::string& s) {
    if (s == "targeted_pgd") return AdvTrainMode::kTargetedPgd;
    if (s == "nontargeted_pgd") return AdvTrainMode::kNontargetedPgd;
    if (s == "known_uap") return AdvTrainMode::kKnownUap;
    throw ConfigError("unknown adversarial training mode '" + s + "'");
}

std::string to_string(AdvTrainMode mode) {
    switch (mode) {
        case AdvTrainMode::kTargetedPgd: return "targeted_pgd";
        case AdvTrainMode::kNontargetedPgd: return "nontargeted_pgd";
        case AdvTrainMode::kKnownUap: return "known_uap";
    }
    return "?";
}

int perturb_with_random_uaps(Tensor& batch, const std::vector<attack::Perturbation>& uaps,
                             Rng& rng) {
    if (uaps.empty()) throw ConfigError("known-UAP mode needs a non-empty perturbation list");
    const int n = batch.dim(0);
    const std::int64_t per = batch.sample_size();
    int perturbed = 0;
    for (int s = 0; s < n; ++s) {
        if (!rng.coin(0.5)) continue;
        const auto& uap = uaps[static_cast<size_t>(rng.below(uaps.size()))];
        if (uap.delta.numel() != per) throw ConfigError("known UAP shape mismatch");
        float* x = batch.data() + s * per;
        for (std::int64_t i = 0; i < per; ++i) {
            float v = x[i] + uap.delta[i];
            x[i] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        }
        ++perturbed;
    }
    return perturbed;
}

namespace {

// Per-sample PGD in the eps-ball: sign steps of size eps/4 on CCE, toward a
// fixed target (descending) or away from true labels (ascending).
Tensor pgd_examples(const model::ProbedClassifier& model, const Tensor& batch,
                    const std::vector<int>& labels, int iterations, double epsilon,
                    bool targeted, int target_class) {
    if (iterations == 0) return batch;
    Tensor current = batch;
    const float step = static_cast<float>(epsilon / 4.0);
    for (int it = 0; it < iterations; ++it) {
        std::unique_ptr<model::ScalarLoss> loss;
        if (targeted) {
            loss = std::make_unique<model::CrossEntropyLoss>(
                model::CrossEntropyLoss::toward_class(target_class));
        } else {
            loss = std::make_unique<model::CrossEntropyLoss>(
                model::CrossEntropyLoss::on_labels(labels, -1.0));
        }
        Tensor g = model::input_gradient(model, current, *loss);
        for (std::int64_t i = 0; i < current.numel(); ++i) {
            float gv = g[i];
            current[i] -= step * (gv > 0.0f ? 1.0f : (gv < 0.0f ? -1.0f : 0.0f));
        }
        current = attack::clamp_to_budget(batch, current, epsilon);
    }
    return current;
}

}  // namespace

model::ProbedClassifier adversarial_training_baseline(
    model::ProbedClassifier model, const data::LabeledDataset& data, AdvTrainMode mode,
    const std::vector<attack::Perturbation>& known_uaps, const DefenseConfig& cfg,
    int target_class) {
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("defense: alpha out of range");
    if (cfg.epochs < 1) throw ConfigError("defense: epochs must be >= 1");
    if (mode == AdvTrainMode::kKnownUap && known_uaps.empty()) {
        throw ConfigError("known-UAP finetuning requires pretrained perturbations");
    }
    if (mode == AdvTrainMode::kTargetedPgd &&
        (target_class < 0 || target_class >= data.num_classes)) {
        throw ConfigError("targeted adversarial training requires a valid target class");
    }
    if (data.count() == 0) throw ConfigError("adversarial training: empty dataset");

    Rng rng(cfg.seed);
    const int n = data.count();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order = index_permutation(n, rng);
        int batch_index = 0;
        for (int start = 0; start < n; start += cfg.batch_size, ++batch_index) {
            const int b = std::min(cfg.batch_size, n - start);
            std::vector<int> labels;
            Tensor batch = gather(data, order, start, b, labels);
            Tensor train_batch;
            switch (mode) {
                case AdvTrainMode::kTargetedPgd:
                    train_batch = pgd_examples(model, batch, labels, cfg.sg_iterations,
                                               cfg.epsilon, true, target_class);
                    break;
                case AdvTrainMode::kNontargetedPgd:
                    train_batch = pgd_examples(model, batch, labels, cfg.sg_iterations,
                                               cfg.epsilon, false, -1);
                    break;
                case AdvTrainMode::kKnownUap:
                    train_batch = batch;
                    perturb_with_random_uaps(train_batch, known_uaps, rng);
                    break;
            }
            double loss = cce_step(model, train_batch, labels, cfg.learning_rate);
            if (!std::isfinite(loss)) {
                throw NumericError("adversarial training diverged at epoch " +
                                   std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index));
            }
        }
    }
    return model;
}

}  // namespace demtrain::defense
