#include "demtrain/attack.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <optional>

#include "demtrain/errors.hpp"
#include "demtrain/rng.hpp"
#include "demtrain/train.hpp"

namespace demtrain::attack {

PatchCorner corner_from_string(const std::string& s) {
    if (s == "top_left") return PatchCorner::kTopLeft;
    if (s == "top_right") return PatchCorner::kTopRight;
    if (s == "bottom_left") return PatchCorner::kBottomLeft;
    if (s == "bottom_right") return PatchCorner::kBottomRight;
    throw ConfigError("unknown patch corner '" + s + "'");
}

std::string to_string(PatchCorner corner) {
    switch (corner) {
        case PatchCorner::kTopLeft: return "top_left";
        case PatchCorner::kTopRight: return "top_right";
        case PatchCorner::kBottomLeft: return "bottom_left";
        case PatchCorner::kBottomRight: return "bottom_right";
    }
    return "?";
}

void AttackConfig::validate(double epsilon) const {
    if (iterations < 0) throw ConfigError("attack: iterations must be non-negative");
    if (batch_size < 1) throw ConfigError("attack: batch_size must be >= 1");
    if (epochs_over_data < 1) throw ConfigError("attack: epochs_over_data must be >= 1");
    if (rho < 0.0 || rho >= 1.0) throw ConfigError("attack: rho must be in [0,1)");
    if (step_size < 0.0) throw ConfigError("attack: step_size must be non-negative");
    if (epsilon > 0.0 && step_size > epsilon) {
        throw ConfigError("attack: step_size must not exceed the budget");
    }
}

double AttackConfig::noise_step(double epsilon) const {
    return step_size > 0.0 ? step_size : epsilon / 10.0;
}

double AttackConfig::patch_step() const { return step_size > 0.0 ? step_size : 0.05; }

int patch_side_for_fraction(double fraction, int height, int width) {
    const int want = static_cast<int>(std::ceil(fraction * height * width));
    int side = 1;
    while (side * side < want) ++side;
    return side;
}

namespace {

enum class StepRule { kSign, kNormalizedMean };

struct CraftContext {
    const model::ProbedClassifier& model;
    const data::LabeledDataset& data;
    double epsilon;
    const AttackConfig& cfg;
};

Tensor gather_batch(const data::LabeledDataset& data, const std::vector<int>& order, int start,
                    int b, std::vector<int>* labels_out) {
    const std::int64_t per = data.images.sample_size();
    Tensor batch({b, data.images.dim(1), data.images.dim(2), data.images.dim(3)});
    if (labels_out) labels_out->resize(static_cast<size_t>(b));
    for (int s = 0; s < b; ++s) {
        int idx = order[static_cast<size_t>(start + s)];
        std::copy_n(data.images.data() + static_cast<std::int64_t>(idx) * per, per,
                    batch.data() + static_cast<std::int64_t>(s) * per);
        if (labels_out) (*labels_out)[static_cast<size_t>(s)] = data.labels[static_cast<size_t>(idx)];
    }
    return batch;
}

// Mean gradient of the loss w.r.t. the shared delta: per-sample input
// gradients masked where x + delta saturates the pixel range, then averaged
// in fixed sample order.
Tensor shared_delta_gradient(const model::ProbedClassifier& model, const Tensor& batch,
                             const Tensor& delta, const model::ScalarLoss& loss) {
    const std::int64_t per = delta.numel();
    const int b = batch.dim(0);
    Tensor adv(batch.shape());
    for (int s = 0; s < b; ++s) {
        const float* x = batch.data() + s * per;
        float* y = adv.data() + s * per;
        for (std::int64_t i = 0; i < per; ++i) {
            float v = x[i] + delta[i];
            y[i] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        }
    }
    Tensor grads = model::input_gradient(model, adv, loss);
    Tensor g(delta.shape());
    for (int s = 0; s < b; ++s) {
        const float* x = batch.data() + s * per;
        const float* gs = grads.data() + s * per;
        for (std::int64_t i = 0; i < per; ++i) {
            float v = x[i] + delta[i];
            if (v > 0.0f && v < 1.0f) g[i] += gs[i];
        }
    }
    // input_gradient already carries the 1/B factor of the batch mean.
    return g;
}

void project_linf(Tensor& delta, double epsilon) {
    const float eps = static_cast<float>(epsilon);
    for (auto& v : delta.vec()) v = std::min(eps, std::max(-eps, v));
}

using LossFactory =
    std::function<std::unique_ptr<model::ScalarLoss>(const std::vector<int>& labels)>;

Perturbation craft_noise_uap(const CraftContext& ctx, const LossFactory& make_loss,
                             StepRule rule, std::optional<int> target_class,
                             const std::string& name) {
    ctx.cfg.validate(ctx.epsilon);
    if (!(ctx.epsilon >= 0.0)) throw ConfigError("attack: epsilon must be non-negative");
    if (target_class && (*target_class < 0 || *target_class >= ctx.data.num_classes)) {
        throw ConfigError("attack: target class out of range");
    }
    if (ctx.data.count() == 0) throw ConfigError("attack: empty crafting set");

    Perturbation pert;
    pert.name = name;
    pert.delta = Tensor(ctx.data.sample_shape());
    pert.epsilon = ctx.epsilon;
    pert.target_class = target_class;
    pert.seed = ctx.cfg.seed;
    if (ctx.epsilon == 0.0) return pert;  // degenerate budget

    const double step = ctx.cfg.noise_step(ctx.epsilon);
    Rng rng(ctx.cfg.seed);
    int steps_done = 0;
    for (int epoch = 0; epoch < ctx.cfg.epochs_over_data && steps_done < ctx.cfg.iterations;
         ++epoch) {
        std::vector<int> order = index_permutation(ctx.data.count(), rng);
        for (int start = 0; start < ctx.data.count() && steps_done < ctx.cfg.iterations;
             start += ctx.cfg.batch_size) {
            const int b = std::min(ctx.cfg.batch_size, ctx.data.count() - start);
            std::vector<int> labels;
            Tensor batch = gather_batch(ctx.data, order, start, b, &labels);
            auto loss = make_loss(labels);
            Tensor g = shared_delta_gradient(ctx.model, batch, pert.delta, *loss);

            if (rule == StepRule::kSign) {
                const float f = static_cast<float>(step);
                for (std::int64_t i = 0; i < pert.delta.numel(); ++i) {
                    float gv = g[i];
                    pert.delta[i] -= f * (gv > 0.0f ? 1.0f : (gv < 0.0f ? -1.0f : 0.0f));
                }
            } else {
                float gmax = 0.0f;
                for (std::int64_t i = 0; i < g.numel(); ++i) {
                    gmax = std::max(gmax, std::fabs(g[i]));
                }
                if (gmax > 0.0f) {
                    const float f = static_cast<float>(step) / gmax;
                    for (std::int64_t i = 0; i < pert.delta.numel(); ++i) {
                        pert.delta[i] -= f * g[i];
                    }
                }
            }
            project_linf(pert.delta, ctx.epsilon);
            ++steps_done;
        }
    }
    return pert;
}

}  // namespace

Perturbation craft_targeted_uap(const model::ProbedClassifier& model,
                                const data::LabeledDataset& data, int target_class,
                                double epsilon, const AttackConfig& cfg) {
    CraftContext ctx{model, data, epsilon, cfg};
    auto factory = [&](const std::vector<int>&) -> std::unique_ptr<model::ScalarLoss> {
        return std::make_unique<model::CrossEntropyLoss>(
            model::CrossEntropyLoss::toward_class(target_class));
    };
    return craft_noise_uap(ctx, factory, StepRule::kSign, target_class, "targeted");
}

Perturbation craft_spgd_uap(const model::ProbedClassifier& model,
                            const data::LabeledDataset& data, int target_class, double epsilon,
                            const AttackConfig& cfg) {
    CraftContext ctx{model, data, epsilon, cfg};
    auto factory = [&](const std::vector<int>&) -> std::unique_ptr<model::ScalarLoss> {
        return std::make_unique<model::CrossEntropyLoss>(
            model::CrossEntropyLoss::toward_class(target_class));
    };
    return craft_noise_uap(ctx, factory, StepRule::kNormalizedMean, target_class, "spgd");
}

Perturbation craft_nontargeted_uap(const model::ProbedClassifier& model,
                                   const data::LabeledDataset& data, double epsilon,
                                   const AttackConfig& cfg) {
    CraftContext ctx{model, data, epsilon, cfg};
    auto factory = [&](const std::vector<int>& labels) -> std::unique_ptr<model::ScalarLoss> {
        // Descending -CCE(true labels) ascends the true-label loss.
        return std::make_unique<model::CrossEntropyLoss>(
            model::CrossEntropyLoss::on_labels(labels, -1.0));
    };
    return craft_noise_uap(ctx, factory, StepRule::kSign, std::nullopt, "nontargeted");
}

Perturbation craft_adaptive_uap(const model::ProbedClassifier& model,
                                const data::LabeledDataset& data, int target_class,
                                double epsilon, const AttackConfig& cfg) {
    CraftContext ctx{model, data, epsilon, cfg};
    const std::string probe = model.deepest_probe();
    auto factory = [&](const std::vector<int>&) -> std::unique_ptr<model::ScalarLoss> {
        return std::make_unique<model::EntropyRegularizedTargetLoss>(target_class, cfg.rho,
                                                                     probe);
    };
    return craft_noise_uap(ctx, factory, StepRule::kSign, target_class,
                           cfg.rho == 0.0 ? "targeted" : "adaptive");
}

Perturbation craft_patch_uap(const model::ProbedClassifier& model,
                             const data::LabeledDataset& data, int target_class,
                             double patch_area_fraction, const AttackConfig& cfg) {
    cfg.validate(0.0);
    if (!(patch_area_fraction > 0.0 && patch_area_fraction <= 0.1)) {
        throw ConfigError("patch fraction must be in (0, 0.1]");
    }
    if (target_class < 0 || target_class >= data.num_classes) {
        throw ConfigError("attack: target class out of range");
    }
    auto shape = data.sample_shape();
    const int c = shape[0], h = shape[1], w = shape[2];
    const int side = patch_side_for_fraction(patch_area_fraction, h, w);
    if (side > h || side > w) throw ConfigError("patch larger than the image");

    int y0 = 0, x0 = 0;
    switch (cfg.patch_corner) {
        case PatchCorner::kTopLeft: break;
        case PatchCorner::kTopRight: x0 = w - side; break;
        case PatchCorner::kBottomLeft: y0 = h - side; break;
        case PatchCorner::kBottomRight: y0 = h - side; x0 = w - side; break;
    }

    Perturbation pert;
    pert.name = "patch";
    pert.delta = Tensor(shape);
    pert.epsilon = 1.0;  // patch pixels span the full range
    pert.target_class = target_class;
    pert.seed = cfg.seed;
    Tensor mask(shape);
    for (int ch = 0; ch < c; ++ch) {
        for (int y = y0; y < y0 + side; ++y) {
            for (int x = x0; x < x0 + side; ++x) {
                std::int64_t i = (static_cast<std::int64_t>(ch) * h + y) * w + x;
                mask[i] = 1.0f;
                pert.delta[i] = 0.5f;  // mid-gray initialization
            }
        }
    }
    pert.patch_mask = std::move(mask);

    const double step = cfg.patch_step();
    auto loss = model::CrossEntropyLoss::toward_class(target_class);
    Rng rng(cfg.seed);
    const std::int64_t per = pert.delta.numel();
    int steps_done = 0;
    for (int epoch = 0; epoch < cfg.epochs_over_data && steps_done < cfg.iterations; ++epoch) {
        std::vector<int> order = index_permutation(data.count(), rng);
        for (int start = 0; start < data.count() && steps_done < cfg.iterations;
             start += cfg.batch_size) {
            const int b = std::min(cfg.batch_size, data.count() - start);
            Tensor batch = gather_batch(data, order, start, b, nullptr);
            Tensor patched = apply_perturbation(batch, pert);
            Tensor grads = model::input_gradient(model, patched, loss);
            const Tensor& m = *pert.patch_mask;
            Tensor g(pert.delta.shape());
            for (int s = 0; s < b; ++s) {
                const float* gs = grads.data() + s * per;
                for (std::int64_t i = 0; i < per; ++i) {
                    if (m[i] == 1.0f) g[i] += gs[i];
                }
            }
            const float f = static_cast<float>(step);
            for (std::int64_t i = 0; i < per; ++i) {
                if (m[i] != 1.0f) continue;
                float gv = g[i];
                float v = pert.delta[i] - f * (gv > 0.0f ? 1.0f : (gv < 0.0f ? -1.0f : 0.0f));
                pert.delta[i] = std::min(1.0f, std::max(0.0f, v));
            }
            ++steps_done;
        }
    }
    return pert;
}

}  // namespace demtrain::attack
