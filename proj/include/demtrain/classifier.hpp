#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "demtrain/layers.hpp"
#include "demtrain/tensor.hpp"

namespace demtrain::model {

enum class ArchId { kSmallCnn, kWideSmall, kMlp };

ArchId arch_from_string(const std::string& s);  // throws ConfigError on unknown id
std::string to_string(ArchId arch);

struct ProbePoint {
    std::string name;
    int layer_index;  // probe captures this layer's output (post-activation)
};

struct ForwardPass {
    Tensor input;
    std::vector<Tensor> outs;  // one batch-major activation tensor per layer
    std::vector<LayerCache> caches;
    int batch = 0;
};

// Gradients w.r.t. selected layer outputs; the logits seed targets the last
// layer. Backward walks the stack once, folding every seed in where it lands.
struct BackwardSeeds {
    std::vector<std::pair<int, Tensor>> at_output;  // layer index -> batch x out_size
    void add(int layer_index, Tensor grad) { at_output.emplace_back(layer_index, std::move(grad)); }
};

using GradientSet = std::vector<std::vector<Tensor>>;  // [layer][param]

class ProbedClassifier {
public:
    ProbedClassifier() = default;
    ProbedClassifier(const ProbedClassifier& other);
    ProbedClassifier& operator=(const ProbedClassifier& other);
    ProbedClassifier(ProbedClassifier&&) = default;
    ProbedClassifier& operator=(ProbedClassifier&&) = default;

    ArchId arch() const { return arch_; }
    const std::vector<int>& input_shape() const { return input_shape_; }
    std::int64_t input_size() const { return Tensor::numel_of(input_shape_); }
    int num_classes() const { return num_classes_; }
    std::uint64_t init_seed() const { return init_seed_; }
    int layer_count() const { return static_cast<int>(layers_.size()); }
    const Layer& layer(int i) const { return *layers_[static_cast<size_t>(i)]; }

    const std::vector<ProbePoint>& probe_points() const { return probes_; }
    std::vector<std::string> probe_names() const;
    bool has_probe(const std::string& name) const;
    int probe_layer(const std::string& name) const;  // throws ConfigError if unknown
    int probe_width(const std::string& name) const;
    const std::string& deepest_probe() const;  // probes are stored in layer order

    Tensor forward(const Tensor& batch) const;

    struct ProbeResult {
        Tensor logits;
        std::map<std::string, Tensor> probes;
    };
    ProbeResult forward_with_probes(const Tensor& batch,
                                    const std::vector<std::string>& names) const;

    ForwardPass forward_full(const Tensor& batch) const;
    const Tensor& logits_of(const ForwardPass& fp) const { return fp.outs.back(); }

    // Backprop the seeds to the input; when grads != nullptr also accumulate
    // parameter gradients (summed over the batch).
    Tensor backward(const ForwardPass& fp, const BackwardSeeds& seeds,
                    GradientSet* grads) const;

    std::vector<ParamRef> parameters();
    std::int64_t parameter_count() const;
    std::uint64_t checksum() const;

    GradientSet zero_gradients() const;
    // theta -= lr * scale * grad for every parameter.
    void apply_sgd(const GradientSet& grads, double lr, double scale);

    static ProbedClassifier assemble(ArchId arch, std::vector<int> input_shape, int num_classes,
                                     std::uint64_t init_seed,
                                     std::vector<std::unique_ptr<Layer>> layers,
                                     std::vector<ProbePoint> probes);

private:
    void check_batch(const Tensor& batch) const;

    ArchId arch_ = ArchId::kSmallCnn;
    std::vector<int> input_shape_;  // {C,H,W}
    int num_classes_ = 0;
    std::uint64_t init_seed_ = 0;
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<ProbePoint> probes_;
};

// Reference desk-scale architectures. Probe roster always contains at least
// one shallow pooling stage, one mid stage, the last pooling/flatten stage
// and the penultimate dense layer (for the MLP every probe is a dense layer).
ProbedClassifier build_architecture(ArchId arch, const std::vector<int>& input_shape,
                                    int num_classes, std::uint64_t init_seed = 0x5eedull);

}  // namespace demtrain::model
