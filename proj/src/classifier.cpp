#include "demtrain/classifier.hpp"

#include <algorithm>
#include <cstring>

#include "demtrain/errors.hpp"

namespace demtrain::model {

ArchId arch_from_string(const std::string& s) {
    if (s == "small_cnn") return ArchId::kSmallCnn;
    if (s == "wide_small") return ArchId::kWideSmall;
    if (s == "mlp") return ArchId::kMlp;
    throw ConfigError("unknown architecture id '" + s + "' (expected small_cnn|wide_small|mlp)");
}

std::string to_string(ArchId arch) {
    switch (arch) {
        case ArchId::kSmallCnn: return "small_cnn";
        case ArchId::kWideSmall: return "wide_small";
        case ArchId::kMlp: return "mlp";
    }
    return "?";
}

ProbedClassifier::ProbedClassifier(const ProbedClassifier& other)
    : arch_(other.arch_), input_shape_(other.input_shape_), num_classes_(other.num_classes_),
      init_seed_(other.init_seed_), probes_(other.probes_) {
    layers_.reserve(other.layers_.size());
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

ProbedClassifier& ProbedClassifier::operator=(const ProbedClassifier& other) {
    if (this == &other) return *this;
    ProbedClassifier tmp(other);
    *this = std::move(tmp);
    return *this;
}

std::vector<std::string> ProbedClassifier::probe_names() const {
    std::vector<std::string> names;
    names.reserve(probes_.size());
    for (const auto& p : probes_) names.push_back(p.name);
    return names;
}

bool ProbedClassifier::has_probe(const std::string& name) const {
    return std::any_of(probes_.begin(), probes_.end(),
                       [&](const ProbePoint& p) { return p.name == name; });
}

int ProbedClassifier::probe_layer(const std::string& name) const {
    for (const auto& p : probes_) {
        if (p.name == name) return p.layer_index;
    }
    std::string roster;
    for (const auto& p : probes_) roster += (roster.empty() ? "" : ", ") + p.name;
    throw ConfigError("unknown probe '" + name + "' (available: " + roster + ")");
}

int ProbedClassifier::probe_width(const std::string& name) const {
    return layers_[static_cast<size_t>(probe_layer(name))]->out_size();
}

const std::string& ProbedClassifier::deepest_probe() const {
    if (probes_.empty()) throw ConfigError("model has no probe points");
    return probes_.back().name;
}

void ProbedClassifier::check_batch(const Tensor& batch) const {
    bool ok = batch.ndim() >= 2 && batch.sample_size() == input_size();
    if (batch.ndim() == 4) {
        ok = batch.dim(1) == input_shape_[0] && batch.dim(2) == input_shape_[1] &&
             batch.dim(3) == input_shape_[2];
    }
    if (!ok) {
        throw ConfigError("batch shape " + Tensor::shape_string(batch.shape()) +
                          " does not match model input " + Tensor::shape_string(input_shape_));
    }
}

ForwardPass ProbedClassifier::forward_full(const Tensor& batch) const {
    check_batch(batch);
    ForwardPass fp;
    fp.batch = batch.dim(0);
    fp.input = batch;
    fp.outs.resize(layers_.size());
    fp.caches.resize(layers_.size());
    const float* in = fp.input.data();
    for (size_t k = 0; k < layers_.size(); ++k) {
        const Layer& layer = *layers_[k];
        fp.outs[k] = Tensor({fp.batch, layer.out_size()});
        layer.forward(in, fp.batch, fp.outs[k].data(), fp.caches[k]);
        in = fp.outs[k].data();
    }
    return fp;
}

Tensor ProbedClassifier::forward(const Tensor& batch) const {
    ForwardPass fp = forward_full(batch);
    return std::move(fp.outs.back());
}

ProbedClassifier::ProbeResult ProbedClassifier::forward_with_probes(
    const Tensor& batch, const std::vector<std::string>& names) const {
    ForwardPass fp = forward_full(batch);
    ProbeResult result;
    for (const auto& name : names) {
        int layer = probe_layer(name);
        result.probes.emplace(name, fp.outs[static_cast<size_t>(layer)]);
    }
    result.logits = std::move(fp.outs.back());
    return result;
}

Tensor ProbedClassifier::backward(const ForwardPass& fp, const BackwardSeeds& seeds,
                                  GradientSet* grads) const {
    const int last = static_cast<int>(layers_.size()) - 1;
    Tensor d_cur({fp.batch, layers_[static_cast<size_t>(last)]->out_size()});
    for (int k = last; k >= 0; --k) {
        const Layer& layer = *layers_[static_cast<size_t>(k)];
        for (const auto& [idx, seed] : seeds.at_output) {
            if (idx != k) continue;
            if (seed.numel() != d_cur.numel()) {
                throw ConfigError("backward seed size mismatch at layer " +
                                  std::to_string(k));
            }
            for (std::int64_t i = 0; i < d_cur.numel(); ++i) d_cur[i] += seed[i];
        }
        const float* in = k == 0 ? fp.input.data() : fp.outs[static_cast<size_t>(k - 1)].data();
        Tensor d_prev({fp.batch, layer.in_size()});
        layer.backward(in, fp.outs[static_cast<size_t>(k)].data(), d_cur.data(), fp.batch,
                       fp.caches[static_cast<size_t>(k)], d_prev.data(),
                       grads ? &(*grads)[static_cast<size_t>(k)] : nullptr);
        d_cur = std::move(d_prev);
    }
    Tensor out(fp.input.shape());
    std::memcpy(out.data(), d_cur.data(), sizeof(float) * static_cast<size_t>(d_cur.numel()));
    return out;
}

std::vector<ParamRef> ProbedClassifier::parameters() {
    std::vector<ParamRef> refs;
    for (auto& l : layers_) {
        for (auto& r : l->parameters()) refs.push_back(r);
    }
    return refs;
}

std::int64_t ProbedClassifier::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& l : layers_) {
        for (const auto& g : l->zero_grads()) n += g.numel();
    }
    return n;
}

std::uint64_t ProbedClassifier::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto& self = const_cast<ProbedClassifier&>(*this);
    for (auto& r : self.parameters()) {
        h = byte_checksum(r.tensor->data(),
                          static_cast<size_t>(r.tensor->numel()) * sizeof(float), h);
    }
    return h;
}

GradientSet ProbedClassifier::zero_gradients() const {
    GradientSet grads;
    grads.reserve(layers_.size());
    for (const auto& l : layers_) grads.push_back(l->zero_grads());
    return grads;
}

void ProbedClassifier::apply_sgd(const GradientSet& grads, double lr, double scale) {
    const float f = static_cast<float>(lr * scale);
    for (size_t k = 0; k < layers_.size(); ++k) {
        auto refs = layers_[k]->parameters();
        for (size_t p = 0; p < refs.size(); ++p) {
            Tensor& theta = *refs[p].tensor;
            const Tensor& g = grads[k][p];
            for (std::int64_t i = 0; i < theta.numel(); ++i) theta[i] -= f * g[i];
        }
    }
}

ProbedClassifier ProbedClassifier::assemble(ArchId arch, std::vector<int> input_shape,
                                            int num_classes, std::uint64_t init_seed,
                                            std::vector<std::unique_ptr<Layer>> layers,
                                            std::vector<ProbePoint> probes) {
    ProbedClassifier m;
    m.arch_ = arch;
    m.input_shape_ = std::move(input_shape);
    m.num_classes_ = num_classes;
    m.init_seed_ = init_seed;
    m.layers_ = std::move(layers);
    m.probes_ = std::move(probes);
    return m;
}

ProbedClassifier build_architecture(ArchId arch, const std::vector<int>& input_shape,
                                    int num_classes, std::uint64_t init_seed) {
    if (input_shape.size() != 3) {
        throw ConfigError("input shape must be C x H x W, got " +
                          Tensor::shape_string(input_shape));
    }
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    const int c = input_shape[0], h = input_shape[1], w = input_shape[2];
    if (c < 1 || h < 1 || w < 1) throw ConfigError("input shape must be positive");

    Rng root(init_seed);
    std::vector<std::unique_ptr<Layer>> layers;
    std::vector<ProbePoint> probes;
    auto probe_here = [&](const std::string& name) {
        probes.push_back({name, static_cast<int>(layers.size()) - 1});
    };

    if (arch == ArchId::kMlp) {
        const int in = c * h * w;
        layers.push_back(make_input_scale("stem.norm", input_shape, 0.5f, 4.0f));
        const int widths[4] = {512, 256, 128, 64};
        int cur = in;
        const char* names[4] = {"stage1", "stage2", "stage3", "final"};
        for (int i = 0; i < 4; ++i) {
            std::string base = names[i];
            layers.push_back(make_dense(base + ".fc", cur, widths[i], root.fork(i)));
            layers.push_back(make_relu(base + ".relu", {widths[i]}));
            probe_here(base + ".dense");
            cur = widths[i];
        }
        layers.push_back(make_dense("logits", cur, num_classes, root.fork(9)));
        return ProbedClassifier::assemble(arch, input_shape, num_classes, init_seed,
                                          std::move(layers), std::move(probes));
    }

    // Convolutional roster; three stages halve the spatial extent each.
    if (h < 8 || w < 8) {
        throw ConfigError("conv architectures need spatial extent >= 8, got " +
                          Tensor::shape_string(input_shape));
    }
    const bool wide = arch == ArchId::kWideSmall;
    const int ch1 = wide ? 64 : 32, ch2 = wide ? 128 : 64, ch3 = wide ? 256 : 128;
    const int dense_width = wide ? 512 : 256;

    Shape3 s{c, h, w};
    layers.push_back(make_input_scale("stem.norm", input_shape, 0.5f, 4.0f));
    layers.push_back(make_conv3x3("conv1", s, ch1, root.fork(1)));
    s = {ch1, h, w};
    layers.push_back(make_relu("relu1", {s.c, s.h, s.w}));
    layers.push_back(make_maxpool2("pool1", s));
    s = {ch1, s.h / 2, s.w / 2};
    probe_here("stage1.pool");

    layers.push_back(make_conv3x3("conv2", s, ch2, root.fork(2)));
    s = {ch2, s.h, s.w};
    layers.push_back(make_relu("relu2", {s.c, s.h, s.w}));
    layers.push_back(make_maxpool2("pool2", s));
    s = {ch2, s.h / 2, s.w / 2};
    probe_here("stage2.pool");

    layers.push_back(make_conv3x3("conv3", s, ch3, root.fork(3)));
    s = {ch3, s.h, s.w};
    layers.push_back(make_relu("relu3", {s.c, s.h, s.w}));
    layers.push_back(make_maxpool2("pool3", s));
    s = {ch3, s.h / 2, s.w / 2};
    probe_here("final.pool");

    layers.push_back(make_dense("fc1", s.numel(), dense_width, root.fork(4)));
    layers.push_back(make_relu("fc1.relu", {dense_width}));
    probe_here("final.dense");

    layers.push_back(make_dense("logits", dense_width, num_classes, root.fork(5)));
    return ProbedClassifier::assemble(arch, input_shape, num_classes, init_seed,
                                      std::move(layers), std::move(probes));
}

}  // namespace demtrain::model
