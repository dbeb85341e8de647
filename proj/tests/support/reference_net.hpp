#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "demtrain/classifier.hpp"
#include "demtrain/tensor.hpp"

namespace demtrain::testing {

// Independent double-precision re-implementation of the forward pass, driven
// only by layer kinds, shapes and parameter tensors. Used as the oracle for
// finite-difference gradient checks and probe-value verification; it shares
// no evaluation code with the production path.
class ReferenceNet {
public:
    explicit ReferenceNet(model::ProbedClassifier& net) : net_(net) {
        for (auto& ref : net.parameters()) params_[ref.name] = ref.tensor;
    }

    // Forward one sample (flat input) and return all layer outputs.
    std::vector<std::vector<double>> forward_all(const std::vector<double>& input) const {
        std::vector<std::vector<double>> outs;
        std::vector<int> in_shape = net_.input_shape();
        std::vector<double> cur = input;
        for (int k = 0; k < net_.layer_count(); ++k) {
            const auto& layer = net_.layer(k);
            const std::string kind = layer.kind();
            std::vector<double> next(static_cast<size_t>(layer.out_size()), 0.0);
            if (kind == "input_scale") {
                for (size_t i = 0; i < cur.size(); ++i) next[i] = (cur[i] - 0.5) * 4.0;
            } else if (kind == "relu") {
                for (size_t i = 0; i < cur.size(); ++i) next[i] = cur[i] > 0.0 ? cur[i] : 0.0;
            } else if (kind == "conv3x3") {
                auto os = layer.out_shape();
                const int oc = os[0], h = os[1], w = os[2];
                const int ic = in_shape[0];
                const Tensor& wt = *params_.at(layer.name() + ".weight");
                const Tensor& bias = *params_.at(layer.name() + ".bias");
                for (int o = 0; o < oc; ++o) {
                    for (int y = 0; y < h; ++y) {
                        for (int x = 0; x < w; ++x) {
                            double acc = static_cast<double>(bias[o]);
                            for (int c = 0; c < ic; ++c) {
                                for (int ky = 0; ky < 3; ++ky) {
                                    for (int kx = 0; kx < 3; ++kx) {
                                        int sy = y + ky - 1, sx = x + kx - 1;
                                        if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                                        double wv = wt[(static_cast<std::int64_t>(o) * ic + c) * 9 +
                                                       ky * 3 + kx];
                                        acc += wv * cur[static_cast<size_t>((c * h + sy) * w + sx)];
                                    }
                                }
                            }
                            next[static_cast<size_t>((o * h + y) * w + x)] = acc;
                        }
                    }
                }
            } else if (kind == "maxpool2") {
                auto os = layer.out_shape();
                const int c = os[0], oh = os[1], ow = os[2];
                const int ih = in_shape[1], iw = in_shape[2];
                for (int ch = 0; ch < c; ++ch) {
                    for (int y = 0; y < oh; ++y) {
                        for (int x = 0; x < ow; ++x) {
                            double best = -1e300;
                            for (int dy = 0; dy < 2; ++dy) {
                                for (int dx = 0; dx < 2; ++dx) {
                                    double v = cur[static_cast<size_t>(
                                        (ch * ih + 2 * y + dy) * iw + 2 * x + dx)];
                                    best = std::max(best, v);
                                }
                            }
                            next[static_cast<size_t>((ch * oh + y) * ow + x)] = best;
                        }
                    }
                }
            } else if (kind == "dense") {
                const Tensor& wt = *params_.at(layer.name() + ".weight");
                const Tensor& bias = *params_.at(layer.name() + ".bias");
                const int in_size = layer.in_size(), out_size = layer.out_size();
                for (int o = 0; o < out_size; ++o) {
                    double acc = static_cast<double>(bias[o]);
                    const std::int64_t row = static_cast<std::int64_t>(o) * in_size;
                    for (int i = 0; i < in_size; ++i) {
                        acc += static_cast<double>(wt[row + i]) * cur[static_cast<size_t>(i)];
                    }
                    next[static_cast<size_t>(o)] = acc;
                }
            } else {
                throw std::runtime_error("reference net: unknown layer kind " + kind);
            }
            in_shape = layer.out_shape();
            outs.push_back(next);
            cur = std::move(next);
        }
        return outs;
    }

    std::vector<double> logits(const std::vector<double>& input) const {
        return forward_all(input).back();
    }

    // Mean CCE toward a fixed class over a batch of flat samples.
    double cce_toward(const std::vector<std::vector<double>>& batch, int target) const {
        double total = 0.0;
        for (const auto& x : batch) {
            auto z = logits(x);
            double m = z[0];
            for (double v : z) m = std::max(m, v);
            double sum = 0.0;
            for (double v : z) sum += std::exp(v - m);
            total += m + std::log(sum) - z[static_cast<size_t>(target)];
        }
        return total / static_cast<double>(batch.size());
    }

private:
    model::ProbedClassifier& net_;
    std::map<std::string, Tensor*> params_;
};

inline std::vector<std::vector<double>> to_double_batch(const Tensor& batch) {
    std::vector<std::vector<double>> out;
    for (int s = 0; s < batch.dim(0); ++s) {
        auto span = batch.sample(s);
        out.emplace_back(span.begin(), span.end());
    }
    return out;
}

}  // namespace demtrain::testing
