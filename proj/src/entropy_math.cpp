#include "demtrain/entropy_math.hpp"

#include <algorithm>
#include <cmath>

#include "demtrain/errors.hpp"

namespace demtrain::entropy {

namespace {

void check_activation(std::span<const float> activation) {
    if (activation.empty()) throw NumericError("layer_entropy: empty activation");
    for (float v : activation) {
        if (!std::isfinite(v)) throw NumericError("layer_entropy: non-finite activation value");
    }
}

}  // namespace

double layer_entropy(std::span<const float> activation) {
    check_activation(activation);
    float m = *std::max_element(activation.begin(), activation.end());
    double z = 0.0;
    for (float v : activation) z += std::exp(static_cast<double>(v - m));
    double log_z = std::log(z);
    double h = 0.0;
    for (float v : activation) {
        double t = static_cast<double>(v - m) - log_z;  // ln p
        double p = std::exp(t);
        if (p > 0.0) h -= p * t;
    }
    return h;
}

double layer_entropy_grad(std::span<const float> activation, std::span<float> grad) {
    check_activation(activation);
    float m = *std::max_element(activation.begin(), activation.end());
    double z = 0.0;
    for (float v : activation) z += std::exp(static_cast<double>(v - m));
    double log_z = std::log(z);
    double h = 0.0;
    for (float v : activation) {
        double t = static_cast<double>(v - m) - log_z;
        double p = std::exp(t);
        if (p > 0.0) h -= p * t;
    }
    for (std::size_t j = 0; j < activation.size(); ++j) {
        double t = static_cast<double>(activation[j] - m) - log_z;
        double p = std::exp(t);
        grad[j] = static_cast<float>(p > 0.0 ? -p * (t + h) : 0.0);
    }
    return h;
}

}  // namespace demtrain::entropy
