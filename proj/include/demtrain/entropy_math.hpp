#pragma once

#include <span>
#include <vector>

namespace demtrain::entropy {

// Shannon entropy (nats) of softmax(activation). Zero-probability terms
// contribute zero by the usual limit convention; with finite inputs softmax
// probabilities underflow to exact zero only for extreme spreads, which the
// guard handles. Throws NumericError on empty/NaN/Inf input.
double layer_entropy(std::span<const float> activation);

// d(entropy)/d(activation_j) = -p_j * (ln p_j + H). Written into grad (same
// length as activation); returns H.
double layer_entropy_grad(std::span<const float> activation, std::span<float> grad);

}  // namespace demtrain::entropy
