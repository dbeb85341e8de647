#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "demtrain/tensor.hpp"

namespace demtrain::attack {

enum class NormKind { kLinf };

std::string to_string(NormKind k);

// A universal perturbation. Noise perturbations satisfy ||delta||_inf <= eps
// and are added to inputs (then clamped to [0,1]); patch perturbations carry
// a boolean mask, are zero off-mask, span [0,1] on-mask and are applied by
// masked replacement.
struct Perturbation {
    std::string name;
    Tensor delta;                     // C x H x W
    NormKind norm_kind = NormKind::kLinf;
    double epsilon = 0.0;             // pixel units, [0,1] domain
    std::optional<Tensor> patch_mask; // same shape, values 0/1
    std::optional<int> target_class;  // absent for non-targeted
    std::uint64_t seed = 0;

    bool is_patch() const { return patch_mask.has_value(); }
    double max_abs() const;
    void validate() const;  // budget / mask invariants
};

// Static zero perturbation with the given budget.
Perturbation zero_perturbation(const std::vector<int>& shape, double epsilon,
                               std::optional<int> target_class);

// Project x_pert onto the eps-ball around x_clean intersected with [0,1].
// Values already satisfying both constraints pass through unchanged.
Tensor clamp_to_budget(const Tensor& x_clean, const Tensor& x_pert, double epsilon);

// Apply to a batch: additive + clamp for noise, masked replacement for patch.
Tensor apply_perturbation(const Tensor& batch, const Perturbation& pert);

// Single-line ASCII header followed by raw little-endian float32 delta and,
// for patches, a packed bitmask (8 pixels per byte, row-major).
void save_perturbation(const Perturbation& pert, const std::filesystem::path& path);
Perturbation load_perturbation(const std::filesystem::path& path);

std::uint64_t perturbation_checksum(const Perturbation& pert);

}  // namespace demtrain::attack
