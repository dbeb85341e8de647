#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "demtrain/tensor.hpp"

namespace demtrain::data {

enum class SplitTag { kTrain, kTest, kCleanSubset };

std::string to_string(SplitTag tag);

// Images are N x C x H x W floats in [0,1]; labels are class ids < num_classes.
struct LabeledDataset {
    Tensor images;
    std::vector<int> labels;
    int num_classes = 0;
    SplitTag split_tag = SplitTag::kTrain;

    int count() const { return images.ndim() > 0 ? images.dim(0) : 0; }
    std::vector<int> sample_shape() const {
        return {images.dim(1), images.dim(2), images.dim(3)};
    }
    void validate() const;  // throws on any broken invariant
};

struct DatasetPair {
    LabeledDataset train;
    LabeledDataset test;
};

// Parameters of the synthetic Gaussian-blob dataset. One blob per class at a
// fixed grid position with a class color; jitter and pixel noise keep the
// classes separable but not adversarially robust.
struct BlobsParams {
    int num_classes = 4;
    int channels = 3;
    int height = 16;
    int width = 16;
    int train_count = 2000;
    int test_count = 400;
    // Each class signature has two parts, mirroring natural images: a broad,
    // faint template (small per-pixel amplitude spread over most of the
    // image: high-L1 directions that an l-inf-bounded perturbation can fake)
    // and a strong high-frequency core pattern at the blob center that no
    // epsilon-ball perturbation can overwrite. The core averages to zero
    // under pooling, so gradient descent leans on the easy global template
    // first - which is exactly what universal perturbations exploit - while
    // the core stays available for a repaired model to fall back on. A
    // weaker distractor blob from a random class adds class-foreign features
    // to every image.
    double blob_sigma = 5.0;
    double amplitude_lo = 0.05;
    double amplitude_hi = 0.10;
    int core_size = 5;               // odd side of the patterned core square
    double core_amplitude_lo = 0.20;
    double core_amplitude_hi = 0.30;
    double distractor_scale = 0.55;  // distractor amplitude relative to the main blob
    double center_spread = 0.18;     // blob centers at 0.5 +/- spread of the extent
    double center_jitter = 1.5;      // +/- pixels, uniform
    double pixel_noise = 0.10;       // stddev of iid Gaussian pixel noise
    double background = 0.5;
    std::uint64_t seed = 20240611ull;

    // Class blob centers (row, col) and colors, index = class id.
    std::vector<std::pair<double, double>> centers() const;
    std::vector<std::vector<double>> colors() const;
};

// name in {mnist, cifar10, synthetic-blobs}. mnist/cifar10 are read from the
// local cache under <root>/<name>/ and raise IoError listing the expected
// files when missing; synthetic-blobs is generated on first use and cached
// (with a sidecar metadata file) so reloads are byte-identical.
DatasetPair load_dataset(const std::string& name, const std::filesystem::path& root);

DatasetPair load_synthetic_blobs(const std::filesystem::path& root, const BlobsParams& params);

// Stratified-by-class subsample of the training split. fraction must be in
// (0, 0.05]; the result is deterministic for a fixed seed and tagged
// clean_subset.
LabeledDataset sample_clean_subset(const LabeledDataset& train, double fraction,
                                   std::uint64_t seed);

// Same stratified sampler, exposed for crafting sets and tests.
std::vector<int> stratified_indices(const std::vector<int>& labels, int num_classes,
                                    int want, std::uint64_t seed);

LabeledDataset subset_by_indices(const LabeledDataset& ds, const std::vector<int>& indices,
                                 SplitTag tag);

// First n samples as a plain image batch (N x C x H x W).
Tensor take_images(const LabeledDataset& ds, int n);
std::vector<int> take_labels(const LabeledDataset& ds, int n);

}  // namespace demtrain::data
