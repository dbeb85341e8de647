#include "demtrain/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "blob_io.hpp"
#include "demtrain/errors.hpp"
#include "demtrain/rng.hpp"

namespace demtrain::data {

// defined in gzip.cpp
std::vector<unsigned char> gunzip_impl(const std::vector<unsigned char>& in,
                                       const std::string& what);

using nlohmann::json;

std::string to_string(SplitTag tag) {
    switch (tag) {
        case SplitTag::kTrain: return "train";
        case SplitTag::kTest: return "test";
        case SplitTag::kCleanSubset: return "clean_subset";
    }
    return "?";
}

void LabeledDataset::validate() const {
    if (images.ndim() != 4) throw ConfigError("dataset images must be N x C x H x W");
    if (images.dim(0) != static_cast<int>(labels.size())) {
        throw ConfigError("dataset: image/label count mismatch");
    }
    if (num_classes <= 0) throw ConfigError("dataset: num_classes must be positive");
    for (int y : labels) {
        if (y < 0 || y >= num_classes) throw ConfigError("dataset: label out of range");
    }
    for (float v : images.vec()) {
        if (!(v >= 0.0f && v <= 1.0f)) throw ConfigError("dataset: pixel outside [0,1]");
    }
}

std::vector<std::pair<double, double>> BlobsParams::centers() const {
    std::vector<std::pair<double, double>> c;
    double lo = 0.5 - center_spread, hi = 0.5 + center_spread;
    c.emplace_back(lo * height, lo * width);
    c.emplace_back(lo * height, hi * width);
    c.emplace_back(hi * height, lo * width);
    c.emplace_back(hi * height, hi * width);
    for (int k = 4; k < num_classes; ++k) {
        c.emplace_back(0.5 * height, 0.5 * width);  // extra classes stack centrally
    }
    c.resize(static_cast<size_t>(num_classes));
    return c;
}

std::vector<std::vector<double>> BlobsParams::colors() const {
    std::vector<std::vector<double>> base = {
        {0.95, 0.25, 0.25}, {0.25, 0.95, 0.25}, {0.25, 0.35, 0.95}, {0.9, 0.85, 0.2},
        {0.9, 0.3, 0.9},    {0.3, 0.9, 0.9},
    };
    std::vector<std::vector<double>> out;
    for (int k = 0; k < num_classes; ++k) {
        std::vector<double> color = base[static_cast<size_t>(k) % base.size()];
        color.resize(static_cast<size_t>(channels), color.empty() ? 0.8 : color[0]);
        out.push_back(std::move(color));
    }
    return out;
}

namespace {

// Class-specific high-frequency sign pattern over the core square: vertical
// stripes, horizontal stripes, checkerboard, 2x2 checkerboard, then phase
// shifts for further classes.
double core_pattern(int cls, int dy, int dx) {
    switch (cls % 4) {
        case 0: return (dx + cls / 4) % 2 == 0 ? 1.0 : -1.0;
        case 1: return (dy + cls / 4) % 2 == 0 ? 1.0 : -1.0;
        case 2: return (dx + dy + cls / 4) % 2 == 0 ? 1.0 : -1.0;
        default: return ((dx / 2 + dy / 2 + cls / 4) % 2) == 0 ? 1.0 : -1.0;
    }
}

LabeledDataset generate_blob_split(const BlobsParams& p, int count, SplitTag tag,
                                   std::uint64_t seed) {
    LabeledDataset ds;
    ds.num_classes = p.num_classes;
    ds.split_tag = tag;
    ds.images = Tensor({count, p.channels, p.height, p.width});
    ds.labels.resize(static_cast<size_t>(count));

    Rng rng(seed);
    const auto centers = p.centers();
    const auto colors = p.colors();
    const int hw = p.height * p.width;
    for (int i = 0; i < count; ++i) {
        int cls = i % p.num_classes;  // balanced by construction
        ds.labels[static_cast<size_t>(i)] = cls;
        double cy = centers[static_cast<size_t>(cls)].first +
                    rng.uniform(-p.center_jitter, p.center_jitter);
        double cx = centers[static_cast<size_t>(cls)].second +
                    rng.uniform(-p.center_jitter, p.center_jitter);
        double amp = rng.uniform(p.amplitude_lo, p.amplitude_hi);
        double core_amp = rng.uniform(p.core_amplitude_lo, p.core_amplitude_hi);

        // Integer core placement, clipped so the square stays inside.
        const int half = p.core_size / 2;
        int core_y = std::clamp(static_cast<int>(std::lround(cy)), half, p.height - 1 - half);
        int core_x = std::clamp(static_cast<int>(std::lround(cx)), half, p.width - 1 - half);

        // Class-foreign distractor: a scaled-down full class signature
        // (template plus core) at a random position, so every image carries
        // foreign features of both kinds.
        int dis_cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(p.num_classes)));
        double dy = rng.uniform(0.25, 0.75) * p.height;
        double dx = rng.uniform(0.25, 0.75) * p.width;
        double dis_amp = p.distractor_scale * amp;
        double dis_core_amp = p.distractor_scale * core_amp;
        int dis_core_y = std::clamp(static_cast<int>(std::lround(dy)), half, p.height - 1 - half);
        int dis_core_x = std::clamp(static_cast<int>(std::lround(dx)), half, p.width - 1 - half);

        float* img = ds.images.data() + static_cast<std::int64_t>(i) * p.channels * hw;
        for (int y = 0; y < p.height; ++y) {
            for (int x = 0; x < p.width; ++x) {
                double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                double bump = amp * std::exp(-r2 / (2.0 * p.blob_sigma * p.blob_sigma));
                double core = 0.0;
                if (std::abs(y - core_y) <= half && std::abs(x - core_x) <= half) {
                    core = core_amp *
                           core_pattern(cls, y - core_y + half, x - core_x + half);
                }
                double q2 = (y - dy) * (y - dy) + (x - dx) * (x - dx);
                double dis =
                    dis_amp * std::exp(-q2 / (2.0 * p.blob_sigma * p.blob_sigma));
                double dis_core = 0.0;
                if (std::abs(y - dis_core_y) <= half && std::abs(x - dis_core_x) <= half) {
                    dis_core = dis_core_amp * core_pattern(dis_cls, y - dis_core_y + half,
                                                           x - dis_core_x + half);
                }
                for (int c = 0; c < p.channels; ++c) {
                    double v = p.background +
                               (bump + core) *
                                   colors[static_cast<size_t>(cls)][static_cast<size_t>(c)] +
                               (dis + dis_core) *
                                   colors[static_cast<size_t>(dis_cls)][static_cast<size_t>(c)] +
                               rng.normal() * p.pixel_noise;
                    img[c * hw + y * p.width + x] =
                        static_cast<float>(std::clamp(v, 0.0, 1.0));
                }
            }
        }
    }
    return ds;
}

json blobs_params_json(const BlobsParams& p) {
    return json{{"num_classes", p.num_classes},
                {"channels", p.channels},
                {"height", p.height},
                {"width", p.width},
                {"train_count", p.train_count},
                {"test_count", p.test_count},
                {"blob_sigma", p.blob_sigma},
                {"amplitude_lo", p.amplitude_lo},
                {"amplitude_hi", p.amplitude_hi},
                {"core_size", p.core_size},
                {"core_amplitude_lo", p.core_amplitude_lo},
                {"core_amplitude_hi", p.core_amplitude_hi},
                {"distractor_scale", p.distractor_scale},
                {"center_spread", p.center_spread},
                {"center_jitter", p.center_jitter},
                {"pixel_noise", p.pixel_noise},
                {"background", p.background},
                {"seed", p.seed}};
}

void save_split(const std::filesystem::path& dir, const std::string& split,
                const LabeledDataset& ds) {
    io::write_float_blob(dir / (split + "_images.bin"), split + "_images", ds.images);
    io::write_int_blob(dir / (split + "_labels.bin"), split + "_labels", ds.labels);
}

LabeledDataset load_split(const std::filesystem::path& dir, const std::string& split,
                          int num_classes, SplitTag tag) {
    LabeledDataset ds;
    ds.images = io::read_float_blob(dir / (split + "_images.bin"));
    ds.labels = io::read_int_blob(dir / (split + "_labels.bin"));
    ds.num_classes = num_classes;
    ds.split_tag = tag;
    return ds;
}

// --- MNIST (IDX files, optionally gzipped) ---------------------------------

std::vector<unsigned char> read_binary_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& in, const std::string& what) {
    return gunzip_impl(in, what);
}

std::vector<unsigned char> read_maybe_gz(const std::filesystem::path& base) {
    namespace fs = std::filesystem;
    if (fs::exists(base)) return read_binary_file(base);
    fs::path gz = base;
    gz += ".gz";
    if (fs::exists(gz)) return gunzip(read_binary_file(gz), base.filename().string());
    throw IoError("missing dataset file: " + base.string() + " (or " + gz.string() + ")");
}

std::uint32_t be32(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

LabeledDataset load_mnist_split(const std::filesystem::path& dir, const std::string& images_name,
                                const std::string& labels_name, SplitTag tag) {
    auto img_bytes = read_maybe_gz(dir / images_name);
    auto lbl_bytes = read_maybe_gz(dir / labels_name);
    if (img_bytes.size() < 16 || be32(img_bytes.data()) != 2051) {
        throw IoError("corrupt idx image file: " + (dir / images_name).string());
    }
    if (lbl_bytes.size() < 8 || be32(lbl_bytes.data()) != 2049) {
        throw IoError("corrupt idx label file: " + (dir / labels_name).string());
    }
    const int n = static_cast<int>(be32(img_bytes.data() + 4));
    const int h = static_cast<int>(be32(img_bytes.data() + 8));
    const int w = static_cast<int>(be32(img_bytes.data() + 12));
    if (static_cast<int>(be32(lbl_bytes.data() + 4)) != n) {
        throw IoError("idx image/label count mismatch under " + dir.string());
    }
    if (img_bytes.size() != 16 + static_cast<size_t>(n) * h * w ||
        lbl_bytes.size() != 8 + static_cast<size_t>(n)) {
        throw IoError("truncated idx files under " + dir.string());
    }
    LabeledDataset ds;
    ds.num_classes = 10;
    ds.split_tag = tag;
    ds.images = Tensor({n, 1, h, w});
    ds.labels.resize(static_cast<size_t>(n));
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n) * h * w; ++i) {
        ds.images[i] = static_cast<float>(img_bytes[16 + static_cast<size_t>(i)]) / 255.0f;
    }
    for (int i = 0; i < n; ++i) {
        ds.labels[static_cast<size_t>(i)] = static_cast<int>(lbl_bytes[8 + static_cast<size_t>(i)]);
    }
    return ds;
}

// --- CIFAR-10 (binary batches) ----------------------------------------------

LabeledDataset load_cifar_batches(const std::vector<std::filesystem::path>& files, SplitTag tag) {
    constexpr int kRecord = 3073;  // 1 label byte + 3 x 32 x 32 pixels
    std::vector<unsigned char> all;
    for (const auto& f : files) {
        auto bytes = read_binary_file(f);
        if (bytes.size() % kRecord != 0) throw IoError("corrupt cifar10 batch: " + f.string());
        all.insert(all.end(), bytes.begin(), bytes.end());
    }
    const int n = static_cast<int>(all.size() / kRecord);
    LabeledDataset ds;
    ds.num_classes = 10;
    ds.split_tag = tag;
    ds.images = Tensor({n, 3, 32, 32});
    ds.labels.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const unsigned char* rec = all.data() + static_cast<size_t>(i) * kRecord;
        int label = rec[0];
        if (label < 0 || label > 9) throw IoError("corrupt cifar10 label");
        ds.labels[static_cast<size_t>(i)] = label;
        float* img = ds.images.data() + static_cast<std::int64_t>(i) * 3 * 32 * 32;
        for (int j = 0; j < 3 * 32 * 32; ++j) {
            img[j] = static_cast<float>(rec[1 + j]) / 255.0f;
        }
    }
    return ds;
}

std::filesystem::path cifar_dir(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    fs::path base = root / "cifar10";
    if (fs::exists(base / "cifar-10-batches-bin" / "data_batch_1.bin")) {
        return base / "cifar-10-batches-bin";
    }
    return base;
}

}  // namespace

DatasetPair load_synthetic_blobs(const std::filesystem::path& root, const BlobsParams& params) {
    namespace fs = std::filesystem;
    fs::path dir = root / "synthetic-blobs";
    fs::path meta_path = dir / "meta.json";
    json meta = blobs_params_json(params);

    if (fs::exists(meta_path)) {
        json existing = json::parse(io::read_text_file(meta_path));
        if (existing == meta && fs::exists(dir / "train_images.bin")) {
            DatasetPair pair;
            pair.train = load_split(dir, "train", params.num_classes, SplitTag::kTrain);
            pair.test = load_split(dir, "test", params.num_classes, SplitTag::kTest);
            return pair;
        }
    }

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create dataset cache dir " + dir.string());

    DatasetPair pair;
    pair.train = generate_blob_split(params, params.train_count, SplitTag::kTrain,
                                     Rng::seed_mix(params.seed, 1));
    pair.test = generate_blob_split(params, params.test_count, SplitTag::kTest,
                                    Rng::seed_mix(params.seed, 2));
    save_split(dir, "train", pair.train);
    save_split(dir, "test", pair.test);
    io::write_text_file(meta_path, meta.dump(2) + "\n");
    return pair;
}

DatasetPair load_dataset(const std::string& name, const std::filesystem::path& root) {
    if (name == "synthetic-blobs") {
        return load_synthetic_blobs(root, BlobsParams{});
    }
    if (name == "mnist") {
        std::filesystem::path dir = root / "mnist";
        DatasetPair pair;
        pair.train = load_mnist_split(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                                      SplitTag::kTrain);
        pair.test = load_mnist_split(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte",
                                     SplitTag::kTest);
        return pair;
    }
    if (name == "cifar10") {
        std::filesystem::path dir = cifar_dir(root);
        std::vector<std::filesystem::path> train_files;
        for (int i = 1; i <= 5; ++i) {
            train_files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
        }
        for (const auto& f : train_files) {
            if (!std::filesystem::exists(f)) {
                throw IoError("cifar10 cache incomplete, missing " + f.string() +
                              " (expected the binary batches under " + dir.string() + ")");
            }
        }
        DatasetPair pair;
        pair.train = load_cifar_batches(train_files, SplitTag::kTrain);
        pair.test = load_cifar_batches({dir / "test_batch.bin"}, SplitTag::kTest);
        return pair;
    }
    throw ConfigError("unknown dataset id '" + name +
                      "' (expected mnist|cifar10|synthetic-blobs)");
}

std::vector<int> stratified_indices(const std::vector<int>& labels, int num_classes, int want,
                                    std::uint64_t seed) {
    if (want <= 0) throw ConfigError("stratified_indices: want must be positive");
    std::vector<std::vector<int>> by_class(static_cast<size_t>(num_classes));
    for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
        by_class[static_cast<size_t>(labels[static_cast<size_t>(i)])].push_back(i);
    }
    Rng rng(seed);
    for (auto& v : by_class) rng.shuffle(v);

    // Round-robin over classes keeps per-class counts within one of each
    // other (as far as class availability allows).
    std::vector<int> picked;
    picked.reserve(static_cast<size_t>(want));
    std::vector<size_t> cursor(static_cast<size_t>(num_classes), 0);
    while (static_cast<int>(picked.size()) < want) {
        bool progress = false;
        for (int c = 0; c < num_classes && static_cast<int>(picked.size()) < want; ++c) {
            auto& pool = by_class[static_cast<size_t>(c)];
            auto& cur = cursor[static_cast<size_t>(c)];
            if (cur < pool.size()) {
                picked.push_back(pool[cur++]);
                progress = true;
            }
        }
        if (!progress) break;  // ran out of samples entirely
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

LabeledDataset subset_by_indices(const LabeledDataset& ds, const std::vector<int>& indices,
                                 SplitTag tag) {
    LabeledDataset out;
    out.num_classes = ds.num_classes;
    out.split_tag = tag;
    const std::int64_t per = ds.images.sample_size();
    out.images = Tensor({static_cast<int>(indices.size()), ds.images.dim(1), ds.images.dim(2),
                         ds.images.dim(3)});
    out.labels.resize(indices.size());
    for (size_t i = 0; i < indices.size(); ++i) {
        int idx = indices[i];
        std::copy_n(ds.images.data() + static_cast<std::int64_t>(idx) * per, per,
                    out.images.data() + static_cast<std::int64_t>(i) * per);
        out.labels[i] = ds.labels[static_cast<size_t>(idx)];
    }
    return out;
}

LabeledDataset sample_clean_subset(const LabeledDataset& train, double fraction,
                                   std::uint64_t seed) {
    if (train.count() == 0) throw ConfigError("sample_clean_subset: empty train set");
    if (!(fraction > 0.0)) throw ConfigError("sample_clean_subset: fraction must be positive");
    if (fraction > 0.05) {
        throw ConfigError("sample_clean_subset: fraction above the 5% policy cap");
    }
    int want = static_cast<int>(fraction * train.count());
    if (want < train.num_classes) {
        throw ConfigError("sample_clean_subset: fraction * count below one sample per class");
    }
    auto idx = stratified_indices(train.labels, train.num_classes, want, seed);
    return subset_by_indices(train, idx, SplitTag::kCleanSubset);
}

Tensor take_images(const LabeledDataset& ds, int n) {
    n = std::min(n, ds.count());
    Tensor out({n, ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)});
    std::copy_n(ds.images.data(), out.numel(), out.data());
    return out;
}

std::vector<int> take_labels(const LabeledDataset& ds, int n) {
    n = std::min(n, ds.count());
    return {ds.labels.begin(), ds.labels.begin() + n};
}

}  // namespace demtrain::data
