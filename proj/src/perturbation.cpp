#include "demtrain/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "blob_io.hpp"
#include "demtrain/errors.hpp"

namespace demtrain::attack {

std::string to_string(NormKind k) {
    (void)k;
    return "linf";
}

double Perturbation::max_abs() const {
    double m = 0.0;
    for (float v : delta.vec()) m = std::max(m, static_cast<double>(std::fabs(v)));
    return m;
}

void Perturbation::validate() const {
    if (delta.ndim() != 3) throw ConfigError("perturbation delta must be C x H x W");
    if (is_patch()) {
        if (!patch_mask->same_shape(delta)) {
            throw ConfigError("patch mask shape does not match delta");
        }
        for (std::int64_t i = 0; i < delta.numel(); ++i) {
            float m = (*patch_mask)[i];
            if (m != 0.0f && m != 1.0f) throw ConfigError("patch mask must be 0/1");
            if (m == 0.0f && delta[i] != 0.0f) {
                throw ConfigError("patch delta must be zero off-mask");
            }
            if (m == 1.0f && (delta[i] < 0.0f || delta[i] > 1.0f)) {
                throw ConfigError("patch delta must lie in [0,1] on-mask");
            }
        }
    } else {
        if (!(epsilon >= 0.0)) throw ConfigError("perturbation budget must be non-negative");
        if (max_abs() > epsilon + 1e-6) {
            throw ConfigError("perturbation exceeds its l-inf budget");
        }
    }
}

Perturbation zero_perturbation(const std::vector<int>& shape, double epsilon,
                               std::optional<int> target_class) {
    Perturbation p;
    p.name = "zero";
    p.delta = Tensor(shape);
    p.epsilon = epsilon;
    p.target_class = target_class;
    return p;
}

Tensor clamp_to_budget(const Tensor& x_clean, const Tensor& x_pert, double epsilon) {
    if (!x_clean.same_shape(x_pert)) throw ConfigError("clamp_to_budget: shape mismatch");
    if (!(epsilon > 0.0)) throw ConfigError("clamp_to_budget: epsilon must be positive");
    const float eps = static_cast<float>(epsilon);
    Tensor out(x_pert.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        float lo = std::max(0.0f, x_clean[i] - eps);
        float hi = std::min(1.0f, x_clean[i] + eps);
        out[i] = std::min(hi, std::max(lo, x_pert[i]));
    }
    return out;
}

Tensor apply_perturbation(const Tensor& batch, const Perturbation& pert) {
    const std::int64_t per = batch.sample_size();
    if (per != pert.delta.numel()) {
        throw ConfigError("apply_perturbation: sample shape does not match delta");
    }
    Tensor out(batch.shape());
    const int n = batch.dim(0);
    if (pert.is_patch()) {
        const Tensor& mask = *pert.patch_mask;
        for (int s = 0; s < n; ++s) {
            const float* x = batch.data() + s * per;
            float* y = out.data() + s * per;
            for (std::int64_t i = 0; i < per; ++i) {
                y[i] = mask[i] == 1.0f ? pert.delta[i] : x[i];
            }
        }
        return out;
    }
    for (int s = 0; s < n; ++s) {
        const float* x = batch.data() + s * per;
        float* y = out.data() + s * per;
        for (std::int64_t i = 0; i < per; ++i) {
            float v = x[i] + pert.delta[i];
            y[i] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        }
    }
    return out;
}

namespace {

std::string sanitize(const std::string& s) {
    std::string out = s.empty() ? std::string("uap") : s;
    for (auto& c : out) {
        if (c == ' ' || c == '\n' || c == '\t') c = '_';
    }
    return out;
}

}  // namespace

void save_perturbation(const Perturbation& pert, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    std::ostringstream header;
    header << "demtrain-pert v1 name=" << sanitize(pert.name)
           << " shape=" << Tensor::shape_string(pert.delta.shape())
           << " eps=" << std::hexfloat << pert.epsilon << std::defaultfloat
           << " norm=" << to_string(pert.norm_kind)
           << " target=" << (pert.target_class ? *pert.target_class : -1)
           << " mask=" << (pert.is_patch() ? 1 : 0) << " seed=" << pert.seed;
    out << header.str() << "\n";
    out.write(reinterpret_cast<const char*>(pert.delta.data()),
              static_cast<std::streamsize>(pert.delta.numel() * sizeof(float)));
    if (pert.is_patch()) {
        const Tensor& mask = *pert.patch_mask;
        std::vector<unsigned char> packed((static_cast<size_t>(mask.numel()) + 7) / 8, 0);
        for (std::int64_t i = 0; i < mask.numel(); ++i) {
            if (mask[i] == 1.0f) {
                packed[static_cast<size_t>(i / 8)] |=
                    static_cast<unsigned char>(1u << (i % 8));
            }
        }
        out.write(reinterpret_cast<const char*>(packed.data()),
                  static_cast<std::streamsize>(packed.size()));
    }
    if (!out) throw IoError("short write: " + path.string());
}

Perturbation load_perturbation(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError("perturbation file missing header");
    std::istringstream hs(line);
    std::string magic, version;
    hs >> magic >> version;
    if (magic != "demtrain-pert" || version != "v1") {
        throw IoError("not a perturbation file: " + path.string());
    }
    Perturbation p;
    std::vector<int> shape;
    bool has_mask = false;
    std::string field;
    while (hs >> field) {
        auto eq = field.find('=');
        if (eq == std::string::npos) throw IoError("malformed perturbation header field");
        std::string key = field.substr(0, eq), val = field.substr(eq + 1);
        if (key == "name") {
            p.name = val;
        } else if (key == "shape") {
            std::istringstream ss(val);
            std::string part;
            while (std::getline(ss, part, 'x')) shape.push_back(std::stoi(part));
        } else if (key == "eps") {
            p.epsilon = std::strtod(val.c_str(), nullptr);
        } else if (key == "norm") {
            if (val != "linf") throw IoError("unsupported norm kind: " + val);
        } else if (key == "target") {
            int t = std::stoi(val);
            if (t >= 0) p.target_class = t;
        } else if (key == "mask") {
            has_mask = val == "1";
        } else if (key == "seed") {
            p.seed = std::stoull(val);
        }
    }
    if (shape.size() != 3) throw IoError("perturbation header lacks a C x H x W shape");
    p.delta = Tensor(shape);
    in.read(reinterpret_cast<char*>(p.delta.data()),
            static_cast<std::streamsize>(p.delta.numel() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(p.delta.numel() * sizeof(float))) {
        throw IoError("truncated perturbation file: " + path.string());
    }
    if (has_mask) {
        std::vector<unsigned char> packed((static_cast<size_t>(p.delta.numel()) + 7) / 8);
        in.read(reinterpret_cast<char*>(packed.data()),
                static_cast<std::streamsize>(packed.size()));
        if (in.gcount() != static_cast<std::streamsize>(packed.size())) {
            throw IoError("truncated perturbation mask: " + path.string());
        }
        Tensor mask(shape);
        for (std::int64_t i = 0; i < mask.numel(); ++i) {
            mask[i] = (packed[static_cast<size_t>(i / 8)] >> (i % 8)) & 1u ? 1.0f : 0.0f;
        }
        p.patch_mask = std::move(mask);
    }
    return p;
}

std::uint64_t perturbation_checksum(const Perturbation& pert) {
    std::uint64_t h = byte_checksum(pert.delta);
    if (pert.is_patch()) {
        h = byte_checksum(pert.patch_mask->data(),
                          static_cast<size_t>(pert.patch_mask->numel()) * sizeof(float), h);
    }
    return h;
}

}  // namespace demtrain::attack
