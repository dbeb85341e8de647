#pragma once

#include <algorithm>
#include <cstdint>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace demtrain {

// 64-byte-aligned storage. SIMD kernels peel loops differently depending on
// the runtime address, so a fixed alignment is required for bitwise-stable
// results across repeated runs.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
    }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const {
        return true;
    }
};

using FloatVec = std::vector<float, AlignedAllocator<float>>;

// Dense row-major float tensor. Shape convention for image batches is
// N x C x H x W; per-sample views are contiguous slices of length numel()/N.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(numel_of(shape_), 0.0f) {}
    Tensor(std::vector<int> shape, const std::vector<float>& data)
        : shape_(std::move(shape)), data_(data.begin(), data.end()) {}

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, float value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    FloatVec& vec() { return data_; }
    const FloatVec& vec() const { return data_; }

    float& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Per-sample slice, valid when dim(0) is the batch dimension.
    std::int64_t sample_size() const { return shape_.empty() ? 0 : numel() / shape_[0]; }
    std::span<float> sample(int i) {
        return {data_.data() + static_cast<std::int64_t>(i) * sample_size(),
                static_cast<size_t>(sample_size())};
    }
    std::span<const float> sample(int i) const {
        return {data_.data() + static_cast<std::int64_t>(i) * sample_size(),
                static_cast<size_t>(sample_size())};
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    static std::int64_t numel_of(const std::vector<int>& shape) {
        std::int64_t n = shape.empty() ? 0 : 1;
        for (int d : shape) n *= d;
        return n;
    }

    static std::string shape_string(const std::vector<int>& shape) {
        std::string s;
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s;
    }

private:
    std::vector<int> shape_;
    FloatVec data_;
};

inline void clamp01_inplace(Tensor& t) {
    for (auto& v : t.vec()) v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
}

// FNV-1a over the raw float bytes; used for determinism checks and manifests.
std::uint64_t byte_checksum(const Tensor& t);
std::uint64_t byte_checksum(const void* data, std::size_t bytes, std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace demtrain
