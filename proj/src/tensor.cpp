#include "demtrain/tensor.hpp"

#include <cstring>

namespace demtrain {

std::uint64_t byte_checksum(const void* data, std::size_t bytes, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t byte_checksum(const Tensor& t) {
    return byte_checksum(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(float));
}

}  // namespace demtrain
