#include <string>
#include <vector>

#include <zlib.h>

#include "demtrain/errors.hpp"

namespace demtrain::data {
namespace {
constexpr size_t kChunk = 1 << 18;
}

// Inflate a gzip-compressed buffer; only needed for .gz dataset caches.
std::vector<unsigned char> gunzip_impl(const std::vector<unsigned char>& in,
                                       const std::string& what) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) {
        throw IoError("zlib init failed while reading " + what);
    }
    std::vector<unsigned char> out;
    std::vector<unsigned char> buf(kChunk);
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    int rc = Z_OK;
    do {
        zs.next_out = buf.data();
        zs.avail_out = static_cast<uInt>(buf.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw IoError("corrupt gzip stream in " + what);
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    } while (rc != Z_STREAM_END);
    inflateEnd(&zs);
    return out;
}

}  // namespace demtrain::data
