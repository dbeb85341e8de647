#include "blob_io.hpp"

#include <sstream>

namespace demtrain::io {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    return in;
}

std::vector<int> parse_header(std::istream& in, std::string* name_out) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("blob: missing header line");
    std::istringstream hs(line);
    std::string name;
    int ndim = 0;
    if (!(hs >> name >> ndim) || ndim < 0 || ndim > 8) {
        throw IoError("blob: malformed header '" + line + "'");
    }
    std::vector<int> shape(static_cast<size_t>(ndim));
    for (int i = 0; i < ndim; ++i) {
        if (!(hs >> shape[static_cast<size_t>(i)]) || shape[static_cast<size_t>(i)] < 0) {
            throw IoError("blob: malformed shape in header '" + line + "'");
        }
    }
    if (name_out) *name_out = name;
    return shape;
}

}  // namespace

void write_float_blob(const std::filesystem::path& path, const std::string& name,
                      const Tensor& t) {
    auto out = open_out(path);
    out << name << " " << t.ndim();
    for (int d : t.shape()) out << " " << d;
    out << "\n";
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!out) throw IoError("short write: " + path.string());
}

Tensor read_float_blob(const std::filesystem::path& path, std::string* name_out) {
    auto in = open_in(path);
    std::vector<int> shape = parse_header(in, name_out);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(t.numel() * sizeof(float))) {
        throw IoError("truncated blob: " + path.string());
    }
    return t;
}

void write_int_blob(const std::filesystem::path& path, const std::string& name,
                    const std::vector<int>& v) {
    auto out = open_out(path);
    out << name << " 1 " << v.size() << "\n";
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(int)));
    if (!out) throw IoError("short write: " + path.string());
}

std::vector<int> read_int_blob(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::vector<int> shape = parse_header(in, nullptr);
    if (shape.size() != 1) throw IoError("int blob must be 1-D: " + path.string());
    std::vector<int> v(static_cast<size_t>(shape[0]));
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(int)));
    if (in.gcount() != static_cast<std::streamsize>(v.size() * sizeof(int))) {
        throw IoError("truncated blob: " + path.string());
    }
    return v;
}

std::string read_text_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
    if (!out) throw IoError("short write: " + path.string());
}

}  // namespace demtrain::io
