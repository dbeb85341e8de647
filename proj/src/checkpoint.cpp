#include "demtrain/checkpoint.hpp"

#include <chrono>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "blob_io.hpp"
#include "demtrain/errors.hpp"

namespace demtrain::model {

using nlohmann::json;

namespace {

std::string now_iso8601() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

std::string blob_filename(const std::string& param_name) { return param_name + ".bin"; }

}  // namespace

void save_checkpoint(const ProbedClassifier& model, const std::filesystem::path& dir,
                     const std::string& extra_manifest_json) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir / "params", ec);
    if (ec) throw IoError("cannot create checkpoint dir " + dir.string());

    auto& m = const_cast<ProbedClassifier&>(model);
    json params = json::array();
    for (auto& ref : m.parameters()) {
        io::write_float_blob(dir / "params" / blob_filename(ref.name), ref.name, *ref.tensor);
        params.push_back(ref.name);
    }

    json manifest{{"format", "demtrain-checkpoint-v1"},
                  {"arch_id", to_string(model.arch())},
                  {"input_shape", model.input_shape()},
                  {"num_classes", model.num_classes()},
                  {"probe_names", model.probe_names()},
                  {"seed", model.init_seed()},
                  {"created", now_iso8601()},
                  {"params", params},
                  {"checksum", model.checksum()}};
    if (!extra_manifest_json.empty()) {
        manifest["extra"] = json::parse(extra_manifest_json);
    }
    io::write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

ProbedClassifier load_checkpoint(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw IoError("no checkpoint manifest at " + manifest_path.string());
    }
    json manifest = json::parse(io::read_text_file(manifest_path));
    if (manifest.value("format", "") != "demtrain-checkpoint-v1") {
        throw IoError("unrecognized checkpoint format in " + manifest_path.string());
    }
    ArchId arch = arch_from_string(manifest.at("arch_id").get<std::string>());
    std::vector<int> input_shape = manifest.at("input_shape").get<std::vector<int>>();
    int num_classes = manifest.at("num_classes").get<int>();
    std::uint64_t seed = manifest.at("seed").get<std::uint64_t>();

    ProbedClassifier model = build_architecture(arch, input_shape, num_classes, seed);
    auto expected_probes = manifest.at("probe_names").get<std::vector<std::string>>();
    if (expected_probes != model.probe_names()) {
        throw IoError("checkpoint probe roster does not match the architecture");
    }
    for (auto& ref : model.parameters()) {
        std::string stored_name;
        Tensor loaded =
            io::read_float_blob(dir / "params" / blob_filename(ref.name), &stored_name);
        if (stored_name != ref.name || !loaded.same_shape(*ref.tensor)) {
            throw IoError("checkpoint blob mismatch for parameter " + ref.name);
        }
        *ref.tensor = std::move(loaded);
    }
    return model;
}

std::uint64_t checkpoint_checksum(const std::filesystem::path& dir) {
    json manifest = json::parse(io::read_text_file(dir / "manifest.json"));
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& name : manifest.at("params")) {
        Tensor t = io::read_float_blob(dir / "params" / blob_filename(name.get<std::string>()));
        h = byte_checksum(t.data(), static_cast<size_t>(t.numel()) * sizeof(float), h);
    }
    return h;
}

}  // namespace demtrain::model
