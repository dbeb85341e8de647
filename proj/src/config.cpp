#include "demtrain/config.hpp"

#include <cstdlib>

#include <nlohmann/json.hpp>

#include "blob_io.hpp"
#include "demtrain/errors.hpp"

namespace demtrain::cli {

using nlohmann::json;

std::string ExperimentConfig::default_json() {
    static const json defaults{
        {"dataset", {{"name", "synthetic-blobs"}, {"root", "data"}}},
        {"arch", "small_cnn"},
        {"seed", 7},
        {"artifact_dir", "artifacts"},
        {"train",
         {{"epochs", 5},
          {"batch_size", 64},
          {"learning_rate", 0.02},
          {"optimizer", "sgd_momentum"}}},
        {"attack",
         {{"kind", "targeted"},
          {"target_class", 0},
          {"epsilon", 10.0 / 255.0},
          {"iterations", 300},
          {"step_size", 0.0},
          {"batch_size", 64},
          {"epochs_over_data", 8},
          {"rho", 0.0},
          {"patch_fraction", 0.02},
          {"patch_corner", "top_left"}}},
        {"defense",
         {{"alpha", 0.5},
          {"epochs", 20},
          {"sg_iterations", 4},
          {"epsilon", 10.0 / 255.0},
          {"learning_rate", 0.02},
          {"batch_size", 32},
          {"probe", ""},
          {"clean_fraction", 0.05}}},
        {"eval",
         {{"batch_size", 256},
          {"sample_cap", 0},
          {"eps_list", {5.0 / 255.0, 10.0 / 255.0, 15.0 / 255.0}}}}};
    return defaults.dump();
}

namespace {

json* descend(json& root, const std::string& dotted, bool must_exist) {
    json* cur = &root;
    size_t pos = 0;
    while (true) {
        size_t dot = dotted.find('.', pos);
        std::string key = dotted.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (must_exist && !cur->contains(key)) {
            throw ConfigError("unknown config key '" + dotted + "'");
        }
        cur = &(*cur)[key];
        if (dot == std::string::npos) return cur;
        pos = dot + 1;
    }
}

const json* descend_const(const json& root, const std::string& dotted) {
    const json* cur = &root;
    size_t pos = 0;
    while (true) {
        size_t dot = dotted.find('.', pos);
        std::string key = dotted.substr(pos, dot == std::string::npos ? dot : dot - pos);
        auto it = cur->find(key);
        if (it == cur->end()) throw ConfigError("unknown config key '" + dotted + "'");
        cur = &*it;
        if (dot == std::string::npos) return cur;
        pos = dot + 1;
    }
}

json parse_override_value(const std::string& text) {
    // Accept JSON literals (numbers, bools, arrays) and fall back to string.
    json parsed = json::parse(text, nullptr, false);
    if (!parsed.is_discarded()) return parsed;
    return json(text);
}

void merge_into(json& base, const json& patch, const std::string& prefix) {
    for (auto& [key, value] : patch.items()) {
        std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
        if (value.is_object() && base[key].is_object()) {
            merge_into(base[key], value, path);
        } else {
            base[key] = value;
        }
    }
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const std::string& config_file_or_empty,
                                        const std::vector<std::string>& overrides) {
    json resolved = json::parse(default_json());
    if (!config_file_or_empty.empty()) {
        std::string text;
        try {
            text = io::read_text_file(config_file_or_empty);
        } catch (const IoError& e) {
            throw IoError(std::string("config file: ") + e.what());
        }
        json from_file = json::parse(text, nullptr, false);
        if (from_file.is_discarded()) {
            throw ConfigError("config file is not valid JSON: " + config_file_or_empty);
        }
        merge_into(resolved, from_file, "");
    }
    for (const auto& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--set expects key=value, got '" + ov + "'");
        }
        std::string key = ov.substr(0, eq);
        json* slot = descend(resolved, key, /*must_exist=*/true);
        *slot = parse_override_value(ov.substr(eq + 1));
    }
    ExperimentConfig cfg;
    cfg.json_text_ = resolved.dump();
    return cfg;
}

std::string ExperimentConfig::resolved_json() const { return json_text_; }

std::string ExperimentConfig::get_string(const std::string& dotted) const {
    json j = json::parse(json_text_);
    const json* v = descend_const(j, dotted);
    if (v->is_string()) return v->get<std::string>();
    return v->dump();
}

double ExperimentConfig::get_double(const std::string& dotted) const {
    json j = json::parse(json_text_);
    const json* v = descend_const(j, dotted);
    if (!v->is_number()) throw ConfigError("config key '" + dotted + "' is not a number");
    return v->get<double>();
}

int ExperimentConfig::get_int(const std::string& dotted) const {
    json j = json::parse(json_text_);
    const json* v = descend_const(j, dotted);
    if (!v->is_number_integer()) throw ConfigError("config key '" + dotted + "' is not an integer");
    return v->get<int>();
}

std::string ExperimentConfig::dataset_name() const { return get_string("dataset.name"); }

std::filesystem::path ExperimentConfig::dataset_root() const {
    return get_string("dataset.root");
}

std::string ExperimentConfig::arch() const { return get_string("arch"); }

std::uint64_t ExperimentConfig::seed() const {
    return static_cast<std::uint64_t>(get_int("seed"));
}

std::filesystem::path ExperimentConfig::artifact_dir() const {
    if (const char* env = std::getenv("DEMTRAIN_ARTIFACT_DIR"); env && *env) {
        return env;
    }
    return get_string("artifact_dir");
}

model::TrainConfig ExperimentConfig::train_config() const {
    model::TrainConfig cfg;
    cfg.epochs = get_int("train.epochs");
    cfg.batch_size = get_int("train.batch_size");
    cfg.learning_rate = get_double("train.learning_rate");
    cfg.seed = seed();
    cfg.optimizer_kind = model::optimizer_from_string(get_string("train.optimizer"));
    return cfg;
}

attack::AttackConfig ExperimentConfig::attack_config() const {
    attack::AttackConfig cfg;
    cfg.iterations = get_int("attack.iterations");
    cfg.step_size = get_double("attack.step_size");
    cfg.batch_size = get_int("attack.batch_size");
    cfg.seed = seed();
    cfg.rho = get_double("attack.rho");
    cfg.epochs_over_data = get_int("attack.epochs_over_data");
    cfg.patch_fraction = get_double("attack.patch_fraction");
    cfg.patch_corner = attack::corner_from_string(get_string("attack.patch_corner"));
    return cfg;
}

double ExperimentConfig::attack_epsilon() const { return get_double("attack.epsilon"); }

int ExperimentConfig::attack_target_class() const { return get_int("attack.target_class"); }

defense::DefenseConfig ExperimentConfig::defense_config() const {
    defense::DefenseConfig cfg;
    cfg.alpha = get_double("defense.alpha");
    cfg.epochs = get_int("defense.epochs");
    cfg.sg_iterations = get_int("defense.sg_iterations");
    cfg.epsilon = get_double("defense.epsilon");
    cfg.learning_rate = get_double("defense.learning_rate");
    cfg.batch_size = get_int("defense.batch_size");
    cfg.probe = get_string("defense.probe");
    cfg.seed = seed();
    return cfg;
}

double ExperimentConfig::clean_fraction() const { return get_double("defense.clean_fraction"); }

std::vector<double> ExperimentConfig::eps_list() const {
    json j = json::parse(json_text_);
    return j.at("eval").at("eps_list").get<std::vector<double>>();
}

int ExperimentConfig::eval_sample_cap() const { return get_int("eval.sample_cap"); }

}  // namespace demtrain::cli
