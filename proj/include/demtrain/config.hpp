#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "demtrain/attack.hpp"
#include "demtrain/defense.hpp"
#include "demtrain/train.hpp"

namespace demtrain::cli {

// One structured config drives every subcommand; file values override the
// built-in defaults and --set key=value overrides both. Keys must exist in
// the defaults, so typos fail fast as config errors.
class ExperimentConfig {
public:
    static std::string default_json();

    static ExperimentConfig load(const std::string& config_file_or_empty,
                                 const std::vector<std::string>& overrides);

    std::string resolved_json() const;

    std::string dataset_name() const;
    std::filesystem::path dataset_root() const;
    std::string arch() const;
    std::uint64_t seed() const;
    // DEMTRAIN_ARTIFACT_DIR, when set, overrides the configured value.
    std::filesystem::path artifact_dir() const;

    model::TrainConfig train_config() const;
    attack::AttackConfig attack_config() const;
    double attack_epsilon() const;
    int attack_target_class() const;
    defense::DefenseConfig defense_config() const;
    double clean_fraction() const;
    std::vector<double> eps_list() const;
    int eval_sample_cap() const;  // 0 means the full split

    std::string get_string(const std::string& dotted) const;
    double get_double(const std::string& dotted) const;
    int get_int(const std::string& dotted) const;

private:
    std::string json_text_;
};

}  // namespace demtrain::cli
