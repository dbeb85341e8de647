#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "demtrain/checkpoint.hpp"
#include "demtrain/config.hpp"
#include "demtrain/dataset.hpp"
#include "demtrain/defense.hpp"
#include "demtrain/entropy.hpp"
#include "demtrain/errors.hpp"
#include "demtrain/metrics.hpp"
#include "demtrain/report.hpp"
#include "demtrain/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace demtrain;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct CommonArgs {
    std::string config_file;
    std::vector<std::string> overrides;
};

cli::ExperimentConfig resolve(const CommonArgs& args) {
    return cli::ExperimentConfig::load(args.config_file, args.overrides);
}

data::DatasetPair load_data(const cli::ExperimentConfig& cfg) {
    return data::load_dataset(cfg.dataset_name(), cfg.dataset_root());
}

data::LabeledDataset capped(const data::LabeledDataset& ds, int cap) {
    if (cap <= 0 || cap >= ds.count()) return ds;
    std::vector<int> idx(static_cast<size_t>(cap));
    for (int i = 0; i < cap; ++i) idx[static_cast<size_t>(i)] = i;
    return data::subset_by_indices(ds, idx, ds.split_tag);
}

void ensure_artifact_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create artifact dir " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw IoError("short write: " + path.string());
}

double entropy_gap_for(const model::ProbedClassifier& net, const data::LabeledDataset& test,
                       const attack::Perturbation& pert, int cap) {
    Tensor batch = data::take_images(test, cap > 0 ? cap : 256);
    auto report = entropy::run_entropy_analysis(net, batch, pert, {net.deepest_probe()});
    return report.entropy_gap;
}

int cmd_train(const CommonArgs& args, const std::string& out_override) {
    auto cfg = resolve(args);
    auto pair = load_data(cfg);
    auto net = model::build_architecture(model::arch_from_string(cfg.arch()),
                                         pair.train.sample_shape(), pair.train.num_classes,
                                         cfg.seed());
    auto outcome = model::train_baseline(std::move(net), pair.train, cfg.train_config());

    fs::path dir = out_override.empty() ? cfg.artifact_dir() / "baseline_model"
                                        : fs::path(out_override);
    ensure_artifact_dir(dir.parent_path().empty() ? "." : dir.parent_path());
    model::save_checkpoint(outcome.model, dir, cfg.resolved_json());
    eval::write_manifest(dir / "manifest.json", cfg.resolved_json(),
                         {{"kind", "baseline-checkpoint"}});

    double test_acc = model::classification_accuracy(outcome.model, pair.test);
    std::cout << "checkpoint: " << dir.string() << "\n"
              << "first-epoch loss: " << outcome.epoch_loss.front()
              << "  last-epoch loss: " << outcome.epoch_loss.back() << "\n"
              << "test accuracy: " << test_acc << "\n"
              << "checksum: " << model::checkpoint_checksum(dir) << "\n";
    return kExitOk;
}

int cmd_attack(const CommonArgs& args, const std::string& kind_str,
               const std::string& model_path, const std::string& out_override) {
    auto cfg = resolve(args);
    auto pair = load_data(cfg);
    auto net = model::load_checkpoint(model_path.empty()
                                          ? cfg.artifact_dir() / "baseline_model"
                                          : fs::path(model_path));
    auto kind = eval::attack_kind_from_string(kind_str);
    auto acfg = cfg.attack_config();
    auto pert = eval::craft_by_kind(net, pair.train, kind, cfg.attack_target_class(),
                                    cfg.attack_epsilon(), acfg);

    fs::path dir = cfg.artifact_dir();
    ensure_artifact_dir(dir);
    fs::path pert_path = out_override.empty() ? dir / ("uap_" + kind_str + ".pert")
                                              : fs::path(out_override);
    attack::save_perturbation(pert, pert_path);
    eval::write_manifest(pert_path, cfg.resolved_json(), {{"kind", "perturbation"}});

    auto test = capped(pair.test, cfg.eval_sample_cap());
    auto report = eval::evaluate_perturbation(net, test, pert,
                                              {{"attack_kind", kind_str},
                                               {"dataset", cfg.dataset_name()},
                                               {"seed", std::to_string(cfg.seed())}});
    report.entropy_gap = entropy_gap_for(net, test, pert, cfg.get_int("eval.batch_size"));
    fs::path report_path = pert_path;
    report_path.replace_extension(".report.json");
    eval::write_eval_report(report, report_path);
    eval::write_manifest(report_path, cfg.resolved_json(), {{"kind", "eval-report"}});

    std::cout << "perturbation: " << pert_path.string() << "\n"
              << "report: " << report_path.string() << "\n"
              << "SR: " << report.sr << "  AAcc: " << report.aacc
              << "  entropy gap: " << report.entropy_gap << "\n"
              << "checksum: " << attack::perturbation_checksum(pert) << "\n";
    return kExitOk;
}

int cmd_analyze(const CommonArgs& args, const std::string& model_path,
                const std::string& pert_path, const std::string& probes_csv) {
    auto cfg = resolve(args);
    auto pair = load_data(cfg);
    auto net = model::load_checkpoint(model_path);
    auto pert = attack::load_perturbation(pert_path);

    std::vector<std::string> probes;
    if (probes_csv.empty()) {
        probes = net.probe_names();
    } else {
        std::istringstream ss(probes_csv);
        std::string part;
        while (std::getline(ss, part, ',')) probes.push_back(part);
        for (const auto& p : probes) net.probe_layer(p);  // fail fast with roster message
    }

    Tensor batch = data::take_images(pair.test, cfg.get_int("eval.batch_size"));
    auto analysis = entropy::run_entropy_analysis(net, batch, pert, probes);

    fs::path dir = cfg.artifact_dir();
    ensure_artifact_dir(dir);
    fs::path out = dir / "analysis.json";
    eval::write_analysis_report(analysis, out);
    eval::write_manifest(out, cfg.resolved_json(), {{"kind", "entropy-analysis"}});
    std::cout << eval::analysis_quartile_table(analysis) << "report: " << out.string() << "\n";
    return kExitOk;
}

int cmd_defend(const CommonArgs& args, const std::string& model_path,
               const std::string& out_override) {
    auto cfg = resolve(args);
    auto pair = load_data(cfg);
    auto net = model::load_checkpoint(model_path.empty()
                                          ? cfg.artifact_dir() / "baseline_model"
                                          : fs::path(model_path));
    double base_acc = model::classification_accuracy(net, pair.test);

    auto clean = data::sample_clean_subset(pair.train, cfg.clean_fraction(), cfg.seed());
    auto outcome = defense::democratic_training(std::move(net), clean, cfg.defense_config());

    fs::path dir = out_override.empty() ? cfg.artifact_dir() / "defended_model"
                                        : fs::path(out_override);
    model::save_checkpoint(outcome.model, dir, cfg.resolved_json());
    eval::write_manifest(dir / "manifest.json", cfg.resolved_json(),
                         {{"kind", "defended-checkpoint"}});
    defense::write_defense_log(outcome.log, dir / "defense_log.csv");

    double acc = model::classification_accuracy(outcome.model, pair.test);
    std::cout << "repaired checkpoint: " << dir.string() << "\n"
              << "clean accuracy: " << base_acc << " -> " << acc << "\n"
              << "training log: " << (dir / "defense_log.csv").string() << "\n"
              << "checksum: " << model::checkpoint_checksum(dir) << "\n";
    return kExitOk;
}

int cmd_eval(const CommonArgs& args, const std::string& model_path, const std::string& pert_path,
             const std::string& baseline_path) {
    auto cfg = resolve(args);
    auto pair = load_data(cfg);
    auto net = model::load_checkpoint(model_path);
    auto pert = attack::load_perturbation(pert_path);
    auto test = capped(pair.test, cfg.eval_sample_cap());

    auto report = eval::evaluate_perturbation(net, test, pert,
                                              {{"dataset", cfg.dataset_name()},
                                               {"model", model_path},
                                               {"perturbation", pert_path},
                                               {"seed", std::to_string(cfg.seed())}});
    if (!baseline_path.empty()) {
        auto baseline = model::load_checkpoint(baseline_path);
        report.delta_clean_acc =
            report.clean_acc - model::classification_accuracy(baseline, test);
    }
    report.entropy_gap = entropy_gap_for(net, test, pert, cfg.get_int("eval.batch_size"));

    fs::path dir = cfg.artifact_dir();
    ensure_artifact_dir(dir);
    fs::path out = dir / "eval_report.json";
    eval::write_eval_report(report, out);
    eval::write_manifest(out, cfg.resolved_json(), {{"kind", "eval-report"}});
    std::cout << "SR: " << report.sr << "  AAcc: " << report.aacc
              << "  clean acc: " << report.clean_acc
              << "  delta clean acc: " << report.delta_clean_acc
              << "  entropy gap: " << report.entropy_gap << "\n"
              << "report: " << out.string() << "\n";
    return kExitOk;
}

int cmd_sweep_eps(const CommonArgs& args, const std::string& model_path) {
    auto cfg = resolve(args);
    auto pair = load_data(cfg);
    auto net = model::load_checkpoint(model_path);
    auto test = capped(pair.test, cfg.eval_sample_cap());
    auto reports = eval::epsilon_sweep(net, pair.train, test, cfg.attack_target_class(),
                                       cfg.eps_list(), cfg.attack_config());

    fs::path dir = cfg.artifact_dir();
    ensure_artifact_dir(dir);
    json arr = json::array();
    auto eps = cfg.eps_list();
    for (size_t i = 0; i < reports.size(); ++i) {
        arr.push_back(json::parse(eval::eval_report_to_json(reports[i])));
        std::cout << "eps=" << eps[i] << "  SR=" << reports[i].sr
                  << "  AAcc=" << reports[i].aacc << "\n";
    }
    fs::path out = dir / "eps_sweep.json";
    write_text(out, arr.dump(2) + "\n");
    eval::write_manifest(out, cfg.resolved_json(), {{"kind", "eps-sweep"}});
    std::cout << "report: " << out.string() << "\n";
    return kExitOk;
}

int cmd_reattack(const CommonArgs& args, const std::string& model_path,
                 const std::string& kind_str) {
    auto cfg = resolve(args);
    auto pair = load_data(cfg);
    auto net = model::load_checkpoint(model_path);
    auto kind = eval::attack_kind_from_string(kind_str);
    auto test = capped(pair.test, cfg.eval_sample_cap());
    auto result = eval::adaptive_reattack_protocol(net, pair.train, test, kind,
                                                   cfg.attack_target_class(),
                                                   cfg.attack_epsilon(), cfg.attack_config());

    fs::path dir = cfg.artifact_dir();
    ensure_artifact_dir(dir);
    fs::path pert_path = dir / ("reattack_" + kind_str + ".pert");
    attack::save_perturbation(result.perturbation, pert_path);
    eval::write_manifest(pert_path, cfg.resolved_json(), {{"kind", "reattack-perturbation"}});
    fs::path report_path = dir / ("reattack_" + kind_str + ".report.json");
    eval::write_eval_report(result.report, report_path);
    eval::write_manifest(report_path, cfg.resolved_json(), {{"kind", "eval-report"}});

    std::cout << "secondary SR: " << result.report.sr << "  AAcc: " << result.report.aacc << "\n"
              << "perturbation: " << pert_path.string() << "\n"
              << "report: " << report_path.string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"entropy-guided UAP attack/defense toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // let global --config/--set appear after the subcommand

    CommonArgs common;
    app.add_option("--config", common.config_file, "JSON experiment config file");
    app.add_option("--set", common.overrides, "override config values, key.path=value");

    std::string model_path, pert_path, baseline_path, out_path, probes_csv;
    std::string attack_kind = "targeted";

    auto* train = app.add_subcommand("train", "train a baseline classifier");
    train->add_option("--out", out_path, "checkpoint directory");

    auto* atk = app.add_subcommand("attack", "craft a universal perturbation");
    atk->add_option("--kind", attack_kind, "targeted|spgd|patch|nontargeted|adaptive");
    atk->add_option("--model", model_path, "checkpoint directory (default: baseline)");
    atk->add_option("--out", out_path, "perturbation file path");

    auto* analyze = app.add_subcommand("analyze", "layer-wise entropy analysis");
    analyze->add_option("--model", model_path, "checkpoint directory")->required();
    analyze->add_option("--perturbation", pert_path, "perturbation file")->required();
    analyze->add_option("--probes", probes_csv, "comma-separated probe names (default: all)");

    auto* defend = app.add_subcommand("defend", "entropy-guided repair of a checkpoint");
    defend->add_option("--model", model_path, "checkpoint directory (default: baseline)");
    defend->add_option("--out", out_path, "output checkpoint directory");

    auto* evalc = app.add_subcommand("eval", "evaluate a perturbation against a model");
    evalc->add_option("--model", model_path, "checkpoint directory")->required();
    evalc->add_option("--perturbation", pert_path, "perturbation file")->required();
    evalc->add_option("--baseline", baseline_path, "baseline checkpoint for delta clean acc");

    auto* sweep = app.add_subcommand("sweep-eps", "attack at several budgets");
    sweep->add_option("--model", model_path, "checkpoint directory")->required();

    auto* reattack = app.add_subcommand("reattack", "secondary white-box attack");
    reattack->add_option("--model", model_path, "repaired checkpoint directory")->required();
    reattack->add_option("--kind", attack_kind, "targeted|spgd|patch|nontargeted|adaptive");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (train->parsed()) return cmd_train(common, out_path);
        if (atk->parsed()) return cmd_attack(common, attack_kind, model_path, out_path);
        if (analyze->parsed()) return cmd_analyze(common, model_path, pert_path, probes_csv);
        if (defend->parsed()) return cmd_defend(common, model_path, out_path);
        if (evalc->parsed()) return cmd_eval(common, model_path, pert_path, baseline_path);
        if (sweep->parsed()) return cmd_sweep_eps(common, model_path);
        if (reattack->parsed()) return cmd_reattack(common, model_path, attack_kind);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitConfig;
}
