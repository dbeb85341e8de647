#include "demtrain/entropy.hpp"

#include <algorithm>
#include <cmath>

#include "demtrain/errors.hpp"

namespace demtrain::entropy {

namespace {

double interpolated_quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    if (sorted.size() == 1) return sorted[0];
    double pos = q * (static_cast<double>(sorted.size()) - 1.0);
    size_t lo = static_cast<size_t>(pos);
    size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

Quartiles quartiles_of(std::vector<double> values) {
    if (values.empty()) throw NumericError("quartiles of empty sample");
    std::sort(values.begin(), values.end());
    Quartiles q;
    q.min = values.front();
    q.q1 = interpolated_quantile(values, 0.25);
    q.median = interpolated_quantile(values, 0.5);
    q.q3 = interpolated_quantile(values, 0.75);
    q.max = values.back();
    return q;
}

EntropySpectrum spectrum_from_samples(std::string probe, int layer_width,
                                      std::vector<double> per_sample) {
    EntropySpectrum s;
    s.probe_name = std::move(probe);
    s.layer_width = layer_width;
    s.summary = quartiles_of(per_sample);
    s.per_sample_entropy = std::move(per_sample);
    return s;
}

std::vector<EntropySpectrum> batch_spectrum(const model::ProbedClassifier& model,
                                            const Tensor& batch,
                                            const std::vector<std::string>& probe_names) {
    auto result = model.forward_with_probes(batch, probe_names);
    std::vector<EntropySpectrum> spectra;
    spectra.reserve(probe_names.size());
    for (const auto& name : probe_names) {
        const Tensor& acts = result.probes.at(name);
        const int n = acts.dim(0);
        std::vector<double> h(static_cast<size_t>(n));
        for (int s = 0; s < n; ++s) h[static_cast<size_t>(s)] = layer_entropy(acts.sample(s));
        spectra.push_back(spectrum_from_samples(name, static_cast<int>(acts.sample_size()),
                                                std::move(h)));
    }
    return spectra;
}

double entropy_gap_from_medians(double median_clean, double median_perturbed) {
    if (median_clean == median_perturbed) return 0.0;
    if (median_clean == 0.0) throw NumericError("entropy gap undefined: clean median is zero");
    return (median_clean - median_perturbed) / median_clean;
}

AnalysisReport run_entropy_analysis(const model::ProbedClassifier& model,
                                    const Tensor& clean_batch,
                                    const attack::Perturbation& uap,
                                    const std::vector<std::string>& probe_names) {
    if (probe_names.empty()) throw ConfigError("entropy analysis: probe list is empty");
    if (uap.delta.numel() != model.input_size()) {
        throw ConfigError("entropy analysis: perturbation shape does not match model input");
    }

    Tensor perturbed = attack::apply_perturbation(clean_batch, uap);

    // The perturbation fed as its own (single-sample) input.
    Tensor uap_input({1, model.input_shape()[0], model.input_shape()[1], model.input_shape()[2]});
    std::copy_n(uap.delta.data(), uap.delta.numel(), uap_input.data());

    auto clean_spectra = batch_spectrum(model, clean_batch, probe_names);
    auto pert_spectra = batch_spectrum(model, perturbed, probe_names);
    auto uap_spectra = batch_spectrum(model, uap_input, probe_names);

    AnalysisReport report;
    report.probe_order = probe_names;
    for (size_t i = 0; i < probe_names.size(); ++i) {
        ProbeAnalysis pa;
        pa.clean = std::move(clean_spectra[i]);
        pa.perturbed = std::move(pert_spectra[i]);
        pa.uap_alone = std::move(uap_spectra[i]);
        report.per_probe.emplace(probe_names[i], std::move(pa));
    }
    // The deepest requested probe in the model's own probe ordering.
    const auto& ordered = model.probe_points();
    for (auto it = ordered.rbegin(); it != ordered.rend(); ++it) {
        if (report.per_probe.count(it->name)) {
            report.deepest_probe = it->name;
            break;
        }
    }
    const auto& deep = report.per_probe.at(report.deepest_probe);
    report.entropy_gap =
        entropy_gap_from_medians(deep.clean.summary.median, deep.perturbed.summary.median);
    return report;
}

}  // namespace demtrain::entropy
