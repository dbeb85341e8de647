#pragma once

#include <map>
#include <string>
#include <vector>

#include "demtrain/classifier.hpp"
#include "demtrain/entropy_math.hpp"
#include "demtrain/perturbation.hpp"
#include "demtrain/tensor.hpp"

namespace demtrain::entropy {

struct Quartiles {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

Quartiles quartiles_of(std::vector<double> values);  // copies, sorts

// Per-sample layer-wise entropies at one probe, with the box-plot summary.
struct EntropySpectrum {
    std::string probe_name;
    std::vector<double> per_sample_entropy;  // nats, sample order preserved
    int layer_width = 0;                     // d_l
    Quartiles summary;
};

EntropySpectrum spectrum_from_samples(std::string probe, int layer_width,
                                      std::vector<double> per_sample);

// One spectrum per requested probe, in probe order.
std::vector<EntropySpectrum> batch_spectrum(const model::ProbedClassifier& model,
                                            const Tensor& batch,
                                            const std::vector<std::string>& probe_names);

// Three populations per probe: the clean batch, the same batch with the
// perturbation applied (clamped to valid pixels), and the perturbation fed to
// the model on its own.
struct ProbeAnalysis {
    EntropySpectrum clean;
    EntropySpectrum perturbed;
    EntropySpectrum uap_alone;
};

struct AnalysisReport {
    std::vector<std::string> probe_order;
    std::map<std::string, ProbeAnalysis> per_probe;
    std::string deepest_probe;
    // (median clean - median perturbed) / median clean at the deepest probe.
    double entropy_gap = 0.0;
};

AnalysisReport run_entropy_analysis(const model::ProbedClassifier& model,
                                    const Tensor& clean_batch,
                                    const attack::Perturbation& uap,
                                    const std::vector<std::string>& probe_names);

double entropy_gap_from_medians(double median_clean, double median_perturbed);

}  // namespace demtrain::entropy
