#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "evansbif/dichotomy.hpp"

namespace evansbif {

struct SpectralInterval {
    double lo = 0.0;
    double hi = 0.0;
    int multiplicity = 0;
    /// Set when two intervals closer than the resolution were joined.
    bool merged = false;
};

struct SpectralIntervalSet {
    double lambda = 0.0;
    double resolution = 0.0;
    double gamma_lo = 0.0;
    double gamma_hi = 0.0;
    double horizon = 0.0;
    std::vector<SpectralInterval> intervals;

    int total_multiplicity() const;
    bool any_merged() const;
    /// True when gamma lies in one of the intervals.
    bool contains(double gamma) const;
};

struct SpectrumOptions {
    double resolution = 1e-3;
    /// Explicit shift range. It is widened when a growth band lies wholly
    /// outside it; an endpoint inside the spectrum is an error.
    std::optional<std::pair<double, double>> gamma_range;
    /// Fixed horizon, automatic when empty.
    std::optional<double> horizon;
    /// Spacing of the uniform probes laid over the shift range.
    double probe_step = 0.05;
};

/// Sigma(lambda) as disjoint intervals with Morse-index jumps as multiplicities.
SpectralIntervalSet dichotomy_spectrum(const ModelSpec& m, double lambda, const IntegratorConfig& cfg,
                                       const SpectrumOptions& opts = {}, const DichotomyOptions& dopts = {});

/// Same, reusing an existing whole-line analysis at base time 0.
SpectralIntervalSet dichotomy_spectrum(const DichotomyAnalysis& analysis, const SpectrumOptions& opts = {});

} // namespace evansbif
