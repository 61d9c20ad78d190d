#include "evansbif/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "evansbif/errors.hpp"

namespace evansbif {

int SpectralIntervalSet::total_multiplicity() const {
    int s = 0;
    for (const auto& i : intervals) s += i.multiplicity;
    return s;
}

bool SpectralIntervalSet::any_merged() const {
    return std::any_of(intervals.begin(), intervals.end(), [](const auto& i) { return i.merged; });
}

bool SpectralIntervalSet::contains(double gamma) const {
    return std::any_of(intervals.begin(), intervals.end(), [gamma](const auto& i) { return gamma >= i.lo && gamma <= i.hi; });
}

SpectralIntervalSet dichotomy_spectrum(const ModelSpec& m, double lambda, const IntegratorConfig& cfg,
                                       const SpectrumOptions& opts, const DichotomyOptions& dopts) {
    const auto analysis = DichotomyAnalysis::compute(m, lambda, 0.0, opts.horizon, cfg, dopts);
    return dichotomy_spectrum(analysis, opts);
}

SpectralIntervalSet dichotomy_spectrum(const DichotomyAnalysis& analysis, const SpectrumOptions& opts) {
    if (!(opts.resolution > 0.0)) throw std::invalid_argument("resolution must be positive");
    if (!(opts.probe_step > 0.0)) throw std::invalid_argument("probe_step must be positive");
    // Finite-horizon rates carry a small spread; a gap of a quarter resolution
    // keeps point spectra narrower than the resolution.
    const double threshold = opts.resolution / 4.0;
    auto verdict = [&](double g) { return analysis.verdict(g, HalfAxis::Whole, threshold); };

    auto check_endpoint = [&](double end) {
        if (verdict(end).dichotomic) return;
        std::ostringstream msg;
        msg << "shift range endpoint " << end << " lies in the spectrum at lambda = " << analysis.lambda();
        throw SpectrumError(SpectrumError::Kind::EndpointInSpectrum, msg.str());
    };
    const auto [emin, emax] = analysis.exponent_range();
    double lo = emin - 1.0, hi = emax + 1.0;
    if (opts.gamma_range) {
        lo = opts.gamma_range->first;
        hi = opts.gamma_range->second;
        if (!(lo < hi)) throw std::invalid_argument("empty shift range");
        check_endpoint(lo);
        check_endpoint(hi);
        // Bands lying wholly outside the range pull it out.
        for (const auto* side : {&analysis.plus(), &analysis.minus()}) {
            for (const auto& b : side->bands) {
                if (b.hi + threshold < lo) lo = std::min(lo, b.lo - 1.0);
                if (b.lo - threshold > hi) hi = std::max(hi, b.hi + 1.0);
            }
        }
    }
    check_endpoint(lo);
    check_endpoint(hi);

    // Membership only changes where the gap to a band crosses the threshold, so
    // one probe inside each cell between those values sees every piece.
    std::vector<double> cuts{lo, hi};
    for (const auto* side : {&analysis.plus(), &analysis.minus()})
        for (const auto& b : side->bands)
            for (double c : {b.lo - threshold, b.hi + threshold})
                if (c > lo && c < hi) cuts.push_back(c);
    std::sort(cuts.begin(), cuts.end());
    std::vector<double> probes{lo, hi};
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) probes.push_back(0.5 * (cuts[i] + cuts[i + 1]));
    const int uniform = static_cast<int>(std::ceil((hi - lo) / opts.probe_step));
    for (int i = 1; i < uniform; ++i) probes.push_back(lo + (hi - lo) * i / uniform);
    std::sort(probes.begin(), probes.end());
    probes.erase(std::unique(probes.begin(), probes.end()), probes.end());

    std::vector<char> member(probes.size());
    for (std::size_t i = 0; i < probes.size(); ++i) member[i] = !verdict(probes[i]).dichotomic;

    // Locate a membership change between a and b (member(a) != member(b)) and
    // return the end of the final bracket that lies in the spectrum.
    auto boundary = [&](double a, double b, bool a_member) {
        while (std::fabs(b - a) > threshold) {
            const double mid = 0.5 * (a + b);
            if ((!verdict(mid).dichotomic) == a_member) a = mid;
            else b = mid;
        }
        return a_member ? a : b;
    };

    SpectralIntervalSet out;
    out.lambda = analysis.lambda();
    out.resolution = opts.resolution;
    out.gamma_lo = lo;
    out.gamma_hi = hi;
    out.horizon = analysis.horizon();
    std::size_t i = 0;
    while (i < probes.size()) {
        if (!member[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < probes.size() && member[j + 1]) ++j;
        SpectralInterval iv;
        iv.lo = boundary(probes[i - 1], probes[i], false);
        iv.hi = boundary(probes[j], probes[j + 1], true);
        iv.multiplicity = verdict(probes[i - 1]).morse_index - verdict(probes[j + 1]).morse_index;
        if (!out.intervals.empty() && iv.lo - out.intervals.back().hi < opts.resolution) {
            auto& prev = out.intervals.back();
            prev.hi = iv.hi;
            prev.multiplicity += iv.multiplicity;
            prev.merged = true;
        } else {
            out.intervals.push_back(iv);
        }
        i = j + 1;
    }
    return out;
}

} // namespace evansbif
