#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace evansbif {

/// Malformed model configuration or inconsistent model definition.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Base class of every failure raised by the numerical layers.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IntegrationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class DichotomyError : public NumericalError {
public:
    enum class Kind { NoSpectralGap, HorizonNotConverged, NotHyperbolic, RankCollapse };

    DichotomyError(Kind kind, const std::string& what) : NumericalError(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class SpectrumError : public NumericalError {
public:
    enum class Kind { EndpointInSpectrum };

    SpectrumError(Kind kind, const std::string& what) : NumericalError(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class EvansError : public NumericalError {
public:
    enum class Kind { MorseMismatch, FrameJump, EndpointCritical, NotIsolatedZero, Projector };

    EvansError(Kind kind, const std::string& what) : NumericalError(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class HomoclinicError : public NumericalError {
public:
    enum class Kind { Divergence, Seeding, Stall };

    HomoclinicError(Kind kind, const std::string& what) : NumericalError(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

} // namespace evansbif
