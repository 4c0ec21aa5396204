#pragma once

#include <stdexcept>
#include <string>

namespace fsrir {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration value (bad ranges, rates, lengths).
struct ConfigError : Error {
    using Error::Error;
};

// Tensor/spectrogram/waveform dimensions do not line up.
struct ShapeError : Error {
    using Error::Error;
};

// Linear-domain operation fed a log-domain spectrogram or vice versa.
struct DomainError : Error {
    using Error::Error;
};

// Requested sampling region is empty (e.g. clearance exhausts the room).
struct InfeasibleError : Error {
    using Error::Error;
};

// Input carries no usable signal (all-zero RIR, zero-energy echo).
struct DegenerateInputError : Error {
    using Error::Error;
};

// Energy decay curve never reaches the level needed for a fit.
struct InsufficientDecayError : Error {
    using Error::Error;
};

// Dataset file missing, unreadable, or inconsistent with its manifest.
struct DatasetError : Error {
    using Error::Error;
};

// Optimizer received non-finite gradients.
struct OptimizerError : Error {
    using Error::Error;
};

// API called out of order (e.g. backward before forward).
struct StateError : Error {
    using Error::Error;
};

// No direct-path peak above the noise floor.
struct LocalizationError : Error {
    using Error::Error;
};

}  // namespace fsrir
