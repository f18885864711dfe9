#pragma once

#include <stdexcept>
#include <string>

namespace ergolq {

// Base class for all toolkit failures. what() carries the failing check
// and witness values.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed inputs: dimension mismatches, bad tags, inconsistent shapes.
class StructuralError : public Error {
public:
    using Error::Error;
};

// Scalar parameters outside their admissible range (kappa <= 0, dt <= 0, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// Solver non-convergence or integrity violations (monotonicity, residuals).
class SolverError : public Error {
public:
    using Error::Error;
};

// Loss of positive semidefiniteness in a Riccati march.
class PsdLossError : public SolverError {
public:
    using SolverError::SolverError;
};

// Closed loop not mean-square stable (or not stabilizable at all).
class StabilityError : public SolverError {
public:
    using SolverError::SolverError;
};

// Path simulation blew up (non-finite state).
class SimulationError : public Error {
public:
    using Error::Error;
};

// Control fails the finiteness requirement of the discounted cost class.
class AdmissibilityError : public Error {
public:
    using Error::Error;
};

} // namespace ergolq
