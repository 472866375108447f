#pragma once

#include <stdexcept>
#include <string>

namespace natsim {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- network validation ---
struct ValidationError : Error {
    std::string field;  // offending field, e.g. "gamma_deph[2]" or "(0,1)"
    ValidationError(const std::string& kind, const std::string& fld)
        : Error(kind + ": " + fld), field(fld) {}
};
struct AsymmetricCoupling : ValidationError {
    explicit AsymmetricCoupling(const std::string& fld)
        : ValidationError("AsymmetricCoupling", fld) {}
};
struct NegativeRate : ValidationError {
    explicit NegativeRate(const std::string& fld) : ValidationError("NegativeRate", fld) {}
};
struct IndexOutOfRange : ValidationError {
    explicit IndexOutOfRange(const std::string& fld) : ValidationError("IndexOutOfRange", fld) {}
};
struct MissingAttachment : ValidationError {
    explicit MissingAttachment(const std::string& fld)
        : ValidationError("MissingAttachment", fld) {}
};
struct InvalidParameter : ValidationError {
    explicit InvalidParameter(const std::string& fld)
        : ValidationError("InvalidParameter", fld) {}
};

// --- state-space construction ---
struct Overflow : Error {
    explicit Overflow(const std::string& msg) : Error(msg) {}
};
struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& msg) : Error(msg) {}
};

// --- solvers ---
struct SolverError : Error {
    explicit SolverError(const std::string& msg) : Error(msg) {}
};
struct StepSizeUnderflow : SolverError {
    explicit StepSizeUnderflow(const std::string& msg) : SolverError(msg) {}
};
struct InvariantViolation : SolverError {
    explicit InvariantViolation(const std::string& msg) : SolverError(msg) {}
};
struct SingularSolve : SolverError {
    explicit SingularSolve(const std::string& msg) : SolverError(msg) {}
};
struct DegenerateSteadyState : SolverError {
    explicit DegenerateSteadyState(const std::string& msg) : SolverError(msg) {}
};
struct SingularSystem : SolverError {
    explicit SingularSystem(const std::string& msg) : SolverError(msg) {}
};

// --- analysis ---
struct TooFewPoints : Error {
    explicit TooFewPoints(const std::string& msg) : Error(msg) {}
};
struct NoTransientWindow : Error {
    explicit NoTransientWindow(const std::string& msg) : Error(msg) {}
};
struct InsufficientData : Error {
    explicit InsufficientData(const std::string& msg) : Error(msg) {}
};

// --- configuration / io ---
struct ConfigParseError : Error {
    explicit ConfigParseError(const std::string& msg) : Error(msg) {}
};
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace natsim
