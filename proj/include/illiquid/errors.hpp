#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace illiquid {

/// Base class of everything this library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Which admissibility clause an input failed.
enum class Clause {
    ParameterRange,     ///< a primitive constant is outside its allowed range
    InitialWealth,      ///< the initial liquidation value is negative
    DiscountRate,       ///< delta does not exceed the finite-value threshold
    HedgeDegenerate,    ///< mu1 == rho*mu2*sigma1/sigma2
    LiquidDegenerate,   ///< mu2 == rho*sigma1*sigma2/(1+q)
    DegenerateLiquidity ///< both proportional costs are zero
};

inline const char* to_string(Clause c) {
    switch (c) {
    case Clause::ParameterRange: return "parameter_range";
    case Clause::InitialWealth: return "initial_wealth";
    case Clause::DiscountRate: return "delta";
    case Clause::HedgeDegenerate: return "hedge_degenerate";
    case Clause::LiquidDegenerate: return "liquid_degenerate";
    case Clause::DegenerateLiquidity: return "degenerate_liquidity";
    }
    return "unknown";
}

struct Violation {
    Clause clause;
    std::string field;
    std::string message;
};

/// Input rejected by parameter validation or config parsing. Maps to exit code 1.
class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<Violation> violations)
        : Error(summarize(violations)), violations_(std::move(violations)) {}

    const std::vector<Violation>& violations() const noexcept { return violations_; }

    bool has(Clause c) const noexcept {
        for (const auto& v : violations_)
            if (v.clause == c) return true;
        return false;
    }

private:
    static std::string summarize(const std::vector<Violation>& vs) {
        std::string s = "invalid parameters:";
        for (const auto& v : vs) {
            s += " [";
            s += to_string(v.clause);
            if (!v.field.empty()) s += ":" + v.field;
            s += "] " + v.message + ";";
        }
        return s;
    }

    std::vector<Violation> violations_;
};

/// Malformed configuration or command line. Maps to exit code 1.
class ConfigError : public Error {
public:
    using Error::Error;
};

enum class Failure {
    OutOfDomain,
    NumericalBreakdown,
    PositivityViolated,
    EventNotFound,
    RegionExit,
    BracketingFailed,
    ToleranceNotMet,
    Singularity,
    NonpositiveWealth,
    StepRejected,
    TailTooFat
};

inline const char* to_string(Failure f) {
    switch (f) {
    case Failure::OutOfDomain: return "OutOfDomain";
    case Failure::NumericalBreakdown: return "NumericalBreakdown";
    case Failure::PositivityViolated: return "PositivityViolated";
    case Failure::EventNotFound: return "EventNotFound";
    case Failure::RegionExit: return "RegionExit";
    case Failure::BracketingFailed: return "BracketingFailed";
    case Failure::ToleranceNotMet: return "ToleranceNotMet";
    case Failure::Singularity: return "Singularity";
    case Failure::NonpositiveWealth: return "NonpositiveWealth";
    case Failure::StepRejected: return "StepRejected";
    case Failure::TailTooFat: return "TailTooFat";
    }
    return "Unknown";
}

/// A numerical procedure could not deliver its postcondition. Maps to exit code 2.
class NumericalError : public Error {
public:
    NumericalError(Failure kind, const std::string& what)
        : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    Failure kind() const noexcept { return kind_; }

private:
    Failure kind_;
};

} // namespace illiquid
