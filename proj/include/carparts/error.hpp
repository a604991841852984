#pragma once

#include <stdexcept>
#include <string>

namespace carparts {

enum class Err {
    EmptyInput,
    ShapeMismatch,
    InconsistentTopology,
    OutOfRange,
    BehindCamera,
    EmptyBox,
    InsufficientNodes,
    DegenerateConfiguration,
    TooFewParts,
    EmptyGroundTruth,
    NonConvergence,
    SingularNormalEquations,
    PlacementFailure,
    InvalidArgument,
    Io,
    Schema,
};

inline const char* to_string(Err e)
{
    switch (e) {
    case Err::EmptyInput: return "EmptyInput";
    case Err::ShapeMismatch: return "ShapeMismatch";
    case Err::InconsistentTopology: return "InconsistentTopology";
    case Err::OutOfRange: return "OutOfRange";
    case Err::BehindCamera: return "BehindCamera";
    case Err::EmptyBox: return "EmptyBox";
    case Err::InsufficientNodes: return "InsufficientNodes";
    case Err::DegenerateConfiguration: return "DegenerateConfiguration";
    case Err::TooFewParts: return "TooFewParts";
    case Err::EmptyGroundTruth: return "EmptyGroundTruth";
    case Err::NonConvergence: return "NonConvergence";
    case Err::SingularNormalEquations: return "SingularNormalEquations";
    case Err::PlacementFailure: return "PlacementFailure";
    case Err::InvalidArgument: return "InvalidArgument";
    case Err::Io: return "Io";
    case Err::Schema: return "Schema";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(Err code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {
    }

    Err code() const { return code_; }

private:
    Err code_;
};

} // namespace carparts
