#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace citypano {

enum class ErrorCode {
    DegenerateDirection,
    GimbalCase,
    MalformedXml,
    UnsupportedLod,
    InvalidPolygon,
    OutOfBounds,
    TriangulationFailure,
    CameraInsideGeometry,
    DimensionMismatch,
    EmptyInput,
    DegenerateStreet,
    GravityDegenerate,
    NonFiniteObjective,
    NoHeldOutFrames,
    UnknownBuilding,
    UnknownScenario,
    SunBelowHorizon,
    SceneNotLoaded,
    SessionUnknown,
    NoBuildingAtPixel,
    InvalidFormat,
    IoError,
    InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::DegenerateDirection: return "DegenerateDirection";
    case ErrorCode::GimbalCase: return "GimbalCase";
    case ErrorCode::MalformedXml: return "MalformedXml";
    case ErrorCode::UnsupportedLod: return "UnsupportedLod";
    case ErrorCode::InvalidPolygon: return "InvalidPolygon";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::TriangulationFailure: return "TriangulationFailure";
    case ErrorCode::CameraInsideGeometry: return "CameraInsideGeometry";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DegenerateStreet: return "DegenerateStreet";
    case ErrorCode::GravityDegenerate: return "GravityDegenerate";
    case ErrorCode::NonFiniteObjective: return "NonFiniteObjective";
    case ErrorCode::NoHeldOutFrames: return "NoHeldOutFrames";
    case ErrorCode::UnknownBuilding: return "UnknownBuilding";
    case ErrorCode::UnknownScenario: return "UnknownScenario";
    case ErrorCode::SunBelowHorizon: return "SunBelowHorizon";
    case ErrorCode::SceneNotLoaded: return "SceneNotLoaded";
    case ErrorCode::SessionUnknown: return "SessionUnknown";
    case ErrorCode::NoBuildingAtPixel: return "NoBuildingAtPixel";
    case ErrorCode::InvalidFormat: return "InvalidFormat";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Library-wide exception. `code()` is stable and is what callers and the
/// wire protocol switch on; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace citypano
