#include "asd/error.hpp"

namespace asd {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedName: return "MalformedName";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::ClipTooShort: return "ClipTooShort";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::Precondition: return "Precondition";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::InsufficientFrames: return "InsufficientFrames";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::PTooSmall: return "PTooSmall";
    case ErrorCode::MissingCell: return "MissingCell";
    case ErrorCode::MissingModel: return "MissingModel";
    case ErrorCode::UnmatchedClip: return "UnmatchedClip";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace asd
