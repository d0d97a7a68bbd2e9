#include "pearl/error.hpp"

namespace pearl {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::MissingFile: return "MissingFile";
        case ErrorKind::MalformedInput: return "MalformedInput";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::UnknownLabelId: return "UnknownLabelId";
        case ErrorKind::MalformedAnnotation: return "MalformedAnnotation";
        case ErrorKind::InvalidConfig: return "InvalidConfig";
        case ErrorKind::UniformMask: return "UniformMask";
        case ErrorKind::OutOfBounds: return "OutOfBounds";
        case ErrorKind::EmptyMask: return "EmptyMask";
        case ErrorKind::EmptyList: return "EmptyList";
        case ErrorKind::ZeroNorm: return "ZeroNorm";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::MissingTags: return "MissingTags";
        case ErrorKind::MissingSelection: return "MissingSelection";
        case ErrorKind::MissingPlacement: return "MissingPlacement";
        case ErrorKind::BackendUnavailable: return "BackendUnavailable";
        case ErrorKind::MalformedResponse: return "MalformedResponse";
        case ErrorKind::FixtureMiss: return "FixtureMiss";
        case ErrorKind::EmptyTagList: return "EmptyTagList";
        case ErrorKind::EmptyAfterParse: return "EmptyAfterParse";
        case ErrorKind::TemplateMissingPlaceholder: return "TemplateMissingPlaceholder";
        case ErrorKind::SelectionNotInTags: return "SelectionNotInTags";
        case ErrorKind::NoBoxFound: return "NoBoxFound";
        case ErrorKind::EditorDimensionChange: return "EditorDimensionChange";
        case ErrorKind::NoCoordinateInResponse: return "NoCoordinateInResponse";
        case ErrorKind::NonPositiveDepth: return "NonPositiveDepth";
        case ErrorKind::MissingAnnotationPoint: return "MissingAnnotationPoint";
    }
    return "Unknown";
}

std::string Error::detail() const {
    if (!stage_.empty()) return detail_;
    std::string full = what();
    const auto prefix = std::string(to_string(kind_)) + ": ";
    if (full.rfind(prefix, 0) == 0) return full.substr(prefix.size());
    return full;
}

Error Error::with_stage(const std::string& stage) const {
    if (!stage_.empty()) return *this;
    return Error(kind_, detail(), stage);
}

}  // namespace pearl
