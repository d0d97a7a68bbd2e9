#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pearl {

enum class ErrorKind {
    InvalidArgument,
    MissingFile,
    MalformedInput,
    DimensionMismatch,
    UnknownLabelId,
    MalformedAnnotation,
    InvalidConfig,
    UniformMask,
    OutOfBounds,
    EmptyMask,
    EmptyList,
    ZeroNorm,
    LengthMismatch,
    MissingTags,
    MissingSelection,
    MissingPlacement,
    BackendUnavailable,
    MalformedResponse,
    FixtureMiss,
    EmptyTagList,
    EmptyAfterParse,
    TemplateMissingPlaceholder,
    SelectionNotInTags,
    NoBoxFound,
    EditorDimensionChange,
    NoCoordinateInResponse,
    NonPositiveDepth,
    MissingAnnotationPoint,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library. `kind()` is the stable,
/// machine-checkable part; the message is for humans. Pipeline code attaches
/// the failing stage name before rethrowing.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    Error(ErrorKind kind, const std::string& message, std::string stage)
        : std::runtime_error("stage " + stage + ": " + std::string(to_string(kind)) + ": " + message),
          kind_(kind), stage_(std::move(stage)), detail_(message) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& stage() const noexcept { return stage_; }

    /// Message without the kind/stage prefix.
    std::string detail() const;

    /// Copy of this error attributed to `stage`. Keeps an existing attribution.
    Error with_stage(const std::string& stage) const;

private:
    ErrorKind kind_;
    std::string stage_;
    std::string detail_;
};

}  // namespace pearl
