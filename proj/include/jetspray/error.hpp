#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace jetspray {

enum class ErrorKind {
    OrderMismatch,
    SingularJet,
    DomainError,
    BadLevel,
    BadOrder,
    BadIndex,
    BaseMismatch,
    OutsideSlashed,
    TruncatedRecord,
    TruncatedVariation,
    DepthCap,
    ShrinkEpsilon,
    GridTooShort,
    SingularFrame,
    NotTransversal,
    SingularAt,
    NotDiffeo,
    NotEmbeddable,
    ChartFailed,
    ParseError,
    InvalidArgument,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries one of the kinds above so
/// callers (and the CLI) can branch on it without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::OrderMismatch: return "OrderMismatch";
    case ErrorKind::SingularJet: return "SingularJet";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::BadLevel: return "BadLevel";
    case ErrorKind::BadOrder: return "BadOrder";
    case ErrorKind::BadIndex: return "BadIndex";
    case ErrorKind::BaseMismatch: return "BaseMismatch";
    case ErrorKind::OutsideSlashed: return "OutsideSlashed";
    case ErrorKind::TruncatedRecord: return "TruncatedRecord";
    case ErrorKind::TruncatedVariation: return "TruncatedVariation";
    case ErrorKind::DepthCap: return "DepthCap";
    case ErrorKind::ShrinkEpsilon: return "ShrinkEpsilon";
    case ErrorKind::GridTooShort: return "GridTooShort";
    case ErrorKind::SingularFrame: return "SingularFrame";
    case ErrorKind::NotTransversal: return "NotTransversal";
    case ErrorKind::SingularAt: return "SingularAt";
    case ErrorKind::NotDiffeo: return "NotDiffeo";
    case ErrorKind::NotEmbeddable: return "NotEmbeddable";
    case ErrorKind::ChartFailed: return "ChartFailed";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

}  // namespace jetspray
