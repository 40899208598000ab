#pragma once

#include <stdexcept>
#include <string>

namespace netmis {

/// Base for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct BadArgs : Error {
    using Error::Error;
};
struct EmptySample : Error {
    using Error::Error;
};
struct EmptyCell : Error {
    using Error::Error;
};
struct ThinCell : Error {
    using Error::Error;
};
struct SingularInput : Error {
    using Error::Error;
};
struct ComplexSpectrum : Error {
    using Error::Error;
};
struct AmbiguousOrdering : Error {
    using Error::Error;
};
struct NonIdentified : Error {
    using Error::Error;
};
struct DimMismatch : Error {
    using Error::Error;
};
struct RankDeficient : Error {
    using Error::Error;
};
struct NoConvergence : Error {
    using Error::Error;
};
struct SingularHessian : Error {
    using Error::Error;
};
struct SchemaError : Error {
    using Error::Error;
};
struct IntegrityError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

}  // namespace netmis
