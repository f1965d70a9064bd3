#pragma once

#include <stdexcept>
#include <string>

namespace bnn {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error {
    using Error::Error;
};
struct LengthMismatch : Error {
    using Error::Error;
};
struct ElementNotBinary : Error {
    using Error::Error;
};
struct NonFiniteInput : Error {
    using Error::Error;
};
struct ModeMismatch : Error {
    using Error::Error;
};
struct InputOutOfRange : Error {
    using Error::Error;
};
struct DegenerateBatch : Error {
    using Error::Error;
};
struct CacheMismatch : Error {
    using Error::Error;
};
struct NonPowerOfTwoHyperparam : Error {
    using Error::Error;
};
struct ZeroFan : Error {
    using Error::Error;
};
struct LabelOutOfRange : Error {
    using Error::Error;
};
struct UninitializedNetwork : Error {
    using Error::Error;
};
struct UntrainedNetwork : Error {
    using Error::Error;
};
struct StaleCache : Error {
    using Error::Error;
};
struct BadMagic : Error {
    using Error::Error;
};
struct TruncatedFile : Error {
    using Error::Error;
};
struct DimMismatch : Error {
    using Error::Error;
};
struct CorruptModel : Error {
    using Error::Error;
};
struct UnknownPrecision : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

}  // namespace bnn
