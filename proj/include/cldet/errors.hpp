#pragma once

#include <stdexcept>
#include <string>

namespace cldet {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or broadcasting violations.
struct DimensionError : Error { using Error::Error; };
// Misuse of an API contract (e.g. backward on a non-scalar loss).
struct ContractError : Error { using Error::Error; };
// Empty input where at least one element is required.
struct EmptyInputError : Error { using Error::Error; };
// NaN/Inf where finite values are required.
struct NumericError : Error { using Error::Error; };
// Invalid hyperparameter value.
struct HyperError : Error { using Error::Error; };
// Invalid model specification.
struct SpecError : Error { using Error::Error; };
// Label outside the {0,1} domain.
struct LabelError : Error { using Error::Error; };
// Dataset-level violations (missing class, empty split, ...).
struct DataError : Error { using Error::Error; };
// Malformed file content.
struct ParseError : Error { using Error::Error; };
// Well-formed file with out-of-domain values.
struct SchemaError : Error { using Error::Error; };
// Metric preconditions (e.g. single-class score set).
struct MetricError : Error { using Error::Error; };
// Invalid experiment configuration.
struct ConfigError : Error { using Error::Error; };
// Filesystem failures.
struct IoError : Error { using Error::Error; };
// Incomplete or inconsistent run directories.
struct ReportError : Error { using Error::Error; };

}  // namespace cldet
