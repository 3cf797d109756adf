#pragma once

#include <stdexcept>
#include <string>

namespace pauselab {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor extents don't line up (matmul inner dims, mask vs sequence, ...).
struct ShapeError : Error {
    using Error::Error;
};

// backward() called on a non-scalar node.
struct RankError : Error {
    using Error::Error;
};

// Token/class index out of range.
struct IndexError : Error {
    using Error::Error;
};

// Attention mask has a fully-masked row or bad prefix bounds.
struct MaskError : Error {
    using Error::Error;
};

// NaN/Inf produced during forward or backward.
struct NumericError : Error {
    using Error::Error;
};

// Token id not representable in the vocabulary.
struct VocabError : Error {
    using Error::Error;
};

// Sequence exceeds max_positions (or is empty where it must not be).
struct LengthError : Error {
    using Error::Error;
};

// Parameter outside its documented range (prefix length > K, ...).
struct RangeError : Error {
    using Error::Error;
};

// Task generator cannot satisfy the requested size parameters.
struct GenerationError : Error {
    using Error::Error;
};

// Input sequence already contains the reserved token being inserted.
struct ContaminationError : Error {
    using Error::Error;
};

// Corpus too short for the requested training budget.
struct BudgetError : Error {
    using Error::Error;
};

// Serialized file has a bad magic or malformed framing.
struct FormatError : Error {
    using Error::Error;
};

// Well-formed file that does not match the expected configuration.
struct CompatibilityError : Error {
    using Error::Error;
};

// File ends mid-record.
struct CorruptionError : Error {
    using Error::Error;
};

// Bad key, value, or combination in a config file / CLI flags.
struct ConfigError : Error {
    using Error::Error;
};

} // namespace pauselab
