#pragma once

#include <stdexcept>
#include <string>

namespace tfh {

// Bad user input: config files, data files, flags. The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes that an op cannot combine.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A pooling strategy whose token index is absent from the embedding set.
class StrategyUnavailable : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Metric with a zero denominator (e.g. WAPE on an all-zero target).
class UndefinedMetric : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Non-finite loss during training.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace tfh
