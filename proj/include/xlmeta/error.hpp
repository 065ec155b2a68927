#pragma once

#include <stdexcept>
#include <string>

namespace xlmeta {

// Exit-code buckets used by the CLI: config=2, data=3, transport=4.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContractError : Error {
    using Error::Error;
};

struct DimensionError : ContractError {
    using ContractError::ContractError;
};

struct IndexError : ContractError {
    using ContractError::ContractError;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct IngestError : DataError {
    using DataError::DataError;
};

struct SplitError : DataError {
    using DataError::DataError;
};

struct SamplingError : DataError {
    using DataError::DataError;
};

struct SelfTrainError : DataError {
    using DataError::DataError;
};

struct TransportError : Error {
    using Error::Error;
};

}  // namespace xlmeta
