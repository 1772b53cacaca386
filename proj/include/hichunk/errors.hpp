// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hichunk {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or corrupted file contents (bad magic, truncated payload,
// wrong tensor shape, checksum mismatch, unsupported version).
class FormatError : public Error {
public:
    using Error::Error;
};

// A caller or a remote service violated an interface contract
// (dimension mismatch, empty input where non-empty is required,
// zero-norm vector passed to cosine).
class ContractError : public Error {
public:
    using Error::Error;
};

// Network-level failure talking to a remote embedding or reader
// endpoint, after retries were exhausted.
class TransportError : public Error {
public:
    using Error::Error;
};

// Invalid run configuration or command-line usage.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace hichunk
