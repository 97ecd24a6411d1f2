// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <stdexcept>
#include <string>

namespace splatswap {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
  public:
    using Error::Error;
};

class GeometryError : public Error {
  public:
    using Error::Error;
};

class BindingError : public Error {
  public:
    using Error::Error;
};

/// Non-finite value encountered. `index` is the splat or iteration, -1 when unknown.
class NumericError : public Error {
  public:
    NumericError(const std::string &what, long long index = -1) : Error(what), mIndex(index) {}
    long long index() const { return mIndex; }

  private:
    long long mIndex;
};

class ContractError : public Error {
  public:
    using Error::Error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

/// Identity pipeline failures. `encoder` names the failing encoder when known.
class IdentityError : public Error {
  public:
    IdentityError(const std::string &what, std::string encoder = {})
        : Error(what), mEncoder(std::move(encoder)) {}
    const std::string &encoder() const { return mEncoder; }

  private:
    std::string mEncoder;
};

class ServiceConnectionError : public IdentityError {
  public:
    using IdentityError::IdentityError;
};

class ServiceTimeoutError : public IdentityError {
  public:
    using IdentityError::IdentityError;
};

class ServiceProtocolError : public IdentityError {
  public:
    using IdentityError::IdentityError;
};

} // namespace splatswap
