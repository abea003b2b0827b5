// Copyright 2026 The tstem Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace tstem {

// Root of every error thrown by the library. Callers that only need to
// report a failure can catch this; the subclasses exist so that retry and
// fallback policies can discriminate.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value violated a domain rule (indicator syntax, offsets, tag alphabet).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Missing or contradictory configuration, detected before any I/O.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Network-level failure: connect, DNS, timeout, reset.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, bool transient = true)
      : Error(what), transient_(transient) {}
  bool transient() const noexcept { return transient_; }

 private:
  bool transient_;
};

// The peer answered, but not in the agreed wire format.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// The peer answered with a status that will not change on retry (4xx, auth).
class PermanentError : public Error {
 public:
  PermanentError(const std::string& what, int status = 0)
      : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

// Durable storage failure (bus log, archive, model file).
class StorageError : public Error {
 public:
  using Error::Error;
};

// Operation called in a state that does not permit it.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace tstem
