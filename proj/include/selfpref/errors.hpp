// Copyright 2026 The selfpref Authors.
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

namespace selfpref {

// Non-finite numeric input.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A caller broke an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid experiment, backend or simulator configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file or unparseable model output.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Both choice probabilities were zero; the caller decides tie or retry.
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A rate whose denominator is empty (e.g. exclude-policy with only ties).
class UndefinedRateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two label sets or record sets that should cover the same ids do not.
class MismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Backend failure worth retrying (transport error, 429, 5xx) after the
// retry budget has been spent.
class TransientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Backend failure that retrying cannot fix (4xx other than 429).
class PermanentError : public std::runtime_error {
 public:
  PermanentError(int status, const std::string& message)
      : std::runtime_error(message), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace selfpref
