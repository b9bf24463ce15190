// Copyright 2026 The UAST Authors.
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

namespace uast {

// Root of every error the library raises. The CLI maps `kind()` onto the
// structured message it prints before exiting non-zero.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

#define UAST_DEFINE_ERROR(Name, Kind)                           \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& what) : Error(what) {}     \
    const char* kind() const noexcept override { return Kind; } \
  };

UAST_DEFINE_ERROR(ShapeError, "shape")
UAST_DEFINE_ERROR(ParameterError, "parameter")
UAST_DEFINE_ERROR(NumericError, "numeric")
UAST_DEFINE_ERROR(ContractError, "contract")
UAST_DEFINE_ERROR(ConfigError, "configuration")
UAST_DEFINE_ERROR(ParseError, "parse")
UAST_DEFINE_ERROR(ConsistencyError, "consistency")
UAST_DEFINE_ERROR(UsageError, "usage")
UAST_DEFINE_ERROR(IoError, "io")

#undef UAST_DEFINE_ERROR

// Raised by m_step when a basis receives (numerically) no assignment mass.
class DegenerateBasisError : public Error {
 public:
  DegenerateBasisError(std::size_t basis_index, double mass)
      : Error("basis " + std::to_string(basis_index) +
              " has degenerate assignment mass " + std::to_string(mass)),
        basis_index_(basis_index) {}
  const char* kind() const noexcept override { return "degenerate-basis"; }
  std::size_t basis_index() const noexcept { return basis_index_; }

 private:
  std::size_t basis_index_;
};

}  // namespace uast
