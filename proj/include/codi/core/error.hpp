// Copyright 2026 The codi-iqa Authors. All rights reserved.
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

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace codi {

/// Base of every error thrown by the toolkit. `kind()` is a stable,
/// machine-readable tag that the CLI puts into its error object.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define CODI_DEFINE_ERROR(Name, tag)                             \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& message) : Error(tag, message) {} \
  };

CODI_DEFINE_ERROR(ConfigError, "configuration")
CODI_DEFINE_ERROR(InputError, "input")
CODI_DEFINE_ERROR(ShapeError, "shape")
CODI_DEFINE_ERROR(ProvenanceError, "provenance")
CODI_DEFINE_ERROR(CorruptCheckpointError, "corrupt-checkpoint")
CODI_DEFINE_ERROR(VersionError, "version-mismatch")
CODI_DEFINE_ERROR(ValidationError, "validation")
CODI_DEFINE_ERROR(DegenerateRangeError, "degenerate-range")
CODI_DEFINE_ERROR(UndefinedMetricError, "undefined-metric")
CODI_DEFINE_ERROR(DegenerateWeightsError, "degenerate-weights")
CODI_DEFINE_ERROR(SplitError, "split")
CODI_DEFINE_ERROR(TrainingDivergedError, "non-finite-loss")
CODI_DEFINE_ERROR(PreprocessMismatchError, "preprocessing-mismatch")
CODI_DEFINE_ERROR(IoError, "io")

#undef CODI_DEFINE_ERROR

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  return oss.str();
}

}  // namespace detail

template <typename E, typename... Args>
[[noreturn]] void raise(Args&&... args) {
  throw E(detail::concat(std::forward<Args>(args)...));
}

template <typename E, typename... Args>
void require(bool cond, Args&&... args) {
  if (!cond) raise<E>(std::forward<Args>(args)...);
}

}  // namespace codi
