/*
 Copyright 2026 The qfreg Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

 http://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#ifndef QFREG_ERROR_HPP
#define QFREG_ERROR_HPP

#include <stdexcept>
#include <string>

namespace qfreg {

enum class ErrorKind {
  InvalidGrid,
  EmptyInput,
  InvalidData,
  Shape,
  InvalidWeight,
  RankDeficient,
  InvalidSmoother,
  InsufficientReplicates,
  UndefinedRSquared,
  MissingBlups,
  Schema,
  Config,
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries one of the kinds above so
/// callers (the CLI, the bootstrap redraw loop) can react per category.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidGrid: return "invalid grid";
    case ErrorKind::EmptyInput: return "empty input";
    case ErrorKind::InvalidData: return "invalid data";
    case ErrorKind::Shape: return "shape mismatch";
    case ErrorKind::InvalidWeight: return "invalid weight";
    case ErrorKind::RankDeficient: return "rank deficiency";
    case ErrorKind::InvalidSmoother: return "invalid smoother";
    case ErrorKind::InsufficientReplicates: return "insufficient replicates";
    case ErrorKind::UndefinedRSquared: return "undefined R-squared";
    case ErrorKind::MissingBlups: return "missing BLUPs";
    case ErrorKind::Schema: return "schema error";
    case ErrorKind::Config: return "invalid configuration";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

}  // namespace qfreg

#endif  // QFREG_ERROR_HPP
