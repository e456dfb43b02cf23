// Copyright 2026 The AnoShift Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ANOSHIFT_ERROR_HPP_
#define ANOSHIFT_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace anoshift {

enum class ErrorCode {
  kUnknownLabelCode,
  kMalformedRow,
  kIo,
  kInvalidSchema,
  kInvalidConfig,
  kNegativeInput,
  kEmptyInput,
  kNoRecordsForYear,
  kInsufficientAnomalySupply,
  kSupportMismatch,
  kEmptyClassSubset,
  kNotFitted,
  kKTooLarge,
  kEmptyMask,
  kConfigMismatch,
  kSingleClass,
  kVocabularyMismatch,
  kFormat,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownLabelCode: return "UnknownLabelCode";
    case ErrorCode::kMalformedRow: return "MalformedRow";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kInvalidSchema: return "InvalidSchema";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kNegativeInput: return "NegativeInput";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kNoRecordsForYear: return "NoRecordsForYear";
    case ErrorCode::kInsufficientAnomalySupply: return "InsufficientAnomalySupply";
    case ErrorCode::kSupportMismatch: return "SupportMismatch";
    case ErrorCode::kEmptyClassSubset: return "EmptyClassSubset";
    case ErrorCode::kNotFitted: return "NotFitted";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kEmptyMask: return "EmptyMask";
    case ErrorCode::kConfigMismatch: return "ConfigMismatch";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kVocabularyMismatch: return "VocabularyMismatch";
    case ErrorCode::kFormat: return "FormatError";
  }
  return "Unknown";
}

// All toolkit failures surface as this exception; `code()` identifies the
// failure class so callers (and the CLI) can react without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace anoshift

#endif  // ANOSHIFT_ERROR_HPP_
