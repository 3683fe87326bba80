#pragma once

#include <stdexcept>
#include <string>

namespace lsgc {

// Error categories map onto distinct CLI exit codes (see tools/lsgc.cpp).
enum class ErrorKind { kShape, kNumeric, kIndex, kContract, kSequenceLength, kVocabulary, kConfig, kData, kExtraction, kIo };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define LSGC_DEFINE_ERROR(Name, Kind)                                          \
  class Name : public Error {                                                  \
   public:                                                                     \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {}   \
  };

LSGC_DEFINE_ERROR(ShapeError, kShape)
LSGC_DEFINE_ERROR(NumericError, kNumeric)
LSGC_DEFINE_ERROR(IndexError, kIndex)
LSGC_DEFINE_ERROR(ContractError, kContract)
LSGC_DEFINE_ERROR(SequenceLengthError, kSequenceLength)
LSGC_DEFINE_ERROR(VocabularyError, kVocabulary)
LSGC_DEFINE_ERROR(ConfigError, kConfig)
LSGC_DEFINE_ERROR(DataError, kData)
LSGC_DEFINE_ERROR(ExtractionError, kExtraction)
LSGC_DEFINE_ERROR(IoError, kIo)

#undef LSGC_DEFINE_ERROR

}  // namespace lsgc
