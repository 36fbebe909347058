#pragma once

#include <stdexcept>
#include <string>

namespace hats {

// Every error raised by the library carries a short machine-readable code
// ("dimension", "vocabulary", ...) next to the human message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define HATS_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& message) : Error(tag, message) {} \
  };

HATS_DEFINE_ERROR(DimensionError, "dimension")
HATS_DEFINE_ERROR(ConfigError, "config")
HATS_DEFINE_ERROR(ValidationError, "validation")
HATS_DEFINE_ERROR(TrainingStateError, "training_state")
HATS_DEFINE_ERROR(DivergenceError, "divergence")
HATS_DEFINE_ERROR(VocabularyError, "vocabulary")
HATS_DEFINE_ERROR(SchemaError, "schema")
HATS_DEFINE_ERROR(ConflictError, "conflict")
HATS_DEFINE_ERROR(WiringError, "wiring")
HATS_DEFINE_ERROR(DecodeError, "decode")
HATS_DEFINE_ERROR(ContractError, "contract")
HATS_DEFINE_ERROR(ParseError, "parse")
HATS_DEFINE_ERROR(IoError, "io")

#undef HATS_DEFINE_ERROR

}  // namespace hats
