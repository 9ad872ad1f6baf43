#pragma once

#include <stdexcept>
#include <string>

namespace tcm {

// Base of every error raised by the library. `kind()` is a stable
// machine-readable tag that ends up in CLI error manifests.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define TCM_DEFINE_ERROR(Name, tag)                                  \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(tag, what) {}     \
  };

TCM_DEFINE_ERROR(InvalidInput, "invalid_input")
TCM_DEFINE_ERROR(DimensionMismatch, "dimension_mismatch")
TCM_DEFINE_ERROR(VocabularyError, "vocabulary")
TCM_DEFINE_ERROR(NumericError, "numeric")
TCM_DEFINE_ERROR(InvalidConfig, "invalid_config")
TCM_DEFINE_ERROR(InvalidLabel, "invalid_label")
TCM_DEFINE_ERROR(LoadError, "load")
TCM_DEFINE_ERROR(NotFound, "not_found")
TCM_DEFINE_ERROR(ParseError, "parse")

#undef TCM_DEFINE_ERROR

}  // namespace tcm
