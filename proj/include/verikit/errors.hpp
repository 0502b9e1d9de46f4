#pragma once

#include <stdexcept>
#include <string>

namespace verikit {

/// Base class of every error raised by the toolkit. `kind()` names the
/// contract category (parse, domain, usage, ...), which the CLI prints.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + " error: " + what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define VERIKIT_DEFINE_ERROR(Name, label)                              \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(label, what) {}     \
  };

VERIKIT_DEFINE_ERROR(ParseError, "parse")
VERIKIT_DEFINE_ERROR(DimensionError, "dimension")
VERIKIT_DEFINE_ERROR(UniquenessError, "uniqueness")
VERIKIT_DEFINE_ERROR(DomainError, "domain")
VERIKIT_DEFINE_ERROR(UsageError, "usage")
VERIKIT_DEFINE_ERROR(CompletenessError, "completeness")
VERIKIT_DEFINE_ERROR(LookupError, "lookup")
VERIKIT_DEFINE_ERROR(AlignmentError, "alignment")
VERIKIT_DEFINE_ERROR(SingularityError, "singularity")
VERIKIT_DEFINE_ERROR(ScorerError, "scorer")
VERIKIT_DEFINE_ERROR(DegenerateInputError, "degenerate-input")
VERIKIT_DEFINE_ERROR(IoError, "io")

#undef VERIKIT_DEFINE_ERROR

}  // namespace verikit
