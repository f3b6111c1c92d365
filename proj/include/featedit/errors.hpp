#pragma once

#include <stdexcept>
#include <string>

namespace featedit {

/// Coarse error families; the CLI maps each to an exit code.
enum class ErrorKind { config, data, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define FEATEDIT_DEFINE_ERROR(Name, Kind)                        \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& what)                       \
        : Error(ErrorKind::Kind, std::string(#Name ": ") + what) {} \
  };

// file / record level
FEATEDIT_DEFINE_ERROR(FormatError, data)
FEATEDIT_DEFINE_ERROR(TruncationError, data)
FEATEDIT_DEFINE_ERROR(ValueError, data)
FEATEDIT_DEFINE_ERROR(IoError, data)
FEATEDIT_DEFINE_ERROR(ParseError, data)

// shape / contract violations
FEATEDIT_DEFINE_ERROR(EmptyInputError, data)
FEATEDIT_DEFINE_ERROR(IndexError, data)
FEATEDIT_DEFINE_ERROR(GeometryError, data)
FEATEDIT_DEFINE_ERROR(ShapeError, data)
FEATEDIT_DEFINE_ERROR(InsufficientDataError, data)
FEATEDIT_DEFINE_ERROR(MissingClassError, data)
FEATEDIT_DEFINE_ERROR(InputContractError, data)
FEATEDIT_DEFINE_ERROR(ClassIdError, data)
FEATEDIT_DEFINE_ERROR(DegenerateLabelsError, data)

// numerical
FEATEDIT_DEFINE_ERROR(DomainError, numerical)
FEATEDIT_DEFINE_ERROR(UndefinedDistributionError, numerical)
FEATEDIT_DEFINE_ERROR(DegenerateClassError, numerical)
FEATEDIT_DEFINE_ERROR(DegenerateDatasetError, numerical)

// configuration
FEATEDIT_DEFINE_ERROR(SpecError, config)
FEATEDIT_DEFINE_ERROR(ConfigError, config)
FEATEDIT_DEFINE_ERROR(OracleScaleError, config)

#undef FEATEDIT_DEFINE_ERROR

}  // namespace featedit
