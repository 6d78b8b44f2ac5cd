#pragma once

#include <stdexcept>
#include <string>

namespace geotext {

// Every failure the library reports derives from Error. The CLI maps the
// kind to its exit code (see tools/geotext.cpp).
enum class ErrorKind {
  Contract,     // caller broke a precondition
  Shape,        // tensor dimensions disagree
  Parse,        // malformed hOCR / config text
  Data,         // well-formed input with invalid content
  Format,       // binary container layout problem (truncation, bad dim)
  Integrity,    // checksum mismatch
  Version,      // unsupported container version
  Config,       // incompatible model / run configuration
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define GEOTEXT_DEFINE_ERROR(Name, Kind)                                        \
  class Name : public Error {                                                   \
   public:                                                                      \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {}    \
  };

GEOTEXT_DEFINE_ERROR(ContractError, Contract)
GEOTEXT_DEFINE_ERROR(ShapeError, Shape)
GEOTEXT_DEFINE_ERROR(ParseError, Parse)
GEOTEXT_DEFINE_ERROR(DataError, Data)
GEOTEXT_DEFINE_ERROR(FormatError, Format)
GEOTEXT_DEFINE_ERROR(IntegrityError, Integrity)
GEOTEXT_DEFINE_ERROR(VersionError, Version)
GEOTEXT_DEFINE_ERROR(ConfigError, Config)

#undef GEOTEXT_DEFINE_ERROR

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace geotext
