#pragma once

#include <stdexcept>
#include <string>

namespace loupe {

// Base for every error raised by the library.
struct Error : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error
{
  using Error::Error;
};

// Non-finite values, infeasible parameters, solver divergence.
struct NumericError : Error
{
  using Error::Error;
};

struct ConfigError : Error
{
  using Error::Error;
};

struct IoError : Error
{
  using Error::Error;
};

enum class FormatErrorKind
{
  BadMagic,
  Truncated,
  DimensionOverflow,
  Invalid,
};

struct FormatError : Error
{
  FormatError(FormatErrorKind k, std::string const &msg)
    : Error(msg)
    , kind(k)
  {
  }
  FormatErrorKind kind;
};

} // namespace loupe
