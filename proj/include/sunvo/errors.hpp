#ifndef SUNVO_ERRORS_HPP
#define SUNVO_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sunvo {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AngleNearPi : public Error {
 public:
  using Error::Error;
};

class PointBehindCamera : public Error {
 public:
  using Error::Error;
};

class DisparityTooSmall : public Error {
 public:
  using Error::Error;
};

class TimestampOutOfRange : public Error {
 public:
  using Error::Error;
};

class NonUnitInput : public Error {
 public:
  using Error::Error;
};

class DegenerateMean : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class EmptySequence : public Error {
 public:
  using Error::Error;
};

class ConfigInvalid : public Error {
 public:
  using Error::Error;
};

class DegenerateConfiguration : public Error {
 public:
  using Error::Error;
};

class InsufficientTracks : public Error {
 public:
  using Error::Error;
};

class NoConsensus : public Error {
 public:
  using Error::Error;
};

class SolverDiverged : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

class FrameNotInWindow : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sunvo

#endif  // SUNVO_ERRORS_HPP
