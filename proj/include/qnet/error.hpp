#pragma once

#include <stdexcept>
#include <string>

namespace qnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input-side failures (malformed documents, invariant violations, bad arguments).
class DomainError : public Error { public: using Error::Error; };
class ParseError : public Error { public: using Error::Error; };
class ValidationError : public Error { public: using Error::Error; };
class FeatureMismatchError : public Error { public: using Error::Error; };

// Engine-side failures.
class SolverError : public Error { public: using Error::Error; };
class SizeLimitError : public Error { public: using Error::Error; };
class HorizonError : public Error { public: using Error::Error; };
class StateLimitError : public Error { public: using Error::Error; };
class SingularSystemError : public Error { public: using Error::Error; };
class EmptyQueueError : public Error { public: using Error::Error; };

}  // namespace qnet
