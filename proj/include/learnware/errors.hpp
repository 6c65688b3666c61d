#pragma once

#include <stdexcept>
#include <string>

namespace learnware {

// Caller passed something malformed: wrong dimensions, bad options, missing tags.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NotFoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Payload could not be decoded (truncated, wrong version, unknown tag).
class CodecError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A model misbehaved while being sketched or probed.
class SubmissionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A deployed model (typically an external adapter) failed to answer.
class DeploymentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// On-disk market state is corrupt or inconsistent.
class StateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace learnware
