#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace langsteer {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad argument or violated precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

// File does not follow its declared layout (magic, header, truncation, version).
class FormatError : public Error {
public:
    using Error::Error;
};

// File parses but its contents contradict each other (e.g. shape vs config).
class IntegrityError : public Error {
public:
    using Error::Error;
};

// A fixed budget (sequence length, vocabulary) would be exceeded.
class CapacityError : public Error {
public:
    using Error::Error;
};

class VocabularyError : public Error {
public:
    using Error::Error;
};

// Input data rejected by schema validation; carries the 1-based line number.
class ValidationError : public Error {
public:
    ValidationError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class DivergenceError : public Error {
public:
    DivergenceError(int step, const std::string& what)
        : Error("training diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

}  // namespace langsteer
