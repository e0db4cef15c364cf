#pragma once

#include <stdexcept>
#include <string>

namespace aprm {

// Error classes map onto the CLI exit codes (config=2, data=3, annotator=4, divergence=5).
enum class ErrorKind { config = 2, data = 3, annotator = 4, divergence = 5 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class AnnotatorError : public Error {
public:
    explicit AnnotatorError(const std::string& what) : Error(ErrorKind::annotator, what) {}
};

class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& what) : Error(ErrorKind::divergence, what) {}
};

} // namespace aprm
