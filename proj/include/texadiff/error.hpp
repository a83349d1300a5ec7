#pragma once

#include <stdexcept>
#include <string>

namespace texadiff {

// Exception taxonomy. Each kind maps to a stable CLI exit code.
enum class ErrorKind { io = 2, contract = 3, config = 4, numeric = 5 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

// Shape, dimension and precondition violations.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error(ErrorKind::contract, what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

inline void require(bool cond, const char* what) {
    if (!cond) throw ContractError(what);
}

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ContractError(what);
}

}  // namespace texadiff
