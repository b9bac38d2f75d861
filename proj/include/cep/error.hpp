#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cep {

/// Process exit codes shared by the library and the command line tool.
enum class ExitCode : int {
    ok = 0,
    usage = 1,
    data = 2,
    verification = 3,
    resource = 4,
};

/** Base of every error thrown by the library; carries the exit code a CLI should use. */
class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    [[nodiscard]] ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Malformed input data: statistics, CSV streams, plan files.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ExitCode::data, what) {}
};

/// Caller broke a documented precondition.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error(ExitCode::usage, what) {}
};

/// A pattern shape the requested operation cannot handle.
class UnsupportedPatternError : public Error {
public:
    explicit UnsupportedPatternError(const std::string& what) : Error(ExitCode::data, what) {}
};

/// A configured size limit was exceeded.
class ResourceError : public Error {
public:
    ResourceError(const std::string& limit_name, std::size_t limit, std::size_t requested)
        : Error(ExitCode::resource,
                "resource limit '" + limit_name + "' is " + std::to_string(limit) + ", requested " +
                    std::to_string(requested)),
          limit_name_(limit_name),
          limit_(limit) {}
    [[nodiscard]] const std::string& limit_name() const noexcept { return limit_name_; }
    [[nodiscard]] std::size_t limit() const noexcept { return limit_; }

private:
    std::string limit_name_;
    std::size_t limit_;
};

}  // namespace cep
