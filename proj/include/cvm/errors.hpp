#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cvm {

class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A likelihood term evaluated to a negative or non-finite probability.
class NumericDomainError : public std::domain_error {
public:
    NumericDomainError(const std::string& what, std::size_t observation)
        : std::domain_error(what), observation_(observation) {}

    std::size_t observation() const noexcept { return observation_; }

private:
    std::size_t observation_;
};

class DegenerateDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SingularMatrixError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. Row and column are 1-based; 0 means "not applicable".
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t row = 0, std::size_t column = 0)
        : std::runtime_error(format(what, row, column)), row_(row), column_(column) {}

    std::size_t row() const noexcept { return row_; }
    std::size_t column() const noexcept { return column_; }

private:
    static std::string format(const std::string& what, std::size_t row, std::size_t column) {
        if (row == 0) return what;
        std::string where = "row " + std::to_string(row);
        if (column != 0) where += ", column " + std::to_string(column);
        return where + ": " + what;
    }

    std::size_t row_;
    std::size_t column_;
};

}  // namespace cvm
