#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kanfoil {

/// Base of every error raised by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// dataio

class MissingFile : public Error {
public:
    explicit MissingFile(const std::string& path) : Error("MissingFile: " + path), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class MissingColumn : public Error {
public:
    explicit MissingColumn(const std::string& name) : Error("MissingColumn(\"" + name + "\")"), name_(name) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

class ParseError : public Error {
public:
    ParseError(std::size_t row, const std::string& column, const std::string& detail = {})
        : Error("ParseError(row " + std::to_string(row) + ", column \"" + column + "\")" +
                (detail.empty() ? std::string{} : ": " + detail)),
          row_(row), column_(column) {}
    std::size_t row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

class EmptyFile : public Error {
public:
    explicit EmptyFile(const std::string& path) : Error("EmptyFile: " + path) {}
};

// models

class InvalidWidth : public Error {
public:
    using Error::Error;
};

class InvalidConfig : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    DimensionMismatch(std::size_t expected, std::size_t got)
        : Error("DimensionMismatch: expected " + std::to_string(expected) + ", got " + std::to_string(got)) {}
};

class DivergenceDetected : public Error {
public:
    explicit DivergenceDetected(std::size_t step)
        : Error("DivergenceDetected at step " + std::to_string(step)), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class RankDeficient : public Error {
public:
    using Error::Error;
};

class ZeroVariance : public Error {
public:
    ZeroVariance() : Error("ZeroVariance: target has zero variance") {}
};

// prune

class EmptyModel : public Error {
public:
    EmptyModel() : Error("EmptyModel: pruning removed every input-to-output path") {}
};

// symbolic

class DegenerateInput : public Error {
public:
    using Error::Error;
};

class NoValidFit : public Error {
public:
    using Error::Error;
};

class UnboundVariable : public Error {
public:
    explicit UnboundVariable(const std::string& name) : Error("UnboundVariable: " + name), name_(name) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

class EvalDomainError : public Error {
public:
    explicit EvalDomainError(const std::string& subtree)
        : Error("EvalDomainError in " + subtree), subtree_(subtree) {}
    const std::string& subtree() const noexcept { return subtree_; }

private:
    std::string subtree_;
};

class FormatError : public Error {
public:
    using Error::Error;
};

} // namespace kanfoil
