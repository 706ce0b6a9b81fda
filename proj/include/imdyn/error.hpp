#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace imdyn {

/// Base class for every error the library raises. Callers that only need to
/// report failures can catch this; the subclasses carry the typed detail.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MissingAsset : public Error {
public:
    explicit MissingAsset(const std::string& path)
        : Error("missing asset: " + path), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// An invariant violation. `field()` names the offending field so that CLI
/// and HTTP layers can surface it directly.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& message)
        : Error("invalid " + field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class IoError : public Error {
public:
    using Error::Error;
};

class DegenerateMask : public Error {
public:
    using Error::Error;
};

class MultiComponentMask : public Error {
public:
    explicit MultiComponentMask(std::size_t components)
        : Error("mask has " + std::to_string(components) + " connected components"),
          components_(components) {}
    std::size_t components() const noexcept { return components_; }

private:
    std::size_t components_;
};

class NonFinite : public Error {
public:
    explicit NonFinite(std::size_t step)
        : Error("non-finite body state at step " + std::to_string(step)), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class SingularTransform : public Error {
public:
    using Error::Error;
};

}  // namespace imdyn
