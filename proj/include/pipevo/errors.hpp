#pragma once

#include <stdexcept>
#include <string>

namespace pipevo {

/// Bad or inconsistent configuration (empty model pool, unknown model, unknown key).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A structured record could not be read. `field()` names the offending field when known.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string field, const std::string& message)
        : std::runtime_error(field.empty() ? message : field + ": " + message),
          field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A genome violates one of its structural or range invariants.
class GenomeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Prompt template problems: missing slot at render time, bad placeholder at load time.
class TemplateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The host cannot run what we need (interpreter missing, scratch dir unwritable).
class EnvironmentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace pipevo
