#ifndef HLSD_ERROR_HPP
#define HLSD_ERROR_HPP

#include <stdexcept>
#include <string>

namespace hlsd {

enum class ErrorKind {
    invalid_argument,
    incomplete_field,
    spd_violation,
    singular,
    parse,
    io,
};

inline const char* to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::incomplete_field: return "incomplete-field";
    case ErrorKind::spd_violation: return "spd-violation";
    case ErrorKind::singular: return "singular";
    case ErrorKind::parse: return "parse";
    case ErrorKind::io: return "io";
    }
    return "unknown";
}

/// Library error. `stage` is filled in by the pipeline when an error crosses a stage boundary.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what, std::string stage = {})
        : std::runtime_error(what), kind_(kind), stage_(std::move(stage))
    {
    }

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& stage() const noexcept { return stage_; }

    Error with_stage(std::string stage) const { return Error(kind_, what(), std::move(stage)); }

private:
    ErrorKind kind_;
    std::string stage_;
};

inline void require(bool condition, ErrorKind kind, const std::string& message)
{
    if (!condition)
        throw Error(kind, message);
}

} // namespace hlsd

#endif
