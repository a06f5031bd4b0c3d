#pragma once

#include <stdexcept>
#include <string>

namespace zsad {

enum class ErrorKind {
    input,      // malformed operand (shape mismatch, non-finite values, empty string)
    parameter,  // out-of-range knob (tau <= 0, sigma <= 0, bad fpr limit)
    format,     // unparseable or mismatched file contents (checkpoints, prompts)
    data,       // dataset-level problem (missing mask, undecodable image)
    asset,      // required external resource absent (weights, checkpoint file)
    numeric     // non-finite state reached at runtime
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

    // Process exit code contract: validation 2, missing asset 3, numeric failure 4.
    int exit_code() const {
        switch (kind_) {
            case ErrorKind::asset: return 3;
            case ErrorKind::numeric: return 4;
            default: return 2;
        }
    }

private:
    ErrorKind kind_;
};

struct InputError : Error {
    explicit InputError(const std::string& m) : Error(ErrorKind::input, m) {}
};
struct ParamError : Error {
    explicit ParamError(const std::string& m) : Error(ErrorKind::parameter, m) {}
};
struct FormatError : Error {
    explicit FormatError(const std::string& m) : Error(ErrorKind::format, m) {}
};
struct DataError : Error {
    explicit DataError(const std::string& m) : Error(ErrorKind::data, m) {}
};
struct AssetError : Error {
    explicit AssetError(const std::string& m) : Error(ErrorKind::asset, m) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& m) : Error(ErrorKind::numeric, m) {}
};

} // namespace zsad
