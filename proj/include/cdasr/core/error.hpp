#pragma once

#include <stdexcept>
#include <string>

namespace cdasr {

// Caller supplied something outside an operation's contract. Maps to exit
// code 2 in the CLI.
class invalid_input : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class empty_dataset_error : public invalid_input {
public:
    using invalid_input::invalid_input;
};

// File system or decoding failure. Maps to exit code 1.
class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A loss or gradient became NaN/Inf.
class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace cdasr
