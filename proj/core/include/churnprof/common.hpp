#ifndef CHURNPROF_COMMON_HPP
#define CHURNPROF_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace churnprof {

// Error taxonomy mirrored by the CLI exit codes: config/usage -> 1,
// bad input data -> 2, numerical failure -> 3.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Splits on a single delimiter; keeps empty fields. Views into `line`.
std::vector<std::string_view> split_view(std::string_view line, char delim);

// One row of a delimited file. Handles double-quoted fields with "" escapes,
// enough for the log exports this tool consumes.
std::vector<std::string> split_delimited(std::string_view line, char delim);

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);

// Shortest round-trip decimal form (std::to_chars). Used everywhere a double
// lands in a text artifact so reruns are byte-identical.
std::string format_double(double v);

double parse_double(std::string_view s, const std::string& context);
std::int64_t parse_int(std::string_view s, const std::string& context);

// FNV-1a 64-bit, used for manifest checksums and seed derivation labels.
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

}  // namespace churnprof

#endif
