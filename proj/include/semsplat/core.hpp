#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace semsplat {

/// Malformed file contents (bad magic, missing property, truncation).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Well-formed input carrying invalid values (non-finite fields, count mismatch).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller violated an operation precondition.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Numerically unusable input (singular matrix, zero norm).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem failure (unreadable / unwritable path).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Lookup-table miss in strict text-encoding mode.
class LookupError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Aggregated failure from the worker pool; keeps per-worker status lines.
class PipelineError : public std::runtime_error {
public:
    PipelineError(const std::string& what, std::vector<std::string> status, bool data_cause)
        : std::runtime_error(what), worker_status(std::move(status)), caused_by_data(data_cause) {}

    std::vector<std::string> worker_status;
    bool caused_by_data = false;
};

// -------- little-endian binary stream helpers --------

namespace detail {

template <typename T>
void write_le(std::ostream& os, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    os.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    static_assert(std::is_trivially_copyable_v<T>);
    char buf[sizeof(T)];
    is.read(buf, sizeof(T));
    if (!is) throw FormatError("unexpected end of stream");
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

inline void write_f32_array(std::ostream& os, const float* data, size_t n) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
}

inline void read_f32_array(std::istream& is, float* data, size_t n) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) throw FormatError("unexpected end of stream");
}

} // namespace detail

/// FNV-1a 64-bit over a byte string. Seeds the synthetic embedding generator.
inline uint64_t fnv1a64(std::string_view bytes) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace semsplat
