#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace petbench {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A value violates a domain precondition (non-positive dose, fraction out of (0,1], ...).
struct ValueError : Error {
    using Error::Error;
};

/// A configuration is internally inconsistent or incompatible with the requested operation.
struct ConfigError : Error {
    using Error::Error;
};

/// A required metadata tag is missing or unparsable; `tag` names the offender.
struct MetadataError : Error {
    explicit MetadataError(const std::string& tag_name, const std::string& detail = "")
        : Error("missing or invalid metadata tag: " + tag_name +
                (detail.empty() ? "" : " (" + detail + ")")),
          tag(tag_name) {}
    std::string tag;
};

/// On-disk state is corrupt or inconsistent with its manifest.
struct IoError : Error {
    using Error::Error;
};

/// Array shapes or grid geometries do not match.
struct ShapeError : Error {
    using Error::Error;
};

/// A computation produced a non-finite value.
struct NumericError : Error {
    using Error::Error;
};

// splitmix64; used to derive independent per-item RNG streams from (seed, key)
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s) {
    return fnv1a(std::span<const unsigned char>(
        reinterpret_cast<const unsigned char*>(s.data()), s.size()));
}

/// Stream seed for item `key` under run seed `seed`; stable across schedules.
inline std::uint64_t derive_seed(std::uint64_t seed, const std::string& key) {
    return mix64(seed ^ fnv1a(key));
}

/// Pairwise (cascade) summation; order-independent aggregation for reproducible reports.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 8) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline double mean_of(std::span<const double> xs) {
    if (xs.empty()) throw ValueError("mean of empty range");
    return pairwise_sum(xs) / static_cast<double>(xs.size());
}

}  // namespace petbench
