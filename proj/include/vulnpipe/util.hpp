#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vulnpipe {

/// Seeded generator whose outputs are identical on every platform:
/// std::mt19937_64 is fully specified, the distributions below are ours.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi], rejection-sampled.
    std::int64_t between(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        if (span == 0) {
            return static_cast<std::int64_t>(engine_());
        }
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t x = engine_();
        while (x >= limit) {
            x = engine_();
        }
        return lo + static_cast<std::int64_t>(x % span);
    }

    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(between(0, static_cast<std::int64_t>(i - 1)));
            std::swap(values[i - 1], values[j]);
        }
    }

    template <typename T>
    const T& pick(const std::vector<T>& values) {
        return values[static_cast<std::size_t>(between(0, static_cast<std::int64_t>(values.size()) - 1))];
    }

private:
    std::mt19937_64 engine_;
};

[[nodiscard]] std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws std::invalid_argument on malformed input.
[[nodiscard]] std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Lower-case hex SHA-256.
[[nodiscard]] std::string sha256_hex(std::string_view data);

[[nodiscard]] std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace vulnpipe
