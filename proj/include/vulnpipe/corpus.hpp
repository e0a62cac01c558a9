#pragma once

// Labeled function corpus. A pre-patch function is insecure, its patched
// twin is secure, and both share a pair_id.

#include "vulnpipe/error.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vulnpipe::corpus {

enum class Label : std::uint8_t { Secure, Insecure };
enum class VulnType : std::uint8_t { BufferOverflow, NullDeref, MemoryLeak };
enum class Origin : std::uint8_t { Synthetic, Imported };

[[nodiscard]] std::string_view to_string(Label label) noexcept;
[[nodiscard]] std::string_view to_string(VulnType type) noexcept;
[[nodiscard]] std::string_view to_string(Origin origin) noexcept;
[[nodiscard]] std::optional<VulnType> vuln_type_from_string(std::string_view name) noexcept;

struct Sample {
    std::string id;
    std::string code;
    Label label = Label::Secure;
    std::optional<VulnType> vuln_type;
    Origin origin = Origin::Synthetic;
    std::optional<std::string> pair_id;

    friend bool operator==(const Sample&, const Sample&) = default;
};

/// One NDJSON line (no trailing newline).
[[nodiscard]] std::string to_json_line(const Sample& sample);

/// Parses and validates newline-delimited samples: schema, label/type
/// consistency, unique ids, and that every function parses. Blank lines are
/// skipped. Throws CorpusError naming the 1-based line.
[[nodiscard]] std::vector<Sample> parse_corpus(std::string_view text);

/// Throws IoError when the file cannot be read, CorpusError otherwise.
[[nodiscard]] std::vector<Sample> load_corpus(const std::string& path);

[[nodiscard]] std::string to_ndjson(std::span<const Sample> samples);

/// n_pairs insecure/secure pairs drawn from three template families with
/// randomized names, sizes and filler statements. Deterministic in seed.
[[nodiscard]] std::vector<Sample> generate_synthetic(std::size_t n_pairs, std::uint64_t seed);

struct Ratios {
    double train = 0.70;
    double validation = 0.15;
    double test = 0.15;

    friend bool operator==(const Ratios&, const Ratios&) = default;
};

struct CorpusSplit {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
    std::uint64_t seed = 0;
    Ratios ratios;

    friend bool operator==(const CorpusSplit&, const CorpusSplit&) = default;
};

/// Shuffles pair groups per vulnerability type, interleaves the strata and
/// cuts the sequence at group counts given by largest-remainder rounding.
/// Throws SplitError when ratios do not sum to 1 or a split would be empty.
[[nodiscard]] CorpusSplit split(std::span<const Sample> samples, std::uint64_t seed, Ratios ratios = {});

[[nodiscard]] std::string manifest_to_json(const CorpusSplit& split);
[[nodiscard]] CorpusSplit manifest_from_json(std::string_view json);

}  // namespace vulnpipe::corpus
