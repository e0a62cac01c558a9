#pragma once

// PATCHY-SAN style encoding: rank the nodes of a CPG canonically, pick a
// fixed-length node sequence, grow a k-node receptive field around each
// selected node and stack the fields' feature vectors into a w x k x d tensor.

#include "vulnpipe/graphs.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vulnpipe::patchy {

using graphs::Cpg;
using graphs::NodeId;

inline constexpr std::size_t kAttrBuckets = 8;
inline constexpr std::size_t kFeatureDim = frontend::kNodeKindCount + kAttrBuckets;

struct EncoderConfig {
    std::size_t w = 32;  ///< fields per tensor
    std::size_t k = 8;   ///< nodes per field
    std::size_t s = 1;   ///< stride over the ranked node sequence
    int h_rank = 2;      ///< WL iterations used by the ranking
    std::size_t d = kFeatureDim;

    /// Throws ConfigError on zero dimensions or a feature size other than kFeatureDim.
    void validate() const;

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// A node or an empty (dummy) position.
using Slot = std::optional<NodeId>;

/// Strict total order by (WL color at h_rank, descending degree, node kind, id).
/// Colors are compressed per graph from sorted signatures, so they do not
/// depend on node numbering.
[[nodiscard]] std::vector<NodeId> canonical_ranking(const Cpg& cpg, int h_rank);

/// Ranked nodes at positions 0, s, 2s, ... padded with dummies to w slots.
[[nodiscard]] std::vector<Slot> select_sequence(std::span<const NodeId> order, std::size_t w, std::size_t s);

/// Breadth-first neighborhood of `center` over the undirected union graph,
/// grown level by level until it holds at least k nodes, then sorted by
/// (depth, rank) and cut or padded to k.
[[nodiscard]] std::vector<Slot> assemble_field(const Cpg& cpg, NodeId center, std::size_t k,
                                               std::span<const NodeId> order);

/// FNV-1a of the attribute text, reduced to one of kAttrBuckets.
[[nodiscard]] std::size_t attr_bucket(std::string_view attr) noexcept;

/// One-hot node kind followed by the attribute bucket; zeros for a dummy.
[[nodiscard]] std::vector<double> encode_features(const Cpg& cpg, Slot slot);

struct FieldTensor {
    std::size_t w = 0;
    std::size_t k = 0;
    std::size_t d = 0;
    /// Row-major [field][slot][feature].
    std::vector<double> values;
    /// true marks a dummy field.
    std::vector<bool> mask;

    [[nodiscard]] double at(std::size_t field, std::size_t slot, std::size_t feature) const {
        return values[(field * k + slot) * d + feature];
    }
    [[nodiscard]] std::span<const double> field(std::size_t f) const {
        return std::span<const double>(values).subspan(f * k * d, k * d);
    }

    friend bool operator==(const FieldTensor&, const FieldTensor&) = default;
};

[[nodiscard]] FieldTensor build_tensor(const Cpg& cpg, const EncoderConfig& config);

/// "PSAN" magic, then w, k, d as little-endian u32, then the values as
/// little-endian f32.
[[nodiscard]] std::string dump_tensor(const FieldTensor& tensor);
/// Reads a dump back; the mask is recovered from all-zero fields.
[[nodiscard]] FieldTensor load_tensor_dump(std::string_view bytes);

}  // namespace vulnpipe::patchy
