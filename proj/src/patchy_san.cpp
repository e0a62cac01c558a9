#include "vulnpipe/patchy_san.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <deque>
#include <map>
#include <set>

namespace vulnpipe::patchy {

namespace {

std::vector<std::vector<NodeId>> undirected_neighbors(const Cpg& cpg) {
    std::vector<std::set<NodeId>> sets(cpg.size());
    for (const graphs::CpgEdge& e : cpg.edges) {
        if (e.src == e.dst) {
            continue;
        }
        sets[e.src].insert(e.dst);
        sets[e.dst].insert(e.src);
    }
    std::vector<std::vector<NodeId>> out(cpg.size());
    for (std::size_t v = 0; v < sets.size(); ++v) {
        out[v].assign(sets[v].begin(), sets[v].end());
    }
    return out;
}

std::vector<std::size_t> rank_positions(const Cpg& cpg, std::span<const NodeId> order) {
    std::vector<std::size_t> rank(cpg.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        rank[order[i]] = i;
    }
    return rank;
}

std::vector<Slot> grow_field(const std::vector<std::vector<NodeId>>& neighbors, const std::vector<std::size_t>& rank,
                             NodeId center, std::size_t k) {
    std::map<NodeId, std::size_t> depth{{center, 0}};
    std::vector<NodeId> frontier{center};
    std::size_t level = 0;
    while (depth.size() < k && !frontier.empty()) {
        ++level;
        std::vector<NodeId> next;
        for (NodeId v : frontier) {
            for (NodeId u : neighbors[v]) {
                if (depth.try_emplace(u, level).second) {
                    next.push_back(u);
                }
            }
        }
        frontier = std::move(next);
    }

    std::vector<NodeId> collected;
    collected.reserve(depth.size());
    for (const auto& [node, _] : depth) {
        collected.push_back(node);
    }
    std::ranges::sort(collected, [&](NodeId a, NodeId b) {
        if (depth[a] != depth[b]) {
            return depth[a] < depth[b];
        }
        return rank[a] < rank[b];
    });

    std::vector<Slot> field(k);
    for (std::size_t i = 0; i < k && i < collected.size(); ++i) {
        field[i] = collected[i];
    }
    return field;
}

void put_u32(std::string& out, std::uint32_t value) {
    for (int b = 0; b < 4; ++b) {
        out.push_back(static_cast<char>((value >> (8 * b)) & 0xFFu));
    }
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
    std::uint32_t value = 0;
    for (int b = 0; b < 4; ++b) {
        value |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + b])) << (8 * b);
    }
    return value;
}

}  // namespace

void EncoderConfig::validate() const {
    if (w == 0 || k == 0 || s == 0 || d == 0) {
        throw ConfigError("encoder dimensions w, k, s, d must be positive");
    }
    if (h_rank < 0) {
        throw ConfigError("h_rank must be non-negative");
    }
    if (d != kFeatureDim) {
        throw ConfigError("feature dimension d must be " + std::to_string(kFeatureDim));
    }
}

std::vector<NodeId> canonical_ranking(const Cpg& cpg, int h_rank) {
    const std::size_t n = cpg.size();
    std::vector<std::vector<std::pair<int, NodeId>>> adjacency(n);
    std::vector<std::size_t> degree(n, 0);
    for (const graphs::CpgEdge& e : cpg.edges) {
        const int kind = static_cast<int>(e.kind);
        adjacency[e.src].emplace_back(kind, e.dst);
        if (e.src != e.dst) {
            adjacency[e.dst].emplace_back(kind, e.src);
        }
        ++degree[e.src];
        ++degree[e.dst];
    }

    std::vector<std::size_t> color(n);
    for (std::size_t v = 0; v < n; ++v) {
        color[v] = static_cast<std::size_t>(cpg.nodes[v].kind);
    }
    for (int it = 0; it < h_rank; ++it) {
        std::vector<std::vector<std::size_t>> signatures(n);
        for (std::size_t v = 0; v < n; ++v) {
            std::vector<std::pair<std::size_t, std::size_t>> around;
            for (const auto& [kind, u] : adjacency[v]) {
                around.emplace_back(static_cast<std::size_t>(kind), color[u]);
            }
            std::ranges::sort(around);
            auto& sig = signatures[v];
            sig.push_back(color[v]);
            for (const auto& [kind, c] : around) {
                sig.push_back(kind);
                sig.push_back(c);
            }
        }
        std::vector<std::vector<std::size_t>> distinct = signatures;
        std::ranges::sort(distinct);
        const auto [first, last] = std::ranges::unique(distinct);
        distinct.erase(first, last);
        for (std::size_t v = 0; v < n; ++v) {
            color[v] = static_cast<std::size_t>(std::ranges::lower_bound(distinct, signatures[v]) - distinct.begin());
        }
    }

    std::vector<NodeId> order(n);
    for (std::size_t v = 0; v < n; ++v) {
        order[v] = static_cast<NodeId>(v);
    }
    std::ranges::sort(order, [&](NodeId a, NodeId b) {
        if (color[a] != color[b]) {
            return color[a] < color[b];
        }
        if (degree[a] != degree[b]) {
            return degree[a] > degree[b];
        }
        if (cpg.nodes[a].kind != cpg.nodes[b].kind) {
            return cpg.nodes[a].kind < cpg.nodes[b].kind;
        }
        return a < b;
    });
    return order;
}

std::vector<Slot> select_sequence(std::span<const NodeId> order, std::size_t w, std::size_t s) {
    std::vector<Slot> slots(w);
    for (std::size_t i = 0; i < w; ++i) {
        const std::size_t index = i * s;
        if (index < order.size()) {
            slots[i] = order[index];
        }
    }
    return slots;
}

std::vector<Slot> assemble_field(const Cpg& cpg, NodeId center, std::size_t k, std::span<const NodeId> order) {
    return grow_field(undirected_neighbors(cpg), rank_positions(cpg, order), center, k);
}

std::size_t attr_bucket(std::string_view attr) noexcept {
    std::uint32_t hash = 2166136261u;
    for (char c : attr) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 16777619u;
    }
    return hash % kAttrBuckets;
}

std::vector<double> encode_features(const Cpg& cpg, Slot slot) {
    std::vector<double> features(kFeatureDim, 0.0);
    if (!slot) {
        return features;
    }
    const graphs::CpgNode& node = cpg.nodes.at(*slot);
    features[static_cast<std::size_t>(node.kind)] = 1.0;
    if (node.attr) {
        features[frontend::kNodeKindCount + attr_bucket(*node.attr)] = 1.0;
    }
    return features;
}

FieldTensor build_tensor(const Cpg& cpg, const EncoderConfig& config) {
    config.validate();
    FieldTensor tensor;
    tensor.w = config.w;
    tensor.k = config.k;
    tensor.d = config.d;
    tensor.values.assign(config.w * config.k * config.d, 0.0);
    tensor.mask.assign(config.w, true);
    if (cpg.nodes.empty()) {
        return tensor;
    }

    const std::vector<NodeId> order = canonical_ranking(cpg, config.h_rank);
    const std::vector<Slot> sequence = select_sequence(order, config.w, config.s);
    const auto neighbors = undirected_neighbors(cpg);
    const auto rank = rank_positions(cpg, order);
    for (std::size_t f = 0; f < config.w; ++f) {
        if (!sequence[f]) {
            continue;
        }
        tensor.mask[f] = false;
        const std::vector<Slot> field = grow_field(neighbors, rank, *sequence[f], config.k);
        for (std::size_t slot = 0; slot < config.k; ++slot) {
            const std::vector<double> features = encode_features(cpg, field[slot]);
            std::ranges::copy(features, tensor.values.begin() +
                                            static_cast<std::ptrdiff_t>((f * config.k + slot) * config.d));
        }
    }
    return tensor;
}

std::string dump_tensor(const FieldTensor& tensor) {
    std::string out = "PSAN";
    put_u32(out, static_cast<std::uint32_t>(tensor.w));
    put_u32(out, static_cast<std::uint32_t>(tensor.k));
    put_u32(out, static_cast<std::uint32_t>(tensor.d));
    out.reserve(out.size() + tensor.values.size() * 4);
    for (double v : tensor.values) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

FieldTensor load_tensor_dump(std::string_view bytes) {
    if (bytes.size() < 16 || bytes.substr(0, 4) != "PSAN") {
        throw ShapeMismatch("not a PSAN tensor dump");
    }
    FieldTensor tensor;
    tensor.w = get_u32(bytes, 4);
    tensor.k = get_u32(bytes, 8);
    tensor.d = get_u32(bytes, 12);
    const std::size_t count = tensor.w * tensor.k * tensor.d;
    if (bytes.size() != 16 + 4 * count) {
        throw ShapeMismatch("tensor dump size does not match its header");
    }
    tensor.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        tensor.values[i] = std::bit_cast<float>(get_u32(bytes, 16 + 4 * i));
    }
    tensor.mask.assign(tensor.w, true);
    for (std::size_t f = 0; f < tensor.w; ++f) {
        const auto values = tensor.field(f);
        tensor.mask[f] = std::ranges::all_of(values, [](double v) { return v == 0.0; });
    }
    return tensor;
}

}  // namespace vulnpipe::patchy
