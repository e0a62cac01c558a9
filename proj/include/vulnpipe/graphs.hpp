#pragma once

// Statement-level control flow, post-dominance, control/data dependence and
// the merged code property graph.
//
// Node numbering: CFG nodes are AST statement ids. The synthetic Entry and
// Exit nodes take ids tree.size() and tree.size() + 1, so one id space covers
// the AST, the CFG and the CPG.

#include "vulnpipe/error.hpp"
#include "vulnpipe/frontend.hpp"

#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace vulnpipe::graphs {

using frontend::Ast;
using frontend::NodeId;
using frontend::NodeKind;

enum class Branch : std::uint8_t { Uncond, True, False };

[[nodiscard]] std::string_view to_string(Branch branch) noexcept;

struct CfgEdge {
    NodeId src = 0;
    NodeId dst = 0;
    Branch branch = Branch::Uncond;

    friend auto operator<=>(const CfgEdge&, const CfgEdge&) = default;
};

struct Cfg {
    /// Sorted ascending; includes entry and exit.
    std::vector<NodeId> nodes;
    /// Sorted by (src, dst, branch).
    std::vector<CfgEdge> edges;
    NodeId entry = 0;
    NodeId exit = 0;

    [[nodiscard]] std::vector<CfgEdge> out_edges(NodeId node) const;
    [[nodiscard]] std::vector<NodeId> successors(NodeId node) const;
    [[nodiscard]] bool contains(NodeId node) const;
    /// True when the node branches (has a true and a false edge).
    [[nodiscard]] bool is_condition(NodeId node) const;

    friend bool operator==(const Cfg&, const Cfg&) = default;
};

[[nodiscard]] inline NodeId entry_id(const Ast& tree) noexcept {
    return static_cast<NodeId>(tree.size());
}
[[nodiscard]] inline NodeId exit_id(const Ast& tree) noexcept {
    return static_cast<NodeId>(tree.size() + 1);
}

/// Lowers the function body to a statement-level CFG. if/while/for become
/// condition nodes with true/false edges; return flows to Exit. Statements
/// unreachable from Entry are dropped.
[[nodiscard]] Cfg build_cfg(const Ast& tree);

using PostDominators = std::map<NodeId, NodeId>;

/// Immediate post-dominator of every CFG node; ipdom(exit) == exit.
/// Throws AnalysisError when a node cannot reach Exit.
[[nodiscard]] PostDominators post_dominators(const Cfg& cfg);

struct ControlEdge {
    NodeId governor = 0;
    NodeId dependent = 0;
    Branch branch = Branch::Uncond;

    friend auto operator<=>(const ControlEdge&, const ControlEdge&) = default;
};

/// Control dependences via the post-dominator tree. Self-dependences of loop
/// conditions are omitted.
[[nodiscard]] std::vector<ControlEdge> control_dependence(const Cfg& cfg, const PostDominators& ipdom);

/// Variables a CFG node defines and reads. Strong definitions kill earlier
/// definitions of the same variable; may-definitions do not.
struct Effects {
    std::vector<std::string> defs;
    std::vector<std::string> may_defs;
    std::vector<std::string> uses;
};

[[nodiscard]] Effects effects(const Ast& tree, NodeId node);

struct Definition {
    NodeId site = 0;
    std::string var;

    friend auto operator<=>(const Definition&, const Definition&) = default;
};

struct ReachingDefs {
    std::map<NodeId, std::set<Definition>> in;
    std::map<NodeId, std::set<Definition>> out;
};

/// Least fixpoint of the gen/kill equations, iterated in reverse post-order.
[[nodiscard]] ReachingDefs reaching_definitions(const Cfg& cfg, const Ast& tree);

struct DataEdge {
    NodeId def = 0;
    NodeId use = 0;
    std::string var;

    friend auto operator<=>(const DataEdge&, const DataEdge&) = default;
};

[[nodiscard]] std::vector<DataEdge> data_dependence(const ReachingDefs& rd, const Ast& tree);

struct PdgEdges {
    std::vector<ControlEdge> control;
    std::vector<DataEdge> data;
};

enum class EdgeKind : std::uint8_t { Ast, Cfg, Cdg, Ddg };

[[nodiscard]] std::string_view to_string(EdgeKind kind) noexcept;
[[nodiscard]] std::optional<EdgeKind> edge_kind_from_string(std::string_view name) noexcept;

struct CpgNode {
    NodeId id = 0;
    NodeKind kind = NodeKind::Function;
    std::optional<std::string> attr;

    friend bool operator==(const CpgNode&, const CpgNode&) = default;
};

struct CpgEdge {
    NodeId src = 0;
    NodeId dst = 0;
    EdgeKind kind = EdgeKind::Ast;
    std::optional<std::string> tag;

    friend auto operator<=>(const CpgEdge&, const CpgEdge&) = default;
};

/// Directed multigraph. nodes[i].id == i; edges sorted by (src, dst, kind, tag)
/// with exact duplicates removed.
struct Cpg {
    std::vector<CpgNode> nodes;
    std::vector<CpgEdge> edges;

    [[nodiscard]] std::size_t size() const noexcept { return nodes.size(); }

    friend bool operator==(const Cpg&, const Cpg&) = default;
};

/// Sorts and deduplicates edges, then checks every endpoint names a node.
/// Throws ConsistencyError otherwise.
void normalize(Cpg& cpg);

/// Throws ConsistencyError if an edge references an unknown node.
[[nodiscard]] Cpg merge_cpg(const Ast& tree, const Cfg& cfg, const PdgEdges& pdg);

/// Full construction: CFG, post-dominators, dependences, merge.
[[nodiscard]] Cpg build_cpg(const Ast& tree);

[[nodiscard]] std::string cpg_to_dot(const Cpg& cpg);
[[nodiscard]] std::string cpg_to_json(const Cpg& cpg);
[[nodiscard]] Cpg cpg_from_json(std::string_view json);

}  // namespace vulnpipe::graphs
