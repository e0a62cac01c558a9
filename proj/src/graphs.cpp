#include "vulnpipe/graphs.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <deque>
#include <functional>
#include <sstream>
#include <unordered_map>

namespace vulnpipe::graphs {

namespace {

using frontend::AstNode;

class CfgBuilder {
public:
    explicit CfgBuilder(const Ast& tree) : tree_(tree) {}

    Cfg build() {
        const NodeId entry = entry_id(tree_);
        const NodeId exit = exit_id(tree_);
        const AstNode& body = tree_.at(tree_.root().children.back());
        const NodeId first = lower(body.id, exit);
        edges_.push_back({entry, first, Branch::Uncond});
        return prune(entry, exit);
    }

private:
    // Emits edges for `stmt` whose fallthrough continues at `next`; returns
    // the node control enters the statement at.
    NodeId lower(NodeId stmt, NodeId next) {
        const AstNode& node = tree_.at(stmt);
        switch (node.kind) {
        case NodeKind::Block: {
            NodeId target = next;
            for (auto it = node.children.rbegin(); it != node.children.rend(); ++it) {
                target = lower(*it, target);
            }
            return target;
        }
        case NodeKind::If: {
            const NodeId then_entry = lower(node.children[1], next);
            const NodeId else_entry = node.children.size() > 2 ? lower(node.children[2], next) : next;
            edges_.push_back({stmt, then_entry, Branch::True});
            edges_.push_back({stmt, else_entry, Branch::False});
            return stmt;
        }
        case NodeKind::While: {
            const NodeId body_entry = lower(node.children[1], stmt);
            edges_.push_back({stmt, body_entry, Branch::True});
            edges_.push_back({stmt, next, Branch::False});
            return stmt;
        }
        case NodeKind::For: {
            const NodeId init = node.children[0];
            const NodeId step = node.children[2];
            edges_.push_back({init, stmt, Branch::Uncond});
            edges_.push_back({step, stmt, Branch::Uncond});
            const NodeId body_entry = lower(node.children[3], step);
            edges_.push_back({stmt, body_entry, Branch::True});
            edges_.push_back({stmt, next, Branch::False});
            return init;
        }
        case NodeKind::Return:
            edges_.push_back({stmt, exit_id(tree_), Branch::Uncond});
            return stmt;
        default:
            edges_.push_back({stmt, next, Branch::Uncond});
            return stmt;
        }
    }

    Cfg prune(NodeId entry, NodeId exit) {
        std::ranges::sort(edges_);
        std::unordered_map<NodeId, std::vector<NodeId>> succ;
        for (const CfgEdge& e : edges_) {
            succ[e.src].push_back(e.dst);
        }
        std::set<NodeId> reached{entry};
        std::deque<NodeId> queue{entry};
        while (!queue.empty()) {
            const NodeId n = queue.front();
            queue.pop_front();
            for (NodeId s : succ[n]) {
                if (reached.insert(s).second) {
                    queue.push_back(s);
                }
            }
        }
        Cfg cfg;
        cfg.entry = entry;
        cfg.exit = exit;
        cfg.nodes.assign(reached.begin(), reached.end());
        for (const CfgEdge& e : edges_) {
            if (reached.contains(e.src)) {
                cfg.edges.push_back(e);
            }
        }
        return cfg;
    }

    const Ast& tree_;
    std::vector<CfgEdge> edges_;
};

// Dense indexing of CFG nodes for the set-based analyses.
struct Indexed {
    std::vector<NodeId> ids;
    std::unordered_map<NodeId, std::size_t> index;
    std::vector<std::vector<std::size_t>> succ;
    std::vector<std::vector<std::size_t>> pred;

    explicit Indexed(const Cfg& cfg) : ids(cfg.nodes), succ(ids.size()), pred(ids.size()) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            index.emplace(ids[i], i);
        }
        for (const CfgEdge& e : cfg.edges) {
            const auto s = index.find(e.src);
            const auto d = index.find(e.dst);
            if (s == index.end() || d == index.end()) {
                throw AnalysisError("CFG edge references a node outside the CFG");
            }
            succ[s->second].push_back(d->second);
            pred[d->second].push_back(s->second);
        }
    }
};

void collect_identifiers(const Ast& tree, NodeId id, bool in_call, std::set<std::string>& uses,
                         std::set<std::string>& address_taken) {
    const AstNode& node = tree.at(id);
    switch (node.kind) {
    case NodeKind::Identifier:
        uses.insert(*node.attr);
        return;
    case NodeKind::UnaryOp:
        if (node.attr == "&") {
            const AstNode& operand = tree.at(node.children[0]);
            if (operand.kind == NodeKind::Identifier) {
                if (in_call) {
                    address_taken.insert(*operand.attr);
                }
                return;
            }
        }
        break;
    case NodeKind::Call:
        in_call = true;
        break;
    default:
        break;
    }
    for (NodeId child : node.children) {
        collect_identifiers(tree, child, in_call, uses, address_taken);
    }
}

std::vector<std::string> sorted(std::set<std::string> values) {
    return {values.begin(), values.end()};
}

std::string escape_dot(std::string_view text) {
    std::string out;
    for (char c : text) {
        if (c == '"' || c == '\\') {
            out += '\\';
        }
        out += c;
    }
    return out;
}

std::string_view edge_color(EdgeKind kind) noexcept {
    switch (kind) {
    case EdgeKind::Ast: return "black";
    case EdgeKind::Cfg: return "blue";
    case EdgeKind::Cdg: return "red";
    case EdgeKind::Ddg: return "darkgreen";
    }
    return "gray";
}

}  // namespace

std::string_view to_string(Branch branch) noexcept {
    switch (branch) {
    case Branch::Uncond: return "uncond";
    case Branch::True: return "true";
    case Branch::False: return "false";
    }
    return "uncond";
}

std::string_view to_string(EdgeKind kind) noexcept {
    switch (kind) {
    case EdgeKind::Ast: return "AST";
    case EdgeKind::Cfg: return "CFG";
    case EdgeKind::Cdg: return "CDG";
    case EdgeKind::Ddg: return "DDG";
    }
    return "AST";
}

std::optional<EdgeKind> edge_kind_from_string(std::string_view name) noexcept {
    for (EdgeKind k : {EdgeKind::Ast, EdgeKind::Cfg, EdgeKind::Cdg, EdgeKind::Ddg}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    return std::nullopt;
}

std::vector<CfgEdge> Cfg::out_edges(NodeId node) const {
    std::vector<CfgEdge> out;
    for (const CfgEdge& e : edges) {
        if (e.src == node) {
            out.push_back(e);
        }
    }
    return out;
}

std::vector<NodeId> Cfg::successors(NodeId node) const {
    std::vector<NodeId> out;
    for (const CfgEdge& e : edges) {
        if (e.src == node) {
            out.push_back(e.dst);
        }
    }
    return out;
}

bool Cfg::contains(NodeId node) const { return std::ranges::binary_search(nodes, node); }

bool Cfg::is_condition(NodeId node) const {
    return std::ranges::any_of(edges, [&](const CfgEdge& e) { return e.src == node && e.branch == Branch::True; });
}

Cfg build_cfg(const Ast& tree) { return CfgBuilder(tree).build(); }

PostDominators post_dominators(const Cfg& cfg) {
    const Indexed g(cfg);
    const std::size_t n = g.ids.size();
    const std::size_t exit = g.index.at(cfg.exit);

    std::vector<bool> reaches(n, false);
    reaches[exit] = true;
    std::deque<std::size_t> queue{exit};
    while (!queue.empty()) {
        const std::size_t v = queue.front();
        queue.pop_front();
        for (std::size_t p : g.pred[v]) {
            if (!reaches[p]) {
                reaches[p] = true;
                queue.push_back(p);
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!reaches[i]) {
            throw AnalysisError("node " + std::to_string(g.ids[i]) + " cannot reach Exit");
        }
    }

    // pdom(v) = {v} ∪ ⋂ pdom(succ), iterated to the greatest fixpoint.
    std::vector<std::vector<bool>> pdom(n, std::vector<bool>(n, true));
    pdom[exit].assign(n, false);
    pdom[exit][exit] = true;
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t v = 0; v < n; ++v) {
            if (v == exit) {
                continue;
            }
            std::vector<bool> next(n, true);
            for (std::size_t s : g.succ[v]) {
                for (std::size_t i = 0; i < n; ++i) {
                    next[i] = next[i] && pdom[s][i];
                }
            }
            next[v] = true;
            if (next != pdom[v]) {
                pdom[v] = std::move(next);
                changed = true;
            }
        }
    }

    PostDominators ipdom;
    ipdom[cfg.exit] = cfg.exit;
    for (std::size_t v = 0; v < n; ++v) {
        if (v == exit) {
            continue;
        }
        const auto size_of = [&](std::size_t u) { return std::ranges::count(pdom[u], true); };
        const auto own = size_of(v);
        for (std::size_t p = 0; p < n; ++p) {
            if (p != v && pdom[v][p] && size_of(p) == own - 1) {
                ipdom[g.ids[v]] = g.ids[p];
                break;
            }
        }
    }
    return ipdom;
}

std::vector<ControlEdge> control_dependence(const Cfg& cfg, const PostDominators& ipdom) {
    std::set<ControlEdge> deps;
    for (const CfgEdge& e : cfg.edges) {
        if (e.branch == Branch::Uncond) {
            continue;
        }
        const NodeId stop = ipdom.at(e.src);
        NodeId runner = e.dst;
        while (runner != stop && runner != cfg.exit) {
            if (runner != e.src) {
                deps.insert({e.src, runner, e.branch});
            }
            runner = ipdom.at(runner);
        }
    }
    return {deps.begin(), deps.end()};
}

Effects effects(const Ast& tree, NodeId node) {
    Effects fx;
    if (node == entry_id(tree)) {
        for (NodeId child : tree.root().children) {
            if (tree.at(child).kind == NodeKind::Param) {
                fx.defs.push_back(frontend::declared_name(tree.at(child)));
            }
        }
        std::ranges::sort(fx.defs);
        return fx;
    }
    if (node >= tree.size()) {
        return fx;
    }
    const AstNode& stmt = tree.at(node);
    std::set<std::string> defs;
    std::set<std::string> may_defs;
    std::set<std::string> uses;
    std::set<std::string> address_taken;
    const auto read = [&](NodeId expr) { collect_identifiers(tree, expr, false, uses, address_taken); };

    switch (stmt.kind) {
    case NodeKind::Decl:
        defs.insert(frontend::declared_name(stmt));
        for (NodeId child : stmt.children) {
            read(child);
        }
        break;
    case NodeKind::Assign: {
        const AstNode& target = tree.at(stmt.children[0]);
        if (target.kind == NodeKind::Identifier) {
            defs.insert(*target.attr);
        } else {
            const AstNode& base = tree.at(target.children[0]);
            if (base.kind == NodeKind::Identifier) {
                may_defs.insert(*base.attr);
            }
            read(target.id);
        }
        read(stmt.children[1]);
        break;
    }
    case NodeKind::If:
    case NodeKind::While:
        read(stmt.children[0]);
        break;
    case NodeKind::For:
        read(stmt.children[1]);
        break;
    case NodeKind::Return:
    case NodeKind::Call:
        collect_identifiers(tree, stmt.id, false, uses, address_taken);
        break;
    default:
        break;
    }
    for (const std::string& v : address_taken) {
        may_defs.insert(v);
    }
    for (const std::string& v : defs) {
        may_defs.erase(v);
    }
    fx.defs = sorted(std::move(defs));
    fx.may_defs = sorted(std::move(may_defs));
    fx.uses = sorted(std::move(uses));
    return fx;
}

ReachingDefs reaching_definitions(const Cfg& cfg, const Ast& tree) {
    const Indexed g(cfg);
    const std::size_t n = g.ids.size();

    std::vector<std::set<Definition>> gen(n);
    std::vector<std::set<std::string>> kills(n);
    std::map<std::string, std::set<Definition>> defs_of;
    for (std::size_t i = 0; i < n; ++i) {
        const Effects fx = effects(tree, g.ids[i]);
        for (const std::string& v : fx.defs) {
            gen[i].insert({g.ids[i], v});
            kills[i].insert(v);
        }
        for (const std::string& v : fx.may_defs) {
            gen[i].insert({g.ids[i], v});
        }
        for (const Definition& d : gen[i]) {
            defs_of[d.var].insert(d);
        }
    }

    // Reverse post-order from Entry.
    std::vector<std::size_t> order;
    std::vector<bool> seen(n, false);
    const std::function<void(std::size_t)> dfs = [&](std::size_t v) {
        seen[v] = true;
        for (std::size_t s : g.succ[v]) {
            if (!seen[s]) {
                dfs(s);
            }
        }
        order.push_back(v);
    };
    dfs(g.index.at(cfg.entry));
    std::ranges::reverse(order);
    for (std::size_t v = 0; v < n; ++v) {
        if (!seen[v]) {
            order.push_back(v);
        }
    }

    std::vector<std::set<Definition>> in(n);
    std::vector<std::set<Definition>> out(n);
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t v : order) {
            std::set<Definition> next_in;
            for (std::size_t p : g.pred[v]) {
                next_in.insert(out[p].begin(), out[p].end());
            }
            std::set<Definition> next_out = gen[v];
            for (const Definition& d : next_in) {
                if (!kills[v].contains(d.var)) {
                    next_out.insert(d);
                }
            }
            if (next_out != out[v]) {
                out[v] = std::move(next_out);
                changed = true;
            }
            in[v] = std::move(next_in);
        }
    }

    ReachingDefs rd;
    for (std::size_t v = 0; v < n; ++v) {
        rd.in[g.ids[v]] = std::move(in[v]);
        rd.out[g.ids[v]] = std::move(out[v]);
    }
    return rd;
}

std::vector<DataEdge> data_dependence(const ReachingDefs& rd, const Ast& tree) {
    std::vector<DataEdge> edges;
    for (const auto& [use_site, reaching] : rd.in) {
        const Effects fx = effects(tree, use_site);
        for (const std::string& v : fx.uses) {
            for (const Definition& d : reaching) {
                if (d.var == v) {
                    edges.push_back({d.site, use_site, v});
                }
            }
        }
    }
    std::ranges::sort(edges);
    return edges;
}

void normalize(Cpg& cpg) {
    std::ranges::sort(cpg.edges);
    const auto [first, last] = std::ranges::unique(cpg.edges);
    cpg.edges.erase(first, last);
    for (std::size_t i = 0; i < cpg.nodes.size(); ++i) {
        if (cpg.nodes[i].id != i) {
            throw ConsistencyError("CPG node ids must be dense and ordered");
        }
    }
    for (const CpgEdge& e : cpg.edges) {
        if (e.src >= cpg.nodes.size() || e.dst >= cpg.nodes.size()) {
            throw ConsistencyError("edge " + std::to_string(e.src) + " -> " + std::to_string(e.dst) +
                                   " references an unknown node");
        }
    }
}

Cpg merge_cpg(const Ast& tree, const Cfg& cfg, const PdgEdges& pdg) {
    Cpg cpg;
    cpg.nodes.reserve(tree.size() + 2);
    for (const frontend::AstNode& node : tree.nodes) {
        cpg.nodes.push_back({node.id, node.kind, node.attr});
        for (NodeId child : node.children) {
            cpg.edges.push_back({node.id, child, EdgeKind::Ast, std::nullopt});
        }
    }
    cpg.nodes.push_back({entry_id(tree), NodeKind::Entry, std::nullopt});
    cpg.nodes.push_back({exit_id(tree), NodeKind::Exit, std::nullopt});

    for (const CfgEdge& e : cfg.edges) {
        std::optional<std::string> tag;
        if (e.branch != Branch::Uncond) {
            tag = std::string(to_string(e.branch));
        }
        cpg.edges.push_back({e.src, e.dst, EdgeKind::Cfg, std::move(tag)});
    }
    for (const ControlEdge& e : pdg.control) {
        cpg.edges.push_back({e.governor, e.dependent, EdgeKind::Cdg, std::string(to_string(e.branch))});
    }
    for (const DataEdge& e : pdg.data) {
        cpg.edges.push_back({e.def, e.use, EdgeKind::Ddg, e.var});
    }
    normalize(cpg);
    return cpg;
}

Cpg build_cpg(const Ast& tree) {
    const Cfg cfg = build_cfg(tree);
    const PostDominators ipdom = post_dominators(cfg);
    PdgEdges pdg;
    pdg.control = control_dependence(cfg, ipdom);
    pdg.data = data_dependence(reaching_definitions(cfg, tree), tree);
    return merge_cpg(tree, cfg, pdg);
}

std::string cpg_to_dot(const Cpg& cpg) {
    std::ostringstream out;
    out << "digraph cpg {\n";
    if (!cpg.nodes.empty()) {
        out << "  node [shape=box, fontname=\"monospace\"];\n";
    }
    for (const CpgNode& node : cpg.nodes) {
        std::string label = std::to_string(node.id) + " " + std::string(frontend::to_string(node.kind));
        if (node.attr) {
            label += ": " + *node.attr;
        }
        out << "  n" << node.id << " [label=\"" << escape_dot(label) << "\"];\n";
    }
    for (const CpgEdge& e : cpg.edges) {
        std::string label(to_string(e.kind));
        if (e.tag) {
            label += ":" + *e.tag;
        }
        out << "  n" << e.src << " -> n" << e.dst << " [label=\"" << escape_dot(label) << "\", color=\""
            << edge_color(e.kind) << "\"];\n";
    }
    out << "}\n";
    return out.str();
}

std::string cpg_to_json(const Cpg& cpg) {
    std::string out = "{\"nodes\":[";
    const char* sep = "\n";
    for (const CpgNode& node : cpg.nodes) {
        nlohmann::ordered_json record;
        record["id"] = node.id;
        record["kind"] = frontend::to_string(node.kind);
        record["attr"] = node.attr ? nlohmann::ordered_json(*node.attr) : nlohmann::ordered_json(nullptr);
        out += sep + record.dump();
        sep = ",\n";
    }
    out += "\n],\"edges\":[";
    sep = "\n";
    for (const CpgEdge& e : cpg.edges) {
        nlohmann::ordered_json record;
        record["src"] = e.src;
        record["dst"] = e.dst;
        record["kind"] = to_string(e.kind);
        record["tag"] = e.tag ? nlohmann::ordered_json(*e.tag) : nlohmann::ordered_json(nullptr);
        out += sep + record.dump();
        sep = ",\n";
    }
    out += "\n]}\n";
    return out;
}

Cpg cpg_from_json(std::string_view json) {
    const nlohmann::json doc = nlohmann::json::parse(json);
    Cpg cpg;
    for (const auto& record : doc.at("nodes")) {
        const auto kind = frontend::node_kind_from_string(record.at("kind").get<std::string>());
        if (!kind) {
            throw ConsistencyError("unknown CPG node kind: " + record.at("kind").dump());
        }
        CpgNode node{record.at("id").get<NodeId>(), *kind, std::nullopt};
        if (!record.at("attr").is_null()) {
            node.attr = record.at("attr").get<std::string>();
        }
        cpg.nodes.push_back(std::move(node));
    }
    for (const auto& record : doc.at("edges")) {
        const auto kind = edge_kind_from_string(record.at("kind").get<std::string>());
        if (!kind) {
            throw ConsistencyError("unknown CPG edge kind: " + record.at("kind").dump());
        }
        CpgEdge edge{record.at("src").get<NodeId>(), record.at("dst").get<NodeId>(), *kind, std::nullopt};
        if (!record.at("tag").is_null()) {
            edge.tag = record.at("tag").get<std::string>();
        }
        cpg.edges.push_back(std::move(edge));
    }
    normalize(cpg);
    return cpg;
}

}  // namespace vulnpipe::graphs
