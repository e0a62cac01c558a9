#include "vulnpipe/frontend.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <utility>

namespace vulnpipe::frontend {

namespace {

constexpr std::array<std::string_view, 9> kKeywords = {
    "int", "bool", "char", "void", "if", "else", "while", "for", "return"};

constexpr std::array<std::string_view, 19> kNodeKindNames = {
    "Function", "Param",      "Block", "Decl",       "If",         "While",      "For",
    "Return",   "Assign",     "Call",  "BinaryOp",   "UnaryOp",    "ArrayIndex", "Deref",
    "Identifier", "IntLiteral", "StrLiteral", "Entry", "Exit"};

constexpr std::size_t kMaxNesting = 200;

bool is_ident_start(char c) noexcept {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

bool is_digit(char c) noexcept { return c >= '0' && c <= '9'; }

bool is_ident_char(char c) noexcept { return is_ident_start(c) || is_digit(c); }

bool is_space(char c) noexcept { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_keyword(std::string_view text) noexcept {
    return std::ranges::find(kKeywords, text) != kKeywords.end();
}

bool is_type_keyword(std::string_view text) noexcept {
    return text == "int" || text == "bool" || text == "char" || text == "void";
}

// Parse tree before pre-order numbering.
struct PNode {
    NodeKind kind;
    std::optional<std::string> attr;
    Span span;
    std::vector<PNode> children;
};

PNode make(NodeKind kind, Span span, std::optional<std::string> attr = std::nullopt,
           std::vector<PNode> children = {}) {
    return PNode{kind, std::move(attr), span, std::move(children)};
}

class Parser {
public:
    explicit Parser(const std::vector<Token>& tokens) : tokens_(tokens) {}

    PNode parse_function() {
        const Span start = peek_span();
        std::string type = parse_type();
        const Token& name = expect_kind(TokenKind::Identifier, "function name");
        PNode fn = make(NodeKind::Function, {}, std::move(type));
        fn.children.push_back(make(NodeKind::Identifier, name.span, name.text));
        expect("(");
        if (!check(")")) {
            fn.children.push_back(parse_param());
            while (accept(",")) {
                fn.children.push_back(parse_param());
            }
        }
        expect(")");
        PNode body = parse_block();
        fn.span = {start.begin, body.span.end};
        fn.children.push_back(std::move(body));
        return fn;
    }

    PNode parse_param() {
        const Span start = peek_span();
        std::string declarator = parse_declarator();
        return make(NodeKind::Param, {start.begin, previous_end()}, std::move(declarator));
    }

    PNode parse_statement() {
        DepthGuard guard(*this);
        if (at_end()) {
            fail("statement");
        }
        const Token& tok = peek();
        if (tok.kind == TokenKind::Keyword) {
            if (is_type_keyword(tok.text)) {
                PNode decl = parse_decl_head();
                expect(";");
                decl.span.end = previous_end();
                return decl;
            }
            if (tok.text == "if") {
                return parse_if();
            }
            if (tok.text == "while") {
                return parse_while();
            }
            if (tok.text == "for") {
                return parse_for();
            }
            if (tok.text == "return") {
                return parse_return();
            }
            fail("statement");
        }
        if (tok.kind == TokenKind::Punctuation && tok.text == "{") {
            return parse_block();
        }
        return parse_simple_statement(true);
    }

    PNode parse_for_clause() {
        if (!at_end() && peek().kind == TokenKind::Keyword && is_type_keyword(peek().text)) {
            return parse_decl_head();
        }
        return parse_simple_statement(false);
    }

    PNode parse_expression() { return parse_binary(1); }

    [[nodiscard]] bool at_end() const noexcept { return pos_ >= tokens_.size(); }

    void expect_end(std::string_view expected) {
        if (!at_end()) {
            fail(std::string(expected));
        }
    }

private:
    struct DepthGuard {
        explicit DepthGuard(Parser& p) : parser(p) {
            if (++parser.depth_ > kMaxNesting) {
                parser.fail("shallower nesting");
            }
        }
        ~DepthGuard() { --parser.depth_; }
        DepthGuard(const DepthGuard&) = delete;
        DepthGuard& operator=(const DepthGuard&) = delete;
        Parser& parser;
    };

    const Token& peek() const { return tokens_[pos_]; }

    Span peek_span() const {
        if (at_end()) {
            const std::size_t end = tokens_.empty() ? 0 : tokens_.back().span.end;
            return {end, end};
        }
        return peek().span;
    }

    std::size_t previous_end() const { return pos_ == 0 ? 0 : tokens_[pos_ - 1].span.end; }

    bool check(std::string_view text) const {
        return !at_end() && (peek().kind == TokenKind::Operator || peek().kind == TokenKind::Punctuation ||
                             peek().kind == TokenKind::Keyword) &&
               peek().text == text;
    }

    bool accept(std::string_view text) {
        if (check(text)) {
            ++pos_;
            return true;
        }
        return false;
    }

    const Token& expect(std::string_view text) {
        if (!check(text)) {
            fail("'" + std::string(text) + "'");
        }
        return tokens_[pos_++];
    }

    const Token& expect_kind(TokenKind kind, std::string_view what) {
        if (at_end() || peek().kind != kind) {
            fail(std::string(what));
        }
        return tokens_[pos_++];
    }

    [[noreturn]] void fail(std::string expected) const {
        std::string found = at_end() ? "end of input" : "'" + peek().text + "'";
        throw ParseError(peek_span(), std::move(expected), std::move(found));
    }

    std::string parse_type() {
        if (at_end() || peek().kind != TokenKind::Keyword || !is_type_keyword(peek().text)) {
            fail("type");
        }
        std::string type = tokens_[pos_++].text;
        while (accept("*")) {
            type += '*';
        }
        return type;
    }

    std::string parse_declarator() {
        std::string text = parse_type();
        const Token& name = expect_kind(TokenKind::Identifier, "identifier");
        text += ' ';
        text += name.text;
        if (accept("[")) {
            const Token& size = expect_kind(TokenKind::IntLiteral, "array size");
            expect("]");
            text += '[' + size.text + ']';
        }
        return text;
    }

    PNode parse_decl_head() {
        const Span start = peek_span();
        std::string declarator = parse_declarator();
        PNode decl = make(NodeKind::Decl, {}, std::move(declarator));
        if (accept("=")) {
            decl.children.push_back(parse_expression());
        }
        decl.span = {start.begin, previous_end()};
        return decl;
    }

    // Assignment or call statement. `terminated` selects whether the trailing
    // ';' belongs to the statement.
    PNode parse_simple_statement(bool terminated) {
        const Span start = peek_span();
        PNode target = parse_unary();
        if (accept("=")) {
            const bool lvalue = target.kind == NodeKind::Identifier ||
                                target.kind == NodeKind::ArrayIndex || target.kind == NodeKind::Deref;
            if (!lvalue) {
                throw ParseError(target.span, "assignable expression", "non-assignable expression");
            }
            PNode value = parse_expression();
            if (terminated) {
                expect(";");
            }
            std::vector<PNode> children;
            children.push_back(std::move(target));
            children.push_back(std::move(value));
            return make(NodeKind::Assign, {start.begin, previous_end()}, std::nullopt,
                        std::move(children));
        }
        if (target.kind == NodeKind::Call && terminated) {
            expect(";");
            return target;
        }
        fail(terminated ? "'='" : "'=' in for clause");
    }

    PNode parse_block() {
        DepthGuard guard(*this);
        const Token& open = expect("{");
        PNode block = make(NodeKind::Block, {open.span.begin, open.span.end});
        while (!check("}")) {
            if (at_end()) {
                fail("'}'");
            }
            block.children.push_back(parse_statement());
        }
        expect("}");
        block.span.end = previous_end();
        return block;
    }

    // Body of if/else/while/for. A braced body holding one statement is
    // represented by that statement.
    PNode parse_body() {
        PNode body = parse_statement();
        if (body.kind == NodeKind::Block && body.children.size() == 1) {
            PNode only = std::move(body.children.front());
            return only;
        }
        return body;
    }

    PNode parse_if() {
        const Span start = peek_span();
        expect("if");
        expect("(");
        PNode node = make(NodeKind::If, {});
        node.children.push_back(parse_expression());
        expect(")");
        node.children.push_back(parse_body());
        if (accept("else")) {
            node.children.push_back(parse_body());
        }
        node.span = {start.begin, previous_end()};
        return node;
    }

    PNode parse_while() {
        const Span start = peek_span();
        expect("while");
        expect("(");
        PNode node = make(NodeKind::While, {});
        node.children.push_back(parse_expression());
        expect(")");
        node.children.push_back(parse_body());
        node.span = {start.begin, previous_end()};
        return node;
    }

    PNode parse_for() {
        const Span start = peek_span();
        expect("for");
        expect("(");
        PNode node = make(NodeKind::For, {});
        node.children.push_back(parse_for_clause());
        expect(";");
        node.children.push_back(parse_expression());
        expect(";");
        PNode step = parse_simple_statement(false);
        if (step.kind != NodeKind::Assign) {
            throw ParseError(step.span, "assignment", "call");
        }
        node.children.push_back(std::move(step));
        expect(")");
        node.children.push_back(parse_body());
        node.span = {start.begin, previous_end()};
        return node;
    }

    PNode parse_return() {
        const Span start = peek_span();
        expect("return");
        PNode node = make(NodeKind::Return, {});
        if (!check(";")) {
            node.children.push_back(parse_expression());
        }
        expect(";");
        node.span = {start.begin, previous_end()};
        return node;
    }

    static int precedence(const Token& tok) noexcept {
        if (tok.kind != TokenKind::Operator) {
            return 0;
        }
        const std::string& op = tok.text;
        if (op == "||") return 1;
        if (op == "&&") return 2;
        if (op == "==" || op == "!=") return 3;
        if (op == "<" || op == "<=" || op == ">" || op == ">=") return 4;
        if (op == "+" || op == "-") return 5;
        if (op == "*" || op == "/" || op == "%") return 6;
        return 0;
    }

    PNode parse_binary(int min_prec) {
        DepthGuard guard(*this);
        PNode lhs = parse_unary();
        while (!at_end()) {
            const int prec = precedence(peek());
            if (prec < min_prec || prec == 0) {
                break;
            }
            std::string op = tokens_[pos_++].text;
            PNode rhs = parse_binary(prec + 1);
            const Span span{lhs.span.begin, rhs.span.end};
            std::vector<PNode> children;
            children.push_back(std::move(lhs));
            children.push_back(std::move(rhs));
            lhs = make(NodeKind::BinaryOp, span, std::move(op), std::move(children));
        }
        return lhs;
    }

    PNode parse_unary() {
        DepthGuard guard(*this);
        if (!at_end() && peek().kind == TokenKind::Operator) {
            const std::string op = peek().text;
            if (op == "!" || op == "-" || op == "&" || op == "*") {
                const Span start = tokens_[pos_++].span;
                PNode operand = parse_unary();
                const Span span{start.begin, operand.span.end};
                std::vector<PNode> children;
                children.push_back(std::move(operand));
                if (op == "*") {
                    return make(NodeKind::Deref, span, std::nullopt, std::move(children));
                }
                return make(NodeKind::UnaryOp, span, op, std::move(children));
            }
        }
        return parse_postfix();
    }

    PNode parse_postfix() {
        PNode expr = parse_primary();
        while (true) {
            if (accept("[")) {
                PNode index = parse_expression();
                expect("]");
                const Span span{expr.span.begin, previous_end()};
                std::vector<PNode> children;
                children.push_back(std::move(expr));
                children.push_back(std::move(index));
                expr = make(NodeKind::ArrayIndex, span, std::nullopt, std::move(children));
            } else if (check("(") && expr.kind == NodeKind::Identifier && !expr.children.size()) {
                // Only a bare identifier can be called.
                ++pos_;
                PNode call = make(NodeKind::Call, {}, expr.attr);
                if (!check(")")) {
                    call.children.push_back(parse_expression());
                    while (accept(",")) {
                        call.children.push_back(parse_expression());
                    }
                }
                expect(")");
                call.span = {expr.span.begin, previous_end()};
                expr = std::move(call);
            } else {
                return expr;
            }
        }
    }

    PNode parse_primary() {
        if (at_end()) {
            fail("expression");
        }
        const Token& tok = peek();
        switch (tok.kind) {
        case TokenKind::Identifier:
            ++pos_;
            return make(NodeKind::Identifier, tok.span, tok.text);
        case TokenKind::IntLiteral:
            ++pos_;
            return make(NodeKind::IntLiteral, tok.span, tok.text);
        case TokenKind::StrLiteral:
            ++pos_;
            return make(NodeKind::StrLiteral, tok.span, tok.text);
        default:
            break;
        }
        if (check("(")) {
            const Span open = tokens_[pos_++].span;
            PNode inner = parse_expression();
            expect(")");
            // Parentheses group without creating a node; the span widens so
            // that source[span] still re-parses to this expression.
            inner.span = {open.begin, previous_end()};
            return inner;
        }
        fail("expression");
    }

    const std::vector<Token>& tokens_;
    std::size_t pos_ = 0;
    std::size_t depth_ = 0;
};

void flatten(PNode& node, std::vector<AstNode>& out) {
    const auto id = static_cast<NodeId>(out.size());
    out.push_back(AstNode{id, node.kind, {}, std::move(node.attr), node.span});
    std::vector<NodeId> children;
    children.reserve(node.children.size());
    for (PNode& child : node.children) {
        children.push_back(static_cast<NodeId>(out.size()));
        flatten(child, out);
    }
    out[id].children = std::move(children);
}

Ast to_ast(PNode root) {
    Ast tree;
    flatten(root, tree.nodes);
    return tree;
}

}  // namespace

std::string_view to_string(TokenKind kind) noexcept {
    switch (kind) {
    case TokenKind::Identifier: return "identifier";
    case TokenKind::IntLiteral: return "integer-literal";
    case TokenKind::StrLiteral: return "string-literal";
    case TokenKind::Keyword: return "keyword";
    case TokenKind::Operator: return "operator";
    case TokenKind::Punctuation: return "punctuation";
    }
    return "unknown";
}

std::string_view to_string(NodeKind kind) noexcept {
    return kNodeKindNames[static_cast<std::size_t>(kind)];
}

std::optional<NodeKind> node_kind_from_string(std::string_view name) noexcept {
    const auto it = std::ranges::find(kNodeKindNames, name);
    if (it == kNodeKindNames.end()) {
        return std::nullopt;
    }
    return static_cast<NodeKind>(it - kNodeKindNames.begin());
}

std::vector<Token> tokenize(std::string_view source) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    const std::size_t n = source.size();
    while (i < n) {
        const char c = source[i];
        if (is_space(c)) {
            ++i;
            continue;
        }
        if (c == '/' && i + 1 < n && source[i + 1] == '/') {
            while (i < n && source[i] != '\n') {
                ++i;
            }
            continue;
        }
        if (c == '/' && i + 1 < n && source[i + 1] == '*') {
            const std::size_t close = source.find("*/", i + 2);
            if (close == std::string_view::npos) {
                throw LexError({i, n}, "unterminated block comment");
            }
            i = close + 2;
            continue;
        }
        const std::size_t start = i;
        if (is_ident_start(c)) {
            while (i < n && is_ident_char(source[i])) {
                ++i;
            }
            std::string text(source.substr(start, i - start));
            const TokenKind kind = is_keyword(text) ? TokenKind::Keyword : TokenKind::Identifier;
            tokens.push_back({kind, std::move(text), {start, i}});
            continue;
        }
        if (is_digit(c)) {
            while (i < n && is_digit(source[i])) {
                ++i;
            }
            tokens.push_back({TokenKind::IntLiteral, std::string(source.substr(start, i - start)), {start, i}});
            continue;
        }
        if (c == '"') {
            ++i;
            while (i < n && source[i] != '"') {
                if (source[i] == '\n') {
                    break;
                }
                if (source[i] == '\\' && i + 1 < n) {
                    ++i;
                }
                ++i;
            }
            if (i >= n || source[i] != '"') {
                throw LexError({start, i}, "unterminated string literal");
            }
            ++i;
            tokens.push_back({TokenKind::StrLiteral, std::string(source.substr(start, i - start)), {start, i}});
            continue;
        }
        if (i + 1 < n) {
            const std::string_view two = source.substr(i, 2);
            if (two == "==" || two == "!=" || two == "<=" || two == ">=" || two == "&&" || two == "||") {
                tokens.push_back({TokenKind::Operator, std::string(two), {i, i + 2}});
                i += 2;
                continue;
            }
        }
        switch (c) {
        case '=': case '<': case '>': case '+': case '-': case '*': case '/': case '%': case '!': case '&':
            tokens.push_back({TokenKind::Operator, std::string(1, c), {i, i + 1}});
            ++i;
            continue;
        case '(': case ')': case '{': case '}': case '[': case ']': case ';': case ',':
            tokens.push_back({TokenKind::Punctuation, std::string(1, c), {i, i + 1}});
            ++i;
            continue;
        default:
            throw LexError({i, i + 1}, "unexpected character");
        }
    }
    return tokens;
}

Ast parse(const std::vector<Token>& tokens) {
    Parser parser(tokens);
    PNode root = parser.parse_function();
    parser.expect_end("end of input");
    return to_ast(std::move(root));
}

Ast parse_source(std::string_view source) { return parse(tokenize(source)); }

Ast parse_fragment(std::string_view source, Nonterminal what) {
    const std::vector<Token> tokens = tokenize(source);
    Parser parser(tokens);
    PNode root = [&] {
        switch (what) {
        case Nonterminal::Function: return parser.parse_function();
        case Nonterminal::Statement: return parser.parse_statement();
        case Nonterminal::ForClause: return parser.parse_for_clause();
        case Nonterminal::Expression: return parser.parse_expression();
        case Nonterminal::Param: return parser.parse_param();
        }
        throw ParseError({}, "nonterminal", "unknown");
    }();
    parser.expect_end("end of input");
    return to_ast(std::move(root));
}

Nonterminal nonterminal_at(const Ast& tree, NodeId id) {
    const AstNode& node = tree.at(id);
    switch (node.kind) {
    case NodeKind::Function: return Nonterminal::Function;
    case NodeKind::Param: return Nonterminal::Param;
    case NodeKind::Block: case NodeKind::If: case NodeKind::While: case NodeKind::For:
    case NodeKind::Return:
        return Nonterminal::Statement;
    case NodeKind::Decl: case NodeKind::Assign: {
        for (const AstNode& parent : tree.nodes) {
            if (parent.kind != NodeKind::For) {
                continue;
            }
            if (parent.children[0] == id || parent.children[2] == id) {
                return Nonterminal::ForClause;
            }
        }
        return Nonterminal::Statement;
    }
    default:
        return Nonterminal::Expression;
    }
}

Ast subtree(const Ast& tree, NodeId id) {
    Ast out;
    const std::size_t base = tree.at(id).span.begin;
    auto copy = [&](auto& self, NodeId src) -> NodeId {
        const AstNode& node = tree.at(src);
        const auto new_id = static_cast<NodeId>(out.nodes.size());
        out.nodes.push_back(AstNode{new_id, node.kind, {}, node.attr,
                                    {node.span.begin - base, node.span.end - base}});
        std::vector<NodeId> children;
        for (NodeId child : node.children) {
            children.push_back(self(self, child));
        }
        out.nodes[new_id].children = std::move(children);
        return new_id;
    };
    copy(copy, id);
    return out;
}

std::string declared_name(const AstNode& node) {
    if (!node.attr) {
        return {};
    }
    const std::string& text = *node.attr;
    const std::size_t space = text.rfind(' ');
    std::string name = space == std::string::npos ? text : text.substr(space + 1);
    const std::size_t bracket = name.find('[');
    if (bracket != std::string::npos) {
        name.resize(bracket);
    }
    return name;
}

std::string ast_to_json(const Ast& tree) {
    std::string out = "{\"nodes\":[";
    for (const AstNode& node : tree.nodes) {
        nlohmann::ordered_json record;
        record["id"] = node.id;
        record["kind"] = to_string(node.kind);
        record["attr"] = node.attr ? nlohmann::ordered_json(*node.attr) : nlohmann::ordered_json(nullptr);
        record["children"] = node.children;
        record["span"] = {node.span.begin, node.span.end};
        out += node.id == 0 ? "\n" : ",\n";
        out += record.dump();
    }
    out += "\n]}\n";
    return out;
}

Ast ast_from_json(std::string_view json) {
    const nlohmann::json doc = nlohmann::json::parse(json);
    Ast tree;
    for (const auto& record : doc.at("nodes")) {
        AstNode node;
        node.id = record.at("id").get<NodeId>();
        const auto kind = node_kind_from_string(record.at("kind").get<std::string>());
        if (!kind || static_cast<std::size_t>(*kind) >= kSyntaxKindCount) {
            throw ConsistencyError("unknown AST node kind: " + record.at("kind").dump());
        }
        node.kind = *kind;
        if (!record.at("attr").is_null()) {
            node.attr = record.at("attr").get<std::string>();
        }
        node.children = record.at("children").get<std::vector<NodeId>>();
        const auto span = record.at("span").get<std::vector<std::size_t>>();
        if (span.size() != 2) {
            throw ConsistencyError("span must have two offsets");
        }
        node.span = {span[0], span[1]};
        if (node.id != tree.nodes.size()) {
            throw ConsistencyError("AST node ids must be dense and ordered");
        }
        tree.nodes.push_back(std::move(node));
    }
    for (const AstNode& node : tree.nodes) {
        for (NodeId child : node.children) {
            if (child >= tree.nodes.size()) {
                throw ConsistencyError("child id out of range: " + std::to_string(child));
            }
        }
    }
    return tree;
}

}  // namespace vulnpipe::frontend
