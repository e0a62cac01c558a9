#pragma once

// Lexer and recursive-descent parser for the mini-C function language.
//
//   function := type ident "(" params? ")" block
//   params   := param ("," param)*
//   param    := type ident ("[" int "]")?
//   type     := ("int" | "bool" | "char" | "void") "*"*
//   stmt     := decl | assign | if | while | for | return | call ";" | block
//   decl     := type ident ("[" int "]")? ("=" expr)? ";"
//   assign   := lvalue "=" expr ";"
//   if       := "if" "(" expr ")" stmt ("else" stmt)?
//   while    := "while" "(" expr ")" stmt
//   for      := "for" "(" (decl-head | assign-head) ";" expr ";" assign-head ")" stmt
//   return   := "return" expr? ";"
//
// Binary precedence (loosest first): || && (== !=) (< <= > >=) (+ -) (* / %).
// Unary: ! - & *. Postfix: [] and calls.

#include "vulnpipe/error.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vulnpipe::frontend {

enum class TokenKind : std::uint8_t {
    Identifier,
    IntLiteral,
    StrLiteral,
    Keyword,
    Operator,
    Punctuation,
};

struct Token {
    TokenKind kind;
    std::string text;
    Span span;

    friend bool operator==(const Token&, const Token&) = default;
};

[[nodiscard]] std::string_view to_string(TokenKind kind) noexcept;

/// Splits `source` into tokens, skipping whitespace and comments.
/// Throws LexError on any byte sequence outside the lexical grammar.
[[nodiscard]] std::vector<Token> tokenize(std::string_view source);

/// Every node kind a code property graph can contain. The first 17 are
/// syntax kinds; Entry and Exit are the synthetic CFG endpoints.
enum class NodeKind : std::uint8_t {
    Function,
    Param,
    Block,
    Decl,
    If,
    While,
    For,
    Return,
    Assign,
    Call,
    BinaryOp,
    UnaryOp,
    ArrayIndex,
    Deref,
    Identifier,
    IntLiteral,
    StrLiteral,
    Entry,
    Exit,
};

inline constexpr std::size_t kSyntaxKindCount = 17;
inline constexpr std::size_t kNodeKindCount = 19;

[[nodiscard]] std::string_view to_string(NodeKind kind) noexcept;
[[nodiscard]] std::optional<NodeKind> node_kind_from_string(std::string_view name) noexcept;

using NodeId = std::uint32_t;

struct AstNode {
    NodeId id = 0;
    NodeKind kind = NodeKind::Function;
    std::vector<NodeId> children;
    std::optional<std::string> attr;
    Span span;

    friend bool operator==(const AstNode&, const AstNode&) = default;
};

/// A parsed function. nodes[i].id == i, ids are assigned in pre-order and
/// nodes[0] is the Function root.
struct Ast {
    std::vector<AstNode> nodes;

    [[nodiscard]] const AstNode& root() const { return nodes.front(); }
    [[nodiscard]] const AstNode& at(NodeId id) const { return nodes.at(id); }
    [[nodiscard]] std::size_t size() const noexcept { return nodes.size(); }

    friend bool operator==(const Ast&, const Ast&) = default;
};

/// Parses a complete token stream as one function. Throws ParseError.
[[nodiscard]] Ast parse(const std::vector<Token>& tokens);

/// tokenize + parse.
[[nodiscard]] Ast parse_source(std::string_view source);

/// Nonterminals that can be parsed in isolation. ForClause is the
/// semicolon-less declaration or assignment in a for header.
enum class Nonterminal : std::uint8_t { Function, Statement, ForClause, Expression, Param };

/// Parses `source` as a single nonterminal. Node ids are pre-order from 0.
[[nodiscard]] Ast parse_fragment(std::string_view source, Nonterminal what);

/// The nonterminal node `id` was parsed as, given its position in `tree`.
[[nodiscard]] Nonterminal nonterminal_at(const Ast& tree, NodeId id);

/// Copies the subtree rooted at `id` with ids renumbered from 0 and spans
/// shifted so the subtree starts at offset 0.
[[nodiscard]] Ast subtree(const Ast& tree, NodeId id);

/// Variable name introduced by a Param or Decl node ("int a[10]" -> "a").
[[nodiscard]] std::string declared_name(const AstNode& node);

[[nodiscard]] std::string ast_to_json(const Ast& tree);
[[nodiscard]] Ast ast_from_json(std::string_view json);

}  // namespace vulnpipe::frontend
