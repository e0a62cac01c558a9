#include "test_support.hpp"

#include "vulnpipe/frontend.hpp"

#include <gtest/gtest.h>

using namespace vulnpipe;
using namespace vulnpipe::frontend;

namespace {

std::string if_else() { return read_file(oracle::data_dir() + "/golden/if_else.c"); }

}  // namespace

TEST(Tokenize, EmptyInput) { EXPECT_TRUE(tokenize("").empty()); }

TEST(Tokenize, IfElseSignature) {
    const auto tokens = tokenize("int f(bool x)");
    ASSERT_EQ(tokens.size(), 6u);
    const std::vector<std::pair<TokenKind, std::string>> want = {
        {TokenKind::Keyword, "int"}, {TokenKind::Identifier, "f"},  {TokenKind::Punctuation, "("},
        {TokenKind::Keyword, "bool"}, {TokenKind::Identifier, "x"}, {TokenKind::Punctuation, ")"}};
    for (std::size_t i = 0; i < want.size(); ++i) {
        EXPECT_EQ(tokens[i].kind, want[i].first) << i;
        EXPECT_EQ(tokens[i].text, want[i].second) << i;
    }
    EXPECT_EQ(tokens[1].span, (Span{4, 5}));
}

TEST(Tokenize, DollarIsRejectedAtItsOffset) {
    try {
        (void)tokenize("int $x;");
        FAIL() << "expected LexError";
    } catch (const LexError& e) {
        EXPECT_EQ(e.span().begin, 4u);
    }
}

TEST(Tokenize, CommentsAndStrings) {
    const auto tokens = tokenize("// line\nx /* block\n */ \"a\\\"b\" <= 42");
    ASSERT_EQ(tokens.size(), 4u);
    EXPECT_EQ(tokens[0].text, "x");
    EXPECT_EQ(tokens[1].kind, TokenKind::StrLiteral);
    EXPECT_EQ(tokens[2].text, "<=");
    EXPECT_EQ(tokens[3].kind, TokenKind::IntLiteral);
    EXPECT_THROW((void)tokenize("/* open"), LexError);
    EXPECT_THROW((void)tokenize("\"open"), LexError);
}

TEST(Parse, IfElseShape) {
    const Ast tree = parse_source(if_else());
    ASSERT_EQ(tree.size(), 10u);
    EXPECT_EQ(tree.root().kind, NodeKind::Function);
    const AstNode& param = tree.at(2);
    EXPECT_EQ(param.kind, NodeKind::Param);
    EXPECT_EQ(declared_name(param), "x");
    const AstNode& block = tree.at(tree.root().children.back());
    ASSERT_EQ(block.kind, NodeKind::Block);
    ASSERT_EQ(block.children.size(), 1u);
    const AstNode& branch = tree.at(block.children[0]);
    ASSERT_EQ(branch.kind, NodeKind::If);
    ASSERT_EQ(branch.children.size(), 3u);
    const AstNode& then_child = tree.at(branch.children[1]);
    const AstNode& else_child = tree.at(branch.children[2]);
    EXPECT_EQ(then_child.kind, NodeKind::Return);
    EXPECT_EQ(else_child.kind, NodeKind::Return);
    EXPECT_EQ(tree.at(then_child.children[0]).attr, "1");
    EXPECT_EQ(tree.at(else_child.children[0]).attr, "2");
}

TEST(Parse, MinimalFunctionHasThreeNodes) {
    const Ast tree = parse_source("int g(){}");
    ASSERT_EQ(tree.size(), 3u);
    EXPECT_EQ(tree.at(2).kind, NodeKind::Block);
    EXPECT_TRUE(tree.at(2).children.empty());
}

TEST(Parse, UnclosedBodyExpectsBrace) {
    try {
        (void)parse_source("int h(){ return; ");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.expected(), "'}'");
    }
}

TEST(Parse, IdsArePreOrder) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Ast tree = parse_source(oracle::random_function(rng, 6));
        NodeId next = 0;
        std::vector<NodeId> stack = {0};
        while (!stack.empty()) {
            const NodeId id = stack.back();
            stack.pop_back();
            EXPECT_EQ(id, next++);
            const auto& children = tree.at(id).children;
            stack.insert(stack.end(), children.rbegin(), children.rend());
        }
        EXPECT_EQ(next, tree.size());
    }
}

TEST(Parse, PrecedenceAndPostfix) {
    const Ast tree = parse_fragment("a + b * c[1] < g(x, &y) || !*p", Nonterminal::Expression);
    EXPECT_EQ(tree.root().kind, NodeKind::BinaryOp);
    EXPECT_EQ(tree.root().attr, "||");
    const AstNode& lt = tree.at(tree.root().children[0]);
    EXPECT_EQ(lt.attr, "<");
    const AstNode& plus = tree.at(lt.children[0]);
    EXPECT_EQ(plus.attr, "+");
    EXPECT_EQ(tree.at(plus.children[1]).attr, "*");
    const AstNode& call = tree.at(lt.children[1]);
    EXPECT_EQ(call.kind, NodeKind::Call);
    EXPECT_EQ(call.attr, "g");
    EXPECT_EQ(call.children.size(), 2u);
    const AstNode& neg = tree.at(tree.root().children[1]);
    EXPECT_EQ(neg.kind, NodeKind::UnaryOp);
    EXPECT_EQ(tree.at(neg.children[0]).kind, NodeKind::Deref);
}

TEST(Parse, NestingLimitIsAnErrorNotACrash) {
    std::string deep = "int f(){ return ";
    deep += std::string(5000, '(') + "1" + std::string(5000, ')') + "; }";
    EXPECT_THROW((void)parse_source(deep), ParseError);
}

TEST(Parse, FuzzedBytesNeverCrash) {
    Rng rng(11);
    const std::string alphabet = "intf(){};=<>+-*/&!|[]\"x1 \n/$if while for return char*";
    for (int trial = 0; trial < 3000; ++trial) {
        std::string src;
        const auto len = rng.between(0, 60);
        for (std::int64_t i = 0; i < len; ++i) {
            if (rng.between(0, 9) == 0) {
                src += static_cast<char>(rng.between(0, 255));
            } else {
                src += alphabet[static_cast<std::size_t>(rng.between(0, static_cast<std::int64_t>(alphabet.size()) - 1))];
            }
        }
        try {
            (void)parse_source(src);
        } catch (const LexError&) {
        } catch (const ParseError&) {
        }
    }
    // Mutations of valid programs reach deeper into the grammar.
    for (int trial = 0; trial < 1000; ++trial) {
        std::string src = oracle::random_function(rng, 5);
        const auto cuts = rng.between(1, 3);
        for (std::int64_t c = 0; c < cuts; ++c) {
            const auto at = static_cast<std::size_t>(rng.between(0, static_cast<std::int64_t>(src.size()) - 1));
            src.erase(at, static_cast<std::size_t>(rng.between(1, 4)));
        }
        try {
            (void)parse_source(src);
        } catch (const LexError&) {
        } catch (const ParseError&) {
        }
    }
}

TEST(Parse, SpansReparseToTheSameSubtree) {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const std::string src = oracle::random_function(rng, 6);
        const Ast tree = parse_source(src);
        for (NodeId id = 0; id < tree.size(); ++id) {
            const Span span = tree.at(id).span;
            const std::string text = src.substr(span.begin, span.end - span.begin);
            const Ast reparsed = parse_fragment(text, nonterminal_at(tree, id));
            ASSERT_EQ(reparsed, subtree(tree, id)) << "node " << id << " text '" << text << "'";
        }
    }
}

TEST(Json, MinimalFunctionHasThreeRecords) {
    const std::string json = ast_to_json(parse_source("int g(){}"));
    EXPECT_EQ(std::count(json.begin(), json.end(), '\n'), 5);
    EXPECT_EQ(json.rfind("{\"nodes\":[", 0), 0u);
}

TEST(Json, IfElseGolden) {
    EXPECT_EQ(ast_to_json(parse_source(if_else())), read_file(oracle::data_dir() + "/golden/if_else_ast.json"));
}

TEST(Json, RoundTripOnRandomPrograms) {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const Ast tree = parse_source(oracle::random_function(rng, 8));
        const std::string json = ast_to_json(tree);
        EXPECT_EQ(ast_from_json(json), tree);
        EXPECT_EQ(ast_to_json(ast_from_json(json)), json);
    }
}

TEST(Determinism, SameSourceSameBytes) {
    Rng rng(2);
    const std::string src = oracle::random_function(rng, 10);
    EXPECT_EQ(tokenize(src), tokenize(src));
    EXPECT_EQ(ast_to_json(parse_source(src)), ast_to_json(parse_source(src)));
}

TEST(NodeKinds, NamesRoundTrip) {
    for (std::size_t k = 0; k < kNodeKindCount; ++k) {
        const auto kind = static_cast<NodeKind>(k);
        EXPECT_EQ(node_kind_from_string(to_string(kind)), kind);
    }
    EXPECT_FALSE(node_kind_from_string("Lambda").has_value());
}
