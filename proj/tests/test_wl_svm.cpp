#include "test_support.hpp"

#include "vulnpipe/corpus.hpp"
#include "vulnpipe/wl_svm.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

using namespace vulnpipe;
using namespace vulnpipe::wl;
using graphs::Cpg;
using graphs::EdgeKind;
using graphs::NodeId;

namespace {

Cpg if_else_cpg() {
    return graphs::build_cpg(frontend::parse_source(read_file(oracle::data_dir() + "/golden/if_else.c")));
}

Cpg uniform_graph(std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& edges) {
    Cpg g;
    for (std::size_t i = 0; i < n; ++i) {
        g.nodes.push_back({static_cast<NodeId>(i), frontend::NodeKind::Identifier, std::nullopt});
    }
    for (auto [a, b] : edges) {
        g.edges.push_back({a, b, EdgeKind::Ast, std::nullopt});
    }
    graphs::normalize(g);
    return g;
}

// Sizes of the color classes after each refinement round, sorted.
std::vector<std::vector<std::size_t>> refinement_profile(const Cpg& g, int h) {
    std::vector<std::string> color(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        color[i] = std::string(frontend::to_string(g.nodes[i].kind));
    }
    std::vector<std::vector<std::size_t>> profile;
    const auto record = [&] {
        std::map<std::string, std::size_t> sizes;
        for (const auto& c : color) ++sizes[c];
        std::vector<std::size_t> v;
        for (const auto& [c, n] : sizes) v.push_back(n);
        std::ranges::sort(v);
        profile.push_back(v);
    };
    record();
    for (int it = 0; it < h; ++it) {
        std::vector<std::vector<std::string>> around(g.size());
        for (const auto& e : g.edges) {
            const std::string kind(graphs::to_string(e.kind));
            around[e.src].push_back(kind + "/" + color[e.dst]);
            if (e.src != e.dst) around[e.dst].push_back(kind + "/" + color[e.src]);
        }
        std::vector<std::string> next(g.size());
        for (std::size_t v = 0; v < g.size(); ++v) {
            std::ranges::sort(around[v]);
            next[v] = "(" + color[v];
            for (const auto& s : around[v]) next[v] += "," + s;
            next[v] += ")";
        }
        color = std::move(next);
        record();
    }
    return profile;
}

std::vector<std::vector<std::size_t>> histogram_profile(const WlHistogram& h) {
    std::vector<std::vector<std::size_t>> out;
    for (const auto& it : h.iterations) {
        std::vector<std::size_t> v;
        for (const auto& [label, count] : it) v.push_back(count);
        std::ranges::sort(v);
        out.push_back(v);
    }
    return out;
}

// Gram matrix of explicit 2-D points (linear kernel).
Matrix linear_gram(const std::vector<std::array<double, 2>>& x) {
    Matrix K(x.size(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = 0; j < x.size(); ++j) {
            K(i, j) = x[i][0] * x[j][0] + x[i][1] * x[j][1];
        }
    }
    return K;
}

double min_eigenvalue(const Matrix& K) {
    Eigen::MatrixXd m(K.rows(), K.cols());
    for (std::size_t i = 0; i < K.rows(); ++i) {
        for (std::size_t j = 0; j < K.cols(); ++j) m(i, j) = K(i, j);
    }
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

void expect_feasible(const SvmModel& m, const std::vector<int>& y, double C) {
    double balance = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        EXPECT_GE(m.alpha[i], -1e-12);
        EXPECT_LE(m.alpha[i], C + 1e-12);
        balance += m.alpha[i] * y[i];
    }
    EXPECT_LT(std::abs(balance), 1e-6);
}

std::vector<double> row_of(const Matrix& K, std::size_t i) {
    std::vector<double> r(K.cols());
    for (std::size_t j = 0; j < K.cols(); ++j) r[j] = K(i, j);
    return r;
}

}  // namespace

TEST(Relabel, ZeroIterationsCountsKinds) {
    const Cpg g = if_else_cpg();
    LabelTable table;
    const WlHistogram h = wl_relabel(g, 0, table);
    ASSERT_EQ(h.h(), 0);
    std::map<std::string, std::uint32_t> by_kind;
    const auto sigs = table.signatures();
    for (const auto& [label, count] : h.iterations[0]) {
        by_kind[sigs[label]] = count;
    }
    std::map<std::string, std::uint32_t> want;
    for (const auto& n : g.nodes) ++want["0|" + std::string(frontend::to_string(n.kind))];
    EXPECT_EQ(by_kind, want);
}

TEST(Relabel, CountsSumToNodeCount) {
    Rng rng(3);
    LabelTable table;
    for (int t = 0; t < 20; ++t) {
        const Cpg g = oracle::random_graph(rng, 1 + static_cast<std::size_t>(rng.between(0, 12)));
        const WlHistogram h = wl_relabel(g, 3, table);
        for (const auto& it : h.iterations) {
            std::size_t total = 0;
            for (const auto& [l, c] : it) total += c;
            EXPECT_EQ(total, g.size());
        }
    }
}

TEST(Relabel, PathAndTriangleDifferAfterOneRound) {
    const Cpg path = uniform_graph(3, {{0, 1}, {1, 2}});
    const Cpg triangle = uniform_graph(3, {{0, 1}, {1, 2}, {2, 0}});
    LabelTable table;
    const WlHistogram hp = wl_relabel(path, 1, table);
    const WlHistogram ht = wl_relabel(triangle, 1, table);
    EXPECT_EQ(hp.iterations[0], ht.iterations[0]);
    EXPECT_NE(hp.iterations[1], ht.iterations[1]);
    EXPECT_EQ(hp.iterations[1].size(), 2u);
    EXPECT_EQ(ht.iterations[1].size(), 1u);
    EXPECT_EQ(histogram_profile(hp), refinement_profile(path, 1));
    EXPECT_EQ(histogram_profile(ht), refinement_profile(triangle, 1));
}

TEST(Relabel, MatchesColorRefinementOracle) {
    Rng rng(12);
    for (int t = 0; t < 100; ++t) {
        const Cpg g = oracle::random_graph(rng, 1 + static_cast<std::size_t>(rng.between(0, 9)));
        LabelTable table;
        EXPECT_EQ(histogram_profile(wl_relabel(g, 3, table)), refinement_profile(g, 3));
    }
}

TEST(Relabel, IsomorphicGraphsShareHistograms) {
    Rng rng(7);
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.between(0, 8));
        const Cpg g = oracle::random_graph(rng, n);
        std::vector<NodeId> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        LabelTable table;
        const WlHistogram a = wl_relabel(g, 3, table);
        const WlHistogram b = wl_relabel(oracle::permute(g, perm), 3, table);
        EXPECT_EQ(a, b);
    }
}

TEST(Relabel, ConcurrentTableUseMatchesSequentialKernel) {
    const auto samples = corpus::generate_synthetic(10, 5);
    std::vector<Cpg> graphs;
    for (const auto& s : samples) graphs.push_back(graphs::build_cpg(frontend::parse_source(s.code)));
    LabelTable seq_table;
    std::vector<WlHistogram> seq;
    for (const auto& g : graphs) seq.push_back(wl_relabel(g, 3, seq_table));

    LabelTable shared;
    std::vector<WlHistogram> par(graphs.size());
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < 4; ++t) {
            pool.emplace_back([&, t] {
                for (std::size_t i = t; i < graphs.size(); i += 4) par[i] = wl_relabel(graphs[i], 3, shared);
            });
        }
    }
    EXPECT_EQ(shared.size(), seq_table.size());
    EXPECT_EQ(gram_matrix(seq, true), gram_matrix(par, true));
}

TEST(Kernel, HandComputedDot) {
    WlHistogram a{{{{0, 2}, {1, 1}}}};
    WlHistogram b{{{{0, 1}, {1, 1}}}};
    EXPECT_DOUBLE_EQ(wl_kernel(a, b, false), 3.0);
    EXPECT_DOUBLE_EQ(wl_kernel(a, b, true), 3.0 / std::sqrt(5.0 * 2.0));
    WlHistogram c{{{{7, 4}}}};
    EXPECT_EQ(wl_kernel(a, c, false), 0.0);
    EXPECT_EQ(wl_kernel(a, c, true), 0.0);
    EXPECT_EQ(wl_kernel(a, WlHistogram{{{}}}, true), 0.0);
}

TEST(Kernel, SelfSimilarityIsOne) {
    LabelTable table;
    const WlHistogram h = wl_relabel(if_else_cpg(), 3, table);
    EXPECT_DOUBLE_EQ(wl_kernel(h, h, true), 1.0);
}

TEST(Gram, SingleGraph) {
    LabelTable table;
    const Matrix K = gram_matrix(std::vector<Cpg>{if_else_cpg()}, 3, true, table);
    ASSERT_EQ(K.rows(), 1u);
    EXPECT_DOUBLE_EQ(K(0, 0), 1.0);
}

TEST(Gram, SymmetricUnitDiagonalAndPsd) {
    const auto samples = corpus::generate_synthetic(25, 99);
    std::vector<Cpg> graphs;
    for (const auto& s : samples) graphs.push_back(graphs::build_cpg(frontend::parse_source(s.code)));
    LabelTable table;
    const Matrix K = gram_matrix(graphs, 3, true, table);
    for (std::size_t i = 0; i < K.rows(); ++i) {
        EXPECT_DOUBLE_EQ(K(i, i), 1.0);
        for (std::size_t j = 0; j < K.cols(); ++j) ASSERT_EQ(K(i, j), K(j, i));
    }
    EXPECT_GE(min_eigenvalue(K), -1e-8);
}

TEST(Svm, TwoPointsIdentityKernel) {
    Matrix K(2, 2);
    K(0, 0) = K(1, 1) = 1.0;
    const std::vector<int> y = {1, -1};
    const SvmModel m = train_svm(K, y, 10.0);
    EXPECT_NEAR(m.alpha[0], m.alpha[1], 1e-12);
    EXPECT_NEAR(m.alpha[0], 1.0, 1e-9);
    EXPECT_EQ(svm_predict(m, row_of(K, 0)).label, 1);
    EXPECT_EQ(svm_predict(m, row_of(K, 1)).label, -1);
}

TEST(Svm, SeparableTenPoints) {
    const std::vector<std::array<double, 2>> x = {{2, 2},  {3, 1},   {2.5, 3}, {4, 2},   {3, 3.5},
                                                  {-1, -2}, {-2, -1}, {-3, 0}, {-1, -3}, {-2.5, -2}};
    const std::vector<int> y = {1, 1, 1, 1, 1, -1, -1, -1, -1, -1};
    const Matrix K = linear_gram(x);
    const double C = 10.0;
    const SvmModel m = train_svm(K, y, C);
    EXPECT_TRUE(m.converged);
    expect_feasible(m, y, C);
    EXPECT_LT(oracle::kkt_gap(K, y, m.alpha, C), 1e-3);
    for (std::size_t i = 0; i < y.size(); ++i) {
        EXPECT_EQ(svm_predict(m, row_of(K, i)).label, y[i]) << i;
    }
    // Free support vectors sit on the margin.
    for (std::size_t s = 0; s < m.support.size(); ++s) {
        const std::size_t i = m.support[s];
        if (m.alpha[i] < C - 1e-9) {
            EXPECT_NEAR(y[i] * svm_predict(m, row_of(K, i)).score, 1.0, 1e-2);
        }
    }
}

TEST(Svm, MatchesGridSearchOnSmallProblems) {
    Rng rng(77);
    for (int t = 0; t < 6; ++t) {
        const std::size_t n = 3 + static_cast<std::size_t>(t % 2);
        std::vector<std::array<double, 2>> x(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = i % 2 == 0 ? 1 : -1;
            x[i] = {rng.uniform(-1, 1) + 0.5 * y[i], rng.uniform(-1, 1)};
        }
        const Matrix K = linear_gram(x);
        const double C = 1.0;
        const SvmModel m = train_svm(K, y, C);
        expect_feasible(m, y, C);
        const double smo = dual_objective(K, y, m.alpha);
        EXPECT_NEAR(smo, oracle::grid_dual_optimum(K, y, C), 1e-2) << t;
        EXPECT_LT(oracle::kkt_gap(K, y, m.alpha, C), 1e-3);
    }
}

TEST(Svm, SingleClassPredictsThatClass) {
    Matrix K(3, 3);
    for (std::size_t i = 0; i < 3; ++i) K(i, i) = 1.0;
    for (int label : {1, -1}) {
        const std::vector<int> y(3, label);
        const SvmModel m = train_svm(K, y, 1.0);
        for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(svm_predict(m, row_of(K, i)).label, label);
        EXPECT_EQ(svm_predict(m, std::vector<double>(3, 0.0)).label, label);
    }
}

TEST(Svm, ZeroRowScoresBias) {
    Matrix K(2, 2);
    K(0, 0) = K(1, 1) = 1.0;
    const SvmModel m = train_svm(K, std::vector<int>{1, -1}, 1.0);
    EXPECT_EQ(svm_predict(m, std::vector<double>{0.0, 0.0}).score, m.bias);
}

TEST(Svm, TieGoesToInsecure) {
    SvmModel m;
    m.train_size = 1;
    EXPECT_EQ(svm_predict(m, std::vector<double>{0.0}).label, 1);
}

TEST(Svm, DimensionMismatches) {
    Matrix K(2, 2);
    EXPECT_THROW((void)train_svm(K, std::vector<int>{1}, 1.0), DimensionMismatch);
    K(0, 0) = K(1, 1) = 1.0;
    const SvmModel m = train_svm(K, std::vector<int>{1, -1}, 1.0);
    EXPECT_THROW((void)svm_predict(m, std::vector<double>{1.0}), DimensionMismatch);
}

TEST(Svm, UpdateCapReportsNonConvergence) {
    const std::vector<std::array<double, 2>> x = {{1, 0}, {0, 1}, {1, 1}, {-1, 0}, {0, -1}, {0.2, 0.1}};
    const std::vector<int> y = {1, 1, -1, -1, 1, -1};
    SmoOptions options;
    options.max_updates = 1;
    const SvmModel m = train_svm(linear_gram(x), y, 1.0, options);
    EXPECT_FALSE(m.converged);
    EXPECT_EQ(m.updates, 1u);
}

TEST(Classifier, JsonRoundTripPredictsTheSame) {
    const auto samples = corpus::generate_synthetic(8, 3);
    std::vector<Cpg> graphs;
    std::vector<int> y;
    for (const auto& s : samples) {
        graphs.push_back(graphs::build_cpg(frontend::parse_source(s.code)));
        y.push_back(s.label == corpus::Label::Insecure ? 1 : -1);
    }
    LabelTable table;
    std::vector<WlHistogram> hist;
    for (const auto& g : graphs) hist.push_back(wl_relabel(g, 3, table));
    WlSvmClassifier c;
    c.svm = train_svm(gram_matrix(hist, true), y, 1.0);
    c.compression_table = table.signatures();
    for (std::size_t s : c.svm.support) c.support_histograms.push_back(hist[s]);
    const WlSvmClassifier back = wl_svm_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    for (const auto& g : graphs) {
        EXPECT_EQ(back.predict(g).score, c.predict(g).score);
    }
}
