#pragma once

// Weisfeiler-Lehman subtree kernel over code property graphs and a
// soft-margin SVM trained on its Gram matrix by SMO.

#include "vulnpipe/graphs.hpp"
#include "vulnpipe/matrix.hpp"

#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace vulnpipe::wl {

using graphs::Cpg;
using Label = std::uint32_t;

/// Signature -> compressed label. Shared across a dataset so histograms of
/// different graphs are comparable. Safe for concurrent use; ids follow the
/// order in which signatures are first seen.
class LabelTable {
public:
    LabelTable() = default;
    explicit LabelTable(std::vector<std::string> signatures);

    LabelTable(const LabelTable& other);
    LabelTable& operator=(const LabelTable& other);

    Label id_for(const std::string& signature);
    [[nodiscard]] std::size_t size() const;
    /// Signatures indexed by label.
    [[nodiscard]] std::vector<std::string> signatures() const;

private:
    mutable std::mutex mutex_;
    std::unordered_map<std::string, Label> ids_;
    std::vector<std::string> signatures_;
};

/// Per-iteration label counts, iterations 0..h.
struct WlHistogram {
    std::vector<std::map<Label, std::uint32_t>> iterations;

    [[nodiscard]] int h() const noexcept { return static_cast<int>(iterations.size()) - 1; }

    friend bool operator==(const WlHistogram&, const WlHistogram&) = default;
};

/// Iterative relabeling over the union multigraph viewed undirected. A
/// node's next label compresses its own label together with the sorted
/// multiset of (edge kind, neighbor label).
[[nodiscard]] WlHistogram wl_relabel(const Cpg& cpg, int h, LabelTable& table);

/// Sum over iterations of the count-vector dot products.
[[nodiscard]] double wl_dot(const WlHistogram& a, const WlHistogram& b);

/// wl_dot, divided by sqrt(k(a,a) k(b,b)) when normalized. Zero when either
/// graph has zero self-similarity.
[[nodiscard]] double wl_kernel(const WlHistogram& a, const WlHistogram& b, bool normalized);

[[nodiscard]] Matrix gram_matrix(const std::vector<WlHistogram>& histograms, bool normalized);
[[nodiscard]] Matrix gram_matrix(const std::vector<Cpg>& graphs, int h, bool normalized, LabelTable& table);

struct KernelConfig {
    int h = 3;
    bool normalized = true;
    double C = 1.0;

    friend bool operator==(const KernelConfig&, const KernelConfig&) = default;
};

struct SmoOptions {
    double tolerance = 1e-3;
    /// Pair-update cap; 0 selects 10 n^2.
    std::size_t max_updates = 0;
};

/// Labels are +1 (insecure) and -1 (secure).
struct SvmModel {
    std::vector<std::size_t> support;
    /// alpha_i * y_i for each support index.
    std::vector<double> coef;
    double bias = 0.0;
    double C = 1.0;
    std::size_t train_size = 0;
    /// Full dual vector, kept for diagnostics.
    std::vector<double> alpha;
    bool converged = true;
    double kkt_violation = 0.0;
    std::size_t updates = 0;
};

/// SMO with maximal-violating-pair selection. Stops when the KKT gap drops
/// below options.tolerance or the update cap is hit (converged = false).
[[nodiscard]] SvmModel train_svm(const Matrix& K, std::span<const int> labels, double C, SmoOptions options = {});

/// sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij
[[nodiscard]] double dual_objective(const Matrix& K, std::span<const int> labels, std::span<const double> alpha);

struct SvmPrediction {
    double score = 0.0;
    int label = 1;
};

/// `kernel_row` holds k(x_i, x) for every training sample i. Score 0 maps to
/// +1 (insecure). Throws DimensionMismatch on a wrong row length.
[[nodiscard]] SvmPrediction svm_predict(const SvmModel& model, std::span<const double> kernel_row);

/// Everything needed to classify a new graph: the SVM, its kernel settings,
/// the label table and the histograms of the support vectors.
struct WlSvmClassifier {
    KernelConfig kernel;
    SvmModel svm;
    std::vector<std::string> compression_table;
    std::vector<WlHistogram> support_histograms;

    [[nodiscard]] SvmPrediction predict(const Cpg& cpg) const;
};

[[nodiscard]] std::string to_json(const WlSvmClassifier& classifier);
[[nodiscard]] WlSvmClassifier wl_svm_from_json(std::string_view json);

}  // namespace vulnpipe::wl
