#pragma once

// End-to-end orchestration (corpus -> graphs -> encoding -> training ->
// evaluation), classification metrics and the report format.

#include "vulnpipe/cnn.hpp"
#include "vulnpipe/corpus.hpp"
#include "vulnpipe/error.hpp"
#include "vulnpipe/wl_svm.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vulnpipe::eval {

/// Raised when a split holds a single class and strict mode asks to abort.
class DegenerateData : public Error {
public:
    using Error::Error;
};

/// Positive class is insecure.
struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    [[nodiscard]] std::uint64_t total() const noexcept { return tp + fp + fn + tn; }

    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// A rate whose denominator was zero is reported as 0 and flagged.
struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    bool precision_degenerate = false;
    bool recall_degenerate = false;
    bool f1_degenerate = false;
    bool accuracy_degenerate = false;
};

[[nodiscard]] Metrics metrics(const ConfusionCounts& counts) noexcept;

/// Counts with the secure class taken as positive.
[[nodiscard]] ConfusionCounts swap_classes(const ConfusionCounts& counts) noexcept;

enum class Backend : std::uint8_t { Cnn, WlSvm };

[[nodiscard]] std::string_view to_string(Backend backend) noexcept;
/// Accepts "cnn", "wl-svm" and "wl_svm". Throws ConfigError.
[[nodiscard]] Backend backend_from_string(std::string_view name);

struct PipelineConfig {
    patchy::EncoderConfig encoder;
    cnn::TrainConfig train;
    wl::KernelConfig kernel;
    corpus::Ratios ratios;

    friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// {"encoder":{...},"train":{...},"kernel":{...},"ratios":[..]}; every
/// section and key is optional. Throws ConfigError on unknown keys or bad
/// values.
[[nodiscard]] PipelineConfig config_from_json(std::string_view json);
[[nodiscard]] std::string config_to_json(const PipelineConfig& config);

struct ClassRow {
    std::string name;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;
};

struct Report {
    std::string backend;
    std::string model_id;
    std::string config_digest;
    std::string split_digest;
    ConfusionCounts counts;
    /// Secure, Insecure, Overall (macro precision and recall).
    std::vector<ClassRow> rows;
    double accuracy = 0.0;
    bool degenerate_metrics = false;
    bool degenerate_data = false;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    /// Wall clock of the run. Shown in the text table only, so the JSON
    /// report stays byte-reproducible.
    double runtime_seconds = 0.0;
};

/// Fills rows, accuracy and the degenerate flag from the counts.
void fill_metrics(Report& report);

[[nodiscard]] std::string report_to_json(const Report& report);
[[nodiscard]] Report report_from_json(std::string_view json);
[[nodiscard]] std::string report_to_text(const Report& report);

struct RunOptions {
    Backend backend = Backend::Cnn;
    std::uint64_t seed = 7;
    PipelineConfig config;
    /// Abort with DegenerateData instead of reporting.
    bool strict = false;
    /// Output directory; empty writes nothing.
    std::string out_dir;
    /// Optional progress sink.
    std::function<void(const std::string&)> log;
};

/// Splits, trains and evaluates on the test split. Writes report.json,
/// report.txt, split.json and model.json into out_dir.
[[nodiscard]] Report run_pipeline(std::span<const corpus::Sample> samples, const RunOptions& options);
[[nodiscard]] Report run_pipeline(const std::string& corpus_path, const RunOptions& options);

/// Scores a trained model directory on every sample of a corpus.
[[nodiscard]] Report evaluate_model(const std::string& model_dir, std::span<const corpus::Sample> samples);

struct Delta {
    std::string metric;
    double a = 0.0;
    double b = 0.0;
    double delta = 0.0;  ///< a - b
};

/// Throws SplitMismatch unless both reports come from the same split.
[[nodiscard]] std::vector<Delta> compare(const Report& a, const Report& b);
[[nodiscard]] std::string compare_to_text(const Report& a, const Report& b, const std::vector<Delta>& deltas);

/// Psan writes the encoded field tensor dump instead of the graph.
enum class GraphFormat : std::uint8_t { Dot, Json, Psan };

/// One file per sample, named after its id. Returns the number written.
/// Throws IoError naming the path.
std::size_t export_graphs(std::span<const corpus::Sample> samples, const std::string& out_dir, GraphFormat format,
                          const patchy::EncoderConfig& encoder = {});

/// VULN_PIPE_THREADS when set, else the hardware concurrency. Throws
/// ConfigError when the variable is not a positive integer.
[[nodiscard]] std::size_t worker_count();

/// CPGs of every sample, built on up to worker_count() threads. Output order
/// follows the input.
[[nodiscard]] std::vector<graphs::Cpg> build_graphs(std::span<const corpus::Sample> samples);

/// Class target of a sample for the chosen head.
[[nodiscard]] int target_of(const corpus::Sample& sample, bool type_head) noexcept;

}  // namespace vulnpipe::eval
