#include "vulnpipe/cli_eval.hpp"
#include "vulnpipe/corpus.hpp"
#include "vulnpipe/util.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

using namespace vulnpipe;

constexpr int kExitFailure = 1;
constexpr int kExitInput = 2;
constexpr int kExitIo = 3;
constexpr int kExitDegenerate = 4;

int fail(int code, const std::string& message) {
    std::cerr << "error: " << message << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-based vulnerability detection pipeline"};
    app.require_subcommand(1);

    std::size_t pairs = 300;
    std::uint64_t seed = 7;
    std::string out;
    auto* gen = app.add_subcommand("gen-corpus", "Write a synthetic corpus of insecure/secure pairs");
    gen->add_option("--pairs", pairs, "Number of pairs")->required()->check(CLI::PositiveNumber);
    gen->add_option("--seed", seed, "Generator seed")->required();
    gen->add_option("--out", out, "Output NDJSON file")->required();

    std::string corpus_path;
    std::string format = "dot";
    auto* exp = app.add_subcommand("export-graphs", "Write one code property graph per sample");
    exp->add_option("--corpus", corpus_path, "Corpus NDJSON file")->required();
    std::string config_path;
    exp->add_option("--format", format, "dot, json, or psan (encoded tensor dump)")
        ->check(CLI::IsMember({"dot", "json", "psan"}));
    exp->add_option("--config", config_path, "JSON config; its encoder section shapes psan dumps");
    exp->add_option("--out", out, "Output directory")->required();

    std::string backend = "cnn";
    bool strict = false;
    bool quiet = false;
    auto* train = app.add_subcommand("train", "Split, train and evaluate on the test split");
    train->add_option("--corpus", corpus_path, "Corpus NDJSON file")->required();
    train->add_option("--backend", backend, "cnn or wl-svm");
    train->add_option("--seed", seed, "Split, initialization and shuffling seed");
    train->add_option("--config", config_path, "JSON config");
    train->add_option("--out", out, "Output directory")->required();
    train->add_flag("--strict", strict, "Exit with code 4 when a split holds a single class");
    train->add_flag("--quiet", quiet, "No progress output");

    std::string model_dir;
    auto* ev = app.add_subcommand("eval", "Score a trained model on a corpus");
    ev->add_option("--model", model_dir, "Directory written by train")->required();
    ev->add_option("--corpus", corpus_path, "Corpus NDJSON file")->required();
    ev->add_option("--out", out, "Optional JSON report path");

    std::string report_a;
    std::string report_b;
    auto* cmp = app.add_subcommand("compare", "Per-metric deltas between two reports (A - B)");
    cmp->add_option("a", report_a, "Report A")->required();
    cmp->add_option("b", report_b, "Report B")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    try {
        if (*gen) {
            const auto samples = corpus::generate_synthetic(pairs, seed);
            write_file(out, corpus::to_ndjson(samples));
            std::cout << "wrote " << samples.size() << " samples to " << out << "\n";
        } else if (*exp) {
            const auto samples = corpus::load_corpus(corpus_path);
            const eval::GraphFormat f = format == "dot"    ? eval::GraphFormat::Dot
                                        : format == "json" ? eval::GraphFormat::Json
                                                           : eval::GraphFormat::Psan;
            const eval::PipelineConfig config =
                config_path.empty() ? eval::PipelineConfig{} : eval::config_from_json(read_file(config_path));
            const auto n = eval::export_graphs(samples, out, f, config.encoder);
            std::cout << "wrote " << n << " graphs to " << out << "\n";
        } else if (*train) {
            eval::RunOptions options;
            options.backend = eval::backend_from_string(backend);
            options.seed = seed;
            if (!config_path.empty()) {
                options.config = eval::config_from_json(read_file(config_path));
            }
            options.strict = strict;
            options.out_dir = out;
            if (!quiet) {
                options.log = [](const std::string& line) { std::cerr << line << "\n"; };
            }
            const eval::Report report = eval::run_pipeline(corpus_path, options);
            std::cout << eval::report_to_text(report);
        } else if (*ev) {
            const auto samples = corpus::load_corpus(corpus_path);
            const eval::Report report = eval::evaluate_model(model_dir, samples);
            if (!out.empty()) {
                write_file(out, eval::report_to_json(report));
            }
            std::cout << eval::report_to_text(report);
        } else if (*cmp) {
            const eval::Report a = eval::report_from_json(read_file(report_a));
            const eval::Report b = eval::report_from_json(read_file(report_b));
            std::cout << eval::compare_to_text(a, b, eval::compare(a, b));
        }
    } catch (const IoError& e) {
        return fail(kExitIo, e.what());
    } catch (const eval::DegenerateData& e) {
        return fail(kExitDegenerate, e.what());
    } catch (const Error& e) {
        return fail(kExitInput, e.what());
    } catch (const std::exception& e) {
        return fail(kExitFailure, e.what());
    }
    return 0;
}
