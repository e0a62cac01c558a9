#include "vulnpipe/cli_eval.hpp"

#include "vulnpipe/frontend.hpp"
#include "vulnpipe/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <map>
#include <set>
#include <thread>

namespace vulnpipe::eval {

namespace {

using ojson = nlohmann::ordered_json;

double ratio(std::uint64_t num, std::uint64_t den, bool& degenerate) {
    if (den == 0) {
        degenerate = true;
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r, bool& degenerate) {
    if (p + r == 0.0) {
        degenerate = true;
        return 0.0;
    }
    return 2.0 * p * r / (p + r);
}

// Runs fn(i) for i in [0, n) on up to worker_count() threads. The exception
// of the lowest failing index is rethrown so errors are reproducible.
template <typename Fn>
void parallel_for(std::size_t n, Fn fn) {
    const std::size_t workers = std::min(worker_count(), std::max<std::size_t>(n, 1));
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < workers; ++t) {
            pool.emplace_back(work);
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

template <typename T>
T get_checked(const nlohmann::json& section, const char* key, const std::string& where) {
    try {
        return section.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

void check_keys(const nlohmann::json& section, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!section.is_object()) {
        throw ConfigError(where + " must be an object");
    }
    for (const auto& [key, value] : section.items()) {
        if (std::ranges::none_of(allowed, [&](const char* a) { return key == a; })) {
            throw ConfigError("unknown config key " + where + "." + key);
        }
    }
}

std::size_t get_size(const nlohmann::json& section, const char* key, const std::string& where) {
    const auto& v = section.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw ConfigError(where + "." + key + " must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

std::string fmt(double value, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, value);
    return buf;
}

std::string pad(std::string text, std::size_t width, bool left = false) {
    if (text.size() >= width) {
        return text;
    }
    const std::string fill(width - text.size(), ' ');
    return left ? text + fill : fill + text;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw IoError("cannot create directory " + dir + (ec ? ": " + ec.message() : ""));
    }
}

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

// File-system safe version of a sample id.
std::string file_stem(const std::string& id) {
    std::string out = id;
    for (char& c : out) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                        c == '_' || c == '.';
        if (!ok) {
            c = '_';
        }
    }
    if (out.empty() || out == "." || out == "..") {
        out = "_" + out;
    }
    return out;
}

std::vector<const corpus::Sample*> select(std::span<const corpus::Sample> samples,
                                          const std::vector<std::string>& ids) {
    std::map<std::string, const corpus::Sample*> by_id;
    for (const corpus::Sample& s : samples) {
        by_id.emplace(s.id, &s);
    }
    std::vector<const corpus::Sample*> out;
    out.reserve(ids.size());
    for (const std::string& id : ids) {
        out.push_back(by_id.at(id));
    }
    return out;
}

bool predicted_insecure(int predicted_class) { return predicted_class != cnn::kSecure; }

void tally(ConfusionCounts& counts, bool actual_insecure, bool predicted) {
    if (actual_insecure) {
        ++(predicted ? counts.tp : counts.fn);
    } else {
        ++(predicted ? counts.fp : counts.tn);
    }
}

struct Encoded {
    std::vector<graphs::Cpg> graphs;
    std::vector<patchy::FieldTensor> tensors;
};

cnn::Dataset dataset(const std::vector<const corpus::Sample*>& members, const std::map<std::string, std::size_t>& index,
                     const std::vector<patchy::FieldTensor>& tensors, bool type_head) {
    cnn::Dataset d;
    for (const corpus::Sample* s : members) {
        d.tensors.push_back(tensors[index.at(s->id)]);
        d.targets.push_back(target_of(*s, type_head));
    }
    return d;
}

std::vector<patchy::FieldTensor> encode_all(const std::vector<graphs::Cpg>& cpgs, const patchy::EncoderConfig& enc) {
    std::vector<patchy::FieldTensor> tensors(cpgs.size());
    parallel_for(cpgs.size(), [&](std::size_t i) { tensors[i] = patchy::build_tensor(cpgs[i], enc); });
    return tensors;
}

std::string run_digest(const RunOptions& options) {
    ojson doc;
    doc["backend"] = to_string(options.backend);
    doc["seed"] = options.seed;
    doc["config"] = ojson::parse(config_to_json(options.config));
    return sha256_hex(doc.dump());
}

bool single_class(const std::vector<const corpus::Sample*>& members) {
    return std::ranges::all_of(members, [&](const corpus::Sample* s) { return s->label == members.front()->label; });
}

}  // namespace

Metrics metrics(const ConfusionCounts& c) noexcept {
    Metrics m;
    m.precision = ratio(c.tp, c.tp + c.fp, m.precision_degenerate);
    m.recall = ratio(c.tp, c.tp + c.fn, m.recall_degenerate);
    m.f1 = harmonic(m.precision, m.recall, m.f1_degenerate);
    m.accuracy = ratio(c.tp + c.tn, c.total(), m.accuracy_degenerate);
    return m;
}

ConfusionCounts swap_classes(const ConfusionCounts& c) noexcept { return {c.tn, c.fn, c.fp, c.tp}; }

std::string_view to_string(Backend backend) noexcept { return backend == Backend::Cnn ? "cnn" : "wl-svm"; }

Backend backend_from_string(std::string_view name) {
    if (name == "cnn") return Backend::Cnn;
    if (name == "wl-svm" || name == "wl_svm") return Backend::WlSvm;
    throw ConfigError("unknown backend '" + std::string(name) + "' (expected cnn or wl-svm)");
}

PipelineConfig config_from_json(std::string_view json) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(doc, "config", {"encoder", "train", "kernel", "ratios"});
    PipelineConfig cfg;
    if (doc.contains("encoder")) {
        const auto& e = doc["encoder"];
        check_keys(e, "encoder", {"w", "k", "s", "h_rank", "d"});
        if (e.contains("w")) cfg.encoder.w = get_size(e, "w", "encoder");
        if (e.contains("k")) cfg.encoder.k = get_size(e, "k", "encoder");
        if (e.contains("s")) cfg.encoder.s = get_size(e, "s", "encoder");
        if (e.contains("h_rank")) cfg.encoder.h_rank = static_cast<int>(get_size(e, "h_rank", "encoder"));
        if (e.contains("d")) cfg.encoder.d = get_size(e, "d", "encoder");
    }
    if (doc.contains("train")) {
        const auto& t = doc["train"];
        check_keys(t, "train", {"learning_rate", "max_epochs", "batch_size", "patience", "filters", "type_head"});
        if (t.contains("learning_rate")) cfg.train.learning_rate = get_checked<double>(t, "learning_rate", "train");
        if (t.contains("max_epochs")) cfg.train.max_epochs = get_size(t, "max_epochs", "train");
        if (t.contains("batch_size")) cfg.train.batch_size = get_size(t, "batch_size", "train");
        if (t.contains("patience")) cfg.train.patience = get_size(t, "patience", "train");
        if (t.contains("filters")) cfg.train.filters = get_size(t, "filters", "train");
        if (t.contains("type_head")) cfg.train.type_head = get_checked<bool>(t, "type_head", "train");
    }
    if (doc.contains("kernel")) {
        const auto& k = doc["kernel"];
        check_keys(k, "kernel", {"h", "normalized", "C"});
        if (k.contains("h")) cfg.kernel.h = static_cast<int>(get_size(k, "h", "kernel"));
        if (k.contains("normalized")) cfg.kernel.normalized = get_checked<bool>(k, "normalized", "kernel");
        if (k.contains("C")) cfg.kernel.C = get_checked<double>(k, "C", "kernel");
    }
    if (doc.contains("ratios")) {
        const auto r = get_checked<std::vector<double>>(doc, "ratios", "config");
        if (r.size() != 3) {
            throw ConfigError("config.ratios must hold three numbers");
        }
        cfg.ratios = {r[0], r[1], r[2]};
    }
    cfg.encoder.validate();
    cfg.train.validate();
    if (!(cfg.kernel.C > 0.0)) {
        throw ConfigError("kernel.C must be positive");
    }
    return cfg;
}

std::string config_to_json(const PipelineConfig& c) {
    ojson doc;
    doc["encoder"] = {{"w", c.encoder.w}, {"k", c.encoder.k}, {"s", c.encoder.s}, {"h_rank", c.encoder.h_rank},
                      {"d", c.encoder.d}};
    doc["train"] = {{"learning_rate", c.train.learning_rate}, {"max_epochs", c.train.max_epochs},
                    {"batch_size", c.train.batch_size},       {"patience", c.train.patience},
                    {"filters", c.train.filters},             {"type_head", c.train.type_head}};
    doc["kernel"] = {{"h", c.kernel.h}, {"normalized", c.kernel.normalized}, {"C", c.kernel.C}};
    doc["ratios"] = {c.ratios.train, c.ratios.validation, c.ratios.test};
    return doc.dump(2) + "\n";
}

void fill_metrics(Report& report) {
    const Metrics insecure = metrics(report.counts);
    const Metrics secure = metrics(swap_classes(report.counts));
    report.rows.clear();
    report.rows.push_back({"Secure", secure.precision, secure.recall, secure.f1, report.counts.tn + report.counts.fp});
    report.rows.push_back(
        {"Insecure", insecure.precision, insecure.recall, insecure.f1, report.counts.tp + report.counts.fn});
    bool overall_degenerate = false;
    const double p = (secure.precision + insecure.precision) / 2.0;
    const double r = (secure.recall + insecure.recall) / 2.0;
    report.rows.push_back({"Overall", p, r, harmonic(p, r, overall_degenerate), report.counts.total()});
    report.accuracy = insecure.accuracy;
    report.degenerate_metrics = overall_degenerate || insecure.precision_degenerate || insecure.recall_degenerate ||
                                insecure.f1_degenerate || secure.precision_degenerate || secure.recall_degenerate ||
                                secure.f1_degenerate || insecure.accuracy_degenerate;
}

std::string report_to_json(const Report& r) {
    ojson doc;
    doc["backend"] = r.backend;
    doc["model_id"] = r.model_id;
    doc["config_digest"] = r.config_digest;
    doc["split_digest"] = r.split_digest;
    doc["counts"] = {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}};
    ojson rows = ojson::array();
    for (const ClassRow& row : r.rows) {
        rows.push_back({{"class", row.name},
                        {"precision", row.precision},
                        {"recall", row.recall},
                        {"f1", row.f1},
                        {"support", row.support}});
    }
    doc["rows"] = rows;
    doc["accuracy"] = r.accuracy;
    doc["degenerate_metrics"] = r.degenerate_metrics;
    doc["degenerate_data"] = r.degenerate_data;
    doc["epochs_run"] = r.epochs_run;
    doc["best_epoch"] = r.best_epoch;
    return doc.dump(2) + "\n";
}

Report report_from_json(std::string_view json) {
    try {
        const nlohmann::json doc = nlohmann::json::parse(json);
        Report r;
        r.backend = doc.at("backend").get<std::string>();
        r.model_id = doc.at("model_id").get<std::string>();
        r.config_digest = doc.at("config_digest").get<std::string>();
        r.split_digest = doc.at("split_digest").get<std::string>();
        const auto& c = doc.at("counts");
        r.counts = {c.at("tp").get<std::uint64_t>(), c.at("fp").get<std::uint64_t>(), c.at("fn").get<std::uint64_t>(),
                    c.at("tn").get<std::uint64_t>()};
        for (const auto& row : doc.at("rows")) {
            r.rows.push_back({row.at("class").get<std::string>(), row.at("precision").get<double>(),
                              row.at("recall").get<double>(), row.at("f1").get<double>(),
                              row.at("support").get<std::uint64_t>()});
        }
        r.accuracy = doc.at("accuracy").get<double>();
        r.degenerate_metrics = doc.at("degenerate_metrics").get<bool>();
        r.degenerate_data = doc.at("degenerate_data").get<bool>();
        r.epochs_run = doc.at("epochs_run").get<std::size_t>();
        r.best_epoch = doc.at("best_epoch").get<std::size_t>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed report: ") + e.what());
    }
}

std::string report_to_text(const Report& r) {
    std::string out;
    out += "Model    " + r.model_id + "\n";
    out += "Backend  " + r.backend + "\n";
    out += "Config   " + r.config_digest + "\n";
    out += "Split    " + r.split_digest + "\n\n";
    out += pad("Class", 10, true) + pad("Precision", 11) + pad("Recall", 9) + pad("F1-Score", 10) + pad("Support", 9) +
           "\n";
    for (const ClassRow& row : r.rows) {
        out += pad(row.name, 10, true) + pad(fmt(row.precision * 100.0, 1) + "%", 11) +
               pad(fmt(row.recall * 100.0, 1) + "%", 9) + pad(fmt(row.f1 * 100.0, 1) + "%", 10) +
               pad(std::to_string(row.support), 9) + "\n";
    }
    out += "\nAccuracy " + fmt(r.accuracy * 100.0, 1) + "%\n";
    out += "Counts   tp=" + std::to_string(r.counts.tp) + " fp=" + std::to_string(r.counts.fp) +
           " fn=" + std::to_string(r.counts.fn) + " tn=" + std::to_string(r.counts.tn) + "\n";
    if (r.epochs_run > 0) {
        out += "Epochs   " + std::to_string(r.epochs_run) + " (best " + std::to_string(r.best_epoch) + ")\n";
    }
    if (r.degenerate_metrics) {
        out += "Note     some rates had a zero denominator and are reported as 0\n";
    }
    if (r.degenerate_data) {
        out += "Note     a split held a single class\n";
    }
    out += "Runtime  " + fmt(r.runtime_seconds, 2) + " s\n";
    return out;
}

std::size_t worker_count() {
    if (const char* env = std::getenv("VULN_PIPE_THREADS"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        const long long n = std::strtoll(env, &end, 10);
        if (*end != '\0' || n <= 0) {
            throw ConfigError(std::string("VULN_PIPE_THREADS must be a positive integer, got '") + env + "'");
        }
        return static_cast<std::size_t>(n);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<graphs::Cpg> build_graphs(std::span<const corpus::Sample> samples) {
    std::vector<graphs::Cpg> out(samples.size());
    parallel_for(samples.size(),
                 [&](std::size_t i) { out[i] = graphs::build_cpg(frontend::parse_source(samples[i].code)); });
    return out;
}

int target_of(const corpus::Sample& sample, bool type_head) noexcept {
    if (sample.label == corpus::Label::Secure) {
        return cnn::kSecure;
    }
    if (!type_head || !sample.vuln_type) {
        return cnn::kInsecure;
    }
    return 1 + static_cast<int>(*sample.vuln_type);
}

Report run_pipeline(std::span<const corpus::Sample> samples, const RunOptions& options) {
    const auto started = std::chrono::steady_clock::now();
    const auto log = [&](const std::string& line) {
        if (options.log) options.log(line);
    };
    const PipelineConfig& cfg = options.config;
    cfg.encoder.validate();
    cfg.train.validate();

    const corpus::CorpusSplit parts = corpus::split(samples, options.seed, cfg.ratios);
    const std::string manifest = corpus::manifest_to_json(parts);
    const auto train_members = select(samples, parts.train);
    const auto val_members = select(samples, parts.validation);
    const auto test_members = select(samples, parts.test);
    log("split " + std::to_string(train_members.size()) + "/" + std::to_string(val_members.size()) + "/" +
        std::to_string(test_members.size()));

    Report report;
    report.backend = std::string(to_string(options.backend));
    report.config_digest = run_digest(options);
    report.split_digest = sha256_hex(manifest);
    report.degenerate_data = single_class(train_members) || single_class(val_members) || single_class(test_members);
    if (report.degenerate_data && options.strict) {
        throw DegenerateData("a split holds a single class");
    }

    const std::vector<graphs::Cpg> cpgs = build_graphs(samples);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        index.emplace(samples[i].id, i);
    }
    log("built " + std::to_string(cpgs.size()) + " graphs");

    std::string model_json;
    if (options.backend == Backend::Cnn) {
        const std::vector<patchy::FieldTensor> tensors = encode_all(cpgs, cfg.encoder);
        const bool type_head = cfg.train.type_head;
        const cnn::Dataset train_set = dataset(train_members, index, tensors, type_head);
        const cnn::Dataset val_set = dataset(val_members, index, tensors, type_head);
        cnn::TrainConfig tc = cfg.train;
        tc.seed = options.seed;
        const cnn::ModelParams init = cnn::ModelParams::random(
            tc.filters, cfg.encoder.w, cfg.encoder.k * cfg.encoder.d, type_head ? 4 : 2, options.seed);
        const cnn::TrainResult result = cnn::train(init, train_set, val_set, tc);
        report.epochs_run = result.history.size();
        report.best_epoch = result.best_epoch;
        log("trained " + std::to_string(report.epochs_run) + " epochs, best " + std::to_string(report.best_epoch));
        for (const corpus::Sample* s : test_members) {
            const cnn::Prediction p = cnn::predict(result.params, tensors[index.at(s->id)]);
            tally(report.counts, s->label == corpus::Label::Insecure, predicted_insecure(p.label));
        }
        model_json = cnn::checkpoint_to_json(result.params, cfg.encoder);
    } else {
        wl::LabelTable table;
        std::vector<wl::WlHistogram> train_hist;
        std::vector<int> labels;
        for (const corpus::Sample* s : train_members) {
            train_hist.push_back(wl::wl_relabel(cpgs[index.at(s->id)], cfg.kernel.h, table));
            labels.push_back(s->label == corpus::Label::Insecure ? 1 : -1);
        }
        const Matrix K = wl::gram_matrix(train_hist, cfg.kernel.normalized);
        wl::WlSvmClassifier classifier;
        classifier.kernel = cfg.kernel;
        classifier.svm = wl::train_svm(K, labels, cfg.kernel.C);
        classifier.compression_table = table.signatures();
        for (std::size_t s : classifier.svm.support) {
            classifier.support_histograms.push_back(train_hist[s]);
        }
        log(std::string("smo ") + (classifier.svm.converged ? "converged" : "hit the update cap") + " after " +
            std::to_string(classifier.svm.updates) + " updates, " + std::to_string(classifier.svm.support.size()) +
            " support vectors");
        std::vector<int> predicted(test_members.size());
        parallel_for(test_members.size(), [&](std::size_t t) {
            predicted[t] = classifier.predict(cpgs[index.at(test_members[t]->id)]).label;
        });
        for (std::size_t t = 0; t < test_members.size(); ++t) {
            tally(report.counts, test_members[t]->label == corpus::Label::Insecure, predicted[t] == 1);
        }
        model_json = wl::to_json(classifier);
    }
    report.model_id = report.backend + "-" + sha256_hex(model_json).substr(0, 12);
    fill_metrics(report);
    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    if (!options.out_dir.empty()) {
        ensure_dir(options.out_dir);
        write_file(join(options.out_dir, "split.json"), manifest);
        write_file(join(options.out_dir, "model.json"), model_json);
        write_file(join(options.out_dir, "config.json"), config_to_json(cfg));
        write_file(join(options.out_dir, "report.json"), report_to_json(report));
        write_file(join(options.out_dir, "report.txt"), report_to_text(report));
    }
    return report;
}

Report run_pipeline(const std::string& corpus_path, const RunOptions& options) {
    const std::vector<corpus::Sample> samples = corpus::load_corpus(corpus_path);
    return run_pipeline(std::span<const corpus::Sample>(samples), options);
}

Report evaluate_model(const std::string& model_dir, std::span<const corpus::Sample> samples) {
    const auto started = std::chrono::steady_clock::now();
    const std::string model_json = read_file(join(model_dir, "model.json"));
    std::string backend;
    try {
        backend = nlohmann::json::parse(model_json).at("backend").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("model.json: ") + e.what());
    }

    Report report;
    report.backend = backend;
    report.model_id = backend + "-" + sha256_hex(model_json).substr(0, 12);
    report.config_digest = sha256_hex(model_json);
    std::string ids;
    for (const corpus::Sample& s : samples) {
        ids += s.id;
        ids += '\n';
    }
    report.split_digest = sha256_hex("eval\n" + ids);

    const std::vector<graphs::Cpg> cpgs = build_graphs(samples);
    std::vector<bool> predicted(samples.size());
    if (backend_from_string(backend) == Backend::Cnn) {
        const patchy::EncoderConfig enc = cnn::checkpoint_encoder(model_json);
        const cnn::ModelParams params = cnn::checkpoint_from_json(model_json, enc);
        parallel_for(samples.size(), [&](std::size_t i) {
            predicted[i] = predicted_insecure(cnn::predict(params, patchy::build_tensor(cpgs[i], enc)).label);
        });
    } else {
        const wl::WlSvmClassifier classifier = wl::wl_svm_from_json(model_json);
        std::vector<int> labels(samples.size());
        parallel_for(samples.size(), [&](std::size_t i) { labels[i] = classifier.predict(cpgs[i]).label; });
        for (std::size_t i = 0; i < samples.size(); ++i) {
            predicted[i] = labels[i] == 1;
        }
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        tally(report.counts, samples[i].label == corpus::Label::Insecure, predicted[i]);
    }
    fill_metrics(report);
    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

std::vector<Delta> compare(const Report& a, const Report& b) {
    if (a.split_digest != b.split_digest) {
        throw SplitMismatch("reports come from different splits (" + a.split_digest.substr(0, 12) + " vs " +
                            b.split_digest.substr(0, 12) + ")");
    }
    if (a.rows.size() != b.rows.size()) {
        throw SplitMismatch("reports have different row layouts");
    }
    std::vector<Delta> out;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        const ClassRow& ra = a.rows[i];
        const ClassRow& rb = b.rows[i];
        out.push_back({ra.name + " precision", ra.precision, rb.precision, ra.precision - rb.precision});
        out.push_back({ra.name + " recall", ra.recall, rb.recall, ra.recall - rb.recall});
        out.push_back({ra.name + " f1", ra.f1, rb.f1, ra.f1 - rb.f1});
    }
    out.push_back({"accuracy", a.accuracy, b.accuracy, a.accuracy - b.accuracy});
    return out;
}

std::string compare_to_text(const Report& a, const Report& b, const std::vector<Delta>& deltas) {
    std::string out = "A  " + a.model_id + "\nB  " + b.model_id + "\n\n";
    out += pad("Metric", 20, true) + pad("A", 9) + pad("B", 9) + pad("A - B", 10) + "\n";
    for (const Delta& d : deltas) {
        const std::string sign = d.delta > 0.0 ? "+" : "";
        out += pad(d.metric, 20, true) + pad(fmt(d.a * 100.0, 1) + "%", 9) + pad(fmt(d.b * 100.0, 1) + "%", 9) +
               pad(sign + fmt(d.delta * 100.0, 1), 10) + "\n";
    }
    return out;
}

std::size_t export_graphs(std::span<const corpus::Sample> samples, const std::string& out_dir, GraphFormat format,
                          const patchy::EncoderConfig& encoder) {
    encoder.validate();
    ensure_dir(out_dir);
    const std::vector<graphs::Cpg> cpgs = build_graphs(samples);
    std::set<std::string> used;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::string stem = file_stem(samples[i].id);
        while (!used.insert(stem).second) {
            stem += "_";
        }
        switch (format) {
        case GraphFormat::Dot: write_file(join(out_dir, stem + ".dot"), graphs::cpg_to_dot(cpgs[i])); break;
        case GraphFormat::Json: write_file(join(out_dir, stem + ".json"), graphs::cpg_to_json(cpgs[i])); break;
        case GraphFormat::Psan:
            write_file(join(out_dir, stem + ".psan"), patchy::dump_tensor(patchy::build_tensor(cpgs[i], encoder)));
            break;
        }
    }
    return samples.size();
}

}  // namespace vulnpipe::eval
