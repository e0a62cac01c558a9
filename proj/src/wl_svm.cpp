#include "vulnpipe/wl_svm.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace vulnpipe::wl {

namespace {

// Second-order term used when a pair's curvature vanishes.
constexpr double kTau = 1e-12;

}  // namespace

LabelTable::LabelTable(std::vector<std::string> signatures) : signatures_(std::move(signatures)) {
    for (std::size_t i = 0; i < signatures_.size(); ++i) {
        ids_.emplace(signatures_[i], static_cast<Label>(i));
    }
}

LabelTable::LabelTable(const LabelTable& other) {
    const std::lock_guard lock(other.mutex_);
    ids_ = other.ids_;
    signatures_ = other.signatures_;
}

LabelTable& LabelTable::operator=(const LabelTable& other) {
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        ids_ = other.ids_;
        signatures_ = other.signatures_;
    }
    return *this;
}

Label LabelTable::id_for(const std::string& signature) {
    const std::lock_guard lock(mutex_);
    const auto [it, inserted] = ids_.try_emplace(signature, static_cast<Label>(signatures_.size()));
    if (inserted) {
        signatures_.push_back(signature);
    }
    return it->second;
}

std::size_t LabelTable::size() const {
    const std::lock_guard lock(mutex_);
    return signatures_.size();
}

std::vector<std::string> LabelTable::signatures() const {
    const std::lock_guard lock(mutex_);
    return signatures_;
}

WlHistogram wl_relabel(const Cpg& cpg, int h, LabelTable& table) {
    const std::size_t n = cpg.nodes.size();
    std::vector<std::vector<std::pair<graphs::EdgeKind, std::size_t>>> adjacency(n);
    for (const graphs::CpgEdge& e : cpg.edges) {
        adjacency[e.src].emplace_back(e.kind, e.dst);
        if (e.src != e.dst) {
            adjacency[e.dst].emplace_back(e.kind, e.src);
        }
    }

    WlHistogram hist;
    std::vector<Label> labels(n);
    auto& first = hist.iterations.emplace_back();
    for (std::size_t v = 0; v < n; ++v) {
        labels[v] = table.id_for("0|" + std::string(frontend::to_string(cpg.nodes[v].kind)));
        ++first[labels[v]];
    }

    for (int it = 1; it <= h; ++it) {
        std::vector<Label> next(n);
        auto& counts = hist.iterations.emplace_back();
        for (std::size_t v = 0; v < n; ++v) {
            std::vector<std::pair<int, Label>> neighborhood;
            neighborhood.reserve(adjacency[v].size());
            for (const auto& [kind, u] : adjacency[v]) {
                neighborhood.emplace_back(static_cast<int>(kind), labels[u]);
            }
            std::ranges::sort(neighborhood);
            std::string signature = std::to_string(it) + "|" + std::to_string(labels[v]) + "|";
            for (const auto& [kind, label] : neighborhood) {
                signature += std::to_string(kind);
                signature += ':';
                signature += std::to_string(label);
                signature += ',';
            }
            next[v] = table.id_for(signature);
            ++counts[next[v]];
        }
        labels = std::move(next);
    }
    return hist;
}

double wl_dot(const WlHistogram& a, const WlHistogram& b) {
    double total = 0.0;
    const std::size_t iterations = std::min(a.iterations.size(), b.iterations.size());
    for (std::size_t it = 0; it < iterations; ++it) {
        const auto& small = a.iterations[it].size() <= b.iterations[it].size() ? a.iterations[it] : b.iterations[it];
        const auto& large = &small == &a.iterations[it] ? b.iterations[it] : a.iterations[it];
        for (const auto& [label, count] : small) {
            const auto found = large.find(label);
            if (found != large.end()) {
                total += static_cast<double>(count) * static_cast<double>(found->second);
            }
        }
    }
    return total;
}

double wl_kernel(const WlHistogram& a, const WlHistogram& b, bool normalized) {
    const double raw = wl_dot(a, b);
    if (!normalized) {
        return raw;
    }
    const double norm = std::sqrt(wl_dot(a, a) * wl_dot(b, b));
    return norm > 0.0 ? raw / norm : 0.0;
}

Matrix gram_matrix(const std::vector<WlHistogram>& histograms, bool normalized) {
    const std::size_t n = histograms.size();
    std::vector<double> self(n);
    for (std::size_t i = 0; i < n; ++i) {
        self[i] = wl_dot(histograms[i], histograms[i]);
    }
    Matrix K(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double value = wl_dot(histograms[i], histograms[j]);
            if (normalized) {
                const double norm = std::sqrt(self[i] * self[j]);
                value = norm > 0.0 ? value / norm : 0.0;
            }
            K(i, j) = value;
            K(j, i) = value;
        }
    }
    return K;
}

Matrix gram_matrix(const std::vector<Cpg>& graphs, int h, bool normalized, LabelTable& table) {
    std::vector<WlHistogram> histograms;
    histograms.reserve(graphs.size());
    for (const Cpg& g : graphs) {
        histograms.push_back(wl_relabel(g, h, table));
    }
    return gram_matrix(histograms, normalized);
}

double dual_objective(const Matrix& K, std::span<const int> labels, std::span<const double> alpha) {
    double linear = 0.0;
    double quadratic = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        linear += alpha[i];
        for (std::size_t j = 0; j < alpha.size(); ++j) {
            quadratic += alpha[i] * alpha[j] * labels[i] * labels[j] * K(i, j);
        }
    }
    return linear - 0.5 * quadratic;
}

SvmModel train_svm(const Matrix& K, std::span<const int> labels, double C, SmoOptions options) {
    const std::size_t n = labels.size();
    if (K.rows() != n || K.cols() != n) {
        throw DimensionMismatch("Gram matrix is " + std::to_string(K.rows()) + "x" + std::to_string(K.cols()) +
                                " but there are " + std::to_string(n) + " labels");
    }
    SvmModel model;
    model.C = C;
    model.train_size = n;
    model.alpha.assign(n, 0.0);
    if (n == 0) {
        return model;
    }
    if (std::ranges::all_of(labels, [&](int y) { return y == labels[0]; })) {
        // The equality constraint pins every alpha at zero.
        model.bias = labels[0] > 0 ? 1.0 : -1.0;
        return model;
    }

    const auto Q = [&](std::size_t i, std::size_t j) { return labels[i] * labels[j] * K(i, j); };
    std::vector<double>& alpha = model.alpha;
    std::vector<double> grad(n, -1.0);  // Q alpha - e
    const std::size_t cap = options.max_updates > 0 ? options.max_updates : 10 * n * n;

    const auto in_up = [&](std::size_t t) {
        return (labels[t] > 0 && alpha[t] < C) || (labels[t] < 0 && alpha[t] > 0.0);
    };
    const auto in_low = [&](std::size_t t) {
        return (labels[t] > 0 && alpha[t] > 0.0) || (labels[t] < 0 && alpha[t] < C);
    };

    const auto select = [&](std::size_t& i, std::size_t& j) {
        double gmax = -std::numeric_limits<double>::infinity();
        double gmin = std::numeric_limits<double>::infinity();
        i = n;
        j = n;
        for (std::size_t t = 0; t < n; ++t) {
            const double v = -labels[t] * grad[t];
            if (in_up(t) && v > gmax) {
                gmax = v;
                i = t;
            }
            if (in_low(t) && v < gmin) {
                gmin = v;
                j = t;
            }
        }
        return (i == n || j == n) ? 0.0 : gmax - gmin;
    };

    std::size_t i = 0;
    std::size_t j = 0;
    double gap = select(i, j);
    while (gap >= options.tolerance) {
        if (model.updates >= cap) {
            model.converged = false;
            break;
        }
        const double old_i = alpha[i];
        const double old_j = alpha[j];
        if (labels[i] != labels[j]) {
            double quad = Q(i, i) + Q(j, j) + 2.0 * Q(i, j);
            if (quad <= 0.0) {
                quad = kTau;
            }
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0.0) {
                if (alpha[j] < 0.0) {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if (diff > 0.0) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = C - diff;
                }
            } else if (alpha[j] > C) {
                alpha[j] = C;
                alpha[i] = C + diff;
            }
        } else {
            double quad = Q(i, i) + Q(j, j) - 2.0 * Q(i, j);
            if (quad <= 0.0) {
                quad = kTau;
            }
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > C) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = sum - C;
                }
            } else if (alpha[j] < 0.0) {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if (sum > C) {
                if (alpha[j] > C) {
                    alpha[j] = C;
                    alpha[i] = sum - C;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        const double di = alpha[i] - old_i;
        const double dj = alpha[j] - old_j;
        for (std::size_t t = 0; t < n; ++t) {
            grad[t] += Q(t, i) * di + Q(t, j) * dj;
        }
        ++model.updates;
        gap = select(i, j);
    }
    model.kkt_violation = std::max(gap, 0.0);

    // Bias from free vectors, or the midpoint of the feasible interval.
    double upper = std::numeric_limits<double>::infinity();
    double lower = -std::numeric_limits<double>::infinity();
    double free_sum = 0.0;
    std::size_t free_count = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = labels[t] * grad[t];
        if (alpha[t] >= C) {
            if (labels[t] < 0) {
                upper = std::min(upper, yg);
            } else {
                lower = std::max(lower, yg);
            }
        } else if (alpha[t] <= 0.0) {
            if (labels[t] > 0) {
                upper = std::min(upper, yg);
            } else {
                lower = std::max(lower, yg);
            }
        } else {
            ++free_count;
            free_sum += yg;
        }
    }
    const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count) : (upper + lower) / 2.0;
    model.bias = -rho;

    for (std::size_t t = 0; t < n; ++t) {
        if (alpha[t] > 0.0) {
            model.support.push_back(t);
            model.coef.push_back(alpha[t] * labels[t]);
        }
    }
    return model;
}

SvmPrediction svm_predict(const SvmModel& model, std::span<const double> kernel_row) {
    if (kernel_row.size() != model.train_size) {
        throw DimensionMismatch("kernel row has " + std::to_string(kernel_row.size()) + " entries, model expects " +
                                std::to_string(model.train_size));
    }
    SvmPrediction out;
    out.score = model.bias;
    for (std::size_t s = 0; s < model.support.size(); ++s) {
        out.score += model.coef[s] * kernel_row[model.support[s]];
    }
    out.label = out.score >= 0.0 ? 1 : -1;
    return out;
}

SvmPrediction WlSvmClassifier::predict(const Cpg& cpg) const {
    LabelTable table(compression_table);
    const WlHistogram hist = wl_relabel(cpg, kernel.h, table);
    std::vector<double> row(svm.train_size, 0.0);
    for (std::size_t s = 0; s < svm.support.size(); ++s) {
        row[svm.support[s]] = wl_kernel(support_histograms[s], hist, kernel.normalized);
    }
    return svm_predict(svm, row);
}

std::string to_json(const WlSvmClassifier& classifier) {
    nlohmann::ordered_json doc;
    doc["backend"] = "wl-svm";
    doc["h"] = classifier.kernel.h;
    doc["normalized"] = classifier.kernel.normalized;
    doc["C"] = classifier.kernel.C;
    doc["train_size"] = classifier.svm.train_size;
    doc["bias"] = classifier.svm.bias;
    doc["converged"] = classifier.svm.converged;
    nlohmann::ordered_json support = nlohmann::ordered_json::array();
    for (std::size_t s = 0; s < classifier.svm.support.size(); ++s) {
        nlohmann::ordered_json entry;
        entry["index"] = classifier.svm.support[s];
        entry["coef"] = classifier.svm.coef[s];
        nlohmann::ordered_json iterations = nlohmann::ordered_json::array();
        for (const auto& counts : classifier.support_histograms[s].iterations) {
            nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
            for (const auto& [label, count] : counts) {
                pairs.push_back({label, count});
            }
            iterations.push_back(std::move(pairs));
        }
        entry["histogram"] = std::move(iterations);
        support.push_back(std::move(entry));
    }
    doc["support"] = std::move(support);
    doc["compression_table"] = classifier.compression_table;
    return doc.dump() + "\n";
}

WlSvmClassifier wl_svm_from_json(std::string_view json) {
    const nlohmann::json doc = nlohmann::json::parse(json);
    if (doc.value("backend", std::string()) != "wl-svm") {
        throw CheckpointError("not a wl-svm model");
    }
    WlSvmClassifier out;
    out.kernel.h = doc.at("h").get<int>();
    out.kernel.normalized = doc.at("normalized").get<bool>();
    out.kernel.C = doc.at("C").get<double>();
    out.svm.C = out.kernel.C;
    out.svm.train_size = doc.at("train_size").get<std::size_t>();
    out.svm.bias = doc.at("bias").get<double>();
    out.svm.converged = doc.at("converged").get<bool>();
    for (const auto& entry : doc.at("support")) {
        const auto index = entry.at("index").get<std::size_t>();
        if (index >= out.svm.train_size) {
            throw CheckpointError("support index out of range");
        }
        out.svm.support.push_back(index);
        out.svm.coef.push_back(entry.at("coef").get<double>());
        WlHistogram hist;
        for (const auto& pairs : entry.at("histogram")) {
            auto& counts = hist.iterations.emplace_back();
            for (const auto& pair : pairs) {
                counts[pair.at(0).get<Label>()] = pair.at(1).get<std::uint32_t>();
            }
        }
        out.support_histograms.push_back(std::move(hist));
    }
    out.compression_table = doc.at("compression_table").get<std::vector<std::string>>();
    return out;
}

}  // namespace vulnpipe::wl
