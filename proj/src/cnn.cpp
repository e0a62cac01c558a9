#include "vulnpipe/cnn.hpp"

#include "vulnpipe/util.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

namespace vulnpipe::cnn {

namespace {

void check_shape(const ModelParams& params, const FieldTensor& tensor) {
    if (tensor.w != params.width || tensor.k * tensor.d != params.field_size ||
        tensor.values.size() != tensor.w * tensor.k * tensor.d || tensor.mask.size() != tensor.w) {
        throw ShapeMismatch("tensor " + std::to_string(tensor.w) + "x" + std::to_string(tensor.k) + "x" +
                            std::to_string(tensor.d) + " does not fit model of width " +
                            std::to_string(params.width) + " and field size " + std::to_string(params.field_size));
    }
}

nlohmann::ordered_json encode_array(const std::vector<double>& values, std::vector<std::size_t> shape) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(values.size() * 8);
    for (double v : values) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) {
            bytes.push_back(static_cast<std::uint8_t>((bits >> (8 * b)) & 0xFF));
        }
    }
    nlohmann::ordered_json out;
    out["shape"] = std::move(shape);
    out["dtype"] = "f64le";
    out["data"] = base64_encode(bytes);
    return out;
}

std::vector<double> decode_array(const nlohmann::json& record, std::size_t expected) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = base64_decode(record.at("data").get<std::string>());
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(e.what());
    }
    if (bytes.size() != expected * 8) {
        throw CheckpointError("parameter array has " + std::to_string(bytes.size() / 8) + " values, expected " +
                              std::to_string(expected));
    }
    std::vector<double> values(expected);
    for (std::size_t i = 0; i < expected; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
        }
        values[i] = std::bit_cast<double>(bits);
    }
    return values;
}

nlohmann::ordered_json encoder_json(const EncoderConfig& encoder) {
    nlohmann::ordered_json out;
    out["w"] = encoder.w;
    out["k"] = encoder.k;
    out["s"] = encoder.s;
    out["h_rank"] = encoder.h_rank;
    out["d"] = encoder.d;
    return out;
}

}  // namespace

ModelParams ModelParams::zeros(std::size_t filters, std::size_t width, std::size_t field_size, std::size_t classes) {
    ModelParams p;
    p.filters = filters;
    p.width = width;
    p.field_size = field_size;
    p.classes = classes;
    p.conv_weights.assign(filters * field_size, 0.0);
    p.conv_bias.assign(filters, 0.0);
    p.dense_weights.assign(filters * width * classes, 0.0);
    p.dense_bias.assign(classes, 0.0);
    return p;
}

ModelParams ModelParams::random(std::size_t filters, std::size_t width, std::size_t field_size, std::size_t classes,
                                std::uint64_t seed) {
    ModelParams p = zeros(filters, width, field_size, classes);
    Rng rng(seed);
    const double conv_limit = std::sqrt(6.0 / static_cast<double>(field_size));
    for (double& v : p.conv_weights) {
        v = rng.uniform(-conv_limit, conv_limit);
    }
    const double dense_limit = std::sqrt(6.0 / static_cast<double>(filters * width + classes));
    for (double& v : p.dense_weights) {
        v = rng.uniform(-dense_limit, dense_limit);
    }
    return p;
}

std::size_t ModelParams::parameter_count() const noexcept {
    return conv_weights.size() + conv_bias.size() + dense_weights.size() + dense_bias.size();
}

double& ModelParams::at(std::size_t i) {
    if (i < conv_weights.size()) return conv_weights[i];
    i -= conv_weights.size();
    if (i < conv_bias.size()) return conv_bias[i];
    i -= conv_bias.size();
    if (i < dense_weights.size()) return dense_weights[i];
    i -= dense_weights.size();
    return dense_bias.at(i);
}

double ModelParams::at(std::size_t i) const { return const_cast<ModelParams&>(*this).at(i); }

bool ModelParams::finite() const noexcept {
    const auto ok = [](const std::vector<double>& v) {
        return std::ranges::all_of(v, [](double x) { return std::isfinite(x); });
    };
    return ok(conv_weights) && ok(conv_bias) && ok(dense_weights) && ok(dense_bias);
}

void ModelParams::add_scaled(const ModelParams& other, double scale) {
    const auto axpy = [scale](std::vector<double>& y, const std::vector<double>& x) {
        for (std::size_t i = 0; i < y.size(); ++i) {
            y[i] += scale * x[i];
        }
    };
    axpy(conv_weights, other.conv_weights);
    axpy(conv_bias, other.conv_bias);
    axpy(dense_weights, other.dense_weights);
    axpy(dense_bias, other.dense_bias);
}

std::vector<double> softmax(std::span<const double> logits) {
    const double top = *std::ranges::max_element(logits);
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        out[c] = std::exp(logits[c] - top);
        sum += out[c];
    }
    for (double& p : out) {
        p /= sum;
    }
    return out;
}

double cross_entropy(std::span<const double> probabilities, int target) {
    const double p = probabilities[static_cast<std::size_t>(target)];
    return -std::log(std::max(p, std::numeric_limits<double>::min()));
}

Cache forward(const ModelParams& params, const FieldTensor& tensor) {
    check_shape(params, tensor);
    const std::size_t f_count = params.filters;
    const std::size_t w = params.width;
    const std::size_t m = params.field_size;

    Cache cache;
    cache.mask = tensor.mask;
    cache.pre.assign(f_count * w, 0.0);
    cache.activation.assign(f_count * w, 0.0);
    for (std::size_t p = 0; p < w; ++p) {
        if (tensor.mask[p]) {
            continue;
        }
        const std::span<const double> field = tensor.field(p);
        for (std::size_t f = 0; f < f_count; ++f) {
            const double* weights = params.conv_weights.data() + f * m;
            double z = params.conv_bias[f];
            for (std::size_t i = 0; i < m; ++i) {
                if (field[i] != 0.0) {
                    z += weights[i] * field[i];
                }
            }
            cache.pre[f * w + p] = z;
            cache.activation[f * w + p] = z > 0.0 ? z : 0.0;
        }
    }

    cache.logits = params.dense_bias;
    for (std::size_t j = 0; j < f_count * w; ++j) {
        const double a = cache.activation[j];
        if (a == 0.0) {
            continue;
        }
        for (std::size_t c = 0; c < params.classes; ++c) {
            cache.logits[c] += params.dense_weights[j * params.classes + c] * a;
        }
    }
    cache.probabilities = softmax(cache.logits);
    return cache;
}

ModelParams backward(const ModelParams& params, const FieldTensor& tensor, const Cache& cache, int target) {
    check_shape(params, tensor);
    const std::size_t f_count = params.filters;
    const std::size_t w = params.width;
    const std::size_t m = params.field_size;
    const std::size_t classes = params.classes;

    ModelParams grad = ModelParams::zeros(f_count, w, m, classes);
    std::vector<double> dlogits = cache.probabilities;
    dlogits[static_cast<std::size_t>(target)] -= 1.0;
    grad.dense_bias = dlogits;

    for (std::size_t j = 0; j < f_count * w; ++j) {
        const double a = cache.activation[j];
        double dact = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            grad.dense_weights[j * classes + c] = a * dlogits[c];
            dact += params.dense_weights[j * classes + c] * dlogits[c];
        }
        const std::size_t f = j / w;
        const std::size_t p = j % w;
        if (cache.mask[p] || cache.pre[j] <= 0.0) {
            continue;
        }
        grad.conv_bias[f] += dact;
        const std::span<const double> field = tensor.field(p);
        double* gw = grad.conv_weights.data() + f * m;
        for (std::size_t i = 0; i < m; ++i) {
            if (field[i] != 0.0) {
                gw[i] += dact * field[i];
            }
        }
    }
    return grad;
}

double loss(const ModelParams& params, const FieldTensor& tensor, int target) {
    return cross_entropy(forward(params, tensor).probabilities, target);
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning rate must be positive");
    }
    if (batch_size == 0 || filters == 0) {
        throw ConfigError("batch size and filter count must be positive");
    }
    if (max_epochs == 0) {
        throw ConfigError("max epochs must be positive");
    }
    if (patience > max_epochs) {
        throw ConfigError("patience cannot exceed max epochs");
    }
}

ModelParams batch_gradient(const ModelParams& params, const Dataset& data, std::span<const std::size_t> indices) {
    ModelParams total = ModelParams::zeros(params.filters, params.width, params.field_size, params.classes);
    for (std::size_t i : indices) {
        const Cache cache = forward(params, data.tensors[i]);
        total.add_scaled(backward(params, data.tensors[i], cache, data.targets[i]), 1.0);
    }
    return total;
}

double mean_loss(const ModelParams& params, const Dataset& data) {
    if (data.size() == 0) {
        return 0.0;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        sum += loss(params, data.tensors[i], data.targets[i]);
    }
    return sum / static_cast<double>(data.size());
}

TrainResult train(ModelParams initial, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config) {
    config.validate();
    if (train_set.size() == 0 || val_set.size() == 0) {
        throw ConfigError("training and validation sets must be nonempty");
    }
    const auto single_class = [](const Dataset& d) {
        return std::ranges::all_of(d.targets, [&](int t) { return t == d.targets.front(); });
    };

    TrainResult result;
    result.degenerate_data = single_class(train_set) || single_class(val_set);
    result.params = initial;
    ModelParams params = std::move(initial);
    Rng rng(config.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    double best = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            ModelParams grad =
                ModelParams::zeros(params.filters, params.width, params.field_size, params.classes);
            for (std::size_t b = start; b < end; ++b) {
                const std::size_t i = order[b];
                const Cache cache = forward(params, train_set.tensors[i]);
                epoch_loss += cross_entropy(cache.probabilities, train_set.targets[i]);
                grad.add_scaled(backward(params, train_set.tensors[i], cache, train_set.targets[i]), 1.0);
            }
            params.add_scaled(grad, -config.learning_rate);
            if (!params.finite()) {
                throw ConfigError("parameters diverged to a non-finite value");
            }
        }
        EpochStats stats;
        stats.train_loss = epoch_loss / static_cast<double>(order.size());
        stats.val_loss = mean_loss(params, val_set);
        result.history.push_back(stats);

        if (stats.val_loss < best) {
            best = stats.val_loss;
            result.params = params;
            result.best_epoch = epoch;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (since_best >= config.patience) {
            break;
        }
    }
    return result;
}

Prediction predict(const ModelParams& params, const FieldTensor& tensor) {
    const Cache cache = forward(params, tensor);
    Prediction out;
    out.probabilities = cache.probabilities;
    std::size_t best = 0;
    for (std::size_t c = 1; c < cache.probabilities.size(); ++c) {
        if (cache.probabilities[c] >= cache.probabilities[best]) {
            best = c;
        }
    }
    out.label = static_cast<int>(best);
    out.probability = cache.probabilities[best];
    return out;
}

std::string checkpoint_to_json(const ModelParams& params, const EncoderConfig& encoder) {
    nlohmann::ordered_json doc;
    doc["backend"] = "cnn";
    doc["encoder"] = encoder_json(encoder);
    doc["filters"] = params.filters;
    doc["width"] = params.width;
    doc["field_size"] = params.field_size;
    doc["classes"] = params.classes;
    doc["conv_weights"] = encode_array(params.conv_weights, {params.filters, params.field_size});
    doc["conv_bias"] = encode_array(params.conv_bias, {params.filters});
    doc["dense_weights"] = encode_array(params.dense_weights, {params.filters * params.width, params.classes});
    doc["dense_bias"] = encode_array(params.dense_bias, {params.classes});
    return doc.dump(1) + "\n";
}

EncoderConfig checkpoint_encoder(std::string_view json) {
    try {
        const nlohmann::json doc = nlohmann::json::parse(json);
        if (doc.value("backend", std::string()) != "cnn") {
            throw CheckpointError("not a cnn checkpoint");
        }
        const auto& e = doc.at("encoder");
        EncoderConfig encoder;
        encoder.w = e.at("w").get<std::size_t>();
        encoder.k = e.at("k").get<std::size_t>();
        encoder.s = e.at("s").get<std::size_t>();
        encoder.h_rank = e.at("h_rank").get<int>();
        encoder.d = e.at("d").get<std::size_t>();
        return encoder;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    }
}

ModelParams checkpoint_from_json(std::string_view json, const EncoderConfig& encoder) {
    if (checkpoint_encoder(json) != encoder) {
        throw CheckpointError("checkpoint was trained against a different encoder configuration");
    }
    try {
        const nlohmann::json doc = nlohmann::json::parse(json);
        const auto filters = doc.at("filters").get<std::size_t>();
        const auto width = doc.at("width").get<std::size_t>();
        const auto field_size = doc.at("field_size").get<std::size_t>();
        const auto classes = doc.at("classes").get<std::size_t>();
        if (width != encoder.w || field_size != encoder.k * encoder.d || (classes != 2 && classes != 4)) {
            throw CheckpointError("checkpoint shape does not match its encoder configuration");
        }
        ModelParams p = ModelParams::zeros(filters, width, field_size, classes);
        p.conv_weights = decode_array(doc.at("conv_weights"), p.conv_weights.size());
        p.conv_bias = decode_array(doc.at("conv_bias"), p.conv_bias.size());
        p.dense_weights = decode_array(doc.at("dense_weights"), p.dense_weights.size());
        p.dense_bias = decode_array(doc.at("dense_bias"), p.dense_bias.size());
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    }
}

}  // namespace vulnpipe::cnn
