#pragma once

// One-layer convolutional classifier over PATCHY-SAN field tensors.
//
//   conv:  f filters of size k x d slide over the w fields (stride 1, no
//          padding, so one output per field), ReLU; dummy fields output 0
//   dense: flatten (index filter * w + field) -> class logits
//   loss:  softmax cross-entropy
//
// Everything is double precision and single-threaded during training, so a
// fixed seed reproduces parameters bit for bit.

#include "vulnpipe/patchy_san.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vulnpipe::cnn {

using patchy::EncoderConfig;
using patchy::FieldTensor;

/// Class indices. The binary head uses {kSecure, kInsecure}; the type head
/// uses secure / buffer_overflow / null_deref / memory_leak.
inline constexpr int kSecure = 0;
inline constexpr int kInsecure = 1;

struct ModelParams {
    std::size_t filters = 0;
    std::size_t field_size = 0;  ///< k * d
    std::size_t width = 0;       ///< w
    std::size_t classes = 2;

    std::vector<double> conv_weights;   ///< filters x field_size
    std::vector<double> conv_bias;      ///< filters
    std::vector<double> dense_weights;  ///< (filters * width) x classes
    std::vector<double> dense_bias;     ///< classes

    /// All-zero parameters of the given shape.
    static ModelParams zeros(std::size_t filters, std::size_t width, std::size_t field_size, std::size_t classes);
    /// Uniform fan-in scaled initialization, biases zero.
    static ModelParams random(std::size_t filters, std::size_t width, std::size_t field_size, std::size_t classes,
                              std::uint64_t seed);

    [[nodiscard]] std::size_t parameter_count() const noexcept;
    /// Flat views over all parameters in a fixed order (conv w, conv b, dense w, dense b).
    [[nodiscard]] double& at(std::size_t flat_index);
    [[nodiscard]] double at(std::size_t flat_index) const;
    [[nodiscard]] bool finite() const noexcept;
    /// this += scale * other
    void add_scaled(const ModelParams& other, double scale);

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct Cache {
    std::vector<double> pre;         ///< filters x width conv pre-activations
    std::vector<double> activation;  ///< after ReLU and masking
    std::vector<bool> mask;
    std::vector<double> logits;
    std::vector<double> probabilities;
};

/// Throws ShapeMismatch when the tensor does not fit the parameters.
[[nodiscard]] Cache forward(const ModelParams& params, const FieldTensor& tensor);

/// Gradient of the cross-entropy of `target` with respect to every parameter.
[[nodiscard]] ModelParams backward(const ModelParams& params, const FieldTensor& tensor, const Cache& cache,
                                   int target);

[[nodiscard]] std::vector<double> softmax(std::span<const double> logits);
[[nodiscard]] double cross_entropy(std::span<const double> probabilities, int target);
[[nodiscard]] double loss(const ModelParams& params, const FieldTensor& tensor, int target);

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t max_epochs = 100;
    std::size_t batch_size = 16;
    std::size_t patience = 10;
    std::uint64_t seed = 7;
    std::size_t filters = 16;
    /// Four-way vulnerability-type head instead of the binary one.
    bool type_head = false;

    /// Throws ConfigError.
    void validate() const;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct Dataset {
    std::vector<FieldTensor> tensors;
    std::vector<int> targets;

    [[nodiscard]] std::size_t size() const noexcept { return tensors.size(); }
};

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    ModelParams params;  ///< best by validation loss
    std::vector<EpochStats> history;
    std::size_t best_epoch = 0;  ///< 1-based
    /// Set when a split contains a single class; training still ran.
    bool degenerate_data = false;
};

/// Summed gradient of a batch (a duplicated sample counts twice).
[[nodiscard]] ModelParams batch_gradient(const ModelParams& params, const Dataset& data,
                                         std::span<const std::size_t> indices);

[[nodiscard]] double mean_loss(const ModelParams& params, const Dataset& data);

/// Plain SGD over seeded shuffles with early stopping on validation loss.
[[nodiscard]] TrainResult train(ModelParams initial, const Dataset& train_set, const Dataset& val_set,
                                const TrainConfig& config);

struct Prediction {
    int label = kInsecure;
    double probability = 0.0;
    std::vector<double> probabilities;
};

/// Argmax of the softmax; ties go to the higher class index, which makes a
/// binary tie insecure.
[[nodiscard]] Prediction predict(const ModelParams& params, const FieldTensor& tensor);

[[nodiscard]] std::string checkpoint_to_json(const ModelParams& params, const EncoderConfig& encoder);
/// Throws CheckpointError when the file is malformed or was trained against
/// a different encoder configuration.
[[nodiscard]] ModelParams checkpoint_from_json(std::string_view json, const EncoderConfig& encoder);
/// Encoder configuration stored in a checkpoint.
[[nodiscard]] EncoderConfig checkpoint_encoder(std::string_view json);

}  // namespace vulnpipe::cnn
