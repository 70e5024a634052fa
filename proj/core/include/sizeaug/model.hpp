/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sizeaug/image.hpp"
#include "sizeaug/manifest.hpp"
#include "sizeaug/rng.hpp"

namespace sizeaug {

enum class LayerKind { kInput, kConv2D, kMaxPool2D, kFlatten, kDense, kDropout };
enum class Activation { kReLU, kSoftmax };

std::string_view to_string(LayerKind kind);

// One row of a declarative layer list. Conv2D is always 3x3 / stride 1 / same
// padding / ReLU; MaxPool2D is 2x2 / stride 2.
struct LayerSpec {
  LayerKind kind = LayerKind::kInput;
  int height = 0;    // Input
  int width = 0;     // Input
  int channels = 0;  // Input
  int units = 0;     // Conv2D filters or Dense units
  Activation activation = Activation::kReLU;
  double rate = 0.0;  // Dropout

  static LayerSpec input(int height, int width, int channels);
  static LayerSpec conv2d(int filters);
  static LayerSpec max_pool();
  static LayerSpec flatten();
  static LayerSpec dense(int units, Activation activation = Activation::kReLU);
  static LayerSpec dropout(double rate);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Spatial (H, W, C) or flat (N) activation shape.
struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;
  bool flat = false;

  static Shape spatial(int h, int w, int c) { return {h, w, c, false}; }
  static Shape vector(int n) { return {0, 0, n, true}; }
  std::int64_t size() const {
    return flat ? channels : static_cast<std::int64_t>(height) * width * channels;
  }
  // "224, 224, 64" or "25088".
  std::string to_string() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

struct ModelConfig {
  std::vector<LayerSpec> layers;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// The 224x224x3 VGG19-style stack with its 256/128/64 dense head.
ModelConfig vgg19_table3_config();
// 64x64x3; conv 8, 8, pool; conv 16, 16, pool; dense 64, 32 with dropout 0.5; softmax 2.
ModelConfig micro_default_config();
// "vgg19" or "micro". Throws InvalidArgument.
ModelConfig model_preset(std::string_view name);

nlohmann::json model_config_to_json(const ModelConfig& config);
// {"preset": name} or {"layers": [...]}.
ModelConfig model_config_from_json(const nlohmann::json& j);

// Conv2D: 9 * C_in * C_out + C_out; Dense: U_in * U_out + U_out; others 0.
// Throws ShapeMismatch if the layer cannot consume `input`.
std::int64_t param_count(const LayerSpec& layer, const Shape& input);
Shape output_shape(const LayerSpec& layer, const Shape& input);

struct LayerRow {
  LayerKind kind;
  Shape output;
  std::int64_t params;
};

// Propagates shapes layer by layer and checks structural invariants (Input
// first, Flatten before the first Dense, a single Softmax Dense that is
// last). Throws ShapeMismatch naming the offending layer index.
std::vector<LayerRow> validate_config(const ModelConfig& config);

struct ParamTensor {
  int rows = 0;  // output units / filters
  int cols = 0;  // fan-in
  std::vector<double> weights;   // rows x cols, row-major
  std::vector<double> bias;      // rows
  std::vector<double> weight_velocity;
  std::vector<double> bias_velocity;

  bool empty() const { return rows == 0; }
};

struct Model {
  ModelConfig config;
  std::vector<Shape> shapes;         // output shape of each layer
  std::vector<ParamTensor> params;   // one slot per layer; empty for parameter-free layers

  std::int64_t parameter_count() const;
};

// He-uniform weights in +-sqrt(6 / fan_in), zero biases. Layer i draws from
// derive_stream(seed, to_string(i), 0, "init").
Model init_model(const ModelConfig& config, std::uint64_t seed);

enum class Mode { kTrain, kEval };

// Intermediates kept for backward().
struct ForwardCache {
  int batch = 0;
  std::vector<std::vector<double>> outputs;        // per layer, after activation
  std::vector<std::vector<std::uint8_t>> masks;    // dropout keep masks (train mode)
  std::vector<std::vector<std::uint32_t>> argmax;  // max-pool source indices
};

struct ForwardResult {
  std::vector<double> probabilities;  // batch x classes, row-major
  int classes = 0;
  ForwardCache cache;

  double probability(int sample, int cls) const {
    return probabilities[static_cast<std::size_t>(sample) * classes + cls];
  }
};

// Intensities enter centered at 0 (x - 0.5). Dropout is active only in train
// mode (inverted dropout, masks drawn from `dropout_rng`).
ForwardResult forward(const Model& model, std::span<const ImageBuffer> batch, Mode mode,
                      RngState dropout_rng = {});
// Same, reusing the buffers held by `result`.
void forward(const Model& model, std::span<const ImageBuffer> batch, Mode mode,
             RngState dropout_rng, ForwardResult& result);

// Mean of -ln(max(p[true], 1e-12)).
double cross_entropy(std::span<const double> probabilities, int classes,
                     std::span<const Label> labels);

struct ParamGrad {
  std::vector<double> weights;
  std::vector<double> bias;
};
using Gradients = std::vector<ParamGrad>;  // parallel to Model::params

// Exact reverse-mode gradients of cross_entropy o forward, reusing the cached
// dropout masks.
Gradients backward(const Model& model, const ForwardResult& fwd, std::span<const Label> labels);

// v <- momentum * v - lr * g; w <- w + v.
void sgd_step(Model& model, const Gradients& grads, double learning_rate, double momentum);

// Label with the larger probability; an exact tie resolves to Benign.
Label predict_label(const ForwardResult& fwd, int sample);

struct GradCheckReport {
  double max_relative_error = 0.0;
  int checked = 0;
  int skipped_kinks = 0;  // draws whose +-epsilon passes crossed a ReLU or max-pool switch
};

// Compares analytic gradients against central differences (epsilon 1e-5) for
// `num_params` parameters drawn round-robin over every weight and bias
// tensor; forward runs in eval mode so dropout is off. A draw whose perturbed
// passes change any ReLU sign or max-pool winner sits on a kink, where the
// finite difference is not a derivative estimate; it is counted as skipped
// and drawing continues (at most 20 * num_params draws).
// Error is |g_a - g_n| / max(|g_a|, |g_n|, 1e-8).
GradCheckReport grad_check_report(const Model& model, std::span<const ImageBuffer> batch,
                                  std::span<const Label> labels, int num_params = 200,
                                  std::uint64_t seed = 0);
double grad_check(const Model& model, std::span<const ImageBuffer> batch,
                  std::span<const Label> labels, int num_params = 200, std::uint64_t seed = 0);

// Flat binary: "SBLD1", u32 layer count, then per parameterized layer
// u32 layer index, u32 rows, u32 cols, rows*cols weights, rows biases
// (little-endian float64).
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const ModelConfig& config, const std::filesystem::path& path);
std::vector<unsigned char> serialize_model(const Model& model);
Model deserialize_model(const ModelConfig& config, std::span<const unsigned char> bytes);

}  // namespace sizeaug
