/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "sizeaug/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include <Eigen/Core>

#include "sizeaug/error.hpp"

namespace sizeaug {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

constexpr double kInputCenter = 0.5;

[[noreturn]] void shape_error(std::size_t index, const std::string& what) {
  throw Error(ErrorCode::kShapeMismatch, "layer " + std::to_string(index) + ": " + what);
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kInput: return "Input";
    case LayerKind::kConv2D: return "Conv2D";
    case LayerKind::kMaxPool2D: return "MaxPooling2D";
    case LayerKind::kFlatten: return "Flatten";
    case LayerKind::kDense: return "Dense";
    case LayerKind::kDropout: return "Dropout";
  }
  return "Input";
}

LayerSpec LayerSpec::input(int height, int width, int channels) {
  LayerSpec s;
  s.kind = LayerKind::kInput;
  s.height = height;
  s.width = width;
  s.channels = channels;
  return s;
}

LayerSpec LayerSpec::conv2d(int filters) {
  LayerSpec s;
  s.kind = LayerKind::kConv2D;
  s.units = filters;
  return s;
}

LayerSpec LayerSpec::max_pool() {
  LayerSpec s;
  s.kind = LayerKind::kMaxPool2D;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::kFlatten;
  return s;
}

LayerSpec LayerSpec::dense(int units, Activation activation) {
  LayerSpec s;
  s.kind = LayerKind::kDense;
  s.units = units;
  s.activation = activation;
  return s;
}

LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec s;
  s.kind = LayerKind::kDropout;
  s.rate = rate;
  return s;
}

std::string Shape::to_string() const {
  if (flat) return std::to_string(channels);
  return std::to_string(height) + ", " + std::to_string(width) + ", " + std::to_string(channels);
}

ModelConfig vgg19_table3_config() {
  ModelConfig c;
  auto& l = c.layers;
  l.push_back(LayerSpec::input(224, 224, 3));
  const int blocks[5][2] = {{64, 2}, {128, 2}, {256, 4}, {512, 4}, {512, 4}};
  for (const auto& [filters, convs] : blocks) {
    for (int i = 0; i < convs; ++i) l.push_back(LayerSpec::conv2d(filters));
    l.push_back(LayerSpec::max_pool());
  }
  l.push_back(LayerSpec::flatten());
  for (int units : {256, 128, 64}) {
    l.push_back(LayerSpec::dense(units));
    l.push_back(LayerSpec::dropout(0.5));
  }
  l.push_back(LayerSpec::dense(2, Activation::kSoftmax));
  return c;
}

ModelConfig micro_default_config() {
  ModelConfig c;
  c.layers = {
      LayerSpec::input(64, 64, 3),
      LayerSpec::conv2d(8),
      LayerSpec::conv2d(8),
      LayerSpec::max_pool(),
      LayerSpec::conv2d(16),
      LayerSpec::conv2d(16),
      LayerSpec::max_pool(),
      LayerSpec::flatten(),
      LayerSpec::dense(64),
      LayerSpec::dropout(0.5),
      LayerSpec::dense(32),
      LayerSpec::dropout(0.5),
      LayerSpec::dense(2, Activation::kSoftmax),
  };
  return c;
}

ModelConfig model_preset(std::string_view name) {
  if (name == "vgg19") return vgg19_table3_config();
  if (name == "micro") return micro_default_config();
  throw Error(ErrorCode::kInvalidArgument, "unknown model preset '" + std::string(name) + "'");
}

nlohmann::json model_config_to_json(const ModelConfig& config) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& s : config.layers) {
    nlohmann::json j{{"type", std::string(to_string(s.kind))}};
    switch (s.kind) {
      case LayerKind::kInput: j["shape"] = {s.height, s.width, s.channels}; break;
      case LayerKind::kConv2D: j["filters"] = s.units; break;
      case LayerKind::kDense:
        j["units"] = s.units;
        j["activation"] = s.activation == Activation::kSoftmax ? "softmax" : "relu";
        break;
      case LayerKind::kDropout: j["rate"] = s.rate; break;
      default: break;
    }
    layers.push_back(std::move(j));
  }
  return {{"layers", layers}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (j.contains("preset")) return model_preset(j.at("preset").get<std::string>());
  ModelConfig c;
  try {
    for (const auto& l : j.at("layers")) {
      const auto type = l.at("type").get<std::string>();
      if (type == "Input") {
        const auto& shape = l.at("shape");
        c.layers.push_back(LayerSpec::input(shape.at(0), shape.at(1), shape.at(2)));
      } else if (type == "Conv2D") {
        c.layers.push_back(LayerSpec::conv2d(l.at("filters")));
      } else if (type == "MaxPooling2D" || type == "MaxPool2D") {
        c.layers.push_back(LayerSpec::max_pool());
      } else if (type == "Flatten") {
        c.layers.push_back(LayerSpec::flatten());
      } else if (type == "Dense") {
        const auto act = l.value("activation", std::string("relu"));
        if (act != "relu" && act != "softmax") {
          throw Error(ErrorCode::kInvalidArgument, "unknown activation '" + act + "'");
        }
        c.layers.push_back(LayerSpec::dense(
            l.at("units"), act == "softmax" ? Activation::kSoftmax : Activation::kReLU));
      } else if (type == "Dropout") {
        c.layers.push_back(LayerSpec::dropout(l.at("rate")));
      } else {
        throw Error(ErrorCode::kInvalidArgument, "unknown layer type '" + type + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("model config: ") + e.what());
  }
  return c;
}

Shape output_shape(const LayerSpec& layer, const Shape& in) {
  switch (layer.kind) {
    case LayerKind::kInput:
      if (layer.height < 1 || layer.width < 1 || layer.channels < 1) {
        throw Error(ErrorCode::kShapeMismatch, "Input dimensions must be positive");
      }
      return Shape::spatial(layer.height, layer.width, layer.channels);
    case LayerKind::kConv2D:
      if (in.flat) throw Error(ErrorCode::kShapeMismatch, "Conv2D needs a spatial input");
      if (layer.units < 1) throw Error(ErrorCode::kShapeMismatch, "Conv2D needs filters >= 1");
      return Shape::spatial(in.height, in.width, layer.units);
    case LayerKind::kMaxPool2D:
      if (in.flat || in.height < 2 || in.width < 2) {
        throw Error(ErrorCode::kShapeMismatch, "MaxPool2D needs a spatial input of at least 2x2");
      }
      return Shape::spatial(in.height / 2, in.width / 2, in.channels);
    case LayerKind::kFlatten:
      if (in.flat) throw Error(ErrorCode::kShapeMismatch, "Flatten input is already flat");
      return Shape::vector(static_cast<int>(in.size()));
    case LayerKind::kDense:
      if (!in.flat) throw Error(ErrorCode::kShapeMismatch, "Dense needs a flat input (missing Flatten)");
      if (layer.units < 1) throw Error(ErrorCode::kShapeMismatch, "Dense needs units >= 1");
      return Shape::vector(layer.units);
    case LayerKind::kDropout:
      if (!(layer.rate >= 0.0 && layer.rate < 1.0)) {
        throw Error(ErrorCode::kShapeMismatch, "Dropout rate must lie in [0, 1)");
      }
      return in;
  }
  return in;
}

std::int64_t param_count(const LayerSpec& layer, const Shape& in) {
  output_shape(layer, in);
  switch (layer.kind) {
    case LayerKind::kConv2D:
      return 9LL * in.channels * layer.units + layer.units;
    case LayerKind::kDense:
      return in.size() * layer.units + layer.units;
    default:
      return 0;
  }
}

std::vector<LayerRow> validate_config(const ModelConfig& config) {
  const auto& layers = config.layers;
  if (layers.empty() || layers.front().kind != LayerKind::kInput) {
    shape_error(0, "first layer must be Input");
  }
  std::vector<LayerRow> rows;
  Shape shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (i > 0 && l.kind == LayerKind::kInput) shape_error(i, "Input may only appear first");
    const bool softmax = l.kind == LayerKind::kDense && l.activation == Activation::kSoftmax;
    if (softmax && i + 1 != layers.size()) shape_error(i, "Softmax Dense must be the last layer");
    try {
      const std::int64_t params = i == 0 ? 0 : param_count(l, shape);
      shape = output_shape(l, shape);
      rows.push_back({l.kind, shape, params});
    } catch (const Error& e) {
      shape_error(i, e.detail());
    }
  }
  const auto& last = layers.back();
  if (last.kind != LayerKind::kDense || last.activation != Activation::kSoftmax) {
    shape_error(layers.size() - 1, "last layer must be a Softmax Dense");
  }
  return rows;
}

std::int64_t Model::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params) n += static_cast<std::int64_t>(p.weights.size() + p.bias.size());
  return n;
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  const auto rows = validate_config(config);
  Model m;
  m.config = config;
  m.params.resize(config.layers.size());
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    m.shapes.push_back(rows[i].output);
    const auto& l = config.layers[i];
    if (l.kind != LayerKind::kConv2D && l.kind != LayerKind::kDense) continue;
    const Shape& in = rows[i - 1].output;
    ParamTensor& p = m.params[i];
    p.rows = l.units;
    p.cols = l.kind == LayerKind::kConv2D ? 9 * in.channels : static_cast<int>(in.size());
    const std::size_t n = static_cast<std::size_t>(p.rows) * p.cols;
    p.weights.resize(n);
    p.bias.assign(p.rows, 0.0);
    p.weight_velocity.assign(n, 0.0);
    p.bias_velocity.assign(p.rows, 0.0);
    const double bound = std::sqrt(6.0 / p.cols);
    Rng rng(derive_stream(seed, std::to_string(i), 0, "init"));
    for (auto& w : p.weights) w = rng.uniform(-bound, bound);
  }
  return m;
}

namespace {

// Spatial activations are stored channel-major across the batch (C, N, H, W).
// Convolutions run directly on image rows: each 3x3 tap is a shifted
// multiply-add over a row, blocked over output channels so every input row
// load feeds several outputs.
struct ConvDims {
  int cin;
  int cout;
  int batch;
  int h;
  int w;
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
};

constexpr int kRowChunk = 128;

// Writes the 3x3 same-padded correlation of `in` with weights
// k[co][ci * 9 + tap] into output channels [co0, co0 + B) of `out`, one
// output row segment at a time through a stack accumulator.
template <int B>
void conv_rows(const double* in, const double* k, double* out, const ConvDims& d, int co0) {
  const std::size_t plane = d.plane();
  const int w = d.w;
  const std::size_t kcols = static_cast<std::size_t>(d.cin) * 9;
  alignas(64) double acc[B][kRowChunk];
  for (int s = 0; s < d.batch; ++s) {
    for (int y = 0; y < d.h; ++y) {
      for (int x0 = 0; x0 < w; x0 += kRowChunk) {
        const int x1 = std::min(w, x0 + kRowChunk);
        const int n = x1 - x0;
        for (int b = 0; b < B; ++b) std::fill(acc[b], acc[b] + n, 0.0);
        const int lo = std::max(x0, 1);
        const int hi = std::min(x1, w - 1);
        for (int ci = 0; ci < d.cin; ++ci) {
          const double* src = in + (static_cast<std::size_t>(ci) * d.batch + s) * plane;
          for (int ky = 0; ky < 3; ++ky) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= d.h) continue;
            const double* irow = src + static_cast<std::size_t>(sy) * w;
            double k0[B], k1[B], k2[B];
            for (int b = 0; b < B; ++b) {
              const double* kr = k + (co0 + b) * kcols + static_cast<std::size_t>(ci) * 9 + ky * 3;
              k0[b] = kr[0];
              k1[b] = kr[1];
              k2[b] = kr[2];
            }
            if (x0 == 0) {
              for (int b = 0; b < B; ++b) acc[b][0] += k1[b] * irow[0] + (w > 1 ? k2[b] * irow[1] : 0.0);
            }
            for (int x = lo; x < hi; ++x) {
              const double l = irow[x - 1];
              const double c = irow[x];
              const double r = irow[x + 1];
              for (int b = 0; b < B; ++b) acc[b][x - x0] += k0[b] * l + k1[b] * c + k2[b] * r;
            }
            if (x1 == w && w > 1) {
              for (int b = 0; b < B; ++b) {
                acc[b][w - 1 - x0] += k0[b] * irow[w - 2] + k1[b] * irow[w - 1];
              }
            }
          }
        }
        for (int b = 0; b < B; ++b) {
          std::copy(acc[b], acc[b] + n,
                    out + (static_cast<std::size_t>(co0 + b) * d.batch + s) * plane +
                        static_cast<std::size_t>(y) * w + x0);
        }
      }
    }
  }
}

// out = conv(in, k); `out` is resized to the output size.
void conv3x3(const double* in, const double* k, std::vector<double>& out, const ConvDims& d) {
  out.resize(static_cast<std::size_t>(d.cout) * d.batch * d.plane());
  int co = 0;
  for (; co + 8 <= d.cout; co += 8) conv_rows<8>(in, k, out.data(), d, co);
  for (; co + 4 <= d.cout; co += 4) conv_rows<4>(in, k, out.data(), d, co);
  for (; co < d.cout; ++co) conv_rows<1>(in, k, out.data(), d, co);
}

// dk[co][ci * 9 + tap] = sum over batch and pixels of dy[co] * shifted in[ci].
// Four output channels share each input row; row sums use SIMD reductions.
void weight_grad_block4(const double* in, const double* dy, double* dk, const ConvDims& d, int co) {
  const std::size_t plane = d.plane();
  const int w = d.w;
  for (int ci = 0; ci < d.cin; ++ci) {
    double taps[4][9] = {};
    for (int s = 0; s < d.batch; ++s) {
      const double* src = in + (static_cast<std::size_t>(ci) * d.batch + s) * plane;
      const double* g[4];
      for (int b = 0; b < 4; ++b) g[b] = dy + (static_cast<std::size_t>(co + b) * d.batch + s) * plane;
      for (int ky = 0; ky < 3; ++ky) {
        const int oy = ky - 1;
        double a00 = 0, a01 = 0, a02 = 0, a10 = 0, a11 = 0, a12 = 0;
        double a20 = 0, a21 = 0, a22 = 0, a30 = 0, a31 = 0, a32 = 0;
        for (int y = std::max(0, -oy); y < std::min(d.h, d.h - oy); ++y) {
          const double* ir = src + static_cast<std::size_t>(y + oy) * w;
          const std::size_t row = static_cast<std::size_t>(y) * w;
          const double* g0 = g[0] + row;
          const double* g1 = g[1] + row;
          const double* g2 = g[2] + row;
          const double* g3 = g[3] + row;
#pragma omp simd reduction(+ : a00, a01, a02, a10, a11, a12, a20, a21, a22, a30, a31, a32)
          for (int x = 1; x < w - 1; ++x) {
            const double l = ir[x - 1];
            const double c = ir[x];
            const double r = ir[x + 1];
            a00 += g0[x] * l; a01 += g0[x] * c; a02 += g0[x] * r;
            a10 += g1[x] * l; a11 += g1[x] * c; a12 += g1[x] * r;
            a20 += g2[x] * l; a21 += g2[x] * c; a22 += g2[x] * r;
            a30 += g3[x] * l; a31 += g3[x] * c; a32 += g3[x] * r;
          }
          a01 += g0[0] * ir[0]; a11 += g1[0] * ir[0]; a21 += g2[0] * ir[0]; a31 += g3[0] * ir[0];
          if (w > 1) {
            const double e = ir[w - 1];
            const double f = ir[w - 2];
            a01 += g0[w - 1] * e; a11 += g1[w - 1] * e; a21 += g2[w - 1] * e; a31 += g3[w - 1] * e;
            a02 += g0[0] * ir[1]; a12 += g1[0] * ir[1]; a22 += g2[0] * ir[1]; a32 += g3[0] * ir[1];
            a00 += g0[w - 1] * f; a10 += g1[w - 1] * f; a20 += g2[w - 1] * f; a30 += g3[w - 1] * f;
          }
        }
        const double sums[4][3] = {{a00, a01, a02}, {a10, a11, a12}, {a20, a21, a22}, {a30, a31, a32}};
        for (int b = 0; b < 4; ++b) {
          for (int j = 0; j < 3; ++j) taps[b][ky * 3 + j] += sums[b][j];
        }
      }
    }
    for (int b = 0; b < 4; ++b) {
      double* out = dk + (static_cast<std::size_t>(co + b) * d.cin + ci) * 9;
      for (int t = 0; t < 9; ++t) out[t] = taps[b][t];
    }
  }
}

void weight_grad_single(const double* in, const double* dy, double* dk, const ConvDims& d, int co) {
  const std::size_t plane = d.plane();
  const int w = d.w;
  for (int ci = 0; ci < d.cin; ++ci) {
    double taps[9] = {};
    for (int s = 0; s < d.batch; ++s) {
      const double* src = in + (static_cast<std::size_t>(ci) * d.batch + s) * plane;
      const double* g = dy + (static_cast<std::size_t>(co) * d.batch + s) * plane;
      for (int ky = 0; ky < 3; ++ky) {
        const int oy = ky - 1;
        double s0 = 0, s1 = 0, s2 = 0;
        for (int y = std::max(0, -oy); y < std::min(d.h, d.h - oy); ++y) {
          const double* ir = src + static_cast<std::size_t>(y + oy) * w;
          const double* gr = g + static_cast<std::size_t>(y) * w;
#pragma omp simd reduction(+ : s0, s1, s2)
          for (int x = 1; x < w - 1; ++x) {
            s0 += gr[x] * ir[x - 1];
            s1 += gr[x] * ir[x];
            s2 += gr[x] * ir[x + 1];
          }
          s1 += gr[0] * ir[0];
          if (w > 1) {
            s1 += gr[w - 1] * ir[w - 1];
            s2 += gr[0] * ir[1];
            s0 += gr[w - 1] * ir[w - 2];
          }
        }
        taps[ky * 3] += s0;
        taps[ky * 3 + 1] += s1;
        taps[ky * 3 + 2] += s2;
      }
    }
    double* out = dk + (static_cast<std::size_t>(co) * d.cin + ci) * 9;
    for (int t = 0; t < 9; ++t) out[t] = taps[t];
  }
}

void conv3x3_weight_grad(const double* in, const double* dy, double* dk, const ConvDims& d) {
  int co = 0;
  for (; co + 4 <= d.cout; co += 4) weight_grad_block4(in, dy, dk, d, co);
  for (; co < d.cout; ++co) weight_grad_single(in, dy, dk, d, co);
}

// Kernel of the input-gradient convolution: channels swapped, taps rotated
// by 180 degrees.
void flip_kernel(const ParamTensor& p, int cin, std::vector<double>& flipped) {
  const int cout = p.rows;
  flipped.resize(p.weights.size());
  for (int co = 0; co < cout; ++co) {
    for (int ci = 0; ci < cin; ++ci) {
      for (int t = 0; t < 9; ++t) {
        flipped[(static_cast<std::size_t>(ci) * cout + co) * 9 + (8 - t)] =
            p.weights[(static_cast<std::size_t>(co) * cin + ci) * 9 + t];
      }
    }
  }
}

void pack_batch(std::span<const ImageBuffer> batch, const Shape& shape, std::vector<double>& out) {
  const int n = static_cast<int>(batch.size());
  const std::size_t plane = static_cast<std::size_t>(shape.height) * shape.width;
  out.resize(static_cast<std::size_t>(shape.channels) * n * plane);
  for (int i = 0; i < n; ++i) {
    const auto& img = batch[i];
    if (img.width() != shape.width || img.height() != shape.height ||
        shape.channels != ImageBuffer::kChannels) {
      throw Error(ErrorCode::kShapeMismatch,
                  "input image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                      " does not match Input " + shape.to_string());
    }
    auto px = img.data();
    for (int c = 0; c < shape.channels; ++c) {
      double* dst = out.data() + (static_cast<std::size_t>(c) * n + i) * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] = px[p * ImageBuffer::kChannels + c] - kInputCenter;
    }
  }
}

}  // namespace

namespace {

// Recomputes layers [first, end) from cache.outputs[first - 1].
void run_layers(const Model& model, ForwardCache& cache, std::size_t first, Mode mode, Rng& rng) {
  const auto& layers = model.config.layers;
  const int n = cache.batch;
  for (std::size_t li = first; li < layers.size(); ++li) {
    const LayerSpec& l = layers[li];
    const Shape& in_shape = model.shapes[li - 1];
    const Shape& out_shape = model.shapes[li];
    const std::vector<double>& in = cache.outputs[li - 1];
    std::vector<double>& out = cache.outputs[li];
    switch (l.kind) {
      case LayerKind::kConv2D: {
        const ParamTensor& p = model.params[li];
        const ConvDims d{in_shape.channels, p.rows, n, in_shape.height, in_shape.width};
        conv3x3(in.data(), p.weights.data(), out, d);
        const std::size_t m = static_cast<std::size_t>(n) * d.plane();
        for (int r = 0; r < p.rows; ++r) {
          const double b = p.bias[r];
          double* row = out.data() + static_cast<std::size_t>(r) * m;
          for (std::size_t k = 0; k < m; ++k) row[k] = std::max(0.0, row[k] + b);
        }
        break;
      }
      case LayerKind::kMaxPool2D: {
        const int h = in_shape.height;
        const int w = in_shape.width;
        const int oh = out_shape.height;
        const int ow = out_shape.width;
        const std::size_t planes = static_cast<std::size_t>(in_shape.channels) * n;
        out.resize(planes * oh * ow);
        auto& idx = cache.argmax[li];
        idx.resize(out.size());
        for (std::size_t pl = 0; pl < planes; ++pl) {
          const std::size_t base = pl * h * w;
          for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
              std::size_t best = base + static_cast<std::size_t>(2 * oy) * w + 2 * ox;
              for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                  const std::size_t k = base + static_cast<std::size_t>(2 * oy + dy) * w + 2 * ox + dx;
                  if (in[k] > in[best]) best = k;
                }
              }
              const std::size_t o = (pl * oh + oy) * ow + ox;
              out[o] = in[best];
              idx[o] = static_cast<std::uint32_t>(best);
            }
          }
        }
        break;
      }
      case LayerKind::kFlatten: {
        const std::size_t plane = static_cast<std::size_t>(in_shape.height) * in_shape.width;
        const std::size_t features = static_cast<std::size_t>(in_shape.channels) * plane;
        out.resize(in.size());
        for (int c = 0; c < in_shape.channels; ++c) {
          for (int s = 0; s < n; ++s) {
            const double* src = in.data() + (static_cast<std::size_t>(c) * n + s) * plane;
            std::copy(src, src + plane, out.data() + s * features + c * plane);
          }
        }
        break;
      }
      case LayerKind::kDense: {
        const ParamTensor& p = model.params[li];
        out.resize(static_cast<std::size_t>(n) * p.rows);
        MapMat y(out.data(), n, p.rows);
        y.noalias() = ConstMapMat(in.data(), n, p.cols) *
                      ConstMapMat(p.weights.data(), p.rows, p.cols).transpose();
        for (int s = 0; s < n; ++s) {
          double* row = out.data() + static_cast<std::size_t>(s) * p.rows;
          for (int r = 0; r < p.rows; ++r) row[r] += p.bias[r];
          if (l.activation == Activation::kReLU) {
            for (int r = 0; r < p.rows; ++r) row[r] = std::max(0.0, row[r]);
          } else {
            const double mx = *std::max_element(row, row + p.rows);
            double sum = 0.0;
            for (int r = 0; r < p.rows; ++r) {
              row[r] = std::exp(row[r] - mx);
              sum += row[r];
            }
            for (int r = 0; r < p.rows; ++r) row[r] /= sum;
          }
        }
        break;
      }
      case LayerKind::kDropout: {
        out = in;
        if (mode == Mode::kTrain && l.rate > 0.0) {
          auto& mask = cache.masks[li];
          mask.resize(in.size());
          const double keep = 1.0 - l.rate;
          const double scale = 1.0 / keep;
          for (std::size_t k = 0; k < in.size(); ++k) {
            mask[k] = rng.unit() < keep ? 1 : 0;
            out[k] = mask[k] ? in[k] * scale : 0.0;
          }
        }
        break;
      }
      case LayerKind::kInput:
        break;
    }
  }
}

}  // namespace

ForwardResult forward(const Model& model, std::span<const ImageBuffer> batch, Mode mode,
                      RngState dropout_rng) {
  ForwardResult res;
  forward(model, batch, mode, dropout_rng, res);
  return res;
}

void forward(const Model& model, std::span<const ImageBuffer> batch, Mode mode,
             RngState dropout_rng, ForwardResult& res) {
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, "forward: empty batch");
  const std::size_t count = model.config.layers.size();
  ForwardCache& cache = res.cache;
  cache.batch = static_cast<int>(batch.size());
  cache.outputs.resize(count);
  cache.masks.resize(count);
  cache.argmax.resize(count);
  pack_batch(batch, model.shapes[0], cache.outputs[0]);
  for (auto& m : cache.masks) m.clear();
  Rng rng(dropout_rng);
  run_layers(model, cache, 1, mode, rng);
  res.classes = model.shapes.back().channels;
  res.probabilities = cache.outputs.back();
}

double cross_entropy(std::span<const double> probabilities, int classes,
                     std::span<const Label> labels) {
  if (labels.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = probabilities[i * classes + static_cast<int>(labels[i])];
    sum += -std::log(std::max(p, 1e-12));
  }
  return sum / static_cast<double>(labels.size());
}

Gradients backward(const Model& model, const ForwardResult& fwd, std::span<const Label> labels) {
  const auto& layers = model.config.layers;
  const ForwardCache& cache = fwd.cache;
  const int n = cache.batch;
  if (static_cast<int>(labels.size()) != n) {
    throw Error(ErrorCode::kInvalidArgument, "backward: label count does not match batch");
  }
  Gradients grads(layers.size());
  // Gradient w.r.t. the softmax logits: (p - onehot) / batch.
  std::vector<double> delta = fwd.probabilities;
  for (int s = 0; s < n; ++s) delta[static_cast<std::size_t>(s) * fwd.classes + static_cast<int>(labels[s])] -= 1.0;
  for (auto& d : delta) d /= n;

  thread_local std::vector<double> flipped;
  thread_local std::vector<double> dx;
  for (std::size_t li = layers.size() - 1; li >= 1; --li) {
    const LayerSpec& l = layers[li];
    const Shape& in_shape = model.shapes[li - 1];
    const std::vector<double>& in = cache.outputs[li - 1];
    const std::vector<double>& out = cache.outputs[li];
    const bool need_input_grad = li > 1;
    switch (l.kind) {
      case LayerKind::kDense: {
        const ParamTensor& p = model.params[li];
        if (l.activation == Activation::kReLU) {
          for (std::size_t k = 0; k < delta.size(); ++k) {
            if (out[k] <= 0.0) delta[k] = 0.0;
          }
        }
        ConstMapMat dy(delta.data(), n, p.rows);
        ParamGrad& g = grads[li];
        g.weights.resize(p.weights.size());
        g.bias.resize(p.rows);
        MapMat(g.weights.data(), p.rows, p.cols).noalias() = dy.transpose() * ConstMapMat(in.data(), n, p.cols);
        // Plain loop: Eigen reductions peel by pointer alignment, which would
        // make the summation order depend on the heap address.
        std::fill(g.bias.begin(), g.bias.end(), 0.0);
        for (int s = 0; s < n; ++s) {
          const double* row = delta.data() + static_cast<std::size_t>(s) * p.rows;
          for (int r = 0; r < p.rows; ++r) g.bias[r] += row[r];
        }
        if (need_input_grad) {
          dx.resize(static_cast<std::size_t>(n) * p.cols);
          MapMat(dx.data(), n, p.cols).noalias() = dy * ConstMapMat(p.weights.data(), p.rows, p.cols);
          delta.swap(dx);
        }
        break;
      }
      case LayerKind::kConv2D: {
        const ParamTensor& p = model.params[li];
        const ConvDims d{in_shape.channels, p.rows, n, in_shape.height, in_shape.width};
        for (std::size_t k = 0; k < delta.size(); ++k) {
          if (out[k] <= 0.0) delta[k] = 0.0;
        }
        ParamGrad& g = grads[li];
        g.weights.resize(p.weights.size());
        g.bias.resize(p.rows);
        conv3x3_weight_grad(in.data(), delta.data(), g.weights.data(), d);
        const std::size_t m = static_cast<std::size_t>(n) * d.plane();
        for (int r = 0; r < p.rows; ++r) {
          const double* row = delta.data() + static_cast<std::size_t>(r) * m;
          double sum = 0.0;
          for (std::size_t k = 0; k < m; ++k) sum += row[k];
          g.bias[r] = sum;
        }
        if (need_input_grad) {
          flip_kernel(p, d.cin, flipped);
          conv3x3(delta.data(), flipped.data(), dx, {d.cout, d.cin, n, d.h, d.w});
          delta.swap(dx);
        }
        break;
      }
      case LayerKind::kMaxPool2D: {
        dx.assign(in.size(), 0.0);
        const auto& idx = cache.argmax[li];
        for (std::size_t k = 0; k < idx.size(); ++k) dx[idx[k]] += delta[k];
        delta.swap(dx);
        break;
      }
      case LayerKind::kFlatten: {
        const std::size_t plane = static_cast<std::size_t>(in_shape.height) * in_shape.width;
        const std::size_t features = static_cast<std::size_t>(in_shape.channels) * plane;
        dx.resize(delta.size());
        for (int c = 0; c < in_shape.channels; ++c) {
          for (int s = 0; s < n; ++s) {
            const double* src = delta.data() + s * features + c * plane;
            std::copy(src, src + plane, dx.data() + (static_cast<std::size_t>(c) * n + s) * plane);
          }
        }
        delta.swap(dx);
        break;
      }
      case LayerKind::kDropout: {
        const auto& mask = cache.masks[li];
        if (!mask.empty()) {
          const double scale = 1.0 / (1.0 - l.rate);
          for (std::size_t k = 0; k < delta.size(); ++k) delta[k] = mask[k] ? delta[k] * scale : 0.0;
        }
        break;
      }
      case LayerKind::kInput:
        break;
    }
  }
  return grads;
}

void sgd_step(Model& model, const Gradients& grads, double learning_rate, double momentum) {
  for (std::size_t li = 0; li < model.params.size(); ++li) {
    ParamTensor& p = model.params[li];
    if (p.empty()) continue;
    const ParamGrad& g = grads[li];
    for (std::size_t k = 0; k < p.weights.size(); ++k) {
      p.weight_velocity[k] = momentum * p.weight_velocity[k] - learning_rate * g.weights[k];
      p.weights[k] += p.weight_velocity[k];
    }
    for (std::size_t k = 0; k < p.bias.size(); ++k) {
      p.bias_velocity[k] = momentum * p.bias_velocity[k] - learning_rate * g.bias[k];
      p.bias[k] += p.bias_velocity[k];
    }
  }
}

Label predict_label(const ForwardResult& fwd, int sample) {
  return fwd.probability(sample, 1) > fwd.probability(sample, 0) ? Label::kMalignant : Label::kBenign;
}

namespace {

// True when both passes took the same branch at every ReLU and max-pool, so
// the loss is smooth between them and a central difference is meaningful.
bool same_activation_pattern(const Model& model, const ForwardCache& a, const ForwardCache& b) {
  const auto& layers = model.config.layers;
  for (std::size_t li = 1; li < layers.size(); ++li) {
    const LayerSpec& l = layers[li];
    if (l.kind == LayerKind::kMaxPool2D) {
      if (a.argmax[li] != b.argmax[li]) return false;
    } else if (l.kind == LayerKind::kConv2D ||
               (l.kind == LayerKind::kDense && l.activation == Activation::kReLU)) {
      const auto& x = a.outputs[li];
      const auto& y = b.outputs[li];
      for (std::size_t k = 0; k < x.size(); ++k) {
        if ((x[k] > 0.0) != (y[k] > 0.0)) return false;
      }
    }
  }
  return true;
}

}  // namespace

GradCheckReport grad_check_report(const Model& model, std::span<const ImageBuffer> batch,
                                  std::span<const Label> labels, int num_params,
                                  std::uint64_t seed) {
  const ForwardResult fwd = forward(model, batch, Mode::kEval);
  const Gradients analytic = backward(model, fwd, labels);

  struct TensorRef {
    std::size_t layer;
    bool bias;
  };
  std::vector<TensorRef> tensors;
  for (std::size_t li = 0; li < model.params.size(); ++li) {
    if (model.params[li].empty()) continue;
    tensors.push_back({li, false});
    tensors.push_back({li, true});
  }
  GradCheckReport report;
  if (tensors.empty()) return report;

  Model probe = model;
  Rng rng(derive_stream(seed, "grad-check", 0, "init"));
  Rng unused(RngState{});
  constexpr double kEps = 1e-5;
  const int classes = fwd.classes;
  ForwardCache up = fwd.cache;
  ForwardCache down = fwd.cache;
  // Perturbing layer li leaves outputs [0, li) untouched, so only the tail is recomputed.
  auto perturbed_loss = [&](ForwardCache& cache, std::size_t layer) {
    for (std::size_t i = 0; i < layer; ++i) cache.outputs[i] = fwd.cache.outputs[i];
    run_layers(probe, cache, layer, Mode::kEval, unused);
    return cross_entropy(cache.outputs.back(), classes, labels);
  };
  const long max_draws = 20L * num_params;
  for (long draw = 0; report.checked < num_params && draw < max_draws; ++draw) {
    const TensorRef& t = tensors[static_cast<std::size_t>(draw) % tensors.size()];
    auto& values = t.bias ? probe.params[t.layer].bias : probe.params[t.layer].weights;
    const auto& grad = t.bias ? analytic[t.layer].bias : analytic[t.layer].weights;
    const std::size_t idx = rng.below(values.size());
    const double saved = values[idx];
    values[idx] = saved + kEps;
    const double loss_up = perturbed_loss(up, t.layer);
    values[idx] = saved - kEps;
    const double loss_down = perturbed_loss(down, t.layer);
    values[idx] = saved;
    if (!same_activation_pattern(model, up, down) || !same_activation_pattern(model, up, fwd.cache)) {
      ++report.skipped_kinks;
      continue;
    }
    const double numeric = (loss_up - loss_down) / (2.0 * kEps);
    const double a = grad[idx];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    report.max_relative_error = std::max(report.max_relative_error, std::abs(a - numeric) / denom);
    ++report.checked;
  }
  return report;
}

double grad_check(const Model& model, std::span<const ImageBuffer> batch,
                  std::span<const Label> labels, int num_params, std::uint64_t seed) {
  return grad_check_report(model, batch, labels, num_params, seed).max_relative_error;
}

namespace {

constexpr char kMagic[5] = {'S', 'B', 'L', 'D', '1'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const unsigned char> b) : b_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  void expect_magic() {
    need(sizeof(kMagic));
    if (std::memcmp(b_.data(), kMagic, sizeof(kMagic)) != 0) {
      throw Error(ErrorCode::kMalformedHeader, "model file lacks SBLD1 magic");
    }
    pos_ += sizeof(kMagic);
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t k) {
    if (b_.size() - pos_ < k) throw Error(ErrorCode::kTruncatedPayload, "model file truncated");
  }
  std::span<const unsigned char> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> serialize_model(const Model& model) {
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  std::uint32_t count = 0;
  for (const auto& p : model.params) count += p.empty() ? 0 : 1;
  put_u32(out, count);
  for (std::size_t li = 0; li < model.params.size(); ++li) {
    const auto& p = model.params[li];
    if (p.empty()) continue;
    put_u32(out, static_cast<std::uint32_t>(li));
    put_u32(out, static_cast<std::uint32_t>(p.rows));
    put_u32(out, static_cast<std::uint32_t>(p.cols));
    for (double w : p.weights) put_f64(out, w);
    for (double b : p.bias) put_f64(out, b);
  }
  return out;
}

Model deserialize_model(const ModelConfig& config, std::span<const unsigned char> bytes) {
  Model m = init_model(config, 0);
  ByteReader r(bytes);
  r.expect_magic();
  std::uint32_t expected = 0;
  for (const auto& p : m.params) expected += p.empty() ? 0 : 1;
  if (r.u32() != expected) throw Error(ErrorCode::kShapeMismatch, "model file layer count differs from config");
  for (std::size_t li = 0; li < m.params.size(); ++li) {
    auto& p = m.params[li];
    if (p.empty()) continue;
    const std::uint32_t idx = r.u32();
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (idx != li || rows != static_cast<std::uint32_t>(p.rows) || cols != static_cast<std::uint32_t>(p.cols)) {
      throw Error(ErrorCode::kShapeMismatch, "model file tensor for layer " + std::to_string(li) + " differs from config");
    }
    for (auto& w : p.weights) w = r.f64();
    for (auto& b : p.bias) b = r.f64();
  }
  if (!r.done()) throw Error(ErrorCode::kMalformedHeader, "trailing bytes in model file");
  return m;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Model load_model(const ModelConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(config, bytes);
}

}  // namespace sizeaug
