// SPDX-License-Identifier: Apache-2.0
#include "flicker/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "flicker/error.hpp"

namespace flicker {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Tensor image_to_tensor(const Image& image) {
  Tensor t(Image::kChannels, image.height, image.width);
  const std::size_t plane = std::size_t(image.height) * image.width;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < Image::kChannels; ++c) {
        t.data[c * plane + std::size_t(y) * image.width + x] = image.at(y, x, c);
      }
    }
  }
  return t;
}

Image tensor_to_image(const Tensor& t) {
  Image image(t.height, t.width);
  const std::size_t plane = std::size_t(t.height) * t.width;
  for (int y = 0; y < t.height; ++y) {
    for (int x = 0; x < t.width; ++x) {
      for (int c = 0; c < Image::kChannels; ++c) {
        image.at(y, x, c) = t.data[c * plane + std::size_t(y) * t.width + x];
      }
    }
  }
  return image;
}

Tensor conv_forward(const Conv2d& conv, const Tensor& in) {
  const int h = in.height;
  const int w = in.width;
  Tensor out(conv.out_channels, h, w);
  for (int o = 0; o < conv.out_channels; ++o) {
    double* dst = &out.data[std::size_t(o) * h * w];
    std::fill(dst, dst + std::size_t(h) * w, conv.bias[o]);
    for (int i = 0; i < conv.in_channels; ++i) {
      const double* src = &in.data[std::size_t(i) * h * w];
      const double* kernel = &conv.weight[(std::size_t(o) * conv.in_channels + i) * 9];
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double k = kernel[ky * 3 + kx];
          const int x_lo = std::max(0, 1 - kx);
          const int x_hi = std::min(w, w + 1 - kx);
          for (int y = std::max(0, 1 - ky); y < std::min(h, h + 1 - ky); ++y) {
            double* row = dst + std::size_t(y) * w;
            const double* srow = src + std::size_t(y + ky - 1) * w + (kx - 1);
            for (int x = x_lo; x < x_hi; ++x) row[x] += k * srow[x];
          }
        }
      }
    }
  }
  return out;
}

Tensor conv_backward(const Conv2d& conv, const Tensor& in, const Tensor& dout,
                     std::vector<double>* dweight, std::vector<double>* dbias) {
  const int h = in.height;
  const int w = in.width;
  Tensor din(conv.in_channels, h, w);
  for (int o = 0; o < conv.out_channels; ++o) {
    const double* g = &dout.data[std::size_t(o) * h * w];
    if (dbias) {
      double acc = 0.0;
      for (std::size_t p = 0; p < std::size_t(h) * w; ++p) acc += g[p];
      (*dbias)[o] += acc;
    }
    for (int i = 0; i < conv.in_channels; ++i) {
      const double* src = &in.data[std::size_t(i) * h * w];
      double* dsrc = &din.data[std::size_t(i) * h * w];
      const std::size_t kbase = (std::size_t(o) * conv.in_channels + i) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double k = conv.weight[kbase + ky * 3 + kx];
          const int x_lo = std::max(0, 1 - kx);
          const int x_hi = std::min(w, w + 1 - kx);
          double acc = 0.0;
          for (int y = std::max(0, 1 - ky); y < std::min(h, h + 1 - ky); ++y) {
            const double* grow = g + std::size_t(y) * w;
            const std::size_t off = std::size_t(y + ky - 1) * w + (kx - 1);
            double* drow = dsrc + off;
            for (int x = x_lo; x < x_hi; ++x) drow[x] += k * grow[x];
            if (dweight) {
              const double* srow = src + off;
              for (int x = x_lo; x < x_hi; ++x) acc += grow[x] * srow[x];
            }
          }
          if (dweight) (*dweight)[kbase + ky * 3 + kx] += acc;
        }
      }
    }
  }
  return din;
}

Tensor standardize_forward(const ChannelStandardize& layer, const Tensor& in) {
  Tensor out(in.channels, in.height, in.width);
  const std::size_t plane = std::size_t(in.height) * in.width;
  for (int c = 0; c < in.channels; ++c) {
    const double* src = &in.data[c * plane];
    double mean = 0.0;
    for (std::size_t p = 0; p < plane; ++p) mean += src[p];
    mean /= double(plane);
    double var = 0.0;
    for (std::size_t p = 0; p < plane; ++p) var += (src[p] - mean) * (src[p] - mean);
    var /= double(plane);
    const double inv_std = 1.0 / std::sqrt(var + layer.epsilon);
    double* dst = &out.data[c * plane];
    for (std::size_t p = 0; p < plane; ++p) dst[p] = (src[p] - mean) * inv_std;
  }
  return out;
}

Tensor standardize_backward(const ChannelStandardize& layer, const Tensor& in, const Tensor& out,
                            const Tensor& dout) {
  Tensor din(in.channels, in.height, in.width);
  const std::size_t plane = std::size_t(in.height) * in.width;
  for (int c = 0; c < in.channels; ++c) {
    const double* src = &in.data[c * plane];
    const double* y = &out.data[c * plane];
    const double* g = &dout.data[c * plane];
    double mean = 0.0;
    for (std::size_t p = 0; p < plane; ++p) mean += src[p];
    mean /= double(plane);
    double var = 0.0;
    for (std::size_t p = 0; p < plane; ++p) var += (src[p] - mean) * (src[p] - mean);
    var /= double(plane);
    const double inv_std = 1.0 / std::sqrt(var + layer.epsilon);
    double g_mean = 0.0;
    double gy_mean = 0.0;
    for (std::size_t p = 0; p < plane; ++p) {
      g_mean += g[p];
      gy_mean += g[p] * y[p];
    }
    g_mean /= double(plane);
    gy_mean /= double(plane);
    double* d = &din.data[c * plane];
    for (std::size_t p = 0; p < plane; ++p) d[p] = inv_std * (g[p] - g_mean - y[p] * gy_mean);
  }
  return din;
}

Tensor pool_forward(const AvgPool& pool, const Tensor& in) {
  const int k = pool.size;
  const double norm = 1.0 / (k * k);
  Tensor out(in.channels, in.height / k, in.width / k);
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < k; ++dy) {
          const double* row = &in.data[(std::size_t(c) * in.height + k * y + dy) * in.width + k * x];
          for (int dx = 0; dx < k; ++dx) acc += row[dx];
        }
        out.data[(std::size_t(c) * out.height + y) * out.width + x] = norm * acc;
      }
    }
  }
  return out;
}

Tensor pool_backward(const AvgPool& pool, const Tensor& in, const Tensor& dout) {
  const int k = pool.size;
  const double norm = 1.0 / (k * k);
  Tensor din(in.channels, in.height, in.width);
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < dout.height; ++y) {
      for (int x = 0; x < dout.width; ++x) {
        const double g = norm * dout.data[(std::size_t(c) * dout.height + y) * dout.width + x];
        for (int dy = 0; dy < k; ++dy) {
          double* row = &din.data[(std::size_t(c) * in.height + k * y + dy) * in.width + k * x];
          for (int dx = 0; dx < k; ++dx) row[dx] += g;
        }
      }
    }
  }
  return din;
}

Tensor dense_forward(const Dense& dense, const Tensor& in) {
  Tensor out(dense.out_features, 1, 1);
  for (int o = 0; o < dense.out_features; ++o) {
    const double* row = &dense.weight[std::size_t(o) * dense.in_features];
    double acc = dense.bias[o];
    for (int i = 0; i < dense.in_features; ++i) acc += row[i] * in.data[i];
    out.data[o] = acc;
  }
  return out;
}

Tensor dense_backward(const Dense& dense, const Tensor& in, const Tensor& dout,
                      std::vector<double>* dweight, std::vector<double>* dbias) {
  Tensor din = in;
  std::fill(din.data.begin(), din.data.end(), 0.0);
  for (int o = 0; o < dense.out_features; ++o) {
    const double g = dout.data[o];
    if (g == 0.0) continue;
    const double* row = &dense.weight[std::size_t(o) * dense.in_features];
    for (int i = 0; i < dense.in_features; ++i) din.data[i] += row[i] * g;
    if (dweight) {
      double* drow = &(*dweight)[std::size_t(o) * dense.in_features];
      for (int i = 0; i < dense.in_features; ++i) drow[i] += g * in.data[i];
    }
    if (dbias) (*dbias)[o] += g;
  }
  return din;
}

void he_init(std::vector<double>& w, int fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (double& v : w) v = dist(rng);
}

}  // namespace

CnnModel::CnnModel(std::vector<Layer> layers, int height, int width, std::vector<std::string> labels)
    : layers_(std::move(layers)), height_(height), width_(width), labels_(std::move(labels)) {
  require(height_ > 0 && width_ > 0, "invalid_model", "model input size must be positive");
  // Walk the shapes once so a malformed architecture fails at construction.
  int c = Image::kChannels, h = height_, w = width_;
  for (const Layer& layer : layers_) {
    std::visit(Overloaded{
                   [&](const Conv2d& conv) {
                     require(conv.in_channels == c, "invalid_model", "conv2d input channels mismatch");
                     require(conv.weight.size() == std::size_t(conv.out_channels) * c * 9 &&
                                 conv.bias.size() == std::size_t(conv.out_channels),
                             "invalid_model", "conv2d parameter size mismatch");
                     c = conv.out_channels;
                   },
                   [&](const ChannelStandardize& st) {
                     require(st.epsilon > 0.0, "invalid_model", "standardize epsilon must be > 0");
                   },
                   [&](const Relu&) {},
                   [&](const AvgPool& pool) {
                     require(pool.size >= 1 && h % pool.size == 0 && w % pool.size == 0,
                             "invalid_model", "avgpool size must divide the spatial size");
                     h /= pool.size;
                     w /= pool.size;
                   },
                   [&](const Dense& dense) {
                     require(dense.in_features == c * h * w, "invalid_model",
                             "dense input features mismatch");
                     require(dense.weight.size() ==
                                     std::size_t(dense.out_features) * dense.in_features &&
                                 dense.bias.size() == std::size_t(dense.out_features),
                             "invalid_model", "dense parameter size mismatch");
                     c = dense.out_features;
                     h = w = 1;
                   }},
               layer);
  }
  require(h == 1 && w == 1 && c == static_cast<int>(labels_.size()), "invalid_model",
          "final layer must produce one logit per label");
}

CnnModel CnnModel::reference(const CnnShape& s, std::vector<std::string> labels, Rng& rng) {
  const int stride = s.pool1 * s.pool2;
  require(s.pool1 >= 1 && s.pool2 >= 1 && s.height % stride == 0 && s.width % stride == 0,
          "invalid_model", "reference CNN input sides must be divisible by the pooling stride");
  require(static_cast<int>(labels.size()) == s.classes, "invalid_model",
          "label count must equal class count");
  Conv2d c1{Image::kChannels, s.conv1_channels,
            std::vector<double>(std::size_t(s.conv1_channels) * Image::kChannels * 9),
            std::vector<double>(s.conv1_channels, 0.0)};
  Conv2d c2{s.conv1_channels, s.conv2_channels,
            std::vector<double>(std::size_t(s.conv2_channels) * s.conv1_channels * 9),
            std::vector<double>(s.conv2_channels, 0.0)};
  const int flat = s.conv2_channels * (s.height / stride) * (s.width / stride);
  Dense d1{flat, s.hidden, std::vector<double>(std::size_t(s.hidden) * flat),
           std::vector<double>(s.hidden, 0.0)};
  Dense d2{s.hidden, s.classes, std::vector<double>(std::size_t(s.classes) * s.hidden),
           std::vector<double>(s.classes, 0.0)};
  he_init(c1.weight, Image::kChannels * 9, rng);
  he_init(c2.weight, s.conv1_channels * 9, rng);
  he_init(d1.weight, flat, rng);
  he_init(d2.weight, s.hidden, rng);
  return CnnModel({ChannelStandardize{}, c1, Relu{}, AvgPool{s.pool1}, c2, Relu{}, AvgPool{s.pool2}, d1, Relu{}, d2}, s.height,
                  s.width, std::move(labels));
}

std::vector<Tensor> CnnModel::forward_trace(const Image& image) const {
  check_input(image);
  std::vector<Tensor> trace;
  trace.reserve(layers_.size() + 1);
  trace.push_back(image_to_tensor(image));
  for (const Layer& layer : layers_) {
    const Tensor& in = trace.back();
    trace.push_back(std::visit(Overloaded{[&](const ChannelStandardize& st) {
                                            return standardize_forward(st, in);
                                          },
                                          [&](const Conv2d& conv) { return conv_forward(conv, in); },
                                          [&](const Relu&) {
                                            Tensor out = in;
                                            for (double& v : out.data) v = v > 0.0 ? v : 0.0;
                                            return out;
                                          },
                                          [&](const AvgPool& pool) { return pool_forward(pool, in); },
                                          [&](const Dense& dense) { return dense_forward(dense, in); }},
                               layer));
  }
  return trace;
}

Tensor CnnModel::backward(const std::vector<Tensor>& trace, std::vector<double> dlogits,
                          ParamGradients* grads) const {
  Tensor grad(static_cast<int>(dlogits.size()), 1, 1);
  grad.data = std::move(dlogits);
  // Parameter tensors are numbered in layer order; walk them in reverse.
  int param_index = 0;
  for (const Layer& layer : layers_) {
    if (std::holds_alternative<Conv2d>(layer) || std::holds_alternative<Dense>(layer)) param_index += 2;
  }
  for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
    const Tensor& in = trace[li];
    const Tensor& out = trace[li + 1];
    const Layer& layer = layers_[li];
    grad = std::visit(
        Overloaded{[&](const ChannelStandardize& st) {
                     return standardize_backward(st, in, out, grad);
                   },
                   [&](const Conv2d& conv) {
                     param_index -= 2;
                     return conv_backward(conv, in, grad,
                                          grads ? &grads->tensors[param_index] : nullptr,
                                          grads ? &grads->tensors[param_index + 1] : nullptr);
                   },
                   [&](const Relu&) {
                     Tensor d = grad;
                     for (std::size_t i = 0; i < d.data.size(); ++i) {
                       if (!(out.data[i] > 0.0)) d.data[i] = 0.0;
                     }
                     return d;
                   },
                   [&](const AvgPool& pool) { return pool_backward(pool, in, grad); },
                   [&](const Dense& dense) {
                     param_index -= 2;
                     Tensor d = dense_backward(dense, in, grad,
                                               grads ? &grads->tensors[param_index] : nullptr,
                                               grads ? &grads->tensors[param_index + 1] : nullptr);
                     d.channels = in.channels;
                     d.height = in.height;
                     d.width = in.width;
                     return d;
                   }},
        layer);
  }
  return grad;
}

ClassifierOutput CnnModel::forward(const Image& image) const {
  std::vector<Tensor> trace = forward_trace(image);
  return ClassifierOutput::from_logits(std::move(trace.back().data));
}

namespace {
double cross_entropy(const ClassifierOutput& out, int target) {
  const double top = *std::max_element(out.logits.begin(), out.logits.end());
  double total = 0.0;
  for (double z : out.logits) total += std::exp(z - top);
  return top + std::log(total) - out.logits[target];
}
}  // namespace

LossGradient CnnModel::loss_and_input_gradient(const Image& image, int target) const {
  check_target(target);
  std::vector<Tensor> trace = forward_trace(image);
  LossGradient result;
  result.output = ClassifierOutput::from_logits(trace.back().data);
  result.loss = cross_entropy(result.output, target);
  std::vector<double> dlogits = result.output.probabilities;
  dlogits[target] -= 1.0;
  result.grad = tensor_to_image(backward(trace, std::move(dlogits), nullptr));
  return result;
}

double CnnModel::accumulate_gradients(const Image& image, int target, ParamGradients& grads) const {
  check_target(target);
  std::vector<Tensor> trace = forward_trace(image);
  const ClassifierOutput out = ClassifierOutput::from_logits(trace.back().data);
  std::vector<double> dlogits = out.probabilities;
  dlogits[target] -= 1.0;
  backward(trace, std::move(dlogits), &grads);
  return cross_entropy(out, target);
}

ParamGradients CnnModel::zero_gradients() const {
  ParamGradients g;
  for (const Layer& layer : layers_) {
    if (const auto* conv = std::get_if<Conv2d>(&layer)) {
      g.tensors.emplace_back(conv->weight.size(), 0.0);
      g.tensors.emplace_back(conv->bias.size(), 0.0);
    } else if (const auto* dense = std::get_if<Dense>(&layer)) {
      g.tensors.emplace_back(dense->weight.size(), 0.0);
      g.tensors.emplace_back(dense->bias.size(), 0.0);
    }
  }
  return g;
}

std::vector<std::span<double>> CnnModel::parameters() {
  std::vector<std::span<double>> params;
  for (Layer& layer : layers_) {
    if (auto* conv = std::get_if<Conv2d>(&layer)) {
      params.emplace_back(conv->weight);
      params.emplace_back(conv->bias);
    } else if (auto* dense = std::get_if<Dense>(&layer)) {
      params.emplace_back(dense->weight);
      params.emplace_back(dense->bias);
    }
  }
  return params;
}

// Serialization ---------------------------------------------------------------

std::string CnnModel::to_json() const {
  using nlohmann::json;
  json layers = json::array();
  for (const Layer& layer : layers_) {
    layers.push_back(std::visit(
        Overloaded{[](const Conv2d& c) {
                     return json{{"type", "conv2d"}, {"in", c.in_channels}, {"out", c.out_channels},
                                 {"kernel", 3}, {"weight", c.weight}, {"bias", c.bias}};
                   },
                   [](const ChannelStandardize& st) {
                     return json{{"type", "standardize"}, {"epsilon", st.epsilon}};
                   },
                   [](const Relu&) { return json{{"type", "relu"}}; },
                   [](const AvgPool& pool) { return json{{"type", "avgpool"}, {"size", pool.size}}; },
                   [](const Dense& d) {
                     return json{{"type", "dense"}, {"in", d.in_features}, {"out", d.out_features},
                                 {"weight", d.weight}, {"bias", d.bias}};
                   }},
        layer));
  }
  json doc{{"format", "flicker-cnn"},
           {"version", 1},
           {"input", {{"height", height_}, {"width", width_}, {"channels", Image::kChannels}}},
           {"labels", labels_},
           {"layers", layers}};
  return doc.dump();
}

CnnModel CnnModel::from_json(const std::string& text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error("parse", std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    require(doc.at("format") == "flicker-cnn", "parse", "not a flicker-cnn model file");
    require(doc.at("version") == 1, "parse", "unsupported model version");
    std::vector<Layer> layers;
    for (const json& l : doc.at("layers")) {
      const std::string type = l.at("type");
      if (type == "conv2d") {
        require(l.at("kernel") == 3, "parse", "only 3x3 convolutions are supported");
        layers.emplace_back(Conv2d{l.at("in"), l.at("out"), l.at("weight"), l.at("bias")});
      } else if (type == "standardize") {
        layers.emplace_back(ChannelStandardize{l.at("epsilon").get<double>()});
      } else if (type == "relu") {
        layers.emplace_back(Relu{});
      } else if (type == "avgpool") {
        layers.emplace_back(AvgPool{l.at("size").get<int>()});
      } else if (type == "dense") {
        layers.emplace_back(Dense{l.at("in"), l.at("out"), l.at("weight"), l.at("bias")});
      } else {
        throw Error("parse", "unknown layer type '" + type + "'");
      }
    }
    return CnnModel(std::move(layers), doc.at("input").at("height"), doc.at("input").at("width"),
                    doc.at("labels").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw Error("parse", std::string("malformed model file: ") + e.what());
  }
}

void CnnModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "io", "cannot write model " + path.string());
  out << to_json() << '\n';
}

CnnModel CnnModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "io", "cannot read model " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

}  // namespace flicker
