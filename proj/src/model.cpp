#include "jmod2/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "jmod2/image_io.hpp"
#include "jmod2/kernels.hpp"

namespace jmod2 {
namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }

const char* branch_prefix(Branch b) {
  switch (b) {
    case Branch::encoder: return "enc";
    case Branch::depth: return "depth";
    case Branch::detection: return "det";
  }
  return "?";
}

// Runs one branch, filling acts[0..ops.size()] (acts[0] must hold the input).
void run_ops(const std::vector<Model::Op>& ops, const ParameterSet& params, std::vector<Tensor>& acts) {
  acts.resize(ops.size() + 1);
  for (std::size_t k = 0; k < ops.size(); ++k) {
    const Tensor& in = acts[k];
    Tensor& out = acts[k + 1];
    switch (ops[k].kind) {
      case Model::Op::conv: {
        const ConvLayer& l = params.layers[ops[k].layer];
        kernels::conv2d_forward(in, l.weights, l.bias, l.kernel, out);
        break;
      }
      case Model::Op::elu: kernels::elu_forward(in, out); break;
      case Model::Op::avg_pool: kernels::avg_pool2_forward(in, out); break;
      case Model::Op::up_nearest: kernels::upsample_nearest2_forward(in, out); break;
      case Model::Op::up_bilinear: kernels::upsample_bilinear2_forward(in, out); break;
    }
  }
}

// Backpropagates `grad` (w.r.t. acts.back()) through the branch. Returns the
// gradient w.r.t. acts[0] unless need_input_grad is false.
Tensor backprop_ops(const std::vector<Model::Op>& ops, const ParameterSet& params,
                    const std::vector<Tensor>& acts, Tensor grad, ParameterSet& grads,
                    bool need_input_grad) {
  Tensor next;
  for (std::size_t k = ops.size(); k-- > 0;) {
    const bool want_input = need_input_grad || k > 0;
    switch (ops[k].kind) {
      case Model::Op::conv: {
        const ConvLayer& l = params.layers[ops[k].layer];
        ConvLayer& g = grads.layers[ops[k].layer];
        kernels::conv2d_backward(acts[k], l.weights, l.kernel, grad, want_input ? &next : nullptr,
                                 g.weights, g.bias);
        break;
      }
      case Model::Op::elu: kernels::elu_backward(acts[k], acts[k + 1], grad, next); break;
      case Model::Op::avg_pool: kernels::avg_pool2_backward(grad, next); break;
      case Model::Op::up_nearest: kernels::upsample_nearest2_backward(grad, next); break;
      case Model::Op::up_bilinear: kernels::upsample_bilinear2_backward(grad, next); break;
    }
    if (!want_input) return {};
    std::swap(grad, next);
  }
  return grad;
}

}  // namespace

double depth_from_logit(double z) {
  return std::min(kDepthFloorM + kDepthUnitM * softplus(z - kDepthLogitShift), kFarClampM);
}

std::string to_string(ScalePreset preset) { return preset == ScalePreset::full ? "full" : "toy"; }

ScalePreset parse_scale_preset(const std::string& text) {
  if (text == "full") return ScalePreset::full;
  if (text == "toy") return ScalePreset::toy;
  throw std::invalid_argument("unknown scale_preset '" + text + "' (expected full or toy)");
}

ModelConfig ModelConfig::full(int base_channels) {
  return {ScalePreset::full, 256, 160, base_channels, GridSpec{8, 5, 32}};
}

ModelConfig ModelConfig::toy(int base_channels) {
  return {ScalePreset::toy, 64, 40, base_channels, GridSpec{8, 5, 8}};
}

void ModelConfig::validate() const {
  if (base_channels < 1) throw std::invalid_argument("base_channels must be >= 1");
  if (grid.image_width() != input_w || grid.image_height() != input_h) {
    throw std::invalid_argument("input size must equal cells * cell_px");
  }
  const int stride = 1 << encoder_stages();
  if (input_w % stride != 0 || input_h % stride != 0 || input_w / stride != grid.cells_x ||
      input_h / stride != grid.cells_y) {
    throw std::invalid_argument("encoder output does not match the detection grid");
  }
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const ConvLayer& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

double& ParameterSet::scalar(std::size_t index) {
  return const_cast<double&>(static_cast<const ParameterSet&>(*this).scalar_ref(index));
}

double ParameterSet::scalar(std::size_t index) const { return scalar_ref(index); }

const double& ParameterSet::scalar_ref(std::size_t index) const {
  for (const ConvLayer& l : layers) {
    if (index < l.weights.size()) return l.weights[index];
    index -= l.weights.size();
    if (index < l.bias.size()) return l.bias[index];
    index -= l.bias.size();
  }
  throw std::out_of_range("parameter index out of range");
}

Branch ParameterSet::scalar_branch(std::size_t index) const {
  for (const ConvLayer& l : layers) {
    const std::size_t n = l.weights.size() + l.bias.size();
    if (index < n) return l.branch;
    index -= n;
  }
  throw std::out_of_range("parameter index out of range");
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet z = *this;
  z.set_zero();
  return z;
}

void ParameterSet::set_zero() {
  for (ConvLayer& l : layers) {
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
}

void ParameterSet::add_scaled(const ParameterSet& other, double scale) {
  if (other.layers.size() != layers.size()) throw ShapeError("parameter sets differ in layer count");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.weights.size() != b.weights.size() || a.bias.size() != b.bias.size()) {
      throw ShapeError("parameter sets differ in layer " + a.name);
    }
    for (std::size_t j = 0; j < a.weights.size(); ++j) a.weights[j] += scale * b.weights[j];
    for (std::size_t j = 0; j < a.bias.size(); ++j) a.bias[j] += scale * b.bias[j];
  }
}

Model::Model(ModelConfig config) : config_(config) {
  config_.validate();
  int count[3] = {0, 0, 0};
  auto add_conv = [&](std::vector<Op>& ops, Branch branch, int in_c, int out_c, int kernel) {
    ConvLayer l;
    l.branch = branch;
    l.name = std::string(branch_prefix(branch)) + ".conv" + std::to_string(count[static_cast<int>(branch)]++);
    l.in_channels = in_c;
    l.out_channels = out_c;
    l.kernel = kernel;
    ops.push_back({Op::conv, static_cast<int>(layer_shapes_.size())});
    layer_shapes_.push_back(std::move(l));
  };

  const int base = config_.base_channels;
  const int stages = config_.encoder_stages();
  int c = 3;
  for (int s = 0; s < stages; ++s) {
    const int width = base * std::min(1 << s, 8);
    add_conv(encoder_ops_, Branch::encoder, c, width, 3);
    encoder_ops_.push_back({Op::elu});
    add_conv(encoder_ops_, Branch::encoder, width, width, 3);
    encoder_ops_.push_back({Op::elu});
    encoder_ops_.push_back({Op::avg_pool});
    c = width;
  }
  const int encoder_channels = c;

  // Upsampling convolutions back to half resolution, then bilinear x2 and a
  // final convolution to one depth channel.
  for (int u = 0; u < stages - 1; ++u) {
    const int width = std::max(base, c / 2);
    depth_ops_.push_back({Op::up_nearest});
    add_conv(depth_ops_, Branch::depth, c, width, 3);
    depth_ops_.push_back({Op::elu});
    c = width;
  }
  depth_ops_.push_back({Op::up_bilinear});
  add_conv(depth_ops_, Branch::depth, c, 1, 3);

  // Nine convolutions at grid resolution; the last is 1x1 onto the 7 channels.
  c = encoder_channels;
  for (int i = 0; i < 8; ++i) {
    add_conv(detection_ops_, Branch::detection, c, encoder_channels, 3);
    detection_ops_.push_back({Op::elu});
    c = encoder_channels;
  }
  add_conv(detection_ops_, Branch::detection, c, kGridChannels, 1);
}

ParameterSet init_parameters(const ModelConfig& config, std::uint64_t seed) {
  const Model model(config);
  ParameterSet params;
  params.config = config;
  params.seed = seed;
  params.layers = model.layer_shapes();
  std::mt19937_64 rng(seed);
  for (ConvLayer& l : params.layers) {
    const double ksq = static_cast<double>(l.kernel) * l.kernel;
    const double bound = std::sqrt(6.0 / (l.in_channels * ksq + l.out_channels * ksq));
    std::uniform_real_distribution<double> dist(-bound, bound);
    l.weights.resize(static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel);
    for (double& w : l.weights) w = dist(rng);
    l.bias.assign(l.out_channels, 0.0);
  }
  // Confidence starts at the prior object rate instead of 0.5, so the first
  // steps are not spent pushing every empty cell down.
  params.layers.back().bias[kConfidence] = std::log(kConfidencePrior / (1.0 - kConfidencePrior));
  return params;
}

void Model::check_params(const ParameterSet& params) const {
  if (params.layers.size() != layer_shapes_.size()) throw ShapeError("parameter set does not match the model");
  for (std::size_t i = 0; i < layer_shapes_.size(); ++i) {
    const ConvLayer& want = layer_shapes_[i];
    const ConvLayer& got = params.layers[i];
    if (got.in_channels != want.in_channels || got.out_channels != want.out_channels ||
        got.kernel != want.kernel ||
        got.weights.size() != static_cast<std::size_t>(want.out_channels) * want.in_channels * want.kernel * want.kernel ||
        got.bias.size() != static_cast<std::size_t>(want.out_channels)) {
      throw ShapeError("parameter layer " + want.name + " has the wrong shape");
    }
  }
}

ModelOutput Model::forward(const ParameterSet& params, const Tensor& rgb, ForwardCache* cache) const {
  check_params(params);
  if (rgb.channels() != 3 || rgb.width() != config_.input_w || rgb.height() != config_.input_h) {
    throw ShapeError("input " + rgb.shape_string() + " does not match the model resolution");
  }
  ForwardCache local;
  ForwardCache& c = cache != nullptr ? *cache : local;

  c.encoder.resize(1);
  c.encoder[0] = rgb;
  run_ops(encoder_ops_, params, c.encoder);
  c.depth.resize(1);
  c.depth[0] = c.encoder.back();
  run_ops(depth_ops_, params, c.depth);
  c.detection.resize(1);
  c.detection[0] = c.encoder.back();
  run_ops(detection_ops_, params, c.detection);

  ModelOutput out;
  const Tensor& z = c.depth.back();
  out.depth = DepthMap(config_.input_w, config_.input_h);
  for (int y = 0; y < config_.input_h; ++y) {
    for (int x = 0; x < config_.input_w; ++x) {
      out.depth.at(x, y) = depth_from_logit(z.at(0, y, x));
    }
  }
  const Tensor& d = c.detection.back();
  out.detections = DetectionGrid(config_.grid);
  for (int row = 0; row < config_.grid.cells_y; ++row) {
    for (int col = 0; col < config_.grid.cells_x; ++col) {
      for (int ch = 0; ch < kGridChannels; ++ch) out.detections.at(row, col, ch) = sigmoid(d.at(ch, row, col));
    }
  }
  return out;
}

void Model::backward(const ParameterSet& params, const ForwardCache& cache, const DepthMap* grad_depth,
                     const DetectionGrid* grad_detections, ParameterSet& grads) const {
  check_params(params);
  check_params(grads);
  if (cache.encoder.size() != encoder_ops_.size() + 1) throw std::logic_error("backward without a forward cache");

  Tensor grad_features;
  if (grad_depth != nullptr) {
    const Tensor& z = cache.depth.back();
    if (grad_depth->width != z.width() || grad_depth->height != z.height()) throw ShapeError("depth gradient shape");
    Tensor g(1, z.height(), z.width());
    for (int y = 0; y < z.height(); ++y) {
      for (int x = 0; x < z.width(); ++x) {
        const double pre = z.at(0, y, x) - kDepthLogitShift;
        const double depth = kDepthFloorM + kDepthUnitM * softplus(pre);
        g.at(0, y, x) = depth < kFarClampM ? grad_depth->at(x, y) * kDepthUnitM * sigmoid(pre) : 0.0;
      }
    }
    grad_features = backprop_ops(depth_ops_, params, cache.depth, std::move(g), grads, true);
  }
  if (grad_detections != nullptr) {
    const Tensor& z = cache.detection.back();
    if (grad_detections->cells_x != z.width() || grad_detections->cells_y != z.height()) {
      throw ShapeError("detection gradient shape");
    }
    Tensor g(kGridChannels, z.height(), z.width());
    for (int row = 0; row < z.height(); ++row) {
      for (int col = 0; col < z.width(); ++col) {
        for (int ch = 0; ch < kGridChannels; ++ch) {
          const double s = sigmoid(z.at(ch, row, col));
          g.at(ch, row, col) = grad_detections->at(row, col, ch) * s * (1.0 - s);
        }
      }
    }
    Tensor gd = backprop_ops(detection_ops_, params, cache.detection, std::move(g), grads, true);
    if (grad_features.size() == 0) {
      grad_features = std::move(gd);
    } else {
      auto dst = grad_features.data();
      const auto src = gd.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  if (grad_features.size() == 0) return;
  backprop_ops(encoder_ops_, params, cache.encoder, std::move(grad_features), grads, false);
}

namespace {

constexpr char kMagic[8] = {'J', 'M', 'O', 'D', '2', 'P', 'R', 'M'};

void put_u32(std::ofstream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 4);
}

void put_f64(std::ofstream& out, const std::vector<double>& values) {
  std::vector<char> buf(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

struct Reader {
  std::vector<char> bytes;
  std::size_t pos = 0;
  std::filesystem::path path;

  void need(std::size_t n) {
    if (pos + n > bytes.size()) throw IoError("truncated parameter file: " + path.string());
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  void f64(std::vector<double>& values) {
    need(values.size() * 8);
    for (double& v : values) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + b])) << (8 * b);
      v = std::bit_cast<double>(bits);
      pos += 8;
    }
  }
};

}  // namespace

void save_parameters(const ParameterSet& params, const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put_u32(out, kParameterFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(params.layers.size()));
    for (const ConvLayer& l : params.layers) {
      put_u32(out, static_cast<std::uint32_t>(l.in_channels));
      put_u32(out, static_cast<std::uint32_t>(l.out_channels));
      put_u32(out, static_cast<std::uint32_t>(l.kernel));
      put_f64(out, l.weights);
      put_f64(out, l.bias);
    }
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
  }
  nlohmann::json sidecar = {{"scale_preset", to_string(params.config.scale_preset)},
                            {"base_channels", params.config.base_channels},
                            {"seed", params.seed},
                            {"format_version", kParameterFormatVersion},
                            {"input_w", params.config.input_w},
                            {"input_h", params.config.input_h}};
  const std::filesystem::path side = path.string() + ".json";
  std::ofstream out(side);
  if (!out) throw IoError("cannot open for writing: " + side.string());
  out << sidecar.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + side.string());
}

ParameterSet load_parameters(const std::filesystem::path& path) {
  const std::filesystem::path side = path.string() + ".json";
  std::ifstream side_in(side);
  if (!side_in) throw IoError("cannot open for reading: " + side.string());
  ModelConfig config;
  std::uint64_t seed = 0;
  try {
    const auto j = nlohmann::json::parse(side_in);
    if (j.at("format_version").get<std::uint32_t>() != kParameterFormatVersion) {
      throw IoError("unsupported parameter format version in " + side.string());
    }
    const int base = j.at("base_channels").get<int>();
    config = parse_scale_preset(j.at("scale_preset").get<std::string>()) == ScalePreset::full
                 ? ModelConfig::full(base)
                 : ModelConfig::toy(base);
    seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed parameter sidecar " + side.string() + ": " + e.what());
  }

  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  Reader r{{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()}, 0, path};
  r.need(sizeof(kMagic));
  if (std::memcmp(r.bytes.data(), kMagic, sizeof(kMagic)) != 0) throw IoError("not a parameter file: " + path.string());
  r.pos = sizeof(kMagic);
  if (r.u32() != kParameterFormatVersion) throw IoError("unsupported parameter format version in " + path.string());

  ParameterSet params = init_parameters(config, seed);
  if (r.u32() != params.layers.size()) throw IoError("layer count does not match the config: " + path.string());
  for (ConvLayer& l : params.layers) {
    const std::uint32_t in_c = r.u32();
    const std::uint32_t out_c = r.u32();
    const std::uint32_t k = r.u32();
    if (in_c != static_cast<std::uint32_t>(l.in_channels) || out_c != static_cast<std::uint32_t>(l.out_channels) ||
        k != static_cast<std::uint32_t>(l.kernel)) {
      throw IoError("layer " + l.name + " shape does not match the config: " + path.string());
    }
    r.f64(l.weights);
    r.f64(l.bias);
  }
  if (r.pos != r.bytes.size()) throw IoError("trailing bytes in parameter file: " + path.string());
  return params;
}

ParameterSet load_parameters(const std::filesystem::path& path, const ModelConfig& expected) {
  ParameterSet params = load_parameters(path);
  if (!(params.config == expected)) {
    throw std::invalid_argument("parameter file " + path.string() + " was saved for a different model config");
  }
  return params;
}

}  // namespace jmod2
