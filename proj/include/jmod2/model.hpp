#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "jmod2/groundtruth.hpp"
#include "jmod2/tensor.hpp"

namespace jmod2 {

enum class ScalePreset { full, toy };

std::string to_string(ScalePreset preset);
ScalePreset parse_scale_preset(const std::string& text);

struct ModelConfig {
  ScalePreset scale_preset = ScalePreset::toy;
  int input_w = 64;
  int input_h = 40;
  int base_channels = 8;
  GridSpec grid{8, 5, 8};

  // 256x160 input, 32 px cells, five encoder stages.
  static ModelConfig full(int base_channels = 16);
  // 64x40 input, 8 px cells, three encoder stages.
  static ModelConfig toy(int base_channels = 8);

  int encoder_stages() const { return scale_preset == ScalePreset::full ? 5 : 3; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class Branch { encoder, depth, detection };

struct ConvLayer {
  std::string name;
  Branch branch = Branch::encoder;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  std::vector<double> weights;  // [out][in][k][k]
  std::vector<double> bias;
};

// Every trainable tensor of the network. Gradients use the same type.
struct ParameterSet {
  ModelConfig config;
  std::uint64_t seed = 0;
  std::vector<ConvLayer> layers;

  std::size_t scalar_count() const;
  // Flat view: each layer's weights followed by its bias, in layer order.
  double& scalar(std::size_t index);
  double scalar(std::size_t index) const;
  Branch scalar_branch(std::size_t index) const;

  ParameterSet zeros_like() const;
  void set_zero();
  // this += scale * other (shapes must match)
  void add_scaled(const ParameterSet& other, double scale);

 private:
  const double& scalar_ref(std::size_t index) const;
};

// Depth head: depth = min(floor + unit * softplus(z - shift), far clamp). With the unit at the far
// clamp and the shift at 1, z = 0 maps to about 12.5 m and the 3..40 m range sits where softplus
// still behaves like exp, so the logit moves roughly linearly in log depth.
inline constexpr double kDepthUnitM = 40.0;
inline constexpr double kDepthLogitShift = 1.0;
inline constexpr double kDepthFloorM = 1e-3;

double depth_from_logit(double z);

struct ModelOutput {
  DepthMap depth;            // meters, input resolution, within (0, 40]
  DetectionGrid detections;  // every channel in [0, 1]
};

// Intermediate activations of one forward pass, needed by backward().
struct ForwardCache {
  std::vector<Tensor> encoder;
  std::vector<Tensor> depth;
  std::vector<Tensor> detection;
};

inline constexpr double kConfidencePrior = 0.05;

// Glorot-uniform weights and zero biases, except the confidence bias of the
// detection head, which starts at logit(kConfidencePrior). Deterministic per seed.
ParameterSet init_parameters(const ModelConfig& config, std::uint64_t seed);

class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  ModelOutput forward(const ParameterSet& params, const Tensor& rgb, ForwardCache* cache = nullptr) const;

  // Accumulates parameter gradients into `grads` given dL/d(depth meters) and
  // dL/d(detection values). A null branch gradient skips that branch.
  void backward(const ParameterSet& params, const ForwardCache& cache, const DepthMap* grad_depth,
                const DetectionGrid* grad_detections, ParameterSet& grads) const;

  // Layout of the network as built for this config (used by init_parameters).
  struct Op {
    enum Kind { conv, elu, avg_pool, up_nearest, up_bilinear } kind;
    int layer = -1;
  };
  const std::vector<Op>& encoder_ops() const { return encoder_ops_; }
  const std::vector<Op>& depth_ops() const { return depth_ops_; }
  const std::vector<Op>& detection_ops() const { return detection_ops_; }
  const std::vector<ConvLayer>& layer_shapes() const { return layer_shapes_; }

 private:
  void check_params(const ParameterSet& params) const;

  ModelConfig config_;
  std::vector<Op> encoder_ops_;
  std::vector<Op> depth_ops_;
  std::vector<Op> detection_ops_;
  std::vector<ConvLayer> layer_shapes_;  // empty weight vectors
};

inline constexpr std::uint32_t kParameterFormatVersion = 1;

// Binary payload at `path` plus a JSON sidecar at `path` + ".json" holding
// {scale_preset, base_channels, seed, format_version, input_w, input_h}.
void save_parameters(const ParameterSet& params, const std::filesystem::path& path);
ParameterSet load_parameters(const std::filesystem::path& path);
// Throws if the stored config differs from `expected`.
ParameterSet load_parameters(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace jmod2
