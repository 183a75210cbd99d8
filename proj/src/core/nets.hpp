#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core/ops.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace voxpipe::nn {

struct WrongInputShape : ShapeError {
  using ShapeError::ShapeError;
};

enum class Arch {
  seg_generator,      // U-Net encoder/decoder with a residual bottleneck
  seg_discriminator,  // VGG-style conv stack scoring overlapping patches
  unet_wide,          // double-conv U-Net baseline, wide channels
  unet_fixed,         // U-Net baseline that also pools z; fixed depth input
  mask_classifier,    // doubled VGG-style stack, GAP head, one sigmoid unit
};

const char* arch_name(Arch a);
Arch arch_from_string(const std::string& s);

struct NetBuild {
  int in_channels = 1;
  int base = 16;     // channel count at the first level
  int fixed_z = 128; // required input depth for Arch::unet_fixed

  std::string to_json() const;
  static NetBuild from_json(const std::string& s);
};

struct ForwardResult {
  Tensor out;       // network output; post-sigmoid where the arch has one
  Tensor logit;     // pre-sigmoid head output (classifier only)
  Tensor last_conv; // deepest conv-block activations (classifier only)
};

// A network owns named parameter tensors and builds a fresh autodiff
// graph on every forward. Weights get He-normal init from the seeder
// stream; biases and norm shifts start at zero, norm scales at one.
class Network {
 public:
  Network(Arch arch, NetBuild build, Rng seeder);

  ForwardResult forward(const Tensor& x);

  Arch arch() const { return arch_; }
  const NetBuild& build() const { return build_; }

  const std::vector<std::pair<std::string, Tensor>>& named_parameters() const {
    return params_;
  }
  std::vector<Tensor> parameters() const;
  int64_t param_count() const;

  void set_trainable(bool trainable);
  bool trainable() const { return !params_.empty() && params_[0].second.requires_grad(); }
  void zero_grads();

  // Strict by-name restore; every parameter must be present with its shape.
  void load_tensors(const std::vector<std::pair<std::string, Tensor>>& src);

 private:
  struct Block {
    Tensor w, b;       // conv
    Tensor ng, nb;     // instance norm scale/shift; undefined when normless
    Stride3 stride{1, 1, 1};
    double lrelu = -1.0;  // negative slope; <0 means relu, 0 means linear
  };
  struct Up {
    Tensor w, b;  // transpose conv
    Tensor ng, nb;
  };

  Tensor add_param(const std::string& name, const Shape& s, double fan_in,
                   double const_val = 0.0);
  Block add_block(const std::string& name, int ci, int co, KSize3 k, Stride3 s,
                  bool norm, double lrelu);
  Up add_up(const std::string& name, int ci, int co, KSize3 k);

  Tensor run_block(const Block& bl, const Tensor& x) const;
  Tensor run_up(const Up& up, const Tensor& x, Stride3 s) const;

  ForwardResult forward_generator(const Tensor& x);
  ForwardResult forward_discriminator(const Tensor& x);
  ForwardResult forward_unet(const Tensor& x);
  ForwardResult forward_classifier(const Tensor& x);

  Arch arch_;
  NetBuild build_;
  Rng seeder_;
  int next_param_ = 0;
  std::vector<std::pair<std::string, Tensor>> params_;

  // Generator pieces.
  std::vector<Block> g_enc_, g_down_, g_post_;
  std::vector<Block> g_res_;  // two blocks per residual unit
  std::vector<Up> g_up_;
  Tensor g_head_w_, g_head_b_;

  // Plain conv stacks (discriminator, classifier).
  std::vector<Block> stack_;
  std::vector<int> pool_after_;  // indexes into stack_ followed by a pool
  Tensor head_w_, head_b_;       // 1x1x1 conv head (discriminator)
  Tensor fc_w_, fc_b_;           // dense head (classifier)

  // U-Net baselines.
  std::vector<std::vector<Block>> u_enc_;
  std::vector<Block> u_mid_;
  std::vector<Up> u_up_;
  std::vector<std::vector<Block>> u_post_;
};

// Number of conv layers in the classifier backbone; the stack doubles a
// VGG-11 layout, so this is 16.
int classifier_conv_count();

}  // namespace voxpipe::nn
