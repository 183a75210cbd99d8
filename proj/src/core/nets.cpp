#include "core/nets.hpp"

#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

namespace voxpipe::nn {

namespace {

constexpr double kSlope = 0.2;

// Discriminator and classifier share the VGG-11 block layout; the
// classifier doubles every conv.
constexpr int kVggBlockConvs[5] = {1, 1, 2, 2, 2};
constexpr int kVggChannelMul[5] = {1, 2, 4, 4, 4};

std::string two_digit(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%02d", prefix, i);
  return buf;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw WrongInputShape(msg);
}

}  // namespace

const char* arch_name(Arch a) {
  switch (a) {
    case Arch::seg_generator: return "seg_generator";
    case Arch::seg_discriminator: return "seg_discriminator";
    case Arch::unet_wide: return "unet_wide";
    case Arch::unet_fixed: return "unet_fixed";
    case Arch::mask_classifier: return "mask_classifier";
  }
  throw ConfigError("unknown architecture");
}

Arch arch_from_string(const std::string& s) {
  for (Arch a : {Arch::seg_generator, Arch::seg_discriminator, Arch::unet_wide,
                 Arch::unet_fixed, Arch::mask_classifier}) {
    if (s == arch_name(a)) return a;
  }
  throw ConfigError("unknown architecture: " + s);
}

std::string NetBuild::to_json() const {
  nlohmann::json j;
  j["in_channels"] = in_channels;
  j["base"] = base;
  j["fixed_z"] = fixed_z;
  return j.dump();
}

NetBuild NetBuild::from_json(const std::string& s) {
  nlohmann::json j = nlohmann::json::parse(s, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("bad network build json");
  NetBuild b;
  b.in_channels = j.value("in_channels", 1);
  b.base = j.value("base", 16);
  b.fixed_z = j.value("fixed_z", 128);
  if (b.in_channels < 1 || b.base < 1 || b.fixed_z < 8) {
    throw ConfigError("bad network build values");
  }
  return b;
}

Tensor Network::add_param(const std::string& name, const Shape& s, double fan_in,
                          double const_val) {
  Tensor t = Tensor::filled(s, static_cast<float>(const_val), true);
  if (fan_in > 0) {
    Rng r = seeder_.stream(kRngInit, static_cast<uint32_t>(next_param_));
    const double sd = std::sqrt(2.0 / fan_in);
    float* d = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) {
      d[i] = static_cast<float>(r.normal(0.0, sd));
    }
  }
  ++next_param_;
  params_.emplace_back(name, t);
  return t;
}

Network::Block Network::add_block(const std::string& name, int ci, int co, KSize3 k,
                                  Stride3 s, bool norm, double lrelu) {
  Block bl;
  double fan = static_cast<double>(ci) * k.x * k.y * k.z;
  bl.w = add_param(name + ".w", Shape{co, ci, k.z, k.y, k.x}, fan);
  bl.b = add_param(name + ".b", Shape{co}, 0.0);
  if (norm) {
    bl.ng = add_param(name + ".ng", Shape{co}, 0.0, 1.0);
    bl.nb = add_param(name + ".nb", Shape{co}, 0.0);
  }
  bl.stride = s;
  bl.lrelu = lrelu;
  return bl;
}

Network::Up Network::add_up(const std::string& name, int ci, int co, KSize3 k) {
  Up up;
  double fan = static_cast<double>(ci) * k.x * k.y * k.z;
  up.w = add_param(name + ".w", Shape{ci, co, k.z, k.y, k.x}, fan);
  up.b = add_param(name + ".b", Shape{co}, 0.0);
  up.ng = add_param(name + ".ng", Shape{co}, 0.0, 1.0);
  up.nb = add_param(name + ".nb", Shape{co}, 0.0);
  return up;
}

Tensor Network::run_block(const Block& bl, const Tensor& x) const {
  Tensor y = conv3d(x, bl.w, bl.b, bl.stride, Pad::same);
  if (bl.ng.defined()) y = instance_norm(y, bl.ng, bl.nb);
  if (bl.lrelu > 0.0) return leaky_relu(y, bl.lrelu);
  if (bl.lrelu < 0.0) return relu(y);
  return y;
}

Tensor Network::run_up(const Up& up, const Tensor& x, Stride3 s) const {
  Tensor y = conv3d_transpose(x, up.w, up.b, s);
  return instance_norm(y, up.ng, up.nb);
}

Network::Network(Arch arch, NetBuild build, Rng seeder)
    : arch_(arch), build_(build), seeder_(seeder) {
  const int b = build_.base;
  const int in = build_.in_channels;
  const KSize3 k3{3, 3, 3};
  const Stride3 s1{1, 1, 1};
  const Stride3 s221{2, 2, 1};

  switch (arch_) {
    case Arch::seg_generator: {
      int ch[4] = {b, 2 * b, 4 * b, 8 * b};
      int prev = in;
      for (int l = 0; l < 3; ++l) {
        g_enc_.push_back(add_block("enc" + std::to_string(l), prev, ch[l], k3, s1,
                                   true, kSlope));
        g_down_.push_back(add_block("down" + std::to_string(l), ch[l], ch[l + 1], k3,
                                    s221, true, kSlope));
        prev = ch[l + 1];
      }
      for (int u = 0; u < 2; ++u) {
        g_res_.push_back(add_block("res" + std::to_string(u) + "a", ch[3], ch[3], k3,
                                   s1, true, kSlope));
        g_res_.push_back(add_block("res" + std::to_string(u) + "b", ch[3], ch[3], k3,
                                   s1, true, 0.0));
      }
      for (int l = 2; l >= 0; --l) {
        g_up_.push_back(add_up("up" + std::to_string(l), ch[l + 1], ch[l], k3));
        g_post_.push_back(add_block("dec" + std::to_string(l), 2 * ch[l], ch[l], k3,
                                    s1, true, kSlope));
      }
      g_head_w_ = add_param("head.w", Shape{1, ch[0], 1, 1, 1}, ch[0]);
      g_head_b_ = add_param("head.b", Shape{1}, 0.0);
      break;
    }
    case Arch::seg_discriminator:
    case Arch::mask_classifier: {
      const bool cls = arch_ == Arch::mask_classifier;
      int prev = in;
      int idx = 0;
      for (int blk = 0; blk < 5; ++blk) {
        int co = b * kVggChannelMul[blk];
        int convs = kVggBlockConvs[blk] * (cls ? 2 : 1);
        for (int c = 0; c < convs; ++c) {
          stack_.push_back(add_block(two_digit("conv", idx++), prev, co, k3, s1,
                                     false, cls ? -1.0 : kSlope));
          prev = co;
        }
        pool_after_.push_back(static_cast<int>(stack_.size()) - 1);
      }
      if (cls) {
        fc_w_ = add_param("fc.w", Shape{1, prev}, prev);
        fc_b_ = add_param("fc.b", Shape{1}, 0.0);
      } else {
        head_w_ = add_param("head.w", Shape{1, prev, 1, 1, 1}, prev);
        head_b_ = add_param("head.b", Shape{1}, 0.0);
      }
      break;
    }
    case Arch::unet_wide:
    case Arch::unet_fixed: {
      int ch[4] = {b, 2 * b, 4 * b, 8 * b};
      int prev = in;
      for (int l = 0; l < 3; ++l) {
        std::string nm = "enc" + std::to_string(l);
        u_enc_.push_back({add_block(nm + "a", prev, ch[l], k3, s1, true, -1.0),
                          add_block(nm + "b", ch[l], ch[l], k3, s1, true, -1.0)});
        prev = ch[l];
      }
      u_mid_ = {add_block("mid_a", prev, ch[3], k3, s1, true, -1.0),
                add_block("mid_b", ch[3], ch[3], k3, s1, true, -1.0)};
      for (int l = 2; l >= 0; --l) {
        std::string nm = "dec" + std::to_string(l);
        u_up_.push_back(add_up("up" + std::to_string(l), ch[l + 1], ch[l], k3));
        u_post_.push_back({add_block(nm + "a", 2 * ch[l], ch[l], k3, s1, true, -1.0),
                           add_block(nm + "b", ch[l], ch[l], k3, s1, true, -1.0)});
      }
      g_head_w_ = add_param("head.w", Shape{1, ch[0], 1, 1, 1}, ch[0]);
      g_head_b_ = add_param("head.b", Shape{1}, 0.0);
      break;
    }
  }
}

std::vector<Tensor> Network::parameters() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [n, t] : params_) out.push_back(t);
  return out;
}

int64_t Network::param_count() const {
  int64_t n = 0;
  for (const auto& [nm, t] : params_) n += t.numel();
  return n;
}

void Network::set_trainable(bool trainable) {
  for (auto& [n, t] : params_) t.set_requires_grad(trainable);
}

void Network::zero_grads() {
  for (auto& [n, t] : params_) t.zero_grad();
}

void Network::load_tensors(const std::vector<std::pair<std::string, Tensor>>& src) {
  for (auto& [name, t] : params_) {
    const Tensor* found = nullptr;
    for (const auto& [sn, st] : src) {
      if (sn == name) {
        found = &st;
        break;
      }
    }
    if (!found) throw VoxError("missing tensor in checkpoint: " + name);
    if (found->shape() != t.shape()) {
      throw VoxError("tensor " + name + " has shape " + found->shape().str() +
                     ", expected " + t.shape().str());
    }
    std::copy(found->data(), found->data() + found->numel(), t.data());
  }
}

ForwardResult Network::forward(const Tensor& x) {
  if (!x.defined() || x.shape().ndim() != 5) {
    throw WrongInputShape("network input must be [N,C,D,H,W]");
  }
  if (x.shape().dim(1) != build_.in_channels) {
    throw WrongInputShape("network expects " + std::to_string(build_.in_channels) +
                          " input channels, got " + x.shape().str());
  }
  switch (arch_) {
    case Arch::seg_generator: return forward_generator(x);
    case Arch::seg_discriminator: return forward_discriminator(x);
    case Arch::unet_wide:
    case Arch::unet_fixed: return forward_unet(x);
    case Arch::mask_classifier: return forward_classifier(x);
  }
  throw VoxError("unreachable");
}

ForwardResult Network::forward_generator(const Tensor& x) {
  require(x.shape().dim(-1) % 8 == 0 && x.shape().dim(-2) % 8 == 0 &&
              x.shape().dim(-1) >= 8 && x.shape().dim(-2) >= 8,
          "generator needs x and y extents divisible by 8, got " + x.shape().str());
  const Stride3 s221{2, 2, 1};

  Tensor h = x;
  std::vector<Tensor> skips;
  for (size_t l = 0; l < g_enc_.size(); ++l) {
    h = run_block(g_enc_[l], h);
    skips.push_back(h);
    h = run_block(g_down_[l], h);
  }
  for (size_t u = 0; u + 1 < g_res_.size(); u += 2) {
    Tensor r = run_block(g_res_[u], h);
    r = run_block(g_res_[u + 1], r);
    h = leaky_relu(add(h, r), kSlope);
  }
  for (size_t i = 0; i < g_up_.size(); ++i) {
    h = leaky_relu(run_up(g_up_[i], h, s221), kSlope);
    h = concat_channels(h, skips[skips.size() - 1 - i]);
    h = run_block(g_post_[i], h);
  }
  ForwardResult res;
  res.out = sigmoid(conv3d(h, g_head_w_, g_head_b_));
  return res;
}

ForwardResult Network::forward_discriminator(const Tensor& x) {
  require(x.shape().dim(-1) >= 32 && x.shape().dim(-2) >= 32,
          "discriminator needs x and y extents of at least 32, got " + x.shape().str());
  Tensor h = x;
  size_t next_pool = 0;
  for (size_t i = 0; i < stack_.size(); ++i) {
    h = run_block(stack_[i], h);
    if (next_pool < pool_after_.size() &&
        pool_after_[next_pool] == static_cast<int>(i)) {
      h = maxpool3d(h, KSize3{3, 3, 1}, Stride3{2, 2, 1});
      ++next_pool;
    }
  }
  ForwardResult res;
  res.out = conv3d(h, head_w_, head_b_);
  res.logit = res.out;
  return res;
}

ForwardResult Network::forward_classifier(const Tensor& x) {
  require(x.shape().dim(-1) >= 32 && x.shape().dim(-2) >= 32,
          "classifier needs x and y extents of at least 32, got " + x.shape().str());
  Tensor h = x;
  ForwardResult res;
  size_t next_pool = 0;
  for (size_t i = 0; i < stack_.size(); ++i) {
    h = run_block(stack_[i], h);
    if (i + 1 == stack_.size()) res.last_conv = h;
    if (next_pool < pool_after_.size() &&
        pool_after_[next_pool] == static_cast<int>(i)) {
      h = maxpool3d(h, KSize3{3, 3, 1}, Stride3{2, 2, 1});
      ++next_pool;
    }
  }
  res.logit = linear(global_avg_pool3d(h), fc_w_, fc_b_);
  res.out = sigmoid(res.logit);
  return res;
}

ForwardResult Network::forward_unet(const Tensor& x) {
  const bool fixed = arch_ == Arch::unet_fixed;
  require(x.shape().dim(-1) % 8 == 0 && x.shape().dim(-2) % 8 == 0,
          "unet needs x and y extents divisible by 8, got " + x.shape().str());
  if (fixed) {
    require(x.shape().dim(2) == build_.fixed_z,
            "this unet accepts exactly z = " + std::to_string(build_.fixed_z) +
                ", got " + x.shape().str());
    require(x.shape().dim(2) % 8 == 0, "unet z extent must be divisible by 8");
  }
  const KSize3 pool_k = fixed ? KSize3{2, 2, 2} : KSize3{3, 3, 1};
  const Stride3 pool_s = fixed ? Stride3{2, 2, 2} : Stride3{2, 2, 1};

  Tensor h = x;
  std::vector<Tensor> skips;
  for (auto& level : u_enc_) {
    for (auto& bl : level) h = run_block(bl, h);
    skips.push_back(h);
    h = maxpool3d(h, pool_k, pool_s);
  }
  for (auto& bl : u_mid_) h = run_block(bl, h);
  for (size_t i = 0; i < u_up_.size(); ++i) {
    h = relu(run_up(u_up_[i], h, pool_s));
    h = concat_channels(h, skips[skips.size() - 1 - i]);
    for (auto& bl : u_post_[i]) h = run_block(bl, h);
  }
  ForwardResult res;
  res.out = sigmoid(conv3d(h, g_head_w_, g_head_b_));
  return res;
}

int classifier_conv_count() {
  int n = 0;
  for (int c : kVggBlockConvs) n += 2 * c;
  return n;
}

}  // namespace voxpipe::nn
