#include "core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "core/conv_kernels.hpp"
#include "core/parallel.hpp"

namespace voxpipe::nn {

namespace {

template <typename T>
void check_5d(const TensorT<T>& x, const char* what) {
  if (!x.defined() || x.shape().ndim() != 5) {
    throw ShapeError(std::string(what) + " must be a 5-D [N,C,D,H,W] tensor");
  }
}

template <typename T>
bool any_requires(std::initializer_list<const TensorT<T>*> ts) {
  for (const auto* t : ts) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
TensorT<T> make_output(const Shape& s, bool needs_grad, std::shared_ptr<NodeT<T>> node) {
  // Every builder writes the whole output, so skip the zero fill.
  TensorT<T> out = TensorT<T>::uninit(s, needs_grad);
  if (needs_grad) out.set_producer(std::move(node));
  return out;
}

template <typename T>
void accumulate(TensorT<T>& t, const std::vector<T>& src) {
  T* g = t.grad();
  for (size_t i = 0; i < src.size(); ++i) g[i] += src[i];
}

struct AxisGeom {
  int64_t out = 0;
  int64_t pad_lo = 0;
};

AxisGeom conv_axis(int64_t in, int64_t k, int64_t s, Pad pad, const char* what) {
  if (in <= 0 || k <= 0 || s <= 0) throw ShapeError(std::string(what) + ": bad geometry");
  AxisGeom g;
  if (pad == Pad::same) {
    g.out = ceil_div(in, s);
    int64_t total = std::max<int64_t>(0, (g.out - 1) * s + k - in);
    g.pad_lo = total / 2;  // extra padding goes to the high side
  } else {
    if (in < k) throw ShapeError(std::string(what) + ": kernel larger than VALID input");
    g.out = (in - k) / s + 1;
    g.pad_lo = 0;
  }
  return g;
}

constexpr double kLogClamp = 1e-12;

template <typename T>
T clamped_log(T v) {
  return std::log(std::max(v, static_cast<T>(kLogClamp)));
}

template <typename T>
T pow_clamped(T base, double e) {
  return static_cast<T>(std::pow(std::max(base, static_cast<T>(kLogClamp)), e));
}

// ----- convolution -----

template <typename T>
struct ConvNode : NodeT<T> {
  ConvDims cd;

  void backward(const TensorT<T>& out) override {
    TensorT<T> x = this->inputs[0];
    TensorT<T> w = this->inputs[1];
    TensorT<T> b = this->inputs.size() > 2 ? this->inputs[2] : TensorT<T>();
    const T* g = out.grad_data();
    if (x.requires_grad()) {
      std::vector<T> dx(static_cast<size_t>(cd.in_numel()));
      conv3d_bwd_input(g, w.data(), dx.data(), cd);
      accumulate(x, dx);
    }
    bool need_w = w.requires_grad();
    bool need_b = b.defined() && b.requires_grad();
    if (need_w || need_b) {
      // bwd_weights accumulates, which is exactly the contract for grads.
      conv3d_bwd_weights(x.data(), g, need_w ? w.grad() : scratch_w(w),
                         need_b ? b.grad() : nullptr, cd);
    }
  }

  // When only the bias needs grads, the kernel still wants a dw sink.
  T* scratch_w(const TensorT<T>& w) {
    scratch_.assign(static_cast<size_t>(w.numel()), T(0));
    return scratch_.data();
  }
  std::vector<T> scratch_;
};

template <typename T>
struct ConvTransposeNode : NodeT<T> {
  ConvDims icd;  // geometry of the implied forward conv (big -> small)

  void backward(const TensorT<T>& out) override {
    TensorT<T> x = this->inputs[0];
    TensorT<T> w = this->inputs[1];
    TensorT<T> b = this->inputs.size() > 2 ? this->inputs[2] : TensorT<T>();
    const T* g = out.grad_data();
    if (x.requires_grad()) {
      std::vector<T> dx(static_cast<size_t>(icd.out_numel()));
      conv3d_fwd(g, w.data(), static_cast<const T*>(nullptr), dx.data(), icd);
      accumulate(x, dx);
    }
    if (w.requires_grad()) {
      conv3d_bwd_weights(g, x.data(), w.grad(), static_cast<T*>(nullptr), icd);
    }
    if (b.defined() && b.requires_grad()) {
      T* db = b.grad();
      int64_t spatial = icd.id * icd.ih * icd.iw;
      for (int64_t n = 0; n < icd.n; ++n) {
        for (int64_t c = 0; c < icd.ci; ++c) {
          const T* gc = g + (n * icd.ci + c) * spatial;
          T sum = T(0);
          for (int64_t i = 0; i < spatial; ++i) sum += gc[i];
          db[c] += sum;
        }
      }
    }
  }
};

// ----- pooling -----

template <typename T>
struct MaxPoolNode : NodeT<T> {
  PoolDims pd;
  std::vector<int64_t> argmax;

  void backward(const TensorT<T>& out) override {
    TensorT<T> x = this->inputs[0];
    if (!x.requires_grad()) return;
    // maxpool3d_bwd accumulates into the grad buffer directly.
    maxpool3d_bwd(out.grad_data(), argmax.data(), x.grad(), pd);
  }
};

// ----- instance norm -----

template <typename T>
struct InstanceNormNode : NodeT<T> {
  double eps;
  std::vector<T> mean, invstd;  // per (n, c)

  void backward(const TensorT<T>& out) override {
    TensorT<T> x = this->inputs[0];
    TensorT<T> gamma = this->inputs[1];
    TensorT<T> beta = this->inputs[2];
    const Shape& s = x.shape();
    const int64_t nN = s.dim(0), nC = s.dim(1);
    const int64_t v = s.dim(2) * s.dim(3) * s.dim(4);
    const T* g = out.grad_data();
    const T* xd = x.data();
    const T* gam = gamma.data();

    std::vector<double> sum_g(static_cast<size_t>(nN * nC));
    std::vector<double> sum_gx(static_cast<size_t>(nN * nC));
    for (int64_t p = 0; p < nN * nC; ++p) {
      const T* gp = g + p * v;
      const T* xp = xd + p * v;
      double m = mean[static_cast<size_t>(p)], is = invstd[static_cast<size_t>(p)];
      double s1 = 0.0, s2 = 0.0;
      for (int64_t i = 0; i < v; ++i) {
        double xh = (xp[i] - m) * is;
        s1 += gp[i];
        s2 += gp[i] * xh;
      }
      sum_g[static_cast<size_t>(p)] = s1;
      sum_gx[static_cast<size_t>(p)] = s2;
    }

    if (gamma.requires_grad()) {
      T* dg = gamma.grad();
      for (int64_t n = 0; n < nN; ++n) {
        for (int64_t c = 0; c < nC; ++c) {
          dg[c] += static_cast<T>(sum_gx[static_cast<size_t>(n * nC + c)]);
        }
      }
    }
    if (beta.requires_grad()) {
      T* db = beta.grad();
      for (int64_t n = 0; n < nN; ++n) {
        for (int64_t c = 0; c < nC; ++c) {
          db[c] += static_cast<T>(sum_g[static_cast<size_t>(n * nC + c)]);
        }
      }
    }
    if (x.requires_grad()) {
      T* dx = x.grad();
      for (int64_t p = 0; p < nN * nC; ++p) {
        int64_t c = p % nC;
        const T* gp = g + p * v;
        const T* xp = xd + p * v;
        T* dp = dx + p * v;
        double m = mean[static_cast<size_t>(p)], is = invstd[static_cast<size_t>(p)];
        double mg = sum_g[static_cast<size_t>(p)] / v;
        double mgx = sum_gx[static_cast<size_t>(p)] / v;
        double k = gam[c] * is;
        for (int64_t i = 0; i < v; ++i) {
          double xh = (xp[i] - m) * is;
          dp[i] += static_cast<T>(k * (gp[i] - mg - xh * mgx));
        }
      }
    }
  }
};

// ----- elementwise activations -----

template <typename T>
struct ReluNode : NodeT<T> {
  void backward(const TensorT<T>& out) override {
    TensorT<T> x = this->inputs[0];
    if (!x.requires_grad()) return;
    const T* g = out.grad_data();
    const T* xd = x.data();
    T* dx = x.grad();
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) {
      if (xd[i] > T(0)) dx[i] += g[i];
    }
  }
};

template <typename T>
struct LeakyReluNode : NodeT<T> {
  double slope;
  void backward(const TensorT<T>& out) override {
    TensorT<T> x = this->inputs[0];
    if (!x.requires_grad()) return;
    const T* g = out.grad_data();
    const T* xd = x.data();
    T* dx = x.grad();
    const T a = static_cast<T>(slope);
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) {
      dx[i] += xd[i] > T(0) ? g[i] : a * g[i];
    }
  }
};

template <typename T>
struct SigmoidNode : NodeT<T> {
  void backward(const TensorT<T>& out) override {
    TensorT<T> x = this->inputs[0];
    if (!x.requires_grad()) return;
    const T* g = out.grad_data();
    const T* yd = out.data();
    T* dx = x.grad();
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) {
      dx[i] += g[i] * yd[i] * (T(1) - yd[i]);
    }
  }
};

// ----- concat / pooling over all of space / linear -----

template <typename T>
struct ConcatNode : NodeT<T> {
  void backward(const TensorT<T>& out) override {
    TensorT<T> a = this->inputs[0];
    TensorT<T> b = this->inputs[1];
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    int64_t nN = sa.dim(0);
    int64_t va = sa.dim(1) * sa.dim(2) * sa.dim(3) * sa.dim(4);
    int64_t vb = sb.dim(1) * sb.dim(2) * sb.dim(3) * sb.dim(4);
    const T* g = out.grad_data();
    for (int64_t n = 0; n < nN; ++n) {
      const T* gn = g + n * (va + vb);
      if (a.requires_grad()) {
        T* da = a.grad() + n * va;
        for (int64_t i = 0; i < va; ++i) da[i] += gn[i];
      }
      if (b.requires_grad()) {
        T* db = b.grad() + n * vb;
        for (int64_t i = 0; i < vb; ++i) db[i] += gn[va + i];
      }
    }
  }
};

template <typename T>
struct GapNode : NodeT<T> {
  void backward(const TensorT<T>& out) override {
    TensorT<T> x = this->inputs[0];
    if (!x.requires_grad()) return;
    const Shape& s = x.shape();
    int64_t planes = s.dim(0) * s.dim(1);
    int64_t v = s.dim(2) * s.dim(3) * s.dim(4);
    const T* g = out.grad_data();
    T* dx = x.grad();
    const T inv = static_cast<T>(1.0 / static_cast<double>(v));
    for (int64_t p = 0; p < planes; ++p) {
      T gv = g[p] * inv;
      T* dp = dx + p * v;
      for (int64_t i = 0; i < v; ++i) dp[i] += gv;
    }
  }
};

template <typename T>
struct LinearNode : NodeT<T> {
  void backward(const TensorT<T>& out) override {
    TensorT<T> x = this->inputs[0];
    TensorT<T> w = this->inputs[1];
    TensorT<T> b = this->inputs.size() > 2 ? this->inputs[2] : TensorT<T>();
    int64_t nN = x.shape().dim(0);
    int64_t ci = x.shape().dim(1);
    int64_t co = w.shape().dim(0);
    const T* g = out.grad_data();
    if (x.requires_grad()) {
      T* dx = x.grad();
      for (int64_t n = 0; n < nN; ++n) {
        for (int64_t o = 0; o < co; ++o) {
          T gv = g[n * co + o];
          const T* wr = w.data() + o * ci;
          T* dr = dx + n * ci;
          for (int64_t i = 0; i < ci; ++i) dr[i] += gv * wr[i];
        }
      }
    }
    if (w.requires_grad()) {
      T* dw = w.grad();
      for (int64_t n = 0; n < nN; ++n) {
        const T* xr = x.data() + n * ci;
        for (int64_t o = 0; o < co; ++o) {
          T gv = g[n * co + o];
          T* dr = dw + o * ci;
          for (int64_t i = 0; i < ci; ++i) dr[i] += gv * xr[i];
        }
      }
    }
    if (b.defined() && b.requires_grad()) {
      T* db = b.grad();
      for (int64_t n = 0; n < nN; ++n) {
        for (int64_t o = 0; o < co; ++o) db[o] += g[n * co + o];
      }
    }
  }
};

template <typename T>
struct AddNode : NodeT<T> {
  void backward(const TensorT<T>& out) override {
    const T* g = out.grad_data();
    int64_t n = out.numel();
    for (int k = 0; k < 2; ++k) {
      TensorT<T> in = this->inputs[static_cast<size_t>(k)];
      if (!in.requires_grad()) continue;
      T* d = in.grad();
      for (int64_t i = 0; i < n; ++i) d[i] += g[i];
    }
  }
};

template <typename T>
struct AffineNode : NodeT<T> {
  double mul;
  void backward(const TensorT<T>& out) override {
    TensorT<T> x = this->inputs[0];
    if (!x.requires_grad()) return;
    const T* g = out.grad_data();
    T* dx = x.grad();
    const T m = static_cast<T>(mul);
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) dx[i] += m * g[i];
  }
};

// ----- losses -----

template <typename T>
void check_loss_pair(const TensorT<T>& p, const TensorT<T>& y) {
  if (!p.defined() || !y.defined() || p.shape() != y.shape()) {
    throw ShapeError("loss expects prediction and target of identical shape");
  }
  if (y.requires_grad()) {
    throw ShapeError("loss targets are constants; target must not require grad");
  }
}

template <typename T>
struct DiceNode : NodeT<T> {
  double smooth;
  double num = 0.0, den = 0.0;

  void backward(const TensorT<T>& out) override {
    TensorT<T> p = this->inputs[0];
    TensorT<T> y = this->inputs[1];
    if (!p.requires_grad()) return;
    const T gout = out.grad_data()[0];
    const T* yd = y.data();
    T* dp = p.grad();
    int64_t n = p.numel();
    double b2 = den * den;
    for (int64_t i = 0; i < n; ++i) {
      double d = -(2.0 * yd[i] * den - num) / b2;
      dp[i] += gout * static_cast<T>(d);
    }
  }
};

template <typename T>
struct FocalNode : NodeT<T> {
  double delta, g2;  // g2 = 2*gamma

  void backward(const TensorT<T>& out) override {
    TensorT<T> p = this->inputs[0];
    TensorT<T> y = this->inputs[1];
    if (!p.requires_grad()) return;
    const T gout = out.grad_data()[0];
    const T* pd = p.data();
    const T* yd = y.data();
    T* dp = p.grad();
    int64_t n = p.numel();
    const double invn = 1.0 / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      double pv = pd[i], yv = yd[i];
      double l1 = clamped_log(pv);
      double l0 = clamped_log(1.0 - pv);
      double dl1 = pv > kLogClamp ? 1.0 / pv : 0.0;
      double dl0 = (1.0 - pv) > kLogClamp ? -1.0 / (1.0 - pv) : 0.0;
      double a = delta * yv *
                 (-g2 * pow_clamped(1.0 - pv, g2 - 1.0) * l1 + pow_clamped(1.0 - pv, g2) * dl1);
      double b = (1.0 - delta) * (1.0 - yv) *
                 (g2 * pow_clamped(pv, g2 - 1.0) * l0 + pow_clamped(pv, g2) * dl0);
      dp[i] += gout * static_cast<T>(-(a + b) * invn);
    }
  }
};

template <typename T>
struct TverskyNode : NodeT<T> {
  double delta, gamma;
  double num = 0.0, den = 0.0, ti = 0.0;

  void backward(const TensorT<T>& out) override {
    TensorT<T> p = this->inputs[0];
    TensorT<T> y = this->inputs[1];
    if (!p.requires_grad()) return;
    const T gout = out.grad_data()[0];
    const T* yd = y.data();
    T* dp = p.grad();
    int64_t n = p.numel();
    double outer = -gamma * std::pow(std::max(1.0 - ti, kLogClamp), gamma - 1.0);
    double d2 = den * den;
    for (int64_t i = 0; i < n; ++i) {
      double dden = 1.0 - delta;  // d(den)/dp is constant for binary and soft y alike
      double dti = (yd[i] * den - num * dden) / d2;
      dp[i] += gout * static_cast<T>(outer * dti);
    }
  }
};

template <typename T>
struct BceNode : NodeT<T> {
  void backward(const TensorT<T>& out) override {
    TensorT<T> p = this->inputs[0];
    TensorT<T> y = this->inputs[1];
    if (!p.requires_grad()) return;
    const T gout = out.grad_data()[0];
    const T* pd = p.data();
    const T* yd = y.data();
    T* dp = p.grad();
    int64_t n = p.numel();
    const double invn = 1.0 / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      double pv = pd[i], yv = yd[i];
      double dl1 = pv > kLogClamp ? 1.0 / pv : 0.0;
      double dl0 = (1.0 - pv) > kLogClamp ? -1.0 / (1.0 - pv) : 0.0;
      dp[i] += gout * static_cast<T>(-(yv * dl1 + (1.0 - yv) * dl0) * invn);
    }
  }
};

template <typename T>
struct MseToNode : NodeT<T> {
  double target;
  void backward(const TensorT<T>& out) override {
    TensorT<T> x = this->inputs[0];
    if (!x.requires_grad()) return;
    const T gout = out.grad_data()[0];
    const T* xd = x.data();
    T* dx = x.grad();
    int64_t n = x.numel();
    const double invn = 1.0 / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      dx[i] += gout * static_cast<T>(2.0 * (xd[i] - target) * invn);
    }
  }
};

}  // namespace

// ----- public builders -----

template <typename T>
TensorT<T> conv3d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                  Stride3 stride, Pad pad) {
  check_5d(x, "conv3d input");
  check_5d(w, "conv3d weights");
  if (x.shape().dim(1) != w.shape().dim(1)) {
    throw ShapeError("conv3d: input channels " + x.shape().str() +
                     " do not match weights " + w.shape().str());
  }
  if (b.defined() && (b.shape().ndim() != 1 || b.shape().dim(0) != w.shape().dim(0))) {
    throw ShapeError("conv3d: bias must be [Co]");
  }

  ConvDims cd;
  cd.n = x.shape().dim(0);
  cd.ci = x.shape().dim(1);
  cd.co = w.shape().dim(0);
  cd.id = x.shape().dim(2);
  cd.ih = x.shape().dim(3);
  cd.iw = x.shape().dim(4);
  cd.kd = w.shape().dim(2);
  cd.kh = w.shape().dim(3);
  cd.kw = w.shape().dim(4);
  cd.sd = stride.z;
  cd.sh = stride.y;
  cd.sw = stride.x;
  AxisGeom gz = conv_axis(cd.id, cd.kd, cd.sd, pad, "conv3d z");
  AxisGeom gy = conv_axis(cd.ih, cd.kh, cd.sh, pad, "conv3d y");
  AxisGeom gx = conv_axis(cd.iw, cd.kw, cd.sw, pad, "conv3d x");
  cd.od = gz.out;
  cd.oh = gy.out;
  cd.ow = gx.out;
  cd.pd0 = gz.pad_lo;
  cd.ph0 = gy.pad_lo;
  cd.pw0 = gx.pad_lo;

  auto node = std::make_shared<ConvNode<T>>();
  node->name = "conv3d";
  node->cd = cd;
  node->inputs = {x, w};
  if (b.defined()) node->inputs.push_back(b);
  bool req = any_requires<T>({&x, &w, &b});
  TensorT<T> out = make_output<T>(Shape{cd.n, cd.co, cd.od, cd.oh, cd.ow}, req, node);
  conv3d_fwd(x.data(), w.data(), b.defined() ? b.data() : nullptr, out.data(), cd);
  return out;
}

template <typename T>
TensorT<T> conv3d_transpose(const TensorT<T>& x, const TensorT<T>& w,
                            const TensorT<T>& b, Stride3 stride) {
  check_5d(x, "conv3d_transpose input");
  check_5d(w, "conv3d_transpose weights");
  if (x.shape().dim(1) != w.shape().dim(0)) {
    throw ShapeError("conv3d_transpose: input channels must match weights dim 0");
  }
  if (b.defined() && (b.shape().ndim() != 1 || b.shape().dim(0) != w.shape().dim(1))) {
    throw ShapeError("conv3d_transpose: bias must be [Co]");
  }

  // Geometry of the implied forward conv: output-side (big) extent is
  // exactly input*stride, so the SAME relationship holds per axis.
  ConvDims icd;
  icd.n = x.shape().dim(0);
  icd.ci = w.shape().dim(1);  // big side channels
  icd.co = x.shape().dim(1);
  icd.od = x.shape().dim(2);
  icd.oh = x.shape().dim(3);
  icd.ow = x.shape().dim(4);
  icd.id = icd.od * stride.z;
  icd.ih = icd.oh * stride.y;
  icd.iw = icd.ow * stride.x;
  icd.kd = w.shape().dim(2);
  icd.kh = w.shape().dim(3);
  icd.kw = w.shape().dim(4);
  icd.sd = stride.z;
  icd.sh = stride.y;
  icd.sw = stride.x;
  AxisGeom gz = conv_axis(icd.id, icd.kd, icd.sd, Pad::same, "conv3d_transpose z");
  AxisGeom gy = conv_axis(icd.ih, icd.kh, icd.sh, Pad::same, "conv3d_transpose y");
  AxisGeom gx = conv_axis(icd.iw, icd.kw, icd.sw, Pad::same, "conv3d_transpose x");
  icd.pd0 = gz.pad_lo;
  icd.ph0 = gy.pad_lo;
  icd.pw0 = gx.pad_lo;

  // The implied conv has weights [co_implied, ci_implied, k] =
  // [x channels, big channels, k], which is w's own layout.
  auto node = std::make_shared<ConvTransposeNode<T>>();
  node->name = "conv3d_transpose";
  node->icd = icd;
  node->inputs = {x, w};
  if (b.defined()) node->inputs.push_back(b);
  bool req = any_requires<T>({&x, &w, &b});
  TensorT<T> out = make_output<T>(Shape{icd.n, icd.ci, icd.id, icd.ih, icd.iw}, req, node);
  conv3d_bwd_input(x.data(), w.data(), out.data(), icd);
  if (b.defined()) {
    int64_t spatial = icd.id * icd.ih * icd.iw;
    for (int64_t n = 0; n < icd.n; ++n) {
      for (int64_t c = 0; c < icd.ci; ++c) {
        T* oc = out.data() + (n * icd.ci + c) * spatial;
        T bv = b.data()[c];
        for (int64_t i = 0; i < spatial; ++i) oc[i] += bv;
      }
    }
  }
  return out;
}

template <typename T>
TensorT<T> maxpool3d(const TensorT<T>& x, KSize3 window, Stride3 stride) {
  check_5d(x, "maxpool3d input");
  PoolDims pd;
  pd.n = x.shape().dim(0);
  pd.c = x.shape().dim(1);
  pd.id = x.shape().dim(2);
  pd.ih = x.shape().dim(3);
  pd.iw = x.shape().dim(4);
  pd.kd = window.z;
  pd.kh = window.y;
  pd.kw = window.x;
  pd.sd = stride.z;
  pd.sh = stride.y;
  pd.sw = stride.x;
  AxisGeom gz = conv_axis(pd.id, pd.kd, pd.sd, Pad::same, "maxpool3d z");
  AxisGeom gy = conv_axis(pd.ih, pd.kh, pd.sh, Pad::same, "maxpool3d y");
  AxisGeom gx = conv_axis(pd.iw, pd.kw, pd.sw, Pad::same, "maxpool3d x");
  pd.od = gz.out;
  pd.oh = gy.out;
  pd.ow = gx.out;
  pd.pd0 = gz.pad_lo;
  pd.ph0 = gy.pad_lo;
  pd.pw0 = gx.pad_lo;

  auto node = std::make_shared<MaxPoolNode<T>>();
  node->name = "maxpool3d";
  node->pd = pd;
  node->argmax.resize(static_cast<size_t>(pd.out_numel()));
  node->inputs = {x};
  TensorT<T> out = make_output<T>(Shape{pd.n, pd.c, pd.od, pd.oh, pd.ow},
                               x.requires_grad(), node);
  maxpool3d_fwd(x.data(), out.data(), node->argmax.data(), pd);
  return out;
}

template <typename T>
TensorT<T> instance_norm(const TensorT<T>& x, const TensorT<T>& gamma,
                         const TensorT<T>& beta, double eps) {
  check_5d(x, "instance_norm input");
  int64_t c = x.shape().dim(1);
  if (!gamma.defined() || !beta.defined() || gamma.shape() != Shape{c} ||
      beta.shape() != Shape{c}) {
    throw ShapeError("instance_norm: gamma and beta must be [C]");
  }
  int64_t nN = x.shape().dim(0);
  int64_t v = x.shape().dim(2) * x.shape().dim(3) * x.shape().dim(4);

  auto node = std::make_shared<InstanceNormNode<T>>();
  node->name = "instance_norm";
  node->eps = eps;
  node->mean.resize(static_cast<size_t>(nN * c));
  node->invstd.resize(static_cast<size_t>(nN * c));
  node->inputs = {x, gamma, beta};
  bool req = any_requires<T>({&x, &gamma, &beta});
  TensorT<T> out = make_output<T>(x.shape(), req, node);

  const T* xd = x.data();
  T* yd = out.data();
  for (int64_t p = 0; p < nN * c; ++p) {
    const T* xp = xd + p * v;
    double s = 0.0;
    for (int64_t i = 0; i < v; ++i) s += xp[i];
    double m = s / v;
    double var = 0.0;
    for (int64_t i = 0; i < v; ++i) {
      double d = xp[i] - m;
      var += d * d;
    }
    var /= v;  // biased
    double is = 1.0 / std::sqrt(var + eps);
    node->mean[static_cast<size_t>(p)] = static_cast<T>(m);
    node->invstd[static_cast<size_t>(p)] = static_cast<T>(is);
    T g = gamma.data()[p % c];
    T bshift = beta.data()[p % c];
    T* yp = yd + p * v;
    for (int64_t i = 0; i < v; ++i) {
      yp[i] = static_cast<T>((xp[i] - m) * is) * g + bshift;
    }
  }
  return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  auto node = std::make_shared<ReluNode<T>>();
  node->name = "relu";
  node->inputs = {x};
  TensorT<T> out = make_output<T>(x.shape(), x.requires_grad(), node);
  const T* xd = x.data();
  T* yd = out.data();
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) yd[i] = xd[i] > T(0) ? xd[i] : T(0);
  return out;
}

template <typename T>
TensorT<T> leaky_relu(const TensorT<T>& x, double slope) {
  auto node = std::make_shared<LeakyReluNode<T>>();
  node->name = "leaky_relu";
  node->slope = slope;
  node->inputs = {x};
  TensorT<T> out = make_output<T>(x.shape(), x.requires_grad(), node);
  const T* xd = x.data();
  T* yd = out.data();
  const T a = static_cast<T>(slope);
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) yd[i] = xd[i] > T(0) ? xd[i] : a * xd[i];
  return out;
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& x) {
  auto node = std::make_shared<SigmoidNode<T>>();
  node->name = "sigmoid";
  node->inputs = {x};
  TensorT<T> out = make_output<T>(x.shape(), x.requires_grad(), node);
  const T* xd = x.data();
  T* yd = out.data();
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    yd[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(xd[i]))));
  }
  return out;
}

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  check_5d(a, "concat_channels a");
  check_5d(b, "concat_channels b");
  for (int i : {0, 2, 3, 4}) {
    if (a.shape().dim(i) != b.shape().dim(i)) {
      throw ShapeError("concat_channels: shapes " + a.shape().str() + " and " +
                       b.shape().str() + " differ outside the channel axis");
    }
  }
  int64_t nN = a.shape().dim(0);
  int64_t va = a.shape().dim(1) * a.shape().dim(2) * a.shape().dim(3) * a.shape().dim(4);
  int64_t vb = b.shape().dim(1) * b.shape().dim(2) * b.shape().dim(3) * b.shape().dim(4);

  auto node = std::make_shared<ConcatNode<T>>();
  node->name = "concat_channels";
  node->inputs = {a, b};
  bool req = any_requires<T>({&a, &b});
  TensorT<T> out = make_output<T>(Shape{nN, a.shape().dim(1) + b.shape().dim(1),
                                     a.shape().dim(2), a.shape().dim(3), a.shape().dim(4)},
                               req, node);
  T* yd = out.data();
  for (int64_t n = 0; n < nN; ++n) {
    std::copy(a.data() + n * va, a.data() + (n + 1) * va, yd + n * (va + vb));
    std::copy(b.data() + n * vb, b.data() + (n + 1) * vb, yd + n * (va + vb) + va);
  }
  return out;
}

template <typename T>
TensorT<T> global_avg_pool3d(const TensorT<T>& x) {
  check_5d(x, "global_avg_pool3d input");
  int64_t planes = x.shape().dim(0) * x.shape().dim(1);
  int64_t v = x.shape().dim(2) * x.shape().dim(3) * x.shape().dim(4);

  auto node = std::make_shared<GapNode<T>>();
  node->name = "global_avg_pool3d";
  node->inputs = {x};
  TensorT<T> out = make_output<T>(Shape{x.shape().dim(0), x.shape().dim(1)},
                               x.requires_grad(), node);
  const T* xd = x.data();
  T* yd = out.data();
  for (int64_t p = 0; p < planes; ++p) {
    const T* xp = xd + p * v;
    double s = 0.0;
    for (int64_t i = 0; i < v; ++i) s += xp[i];
    yd[p] = static_cast<T>(s / v);
  }
  return out;
}

template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  if (!x.defined() || x.shape().ndim() != 2) throw ShapeError("linear: input must be [N,Ci]");
  if (!w.defined() || w.shape().ndim() != 2 || w.shape().dim(1) != x.shape().dim(1)) {
    throw ShapeError("linear: weights must be [Co,Ci] matching input");
  }
  int64_t nN = x.shape().dim(0), ci = x.shape().dim(1), co = w.shape().dim(0);
  if (b.defined() && (b.shape().ndim() != 1 || b.shape().dim(0) != co)) {
    throw ShapeError("linear: bias must be [Co]");
  }

  auto node = std::make_shared<LinearNode<T>>();
  node->name = "linear";
  node->inputs = {x, w};
  if (b.defined()) node->inputs.push_back(b);
  bool req = any_requires<T>({&x, &w, &b});
  TensorT<T> out = make_output<T>(Shape{nN, co}, req, node);
  T* yd = out.data();
  for (int64_t n = 0; n < nN; ++n) {
    const T* xr = x.data() + n * ci;
    for (int64_t o = 0; o < co; ++o) {
      const T* wr = w.data() + o * ci;
      double s = b.defined() ? static_cast<double>(b.data()[o]) : 0.0;
      for (int64_t i = 0; i < ci; ++i) s += static_cast<double>(xr[i]) * wr[i];
      yd[n * co + o] = static_cast<T>(s);
    }
  }
  return out;
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.defined() || !b.defined() || a.shape() != b.shape()) {
    throw ShapeError("add: shapes must match");
  }
  auto node = std::make_shared<AddNode<T>>();
  node->name = "add";
  node->inputs = {a, b};
  bool req = any_requires<T>({&a, &b});
  TensorT<T> out = make_output<T>(a.shape(), req, node);
  const T* ad = a.data();
  const T* bd = b.data();
  T* yd = out.data();
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) yd[i] = ad[i] + bd[i];
  return out;
}

template <typename T>
TensorT<T> affine(const TensorT<T>& x, double mul, double shift) {
  auto node = std::make_shared<AffineNode<T>>();
  node->name = "affine";
  node->mul = mul;
  node->inputs = {x};
  TensorT<T> out = make_output<T>(x.shape(), x.requires_grad(), node);
  const T* xd = x.data();
  T* yd = out.data();
  const T m = static_cast<T>(mul), s = static_cast<T>(shift);
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) yd[i] = m * xd[i] + s;
  return out;
}

template <typename T>
TensorT<T> dice_loss(const TensorT<T>& p, const TensorT<T>& y, double smooth) {
  check_loss_pair(p, y);
  auto node = std::make_shared<DiceNode<T>>();
  node->name = "dice_loss";
  node->smooth = smooth;
  node->inputs = {p, y};
  double spy = 0.0, sp = 0.0, sy = 0.0;
  const T* pd = p.data();
  const T* yd = y.data();
  int64_t n = p.numel();
  for (int64_t i = 0; i < n; ++i) {
    spy += static_cast<double>(pd[i]) * yd[i];
    sp += pd[i];
    sy += yd[i];
  }
  node->num = 2.0 * spy + smooth;
  node->den = sp + sy + smooth;
  TensorT<T> out = make_output<T>(Shape{1}, p.requires_grad(), node);
  out.data()[0] = static_cast<T>(1.0 - node->num / node->den);
  return out;
}

template <typename T>
TensorT<T> focal_loss(const TensorT<T>& p, const TensorT<T>& y, double delta,
                      double gamma) {
  check_loss_pair(p, y);
  auto node = std::make_shared<FocalNode<T>>();
  node->name = "focal_loss";
  node->delta = delta;
  node->g2 = 2.0 * gamma;
  node->inputs = {p, y};
  const T* pd = p.data();
  const T* yd = y.data();
  int64_t n = p.numel();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double pv = pd[i], yv = yd[i];
    s += delta * yv * pow_clamped(1.0 - pv, node->g2) * clamped_log(pv) +
         (1.0 - delta) * (1.0 - yv) * pow_clamped(pv, node->g2) * clamped_log(1.0 - pv);
  }
  TensorT<T> out = make_output<T>(Shape{1}, p.requires_grad(), node);
  out.data()[0] = static_cast<T>(-s / static_cast<double>(n));
  return out;
}

template <typename T>
TensorT<T> focal_tversky_loss(const TensorT<T>& p, const TensorT<T>& y,
                              double delta, double gamma, double smooth) {
  check_loss_pair(p, y);
  auto node = std::make_shared<TverskyNode<T>>();
  node->name = "focal_tversky_loss";
  node->delta = delta;
  node->gamma = gamma;
  node->inputs = {p, y};
  const T* pd = p.data();
  const T* yd = y.data();
  int64_t n = p.numel();
  double spy = 0.0, sfn = 0.0, sfp = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double pv = pd[i], yv = yd[i];
    spy += pv * yv;
    sfn += (1.0 - pv) * yv;
    sfp += pv * (1.0 - yv);
  }
  node->num = spy + smooth;
  node->den = spy + delta * sfn + (1.0 - delta) * sfp + smooth;
  node->ti = node->num / node->den;
  TensorT<T> out = make_output<T>(Shape{1}, p.requires_grad(), node);
  out.data()[0] = static_cast<T>(std::pow(std::max(1.0 - node->ti, 0.0), gamma));
  return out;
}

template <typename T>
TensorT<T> hybrid_focal(const TensorT<T>& p, const TensorT<T>& y,
                        const HybridFocalParams& params) {
  return add(scale(focal_loss(p, y, params.delta, params.gamma), params.lambda),
             scale(focal_tversky_loss(p, y, params.delta, params.gamma, params.smooth),
                   1.0 - params.lambda));
}

template <typename T>
TensorT<T> bce(const TensorT<T>& p, const TensorT<T>& y) {
  check_loss_pair(p, y);
  auto node = std::make_shared<BceNode<T>>();
  node->name = "bce";
  node->inputs = {p, y};
  const T* pd = p.data();
  const T* yd = y.data();
  int64_t n = p.numel();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double pv = pd[i], yv = yd[i];
    s += yv * clamped_log(pv) + (1.0 - yv) * clamped_log(1.0 - pv);
  }
  TensorT<T> out = make_output<T>(Shape{1}, p.requires_grad(), node);
  out.data()[0] = static_cast<T>(-s / static_cast<double>(n));
  return out;
}

template <typename T>
TensorT<T> mse_to(const TensorT<T>& x, double target) {
  if (!x.defined()) throw ShapeError("mse_to: undefined input");
  auto node = std::make_shared<MseToNode<T>>();
  node->name = "mse_to";
  node->target = target;
  node->inputs = {x};
  const T* xd = x.data();
  int64_t n = x.numel();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = xd[i] - target;
    s += d * d;
  }
  TensorT<T> out = make_output<T>(Shape{1}, x.requires_grad(), node);
  out.data()[0] = static_cast<T>(s / static_cast<double>(n));
  return out;
}

#define VOXPIPE_INSTANTIATE_OPS(T)                                                        \
  template TensorT<T> conv3d<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, \
                                Stride3, Pad);                                           \
  template TensorT<T> conv3d_transpose<T>(const TensorT<T>&, const TensorT<T>&,          \
                                          const TensorT<T>&, Stride3);                   \
  template TensorT<T> maxpool3d<T>(const TensorT<T>&, KSize3, Stride3);                  \
  template TensorT<T> instance_norm<T>(const TensorT<T>&, const TensorT<T>&,             \
                                       const TensorT<T>&, double);                       \
  template TensorT<T> relu<T>(const TensorT<T>&);                                        \
  template TensorT<T> leaky_relu<T>(const TensorT<T>&, double);                          \
  template TensorT<T> sigmoid<T>(const TensorT<T>&);                                     \
  template TensorT<T> concat_channels<T>(const TensorT<T>&, const TensorT<T>&);          \
  template TensorT<T> global_avg_pool3d<T>(const TensorT<T>&);                           \
  template TensorT<T> linear<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&);\
  template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&);                      \
  template TensorT<T> affine<T>(const TensorT<T>&, double, double);                      \
  template TensorT<T> dice_loss<T>(const TensorT<T>&, const TensorT<T>&, double);        \
  template TensorT<T> focal_loss<T>(const TensorT<T>&, const TensorT<T>&, double, double);\
  template TensorT<T> focal_tversky_loss<T>(const TensorT<T>&, const TensorT<T>&, double,\
                                            double, double);                             \
  template TensorT<T> hybrid_focal<T>(const TensorT<T>&, const TensorT<T>&,              \
                                      const HybridFocalParams&);                         \
  template TensorT<T> bce<T>(const TensorT<T>&, const TensorT<T>&);                      \
  template TensorT<T> mse_to<T>(const TensorT<T>&, double);

VOXPIPE_INSTANTIATE_OPS(float)
VOXPIPE_INSTANTIATE_OPS(double)

}  // namespace voxpipe::nn
