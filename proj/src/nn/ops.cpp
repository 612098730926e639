#include "itowave/nn/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

#include "itowave/errors.hpp"

namespace itowave::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using Index = Eigen::Index;

Tape& tape_of(Var a, Var b) {
  if (!a.valid() || a.tape() != b.tape()) throw UsageError("operands recorded on different tapes");
  return *a.tape();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_rank(const char* op, const char* what, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_string(t.shape()));
  }
}

void accumulate(Tensor& dst, const Tensor& src, double factor = 1.0) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * s[i];
}

// Elementwise op with derivative expressed through (input, output).
template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
  Tape& tape = *a.tape();
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t aid = a.id();
  return tape.record(std::move(y), {aid}, [aid, df](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(aid);
    const Tensor& yv = t.value(self);
    Tensor& ga = t.grad_slot(aid);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(xv[i], yv[i]);
  });
}

// Per-kernel-tap weight matrices of a conv1d weight [Co, Ci, K]: taps[k](co, ci).
std::vector<RowMat> conv_taps(const Tensor& w) {
  const Index co = static_cast<Index>(w.dim(0));
  const Index ci = static_cast<Index>(w.dim(1));
  const std::size_t k = w.dim(2);
  std::vector<RowMat> taps(k, RowMat(co, ci));
  for (Index o = 0; o < co; ++o)
    for (Index i = 0; i < ci; ++i)
      for (std::size_t j = 0; j < k; ++j) taps[j](o, i) = w.at(o, i, j);
  return taps;
}

// Per-tap matrices of a conv_transpose1d weight [Ci, Co, K]: taps[k](ci, co).
std::vector<RowMat> transpose_taps(const Tensor& w) {
  const Index ci = static_cast<Index>(w.dim(0));
  const Index co = static_cast<Index>(w.dim(1));
  const std::size_t k = w.dim(2);
  std::vector<RowMat> taps(k, RowMat(ci, co));
  for (Index i = 0; i < ci; ++i)
    for (Index o = 0; o < co; ++o)
      for (std::size_t j = 0; j < k; ++j) taps[j](i, o) = w.at(i, o, j);
  return taps;
}

}  // namespace

std::size_t conv1d_output_length(std::size_t len, std::size_t kernel, std::size_t dilation,
                                 std::size_t padding) {
  const std::size_t span = dilation * (kernel - 1);
  if (len + 2 * padding < span + 1) return 0;
  return len + 2 * padding - span;
}

std::size_t conv_transpose1d_output_length(std::size_t len, std::size_t kernel,
                                           std::size_t stride, std::size_t padding) {
  const std::size_t full = (len - 1) * stride + kernel;
  if (len == 0 || full <= 2 * padding) return 0;
  return full - 2 * padding;
}

Var add(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  require_same_shape("add", a.value(), b.value());
  Tensor y = a.value();
  accumulate(y, b.value());
  const std::size_t aid = a.id(), bid = b.id();
  return tape.record(std::move(y), {aid, bid}, [aid, bid](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(aid)) accumulate(t.grad_slot(aid), g);
    if (t.requires_grad(bid)) accumulate(t.grad_slot(bid), g);
  });
}

Var sub(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  require_same_shape("sub", a.value(), b.value());
  Tensor y = a.value();
  accumulate(y, b.value(), -1.0);
  const std::size_t aid = a.id(), bid = b.id();
  return tape.record(std::move(y), {aid, bid}, [aid, bid](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(aid)) accumulate(t.grad_slot(aid), g);
    if (t.requires_grad(bid)) accumulate(t.grad_slot(bid), g, -1.0);
  });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  require_same_shape("mul", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  const std::size_t aid = a.id(), bid = b.id();
  return tape.record(std::move(y), {aid, bid}, [aid, bid](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(aid)) {
      Tensor& ga = t.grad_slot(aid);
      const Tensor& bv = t.value(bid);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(bid)) {
      Tensor& gb = t.grad_slot(bid);
      const Tensor& av = t.value(aid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double c) {
  return unary(
      a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var square(Var a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(Var a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var silu(Var a) {
  return unary(
      a, [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Var add_channel_vector(Var x, Var v) {
  Tape& tape = tape_of(x, v);
  const Tensor& xv = x.value();
  const Tensor& vv = v.value();
  require_rank("add_channel_vector", "x", xv, 3);
  require_rank("add_channel_vector", "v", vv, 2);
  if (vv.dim(0) != xv.dim(0) || vv.dim(1) != xv.dim(1)) {
    throw ShapeError("add_channel_vector: vector " + shape_string(vv.shape()) +
                     " does not match sequence " + shape_string(xv.shape()));
  }
  const std::size_t rows = xv.dim(0) * xv.dim(1), len = xv.dim(2);
  Tensor y = xv;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t l = 0; l < len; ++l) y[r * len + l] += vv[r];
  const std::size_t xid = x.id(), vid = v.id();
  return tape.record(std::move(y), {xid, vid}, [xid, vid, rows, len](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(xid)) accumulate(t.grad_slot(xid), g);
    if (t.requires_grad(vid)) {
      Tensor& gv = t.grad_slot(vid);
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t l = 0; l < len; ++l) s += g[r * len + l];
        gv[r] += s;
      }
    }
  });
}

Var scale_batch(Var x, std::span<const double> weights) {
  const Tensor& xv = x.value();
  if (xv.rank() < 1 || xv.dim(0) != weights.size()) {
    throw ShapeError("scale_batch: " + std::to_string(weights.size()) +
                     " weights for tensor " + shape_string(xv.shape()));
  }
  const std::size_t per = xv.size() / weights.size();
  std::vector<double> w(weights.begin(), weights.end());
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * w[i / per];
  const std::size_t xid = x.id();
  return x.tape()->record(std::move(y), {xid}, [xid, w, per](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_slot(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * w[i / per];
  });
}

Var reshape(Var a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  const std::size_t aid = a.id();
  return a.tape()->record(std::move(y), {aid}, [aid](Tape& t, std::size_t self) {
    accumulate(t.grad_slot(aid), t.grad(self));
  });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  require_rank("transpose", "input", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor y({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y.at(j, i) = x.at(i, j);
  const std::size_t aid = a.id();
  return a.tape()->record(std::move(y), {aid}, [aid, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_slot(aid);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga.at(i, j) += g.at(j, i);
  });
}

Var slice_channels(Var x, std::size_t start, std::size_t count) {
  const Tensor& xv = x.value();
  require_rank("slice_channels", "input", xv, 3);
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), len = xv.dim(2);
  if (start + count > ch || count == 0) {
    throw ShapeError("slice_channels: channels [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " + shape_string(xv.shape()));
  }
  Tensor y({batch, count, len});
  for (std::size_t b = 0; b < batch; ++b)
    std::copy_n(xv.ptr() + (b * ch + start) * len, count * len, y.ptr() + b * count * len);
  const std::size_t xid = x.id();
  return x.tape()->record(
      std::move(y), {xid}, [xid, batch, ch, len, start, count](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad_slot(xid);
        for (std::size_t b = 0; b < batch; ++b) {
          const double* src = g.ptr() + b * count * len;
          double* dst = gx.ptr() + (b * ch + start) * len;
          for (std::size_t i = 0; i < count * len; ++i) dst[i] += src[i];
        }
      });
}

Var crop_length(Var x, std::size_t start, std::size_t count) {
  const Tensor& xv = x.value();
  require_rank("crop_length", "input", xv, 3);
  const std::size_t rows = xv.dim(0) * xv.dim(1), len = xv.dim(2);
  if (start + count > len || count == 0) {
    throw ShapeError("crop_length: samples [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " + shape_string(xv.shape()));
  }
  Tensor y({xv.dim(0), xv.dim(1), count});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xv.ptr() + r * len + start, count, y.ptr() + r * count);
  const std::size_t xid = x.id();
  return x.tape()->record(std::move(y), {xid},
                          [xid, rows, len, start, count](Tape& t, std::size_t self) {
                            const Tensor& g = t.grad(self);
                            Tensor& gx = t.grad_slot(xid);
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t i = 0; i < count; ++i)
                                gx[r * len + start + i] += g[r * count + i];
                          });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t aid = a.id();
  return a.tape()->record(Tensor::scalar(s), {aid}, [aid](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad_slot(aid).data()) v += g;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var conv1d(Var x, Var w, std::optional<Var> bias, std::size_t dilation, std::size_t padding) {
  Tape& tape = tape_of(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank("conv1d", "input", xv, 3);
  require_rank("conv1d", "weight", wv, 3);
  if (dilation < 1) throw ShapeError("conv1d: dilation must be >= 1");
  const std::size_t batch = xv.dim(0), cin = xv.dim(1), len = xv.dim(2);
  const std::size_t cout = wv.dim(0), kernel = wv.dim(2);
  if (wv.dim(1) != cin || kernel == 0) {
    throw ShapeError("conv1d: weight " + shape_string(wv.shape()) + " incompatible with input " +
                     shape_string(xv.shape()));
  }
  const std::size_t out_len = conv1d_output_length(len, kernel, dilation, padding);
  if (out_len == 0) {
    throw ShapeError("conv1d: kernel " + shape_string(wv.shape()) + " with dilation " +
                     std::to_string(dilation) + " does not fit padded input " +
                     shape_string(xv.shape()));
  }
  if (bias) {
    if (bias->tape() != &tape) throw UsageError("operands recorded on different tapes");
    if (bias->value().shape() != Shape{cout}) {
      throw ShapeError("conv1d: bias " + shape_string(bias->value().shape()) +
                       " does not match weight " + shape_string(wv.shape()));
    }
  }

  const std::vector<RowMat> taps = conv_taps(wv);
  const Index ci = static_cast<Index>(cin), co = static_cast<Index>(cout);
  const Index L = static_cast<Index>(len), Lo = static_cast<Index>(out_len);
  Tensor y({batch, cout, out_len});
  for (std::size_t b = 0; b < batch; ++b) {
    ConstMapMat xb(xv.ptr() + b * cin * len, ci, L);
    MapMat yb(y.ptr() + b * cout * out_len, co, Lo);
    if (bias) {
      Eigen::Map<const Eigen::VectorXd> bv(bias->value().ptr(), co);
      yb.colwise() += bv;
    }
    for (std::size_t k = 0; k < kernel; ++k) {
      const Index off = static_cast<Index>(k * dilation) - static_cast<Index>(padding);
      const Index n0 = std::max<Index>(0, -off);
      const Index n1 = std::min<Index>(Lo, L - off);
      if (n1 <= n0) continue;
      yb.middleCols(n0, n1 - n0).noalias() += taps[k] * xb.middleCols(n0 + off, n1 - n0);
    }
  }

  std::vector<std::size_t> parents{x.id(), w.id()};
  if (bias) parents.push_back(bias->id());
  const std::size_t xid = x.id(), wid = w.id();
  const std::optional<std::size_t> bid = bias ? std::optional(bias->id()) : std::nullopt;
  return tape.record(std::move(y), std::move(parents), [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xval = t.value(xid);
    const bool need_x = t.requires_grad(xid);
    const bool need_w = t.requires_grad(wid);
    const std::vector<RowMat> wt = conv_taps(t.value(wid));
    std::vector<RowMat> gw;
    if (need_w) gw.assign(kernel, RowMat::Zero(co, ci));
    Tensor* gx = need_x ? &t.grad_slot(xid) : nullptr;
    for (std::size_t b = 0; b < batch; ++b) {
      ConstMapMat gb(g.ptr() + b * cout * out_len, co, Lo);
      ConstMapMat xb(xval.ptr() + b * cin * len, ci, L);
      for (std::size_t k = 0; k < kernel; ++k) {
        const Index off = static_cast<Index>(k * dilation) - static_cast<Index>(padding);
        const Index n0 = std::max<Index>(0, -off);
        const Index n1 = std::min<Index>(Lo, L - off);
        if (n1 <= n0) continue;
        if (gx) {
          MapMat gxb(gx->ptr() + b * cin * len, ci, L);
          gxb.middleCols(n0 + off, n1 - n0).noalias() +=
              wt[k].transpose() * gb.middleCols(n0, n1 - n0);
        }
        if (need_w) {
          gw[k].noalias() +=
              gb.middleCols(n0, n1 - n0) * xb.middleCols(n0 + off, n1 - n0).transpose();
        }
      }
    }
    if (need_w) {
      Tensor& gwt = t.grad_slot(wid);
      for (Index o = 0; o < co; ++o)
        for (Index i = 0; i < ci; ++i)
          for (std::size_t k = 0; k < kernel; ++k) gwt.at(o, i, k) += gw[k](o, i);
    }
    if (bid && t.requires_grad(*bid)) {
      Tensor& gbias = t.grad_slot(*bid);
      for (std::size_t b = 0; b < batch; ++b) {
        ConstMapMat gb(g.ptr() + b * cout * out_len, co, Lo);
        for (Index o = 0; o < co; ++o) gbias[o] += gb.row(o).sum();
      }
    }
  });
}

Var conv_transpose1d(Var x, Var w, std::optional<Var> bias, std::size_t stride,
                     std::size_t padding) {
  Tape& tape = tape_of(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank("conv_transpose1d", "input", xv, 3);
  require_rank("conv_transpose1d", "weight", wv, 3);
  if (stride < 1) throw ShapeError("conv_transpose1d: stride must be >= 1");
  const std::size_t batch = xv.dim(0), cin = xv.dim(1), len = xv.dim(2);
  const std::size_t cout = wv.dim(1), kernel = wv.dim(2);
  if (wv.dim(0) != cin || kernel == 0) {
    throw ShapeError("conv_transpose1d: weight " + shape_string(wv.shape()) +
                     " incompatible with input " + shape_string(xv.shape()));
  }
  const std::size_t out_len = conv_transpose1d_output_length(len, kernel, stride, padding);
  if (out_len == 0) {
    throw ShapeError("conv_transpose1d: padding " + std::to_string(padding) +
                     " consumes the whole output for input " + shape_string(xv.shape()));
  }
  if (bias) {
    if (bias->tape() != &tape) throw UsageError("operands recorded on different tapes");
    if (bias->value().shape() != Shape{cout}) {
      throw ShapeError("conv_transpose1d: bias " + shape_string(bias->value().shape()) +
                       " does not match weight " + shape_string(wv.shape()));
    }
  }

  const std::vector<RowMat> taps = transpose_taps(wv);
  const Index ci = static_cast<Index>(cin), co = static_cast<Index>(cout);
  const Index L = static_cast<Index>(len), Lo = static_cast<Index>(out_len);
  const Index s = static_cast<Index>(stride), p = static_cast<Index>(padding);
  Tensor y({batch, cout, out_len});
  RowMat proj(co, L);
  for (std::size_t b = 0; b < batch; ++b) {
    ConstMapMat xb(xv.ptr() + b * cin * len, ci, L);
    MapMat yb(y.ptr() + b * cout * out_len, co, Lo);
    if (bias) {
      Eigen::Map<const Eigen::VectorXd> bv(bias->value().ptr(), co);
      yb.colwise() += bv;
    }
    for (std::size_t k = 0; k < kernel; ++k) {
      proj.noalias() = taps[k].transpose() * xb;
      for (Index i = 0; i < L; ++i) {
        const Index j = i * s - p + static_cast<Index>(k);
        if (j >= 0 && j < Lo) yb.col(j) += proj.col(i);
      }
    }
  }

  std::vector<std::size_t> parents{x.id(), w.id()};
  if (bias) parents.push_back(bias->id());
  const std::size_t xid = x.id(), wid = w.id();
  const std::optional<std::size_t> bid = bias ? std::optional(bias->id()) : std::nullopt;
  return tape.record(std::move(y), std::move(parents), [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xval = t.value(xid);
    const bool need_x = t.requires_grad(xid);
    const bool need_w = t.requires_grad(wid);
    const std::vector<RowMat> wt = transpose_taps(t.value(wid));
    std::vector<RowMat> gw;
    if (need_w) gw.assign(kernel, RowMat::Zero(ci, co));
    Tensor* gx = need_x ? &t.grad_slot(xid) : nullptr;
    RowMat gathered(co, L);
    for (std::size_t b = 0; b < batch; ++b) {
      ConstMapMat gb(g.ptr() + b * cout * out_len, co, Lo);
      ConstMapMat xb(xval.ptr() + b * cin * len, ci, L);
      for (std::size_t k = 0; k < kernel; ++k) {
        for (Index i = 0; i < L; ++i) {
          const Index j = i * s - p + static_cast<Index>(k);
          if (j >= 0 && j < Lo) {
            gathered.col(i) = gb.col(j);
          } else {
            gathered.col(i).setZero();
          }
        }
        if (gx) {
          MapMat gxb(gx->ptr() + b * cin * len, ci, L);
          gxb.noalias() += wt[k] * gathered;
        }
        if (need_w) gw[k].noalias() += xb * gathered.transpose();
      }
    }
    if (need_w) {
      Tensor& gwt = t.grad_slot(wid);
      for (Index i = 0; i < ci; ++i)
        for (Index o = 0; o < co; ++o)
          for (std::size_t k = 0; k < kernel; ++k) gwt.at(i, o, k) += gw[k](i, o);
    }
    if (bid && t.requires_grad(*bid)) {
      Tensor& gbias = t.grad_slot(*bid);
      for (std::size_t b = 0; b < batch; ++b) {
        ConstMapMat gb(g.ptr() + b * cout * out_len, co, Lo);
        for (Index o = 0; o < co; ++o) gbias[o] += gb.row(o).sum();
      }
    }
  });
}

Var linear(Var x, Var w, std::optional<Var> bias) {
  Tape& tape = tape_of(x, w);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_rank("linear", "input", xv, 2);
  require_rank("linear", "weight", wv, 2);
  const std::size_t batch = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
  if (wv.dim(1) != in) {
    throw ShapeError("linear: weight " + shape_string(wv.shape()) + " incompatible with input " +
                     shape_string(xv.shape()));
  }
  if (bias) {
    if (bias->tape() != &tape) throw UsageError("operands recorded on different tapes");
    if (bias->value().shape() != Shape{out}) {
      throw ShapeError("linear: bias " + shape_string(bias->value().shape()) +
                       " does not match weight " + shape_string(wv.shape()));
    }
  }
  const Index B = static_cast<Index>(batch), I = static_cast<Index>(in),
              O = static_cast<Index>(out);
  Tensor y({batch, out});
  MapMat ym(y.ptr(), B, O);
  ym.noalias() = ConstMapMat(xv.ptr(), B, I) * ConstMapMat(wv.ptr(), O, I).transpose();
  if (bias) {
    Eigen::Map<const Eigen::RowVectorXd> bv(bias->value().ptr(), O);
    ym.rowwise() += bv;
  }
  std::vector<std::size_t> parents{x.id(), w.id()};
  if (bias) parents.push_back(bias->id());
  const std::size_t xid = x.id(), wid = w.id();
  const std::optional<std::size_t> bid = bias ? std::optional(bias->id()) : std::nullopt;
  return tape.record(std::move(y), std::move(parents), [=](Tape& t, std::size_t self) {
    ConstMapMat g(t.grad(self).ptr(), B, O);
    if (t.requires_grad(xid)) {
      MapMat gx(t.grad_slot(xid).ptr(), B, I);
      gx.noalias() += g * ConstMapMat(t.value(wid).ptr(), O, I);
    }
    if (t.requires_grad(wid)) {
      MapMat gw(t.grad_slot(wid).ptr(), O, I);
      gw.noalias() += g.transpose() * ConstMapMat(t.value(xid).ptr(), B, I);
    }
    if (bid && t.requires_grad(*bid)) {
      Eigen::Map<Eigen::RowVectorXd> gb(t.grad_slot(*bid).ptr(), O);
      gb += g.colwise().sum();
    }
  });
}

}  // namespace itowave::nn
