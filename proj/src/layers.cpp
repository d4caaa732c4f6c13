#include "cseg/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace cseg {

std::string to_string(const Shape5& s) {
  std::ostringstream os;
  os << "(" << s[0] << "," << s[1] << "," << s[2] << "," << s[3] << "," << s[4] << ")";
  return os.str();
}

namespace {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapR = Eigen::Map<MatR<T>>;
template <class T>
using CMapR = Eigen::Map<const MatR<T>>;
template <class T>
using StridedMapR = Eigen::Map<MatR<T>, 0, Eigen::OuterStride<>>;
template <class T>
using CStridedMapR = Eigen::Map<const MatR<T>, 0, Eigen::OuterStride<>>;

// Geometry shared by the conv kernels for one sample.
struct ConvGeom {
  int c_in, c_out;
  int D, H, W;       // input spatial
  int kd, kh, kw;
  int OD, OH, OW;    // output spatial
  std::size_t rows() const { return static_cast<std::size_t>(c_in) * kd * kh * kw; }
  std::size_t plane() const { return static_cast<std::size_t>(OH) * OW; }
  std::size_t in_plane() const { return static_cast<std::size_t>(H) * W; }
  std::size_t in_vol() const { return in_plane() * D; }
  std::size_t out_vol() const { return plane() * OD; }
};

template <class T>
ConvGeom conv_geometry(const Tensor5<T>& input, const Tensor5<T>& weight) {
  ConvGeom g{};
  g.c_in = input.c();
  g.c_out = weight.shape[0];
  g.D = input.d();
  g.H = input.h();
  g.W = input.w();
  g.kd = weight.shape[2];
  g.kh = weight.shape[3];
  g.kw = weight.shape[4];
  if (weight.shape[1] != g.c_in)
    throw ShapeError("conv3d: weight expects " + std::to_string(weight.shape[1]) +
                     " input channels, input has " + std::to_string(g.c_in));
  if (g.D < g.kd || g.H < g.kh || g.W < g.kw)
    throw ShapeError("conv3d: input " + to_string(input.shape) + " smaller than kernel " +
                     to_string(weight.shape));
  g.OD = g.D - g.kd + 1;
  g.OH = g.H - g.kh + 1;
  g.OW = g.W - g.kw + 1;
  return g;
}

// Number of output z-planes handled per GEMM so the column buffer stays
// around a few megabytes.
int planes_per_chunk(const ConvGeom& g) {
  const std::size_t budget = std::size_t{1} << 20;
  const std::size_t per_plane = g.rows() * g.plane();
  return static_cast<int>(std::clamp<std::size_t>(budget / std::max<std::size_t>(per_plane, 1), 1,
                                                  static_cast<std::size_t>(g.OD)));
}

// cols[r][p]: r = ((ci*kd + a)*kh + b)*kw + c, p = (oz - oz0)*OH*OW + oy*OW + ox
template <class T>
void im2col(const ConvGeom& g, const T* in, int oz0, int nz, T* cols) {
  const std::size_t pcount = static_cast<std::size_t>(nz) * g.plane();
  std::size_t r = 0;
  for (int ci = 0; ci < g.c_in; ++ci)
    for (int a = 0; a < g.kd; ++a)
      for (int b = 0; b < g.kh; ++b)
        for (int c = 0; c < g.kw; ++c, ++r) {
          T* dst = cols + r * pcount;
          for (int oz = 0; oz < nz; ++oz)
            for (int oy = 0; oy < g.OH; ++oy) {
              const T* src = in + ci * g.in_vol() + (oz0 + oz + a) * g.in_plane() +
                             static_cast<std::size_t>(oy + b) * g.W + c;
              std::memcpy(dst, src, sizeof(T) * g.OW);
              dst += g.OW;
            }
        }
}

template <class T>
void col2im_add(const ConvGeom& g, const T* cols, int oz0, int nz, T* in) {
  const std::size_t pcount = static_cast<std::size_t>(nz) * g.plane();
  std::size_t r = 0;
  for (int ci = 0; ci < g.c_in; ++ci)
    for (int a = 0; a < g.kd; ++a)
      for (int b = 0; b < g.kh; ++b)
        for (int c = 0; c < g.kw; ++c, ++r) {
          const T* src = cols + r * pcount;
          for (int oz = 0; oz < nz; ++oz)
            for (int oy = 0; oy < g.OH; ++oy) {
              T* dst = in + ci * g.in_vol() + (oz0 + oz + a) * g.in_plane() +
                       static_cast<std::size_t>(oy + b) * g.W + c;
              for (int ox = 0; ox < g.OW; ++ox) dst[ox] += src[ox];
              src += g.OW;
            }
        }
}

bool is_pointwise(const ConvGeom& g) { return g.kd == 1 && g.kh == 1 && g.kw == 1; }

}  // namespace

// ---------------------------------------------------------------- conv3d

template <class T>
Tensor5<T> conv3d_forward(const Tensor5<T>& input, const Tensor5<T>& weight, std::span<const T> bias) {
  const ConvGeom g = conv_geometry(input, weight);
  if (bias.size() != static_cast<std::size_t>(g.c_out))
    throw ShapeError("conv3d: bias length does not match output channels");
  Tensor5<T> out({input.n(), g.c_out, g.OD, g.OH, g.OW});
  const CMapR<T> w(weight.values.data(), g.c_out, static_cast<Eigen::Index>(g.rows()));
  const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bvec(bias.data(), g.c_out);
  const int chunk = planes_per_chunk(g);
  std::vector<T> cols;
  for (int n = 0; n < input.n(); ++n) {
    const T* in = input.values.data() + static_cast<std::size_t>(n) * g.c_in * g.in_vol();
    T* outp = out.values.data() + static_cast<std::size_t>(n) * g.c_out * g.out_vol();
    for (int oz0 = 0; oz0 < g.OD; oz0 += chunk) {
      const int nz = std::min(chunk, g.OD - oz0);
      const auto pcount = static_cast<Eigen::Index>(nz * g.plane());
      const T* cptr = in;
      if (!is_pointwise(g)) {
        cols.resize(g.rows() * pcount);
        im2col(g, in, oz0, nz, cols.data());
        cptr = cols.data();
      } else {
        cptr = in + oz0 * g.plane();
      }
      const Eigen::Index cstride = is_pointwise(g) ? static_cast<Eigen::Index>(g.in_vol()) : pcount;
      CStridedMapR<T> cm(cptr, static_cast<Eigen::Index>(g.rows()), pcount, Eigen::OuterStride<>(cstride));
      StridedMapR<T> om(outp + oz0 * g.plane(), g.c_out, pcount,
                        Eigen::OuterStride<>(static_cast<Eigen::Index>(g.out_vol())));
      om.noalias() = w * cm;
      om.colwise() += bvec;
    }
  }
  return out;
}

template <class T>
ConvGrads<T> conv3d_backward(const Tensor5<T>& input, const Tensor5<T>& weight,
                             const Tensor5<T>& grad_out, bool want_input_grad) {
  const ConvGeom g = conv_geometry(input, weight);
  if (grad_out.shape != Shape5{input.n(), g.c_out, g.OD, g.OH, g.OW})
    throw ShapeError("conv3d_backward: gradient shape " + to_string(grad_out.shape) +
                     " does not match output");
  ConvGrads<T> grads;
  grads.weight = Tensor5<T>(weight.shape);
  grads.bias.assign(g.c_out, T{});
  if (want_input_grad) grads.input = Tensor5<T>(input.shape);

  const CMapR<T> w(weight.values.data(), g.c_out, static_cast<Eigen::Index>(g.rows()));
  MapR<T> dw(grads.weight.values.data(), g.c_out, static_cast<Eigen::Index>(g.rows()));
  const int chunk = planes_per_chunk(g);
  std::vector<T> cols, dcols;
  for (int n = 0; n < input.n(); ++n) {
    const T* in = input.values.data() + static_cast<std::size_t>(n) * g.c_in * g.in_vol();
    const T* gout = grad_out.values.data() + static_cast<std::size_t>(n) * g.c_out * g.out_vol();
    T* gin = want_input_grad ? grads.input.values.data() + static_cast<std::size_t>(n) * g.c_in * g.in_vol()
                             : nullptr;
    for (int co = 0; co < g.c_out; ++co) {
      const T* p = gout + co * g.out_vol();
      T s{};
      for (std::size_t i = 0; i < g.out_vol(); ++i) s += p[i];
      grads.bias[co] += s;
    }
    for (int oz0 = 0; oz0 < g.OD; oz0 += chunk) {
      const int nz = std::min(chunk, g.OD - oz0);
      const auto pcount = static_cast<Eigen::Index>(nz * g.plane());
      const auto rows = static_cast<Eigen::Index>(g.rows());
      CStridedMapR<T> gm(gout + oz0 * g.plane(), g.c_out, pcount,
                         Eigen::OuterStride<>(static_cast<Eigen::Index>(g.out_vol())));
      if (is_pointwise(g)) {
        CStridedMapR<T> cm(in + oz0 * g.plane(), rows, pcount,
                           Eigen::OuterStride<>(static_cast<Eigen::Index>(g.in_vol())));
        dw.noalias() += gm * cm.transpose();
        if (gin) {
          StridedMapR<T> im(gin + oz0 * g.plane(), rows, pcount,
                            Eigen::OuterStride<>(static_cast<Eigen::Index>(g.in_vol())));
          im.noalias() += w.transpose() * gm;
        }
        continue;
      }
      cols.resize(g.rows() * pcount);
      im2col(g, in, oz0, nz, cols.data());
      CMapR<T> cm(cols.data(), rows, pcount);
      dw.noalias() += gm * cm.transpose();
      if (gin) {
        dcols.resize(g.rows() * pcount);
        MapR<T> dcm(dcols.data(), rows, pcount);
        dcm.noalias() = w.transpose() * gm;
        col2im_add(g, dcols.data(), oz0, nz, gin);
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------- relu

template <class T>
Tensor5<T> relu_forward(const Tensor5<T>& input) {
  Tensor5<T> out;
  out.shape = input.shape;
  out.values.resize(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) out.values[i] = input.values[i] > T{} ? input.values[i] : T{};
  return out;
}

template <class T>
Tensor5<T> relu_backward(const Tensor5<T>& input, const Tensor5<T>& grad_out) {
  if (input.shape != grad_out.shape) throw ShapeError("relu_backward: shape mismatch");
  Tensor5<T> g;
  g.shape = input.shape;
  g.values.resize(input.size());
  for (std::size_t i = 0; i < input.size(); ++i)
    g.values[i] = input.values[i] > T{} ? grad_out.values[i] : T{};
  return g;
}

// ---------------------------------------------------------------- maxpool

template <class T>
PoolResult<T> maxpool2_forward(const Tensor5<T>& input) {
  const auto& s = input.shape;
  if (s[2] % 2 || s[3] % 2 || s[4] % 2)
    throw ShapeError("maxpool2: odd spatial extent in " + to_string(s));
  PoolResult<T> r;
  r.output = Tensor5<T>({s[0], s[1], s[2] / 2, s[3] / 2, s[4] / 2});
  r.argmax.resize(r.output.size());
  const int OD = s[2] / 2, OH = s[3] / 2, OW = s[4] / 2;
  std::size_t o = 0;
  for (int n = 0; n < s[0]; ++n)
    for (int c = 0; c < s[1]; ++c)
      for (int z = 0; z < OD; ++z)
        for (int y = 0; y < OH; ++y)
          for (int x = 0; x < OW; ++x, ++o) {
            std::size_t best = input.offset(n, c, 2 * z, 2 * y, 2 * x);
            T bv = input.values[best];
            for (int a = 0; a < 2; ++a)
              for (int b = 0; b < 2; ++b)
                for (int e = 0; e < 2; ++e) {
                  const std::size_t i = input.offset(n, c, 2 * z + a, 2 * y + b, 2 * x + e);
                  if (input.values[i] > bv) {
                    bv = input.values[i];
                    best = i;
                  }
                }
            r.output.values[o] = bv;
            r.argmax[o] = static_cast<std::uint32_t>(best);
          }
  return r;
}

template <class T>
Tensor5<T> maxpool2_backward(const Shape5& input_shape, const std::vector<std::uint32_t>& argmax,
                             const Tensor5<T>& grad_out) {
  if (argmax.size() != grad_out.size()) throw ShapeError("maxpool2_backward: argmax size mismatch");
  Tensor5<T> g(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) g.values[argmax[o]] += grad_out.values[o];
  return g;
}

// ---------------------------------------------------------------- upconv

// The weight tensor (c_in, c_out, 2, 2, 2) viewed row-major as a
// c_in x (c_out*8) matrix; column j = co*8 + kernel offset.
template <class T>
Tensor5<T> upconv2_forward(const Tensor5<T>& input, const Tensor5<T>& weight, std::span<const T> bias) {
  const int c_in = input.c();
  if (weight.shape[0] != c_in || weight.shape[2] != 2 || weight.shape[3] != 2 || weight.shape[4] != 2)
    throw ShapeError("upconv2: weight " + to_string(weight.shape) + " incompatible with input " +
                     to_string(input.shape));
  const int c_out = weight.shape[1];
  if (bias.size() != static_cast<std::size_t>(c_out)) throw ShapeError("upconv2: bias length mismatch");
  const int D = input.d(), H = input.h(), W = input.w();
  const auto P = static_cast<Eigen::Index>(input.spatial());
  Tensor5<T> out({input.n(), c_out, 2 * D, 2 * H, 2 * W});
  const CMapR<T> wt(weight.values.data(), c_in, c_out * 8);
  MatR<T> y(c_out * 8, P);
  for (int n = 0; n < input.n(); ++n) {
    const CMapR<T> x(input.values.data() + static_cast<std::size_t>(n) * c_in * P, c_in, P);
    y.noalias() = wt.transpose() * x;
    for (int co = 0; co < c_out; ++co)
      for (int k = 0; k < 8; ++k) {
        const int a = k >> 2, b = (k >> 1) & 1, e = k & 1;
        const T* src = y.data() + (static_cast<std::size_t>(co) * 8 + k) * P;
        std::size_t p = 0;
        for (int z = 0; z < D; ++z)
          for (int yy = 0; yy < H; ++yy) {
            T* dst = &out.values[out.offset(n, co, 2 * z + a, 2 * yy + b, e)];
            for (int xx = 0; xx < W; ++xx, ++p) dst[2 * xx] = src[p] + bias[co];
          }
      }
  }
  return out;
}

template <class T>
ConvGrads<T> upconv2_backward(const Tensor5<T>& input, const Tensor5<T>& weight, const Tensor5<T>& grad_out) {
  const int c_in = input.c(), c_out = weight.shape[1];
  const int D = input.d(), H = input.h(), W = input.w();
  if (grad_out.shape != Shape5{input.n(), c_out, 2 * D, 2 * H, 2 * W})
    throw ShapeError("upconv2_backward: gradient shape mismatch");
  const auto P = static_cast<Eigen::Index>(input.spatial());
  ConvGrads<T> grads;
  grads.input = Tensor5<T>(input.shape);
  grads.weight = Tensor5<T>(weight.shape);
  grads.bias.assign(c_out, T{});
  const CMapR<T> wt(weight.values.data(), c_in, c_out * 8);
  MapR<T> dwt(grads.weight.values.data(), c_in, c_out * 8);
  MatR<T> dy(c_out * 8, P);
  for (int n = 0; n < input.n(); ++n) {
    for (int co = 0; co < c_out; ++co)
      for (int k = 0; k < 8; ++k) {
        const int a = k >> 2, b = (k >> 1) & 1, e = k & 1;
        T* dst = dy.data() + (static_cast<std::size_t>(co) * 8 + k) * P;
        std::size_t p = 0;
        T s{};
        for (int z = 0; z < D; ++z)
          for (int yy = 0; yy < H; ++yy) {
            const T* src = &grad_out.values[grad_out.offset(n, co, 2 * z + a, 2 * yy + b, e)];
            for (int xx = 0; xx < W; ++xx, ++p) {
              dst[p] = src[2 * xx];
              s += src[2 * xx];
            }
          }
        grads.bias[co] += s;
      }
    const CMapR<T> x(input.values.data() + static_cast<std::size_t>(n) * c_in * P, c_in, P);
    MapR<T> dx(grads.input.values.data() + static_cast<std::size_t>(n) * c_in * P, c_in, P);
    dwt.noalias() += x * dy.transpose();
    dx.noalias() = wt * dy;
  }
  return grads;
}

// ---------------------------------------------------------------- batchnorm

template <class T>
Tensor5<T> batchnorm_forward(const Tensor5<T>& input, std::span<const T> gamma, std::span<const T> beta,
                             std::span<T> running_mean, std::span<T> running_var, NormMode mode,
                             const BatchNormOptions& opt, BatchNormCache<T>* cache) {
  const int C = input.c();
  const auto cs = static_cast<std::size_t>(C);
  if (gamma.size() != cs || beta.size() != cs || running_mean.size() != cs || running_var.size() != cs)
    throw ShapeError("batchnorm: parameter length does not match channel count");
  const std::size_t S = input.spatial();
  const std::size_t M = S * input.n();
  Tensor5<T> out(input.shape);
  std::vector<T> inv_std(C);
  Tensor5<T> xhat;
  if (cache) xhat = Tensor5<T>(input.shape);
  for (int c = 0; c < C; ++c) {
    double mean, var;
    if (mode == NormMode::Train) {
      double s = 0.0;
      for (int n = 0; n < input.n(); ++n) {
        const T* p = &input.values[input.offset(n, c, 0, 0, 0)];
        for (std::size_t i = 0; i < S; ++i) s += p[i];
      }
      mean = s / M;
      double ss = 0.0;
      for (int n = 0; n < input.n(); ++n) {
        const T* p = &input.values[input.offset(n, c, 0, 0, 0)];
        for (std::size_t i = 0; i < S; ++i) {
          const double dv = p[i] - mean;
          ss += dv * dv;
        }
      }
      var = ss / M;
      const double unbiased = M > 1 ? var * M / (M - 1) : var;
      running_mean[c] = static_cast<T>((1.0 - opt.momentum) * running_mean[c] + opt.momentum * mean);
      running_var[c] = static_cast<T>((1.0 - opt.momentum) * running_var[c] + opt.momentum * unbiased);
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + opt.eps);
    inv_std[c] = static_cast<T>(is);
    const T g = gamma[c], b = beta[c];
    const T m = static_cast<T>(mean), ist = static_cast<T>(is);
    for (int n = 0; n < input.n(); ++n) {
      const std::size_t off = input.offset(n, c, 0, 0, 0);
      const T* p = &input.values[off];
      T* o = &out.values[off];
      T* xh = cache ? &xhat.values[off] : nullptr;
      for (std::size_t i = 0; i < S; ++i) {
        const T v = (p[i] - m) * ist;
        if (xh) xh[i] = v;
        o[i] = g * v + b;
      }
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <class T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, std::span<const T> gamma,
                                     const Tensor5<T>& grad_out) {
  const Tensor5<T>& xhat = cache.normalized;
  if (xhat.shape != grad_out.shape) throw ShapeError("batchnorm_backward: shape mismatch");
  const int C = xhat.c();
  const std::size_t S = xhat.spatial();
  const double M = static_cast<double>(S * xhat.n());
  BatchNormGrads<T> g;
  g.input = Tensor5<T>(xhat.shape);
  g.gamma.assign(C, T{});
  g.beta.assign(C, T{});
  for (int c = 0; c < C; ++c) {
    double db = 0.0, dg = 0.0;
    for (int n = 0; n < xhat.n(); ++n) {
      const std::size_t off = xhat.offset(n, c, 0, 0, 0);
      const T* dy = &grad_out.values[off];
      const T* xh = &xhat.values[off];
      for (std::size_t i = 0; i < S; ++i) {
        db += dy[i];
        dg += static_cast<double>(dy[i]) * xh[i];
      }
    }
    g.beta[c] = static_cast<T>(db);
    g.gamma[c] = static_cast<T>(dg);
    const double scale = static_cast<double>(gamma[c]) * cache.inv_std[c];
    for (int n = 0; n < xhat.n(); ++n) {
      const std::size_t off = xhat.offset(n, c, 0, 0, 0);
      const T* dy = &grad_out.values[off];
      const T* xh = &xhat.values[off];
      T* dx = &g.input.values[off];
      if (cache.mode == NormMode::Eval) {
        for (std::size_t i = 0; i < S; ++i) dx[i] = static_cast<T>(scale * dy[i]);
      } else {
        const T k = static_cast<T>(scale / M);
        const T mdb = static_cast<T>(db), mdg = static_cast<T>(dg), mm = static_cast<T>(M);
        for (std::size_t i = 0; i < S; ++i) dx[i] = k * (mm * dy[i] - mdb - xh[i] * mdg);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------- concat

namespace {
Shape5 crop_offsets(const Shape5& skip, const Shape5& up) {
  if (skip[0] != up[0]) throw ShapeError("concat_crop: batch size mismatch");
  Shape5 off{0, 0, 0, 0, 0};
  for (int a = 2; a < 5; ++a) {
    const int diff = skip[a] - up[a];
    if (diff < 0 || diff % 2)
      throw ShapeError("concat_crop: cannot centre-crop " + to_string(skip) + " to " + to_string(up));
    off[a] = diff / 2;
  }
  return off;
}
}  // namespace

template <class T>
Tensor5<T> concat_crop_forward(const Tensor5<T>& skip, const Tensor5<T>& up) {
  const Shape5 off = crop_offsets(skip.shape, up.shape);
  const int cs = skip.c(), cu = up.c();
  Tensor5<T> out({up.n(), cs + cu, up.d(), up.h(), up.w()});
  for (int n = 0; n < up.n(); ++n) {
    for (int c = 0; c < cs; ++c)
      for (int z = 0; z < up.d(); ++z)
        for (int y = 0; y < up.h(); ++y)
          std::memcpy(&out.values[out.offset(n, c, z, y, 0)],
                      &skip.values[skip.offset(n, c, z + off[2], y + off[3], off[4])], sizeof(T) * up.w());
    std::memcpy(&out.values[out.offset(n, cs, 0, 0, 0)], &up.values[up.offset(n, 0, 0, 0, 0)],
                sizeof(T) * cu * up.spatial());
  }
  return out;
}

template <class T>
ConcatGrads<T> concat_crop_backward(const Shape5& skip_shape, const Shape5& up_shape, const Tensor5<T>& grad_out) {
  const Shape5 off = crop_offsets(skip_shape, up_shape);
  const int cs = skip_shape[1], cu = up_shape[1];
  if (grad_out.shape != Shape5{up_shape[0], cs + cu, up_shape[2], up_shape[3], up_shape[4]})
    throw ShapeError("concat_crop_backward: gradient shape mismatch");
  ConcatGrads<T> g{Tensor5<T>(skip_shape), Tensor5<T>(up_shape)};
  const std::size_t S = g.up.spatial();
  for (int n = 0; n < up_shape[0]; ++n) {
    for (int c = 0; c < cs; ++c)
      for (int z = 0; z < up_shape[2]; ++z)
        for (int y = 0; y < up_shape[3]; ++y)
          std::memcpy(&g.skip.values[g.skip.offset(n, c, z + off[2], y + off[3], off[4])],
                      &grad_out.values[grad_out.offset(n, c, z, y, 0)], sizeof(T) * up_shape[4]);
    std::memcpy(&g.up.values[g.up.offset(n, 0, 0, 0, 0)], &grad_out.values[grad_out.offset(n, cs, 0, 0, 0)],
                sizeof(T) * cu * S);
  }
  return g;
}

// ---------------------------------------------------------------- instantiations

#define CSEG_INSTANTIATE_LAYERS(T)                                                                       \
  template Tensor5<T> conv3d_forward<T>(const Tensor5<T>&, const Tensor5<T>&, std::span<const T>);       \
  template ConvGrads<T> conv3d_backward<T>(const Tensor5<T>&, const Tensor5<T>&, const Tensor5<T>&, bool); \
  template Tensor5<T> relu_forward<T>(const Tensor5<T>&);                                                \
  template Tensor5<T> relu_backward<T>(const Tensor5<T>&, const Tensor5<T>&);                            \
  template PoolResult<T> maxpool2_forward<T>(const Tensor5<T>&);                                         \
  template Tensor5<T> maxpool2_backward<T>(const Shape5&, const std::vector<std::uint32_t>&,             \
                                           const Tensor5<T>&);                                           \
  template Tensor5<T> upconv2_forward<T>(const Tensor5<T>&, const Tensor5<T>&, std::span<const T>);      \
  template ConvGrads<T> upconv2_backward<T>(const Tensor5<T>&, const Tensor5<T>&, const Tensor5<T>&);    \
  template Tensor5<T> batchnorm_forward<T>(const Tensor5<T>&, std::span<const T>, std::span<const T>,    \
                                           std::span<T>, std::span<T>, NormMode, const BatchNormOptions&, \
                                           BatchNormCache<T>*);                                          \
  template BatchNormGrads<T> batchnorm_backward<T>(const BatchNormCache<T>&, std::span<const T>,         \
                                                   const Tensor5<T>&);                                   \
  template Tensor5<T> concat_crop_forward<T>(const Tensor5<T>&, const Tensor5<T>&);                      \
  template ConcatGrads<T> concat_crop_backward<T>(const Shape5&, const Shape5&, const Tensor5<T>&);

CSEG_INSTANTIATE_LAYERS(float)
CSEG_INSTANTIATE_LAYERS(double)

#undef CSEG_INSTANTIATE_LAYERS

}  // namespace cseg
