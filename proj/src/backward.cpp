#include "mhs/backward.hpp"

#include <cmath>

#include "mhs/parallel.hpp"

namespace mhs {
namespace {

// out += aᵀ · b for a[M×P], b[M×Q], out[P×Q].
void add_matmul_tn(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t M = a.extent(0), P = a.extent(1), Q = b.extent(1);
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t j = 0; j < Q; ++j) {
      double acc = 0.0;
      for (std::size_t m = 0; m < M; ++m) acc += a[m * P + i] * b[m * Q + j];
      out[i * Q + j] += acc;
    }
}

// out += a · bᵀ for a[M×Q], b[P×Q], out[M×P].
void add_matmul_nt(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t M = a.extent(0), Q = a.extent(1), P = b.extent(0);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < P; ++j) {
      double acc = 0.0;
      for (std::size_t q = 0; q < Q; ++q) acc += a[i * Q + q] * b[j * Q + q];
      out[i * P + j] += acc;
    }
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": cotangent " + shape_str(b.shape()) + " does not match " +
                         shape_str(a.shape()));
  }
}

}  // namespace

RecurrenceGrads backward_recurrence(const Tensor& a_bar, const Tensor& b_bar, const Tensor& c,
                                    const Tensor& x, const Tensor& dy) {
  Tensor h;
  recurrence_scan(a_bar, b_bar, c, x, &h);
  require_same(x, dy, "backward_recurrence");
  const std::size_t L = x.extent(0), N = h.extent(1);
  auto row = [N](const Tensor& p, std::size_t t) { return p.rank() == 1 ? 0 : t * N; };

  RecurrenceGrads g{Tensor(x.shape()), Tensor(a_bar.shape()), Tensor(b_bar.shape()), Tensor(c.shape())};
  std::vector<double> carry(N, 0.0);  // Ā_{t+1} ⊙ λ_{t+1}
  for (std::size_t t = L; t-- > 0;) {
    const std::size_t ra = row(a_bar, t), rb = row(b_bar, t), rc = row(c, t);
    double dx = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double lambda = carry[n] + c[rc + n] * dy[t];
      const double h_prev = t > 0 ? h(t - 1, n) : 0.0;
      g.c[rc + n] += dy[t] * h(t, n);
      g.a_bar[ra + n] += lambda * h_prev;
      g.b_bar[rb + n] += lambda * x[t];
      dx += b_bar[rb + n] * lambda;
      carry[n] = a_bar[ra + n] * lambda;
    }
    g.x[t] = dx;
  }
  return g;
}

Tensor backward_selective_scan(const Tensor& u, const SelectiveTrace& trace, const MambaWeights& weights,
                               const Tensor& dy, MambaWeights& grads) {
  require_same(u, dy, "backward_selective_scan");
  const std::size_t L = u.extent(0), E = u.extent(1), N = weights.state_dim();
  const Tensor& A = weights.a;

  Tensor du(u.shape());
  Tensor d_delta({L, E});
  Tensor d_b({L, N});
  Tensor d_c({L, N});
  std::vector<double> carry(E * N, 0.0);

  for (std::size_t t = L; t-- > 0;) {
    for (std::size_t d = 0; d < E; ++d) {
      const double g = dy(t, d);
      const double ut = u(t, d);
      const double dt = trace.delta(t, d);
      grads.d_skip[d] += g * ut;
      double du_td = g * weights.d_skip[d];
      double d_dt = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double h_t = trace.h(t, d, n);
        const double h_prev = t > 0 ? trace.h(t - 1, d, n) : 0.0;
        const double bt = trace.b(t, n);
        d_c(t, n) += g * h_t;
        const double lambda = carry[d * N + n] + g * trace.c(t, n);
        const double z = dt * A(d, n);
        const double a_bar = std::exp(z);
        const double phi = zoh_phi(z);
        const double d_abar = lambda * h_prev;
        const double d_bbar = lambda * ut;
        du_td += lambda * phi * dt * bt;
        const double dz = d_abar * a_bar + d_bbar * zoh_phi_grad(z) * dt * bt;
        d_dt += dz * A(d, n) + d_bbar * phi * bt;
        grads.a(d, n) += dz * dt;
        d_b(t, n) += d_bbar * phi * dt;
        carry[d * N + n] = lambda * a_bar;
      }
      du(t, d) += du_td;
      d_delta(t, d) = d_dt;
    }
  }

  Tensor d_pre({L, E});
  for (std::size_t i = 0; i < d_pre.size(); ++i) d_pre[i] = d_delta[i] * sigmoid(trace.delta_pre[i]);
  add_matmul_tn(u, d_pre, grads.w_delta);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t e = 0; e < E; ++e) grads.b_delta[e] += d_pre(t, e);
  add_matmul_nt(d_pre, weights.w_delta, du);
  add_matmul_tn(u, d_b, grads.w_b);
  add_matmul_nt(d_b, weights.w_b, du);
  add_matmul_tn(u, d_c, grads.w_c);
  add_matmul_nt(d_c, weights.w_c, du);
  return du;
}

Tensor backward_mamba_sequence(const MambaTrace& trace, const MambaWeights& weights, const Tensor& dy,
                               MambaWeights& grads) {
  const std::size_t L = trace.x.extent(0), E = weights.inner_dim();
  Tensor gated(trace.scan.shape());
  for (std::size_t i = 0; i < gated.size(); ++i) gated[i] = trace.scan[i] * silu(trace.gate_pre[i]);
  add_matmul_tn(gated, dy, grads.w_out);
  Tensor d_gated({L, E});
  add_matmul_nt(dy, weights.w_out, d_gated);

  Tensor d_scan({L, E});
  Tensor d_gate_pre({L, E});
  for (std::size_t i = 0; i < d_gated.size(); ++i) {
    d_scan[i] = d_gated[i] * silu(trace.gate_pre[i]);
    d_gate_pre[i] = d_gated[i] * trace.scan[i] * silu_grad(trace.gate_pre[i]);
  }
  Tensor dx(trace.x.shape());
  add_matmul_tn(trace.x, d_gate_pre, grads.w_gate);
  add_matmul_nt(d_gate_pre, weights.w_gate, dx);

  Tensor dv = backward_selective_scan(trace.v, trace.selective, weights, d_scan, grads);
  Tensor d_conv({L, E});
  for (std::size_t i = 0; i < dv.size(); ++i) d_conv[i] = dv[i] * silu_grad(trace.conv_out[i]);

  Tensor d_xin = d_conv;
  if (weights.has_conv()) {
    d_xin.fill(0.0);
    const std::size_t width = weights.conv_w.extent(1);
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t e = 0; e < E; ++e)
        for (std::size_t j = 0; j < width; ++j) {
          const std::size_t lag = width - 1 - j;
          if (lag > t) continue;
          grads.conv_w(e, j) += d_conv(t, e) * trace.xin(t - lag, e);
          d_xin(t - lag, e) += d_conv(t, e) * weights.conv_w(e, j);
        }
  }
  add_matmul_tn(trace.x, d_xin, grads.w_in);
  add_matmul_nt(d_xin, weights.w_in, dx);
  return dx;
}

Tensor backward_mamba_block(const std::vector<MambaTrace>& traces, const MambaWeights& weights,
                            const Tensor& dy, MambaWeights& grads) {
  if (dy.rank() != 3 || dy.extent(0) != traces.size()) {
    throw DimensionError("backward_mamba_block cotangent " + shape_str(dy.shape()) + " does not match " +
                         std::to_string(traces.size()) + " traced sequences");
  }
  const std::size_t B = dy.extent(0), S = dy.extent(1), L = dy.extent(2);
  Tensor dx(dy.shape());
  for (std::size_t b = 0; b < B; ++b) {
    Tensor dyb({L, S});
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t t = 0; t < L; ++t) dyb(t, s) = dy(b, s, t);
    Tensor dxb = backward_mamba_sequence(traces[b], weights, dyb, grads);
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t t = 0; t < L; ++t) dx(b, s, t) = dxb(t, s);
  }
  return dx;
}

EsfGrads backward_esf(const EsfScheme& scheme, const Tensor& stack, const Tensor& w, const Tensor& dz) {
  if (stack.rank() != 4) throw DimensionError("backward_esf expects a B×K×S×L stack");
  const std::size_t B = stack.extent(0), K = stack.extent(1), P = stack.extent(2) * stack.extent(3);
  if (dz.size() != B * P) throw DimensionError("backward_esf cotangent size mismatch");
  if (scheme.uses_pooling() && w.size() != 2) throw DimensionError("pooling W must have 2 entries");
  if (scheme.uses_cv() && K < 2) throw ContractError("coefficient of variation needs K >= 2 sections");

  EsfGrads g{Tensor(stack.shape()), Tensor({2})};
  const double Kd = static_cast<double>(K);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t p = 0; p < P; ++p) {
      const double* y = stack.data().data() + b * K * P + p;
      double* gy = g.stack.data().data() + b * K * P + p;
      const double dzp = dz[b * P + p];

      double sum = 0.0, hi = y[0], lo = y[0];
      std::size_t arg_hi = 0, arg_lo = 0;
      for (std::size_t k = 0; k < K; ++k) {
        const double v = y[k * P];
        sum += v;
        if (v > hi) hi = v, arg_hi = k;
        if (v < lo) lo = v, arg_lo = k;
      }
      const double mean = sum / Kd;
      const double base = scheme.uses_pooling() ? w[0] * mean + w[1] * hi : sum;

      double d_base = dzp;
      if (scheme.uses_cv()) {
        double md = 0.0;
        for (std::size_t k = 0; k < K; ++k) md += y[k * P] - lo;
        md /= Kd;
        double ss = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          const double d = (y[k * P] - lo) - md;
          ss += d * d;
        }
        const double sd = std::sqrt(ss / Kd);
        const double denom = md + scheme.eps;
        const double cv = sd / denom;
        d_base = dzp * gate_value(cv, scheme.t, scheme.gate);
        const double d_cv = dzp * base * gate_grad(cv, scheme.t, scheme.gate);
        if (d_cv != 0.0) {
          const double d_sd = d_cv / denom;
          const double d_denom = -d_cv * sd / (denom * denom);
          for (std::size_t k = 0; k < K; ++k) {
            double acc = d_denom / Kd;
            if (sd > 0.0) acc += d_sd * ((y[k * P] - lo) - md) / (Kd * sd);
            gy[k * P] += acc;
          }
          gy[arg_lo * P] -= d_denom;
        }
      }

      if (scheme.uses_pooling()) {
        for (std::size_t k = 0; k < K; ++k) gy[k * P] += d_base * w[0] / Kd;
        gy[arg_hi * P] += d_base * w[1];
        g.w[0] += d_base * mean;
        g.w[1] += d_base * hi;
      } else {
        for (std::size_t k = 0; k < K; ++k) gy[k * P] += d_base;
      }
    }
  }
  return g;
}

LayerNormGrads backward_layer_norm(const Tensor& x, std::size_t axis, const Tensor& gamma, double eps,
                                   const Tensor& dy) {
  require_same(x, dy, "backward_layer_norm");
  const std::size_t n = x.extent(axis);
  if (gamma.size() != n) throw DimensionError("backward_layer_norm gamma extent mismatch");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.extent(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.extent(i);

  LayerNormGrads g{Tensor(x.shape()), Tensor(gamma.shape()), Tensor(gamma.shape())};
  const double count = static_cast<double>(n);
  std::vector<double> xhat(n), dxhat(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mean = 0.0;
      for (std::size_t k = 0; k < n; ++k) mean += x[base + k * inner];
      mean /= count;
      double var = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double d = x[base + k * inner] - mean;
        var += d * d;
      }
      var /= count;
      const double denom = std::sqrt(var + eps);
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double centered = x[base + k * inner] - mean;
        xhat[k] = centered == 0.0 ? 0.0 : centered / denom;
        const double d = dy[base + k * inner];
        g.gamma[k] += d * xhat[k];
        g.beta[k] += d;
        dxhat[k] = d * gamma[k];
        mean_dxhat += dxhat[k];
        mean_dxhat_xhat += dxhat[k] * xhat[k];
      }
      if (denom == 0.0) continue;
      mean_dxhat /= count;
      mean_dxhat_xhat /= count;
      for (std::size_t k = 0; k < n; ++k) {
        g.x[base + k * inner] = (dxhat[k] - mean_dxhat - xhat[k] * mean_dxhat_xhat) / denom;
      }
    }
  }
  return g;
}

ForwardGrads backward_forward(const ForwardTrace& trace, const MhsWeights& weights, const MhsConfig& config,
                              const Tensor& dout) {
  const GridShape grid = trace.grid;
  const std::size_t B = trace.x.extent(0), C = config.channels, L = grid.cells();
  const std::size_t n = config.heads, S = config.subspace, K = config.routes;
  if (dout.rank() != 4 || dout.extent(0) != B || dout.extent(1) != grid.height ||
      dout.extent(2) != grid.width || dout.extent(3) != C) {
    throw DimensionError("backward_forward cotangent " + shape_str(dout.shape()) + " does not match output");
  }
  if (trace.heads.size() != n || trace.heads.front().mamba.front().empty()) {
    throw ContractError("backward_forward needs a trace recorded by forward()");
  }

  ForwardGrads out{Tensor(), weights.zeros_like()};
  MhsWeights& g = out.weights;

  Tensor dy = to_channel_first(dout);
  Tensor d_normed = dy;
  if (config.tail_projection) {
    d_normed = Tensor({B, n * S, L});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t m = 0; m < n * S; ++m) {
          const double* dyr = dy.data().data() + (b * C + c) * L;
          const double* nr = trace.normed.data().data() + (b * n * S + m) * L;
          double* dnr = d_normed.data().data() + (b * n * S + m) * L;
          const double tcm = weights.tail_proj(c, m);
          double acc = 0.0;
          for (std::size_t l = 0; l < L; ++l) {
            acc += dyr[l] * nr[l];
            dnr[l] += tcm * dyr[l];
          }
          g.tail_proj(c, m) += acc;
        }
  }

  LayerNormGrads ln = backward_layer_norm(trace.concat, 1, weights.ln_gamma, config.ln_eps, d_normed);
  g.ln_gamma = std::move(ln.gamma);
  g.ln_beta = std::move(ln.beta);

  static const Tensor kNoW({2});
  std::vector<Tensor> dx_heads(n);
  parallel_for(n, [&](std::size_t h) {
    const HeadTrace& ht = trace.heads[h];
    Tensor dz({B, S, L});
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(ln.x.data().begin() + static_cast<long>((b * n + h) * S * L), S * L,
                  dz.data().begin() + static_cast<long>(b * S * L));
    const Tensor& w = config.esf.uses_pooling() ? weights.esf_w[h] : kNoW;
    EsfGrads eg = backward_esf(config.esf, ht.stack, w, dz);
    if (config.esf.uses_pooling()) {
      g.esf_w[h][0] += eg.w[0];
      g.esf_w[h][1] += eg.w[1];
    }

    Tensor d_proj({B, S, L});
    for (std::size_t j = 0; j < K; ++j) {
      Tensor d_section({B, S, L});
      for (std::size_t b = 0; b < B; ++b)
        std::copy_n(eg.stack.data().begin() + static_cast<long>((b * K + j) * S * L), S * L,
                    d_section.data().begin() + static_cast<long>(b * S * L));
      Tensor d_out = gather_sequence(d_section, ht.routes[j]);
      Tensor d_seq = backward_mamba_block(ht.mamba[j], weights.mamba[h], d_out, g.mamba[h]);
      Tensor d_map = scatter_section(d_seq, ht.routes[j]);
      for (std::size_t i = 0; i < d_proj.size(); ++i) d_proj[i] += d_map[i];
    }

    Tensor dx({B, C, L});
    Tensor& gw = g.head_proj[h];
    const Tensor& W = weights.head_proj[h];
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t c = 0; c < C; ++c) {
          const double* dpr = d_proj.data().data() + (b * S + s) * L;
          const double* xr = trace.x.data().data() + (b * C + c) * L;
          double* dxr = dx.data().data() + (b * C + c) * L;
          const double wsc = W(s, c);
          double acc = 0.0;
          for (std::size_t l = 0; l < L; ++l) {
            acc += dpr[l] * xr[l];
            dxr[l] += wsc * dpr[l];
          }
          gw(s, c) += acc;
        }
    dx_heads[h] = std::move(dx);
  });

  Tensor dx({B, C, L});
  for (const Tensor& part : dx_heads)
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += part[i];
  out.x = to_channel_last(dx, grid);
  return out;
}

}  // namespace mhs
