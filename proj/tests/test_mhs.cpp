#include <doctest.h>

#include "mhs/mhs.hpp"
#include "mhs/parallel.hpp"
#include "mhs/rng.hpp"

using namespace mhs;

namespace {

MhsConfig small_config(std::size_t c, std::size_t n, std::size_t s) {
  MhsConfig cfg;
  cfg.channels = c;
  cfg.heads = n;
  cfg.subspace = s;
  cfg.ssm.state_dim = 4;
  return cfg;
}

Tensor random_input(std::size_t b, std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  return rng.uniform_tensor({b, h, w, c}, -1, 1);
}

}  // namespace

TEST_SUITE("mhs") {
  TEST_CASE("reference configurations keep the input shape") {
    MhsConfig cfg;  // C_l=96, n=3, S=32, K=4, cv t=0.5, tail on
    const Tensor x = random_input(1, 8, 8, 96, 40);
    CHECK(forward(x, init_weights(cfg, 1), cfg).shape() == Shape{1, 8, 8, 96});
    cfg.tail_projection = false;
    CHECK(forward(x, init_weights(cfg, 1), cfg).shape() == Shape{1, 8, 8, 96});
  }

  TEST_CASE("shape contract over heads, subspaces and grids") {
    const std::size_t grids[][2] = {{1, 1}, {3, 5}, {16, 16}};
    for (std::size_t n = 1; n <= 4; ++n)
      for (std::size_t s : {8u, 16u, 32u})
        for (const auto& g : grids) {
          if (g[0] == 16 && s != 8) continue;
          MhsConfig cfg = small_config(12, n, s);
          const Tensor x = random_input(1, g[0], g[1], 12, n * 100 + s);
          CHECK(forward(x, init_weights(cfg, n), cfg).shape() == x.shape());
        }
  }

  TEST_CASE("validation lists every problem") {
    MhsConfig cfg = small_config(96, 3, 30);
    cfg.tail_projection = false;
    cfg.routes = 5;
    cfg.esf.t = -1.0;
    try {
      cfg.validate();
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("tail_projection") != std::string::npos);
      CHECK(msg.find("k_routes") != std::string::npos);
      CHECK(msg.find("esf.t") != std::string::npos);
    }
    MhsConfig ok = small_config(96, 3, 32);
    ok.tail_projection = false;
    CHECK_NOTHROW(ok.validate());
  }

  TEST_CASE("default head patterns") {
    CHECK(small_config(12, 3, 4).head_patterns() ==
          std::vector<ScanPattern>{ScanPattern::Snake, ScanPattern::Diagonal, ScanPattern::Spiral});
    CHECK(small_config(12, 4, 3).head_patterns() ==
          std::vector<ScanPattern>(kAllPatterns.begin(), kAllPatterns.end()));
  }

  TEST_CASE("weights are deterministic and shaped by the config") {
    MhsConfig cfg;
    const MhsWeights a = init_weights(cfg, 7), b = init_weights(cfg, 7), c = init_weights(cfg, 8);
    CHECK(a.bit_equal(b));
    CHECK_FALSE(a.head_proj[0].bit_equal(c.head_proj[0]));
    REQUIRE(a.head_proj.size() == 3);
    CHECK(a.head_proj[0].shape() == Shape{32, 96});
    CHECK(a.ln_gamma.size() == 96);
    CHECK(a.ln_beta.size() == 96);
    CHECK(a.tail_proj.shape() == Shape{96, 96});
    CHECK(a.esf_w.empty());
    cfg.esf.kind = EsfKind::MixturePooling;
    const MhsWeights p = init_weights(cfg, 7);
    REQUIRE(p.esf_w.size() == 3);
    CHECK(p.esf_w[1].storage() == std::vector<double>{0.5, 0.5});
  }

  TEST_CASE("weights validation names the tensor") {
    MhsConfig cfg = small_config(12, 3, 4);
    MhsWeights w = init_weights(cfg, 1);
    w.mamba[1].w_c = Tensor({8, 5});
    try {
      validate_weights(w, cfg);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("head.1.mamba.w_c") != std::string::npos);
    }
  }

  TEST_CASE("parameter counts") {
    MhsConfig cfg;
    std::size_t stored = 0;
    const MhsWeights w = init_weights(cfg, 0);
    for (const auto& [name, t] : w.named()) stored += t->size();
    CHECK(param_count(cfg) == stored);

    MhsConfig off = cfg;
    off.tail_projection = false;
    CHECK(param_count(cfg) - param_count(off) == 96 * 96);

    MhsConfig k1 = cfg;
    k1.routes = 2;
    CHECK(param_count(k1) == param_count(cfg));

    MhsConfig four = cfg;
    four.heads = 4;
    four.subspace = 24;
    CHECK(param_count(four) < param_count(cfg));
    four.subspace = 32;
    CHECK(param_count(four) > param_count(cfg));

    const ParamBreakdown b = param_breakdown(cfg);
    CHECK(b.head_projection == 3 * 32 * 96);
    CHECK(b.head_ssm.size() == 3);
    CHECK(b.layer_norm == 2 * 96);
    CHECK(b.tail == 96 * 96);
    CHECK(b.esf == 0);
    MhsConfig pool = cfg;
    pool.esf.kind = EsfKind::MixPoolCv;
    CHECK(param_breakdown(pool).esf == 6);
  }

  TEST_CASE("zero input gives zero output") {
    MhsConfig cfg = small_config(12, 3, 4);
    const Tensor y = forward(Tensor({2, 3, 3, 12}), init_weights(cfg, 2), cfg);
    CHECK(max_abs(y) == 0.0);
  }

  TEST_CASE("constant input on route-symmetric grids closes every gate") {
    MhsConfig cfg = small_config(12, 3, 4);
    const MhsWeights w = init_weights(cfg, 3);
    ForwardTrace trace;
    forward(Tensor({1, 1, 1, 12}, 0.7), w, cfg, &trace);
    for (const HeadTrace& h : trace.heads) CHECK(max_abs(h.fused) == 0.0);

    // On an H×1 grid the column flip is a no-op, so K=2 routes coincide.
    cfg.routes = 2;
    forward(Tensor({1, 5, 1, 12}, 0.7), init_weights(cfg, 3), cfg, &trace);
    for (const HeadTrace& h : trace.heads) CHECK(max_abs(h.fused) == 0.0);
  }

  TEST_CASE("zeroing one head's projection zeroes only that head") {
    MhsConfig cfg = small_config(12, 3, 4);
    MhsWeights w = init_weights(cfg, 4);
    const Tensor x = random_input(1, 4, 4, 12, 41);
    ForwardTrace before, after;
    forward(x, w, cfg, &before);
    w.head_proj[1].fill(0.0);
    forward(x, w, cfg, &after);
    CHECK(max_abs(after.heads[1].fused) == 0.0);
    CHECK(after.heads[0].fused.bit_equal(before.heads[0].fused));
    CHECK(after.heads[2].fused.bit_equal(before.heads[2].fused));
  }

  TEST_CASE("single route with sum fusion equals a hand-wired pipeline") {
    MhsConfig cfg = small_config(6, 2, 3);
    cfg.routes = 1;
    cfg.esf.kind = EsfKind::Sum;
    const MhsWeights w = init_weights(cfg, 5);
    const std::size_t H = 3, W = 4, L = H * W, C = 6, S = 3;
    const Tensor X = random_input(2, H, W, C, 42);
    const Tensor y = forward(X, w, cfg);

    Tensor concat({2, 2 * S, L});
    const auto patterns = cfg.head_patterns();
    for (std::size_t h = 0; h < 2; ++h) {
      Tensor xh({2, S, L});
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t s = 0; s < S; ++s)
          for (std::size_t l = 0; l < L; ++l) {
            double acc = 0.0;
            for (std::size_t c = 0; c < C; ++c) acc += w.head_proj[h](s, c) * X(b, l / W, l % W, c);
            xh(b, s, l) = acc;
          }
      const ScanRoute route = build_route(patterns[h], 0, GridShape{H, W});
      const Tensor section = scatter_section(mamba_block(gather_sequence(xh, route), w.mamba[h]), route);
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t s = 0; s < S; ++s)
          for (std::size_t l = 0; l < L; ++l) concat(b, h * S + s, l) = section(b, s, l);
    }
    const Tensor normed = layer_norm(concat, 1, w.ln_gamma, w.ln_beta, 1e-5);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t l = 0; l < L; ++l)
        for (std::size_t c = 0; c < C; ++c) {
          double acc = 0.0;
          for (std::size_t k = 0; k < 2 * S; ++k) acc += w.tail_proj(c, k) * normed(b, k, l);
          CHECK(y(b, l / W, l % W, c) == acc);
        }
  }

  TEST_CASE("forward is independent of the thread count") {
    MhsConfig cfg = small_config(12, 4, 3);
    cfg.esf.kind = EsfKind::MixPoolCv;
    const MhsWeights w = init_weights(cfg, 6);
    const Tensor x = random_input(2, 5, 6, 12, 43);
    set_num_threads(1);
    const Tensor ref = forward(x, w, cfg);
    for (std::size_t t : {2u, 3u, 8u}) {
      set_num_threads(t);
      CHECK(forward(x, w, cfg).bit_equal(ref));
    }
    set_num_threads(1);
  }

  TEST_CASE("input errors") {
    MhsConfig cfg = small_config(12, 3, 4);
    const MhsWeights w = init_weights(cfg, 7);
    CHECK_THROWS_AS(forward(Tensor({1, 2, 2, 10}), w, cfg), DimensionError);
    Tensor bad({1, 2, 2, 12});
    bad[3] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(forward(bad, w, cfg), DomainError);
  }

  TEST_CASE("layout helpers round trip") {
    const Tensor X = random_input(2, 3, 4, 5, 44);
    const Tensor cf = to_channel_first(X);
    CHECK(cf.shape() == Shape{2, 5, 12});
    CHECK(cf(1, 3, 7) == X(1, 1, 3, 3));
    CHECK(to_channel_last(cf, GridShape{3, 4}).bit_equal(X));
  }
}
