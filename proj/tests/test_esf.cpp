#include <doctest.h>

#include <cmath>

#include "mhs/esf.hpp"
#include "mhs/rng.hpp"
#include "oracles.hpp"

using namespace mhs;

namespace {

Tensor column(std::vector<double> v) {
  const std::size_t k = v.size();
  return Tensor({1, k, 1, 1}, std::move(v));
}

Tensor w2(double a, double b) { return Tensor({2}, std::vector<double>{a, b}); }

Tensor replicate(const Tensor& section, std::size_t K) {
  Tensor out({1, K, section.extent(1), section.extent(2)});
  for (std::size_t k = 0; k < K; ++k)
    std::copy(section.data().begin(), section.data().end(), out.data().begin() + static_cast<long>(k * section.size()));
  return out;
}

}  // namespace

TEST_SUITE("esf") {
  TEST_CASE("sum") {
    const Tensor v({1, 2, 3}, std::vector<double>{1, -2, 3, 0.5, 0, 7});
    const Tensor z = fuse_sum(replicate(v, 2));
    CHECK(z.bit_equal(scale(v, 2.0)));
    CHECK(fuse_sum(replicate(v, 1)).bit_equal(v));
    CHECK(fuse_sum(column({0, 0, 0, 1}))[0] == 1.0);
  }

  TEST_CASE("mixpool") {
    const Tensor s = column({1, 3, -2, 0.5});
    CHECK(fuse_mixpool(s, w2(1, 0))[0] == 0.625);
    CHECK(fuse_mixpool(s, w2(0, 1))[0] == 3.0);
    CHECK(fuse_mixpool(column({1, 3}), w2(0.5, 0.5))[0] == 2.5);
    CHECK_THROWS_AS(fuse_mixpool(s, Tensor({3}, 1.0)), DimensionError);
  }

  TEST_CASE("coefficient of variation") {
    CHECK(max_abs(coefficient_variation(replicate(Tensor({1, 2, 2}, 0.3), 4), 1e-6)) == 0.0);
    const double cv = coefficient_variation(column({0, 0, 0, 1}), 1e-6)[0];
    CHECK(cv == doctest::Approx(std::sqrt(3.0)).epsilon(1e-5));
    CHECK(cv == doctest::Approx(oracle::cv({0, 0, 0, 1}, 1e-6)).epsilon(1e-14));
    CHECK_THROWS_AS(coefficient_variation(column({1}), 1e-6), ContractError);
  }

  TEST_CASE("cv matches the oracle on random stacks") {
    Rng rng(30);
    const Tensor s = rng.uniform_tensor({2, 5, 3, 4}, -2, 2);
    const Tensor cv = coefficient_variation(s, 1e-6);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < 12; ++i) {
        oracle::Vec vals;
        for (std::size_t k = 0; k < 5; ++k) vals.push_back(s[(b * 5 + k) * 12 + i]);
        CHECK(cv[b * 12 + i] == doctest::Approx(oracle::cv(vals, 1e-6)).epsilon(1e-13));
      }
  }

  TEST_CASE("cv shift and scale invariance") {
    Rng rng(31);
    const Tensor s = rng.uniform_tensor({1, 4, 3, 5}, -1, 1);
    const Tensor base = coefficient_variation(s, 1e-6);
    const Tensor shifted = coefficient_variation(elementwise(s, Tensor::scalar(3.7), BinaryOp::Add), 1e-6);
    const Tensor scaled = coefficient_variation(scale(s, 2.5), 1e-6);
    for (std::size_t i = 0; i < base.size(); ++i) {
      CHECK(std::fabs(shifted[i] - base[i]) <= 1e-6 * base[i]);
      CHECK(std::fabs(scaled[i] - base[i]) <= 1e-5 * base[i]);
    }
    const Tensor eps_moved = coefficient_variation(s, 1e-6 / 2.5);
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(std::fabs(scaled[i] - eps_moved[i]) <= 1e-12 * base[i]);
  }

  TEST_CASE("cv scaling") {
    const Tensor same = replicate(Tensor({1, 2, 3}, -0.8), 4);
    CHECK(max_abs(fuse_cv_scale(same, 0.5, 1e-6)) == 0.0);
    CHECK(max_abs(fuse_cv_scale(same, 0.0, 1e-6)) == 0.0);
    const double z = fuse_cv_scale(column({0, 0, 0, 1}), 0.5, 1e-6)[0];
    CHECK(std::fabs(z - (std::sqrt(3.0) - 0.5)) <= 1e-5);
    CHECK_THROWS_AS(fuse_cv_scale(column({0, 1}), -0.1, 1e-6), ContractError);
  }

  TEST_CASE("mixpool with cv scaling") {
    Rng rng(32);
    const Tensor s = rng.uniform_tensor({1, 4, 2, 3}, -1, 1);
    CHECK(fuse_mixpool_cv(s, w2(4, 0), 0.3, 1e-6).bit_equal(fuse_cv_scale(s, 0.3, 1e-6)));
    CHECK(max_abs(fuse_mixpool_cv(replicate(Tensor({1, 2, 2}, 5.0), 4), w2(0.5, 0.5), 0.5, 1e-6)) == 0.0);
    CHECK(fuse_mixpool_cv(column({1, 3}), w2(0.5, 0.5), 0.0, 1e-6)[0] == doctest::Approx(2.5 / (1 + 1e-6)).epsilon(1e-15));
  }

  TEST_CASE("sigmoid gate") {
    CHECK(gate_value(0.5, 0.5, GateKind::Sigmoid) == 0.5);
    CHECK(gate_value(0.2, 0.5, GateKind::Relu) == 0.0);
    CHECK(gate_value(0.9, 0.5, GateKind::Relu) == doctest::Approx(0.4));
    CHECK(gate_grad(0.5, 0.5, GateKind::Relu) == 0.0);
    CHECK(gate_grad(0.5, 0.5, GateKind::Sigmoid) == 0.25);
  }

  TEST_CASE("reductions are symmetric in the sections") {
    Rng rng(33);
    const Tensor s = rng.uniform_tensor({1, 4, 3, 4}, -1, 1);
    Tensor p(s.shape());
    const std::size_t order[4] = {3, 1, 0, 2};
    for (std::size_t k = 0; k < 4; ++k)
      std::copy_n(s.data().begin() + static_cast<long>(order[k] * 12), 12, p.data().begin() + static_cast<long>(k * 12));
    for (EsfKind kind : {EsfKind::Sum, EsfKind::MixturePooling, EsfKind::CvScaling, EsfKind::MixPoolCv}) {
      EsfScheme scheme;
      scheme.kind = kind;
      scheme.t = 0.1;
      CHECK(max_abs_diff(fuse(s, scheme, w2(0.3, 0.7)), fuse(p, scheme, w2(0.3, 0.7))) <= 1e-12);
    }
  }

  TEST_CASE("sum equals K times the mean") {
    Rng rng(34);
    const Tensor s = rng.uniform_tensor({2, 4, 3, 4}, -1, 1);
    CHECK(fuse_sum(s).bit_equal(scale(fuse_mixpool(s, w2(1, 0)), 4.0)));
  }

  TEST_CASE("gate map and names") {
    EsfScheme scheme;
    CHECK(max_abs(gate_map(replicate(Tensor({1, 1, 2}, 1.0), 4), scheme)) == 0.0);
    scheme.kind = EsfKind::Sum;
    CHECK(gate_map(column({0, 1}), scheme)[0] == 1.0);
    for (EsfKind k : {EsfKind::Sum, EsfKind::MixturePooling, EsfKind::CvScaling, EsfKind::MixPoolCv})
      CHECK(parse_esf_kind(esf_kind_name(k)) == k);
    CHECK_FALSE(parse_esf_kind("median").has_value());
  }
}
