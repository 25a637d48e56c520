#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "mhs/io.hpp"

using namespace mhs;

namespace {

MhsConfig pooled_config() {
  MhsConfig cfg;
  cfg.channels = 12;
  cfg.heads = 3;
  cfg.subspace = 4;
  cfg.ssm.state_dim = 3;
  cfg.esf.kind = EsfKind::MixPoolCv;
  return cfg;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("mhs_test_" + name);
}

std::uint64_t error_offset(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_weights(bytes);
  } catch (const FormatError& e) {
    return e.offset();
  }
  FAIL("expected FormatError");
  return 0;
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("config round trip") {
    const std::string text = R"({"c_l": 12, "n_heads": 4, "subspace_dim": 3, "k_routes": 2,
      "patterns": ["spiral", "raster", "snake", "diagonal"],
      "esf": {"scheme": "mixpool_cv", "t": 0.25, "eps": 1e-5, "w": [0.3, 0.7], "gate": "sigmoid"},
      "tail_projection": false,
      "ssm": {"state_dim": 5, "expansion": 3, "conv_width": 2, "conv_on": false}, "seed": 9})";
    const MhsConfig cfg = config_from_json_text(text);
    CHECK(cfg.channels == 12);
    CHECK(cfg.heads == 4);
    CHECK(cfg.routes == 2);
    CHECK(cfg.patterns.front() == ScanPattern::Spiral);
    CHECK(cfg.esf.kind == EsfKind::MixPoolCv);
    CHECK(cfg.esf.gate == GateKind::Sigmoid);
    CHECK(cfg.esf.t == 0.25);
    CHECK(cfg.esf_w_init[1] == 0.7);
    CHECK_FALSE(cfg.tail_projection);
    CHECK(cfg.ssm.expansion == 3);
    CHECK_FALSE(cfg.ssm.conv_on);
    CHECK(cfg.seed == 9);
    const MhsConfig again = config_from_json_text(config_to_json_text(cfg));
    CHECK(config_to_json_text(again) == config_to_json_text(cfg));
  }

  TEST_CASE("config defaults") {
    const MhsConfig cfg = config_from_json_text("{}");
    CHECK(cfg.channels == 96);
    CHECK(cfg.heads == 3);
    CHECK(cfg.subspace == 32);
    CHECK(cfg.esf.kind == EsfKind::CvScaling);
    CHECK(cfg.esf.t == 0.5);
    CHECK(cfg.esf.eps == 1e-6);
    CHECK(cfg.ssm.state_dim == 16);
    CHECK(cfg.ssm.expansion == 2);
  }

  TEST_CASE("config errors list every offending key") {
    try {
      config_from_json_text(R"({"c_l": "wide", "esf": {"scheme": "median", "bogus": 1}, "ssm": {"state_dim": -2}})");
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("c_l") != std::string::npos);
      CHECK(msg.find("esf.scheme") != std::string::npos);
      CHECK(msg.find("esf.bogus") != std::string::npos);
      CHECK(msg.find("ssm.state_dim") != std::string::npos);
    }
    CHECK_THROWS_AS(config_from_json_text(R"({"c_l": 96, "n_heads": 3, "subspace_dim": 30, "tail_projection": false})"),
                    ValidationError);
    CHECK_THROWS_AS(config_from_json_text("[1, 2]"), ValidationError);
    CHECK_THROWS_AS(config_from_json_text("{"), ValidationError);
  }

  TEST_CASE("weights round trip is bitwise") {
    const MhsConfig cfg = pooled_config();
    const MhsWeights w = init_weights(cfg, 3);
    CHECK(decode_weights(encode_weights(w)).bit_equal(w));
    const auto path = temp_path("rt.bin");
    save_weights(w, path);
    CHECK(load_weights(path, cfg).bit_equal(w));
    std::filesystem::remove(path);
  }

  TEST_CASE("f32 storage rounds every value to float") {
    const MhsWeights w = init_weights(pooled_config(), 4);
    const MhsWeights back = decode_weights(encode_weights(w, StorageType::F32));
    const auto a = w.named();
    const auto b = back.named();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < a[i].second->size(); ++j)
        CHECK((*b[i].second)[j] == static_cast<double>(static_cast<float>((*a[i].second)[j])));
  }

  TEST_CASE("header layout") {
    const auto bytes = encode_weights(init_weights(pooled_config(), 5));
    CHECK(std::memcmp(bytes.data(), "MHSW", 4) == 0);
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    std::uint64_t len = 0;
    for (int i = 7; i >= 0; --i) len = (len << 8) | bytes[8 + i];
    const std::string manifest(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(len));
    CHECK(manifest.front() == '[');
    CHECK(manifest.find("\"head.0.proj\"") != std::string::npos);
    CHECK(manifest.find("\"head.2.esf_w\"") != std::string::npos);
    CHECK(manifest.find("\"tail.proj\"") != std::string::npos);
  }

  TEST_CASE("corruption is rejected with an offset") {
    const auto good = encode_weights(init_weights(pooled_config(), 6));
    auto bad_magic = good;
    bad_magic[0] = 'X';
    CHECK(error_offset(bad_magic) == 0);
    auto bad_version = good;
    bad_version[4] = 2;
    CHECK(error_offset(bad_version) == 4);
    CHECK(error_offset({good.begin(), good.begin() + 10}) == 10);
    auto truncated = good;
    truncated.resize(good.size() - 3);
    CHECK(error_offset(truncated) == truncated.size());
    auto trailing = good;
    trailing.push_back(0);
    CHECK(error_offset(trailing) == good.size());
  }

  TEST_CASE("truncated file throws without returning weights") {
    const auto bytes = encode_weights(init_weights(pooled_config(), 7));
    const auto path = temp_path("trunc.bin");
    {
      std::ofstream out(path, std::ios::binary);
      out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size() / 2));
    }
    MhsWeights target;
    CHECK_THROWS_AS(target = load_weights(path), FormatError);
    CHECK(target.head_proj.empty());
    std::filesystem::remove(path);
  }

  TEST_CASE("config mismatch names the tensor") {
    const MhsConfig cfg = pooled_config();
    const auto path = temp_path("mismatch.bin");
    save_weights(init_weights(cfg, 8), path);
    MhsConfig wider = cfg;
    wider.channels = 16;
    try {
      load_weights(path, wider);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("head.0.proj") != std::string::npos);
    }
    std::filesystem::remove(path);
  }
}
