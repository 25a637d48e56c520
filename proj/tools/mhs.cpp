#include <chrono>
#include <cmath>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mhs/bench.hpp"
#include "mhs/checks.hpp"
#include "mhs/io.hpp"
#include "mhs/mhs.hpp"
#include "mhs/parallel.hpp"
#include "mhs/render.hpp"
#include "mhs/rng.hpp"
#include "mhs/scan_geometry.hpp"

using json = nlohmann::ordered_json;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

mhs::MhsConfig config_or_default(const std::string& path) {
  if (path.empty()) {
    mhs::MhsConfig c;
    c.validate();
    return c;
  }
  return mhs::load_config(path);
}

int cmd_routes(const std::string& pattern, std::size_t variant, std::size_t h, std::size_t w,
               const std::string& format) {
  const auto p = mhs::parse_pattern(pattern);
  if (!p) throw UsageError("unknown pattern '" + pattern + "' (raster, snake, diagonal, spiral)");
  if (variant >= mhs::kRouteVariants) throw UsageError("variant must be 0..3");
  if (h == 0 || w == 0) throw UsageError("grid extents must be positive");
  const mhs::ScanRoute route = mhs::build_route(*p, variant, mhs::GridShape{h, w});
  if (format == "ascii")
    std::cout << mhs::route_ascii(route);
  else if (format == "svg")
    std::cout << mhs::route_svg(route);
  else
    std::cout << mhs::route_dump(route);
  return kOk;
}

double l2(const mhs::Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

int cmd_demo(const std::string& config_path, std::uint64_t seed, std::size_t h, std::size_t w, std::size_t batch,
             const std::string& input) {
  if (h == 0 || w == 0 || batch == 0) throw UsageError("height, width and batch must be positive");
  const mhs::MhsConfig config = config_or_default(config_path);
  const mhs::MhsWeights weights = mhs::init_weights(config, seed);

  mhs::Tensor x({batch, h, w, config.channels});
  if (input == "constant") {
    x.fill(1.0);
  } else {
    mhs::Rng rng(seed ^ 0x5eedULL);
    x = rng.uniform_tensor(x.shape(), -1.0, 1.0);
  }

  mhs::ForwardTrace trace;
  const auto t0 = std::chrono::steady_clock::now();
  const mhs::Tensor y = mhs::forward(x, weights, config, &trace);
  const auto t1 = std::chrono::steady_clock::now();

  json out;
  out["config"] = json::parse(mhs::config_to_json_text(config));
  out["seed"] = seed;
  out["input"] = input;
  out["input_shape"] = x.shape();
  out["output_shape"] = y.shape();
  const auto patterns = config.head_patterns();
  json heads = json::array();
  for (std::size_t i = 0; i < trace.heads.size(); ++i) {
    json head;
    head["head"] = i;
    head["pattern"] = std::string(mhs::pattern_name(patterns[i]));
    head["section_norm"] = l2(trace.heads[i].fused);
    if (config.esf.uses_cv()) {
      const mhs::Tensor gate = mhs::gate_map(trace.heads[i].stack, config.esf);
      std::size_t zeros = 0;
      for (double g : gate.data()) zeros += g == 0.0 ? 1 : 0;
      head["gate_zero_fraction"] = static_cast<double>(zeros) / static_cast<double>(gate.size());
    } else {
      head["gate_zero_fraction"] = nullptr;
    }
    heads.push_back(head);
  }
  out["heads"] = heads;
  out["output_norm"] = l2(y);
  out["parameters"] = mhs::param_count(config);
  out["timing"] = {{"forward_ms", std::chrono::duration<double, std::milli>(t1 - t0).count()}};
  std::cout << out.dump(2) << '\n';
  return kOk;
}

int cmd_check(const std::string& scope) {
  const auto s = mhs::parse_check_scope(scope);
  if (!s) throw UsageError("unknown scope '" + scope + "' (routes, ssm, esf, grads, all)");
  return mhs::print_checks(mhs::run_checks(*s), std::cout) ? kOk : kFailure;
}

int cmd_params(const std::string& config_path) {
  const mhs::MhsConfig config = config_or_default(config_path);
  const mhs::ParamBreakdown b = mhs::param_breakdown(config);
  const auto patterns = config.head_patterns();
  auto row = [](const std::string& name, std::size_t n) {
    std::string pad(name.size() < 24 ? 24 - name.size() : 1, ' ');
    std::cout << name << pad << n << '\n';
  };
  std::cout << "C_l=" << config.channels << " n=" << config.heads << " S=" << config.subspace
            << " K=" << config.routes << " N=" << config.ssm.state_dim << " esf="
            << mhs::esf_kind_name(config.esf.kind) << " tail=" << (config.tail_projection ? "on" : "off") << '\n';
  row("head_projection", b.head_projection);
  for (std::size_t i = 0; i < b.head_ssm.size(); ++i)
    row("head." + std::to_string(i) + ".ssm (" + std::string(mhs::pattern_name(patterns[i])) + ")", b.head_ssm[i]);
  row("esf", b.esf);
  row("layer_norm", b.layer_norm);
  row("tail", b.tail);
  row("total", b.total);
  return kOk;
}

int cmd_bench(const std::string& strategy, std::size_t h, std::size_t w, std::size_t channels, std::size_t reps,
              std::uint64_t seed) {
  std::vector<mhs::GatherStrategy> strategies;
  if (strategy == "both") {
    strategies = {mhs::GatherStrategy::PerRouteCopy, mhs::GatherStrategy::FusedGather};
  } else if (auto s = mhs::parse_strategy(strategy)) {
    strategies = {*s};
  } else {
    throw UsageError("unknown strategy '" + strategy + "' (per-route-copy, fused-gather, both)");
  }
  if (reps < 3) throw UsageError("--reps must be at least 3");
  if (h == 0 || w == 0 || channels == 0) throw UsageError("grid and channels must be positive");
  mhs::BenchOptions o;
  o.height = h;
  o.width = w;
  o.channels = channels;
  o.reps = reps;
  o.seed = seed;
  std::vector<mhs::BenchResult> results;
  try {
    results = mhs::run_bench(strategies, o);
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  json out = json::array();
  for (const auto& r : results) {
    out.push_back({{"label", r.label},
                   {"grid", {r.height, r.width}},
                   {"channels", r.channels},
                   {"reps", r.reps},
                   {"checksum", r.checksum},
                   {"timing",
                    {{"median_ms", r.median_ms},
                     {"p10_ms", r.p10_ms},
                     {"p90_ms", r.p90_ms},
                     {"elements_per_second", r.elements_per_second}}}});
  }
  std::cout << out.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-head scan toolkit"};
  app.require_subcommand(1);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: MHS_NUM_THREADS or 1)");

  std::string pattern, format = "perm";
  std::size_t variant = 0, rh = 0, rw = 0;
  auto* routes = app.add_subcommand("routes", "Print or render one scan route");
  routes->add_option("pattern", pattern, "raster | snake | diagonal | spiral")->required();
  routes->add_option("variant", variant, "Starting corner 0..3")->required();
  routes->add_option("H", rh)->required();
  routes->add_option("W", rw)->required();
  routes->add_option("--format", format)->check(CLI::IsMember({"ascii", "svg", "perm"}));

  std::string config_path, input = "random";
  std::uint64_t seed = 0;
  std::size_t dh = 8, dw = 8, batch = 1;
  auto* demo = app.add_subcommand("demo", "Run one forward pass and print JSON statistics");
  demo->add_option("--config", config_path, "Config JSON (defaults built in)");
  demo->add_option("--seed", seed);
  demo->add_option("--height", dh);
  demo->add_option("--width", dw);
  demo->add_option("--batch", batch);
  demo->add_option("--input", input)->check(CLI::IsMember({"random", "constant"}));

  std::string scope;
  auto* check = app.add_subcommand("check", "Run the property and gradient suites");
  check->add_option("scope", scope, "routes | ssm | esf | grads | all")->required();

  auto* params = app.add_subcommand("params", "Itemized parameter count");
  params->add_option("--config", config_path);

  std::string strategy = "both";
  std::size_t bh = 64, bw = 64, channels = 32, reps = 5;
  std::uint64_t bench_seed = 0;
  auto* bench = app.add_subcommand("bench", "Time the gather/scatter strategies");
  bench->add_option("--strategy", strategy, "per-route-copy | fused-gather | both");
  bench->add_option("--height", bh);
  bench->add_option("--width", bw);
  bench->add_option("--channels", channels, "S");
  bench->add_option("--reps", reps);
  bench->add_option("--seed", bench_seed);

  for (auto* sub : {demo, check}) sub->add_option("--threads", threads, "Worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (threads > 0) mhs::set_num_threads(threads);
    if (*routes) return cmd_routes(pattern, variant, rh, rw, format);
    if (*demo) return cmd_demo(config_path, seed, dh, dw, batch, input);
    if (*check) return cmd_check(scope);
    if (*params) return cmd_params(config_path);
    if (*bench) return cmd_bench(strategy, bh, bw, channels, reps, bench_seed);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const mhs::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kUsage;
  } catch (const mhs::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
