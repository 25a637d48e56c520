#include "mhs/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <type_traits>

#include "json.hpp"

namespace mhs {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config JSON
// ---------------------------------------------------------------------------

namespace {

class ConfigReader {
 public:
  explicit ConfigReader(std::vector<std::string>& problems) : problems_(problems) {}

  template <typename T>
  void read(const json& obj, const char* key, const std::string& path, T& out) {
    if (!obj.contains(key)) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!obj.at(key).is_boolean()) {
          problems_.push_back(path + " must be a boolean");
          return;
        }
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!obj.at(key).is_number_integer() || obj.at(key).get<long long>() < 0) {
          problems_.push_back(path + " must be a non-negative integer");
          return;
        }
      }
      out = obj.at(key).get<T>();
    } catch (const json::exception&) {
      problems_.push_back(path + " has the wrong type");
    }
  }

  void unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
    for (const auto& [k, v] : obj.items()) {
      if (!allowed.count(k)) problems_.push_back(prefix + k + " is not a recognised key");
    }
  }

  std::vector<std::string>& problems_;
};

}  // namespace

MhsConfig config_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("config must be a JSON object");

  MhsConfig cfg;
  std::vector<std::string> problems;
  ConfigReader r(problems);
  r.unknown_keys(doc, {"c_l", "n_heads", "subspace_dim", "k_routes", "patterns", "esf", "tail_projection",
                       "ssm", "seed"},
                 "");
  r.read(doc, "c_l", "c_l", cfg.channels);
  r.read(doc, "n_heads", "n_heads", cfg.heads);
  r.read(doc, "subspace_dim", "subspace_dim", cfg.subspace);
  r.read(doc, "k_routes", "k_routes", cfg.routes);
  r.read(doc, "tail_projection", "tail_projection", cfg.tail_projection);
  r.read(doc, "seed", "seed", cfg.seed);

  if (doc.contains("patterns")) {
    const json& p = doc["patterns"];
    if (!p.is_array()) {
      problems.push_back("patterns must be an array of pattern names");
    } else {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const auto parsed = p[i].is_string() ? parse_pattern(p[i].get<std::string>()) : std::nullopt;
        if (!parsed) {
          problems.push_back("patterns[" + std::to_string(i) +
                             "] must be one of raster, snake, diagonal, spiral");
        } else {
          cfg.patterns.push_back(*parsed);
        }
      }
    }
  }

  if (doc.contains("esf")) {
    const json& e = doc["esf"];
    if (!e.is_object()) {
      problems.push_back("esf must be an object");
    } else {
      r.unknown_keys(e, {"scheme", "t", "eps", "w", "gate"}, "esf.");
      if (e.contains("scheme")) {
        const auto k = e["scheme"].is_string() ? parse_esf_kind(e["scheme"].get<std::string>()) : std::nullopt;
        if (!k) {
          problems.push_back("esf.scheme must be one of sum, mixpool, cv, mixpool_cv");
        } else {
          cfg.esf.kind = *k;
        }
      }
      if (e.contains("gate")) {
        const auto g = e["gate"].is_string() ? parse_gate_kind(e["gate"].get<std::string>()) : std::nullopt;
        if (!g) {
          problems.push_back("esf.gate must be relu or sigmoid");
        } else {
          cfg.esf.gate = *g;
        }
      }
      r.read(e, "t", "esf.t", cfg.esf.t);
      r.read(e, "eps", "esf.eps", cfg.esf.eps);
      if (e.contains("w")) {
        const json& w = e["w"];
        if (!w.is_array() || w.size() != 2 || !w[0].is_number() || !w[1].is_number()) {
          problems.push_back("esf.w must be an array of two numbers");
        } else {
          cfg.esf_w_init = {w[0].get<double>(), w[1].get<double>()};
        }
      }
    }
  }

  if (doc.contains("ssm")) {
    const json& s = doc["ssm"];
    if (!s.is_object()) {
      problems.push_back("ssm must be an object");
    } else {
      r.unknown_keys(s, {"state_dim", "expansion", "conv_width", "conv_on"}, "ssm.");
      r.read(s, "state_dim", "ssm.state_dim", cfg.ssm.state_dim);
      r.read(s, "expansion", "ssm.expansion", cfg.ssm.expansion);
      r.read(s, "conv_width", "ssm.conv_width", cfg.ssm.conv_width);
      r.read(s, "conv_on", "ssm.conv_on", cfg.ssm.conv_on);
    }
  }

  if (!problems.empty()) {
    std::ostringstream os;
    os << "invalid config:";
    for (const auto& p : problems) os << "\n  - " << p;
    throw ValidationError(os.str());
  }
  cfg.validate();
  return cfg;
}

MhsConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json_text(const MhsConfig& config) {
  json patterns = json::array();
  for (ScanPattern p : config.head_patterns()) patterns.push_back(std::string(pattern_name(p)));
  json doc = {
      {"c_l", config.channels},
      {"n_heads", config.heads},
      {"subspace_dim", config.subspace},
      {"k_routes", config.routes},
      {"patterns", patterns},
      {"esf",
       {{"scheme", std::string(esf_kind_name(config.esf.kind))},
        {"t", config.esf.t},
        {"eps", config.esf.eps},
        {"w", {config.esf_w_init[0], config.esf_w_init[1]}},
        {"gate", std::string(gate_kind_name(config.esf.gate))}}},
      {"tail_projection", config.tail_projection},
      {"ssm",
       {{"state_dim", config.ssm.state_dim},
        {"expansion", config.ssm.expansion},
        {"conv_width", config.ssm.conv_width},
        {"conv_on", config.ssm.conv_on}}},
      {"seed", config.seed},
  };
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Weights container
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', 'H', 'S', 'W'};
constexpr std::size_t kHeaderSize = 16;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

struct ManifestEntry {
  std::string name;
  Shape shape;
  StorageType storage;
};

// Destination for a manifest name inside partially assembled weights.
struct Assembly {
  std::map<std::size_t, Tensor> proj, esf_w;
  std::map<std::size_t, std::map<std::string, Tensor>> mamba;
  std::optional<Tensor> gamma, beta, tail;
};

bool place(Assembly& a, const std::string& name, Tensor t) {
  auto once = [&](std::optional<Tensor>& slot) {
    if (slot) return false;
    slot = std::move(t);
    return true;
  };
  if (name == "ln.gamma") return once(a.gamma);
  if (name == "ln.beta") return once(a.beta);
  if (name == "tail.proj") return once(a.tail);
  if (name.rfind("head.", 0) != 0) return false;
  const std::size_t dot = name.find('.', 5);
  if (dot == std::string::npos || dot == 5) return false;
  std::size_t head = 0;
  for (std::size_t i = 5; i < dot; ++i) {
    if (name[i] < '0' || name[i] > '9') return false;
    head = head * 10 + static_cast<std::size_t>(name[i] - '0');
  }
  const std::string rest = name.substr(dot + 1);
  if (rest == "proj") return a.proj.emplace(head, std::move(t)).second;
  if (rest == "esf_w") return a.esf_w.emplace(head, std::move(t)).second;
  if (rest.rfind("mamba.", 0) == 0) {
    static const std::set<std::string> fields = {"w_in", "w_gate", "conv_w", "w_delta", "b_delta",
                                                 "w_b",  "w_c",    "a",      "d_skip",  "w_out"};
    const std::string field = rest.substr(6);
    if (!fields.count(field)) return false;
    return a.mamba[head].emplace(field, std::move(t)).second;
  }
  return false;
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const MhsWeights& weights, StorageType storage) {
  json manifest = json::array();
  const auto tensors = weights.named();
  for (const auto& [name, t] : tensors) {
    manifest.push_back({{"name", name}, {"shape", t->shape()}, {"dtype", storage == StorageType::F64 ? "f64" : "f32"}});
  }
  const std::string text = manifest.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, kWeightsVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : tensors) {
    for (double v : t->data()) {
      if (storage == StorageType::F64) {
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
      } else {
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      }
    }
  }
  return out;
}

MhsWeights decode_weights(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderSize) throw FormatError("truncated header", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic, expected MHSW", 0);
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kWeightsVersion) {
    throw FormatError("unsupported version " + std::to_string(version), 4);
  }
  const auto manifest_len = get_le<std::uint64_t>(bytes.data() + 8);
  if (manifest_len > bytes.size() - kHeaderSize) throw FormatError("truncated manifest", bytes.size());

  std::vector<ManifestEntry> entries;
  try {
    const json manifest = json::parse(bytes.begin() + kHeaderSize,
                                      bytes.begin() + static_cast<long>(kHeaderSize + manifest_len));
    if (!manifest.is_array()) throw FormatError("manifest must be a JSON array", kHeaderSize);
    for (const json& e : manifest) {
      ManifestEntry m;
      m.name = e.at("name").get<std::string>();
      m.shape = e.at("shape").get<Shape>();
      const std::string dtype = e.at("dtype").get<std::string>();
      if (dtype == "f64") {
        m.storage = StorageType::F64;
      } else if (dtype == "f32") {
        m.storage = StorageType::F32;
      } else {
        throw FormatError("tensor " + m.name + " has unknown dtype " + dtype, kHeaderSize);
      }
      if (m.shape.empty() || shape_numel(m.shape) == 0) {
        throw FormatError("tensor " + m.name + " has an empty shape", kHeaderSize);
      }
      entries.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what(), kHeaderSize);
  }

  Assembly parts;
  std::uint64_t offset = kHeaderSize + manifest_len;
  for (const ManifestEntry& m : entries) {
    const std::size_t count = shape_numel(m.shape);
    const std::size_t width = m.storage == StorageType::F64 ? 8 : 4;
    if (count > (bytes.size() - offset) / width) {
      throw FormatError("truncated payload for tensor " + m.name, bytes.size());
    }
    Tensor t(m.shape);
    for (std::size_t i = 0; i < count; ++i, offset += width) {
      const std::uint8_t* p = bytes.data() + offset;
      t[i] = m.storage == StorageType::F64 ? std::bit_cast<double>(get_le<std::uint64_t>(p))
                                           : static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(p)));
    }
    if (!place(parts, m.name, std::move(t))) {
      throw FormatError("unexpected or duplicate tensor name " + m.name, kHeaderSize);
    }
  }
  if (offset != bytes.size()) throw FormatError("trailing bytes after last tensor", offset);

  MhsWeights w;
  const std::size_t heads = parts.proj.size();
  auto require = [&](bool ok, const std::string& what) {
    if (!ok) throw FormatError(what, kHeaderSize);
  };
  require(heads > 0, "manifest holds no head projections");
  require(parts.mamba.size() == heads, "manifest head count is inconsistent");
  require(parts.esf_w.empty() || parts.esf_w.size() == heads, "esf_w present for only some heads");
  require(parts.gamma && parts.beta, "manifest is missing ln.gamma/ln.beta");
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string prefix = "head." + std::to_string(h) + ".";
    require(parts.proj.count(h) && parts.mamba.count(h), "manifest is missing " + prefix + "*");
    w.head_proj.push_back(std::move(parts.proj[h]));
    if (!parts.esf_w.empty()) {
      require(parts.esf_w.count(h), "manifest is missing " + prefix + "esf_w");
      w.esf_w.push_back(std::move(parts.esf_w[h]));
    }
    auto& fields = parts.mamba[h];
    MambaWeights mw;
    auto take = [&](const char* field, Tensor& dst, bool optional) {
      auto it = fields.find(field);
      if (it == fields.end()) {
        require(optional, "manifest is missing " + prefix + "mamba." + field);
        return;
      }
      dst = std::move(it->second);
    };
    take("w_in", mw.w_in, false);
    take("w_gate", mw.w_gate, false);
    take("conv_w", mw.conv_w, true);
    take("w_delta", mw.w_delta, false);
    take("b_delta", mw.b_delta, false);
    take("w_b", mw.w_b, false);
    take("w_c", mw.w_c, false);
    take("a", mw.a, false);
    take("d_skip", mw.d_skip, false);
    take("w_out", mw.w_out, false);
    w.mamba.push_back(std::move(mw));
  }
  w.ln_gamma = std::move(*parts.gamma);
  w.ln_beta = std::move(*parts.beta);
  if (parts.tail) w.tail_proj = std::move(*parts.tail);
  return w;
}

void save_weights(const MhsWeights& weights, const std::filesystem::path& path, StorageType storage) {
  const auto bytes = encode_weights(weights, storage);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

MhsWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

MhsWeights load_weights(const std::filesystem::path& path, const MhsConfig& config) {
  MhsWeights w = load_weights(path);
  validate_weights(w, config);
  return w;
}

}  // namespace mhs
