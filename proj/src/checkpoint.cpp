#include "amix/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json_io.hpp"

namespace amix {

using detail::json;

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

[[noreturn]] void corrupt(const std::string& what) {
  throw FormatError(FormatError::Kind::Parse, "checkpoint: " + what);
}

std::string encode_doubles(const std::vector<double>& values) {
  std::string bytes(values.size() * sizeof(double), '\0');
  if (!values.empty()) std::memcpy(bytes.data(), values.data(), bytes.size());
  return base64_encode(bytes);
}

std::vector<double> decode_doubles(const std::string& text, std::size_t expected, const std::string& where) {
  const std::string bytes = base64_decode(text);
  if (bytes.size() != expected * sizeof(double)) {
    corrupt(where + ": expected " + std::to_string(expected) + " values, got " +
            std::to_string(bytes.size() / sizeof(double)));
  }
  std::vector<double> out(expected);
  if (expected) std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

json tensor_json(const Tensor& t) { return json{{"shape", t.shape()}, {"data", encode_doubles(t.storage())}}; }

// Reads a JSON field, turning any type or presence problem into a parse error.
template <class T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) corrupt(where + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    corrupt(where + ": bad '" + key + "'");
  }
}

Tensor tensor_from(const json& j, const std::string& where) {
  const auto shape = field<std::vector<std::size_t>>(j, "shape", where);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return Tensor(shape, decode_doubles(field<std::string>(j, "data", where), n, where));
}

json network_json(const Network& net) {
  json params = json::array();
  for (const auto& p : net.parameters()) {
    json e = tensor_json(p.value);
    e["name"] = p.name;
    params.push_back(e);
  }
  return json{{"spec", detail::spec_to_json(net.spec())}, {"parameters", params}};
}

Network network_from(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("spec")) corrupt(where + ": missing 'spec'");
  MlpSpec spec;
  try {
    spec = detail::spec_from_json(j.at("spec"), where + ".spec", MlpSpec{});
  } catch (const ConfigError& e) {
    corrupt(e.what());
  }
  Network net(spec);
  const auto params = field<json>(j, "parameters", where);
  if (!params.is_array() || params.size() != net.parameters().size()) corrupt(where + ": wrong parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = net.parameters()[i];
    const std::string at = where + "." + p.name;
    if (field<std::string>(params[i], "name", at) != p.name) corrupt(at + ": parameter name mismatch");
    Tensor t = tensor_from(params[i], at);
    if (t.shape() != p.value.shape()) corrupt(at + ": shape " + shape_to_string(t.shape()) + " does not match spec");
    p.value = std::move(t);
  }
  return net;
}

json optimizer_json(const Optimizer& opt) {
  json m = json::array(), v = json::array();
  for (const auto& t : opt.first_moments()) m.push_back(tensor_json(t));
  for (const auto& t : opt.second_moments()) v.push_back(tensor_json(t));
  return json{{"steps", opt.steps()}, {"m", m}, {"v", v}};
}

Optimizer optimizer_from(const json& j, const OptimizerSettings& settings, const std::string& where) {
  Optimizer opt(settings);
  std::vector<Tensor> m, v;
  const auto mj = field<json>(j, "m", where);
  const auto vj = field<json>(j, "v", where);
  if (!mj.is_array() || !vj.is_array() || mj.size() != vj.size()) corrupt(where + ": moment lists differ");
  for (std::size_t i = 0; i < mj.size(); ++i) {
    m.push_back(tensor_from(mj[i], where + ".m[" + std::to_string(i) + "]"));
    v.push_back(tensor_from(vj[i], where + ".v[" + std::to_string(i) + "]"));
  }
  opt.restore(field<std::size_t>(j, "steps", where), std::move(m), std::move(v));
  return opt;
}

const OptimizerSettings& settings_for(const RunConfig& cfg, const std::string& kind) {
  if (kind == "gan") {
    if (!cfg.gan) corrupt("gan checkpoint without a gan config");
    return cfg.gan->optimizer;
  }
  if (!cfg.classifier) corrupt("classifier checkpoint without a classifier config");
  return cfg.classifier->optimizer;
}

template <class T>
const T& entry(const std::map<std::string, T>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw InvalidArgument("checkpoint has no '" + key + "'");
  return it->second;
}

}  // namespace

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (std::uint8_t(bytes[i]) << 16) | (std::uint8_t(bytes[i + 1]) << 8) | std::uint8_t(bytes[i + 2]);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest) {
    std::uint32_t n = std::uint8_t(bytes[i]) << 16;
    if (rest == 2) n |= std::uint8_t(bytes[i + 1]) << 8;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += rest == 2 ? kAlphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) corrupt("base64 length is not a multiple of 4");
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    int pad = 0;
    std::uint32_t n = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char c = text[i + k];
      int v;
      if (c == '=' && last && k >= 2) {
        ++pad;
        v = 0;
      } else {
        v = value(c);
        if (v < 0 || pad) corrupt("invalid base64 character");
      }
      n = (n << 6) | static_cast<std::uint32_t>(v);
    }
    out += static_cast<char>((n >> 16) & 0xff);
    if (pad < 2) out += static_cast<char>((n >> 8) & 0xff);
    if (pad < 1) out += static_cast<char>(n & 0xff);
  }
  return out;
}

std::size_t Checkpoint::parameter_count() const {
  std::size_t n = head ? head->weight.size() : 0;
  for (const auto& [name, net] : networks) n += net.parameter_count();
  return n;
}

Checkpoint make_checkpoint(const RunConfig& cfg, const GanRun& run) {
  if (!cfg.gan) throw InvalidArgument("make_checkpoint: config has no gan section");
  Checkpoint c;
  c.kind = "gan";
  c.step = run.step;
  c.config = cfg;
  c.networks = {{"generator", run.models.generator}, {"critic", run.models.critic}};
  c.optimizers = {{"generator", run.models.generator_opt}, {"critic", run.models.critic_opt}};
  c.streams = {{"init", run.streams.init}, {"data", run.streams.data}, {"noise", run.streams.noise},
               {"mix", run.streams.mix},   {"eval", run.streams.eval}};
  return c;
}

Checkpoint make_checkpoint(const RunConfig& cfg, const ClassifierRun& run) {
  if (!cfg.classifier) throw InvalidArgument("make_checkpoint: config has no classifier section");
  Checkpoint c;
  c.kind = "classifier";
  c.step = run.epoch;
  c.config = cfg;
  c.networks = {{"feature", run.model.feature}};
  c.head = run.model.head;
  c.optimizers = {{"classifier", run.opt}};
  c.streams = {{"init", run.streams.init}, {"data", run.streams.data}, {"mix", run.streams.mix}};
  c.clamped_probabilities = run.clamped_probabilities;
  return c;
}

GanRun restore_gan(const Checkpoint& c) {
  if (c.kind != "gan") throw InvalidArgument("expected a gan checkpoint, got '" + c.kind + "'");
  GanRun run{GanModels{entry(c.networks, "generator"), entry(c.networks, "critic"), entry(c.optimizers, "generator"),
                       entry(c.optimizers, "critic")},
             GanStreams{entry(c.streams, "init"), entry(c.streams, "data"), entry(c.streams, "noise"),
                        entry(c.streams, "mix"), entry(c.streams, "eval")},
             c.step,
             {}};
  return run;
}

ClassifierRun restore_classifier(const Checkpoint& c) {
  if (c.kind != "classifier") throw InvalidArgument("expected a classifier checkpoint, got '" + c.kind + "'");
  if (!c.head) throw InvalidArgument("classifier checkpoint has no head");
  ClassifierRun run;
  run.model = Classifier{entry(c.networks, "feature"), *c.head};
  run.opt = entry(c.optimizers, "classifier");
  run.streams = ClassifierStreams{entry(c.streams, "init"), entry(c.streams, "data"), entry(c.streams, "mix")};
  run.epoch = c.step;
  run.clamped_probabilities = c.clamped_probabilities;
  return run;
}

std::string serialize_checkpoint(const Checkpoint& c) {
  json nets = json::object(), opts = json::object(), streams = json::object();
  for (const auto& [name, net] : c.networks) nets[name] = network_json(net);
  for (const auto& [name, opt] : c.optimizers) opts[name] = optimizer_json(opt);
  for (const auto& [name, rng] : c.streams) streams[name] = rng.state();
  json j{{"format_version", kCheckpointVersion},
         {"kind", c.kind},
         {"step", c.step},
         {"config_hash", config_hash(c.config)},
         {"config", json::parse(dump_run_config(c.config))},
         {"networks", nets},
         {"optimizers", opts},
         {"streams", streams},
         {"clamped_probabilities", c.clamped_probabilities}};
  if (c.head) j["head"] = tensor_json(c.head->weight);
  return j.dump(1) + "\n";
}

Checkpoint parse_checkpoint(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    corrupt(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) corrupt("top level is not an object");
  const int version = field<int>(j, "format_version", "checkpoint");
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::Version, "checkpoint: unsupported format_version " + std::to_string(version));
  }
  Checkpoint c;
  c.kind = field<std::string>(j, "kind", "checkpoint");
  if (c.kind != "gan" && c.kind != "classifier") corrupt("unknown kind '" + c.kind + "'");
  c.step = field<std::size_t>(j, "step", "checkpoint");
  try {
    c.config = parse_run_config(field<json>(j, "config", "checkpoint").dump());
  } catch (const ConfigError& e) {
    corrupt(std::string("embedded config: ") + e.what());
  }
  if (field<std::string>(j, "config_hash", "checkpoint") != config_hash(c.config)) corrupt("config_hash mismatch");
  const OptimizerSettings& settings = settings_for(c.config, c.kind);
  const json networks_json = field<json>(j, "networks", "checkpoint");
  const json optimizers_json = field<json>(j, "optimizers", "checkpoint");
  const json streams_json = field<json>(j, "streams", "checkpoint");
  for (const auto& [name, net] : networks_json.items()) {
    c.networks.emplace(name, network_from(net, "networks." + name));
  }
  for (const auto& [name, opt] : optimizers_json.items()) {
    c.optimizers.emplace(name, optimizer_from(opt, settings, "optimizers." + name));
  }
  for (const auto& [name, state] : streams_json.items()) {
    if (!state.is_string()) corrupt("streams." + name + ": expected a string");
    Rng r;
    r.restore(state.get<std::string>());
    c.streams.emplace(name, r);
  }
  c.clamped_probabilities = field<std::size_t>(j, "clamped_probabilities", "checkpoint");
  if (j.contains("head")) c.head = OrthogonalHead{tensor_from(j.at("head"), "head")};
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string text = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw FormatError(FormatError::Kind::Io, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace amix
