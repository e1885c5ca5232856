#include "momo/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace momo {

namespace {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian");

struct SectionPayload {
  std::string name;
  std::map<std::string, std::string> meta;
  // (name, data pointer, count); offsets assigned at write time
  std::vector<std::tuple<std::string, const double*, long>> params;
};

json arch_to_json(const nn::Architecture& a) {
  return json{{"input_dim", a.input_dim},
              {"output_dim", a.output_dim},
              {"hidden", a.hidden},
              {"mode", a.mode == nn::ArchMode::D2rl ? "d2rl" : "plain"},
              {"layer_norm", a.layer_norm},
              {"final_init_scale", a.final_init_scale}};
}

nn::Architecture arch_from_json(const json& j) {
  nn::Architecture a;
  a.input_dim = j.at("input_dim").get<int>();
  a.output_dim = j.at("output_dim").get<int>();
  a.hidden = j.at("hidden").get<std::vector<int>>();
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "d2rl")
    a.mode = nn::ArchMode::D2rl;
  else if (mode == "plain")
    a.mode = nn::ArchMode::Plain;
  else
    throw LoadError(LoadError::Kind::BadFormat,
                    "unknown architecture mode '" + mode + "'");
  a.layer_norm = j.at("layer_norm").get<bool>();
  a.final_init_scale = j.at("final_init_scale").get<double>();
  return a;
}

void add_net(SectionPayload& sec, const std::string& prefix,
             const nn::DenseNet& net) {
  for (const auto& e : net.layout())
    sec.params.emplace_back(prefix + "." + e.name,
                            net.params().data() + e.offset, e.count());
}

void write_checkpoint(const std::string& path,
                      const std::vector<SectionPayload>& sections,
                      const std::map<std::string, json>& section_json_extra) {
  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  json jsecs = json::array();
  long offset_doubles = 0;
  for (const auto& sec : sections) {
    json js;
    js["name"] = sec.name;
    js["meta"] = sec.meta;
    auto it = section_json_extra.find(sec.name);
    if (it != section_json_extra.end()) js["arch"] = it->second;
    json jp = json::array();
    for (const auto& [name, ptr, count] : sec.params) {
      (void)ptr;
      jp.push_back({{"name", name},
                    {"count", count},
                    {"byte_offset", offset_doubles * 8}});
      offset_doubles += count;
    }
    js["params"] = jp;
    jsecs.push_back(js);
  }
  manifest["sections"] = jsecs;
  manifest["payload_doubles"] = offset_doubles;

  const std::string mstr = manifest.dump();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw LoadError(LoadError::Kind::Io, "cannot open " + path);
  f << "MOMO-CKPT v" << kCheckpointFormatVersion << " " << mstr.size() << "\n";
  f.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  for (const auto& sec : sections) {
    for (const auto& [name, ptr, count] : sec.params) {
      (void)name;
      f.write(reinterpret_cast<const char*>(ptr),
              static_cast<std::streamsize>(count) * 8);
    }
  }
  if (!f) throw LoadError(LoadError::Kind::Io, "write failed for " + path);
}

struct LoadedCheckpoint {
  json manifest;
  std::vector<double> payload;
};

LoadedCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError(LoadError::Kind::Io, "cannot open " + path);
  std::string header;
  if (!std::getline(f, header))
    throw LoadError(LoadError::Kind::Truncated, "missing header in " + path);
  std::stringstream hs(header);
  std::string magic, version;
  std::size_t msize = 0;
  hs >> magic >> version >> msize;
  if (magic != "MOMO-CKPT")
    throw LoadError(LoadError::Kind::BadFormat,
                    "not a momo checkpoint: " + path);
  if (version != "v" + std::to_string(kCheckpointFormatVersion))
    throw LoadError(LoadError::Kind::VersionMismatch,
                    "unsupported checkpoint version '" + version + "' in " +
                        path);
  std::string mstr(msize, '\0');
  f.read(mstr.data(), static_cast<std::streamsize>(msize));
  if (f.gcount() != static_cast<std::streamsize>(msize))
    throw LoadError(LoadError::Kind::Truncated,
                    "truncated manifest in " + path);
  LoadedCheckpoint out;
  try {
    out.manifest = json::parse(mstr);
  } catch (const json::exception& e) {
    throw LoadError(LoadError::Kind::BadFormat,
                    "bad manifest JSON in " + path + ": " + e.what());
  }
  const long n = out.manifest.at("payload_doubles").get<long>();
  out.payload.resize(static_cast<std::size_t>(n));
  f.read(reinterpret_cast<char*>(out.payload.data()),
         static_cast<std::streamsize>(n) * 8);
  if (f.gcount() != static_cast<std::streamsize>(n) * 8)
    throw LoadError(LoadError::Kind::Truncated,
                    "truncated payload in " + path);
  return out;
}

const json& find_section(const json& manifest, const std::string& name) {
  for (const auto& s : manifest.at("sections")) {
    if (s.at("name").get<std::string>() == name) return s;
  }
  throw LoadError(LoadError::Kind::BadFormat,
                  "checkpoint has no section '" + name + "'");
}

/// Copies a net's parameters out of the payload, validating names, counts
/// and offsets against the net's own layout.
void load_net(const json& jsec, const std::vector<double>& payload,
              const std::string& prefix, nn::DenseNet& net) {
  const auto& jp = jsec.at("params");
  std::map<std::string, std::pair<long, long>> by_name;  // offset, count
  for (const auto& p : jp) {
    by_name[p.at("name").get<std::string>()] = {
        p.at("byte_offset").get<long>() / 8, p.at("count").get<long>()};
  }
  for (const auto& e : net.layout()) {
    auto it = by_name.find(prefix + "." + e.name);
    if (it == by_name.end())
      throw LoadError(LoadError::Kind::BadFormat,
                      "checkpoint missing parameter " + prefix + "." + e.name);
    const auto [off, count] = it->second;
    if (count != e.count())
      throw LoadError(LoadError::Kind::DimMismatch,
                      "parameter " + e.name + " has count " +
                          std::to_string(count) + ", expected " +
                          std::to_string(e.count()));
    if (off < 0 || off + count > static_cast<long>(payload.size()))
      throw LoadError(LoadError::Kind::Truncated,
                      "parameter " + e.name + " extends past the payload");
    std::copy(payload.begin() + off, payload.begin() + off + count,
              net.params().data() + e.offset);
  }
  net.mark_params_changed();
}

std::map<std::string, std::string> meta_map(const json& jsec) {
  std::map<std::string, std::string> m;
  for (auto it = jsec.at("meta").begin(); it != jsec.at("meta").end(); ++it)
    m[it.key()] = it.value().get<std::string>();
  return m;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_morse(const std::string& path, const MorseNetwork& m,
                const std::map<std::string, std::string>& extra_meta) {
  SectionPayload sec;
  sec.name = "morse";
  sec.meta = extra_meta;
  sec.meta["lambda"] = fmt(m.kernel.scale);
  sec.meta["state_dim"] = std::to_string(m.state_dim);
  sec.meta["action_dim"] = std::to_string(m.action_dim);
  sec.meta["embedding_dim"] = std::to_string(m.embedding_dim());
  add_net(sec, "embed", m.embed);
  sec.params.emplace_back("target", m.target.data(), m.target.size());
  write_checkpoint(path, {sec}, {{"morse", arch_to_json(m.embed.arch())}});
}

MorseNetwork load_morse(const std::string& path,
                        std::map<std::string, std::string>* meta_out) {
  auto ck = read_checkpoint(path);
  const json& jsec = find_section(ck.manifest, "morse");
  auto meta = meta_map(jsec);
  MorseNetwork m;
  m.kernel.scale = std::strtod(meta.at("lambda").c_str(), nullptr);
  m.state_dim = std::stoi(meta.at("state_dim"));
  m.action_dim = std::stoi(meta.at("action_dim"));
  const int e = std::stoi(meta.at("embedding_dim"));
  m.embed = nn::DenseNet(arch_from_json(jsec.at("arch")));
  if (m.embed.input_dim() != m.state_dim + m.action_dim ||
      m.embed.output_dim() != e)
    throw LoadError(LoadError::Kind::DimMismatch,
                    "morse checkpoint dims are inconsistent");
  load_net(jsec, ck.payload, "embed", m.embed);
  // target embedding rides in the payload next to the net parameters
  for (const auto& p : jsec.at("params")) {
    if (p.at("name").get<std::string>() == "target") {
      const long off = p.at("byte_offset").get<long>() / 8;
      const long count = p.at("count").get<long>();
      if (count != e)
        throw LoadError(LoadError::Kind::DimMismatch,
                        "target embedding count mismatch");
      m.target = Eigen::Map<const Vec>(ck.payload.data() + off, count);
    }
  }
  if (m.target.size() != e)
    throw LoadError(LoadError::Kind::BadFormat,
                    "morse checkpoint is missing the target embedding");
  if (meta_out) *meta_out = meta;
  return m;
}

void save_dynamics(const std::string& path, const DynamicsModel& m,
                   const std::map<std::string, std::string>& extra_meta) {
  SectionPayload sec;
  sec.name = "dynamics";
  sec.meta = extra_meta;
  sec.meta["state_dim"] = std::to_string(m.state_dim);
  sec.meta["action_dim"] = std::to_string(m.action_dim);
  sec.meta["logstd_low"] = fmt(m.logstd_low);
  sec.meta["logstd_high"] = fmt(m.logstd_high);
  add_net(sec, "body", m.body);
  write_checkpoint(path, {sec}, {{"dynamics", arch_to_json(m.body.arch())}});
}

DynamicsModel load_dynamics(const std::string& path,
                            std::map<std::string, std::string>* meta_out) {
  auto ck = read_checkpoint(path);
  const json& jsec = find_section(ck.manifest, "dynamics");
  auto meta = meta_map(jsec);
  DynamicsModel m;
  m.state_dim = std::stoi(meta.at("state_dim"));
  m.action_dim = std::stoi(meta.at("action_dim"));
  m.logstd_low = std::strtod(meta.at("logstd_low").c_str(), nullptr);
  m.logstd_high = std::strtod(meta.at("logstd_high").c_str(), nullptr);
  m.body = nn::DenseNet(arch_from_json(jsec.at("arch")));
  if (m.body.input_dim() != m.state_dim + m.action_dim ||
      m.body.output_dim() != 2 * (m.state_dim + 1))
    throw LoadError(LoadError::Kind::DimMismatch,
                    "dynamics checkpoint dims are inconsistent");
  load_net(jsec, ck.payload, "body", m.body);
  if (meta_out) *meta_out = meta;
  return m;
}

namespace {

json agent_config_json(const AgentConfig& c) {
  return json{{"hidden", c.hidden},
              {"hidden_layers", c.hidden_layers},
              {"lr", c.lr},
              {"batch", c.batch},
              {"gamma", c.gamma},
              {"rho", c.rho},
              {"policy_freq", c.policy_freq},
              {"policy_noise", c.policy_noise},
              {"noise_clip", c.noise_clip},
              {"expl_noise", c.expl_noise},
              {"critic_layer_norm", c.critic_layer_norm},
              {"actor_layer_norm", c.actor_layer_norm},
              {"bonus", c.bonus},
              {"mode", mode_name(c.mode)},
              {"real_ratio", c.real_ratio},
              {"rollout_horizon", c.rollout_horizon},
              {"eps_trunc", c.eps_trunc},
              {"rollouts_per_refresh", c.rollouts_per_refresh},
              {"refresh_every", c.refresh_every},
              {"buffer_capacity", c.buffer_capacity},
              {"steps", c.steps},
              {"log_every", c.log_every},
              {"eval_every", c.eval_every},
              {"seed", c.seed}};
}

AgentConfig agent_config_from_json(const json& j) {
  AgentConfig c;
  c.hidden = j.at("hidden").get<int>();
  c.hidden_layers = j.at("hidden_layers").get<int>();
  c.lr = j.at("lr").get<double>();
  c.batch = j.at("batch").get<int>();
  c.gamma = j.at("gamma").get<double>();
  c.rho = j.at("rho").get<double>();
  c.policy_freq = j.at("policy_freq").get<int>();
  c.policy_noise = j.at("policy_noise").get<double>();
  c.noise_clip = j.at("noise_clip").get<double>();
  c.expl_noise = j.at("expl_noise").get<double>();
  c.critic_layer_norm = j.at("critic_layer_norm").get<bool>();
  c.actor_layer_norm = j.at("actor_layer_norm").get<bool>();
  c.bonus = j.at("bonus").get<bool>();
  c.mode = parse_mode(j.at("mode").get<std::string>());
  c.real_ratio = j.at("real_ratio").get<double>();
  c.rollout_horizon = j.at("rollout_horizon").get<int>();
  c.eps_trunc = j.at("eps_trunc").get<double>();
  c.rollouts_per_refresh = j.at("rollouts_per_refresh").get<int>();
  c.refresh_every = j.at("refresh_every").get<long>();
  c.buffer_capacity = j.at("buffer_capacity").get<std::size_t>();
  c.steps = j.at("steps").get<long>();
  c.log_every = j.at("log_every").get<long>();
  c.eval_every = j.at("eval_every").get<long>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void save_agent(const std::string& path, const Td3Agent& agent,
                const std::map<std::string, std::string>& extra_meta) {
  SectionPayload sec;
  sec.name = "agent";
  sec.meta = extra_meta;
  sec.meta["state_dim"] = std::to_string(agent.state_dim());
  sec.meta["action_dim"] = std::to_string(agent.action_dim());
  add_net(sec, "actor", agent.actor());
  add_net(sec, "critic1", agent.critic1());
  add_net(sec, "critic2", agent.critic2());
  add_net(sec, "target_actor", agent.target_actor());
  add_net(sec, "target_critic1", agent.target_critic1());
  add_net(sec, "target_critic2", agent.target_critic2());
  sec.params.emplace_back("action_low", agent.action_low().data(),
                          agent.action_low().size());
  sec.params.emplace_back("action_high", agent.action_high().data(),
                          agent.action_high().size());
  json extra = json{{"config", agent_config_json(agent.config())},
                    {"actor_arch", arch_to_json(agent.actor().arch())},
                    {"critic_arch", arch_to_json(agent.critic1().arch())}};
  write_checkpoint(path, {sec}, {{"agent", extra}});
}

Td3Agent load_agent(const std::string& path,
                    std::map<std::string, std::string>* meta_out) {
  auto ck = read_checkpoint(path);
  const json& jsec = find_section(ck.manifest, "agent");
  auto meta = meta_map(jsec);
  const json& extra = jsec.at("arch");
  AgentConfig cfg = agent_config_from_json(extra.at("config"));
  const int S = std::stoi(meta.at("state_dim"));
  const int A = std::stoi(meta.at("action_dim"));

  Vec lo, hi;
  for (const auto& p : jsec.at("params")) {
    const std::string name = p.at("name").get<std::string>();
    if (name == "action_low" || name == "action_high") {
      const long off = p.at("byte_offset").get<long>() / 8;
      const long count = p.at("count").get<long>();
      if (count != A)
        throw LoadError(LoadError::Kind::DimMismatch,
                        "action bound count mismatch");
      Vec v = Eigen::Map<const Vec>(ck.payload.data() + off, count);
      (name == "action_low" ? lo : hi) = std::move(v);
    }
  }
  if (lo.size() != A || hi.size() != A)
    throw LoadError(LoadError::Kind::BadFormat,
                    "agent checkpoint is missing action bounds");

  Td3Agent agent(cfg, S, A, lo, hi, /*init_seed=*/0);
  load_net(jsec, ck.payload, "actor", agent.actor());
  load_net(jsec, ck.payload, "critic1", agent.critic1());
  load_net(jsec, ck.payload, "critic2", agent.critic2());
  load_net(jsec, ck.payload, "target_actor", agent.target_actor());
  load_net(jsec, ck.payload, "target_critic1", agent.target_critic1());
  load_net(jsec, ck.payload, "target_critic2", agent.target_critic2());
  if (meta_out) *meta_out = meta;
  return agent;
}

}  // namespace momo
