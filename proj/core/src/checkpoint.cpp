#include "fmd/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "fmd/error.hpp"

namespace fmd {

namespace {

using nlohmann::json;

void put_u64_le(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t get_u64_le(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

void append_f32_le(std::string& out, double x) {
  float f = static_cast<float>(x);
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double read_f32_le(const unsigned char* p) {
  uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<uint32_t>(p[i]) << (8 * i);
  float f;
  std::memcpy(&f, &bits, 4);
  return static_cast<double>(f);
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "io_error", "cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), "io_error", "write failed for '" + path.string() + "'");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "missing_file", "cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

struct Parsed {
  json header;
  const unsigned char* payload;
  size_t payload_size;
};

Parsed parse_container(const std::string& bytes, const std::string& expected_kind) {
  require(bytes.size() >= 8, "format_error", "checkpoint shorter than its length prefix");
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  uint64_t hlen = get_u64_le(data);
  require(bytes.size() >= 8 + hlen, "format_error", "checkpoint header truncated");
  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<size_t>(hlen));
  } catch (const json::exception& e) {
    fail("format_error", std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  int version = header.value("format_version", -1);
  require(version == kCheckpointFormatVersion, "version_mismatch",
          "checkpoint format_version " + std::to_string(version) + ", expected " +
              std::to_string(kCheckpointFormatVersion));
  require(header.value("kind", "") == expected_kind, "format_error",
          "checkpoint kind '" + header.value("kind", "") + "', expected '" + expected_kind + "'");
  return {header, data + 8 + hlen, bytes.size() - 8 - static_cast<size_t>(hlen)};
}

json denoiser_config_json(const DenoiserConfig& c) {
  return json{{"arch", to_string(c.arch)},
              {"hidden_dim", c.hidden_dim},
              {"time_embed_dim", c.time_embed_dim},
              {"window_len", c.window_len},
              {"rows", c.rows},
              {"cols", c.cols},
              {"total_steps", c.total_steps},
              {"seed", c.seed}};
}

DenoiserConfig denoiser_config_from_json(const json& j) {
  DenoiserConfig c;
  c.arch = denoiser_arch_from_string(j.at("arch").get<std::string>());
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.time_embed_dim = j.at("time_embed_dim").get<int>();
  c.window_len = j.at("window_len").get<int>();
  c.rows = j.at("rows").get<int>();
  c.cols = j.at("cols").get<int>();
  c.total_steps = j.at("total_steps").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

}  // namespace

void save_prior(const FmdPrior& prior, const std::filesystem::path& path) {
  validate_prior(prior);
  json header{{"format_version", kCheckpointFormatVersion},
              {"kind", "fmd-prior"},
              {"schedule", {{"T", prior.sched.T}, {"kind", to_string(prior.sched.kind)}}},
              {"fractions", prior.layout.F},
              {"phase", prior.phase},
              {"denoiser", denoiser_config_json(prior.nets.front().config())}};
  json nets = json::array();
  for (size_t i = 0; i < prior.nets.size(); ++i) {
    nets.push_back({{"name", "fraction-" + std::to_string(i + 1)},
                    {"param_count", prior.nets[i].param_count()}});
  }
  header["nets"] = nets;

  std::string hs = header.dump();
  std::string bytes;
  put_u64_le(bytes, hs.size());
  bytes += hs;
  for (const auto& net : prior.nets) {
    for (double p : net.params()) append_f32_le(bytes, p);
  }
  write_file(path, bytes);
}

FmdPrior load_prior(const std::filesystem::path& path) {
  auto parsed = parse_container(read_file(path), "fmd-prior");
  const json& h = parsed.header;

  int T = h.at("schedule").at("T").get<int>();
  auto kind = h.at("schedule").at("kind").get<std::string>();
  int F = h.at("fractions").get<int>();
  int phase = h.at("phase").get<int>();
  DenoiserConfig dcfg = denoiser_config_from_json(h.at("denoiser"));

  require(F >= 1 && T % F == 0, "format_error",
          "checkpoint header: fractions=" + std::to_string(F) + " does not divide T=" + std::to_string(T));
  require(dcfg.total_steps == T, "format_error",
          "checkpoint header: denoiser total_steps inconsistent with schedule T");
  require(phase >= 0 && (T / F) % (1 << phase) == 0, "format_error",
          "checkpoint header: phase " + std::to_string(phase) + " stride does not divide the fraction length");
  const json& nets = h.at("nets");
  require(static_cast<int>(nets.size()) == F, "format_error",
          "checkpoint header: nets entry count does not match fractions");

  size_t expected = denoiser_param_count(dcfg);
  FmdPrior prior;
  prior.sched = build_schedule(T, kind);
  prior.layout = FractionLayout::uniform(T, F);
  prior.phase = phase;

  const unsigned char* p = parsed.payload;
  size_t remaining = parsed.payload_size;
  for (int i = 0; i < F; ++i) {
    size_t declared = nets[i].at("param_count").get<size_t>();
    require(declared == expected, "format_error",
            "checkpoint header: net index " + std::to_string(i) + " declares " +
                std::to_string(declared) + " parameters, architecture needs " +
                std::to_string(expected));
    require(remaining >= declared * 4, "format_error",
            "checkpoint payload truncated at net index " + std::to_string(i));
    std::vector<double> params(declared);
    for (size_t q = 0; q < declared; ++q) params[q] = read_f32_le(p + q * 4);
    p += declared * 4;
    remaining -= declared * 4;
    prior.nets.emplace_back(dcfg, std::move(params));
  }
  require(remaining == 0, "format_error", "checkpoint has trailing bytes after the last net");
  validate_prior(prior);
  return prior;
}

void save_classifier(const Classifier& clf, const std::filesystem::path& path) {
  const auto& c = clf.config();
  json header{{"format_version", kCheckpointFormatVersion},
              {"kind", "fmd-classifier"},
              {"classifier",
               {{"kind", to_string(c.kind)},
                {"feature_map", to_string(c.feature_map)},
                {"classes", c.classes},
                {"rows", c.rows},
                {"cols", c.cols},
                {"hidden_dim", c.hidden_dim},
                {"seed", c.seed}}},
              {"param_count", clf.param_count()}};
  std::string hs = header.dump();
  std::string bytes;
  put_u64_le(bytes, hs.size());
  bytes += hs;
  for (double p : clf.params()) append_f32_le(bytes, p);
  write_file(path, bytes);
}

Classifier load_classifier(const std::filesystem::path& path) {
  auto parsed = parse_container(read_file(path), "fmd-classifier");
  const json& h = parsed.header;
  const json& cj = h.at("classifier");
  ClassifierConfig c;
  c.kind = classifier_kind_from_string(cj.at("kind").get<std::string>());
  c.feature_map = feature_map_from_string(cj.at("feature_map").get<std::string>());
  c.classes = cj.at("classes").get<int>();
  c.rows = cj.at("rows").get<int>();
  c.cols = cj.at("cols").get<int>();
  c.hidden_dim = cj.at("hidden_dim").get<int>();
  c.seed = cj.at("seed").get<uint64_t>();

  size_t declared = h.at("param_count").get<size_t>();
  require(parsed.payload_size == declared * 4, "format_error",
          parsed.payload_size < declared * 4 ? "classifier checkpoint payload truncated"
                                             : "classifier checkpoint has trailing bytes");
  std::vector<double> params(declared);
  for (size_t q = 0; q < declared; ++q) params[q] = read_f32_le(parsed.payload + q * 4);
  return Classifier(c, std::move(params));
}

}  // namespace fmd
