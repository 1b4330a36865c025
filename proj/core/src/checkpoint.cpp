#include "fpbetter/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fpbetter/error.hpp"
#include "json_io.hpp"

namespace fpb {

using nlohmann::json;

json spec_to_json(const NetworkSpec& spec) {
  json blocks = json::array();
  for (const auto& b : spec.blocks) {
    blocks.push_back({{"in_width", b.in_width}, {"out_width", b.out_width}, {"stride", b.stride}});
  }
  return {{"name", spec.name},
          {"kind", std::string(to_string(spec.kind))},
          {"input_shape", spec.input_shape},
          {"stem_width", spec.stem_width},
          {"kernel", spec.kernel},
          {"blocks", blocks},
          {"classes", spec.classes}};
}

NetworkSpec spec_from_json(const json& j) {
  NetworkSpec spec;
  spec.name = j.at("name").get<std::string>();
  spec.kind = parse_layer_kind(j.at("kind").get<std::string>());
  spec.input_shape = j.at("input_shape").get<Shape>();
  spec.stem_width = j.at("stem_width").get<std::size_t>();
  spec.kernel = j.at("kernel").get<std::size_t>();
  for (const auto& b : j.at("blocks")) {
    spec.blocks.push_back({b.at("in_width").get<std::size_t>(), b.at("out_width").get<std::size_t>(),
                           b.at("stride").get<std::size_t>()});
  }
  spec.classes = j.at("classes").get<std::size_t>();
  spec.validate();
  return spec;
}

json sampler_to_json(const SamplerSnapshot& s) {
  return {{"mode", std::string(to_string(s.mode))},
          {"p_min", s.p_min},
          {"mu", s.mu},
          {"previous_loss", s.temporal.previous_loss},
          {"current_loss", s.temporal.current_loss},
          {"iterations_in_period", s.temporal.iterations_in_period},
          {"periods_completed", s.temporal.periods_completed}};
}

SamplerSnapshot sampler_from_json(const json& j) {
  SamplerSnapshot s;
  s.mode = parse_schedule_mode(j.at("mode").get<std::string>());
  s.p_min = j.at("p_min").get<double>();
  s.mu = j.at("mu").get<double>();
  s.temporal.previous_loss = j.at("previous_loss").get<double>();
  s.temporal.current_loss = j.at("current_loss").get<double>();
  s.temporal.iterations_in_period = j.at("iterations_in_period").get<std::size_t>();
  s.temporal.periods_completed = j.at("periods_completed").get<std::size_t>();
  return s;
}

namespace {

constexpr char kMagic[8] = {'F', 'P', 'B', 'C', 'K', 'P', 'T', '\0'};

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(const std::string& in, std::size_t offset, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= std::uint64_t{static_cast<unsigned char>(in[offset + static_cast<std::size_t>(i)])} << (8 * i);
  }
  return v;
}

void put_tensor(std::string& payload, const Tensor& t) {
  for (double v : t.data()) put_le(payload, std::bit_cast<std::uint64_t>(v), 8);
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const ParameterSet& params = checkpoint.params;
  if (!checkpoint.momentum.empty() && checkpoint.momentum.size() != params.size()) {
    throw ShapeError("momentum buffers do not align with parameters");
  }
  json directory = json::array();
  std::string payload;
  auto add = [&](const std::string& name, const std::string& role, const Tensor& t) {
    directory.push_back({{"name", name},
                         {"role", role},
                         {"shape", t.shape()},
                         {"offset", payload.size()},
                         {"count", t.size()}});
    put_tensor(payload, t);
  };
  for (std::size_t i = 0; i < params.size(); ++i) add(params.name(i), "parameter", params[i]);
  for (std::size_t i = 0; i < checkpoint.momentum.size(); ++i) {
    add(params.name(i), "momentum", checkpoint.momentum[i]);
  }

  json header = {{"format", "fpbetter-checkpoint"},
                 {"version", kCheckpointVersion},
                 {"spec", spec_to_json(checkpoint.spec)},
                 {"seed", params.seed},
                 {"epoch", checkpoint.epoch},
                 {"method", checkpoint.method},
                 {"robust_accuracy", checkpoint.robust_accuracy},
                 {"sampler", sampler_to_json(checkpoint.sampler)},
                 {"tensors", directory}};
  if (!checkpoint.config_json.empty()) header["config"] = json::parse(checkpoint.config_json);
  const std::string header_text = header.dump();

  std::string bytes(kMagic, sizeof kMagic);
  put_le(bytes, kCheckpointVersion, 4);
  put_le(bytes, 0, 4);
  put_le(bytes, header_text.size(), 8);
  bytes += header_text;
  bytes += payload;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed to write checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFormatError("cannot open checkpoint " + path.string());
  const std::string bytes(std::istreambuf_iterator<char>(in), {});
  if (bytes.size() < 24) throw TruncatedFileError(path.string() + ": truncated checkpoint header");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw BadMagicError(path.string() + ": not an fpbetter checkpoint");
  }
  const auto version = get_le(bytes, 8, 4);
  if (version != kCheckpointVersion) {
    throw DataFormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = get_le(bytes, 16, 8);
  if (bytes.size() < 24 + header_len) throw TruncatedFileError(path.string() + ": truncated header");

  json header;
  try {
    header = json::parse(bytes.substr(24, header_len));
  } catch (const json::exception& e) {
    throw DataFormatError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  const std::size_t payload = 24 + header_len;

  Checkpoint ck;
  try {
    ck.spec = spec_from_json(header.at("spec"));
    ck.params.seed = header.at("seed").get<std::uint64_t>();
    ck.epoch = header.at("epoch").get<std::size_t>();
    ck.method = header.at("method").get<std::string>();
    ck.robust_accuracy = header.at("robust_accuracy").get<double>();
    ck.sampler = sampler_from_json(header.at("sampler"));
    if (header.contains("config")) ck.config_json = header["config"].dump();
    for (const auto& entry : header.at("tensors")) {
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto count = entry.at("count").get<std::size_t>();
      if (payload + offset + 8 * count > bytes.size()) {
        throw TruncatedFileError(path.string() + ": tensor data truncated");
      }
      std::vector<double> data(count);
      for (std::size_t i = 0; i < count; ++i) {
        data[i] = std::bit_cast<double>(get_le(bytes, payload + offset + 8 * i, 8));
      }
      Tensor t(entry.at("shape").get<Shape>(), std::move(data));
      const auto role = entry.at("role").get<std::string>();
      if (role == "parameter") {
        ck.params.add(entry.at("name").get<std::string>(), std::move(t));
      } else if (role == "momentum") {
        ck.momentum.push_back(std::move(t));
      } else {
        throw DataFormatError(path.string() + ": unknown tensor role '" + role + "'");
      }
    }
  } catch (const json::exception& e) {
    throw DataFormatError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  const ParameterSet expected = build_network(ck.spec, ck.params.seed);
  if (expected.names() != ck.params.names()) {
    throw DataFormatError(path.string() + ": parameters do not match the stored network spec");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].shape() != ck.params[i].shape()) {
      throw DataFormatError(path.string() + ": parameter '" + ck.params.name(i) + "' has wrong shape");
    }
  }
  return ck;
}

}  // namespace fpb
