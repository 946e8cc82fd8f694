#include <cstring>
#include <fstream>
#include <map>

#include "hermes/errors.hpp"
#include "hermes/synergy.hpp"

namespace hermes::syn {

namespace {

// Little-endian host assumed; the magic/version guard catches foreign files.
template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw IntegrityError("checkpoint truncated while reading " + what);
  }
  return value;
}

std::string get_bytes(std::istream& in, std::uint64_t n, const std::string& what) {
  if (n > (std::uint64_t{1} << 32)) throw IntegrityError("checkpoint: implausible " + what + " length");
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw IntegrityError("checkpoint truncated while reading " + what);
  }
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const nlohmann::json& meta) {
  const nlohmann::json header = {
      {"config", to_json(model.config)},
      {"genes", model.cell_mlp.in_dim()},
      {"disease_dim", model.disease_mlp.weights.empty() ? 0 : model.disease_mlp.in_dim()},
      {"meta", meta}};
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto tensors = model.named_tensors();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, t.rows());
    put<std::uint64_t>(out, t.cols());
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw IntegrityError(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_size = get<std::uint64_t>(in, "header size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(get_bytes(in, header_size, "header"));
  } catch (const nlohmann::json::parse_error& e) {
    throw IntegrityError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    const TrainConfig config = train_config_from_json(header.at("config"));
    Rng rng(0);
    ckpt.model = Model::init(config, header.at("genes").get<std::size_t>(),
                             header.at("disease_dim").get<std::size_t>(), rng);
    ckpt.meta = header.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint header incomplete: ") + e.what());
  }

  std::map<std::string, Tensor> slots;
  for (auto& [name, t] : ckpt.model.named_tensors()) slots.emplace(name, t);
  const auto count = get<std::uint32_t>(in, "tensor count");
  if (count != slots.size()) {
    throw IntegrityError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                         std::to_string(slots.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = get_bytes(in, get<std::uint32_t>(in, "name length"), "tensor name");
    const auto rows = get<std::uint64_t>(in, name + " rows");
    const auto cols = get<std::uint64_t>(in, name + " cols");
    const auto it = slots.find(name);
    if (it == slots.end()) throw IntegrityError("checkpoint has unexpected tensor '" + name + "'");
    Tensor t = it->second;
    if (t.rows() != rows || t.cols() != cols) {
      throw IntegrityError("checkpoint tensor '" + name + "' is " + std::to_string(rows) + "x" +
                           std::to_string(cols) + ", model expects " + t.shape_string());
    }
    if (!in.read(reinterpret_cast<char*>(t.values().data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)))) {
      throw IntegrityError("checkpoint truncated in tensor '" + name + "'");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IntegrityError("checkpoint has trailing bytes");
  }
  return ckpt;
}

}  // namespace hermes::syn
