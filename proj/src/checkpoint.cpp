#include "stc/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "stc/errors.hpp"
#include "stc/tensor_io.hpp"

namespace stc {

namespace {

namespace fs = std::filesystem;

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string tensor_bytes(const Tensor& t) {
  std::ostringstream os(std::ios::binary);
  write_stct(os, t);
  return os.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + p.string() + "'");
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<Tensor> flatten_params(const SegmenterParams& p) {
  std::vector<Tensor> flat;
  for (size_t i = 0; i < p.kernels.size(); ++i) {
    flat.push_back(p.kernels[i]);
    flat.push_back(p.biases[i]);
  }
  return flat;
}

void unflatten_params(const std::vector<Tensor>& flat, SegmenterParams& p) {
  if (flat.size() != 2 * p.arch.layers.size())
    throw ShapeError("flat parameter list does not match architecture");
  p.kernels.clear();
  p.biases.clear();
  for (size_t i = 0; i < flat.size(); i += 2) {
    p.kernels.push_back(flat[i]);
    p.biases.push_back(flat[i + 1]);
  }
}

void save_checkpoint(const fs::path& dir, const Checkpoint& c) {
  c.params.arch.validate();
  const size_t nflat = 2 * c.params.arch.layers.size();
  const bool has_adam = !c.adam.m.empty();
  if (has_adam && (c.adam.m.size() != nflat || c.adam.v.size() != nflat))
    throw ShapeError("optimizer state does not match parameter count");

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory: " + ec.message());

  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& l : c.params.arch.layers)
    layers.push_back({{"ksize", l.ksize}, {"cin", l.cin}, {"cout", l.cout}, {"relu", l.relu}});

  const std::vector<Tensor> flat = flatten_params(c.params);
  nlohmann::json files = nlohmann::json::object();
  auto emit = [&](const std::string& name, const Tensor& t) {
    const std::string bytes = tensor_bytes(t);
    files[name] = fnv1a(bytes);
    write_file(dir / name, bytes);
  };
  for (size_t i = 0; i < flat.size(); i += 2) {
    emit("k" + std::to_string(i / 2) + ".stct", flat[i]);
    emit("b" + std::to_string(i / 2) + ".stct", flat[i + 1]);
  }
  if (has_adam)
    for (size_t i = 0; i < nflat; ++i) {
      emit("am" + std::to_string(i) + ".stct", c.adam.m[i]);
      emit("av" + std::to_string(i) + ".stct", c.adam.v[i]);
    }

  nlohmann::json j{{"format", "stconsist-checkpoint"},
                   {"version", 1},
                   {"arch", {{"layers", layers}}},
                   {"step", c.step},
                   {"phase", c.phase},
                   {"adam_step", c.adam.step},
                   {"has_adam", has_adam},
                   {"config_hash", c.config_hash},
                   {"files", files}};
  write_file(dir / "checkpoint.json", j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(dir / "checkpoint.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint manifest parse error: ") + e.what());
  }
  if (j.value("format", "") != "stconsist-checkpoint")
    throw IoError("not a checkpoint directory: '" + dir.string() + "'");

  Checkpoint c;
  try {
    for (const nlohmann::json& jl : j.at("arch").at("layers")) {
      LayerSpec l;
      l.ksize = jl.at("ksize").get<int>();
      l.cin = jl.at("cin").get<int>();
      l.cout = jl.at("cout").get<int>();
      l.relu = jl.at("relu").get<bool>();
      c.params.arch.layers.push_back(l);
    }
    c.step = j.at("step").get<int64_t>();
    c.phase = j.at("phase").get<int>();
    c.adam.step = j.at("adam_step").get<int64_t>();
    c.config_hash = j.at("config_hash").get<uint64_t>();

    const auto& files = j.at("files");
    auto slurp = [&](const std::string& name) {
      const std::string bytes = read_file(dir / name);
      const uint64_t want = files.at(name).get<uint64_t>();
      if (fnv1a(bytes) != want)
        throw IoError("checkpoint checksum mismatch for '" + name + "'");
      std::istringstream is(bytes, std::ios::binary);
      return read_stct(is);
    };
    const size_t nlayers = c.params.arch.layers.size();
    for (size_t i = 0; i < nlayers; ++i) {
      c.params.kernels.push_back(slurp("k" + std::to_string(i) + ".stct"));
      c.params.biases.push_back(slurp("b" + std::to_string(i) + ".stct"));
    }
    if (j.at("has_adam").get<bool>())
      for (size_t i = 0; i < 2 * nlayers; ++i) {
        c.adam.m.push_back(slurp("am" + std::to_string(i) + ".stct"));
        c.adam.v.push_back(slurp("av" + std::to_string(i) + ".stct"));
      }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint field error: ") + e.what());
  }
  c.params.arch.validate();
  return c;
}

}  // namespace stc
