#include <gradflow/checkpoint.hpp>

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace gradflow {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

std::string energyKindName(EnergyKind kind) {
  switch (kind) {
    case EnergyKind::mlp: return "mlp";
    case EnergyKind::quadratic: return "quadratic";
    case EnergyKind::linear: return "linear";
  }
  return "?";
}

EnergyKind energyKindFromName(const std::string& name) {
  if (name == "mlp") return EnergyKind::mlp;
  if (name == "quadratic") return EnergyKind::quadratic;
  if (name == "linear") return EnergyKind::linear;
  throw UsageError("unknown energy kind '" + name + "'");
}

namespace {

using nlohmann::json;

json metaToJson(const CheckpointMeta& meta) {
  json j{{"version", meta.version},
         {"kind", energyKindName(meta.kind)},
         {"input_dim", meta.arch.input_dim},
         {"hidden_dim", meta.arch.hidden_dim},
         {"num_layers", meta.arch.num_layers},
         {"seed", meta.seed},
         {"iterations", meta.iterations},
         {"time_horizon", meta.time_horizon},
         {"eta", meta.eta},
         {"chain_steps", meta.chain_steps},
         {"noise_scale", meta.noise_scale},
         {"init_scheme", meta.init_scheme}};
  if (meta.kind == EnergyKind::quadratic) j["quad_scale"] = meta.quad_scale;
  if (meta.kind == EnergyKind::linear) {
    j["linear_w"] = std::vector<double>(
        meta.linear_w.data(), meta.linear_w.data() + meta.linear_w.size());
    j["linear_b"] = meta.linear_b;
  }
  return j;
}

CheckpointMeta metaFromJson(const json& j) {
  CheckpointMeta meta;
  meta.version = j.at("version").get<int>();
  meta.kind = energyKindFromName(j.value("kind", "mlp"));
  meta.arch.input_dim = j.at("input_dim").get<int>();
  meta.arch.hidden_dim = j.at("hidden_dim").get<int>();
  meta.arch.num_layers = j.at("num_layers").get<int>();
  meta.seed = j.at("seed").get<std::uint64_t>();
  meta.iterations = j.at("iterations").get<long>();
  meta.time_horizon = j.at("time_horizon").get<double>();
  meta.eta = j.at("eta").get<double>();
  meta.chain_steps = j.at("chain_steps").get<int>();
  meta.noise_scale = j.at("noise_scale").get<double>();
  meta.init_scheme = j.value("init_scheme", "uniform_fan_in");
  if (meta.kind == EnergyKind::quadratic)
    meta.quad_scale = j.at("quad_scale").get<double>();
  if (meta.kind == EnergyKind::linear) {
    const auto w = j.at("linear_w").get<std::vector<double>>();
    meta.linear_w = Eigen::Map<const Vec>(w.data(),
                                          static_cast<Index>(w.size()));
    meta.linear_b = j.at("linear_b").get<double>();
  }
  return meta;
}

void writeHeader(std::ofstream& out, const CheckpointMeta& meta) {
  const std::string header = metaToJson(meta).dump();
  const std::uint32_t len = static_cast<std::uint32_t>(header.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
}

void writeDoubles(std::ofstream& out, const double* data, Index n) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(n * sizeof(double)));
}

void readDoubles(std::ifstream& in, double* data, Index n) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw IoError("checkpoint truncated");
}

}  // namespace

void saveCheckpoint(const std::filesystem::path& path, const Mlp& net,
                    const CheckpointMeta& meta_in) {
  CheckpointMeta meta = meta_in;
  meta.kind = EnergyKind::mlp;
  meta.arch = net.config();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  writeHeader(out, meta);

  for (int l = 0; l < net.numLayers(); ++l) {
    const Mat& W = net.weight(l);
    for (Index r = 0; r < W.rows(); ++r) {
      const Vec row = W.row(r).transpose();
      writeDoubles(out, row.data(), row.size());
    }
  }
  for (int l = 0; l < net.numLayers(); ++l)
    writeDoubles(out, net.bias(l).data(), net.bias(l).size());
  if (!out) throw IoError("write failed: " + path.string());
}

void saveQuadraticCheckpoint(const std::filesystem::path& path, double scale,
                             CheckpointMeta meta) {
  meta.kind = EnergyKind::quadratic;
  meta.quad_scale = scale;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  writeHeader(out, meta);
  if (!out) throw IoError("write failed: " + path.string());
}

void saveLinearCheckpoint(const std::filesystem::path& path, const Vec& w,
                          double b, CheckpointMeta meta) {
  meta.kind = EnergyKind::linear;
  meta.linear_w = w;
  meta.linear_b = b;
  meta.arch.input_dim = static_cast<int>(w.size());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  writeHeader(out, meta);
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint loadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw IoError("checkpoint header missing");
  std::string header(len, '\0');
  in.read(header.data(), len);
  if (!in) throw IoError("checkpoint header truncated");

  CheckpointMeta meta;
  try {
    meta = metaFromJson(nlohmann::json::parse(header));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad checkpoint header: ") + e.what());
  }

  Checkpoint ck{meta, std::nullopt};
  if (meta.kind == EnergyKind::mlp) {
    Mlp net(meta.arch);
    for (int l = 0; l < net.numLayers(); ++l) {
      Mat& W = net.weight(l);
      for (Index r = 0; r < W.rows(); ++r) {
        Vec row(W.cols());
        readDoubles(in, row.data(), row.size());
        W.row(r) = row.transpose();
      }
    }
    for (int l = 0; l < net.numLayers(); ++l)
      readDoubles(in, net.bias(l).data(), net.bias(l).size());
    ck.mlp.emplace(std::move(net));
  }
  return ck;
}

}  // namespace gradflow
