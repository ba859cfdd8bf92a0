#include "vfpns/io.hpp"

#include <array>
#include <charconv>
#include <cstring>
#include <fstream>

#include "vfpns/errors.hpp"

namespace vfpns {

namespace {

constexpr char kMagic[8] = {'V', 'F', 'P', 'N', 'S', 'F', '0', '1'};
constexpr uint32_t kEndianTag = 0x01020304u;

struct RawHeader {
  char magic[8];
  uint32_t endian;
  uint32_t kind;
  char name[64];
  int32_t n_x;
  double L_x;
  int32_t n_v;     // 0 for purely spatial fields
  double v_max;    // 0 for purely spatial fields
  uint64_t count;  // number of float64 payload entries
};

RawHeader make_header(FieldKind kind, const std::string& name, const SpatialGrid& xg,
                      const VelocityGrid* vg, uint64_t count) {
  RawHeader h{};
  std::memcpy(h.magic, kMagic, sizeof(kMagic));
  h.endian = kEndianTag;
  h.kind = static_cast<uint32_t>(kind);
  std::strncpy(h.name, name.c_str(), sizeof(h.name) - 1);
  h.n_x = xg.n_x;
  h.L_x = xg.L_x;
  h.n_v = vg ? vg->n_v : 0;
  h.v_max = vg ? vg->v_max : 0.0;
  h.count = count;
  return h;
}

void write_blob(const std::filesystem::path& path, const RawHeader& h,
                std::initializer_list<const Eigen::ArrayXd*> payloads, const nlohmann::json& meta,
                const std::string& name, FieldKind kind) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  for (const auto* p : payloads)
    out.write(reinterpret_cast<const char*>(p->data()),
              static_cast<std::streamsize>(sizeof(double) * p->size()));
  if (!out) throw ConfigError("write failed: " + path.string());
  out.close();

  nlohmann::json side = meta;
  side["field_name"] = name;
  side["field_kind"] = static_cast<uint32_t>(kind);
  std::ofstream js(path.string() + ".json", std::ios::trunc);
  js << side.dump(2) << "\n";
}

RawHeader read_header(std::ifstream& in, const std::filesystem::path& path) {
  RawHeader h{};
  in.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (!in) throw ConfigError("truncated field file: " + path.string());
  if (std::memcmp(h.magic, kMagic, sizeof(kMagic)) != 0)
    throw ConfigError("bad magic in field file: " + path.string());
  if (h.endian != kEndianTag)
    throw ConfigError("endianness mismatch in field file: " + path.string());
  return h;
}

void read_payload(std::ifstream& in, Eigen::ArrayXd& dst, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(dst.data()),
          static_cast<std::streamsize>(sizeof(double) * dst.size()));
  if (!in) throw ConfigError("truncated payload in field file: " + path.string());
}

}  // namespace

void write_field(const std::filesystem::path& path, const std::string& name, const ScalarField& g,
                 const nlohmann::json& meta) {
  RawHeader h =
      make_header(FieldKind::scalar, name, g.grid, nullptr, static_cast<uint64_t>(g.values.size()));
  write_blob(path, h, {&g.values}, meta, name, FieldKind::scalar);
}

void write_field(const std::filesystem::path& path, const std::string& name, const VectorField& v,
                 const nlohmann::json& meta) {
  RawHeader h = make_header(FieldKind::vector, name, v.grid, nullptr,
                            static_cast<uint64_t>(v.x.size() + v.y.size()));
  write_blob(path, h, {&v.x, &v.y}, meta, name, FieldKind::vector);
}

void write_field(const std::filesystem::path& path, const std::string& name, const PhaseDensity& f,
                 const nlohmann::json& meta) {
  RawHeader h =
      make_header(FieldKind::phase, name, f.xg, &f.vg, static_cast<uint64_t>(f.values.size()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  out.write(reinterpret_cast<const char*>(f.values.data()),
            static_cast<std::streamsize>(sizeof(double) * f.values.size()));
  if (!out) throw ConfigError("write failed: " + path.string());
  out.close();

  nlohmann::json side = meta;
  side["field_name"] = name;
  side["field_kind"] = static_cast<uint32_t>(FieldKind::phase);
  std::ofstream js(path.string() + ".json", std::ios::trunc);
  js << side.dump(2) << "\n";
}

FieldInfo peek_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open field file: " + path.string());
  RawHeader h = read_header(in, path);
  return {static_cast<FieldKind>(h.kind), std::string(h.name)};
}

ScalarField read_scalar_field(const std::filesystem::path& path, std::string* name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open field file: " + path.string());
  RawHeader h = read_header(in, path);
  if (h.kind != static_cast<uint32_t>(FieldKind::scalar))
    throw ConfigError("not a scalar field: " + path.string());
  ScalarField g(SpatialGrid(h.n_x, h.L_x));
  if (h.count != static_cast<uint64_t>(g.values.size()))
    throw ConfigError("payload count mismatch: " + path.string());
  read_payload(in, g.values, path);
  if (name) *name = h.name;
  return g;
}

VectorField read_vector_field(const std::filesystem::path& path, std::string* name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open field file: " + path.string());
  RawHeader h = read_header(in, path);
  if (h.kind != static_cast<uint32_t>(FieldKind::vector))
    throw ConfigError("not a vector field: " + path.string());
  VectorField v(SpatialGrid(h.n_x, h.L_x));
  if (h.count != static_cast<uint64_t>(v.x.size() + v.y.size()))
    throw ConfigError("payload count mismatch: " + path.string());
  read_payload(in, v.x, path);
  read_payload(in, v.y, path);
  if (name) *name = h.name;
  return v;
}

PhaseDensity read_phase_field(const std::filesystem::path& path, std::string* name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open field file: " + path.string());
  RawHeader h = read_header(in, path);
  if (h.kind != static_cast<uint32_t>(FieldKind::phase))
    throw ConfigError("not a phase density: " + path.string());
  PhaseDensity f(SpatialGrid(h.n_x, h.L_x), VelocityGrid(h.n_v, h.v_max));
  if (h.count != static_cast<uint64_t>(f.values.size()))
    throw ConfigError("payload count mismatch: " + path.string());
  in.read(reinterpret_cast<char*>(f.values.data()),
          static_cast<std::streamsize>(sizeof(double) * f.values.size()));
  if (!in) throw ConfigError("truncated payload in field file: " + path.string());
  if (name) *name = h.name;
  return f;
}

nlohmann::json read_sidecar(const std::filesystem::path& path) {
  std::ifstream js(path.string() + ".json");
  if (!js) throw ConfigError("missing sidecar for: " + path.string());
  nlohmann::json j;
  js >> j;
  return j;
}

std::string format_double(double x) {
  std::array<char, 32> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), ptr);
}

}  // namespace vfpns
