#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "vfpns/fields.hpp"

// Flat binary container for field snapshots. Layout: fixed header (magic, format
// version, endianness tag, field kind, 64-byte name, grid descriptors, payload count)
// followed by float64 payload in storage order: spatial index fastest, one velocity
// block after another for phase densities; x component then y for vector fields.
// A JSON sidecar (same path + ".json") carries caller metadata.

namespace vfpns {

enum class FieldKind : uint32_t { scalar = 0, vector = 1, phase = 2 };

void write_field(const std::filesystem::path& path, const std::string& name,
                 const ScalarField& g, const nlohmann::json& meta = nlohmann::json::object());
void write_field(const std::filesystem::path& path, const std::string& name,
                 const VectorField& v, const nlohmann::json& meta = nlohmann::json::object());
void write_field(const std::filesystem::path& path, const std::string& name,
                 const PhaseDensity& f, const nlohmann::json& meta = nlohmann::json::object());

struct FieldInfo {
  FieldKind kind;
  std::string name;
};

FieldInfo peek_field(const std::filesystem::path& path);
ScalarField read_scalar_field(const std::filesystem::path& path, std::string* name = nullptr);
VectorField read_vector_field(const std::filesystem::path& path, std::string* name = nullptr);
PhaseDensity read_phase_field(const std::filesystem::path& path, std::string* name = nullptr);
nlohmann::json read_sidecar(const std::filesystem::path& path);

// Deterministic float formatting shared by every text emitter (CSV, JSONL, SVG):
// shortest round-trip representation, fixed across runs.
std::string format_double(double x);

}  // namespace vfpns
