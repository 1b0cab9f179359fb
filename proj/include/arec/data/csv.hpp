#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_set>
#include <vector>

#include "arec/data/dataset.hpp"
#include "arec/error.hpp"

namespace arec::data {

namespace csv {

/// Splits one line on commas. Fields never contain commas or quotes in the
/// schemas used here.
inline std::vector<std::string_view> split(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

template <typename Int>
Int parse_int(std::string_view field, std::size_t line, std::string_view column) {
  Int v{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw ParseError("column '" + std::string(column) + "': not an integer: '" + std::string(field) + "'", line);
  }
  return v;
}

template <typename Real>
Real parse_real(std::string_view field, std::size_t line, std::string_view column) {
  Real v{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v)) {
    throw ParseError("column '" + std::string(column) + "': not a finite number: '" + std::string(field) + "'",
                     line);
  }
  return v;
}

/// Shortest representation that round-trips exactly.
template <typename Real>
std::string format_real(Real v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

/// Reads a file with a mandatory header row. `on_row` receives the split
/// fields and the 1-based line number; blank lines are skipped.
inline void read(const std::filesystem::path& path,
                 const std::function<void(const std::vector<std::string>&)>& on_header,
                 const std::function<void(const std::vector<std::string_view>&, std::size_t)>& on_row) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.filename().string() + ": missing header row", 1);
  std::vector<std::string> header;
  for (auto f : split(line)) header.emplace_back(f);
  on_header(header);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split(line);
    if (fields.size() != header.size()) {
      throw ParseError(path.filename().string() + ": expected " + std::to_string(header.size()) +
                           " fields, found " + std::to_string(fields.size()),
                       lineno);
    }
    on_row(fields, lineno);
  }
}

}  // namespace csv

namespace detail {

inline void expect_header(const std::vector<std::string>& header, const std::vector<std::string>& want,
                          const std::string& file) {
  if (header != want) {
    std::string w;
    for (const auto& h : want) w += (w.empty() ? "" : ",") + h;
    throw ParseError(file + ": header must be '" + w + "'", 1);
  }
}

inline void expect_feature_header(const std::vector<std::string>& header, const std::string& id_col,
                                  const std::string& file) {
  if (header.empty() || header[0] != id_col) throw ParseError(file + ": first column must be " + id_col, 1);
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i] != "f" + std::to_string(i - 1)) {
      throw ParseError(file + ": feature columns must be f0..f" + std::to_string(header.size() - 2), 1);
    }
  }
}

template <typename Record>
std::vector<Record> read_entities(const std::filesystem::path& path, const std::string& id_col) {
  std::vector<Record> out;
  const std::string file = path.filename().string();
  csv::read(path, [&](const auto& header) { expect_feature_header(header, id_col, file); },
            [&](const auto& fields, std::size_t line) {
    Record r;
    r.id = csv::parse_int<std::int64_t>(fields[0], line, id_col);
    r.features.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i)
      r.features.push_back(csv::parse_real<float>(fields[i], line, "f" + std::to_string(i - 1)));
    out.push_back(std::move(r));
  });
  return out;
}

template <typename Record>
void write_entities(const std::filesystem::path& path, const std::string& id_col,
                    const std::vector<Record>& records, std::size_t dim) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << id_col;
  for (std::size_t i = 0; i < dim; ++i) os << ",f" << i;
  os << '\n';
  for (const auto& r : records) {
    os << r.id;
    for (float f : r.features) os << ',' << csv::format_real(f);
    os << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace detail

struct DatasetPaths {
  std::filesystem::path dealers;
  std::filesystem::path vehicles;
  std::filesystem::path interactions;

  static DatasetPaths in(const std::filesystem::path& dir) {
    return {dir / "dealers.csv", dir / "vehicles.csv", dir / "interactions.csv"};
  }
};

/// Reads the three CSV files and enforces referential integrity row by row.
inline Dataset load_interactions(const DatasetPaths& paths) {
  auto dealers = detail::read_entities<DealerRecord>(paths.dealers, "dealer_id");
  auto vehicles = detail::read_entities<VehicleRecord>(paths.vehicles, "vehicle_id");
  std::unordered_set<DealerId> dealer_ids;
  std::unordered_set<VehicleId> vehicle_ids;
  for (const auto& d : dealers) dealer_ids.insert(d.id);
  for (const auto& v : vehicles) vehicle_ids.insert(v.id);

  std::vector<Interaction> interactions;
  std::unordered_set<VehicleId> purchased;
  const std::string file = paths.interactions.filename().string();
  csv::read(
      paths.interactions,
      [&](const auto& header) {
        detail::expect_header(header, {"dealer_id", "vehicle_id", "timestamp", "relation"}, file);
      },
      [&](const auto& f, std::size_t line) {
    Interaction it;
    it.dealer = csv::parse_int<DealerId>(f[0], line, "dealer_id");
    it.vehicle = csv::parse_int<VehicleId>(f[1], line, "vehicle_id");
    it.timestamp = csv::parse_int<Timestamp>(f[2], line, "timestamp");
    auto rel = parse_relation(f[3]);
    if (!rel) throw ParseError(file + ": relation must be 'purchase' or 'bid', got '" + std::string(f[3]) + "'", line);
    it.relation = *rel;
    if (!dealer_ids.contains(it.dealer)) {
      throw IngestionError(file + " line " + std::to_string(line) + ": unknown dealer_id " + std::to_string(it.dealer));
    }
    if (!vehicle_ids.contains(it.vehicle)) {
      throw IngestionError(file + " line " + std::to_string(line) + ": unknown vehicle_id " +
                           std::to_string(it.vehicle));
    }
    if (it.timestamp < 0) {
      throw IngestionError(file + " line " + std::to_string(line) + ": negative timestamp");
    }
    if (it.relation == Relation::purchase && !purchased.insert(it.vehicle).second) {
      throw IngestionError(file + " line " + std::to_string(line) + ": vehicle_id " + std::to_string(it.vehicle) +
                           " purchased twice");
    }
    interactions.push_back(it);
  });
  return Dataset(std::move(dealers), std::move(vehicles), std::move(interactions));
}

inline Dataset load_interactions(const std::filesystem::path& dir) { return load_interactions(DatasetPaths::in(dir)); }

inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  const auto paths = DatasetPaths::in(dir);
  detail::write_entities(paths.dealers, "dealer_id", ds.dealers(), ds.dealer_feature_dim());
  detail::write_entities(paths.vehicles, "vehicle_id", ds.vehicles(), ds.vehicle_feature_dim());
  std::ofstream os(paths.interactions, std::ios::trunc);
  if (!os) throw IoError("cannot write " + paths.interactions.string());
  os << "dealer_id,vehicle_id,timestamp,relation\n";
  for (const auto& i : ds.interactions())
    os << i.dealer << ',' << i.vehicle << ',' << i.timestamp << ',' << to_string(i.relation) << '\n';
  if (!os) throw IoError("write failed: " + paths.interactions.string());
}

}  // namespace arec::data
