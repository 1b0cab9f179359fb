#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "arec/data/csv.hpp"
#include "arec/error.hpp"
#include "arec/json_config.hpp"
#include "arec/nn/rng.hpp"
#include "json.hpp"

namespace arec::nbo {

enum class ColumnKind { categorical, numerical, previous_class, target };

inline std::string to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::numerical: return "numerical";
    case ColumnKind::previous_class: return "previous_class";
    case ColumnKind::target: return "target";
  }
  return "?";
}

inline ColumnKind parse_kind(const std::string& s) {
  if (s == "categorical") return ColumnKind::categorical;
  if (s == "numerical") return ColumnKind::numerical;
  if (s == "previous_class") return ColumnKind::previous_class;
  if (s == "target") return ColumnKind::target;
  throw ConfigError("schema: unknown column kind '" + s + "'");
}

struct Column {
  std::string name;
  ColumnKind kind;
};

/// Column layout of contracts.csv. Exactly one previous_class and one target
/// column; categoricals and numericals keep their file order.
struct ContractSchema {
  std::vector<Column> columns;
  std::size_t num_classes = 0;

  std::vector<std::string> names(ColumnKind kind) const {
    std::vector<std::string> out;
    for (const auto& c : columns)
      if (c.kind == kind) out.push_back(c.name);
    return out;
  }

  void validate() const {
    if (num_classes < 2) throw ConfigError("schema: num_classes must be >= 2");
    if (names(ColumnKind::target).size() != 1) throw ConfigError("schema: exactly one target column required");
    if (names(ColumnKind::previous_class).size() != 1) {
      throw ConfigError("schema: exactly one previous_class column required");
    }
    for (std::size_t i = 0; i < columns.size(); ++i)
      for (std::size_t j = i + 1; j < columns.size(); ++j)
        if (columns[i].name == columns[j].name) throw ConfigError("schema: duplicate column " + columns[i].name);
  }

  nlohmann::json to_json() const {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : columns) cols.push_back({{"name", c.name}, {"kind", to_string(c.kind)}});
    return {{"columns", cols}, {"num_classes", num_classes}};
  }

  static ContractSchema from_json(const nlohmann::json& j) {
    ContractSchema s;
    nlohmann::json cols = nlohmann::json::array();
    JsonFields(j, "schema").get("columns", cols).get("num_classes", s.num_classes).finish();
    for (const auto& c : cols) {
      std::string name, kind;
      JsonFields(c, "schema.columns").get("name", name).get("kind", kind).finish();
      s.columns.push_back({name, parse_kind(kind)});
    }
    s.validate();
    return s;
  }
};

/// One contract as read from file: categoricals as raw strings.
struct Contract {
  std::vector<std::string> categorical;
  std::vector<double> numerical;
  std::size_t previous_class = 0;
  std::size_t target_class = 0;

  friend bool operator==(const Contract&, const Contract&) = default;
};

struct ContractTable {
  ContractSchema schema;
  std::vector<Contract> rows;
};

inline ContractSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.filename().string() + ": " + e.what(), 1);
  }
  return ContractSchema::from_json(j);
}

inline ContractTable load_contracts(const std::filesystem::path& csv_path, const ContractSchema& schema) {
  schema.validate();
  ContractTable t{schema, {}};
  const std::string file = csv_path.filename().string();
  data::csv::read(
      csv_path,
      [&](const std::vector<std::string>& header) {
        std::vector<std::string> want;
        for (const auto& c : schema.columns) want.push_back(c.name);
        data::detail::expect_header(header, want, file);
      },
      [&](const std::vector<std::string_view>& f, std::size_t line) {
        Contract c;
        for (std::size_t i = 0; i < schema.columns.size(); ++i) {
          const auto& col = schema.columns[i];
          switch (col.kind) {
            case ColumnKind::categorical: c.categorical.emplace_back(f[i]); break;
            case ColumnKind::numerical: c.numerical.push_back(data::csv::parse_real<double>(f[i], line, col.name)); break;
            case ColumnKind::previous_class:
            case ColumnKind::target: {
              const auto v = data::csv::parse_int<std::size_t>(f[i], line, col.name);
              if (v >= schema.num_classes) {
                throw IngestionError(file + " line " + std::to_string(line) + ": " + col.name + " " + std::to_string(v) +
                                     " outside [0, " + std::to_string(schema.num_classes) + ")");
              }
              (col.kind == ColumnKind::target ? c.target_class : c.previous_class) = v;
              break;
            }
          }
        }
        t.rows.push_back(std::move(c));
      });
  return t;
}

inline void write_contracts(const std::filesystem::path& dir, const ContractTable& t) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "contracts.schema.json", std::ios::trunc);
    if (!os) throw IoError("cannot write " + (dir / "contracts.schema.json").string());
    os << t.schema.to_json().dump(2) << '\n';
  }
  std::ofstream os(dir / "contracts.csv", std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / "contracts.csv").string());
  for (std::size_t i = 0; i < t.schema.columns.size(); ++i) os << (i ? "," : "") << t.schema.columns[i].name;
  os << '\n';
  for (const auto& c : t.rows) {
    std::size_t ci = 0, ni = 0;
    for (std::size_t i = 0; i < t.schema.columns.size(); ++i) {
      if (i) os << ',';
      switch (t.schema.columns[i].kind) {
        case ColumnKind::categorical: os << c.categorical[ci++]; break;
        case ColumnKind::numerical: os << data::csv::format_real(c.numerical[ni++]); break;
        case ColumnKind::previous_class: os << c.previous_class; break;
        case ColumnKind::target: os << c.target_class; break;
      }
    }
    os << '\n';
  }
  if (!os) throw IoError("write failed: " + (dir / "contracts.csv").string());
}

/// Random 70/10/20 partition of row indices.
struct ContractSplit {
  std::vector<std::size_t> train, validation, test;
};

inline ContractSplit split_contracts(std::size_t n, std::uint64_t seed, double train_frac = 0.7, double val_frac = 0.1) {
  if (!(train_frac > 0 && val_frac >= 0 && train_frac + val_frac <= 1.0)) {
    throw ConfigError("contract split fractions must be positive and sum to at most 1");
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  nn::Rng rng(seed, 0x73706c);
  nn::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(n)));
  ContractSplit s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<long>(n_train));
  s.validation.assign(idx.begin() + static_cast<long>(n_train), idx.begin() + static_cast<long>(n_train + n_val));
  s.test.assign(idx.begin() + static_cast<long>(n_train + n_val), idx.end());
  return s;
}

/// Synthetic renewal contracts. A fixed share of customers repeats the
/// previous class. The rest follow a preference table keyed by occupation and
/// region with probability `preference_strength`, and class popularity
/// otherwise. `deterministic` drops both the repeats and the noise, so the
/// target is a pure function of the two categoricals.
struct ContractSyntheticConfig {
  std::size_t n_records = 6000;
  std::size_t num_classes = 70;
  std::size_t occupations = 8;
  std::size_t regions = 12;
  std::size_t fuel_types = 5;
  double repeat_rate = 0.55;
  double preference_strength = 0.7;
  /// Zipf exponent of the class popularity.
  double popularity_skew = 1.0;
  bool deterministic = false;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_records == 0 || num_classes < 2 || occupations == 0 || regions == 0 || fuel_types == 0) {
      throw ConfigError("contract generator: counts must be positive and num_classes >= 2");
    }
    if (!(repeat_rate >= 0 && repeat_rate <= 1)) throw ConfigError("contract generator: repeat_rate outside [0, 1]");
    if (!(preference_strength >= 0 && preference_strength <= 1)) {
      throw ConfigError("contract generator: preference_strength outside [0, 1]");
    }
  }
};

inline ContractSchema synthetic_contract_schema(std::size_t num_classes) {
  return {{{"occupation", ColumnKind::categorical},
           {"region", ColumnKind::categorical},
           {"fuel_type", ColumnKind::categorical},
           {"credit_score", ColumnKind::numerical},
           {"duration_months", ColumnKind::numerical},
           {"customer_age", ColumnKind::numerical},
           {"previous_class", ColumnKind::previous_class},
           {"target_class", ColumnKind::target}},
          num_classes};
}

inline ContractTable generate_contracts(const ContractSyntheticConfig& cfg) {
  cfg.validate();
  nn::Rng table_rng(cfg.seed, 1);
  nn::Rng rng(cfg.seed, 2);
  const std::size_t C = cfg.num_classes;

  // Class popularity ∝ 1/(rank+1)^skew under a seeded permutation of ids.
  std::vector<std::size_t> perm(C);
  for (std::size_t i = 0; i < C; ++i) perm[i] = i;
  nn::shuffle(perm.begin(), perm.end(), table_rng);
  std::vector<double> cdf(C);
  double total = 0;
  for (std::size_t r = 0; r < C; ++r) {
    total += 1.0 / std::pow(static_cast<double>(r + 1), cfg.popularity_skew);
    cdf[r] = total;
  }
  auto popular = [&](nn::Rng& g) {
    const double u = g.uniform() * total;
    const auto r = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    return perm[std::min(r, C - 1)];
  };
  std::vector<std::size_t> preferred(cfg.occupations * cfg.regions);
  for (auto& p : preferred) p = table_rng.below(C);

  ContractTable t{synthetic_contract_schema(C), {}};
  t.rows.reserve(cfg.n_records);
  for (std::size_t i = 0; i < cfg.n_records; ++i) {
    const std::size_t occ = rng.below(cfg.occupations), reg = rng.below(cfg.regions), fuel = rng.below(cfg.fuel_types);
    Contract c;
    c.categorical = {"occ" + std::to_string(occ), "reg" + std::to_string(reg), "fuel" + std::to_string(fuel)};
    c.numerical = {650.0 + 80.0 * rng.normal(0, 1), 36.0 + 12.0 * rng.normal(0, 1), 45.0 + 12.0 * rng.normal(0, 1)};
    c.previous_class = popular(rng);
    const double u_repeat = rng.uniform(), u_pref = rng.uniform();
    const std::size_t fallback = popular(rng);
    const std::size_t pref = preferred[occ * cfg.regions + reg];
    if (cfg.deterministic) {
      c.target_class = pref;
    } else if (u_repeat < cfg.repeat_rate) {
      c.target_class = c.previous_class;
    } else {
      c.target_class = u_pref < cfg.preference_strength ? pref : fallback;
    }
    t.rows.push_back(std::move(c));
  }
  return t;
}

}  // namespace arec::nbo
