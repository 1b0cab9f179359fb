#pragma once

#include <cmath>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "arec/error.hpp"
#include "arec/nbo/contracts.hpp"
#include "json.hpp"

namespace arec::nbo {

inline constexpr std::size_t kUnknownToken = 0;

/// Index map of one categorical variable. Known values get 1.. in order of
/// first occurrence; anything else maps to kUnknownToken.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> values) : values_(std::move(values)) {
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!index_.emplace(values_[i], i + 1).second) throw ConfigError("vocabulary: duplicate value " + values_[i]);
    }
  }

  void observe(const std::string& v) {
    if (index_.emplace(v, values_.size() + 1).second) values_.push_back(v);
  }

  std::size_t lookup(const std::string& v) const {
    auto it = index_.find(v);
    return it == index_.end() ? kUnknownToken : it->second;
  }

  /// Known values plus the unknown token.
  std::size_t size() const noexcept { return values_.size() + 1; }
  const std::vector<std::string>& values() const noexcept { return values_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.values_ == b.values_; }

 private:
  std::vector<std::string> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// One vocabulary per categorical column, built from the given rows only.
inline std::vector<Vocabulary> build_vocabularies(const ContractTable& t, std::span<const std::size_t> rows) {
  std::vector<Vocabulary> v(t.schema.names(ColumnKind::categorical).size());
  for (std::size_t r : rows)
    for (std::size_t c = 0; c < v.size(); ++c) v[c].observe(t.rows.at(r).categorical.at(c));
  return v;
}

/// Per-column mean and population standard deviation; a constant column
/// gets stddev 1 so it standardizes to zero.
struct Standardizer {
  std::vector<double> mean, stddev;

  static Standardizer fit(const ContractTable& t, std::span<const std::size_t> rows) {
    const std::size_t n = t.schema.names(ColumnKind::numerical).size();
    Standardizer s{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
    if (rows.empty()) return s;
    for (std::size_t r : rows)
      for (std::size_t c = 0; c < n; ++c) s.mean[c] += t.rows.at(r).numerical.at(c);
    for (auto& m : s.mean) m /= static_cast<double>(rows.size());
    std::vector<double> var(n, 0.0);
    for (std::size_t r : rows)
      for (std::size_t c = 0; c < n; ++c) {
        const double d = t.rows[r].numerical[c] - s.mean[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < n; ++c) {
      const double sd = std::sqrt(var[c] / static_cast<double>(rows.size()));
      s.stddev[c] = sd > 0 ? sd : 1.0;
    }
    return s;
  }

  double apply(std::size_t column, double x) const { return (x - mean[column]) / stddev[column]; }

  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

/// A contract against frozen vocabularies and statistics.
struct EncodedContract {
  std::vector<std::size_t> categorical;
  std::vector<double> numerical;
  std::size_t previous_class = 0;
  std::size_t target_class = 0;
};

/// Everything learned from the training rows that inference needs.
struct ContractEncoder {
  ContractSchema schema;
  std::vector<Vocabulary> vocabularies;
  Standardizer standardizer;

  static ContractEncoder fit(const ContractTable& t, std::span<const std::size_t> train_rows) {
    return {t.schema, build_vocabularies(t, train_rows), Standardizer::fit(t, train_rows)};
  }

  std::size_t num_classes() const noexcept { return schema.num_classes; }
  std::size_t num_numerical() const noexcept { return standardizer.mean.size(); }

  EncodedContract encode(const Contract& c) const {
    if (c.categorical.size() != vocabularies.size() || c.numerical.size() != num_numerical()) {
      throw DimensionError("contract does not match the encoder's column counts");
    }
    EncodedContract e;
    e.categorical.reserve(vocabularies.size());
    for (std::size_t i = 0; i < vocabularies.size(); ++i) e.categorical.push_back(vocabularies[i].lookup(c.categorical[i]));
    e.numerical.reserve(c.numerical.size());
    for (std::size_t i = 0; i < c.numerical.size(); ++i) e.numerical.push_back(standardizer.apply(i, c.numerical[i]));
    e.previous_class = c.previous_class;
    e.target_class = c.target_class;
    return e;
  }

  nlohmann::json to_json() const {
    nlohmann::json vocab = nlohmann::json::array();
    for (const auto& v : vocabularies) vocab.push_back(v.values());
    return {{"schema", schema.to_json()},
            {"vocabularies", vocab},
            {"mean", standardizer.mean},
            {"stddev", standardizer.stddev}};
  }

  static ContractEncoder from_json(const nlohmann::json& j) {
    ContractEncoder e;
    e.schema = ContractSchema::from_json(j.at("schema"));
    for (const auto& v : j.at("vocabularies")) e.vocabularies.emplace_back(v.get<std::vector<std::string>>());
    e.standardizer.mean = j.at("mean").get<std::vector<double>>();
    e.standardizer.stddev = j.at("stddev").get<std::vector<double>>();
    if (e.vocabularies.size() != e.schema.names(ColumnKind::categorical).size() ||
        e.standardizer.mean.size() != e.schema.names(ColumnKind::numerical).size() ||
        e.standardizer.stddev.size() != e.standardizer.mean.size()) {
      throw ConfigError("contract encoder: column counts disagree with schema");
    }
    return e;
  }

  friend bool operator==(const ContractEncoder& a, const ContractEncoder& b) {
    return a.schema.to_json() == b.schema.to_json() && a.vocabularies == b.vocabularies &&
           a.standardizer == b.standardizer;
  }
};

}  // namespace arec::nbo
