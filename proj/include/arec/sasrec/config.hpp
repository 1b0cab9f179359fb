#pragma once

#include <cstdint>
#include <string>

#include "arec/error.hpp"
#include "arec/json_config.hpp"
#include "json.hpp"

namespace arec::sasrec {

struct SasrecConfig {
  std::size_t embed_dim = 64;
  std::size_t blocks = 2;
  std::size_t heads = 2;
  std::size_t max_seq_len = 50;
  double dropout = 0.2;
  /// λ: weight of the next-bid loss relative to the next-purchase loss.
  double bid_loss_weight = 0.5;
  /// When false, bids are dropped from input sequences altogether.
  bool bids_in_input = true;
  std::size_t negatives_per_position = 1;
  double lr = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 128;
  /// Epochs without a validation HR@20 improvement before stopping; 0 disables.
  std::size_t patience = 3;
  std::uint64_t seed = 0;

  void validate() const {
    if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0) {
      throw ConfigError("sasrec: embed_dim " + std::to_string(embed_dim) + " must be a positive multiple of heads " +
                        std::to_string(heads));
    }
    if (max_seq_len < 1) throw ConfigError("sasrec: max_seq_len must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("sasrec: dropout must be in [0, 1)");
    if (!(bid_loss_weight >= 0.0)) throw ConfigError("sasrec: bid_loss_weight must be >= 0");
    if (negatives_per_position < 1) throw ConfigError("sasrec: negatives_per_position must be >= 1");
    if (batch_size < 1) throw ConfigError("sasrec: batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("sasrec: lr must be positive");
  }

  nlohmann::json to_json() const {
    return {{"embed_dim", embed_dim},
            {"blocks", blocks},
            {"heads", heads},
            {"max_seq_len", max_seq_len},
            {"dropout", dropout},
            {"bid_loss_weight", bid_loss_weight},
            {"bids_in_input", bids_in_input},
            {"negatives_per_position", negatives_per_position},
            {"lr", lr},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"patience", patience},
            {"seed", seed}};
  }

  static SasrecConfig from_json(const nlohmann::json& j) {
    SasrecConfig c;
    JsonFields f(j, "sasrec");
    f.get("embed_dim", c.embed_dim)
        .get("blocks", c.blocks)
        .get("heads", c.heads)
        .get("max_seq_len", c.max_seq_len)
        .get("dropout", c.dropout)
        .get("bid_loss_weight", c.bid_loss_weight)
        .get("bids_in_input", c.bids_in_input)
        .get("negatives_per_position", c.negatives_per_position)
        .get("lr", c.lr)
        .get("epochs", c.epochs)
        .get("batch_size", c.batch_size)
        .get("patience", c.patience)
        .get("seed", c.seed)
        .finish();
    c.validate();
    return c;
  }
};

}  // namespace arec::sasrec
