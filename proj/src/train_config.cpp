#include "cfp2ffa/train_config.hpp"

#include <stdexcept>

namespace cfp2ffa {

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::Baseline: return "baseline";
    case Variant::M1: return "m1";
    case Variant::Full: return "full";
  }
  return "full";
}

Variant parse_variant(std::string_view text) {
  if (text == "baseline") return Variant::Baseline;
  if (text == "m1") return Variant::M1;
  if (text == "full") return Variant::Full;
  throw std::invalid_argument("unknown variant '" + std::string(text) + "' (baseline|m1|full)");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid training config: ") + what);
  };
  require(epochs >= 1, "epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(lr > 0.0, "lr must be positive");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must lie in [0, 1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must lie in [0, 1)");
  require(lambda_corr >= 0.0 && lambda_smooth >= 0.0, "loss weights must be non-negative");
  require(image_size >= 8 && image_size % 8 == 0, "image_size must be a positive multiple of 8");
  require(num_res_blocks >= 0, "num_res_blocks must be non-negative");
  require(schedule_steps >= 1, "schedule_steps must be >= 1");
  require(beta_min >= 0.0 && beta_min <= beta_max && beta_max < 1.0,
          "need 0 <= beta_min <= beta_max < 1");
  require(t_init >= 0 && t_init < schedule_steps, "t_init must lie in [0, schedule_steps)");
  require(controller_lambda > 0.0, "controller_lambda must be positive");
  require(controller_every >= 1, "controller_every must be >= 1");
  require(split_ratio > 0.0 && split_ratio < 1.0, "split_ratio must lie in (0, 1)");
  require(sample_grid_count >= 0, "sample_grid_count must be non-negative");
}

KeyValueConfig TrainConfig::to_config() const {
  KeyValueConfig c;
  c.set("profile", profile);
  c.set("variant", std::string(to_string(variant)));
  c.set("epochs", epochs);
  c.set("batch_size", batch_size);
  c.set("lr", lr);
  c.set("weight_decay", weight_decay);
  c.set("adam_beta1", adam_beta1);
  c.set("adam_beta2", adam_beta2);
  c.set("lambda_corr", lambda_corr);
  c.set("lambda_smooth", lambda_smooth);
  c.set("seed", static_cast<std::int64_t>(seed));
  c.set("image_size", image_size);
  c.set("num_res_blocks", num_res_blocks);
  c.set("schedule_steps", schedule_steps);
  c.set("beta_min", beta_min);
  c.set("beta_max", beta_max);
  c.set("t_init", t_init);
  c.set("controller_lambda", controller_lambda);
  c.set("controller_every", controller_every);
  c.set("split_ratio", split_ratio);
  c.set("augment", augment);
  c.set("keep_epoch_checkpoints", keep_epoch_checkpoints);
  c.set("sample_grid_count", sample_grid_count);
  return c;
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& c, TrainConfig base) {
  const auto known = base.to_config();
  std::vector<std::string> keys;
  for (const auto& [k, v] : known.items()) keys.push_back(k);
  if (auto unknown = c.unknown_keys(keys); !unknown.empty()) {
    throw std::invalid_argument("unknown training config key '" + unknown.front() + "'");
  }
  TrainConfig t = base;
  c.read_into("profile", t.profile);
  if (c.has("variant")) t.variant = parse_variant(c.get_string("variant"));
  c.read_into("epochs", t.epochs);
  c.read_into("batch_size", t.batch_size);
  c.read_into("lr", t.lr);
  c.read_into("weight_decay", t.weight_decay);
  c.read_into("adam_beta1", t.adam_beta1);
  c.read_into("adam_beta2", t.adam_beta2);
  c.read_into("lambda_corr", t.lambda_corr);
  c.read_into("lambda_smooth", t.lambda_smooth);
  c.read_into("seed", t.seed);
  c.read_into("image_size", t.image_size);
  c.read_into("num_res_blocks", t.num_res_blocks);
  c.read_into("schedule_steps", t.schedule_steps);
  c.read_into("beta_min", t.beta_min);
  c.read_into("beta_max", t.beta_max);
  c.read_into("t_init", t.t_init);
  c.read_into("controller_lambda", t.controller_lambda);
  c.read_into("controller_every", t.controller_every);
  c.read_into("split_ratio", t.split_ratio);
  c.read_into("augment", t.augment);
  c.read_into("keep_epoch_checkpoints", t.keep_epoch_checkpoints);
  c.read_into("sample_grid_count", t.sample_grid_count);
  return t;
}

TrainConfig TrainConfig::profile_defaults(std::string_view profile) {
  TrainConfig t;
  if (profile == "desk") {
    t.profile = "desk";
    t.image_size = 128;
    t.batch_size = 4;
    t.epochs = 20;
  } else if (profile == "full") {
    t.profile = "full";
    t.image_size = 1024;
    t.batch_size = 2;
    t.epochs = 100;
    t.keep_epoch_checkpoints = true;
  } else {
    throw std::invalid_argument("unknown profile '" + std::string(profile) + "' (desk|full)");
  }
  return t;
}

}  // namespace cfp2ffa
