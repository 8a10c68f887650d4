#include "signet/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "json_util.hpp"
#include "signet/error.hpp"

namespace signet {

namespace {

AugmentSpec augment_from_json(const nlohmann::json& obj) {
  reject_unknown_keys(obj,
                      {"flip_prob", "rotation_max_deg", "brightness_range",
                       "contrast_range", "translate_max_frac"},
                      "augment config");
  AugmentSpec s;
  if (obj.contains("flip_prob")) obj.at("flip_prob").get_to(s.flip_prob);
  if (obj.contains("rotation_max_deg"))
    obj.at("rotation_max_deg").get_to(s.rotation_max_deg);
  if (obj.contains("brightness_range"))
    obj.at("brightness_range").get_to(s.brightness_range);
  if (obj.contains("contrast_range"))
    obj.at("contrast_range").get_to(s.contrast_range);
  if (obj.contains("translate_max_frac"))
    obj.at("translate_max_frac").get_to(s.translate_max_frac);
  return s;
}

nlohmann::json augment_to_json(const AugmentSpec& s) {
  return {{"flip_prob", s.flip_prob},
          {"rotation_max_deg", s.rotation_max_deg},
          {"brightness_range", s.brightness_range},
          {"contrast_range", s.contrast_range},
          {"translate_max_frac", s.translate_max_frac}};
}

OptimizerConfig optimizer_from_json(const nlohmann::json& obj) {
  reject_unknown_keys(obj, {"lr", "beta1", "beta2", "eps", "grad_clip"},
                      "optimizer config");
  OptimizerConfig c;
  if (obj.contains("lr")) obj.at("lr").get_to(c.lr);
  if (obj.contains("beta1")) obj.at("beta1").get_to(c.beta1);
  if (obj.contains("beta2")) obj.at("beta2").get_to(c.beta2);
  if (obj.contains("eps")) obj.at("eps").get_to(c.eps);
  if (obj.contains("grad_clip")) obj.at("grad_clip").get_to(c.grad_clip);
  return c;
}

SchedulerConfig scheduler_from_json(const nlohmann::json& obj) {
  reject_unknown_keys(obj, {"factor", "patience", "min_lr", "threshold"},
                      "scheduler config");
  SchedulerConfig c;
  if (obj.contains("factor")) obj.at("factor").get_to(c.factor);
  if (obj.contains("patience")) obj.at("patience").get_to(c.patience);
  if (obj.contains("min_lr")) obj.at("min_lr").get_to(c.min_lr);
  if (obj.contains("threshold")) obj.at("threshold").get_to(c.threshold);
  return c;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (optimizer.lr <= 0.0) {
    throw Error(ErrorKind::config, "learning rate must be positive");
  }
  if (optimizer.beta1 < 0.0 || optimizer.beta1 >= 1.0 ||
      optimizer.beta2 < 0.0 || optimizer.beta2 >= 1.0) {
    throw Error(ErrorKind::config, "Adam betas must be in [0,1)");
  }
  if (optimizer.eps <= 0.0) {
    throw Error(ErrorKind::config, "Adam eps must be positive");
  }
  if (scheduler.factor <= 0.0 || scheduler.factor >= 1.0) {
    throw Error(ErrorKind::config, "scheduler factor must be in (0,1)");
  }
  if (scheduler.patience < 0 || early_stop_patience < 0) {
    throw Error(ErrorKind::config, "patience values must be >= 0");
  }
  if (batch_size < 1) {
    throw Error(ErrorKind::config, "batch_size must be >= 1");
  }
  if (max_epochs < 1 || max_epochs > 100) {
    throw Error(ErrorKind::config, "max_epochs must be in [1,100]");
  }
}

RunConfig run_config_from_json(const std::string& text) {
  nlohmann::json obj = nlohmann::json::parse(text, nullptr, false);
  if (obj.is_discarded()) {
    throw Error(ErrorKind::config, "run config is not valid JSON");
  }
  reject_unknown_keys(obj,
                      {"model", "augment", "optimizer", "scheduler",
                       "early_stop_patience", "batch_size", "max_epochs",
                       "seed", "manifest", "out_dir", "record_timings"},
                      "run config");
  RunConfig c;
  try {
    if (obj.contains("model")) {
      c.model = model_config_from_json_obj(obj.at("model"));
    }
    if (obj.contains("augment")) c.augment = augment_from_json(obj.at("augment"));
    if (obj.contains("optimizer"))
      c.optimizer = optimizer_from_json(obj.at("optimizer"));
    if (obj.contains("scheduler"))
      c.scheduler = scheduler_from_json(obj.at("scheduler"));
    if (obj.contains("early_stop_patience"))
      obj.at("early_stop_patience").get_to(c.early_stop_patience);
    if (obj.contains("batch_size")) obj.at("batch_size").get_to(c.batch_size);
    if (obj.contains("max_epochs")) obj.at("max_epochs").get_to(c.max_epochs);
    if (obj.contains("seed")) obj.at("seed").get_to(c.seed);
    if (obj.contains("manifest")) obj.at("manifest").get_to(c.manifest);
    if (obj.contains("out_dir")) obj.at("out_dir").get_to(c.out_dir);
    if (obj.contains("record_timings"))
      obj.at("record_timings").get_to(c.record_timings);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::config,
                std::string("malformed run config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig run_config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::config, "cannot open config file " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return run_config_from_json(buf.str());
}

std::string run_config_to_json(const RunConfig& c) {
  nlohmann::json obj{
      {"model", model_config_to_json_obj(c.model)},
      {"augment", augment_to_json(c.augment)},
      {"optimizer",
       {{"lr", c.optimizer.lr},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"eps", c.optimizer.eps},
        {"grad_clip", c.optimizer.grad_clip}}},
      {"scheduler",
       {{"factor", c.scheduler.factor},
        {"patience", c.scheduler.patience},
        {"min_lr", c.scheduler.min_lr},
        {"threshold", c.scheduler.threshold}}},
      {"early_stop_patience", c.early_stop_patience},
      {"batch_size", c.batch_size},
      {"max_epochs", c.max_epochs},
      {"seed", c.seed},
      {"manifest", c.manifest},
      {"out_dir", c.out_dir},
      {"record_timings", c.record_timings},
  };
  return obj.dump(2);
}

}  // namespace signet
