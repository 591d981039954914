#include "pbnn/config.hpp"

#include <json.hpp>

namespace pbnn {

using nlohmann::ordered_json;

namespace {

ordered_json identity_json(const RunConfig& c) {
  ordered_json j;
  j["regime"] = std::string(to_string(c.regime));
  j["backend"] = c.backend;
  j["frac_bits"] = c.frac_bits;
  j["param_frac_bits"] = c.param_frac_bits;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["arch"] = c.arch;
  j["data_dir"] = c.data_dir;
  j["subset"] = c.subset;
  j["test_subset"] = c.test_subset;
  j["subset_seed"] = c.subset_seed;
  if (c.synthetic()) {
    j["synthetic_train"] = c.synthetic_train;
    j["synthetic_test"] = c.synthetic_test;
    j["synthetic_snr"] = c.synthetic_snr;
    j["image_size"] = c.image_size;
  }
  j["t_clip"] = c.t_clip;
  j["bn_momentum"] = c.bn_momentum;
  j["bn_epsilon"] = c.bn_epsilon;
  j["augment_flip"] = c.augment_flip;
  j["augment_crop"] = c.augment_crop;
  return j;
}

int default_frac(const std::string& backend, bool parameters) {
  if (backend == "fx8") return parameters ? 6 : 4;
  if (backend == "fx16") return parameters ? 14 : 8;
  return 0;
}

int total_bits(const std::string& backend) { return backend == "fx8" ? 8 : 16; }

}  // namespace

void RunConfig::validate() const {
  if (backend != "real32" && backend != "fx8" && backend != "fx16") {
    throw ConfigError("backend must be real32, fx8 or fx16 (got '" + backend + "')");
  }
  if (backend == "real32" && (frac_bits != 0 || param_frac_bits != 0)) {
    throw ConfigError("frac bits only apply to fixed-point backends");
  }
  if (backend != "real32") {
    const int total = total_bits(backend);
    for (int f : {frac_bits, param_frac_bits}) {
      if (f < 0 || f >= total) {
        throw ConfigError("frac bits must lie in [1, " + std::to_string(total - 1) + "] for " + backend);
      }
    }
  }
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (arch != "vgg" && arch != "tiny") throw ConfigError("arch must be vgg or tiny (got '" + arch + "')");
  if (!(t_clip > 0.0)) throw ConfigError("t_clip must be positive");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw ConfigError("bn momentum must lie in (0, 1]");
  if (!(bn_epsilon > 0.0)) throw ConfigError("bn epsilon must be positive");
  if (synthetic()) {
    if (synthetic_train < 10 || synthetic_test < 1) {
      throw ConfigError("synthetic data needs at least 10 train and 1 test samples");
    }
    if (!(synthetic_snr >= 0.0)) throw ConfigError("synthetic snr must be >= 0");
    if (image_size < 4 || image_size % 4 != 0) throw ConfigError("image size must be a multiple of 4");
    if (arch == "vgg" && image_size != 32) throw ConfigError("vgg arch needs 32x32 images");
  }
  const std::size_t train_size = synthetic() ? synthetic_train : (subset == 0 ? 50000 : subset);
  if (batch_size > train_size) throw ConfigError("batch size exceeds the training set");
  if (out.empty()) throw ConfigError("output directory must not be empty");
  network_spec().output_shapes();
}

NumericConfig RunConfig::numeric() const {
  if (backend == "real32") return {};
  const int total = total_bits(backend);
  const int fa = frac_bits != 0 ? frac_bits : default_frac(backend, false);
  const int fp = param_frac_bits != 0 ? param_frac_bits : default_frac(backend, true);
  return {Backend::fixed(fxp::QFormat::make(total, fa)), Backend::fixed(fxp::QFormat::make(total, fp))};
}

NetworkSpec RunConfig::network_spec() const {
  return NetworkSpec::named(arch, synthetic() ? image_size : 32);
}

int RunConfig::storage_bits() const { return backend == "real32" ? 32 : total_bits(backend); }

std::string RunConfig::to_json() const {
  auto j = identity_json(*this);
  j["out"] = out;
  j["checkpoint"] = checkpoint;
  j["wall_clock"] = wall_clock;
  return j.dump();
}

std::string RunConfig::identity() const { return identity_json(*this).dump(); }

RunConfig RunConfig::from_json(const std::string& text) {
  RunConfig c;
  ordered_json j;
  try {
    j = ordered_json::parse(text);
    c.regime = parse_regime(j.at("regime").get<std::string>());
    c.backend = j.at("backend").get<std::string>();
    c.frac_bits = j.at("frac_bits").get<int>();
    c.param_frac_bits = j.at("param_frac_bits").get<int>();
    c.epochs = j.at("epochs").get<std::int64_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.arch = j.at("arch").get<std::string>();
    c.data_dir = j.at("data_dir").get<std::string>();
    c.subset = j.at("subset").get<std::size_t>();
    c.test_subset = j.at("test_subset").get<std::size_t>();
    c.subset_seed = j.at("subset_seed").get<std::uint64_t>();
    if (c.synthetic()) {
      c.synthetic_train = j.at("synthetic_train").get<std::size_t>();
      c.synthetic_test = j.at("synthetic_test").get<std::size_t>();
      c.synthetic_snr = j.at("synthetic_snr").get<double>();
      c.image_size = j.at("image_size").get<std::size_t>();
    }
    c.t_clip = j.at("t_clip").get<double>();
    c.bn_momentum = j.at("bn_momentum").get<double>();
    c.bn_epsilon = j.at("bn_epsilon").get<double>();
    c.augment_flip = j.at("augment_flip").get<bool>();
    c.augment_crop = j.at("augment_crop").get<bool>();
    if (j.contains("out")) c.out = j["out"].get<std::string>();
    if (j.contains("checkpoint")) c.checkpoint = j["checkpoint"].get<std::string>();
    if (j.contains("wall_clock")) c.wall_clock = j["wall_clock"].get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config json: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config json: ") + e.what());
  }
  return c;
}

}  // namespace pbnn
