#include "pbnn/checkpoint.hpp"

#include "pbnn/serialization.hpp"

namespace pbnn {

namespace {

constexpr std::string_view kMagic = "PBNNCKPT";
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const TrainRun& run, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.str(run.config.to_json());
  w.u64(run.records.size());
  for (const auto& r : run.records) {
    w.u64(static_cast<std::uint64_t>(r.epoch));
    w.f64(r.eta);
    w.f64(r.v);
    w.f64(r.train_loss);
    w.f64(r.test_acc);
    w.f64(r.wall_seconds);
    w.u8(r.in_range);
    w.f64(r.saturated);
  }
  std::uint64_t tensors = 0;
  run.net.for_each_state([&](const std::string&, const Tensor&) { ++tensors; });
  w.u64(tensors);
  run.net.for_each_state([&](const std::string& name, const Tensor& t) {
    w.str(name);
    w.tensor(t);
  });
  std::uint64_t params = 0;
  run.net.for_each_param([&](const std::string&, const Param&) { ++params; });
  w.u64(params);
  run.net.for_each_param([&](const std::string& name, const Param& p) {
    w.str(name);
    w.tensor(p.adam.m);
    w.tensor(p.adam.s);
    w.u64(p.adam.t);
  });
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  io::write_container(path, kMagic, kVersion, w.bytes());
}

TrainRun load_checkpoint(const std::filesystem::path& path) {
  const auto payload = io::read_container(path, kMagic, kVersion);
  io::ByteReader r(payload);
  const auto cfg = RunConfig::from_json(r.str());
  cfg.validate();
  TrainRun run{cfg, Network::build(cfg.network_spec(), cfg.numeric(), cfg.seed, {cfg.bn_momentum, cfg.bn_epsilon}), {}};
  run.records.resize(r.u64());
  for (auto& rec : run.records) {
    rec.epoch = static_cast<std::int64_t>(r.u64());
    rec.eta = r.f64();
    rec.v = r.f64();
    rec.train_loss = r.f64();
    rec.test_acc = r.f64();
    rec.wall_seconds = r.f64();
    rec.in_range = r.u8() != 0;
    rec.saturated = r.f64();
  }
  if (run.records.empty() || run.completed_epochs() > cfg.epochs) {
    throw io::FormatError(path.string() + ": inconsistent epoch records");
  }
  const auto check = [&](const std::string& expected, const std::string& found, const Tensor& want,
                         const Tensor& got) {
    if (expected != found || want.shape() != got.shape() || !(want.backend() == got.backend())) {
      throw io::FormatError(path.string() + ": tensor " + found + " does not match " + expected);
    }
  };
  const auto tensors = r.u64();
  std::uint64_t seen = 0;
  run.net.for_each_state([&](const std::string& name, Tensor& t) {
    if (seen++ >= tensors) throw io::FormatError(path.string() + ": missing tensors");
    const auto found = r.str();
    Tensor loaded = r.tensor();
    check(name, found, t, loaded);
    t = std::move(loaded);
  });
  if (seen != tensors) throw io::FormatError(path.string() + ": unexpected tensor count");
  const auto params = r.u64();
  seen = 0;
  run.net.for_each_param([&](const std::string& name, Param& p) {
    if (seen++ >= params) throw io::FormatError(path.string() + ": missing optimizer state");
    const auto found = r.str();
    Tensor m = r.tensor();
    Tensor s = r.tensor();
    check(name, found, p.adam.m, m);
    check(name, found, p.adam.s, s);
    p.adam.m = std::move(m);
    p.adam.s = std::move(s);
    p.adam.t = r.u64();
  });
  if (seen != params) throw io::FormatError(path.string() + ": unexpected optimizer count");
  if (!r.done()) throw io::FormatError(path.string() + ": trailing bytes");
  return run;
}

}  // namespace pbnn
