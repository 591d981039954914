#include "pbnn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "pbnn/optim.hpp"

namespace pbnn {

namespace {

constexpr std::uint64_t kAugmentStream = 0xa0a0;

}  // namespace

TrainingAborted::TrainingAborted(std::int64_t e, std::size_t b, double l)
    : std::runtime_error("non-finite training loss " + std::to_string(l) + " at epoch " +
                         std::to_string(e) + ", batch " + std::to_string(b)),
      epoch(e),
      batch(b),
      loss(l) {}

Schedule Schedule::at(std::int64_t epoch, std::int64_t total) {
  return {lr_schedule(epoch), v_schedule(epoch, total)};
}

DataSplits load_data(const RunConfig& cfg) {
  if (cfg.synthetic()) {
    SyntheticOptions opts;
    opts.seed = cfg.subset_seed;
    opts.snr = cfg.synthetic_snr;
    opts.image_size = cfg.image_size;
    opts.samples = cfg.synthetic_train;
    DataSplits splits;
    splits.train = synthetic_dataset(opts);
    opts.samples = cfg.synthetic_test;
    opts.split = Split::test;
    splits.test = synthetic_dataset(opts);
    return splits;
  }
  CifarLoadOptions opts;
  opts.train_subset = cfg.subset;
  opts.test_subset = cfg.test_subset;
  opts.subset_seed = cfg.subset_seed;
  auto loaded = load_cifar10(cfg.data_dir, opts);
  return {std::move(loaded.train), std::move(loaded.test)};
}

ForwardContext make_context(const RunConfig& cfg, const Network& net, double v, bool training,
                            std::int64_t epoch, std::size_t batch) {
  ForwardContext ctx;
  ctx.regime = cfg.regime;
  ctx.v = v;
  ctx.ste = SteConfig::make(cfg.t_clip);
  ctx.activations = net.numeric().activations;
  ctx.training = training;
  ctx.key = RandomKey{cfg.seed, static_cast<std::uint64_t>(epoch), batch, 0};
  return ctx;
}

double train_epoch(Network& net, const Dataset& train, const RunConfig& cfg, std::int64_t epoch,
                   const Schedule& schedule) {
  const auto order = batches(train.size(), cfg.batch_size, cfg.seed, static_cast<std::uint64_t>(epoch));
  const Augmentation augment{cfg.augment_flip, cfg.augment_crop};
  double total = 0.0;
  for (std::size_t b = 0; b < order.size(); ++b) {
    const RandomKey aug_key{cfg.seed, static_cast<std::uint64_t>(epoch), b, kAugmentStream};
    const auto batch = gather(train, order[b], augment, aug_key);
    const auto ctx = make_context(cfg, net, schedule.v, true, epoch, b);
    ForwardTape tape;
    const Tensor logits = net.forward(batch.images, ctx, &tape);
    auto [loss, grad] = cross_entropy(logits, batch.labels);
    if (!std::isfinite(loss)) throw TrainingAborted(epoch, b, loss);
    net.backward(grad, tape);
    net.adam_step(schedule.eta);
    total += loss;
  }
  return order.empty() ? 0.0 : total / static_cast<double>(order.size());
}

double test_accuracy(const Network& net, const Dataset& test, const RunConfig& cfg, double v) {
  if (binarizes(cfg.regime)) return evaluate(extract_binary_params(net), test);
  return evaluate(net, test, make_context(cfg, net, v, false));
}

namespace {

EpochRecord finish_record(const TrainRun& run, const DataSplits& data, std::int64_t epoch, double eta,
                          double v, double loss, double seconds) {
  EpochRecord r;
  r.epoch = epoch;
  r.eta = eta;
  r.v = v;
  r.train_loss = loss;
  r.test_acc = test_accuracy(run.net, data.test, run.config, v);
  r.wall_seconds = run.config.wall_clock ? seconds : 0.0;
  r.in_range = run.net.all_in_range();
  r.saturated = run.net.saturated_fraction(v);
  return r;
}

}  // namespace

TrainRun TrainRun::start(const RunConfig& cfg, const DataSplits& data) {
  cfg.validate();
  const auto spec = cfg.network_spec();
  if (data.train.size() == 0 || data.train.image_shape() != spec.input_shape) {
    throw DimensionError("training data shape " + shape_to_string(data.train.image_shape()) +
                         " does not match the network input " + shape_to_string(spec.input_shape));
  }
  TrainRun run{cfg, Network::build(spec, cfg.numeric(), cfg.seed, {cfg.bn_momentum, cfg.bn_epsilon}), {}};
  const auto s = Schedule::at(0, std::max<std::int64_t>(cfg.epochs, 1));
  run.records.push_back(
      finish_record(run, data, 0, s.eta, s.v, std::numeric_limits<double>::quiet_NaN(), 0.0));
  return run;
}

void continue_run(TrainRun& run, const DataSplits& data, std::optional<std::int64_t> stop_after,
                  const std::function<void(const TrainRun&)>& on_epoch) {
  while (!run.finished()) {
    if (stop_after && run.completed_epochs() >= *stop_after) return;
    const std::int64_t e = run.completed_epochs();
    const auto s = Schedule::at(e, run.config.epochs);
    const auto t0 = std::chrono::steady_clock::now();
    const double loss = train_epoch(run.net, data.train, run.config, e, s);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    run.records.push_back(finish_record(run, data, e + 1, s.eta, s.v, loss, dt.count()));
    if (on_epoch) on_epoch(run);
  }
}

}  // namespace pbnn
