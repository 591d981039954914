// Criteria that run without external data: gradients, the BN shortcut,
// stochastic calibration, progressive convergence, schedules, the
// architecture chain and determinism.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "gradcheck.hpp"
#include "pbnn/binary_params.hpp"
#include "pbnn/checkpoint.hpp"
#include "pbnn/harness.hpp"
#include "pbnn/optim.hpp"
#include "report.hpp"

using namespace pbnn;
using namespace pbnn::acceptance;
namespace fs = std::filesystem;

namespace {

constexpr double kGradTolerance = 1e-3;
constexpr int kGradSeedsPerFamily = 20;
constexpr double kGradBudgetSeconds = 60.0;
constexpr std::size_t kShortcutTuples = 10000;
constexpr double kShortcutBudgetSeconds = 10.0;
constexpr std::size_t kDrawsPerTheta = 100000;
constexpr double kSaturationFloor = 0.95;

fs::path work_dir() {
  const char* root = std::getenv("PBNN_TEST_TMP");
  fs::path dir = fs::path(root ? root : fs::temp_directory_path().string()) / "acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void gradients(Report& report) {
  Stopwatch clock;
  std::size_t cases = 0, bad = 0;
  double worst = 0.0;
  std::string worst_name;
  for (const auto& family : pbnn::testing::gradient_families()) {
    for (int s = 0; s < kGradSeedsPerFamily; ++s) {
      const auto c = family.fn(static_cast<std::uint64_t>(s) * 104729 + 17);
      ++cases;
      if (!(c.rel_error <= kGradTolerance)) ++bad;
      if (!(c.rel_error <= worst)) {
        worst = c.rel_error;
        worst_name = c.name;
      }
    }
  }
  const double t = clock.seconds();
  report.line(1, bad == 0 && cases >= 200 && t < kGradBudgetSeconds,
              std::to_string(cases) + " finite-difference cases, " + std::to_string(bad) +
                  " above 1e-3, worst " + fmt("%.2e", worst) + " (" + worst_name + ")",
              t);
}

void shortcut(Report& report) {
  Stopwatch clock;
  std::mt19937_64 gen(20240601);
  std::uniform_real_distribution<double> wide(-4.0, 4.0), positive(1e-3, 4.0);
  std::size_t disagree = 0;
  for (std::size_t n = 0; n < kShortcutTuples; ++n) {
    auto s = BatchNormState::make(1, Backend::real(), Backend::real());
    double gamma = 0.0;
    while (gamma == 0.0) gamma = wide(gen);
    s.gamma.value = Tensor({1}, {gamma});
    s.beta.value = Tensor({1}, {wide(gen)});
    s.running_mean = Tensor({1}, {wide(gen)});
    s.running_std = Tensor({1}, {positive(gen)});
    const Tensor x({1, 1}, {wide(gen) * 2.0});
    disagree += bn_sign_shortcut(x, s) != binarize_det(bn_forward_eval(x, s));
  }
  const double t = clock.seconds();
  report.line(2, disagree == 0 && t < kShortcutBudgetSeconds,
              std::to_string(kShortcutTuples) + " tuples, " + std::to_string(disagree) + " disagreements", t);
}

void calibration(Report& report) {
  Stopwatch clock;
  bool ok = true;
  std::string detail;
  std::uint64_t stream = 0;
  for (double theta : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    const auto draws = binarize_stoch(Tensor::full({kDrawsPerTheta}, theta), RandomKey{7, 0, 0, stream++});
    const double plus = static_cast<double>(std::count(draws.values().begin(), draws.values().end(), 1.0));
    const double n = static_cast<double>(kDrawsPerTheta);
    const double p = hard_sigmoid(theta);
    const double bound = 3.0 * std::sqrt(p * (1.0 - p) / n);
    const double phat = plus / n;
    ok = ok && std::abs(phat - p) <= bound;
    detail += fmt("θ=%+.1f: %.4f vs %.4f; ", theta, phat, p);
  }
  report.line(3, ok, detail + "3σ binomial bounds", clock.seconds());
}

void convergence(Report& report, const fs::path& dir) {
  Stopwatch clock;
  // Dense grid: every multiple of 1e-6 in [-2, 2] outside |P| < 0.0011.
  std::vector<double> grid;
  for (long i = -2000000; i <= 2000000; ++i) {
    const double p = static_cast<double>(i) * 1e-6;
    if (std::abs(p) >= 0.0011) grid.push_back(p);
  }
  const Tensor p({grid.size()}, grid);
  const bool grid_ok = theta_pwl(p, ScaleParam(1000.0)) == binarize_det(p);

  RunConfig cfg;
  cfg.image_size = 8;
  cfg.synthetic_train = 160;
  cfg.synthetic_test = 100;
  cfg.epochs = 10;
  cfg.wall_clock = false;
  cfg.out = (dir / "convergence").string();
  const auto data = load_data(cfg);
  auto run = TrainRun::start(cfg, data);
  continue_run(run, data);
  const double saturated = run.records.back().saturated;
  const auto params = extract_binary_params(run.net);
  bool binary_ok = true;
  try {
    params.validate();
  } catch (const std::exception&) {
    binary_ok = false;
  }
  report.line(4, grid_ok && binary_ok && saturated >= kSaturationFloor,
              std::to_string(grid.size()) + " grid points " + (grid_ok ? "equal" : "DIFFER") +
                  "; after " + std::to_string(cfg.epochs) + " scheduled epochs " +
                  fmt("%.4f", saturated) + " of entries saturated, " +
                  std::to_string(params.binary_entries()) + " extracted entries " +
                  (binary_ok ? "all in {-1,+1}" : "NOT binary"),
              clock.seconds());
}

void schedules(Report& report) {
  Stopwatch clock;
  const bool ok = v_schedule(0, 50) == 1.0 && v_schedule(49, 50) == 1000.0 && lr_schedule(0) == 1e-3 &&
                  lr_schedule(20) == 1e-4 && lr_schedule(40) == 1e-5;
  report.line(5, ok,
              fmt("v(0)=%.17g v(49)=%.17g", v_schedule(0, 50), v_schedule(49, 50)) +
                  fmt(" lr(0)=%.17g lr(20)=%.17g lr(40)=%.17g", lr_schedule(0), lr_schedule(20), lr_schedule(40)),
              clock.seconds());
}

void architecture(Report& report) {
  Stopwatch clock;
  const std::vector<Shape> want{{128, 32, 32}, {128, 32, 32}, {128, 16, 16}, {128, 16, 16},
                                {256, 16, 16}, {256, 8, 8},   {256, 8, 8},   {512, 8, 8},
                                {512, 4, 4},   {1024},        {1024},        {10}};
  bool ok = NetworkSpec::vgg().output_shapes() == want;
  // Push one image through the built network to confirm the layers agree.
  const auto net = Network::build(NetworkSpec::vgg(), {}, 1);
  ForwardContext ctx;
  const auto logits = net.infer(Tensor({1, 3, 32, 32}), ctx);
  ok = ok && logits.shape() == Shape{1, 10};
  std::string chain;
  for (const auto& s : want) chain += shape_to_string(s) + " ";
  report.line(6, ok, "chain " + chain, clock.seconds());
}

void determinism(Report& report, const fs::path& dir) {
  Stopwatch clock;
  RunConfig cfg;
  cfg.image_size = 8;
  cfg.synthetic_train = 80;
  cfg.synthetic_test = 100;
  cfg.epochs = 6;
  cfg.wall_clock = false;
  cfg.out = (dir / "det").string();
  RunOptions quiet{.stop_after_epoch = {}, .quiet = true};
  std::ostringstream sink;
  cmd_train(cfg, quiet, sink, sink);
  const auto csv1 = slurp(dir / "det" / "metrics.csv");
  cmd_train(cfg, quiet, sink, sink);
  const auto csv2 = slurp(dir / "det" / "metrics.csv");
  const bool csv_ok = !csv1.empty() && csv1 == csv2;

  cfg.backend = "fx16";
  cmd_train(cfg, quiet, sink, sink);
  const auto full_ckpt = slurp(cfg.checkpoint_path());
  const auto full_csv = slurp(dir / "det" / "metrics.csv");
  RunOptions stop{.stop_after_epoch = 3, .quiet = true};
  cmd_train(cfg, stop, sink, sink);
  const bool interrupted = load_checkpoint(cfg.checkpoint_path()).completed_epochs() == 3;
  cmd_resume(cfg.checkpoint_path(), cfg, quiet, sink, sink);
  const bool resume_ok = interrupted && !full_ckpt.empty() && slurp(cfg.checkpoint_path()) == full_ckpt &&
                         slurp(dir / "det" / "metrics.csv") == full_csv;
  report.line(10, csv_ok && resume_ok,
              std::string("rerun CSVs ") + (csv_ok ? "byte-identical" : "DIFFER") +
                  "; fx16 stop at 3/6 + resume " + (resume_ok ? "bit-exact" : "DIFFERS"),
              clock.seconds());
}

}  // namespace

int main() {
  const auto dir = work_dir();
  Report report;
  gradients(report);
  shortcut(report);
  calibration(report);
  convergence(report, dir);
  schedules(report);
  architecture(report);
  determinism(report, dir);
  return report.exit_code();
}
