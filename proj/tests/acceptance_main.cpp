// Acceptance gate: exercises every contract the project promises, printing
// one PASS/FAIL line per criterion. Exit code 0 only if all pass.
//
//   acceptance --cli PATH_TO_CLI --workdir SCRATCH_DIR

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "scalesteer/convengine.hpp"
#include "scalesteer/datasets.hpp"
#include "scalesteer/filterbank.hpp"
#include "scalesteer/network.hpp"
#include "scalesteer/rng.hpp"
#include "scalesteer/steering.hpp"

namespace fs = std::filesystem;
using namespace scalesteer;

namespace {

std::string g_cli;
fs::path g_work;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

CoefficientSet random_coeffs(const BasisSpec& spec, Rng& rng) {
  CoefficientSet cs = CoefficientSet::zeros(spec);
  for (auto& c : cs.c) c = {rng.normal(), rng.normal()};
  return cs;
}

double blob_pattern(double x, double y) {
  auto g = [](double x, double y, double cx, double cy, double sx, double sy) {
    const double dx = (x - cx) / sx, dy = (y - cy) / sy;
    return std::exp(-0.5 * (dx * dx + dy * dy));
  };
  return g(x, y, 2.5, -1.5, 2.2, 2.8) + 0.6 * g(x, y, -3.0, 2.0, 2.5, 1.8);
}

// ---- criterion 1: steered kernels match the per-pixel analytic oracle ----

Outcome steering_identity() {
  const BasisSpec spec = BasisSpec::defaults();
  Rng rng(1);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const CoefficientSet cs = random_coeffs(spec, rng);
    for (double s : {0.7, 1.0, 1.3, 2.0, 2.4}) {
      const RealGrid k1 = steer(cs, s, 7).values;
      const RealGrid k2 = oracle_resample(cs, s, 7);
      worst = std::max(worst, max_abs_diff(k1, k2) / std::max(max_abs(k2), 1e-300));
    }
  }
  return {worst < 1e-10, "max scaled error " + num(worst) + " (tol 1e-10)"};
}

// ---- criterion 2: response scaling identity converges with resolution ----

Outcome response_scaling_convergence() {
  const BasisSpec spec = BasisSpec::defaults();
  // Uniform weights keep every per-order aggregate well away from zero; a
  // random draw can nearly cancel an order's responses across orientations,
  // leaving its relative error dominated by noise instead of resolution.
  CoefficientSet cs = CoefficientSet::zeros(spec);
  for (auto& c : cs.c) c = {1.0, 0.0};
  bool ok = true;
  double worst_ratio = 0.0;
  for (double s : {1.3, 1.5, 2.0}) {
    std::vector<std::vector<double>> errs;
    for (int u : {1, 2, 4})
      errs.push_back(verify_scale_response_detail(blob_pattern, cs, s, 21, u).order_errors);
    for (size_t oi = 0; oi < spec.orders.size(); ++oi) {
      if (!(errs[1][oi] < errs[0][oi])) ok = false;  // x2 strictly beats x1
      const double r1 = errs[1][oi] / errs[0][oi];
      const double r2 = errs[2][oi] / errs[1][oi];
      worst_ratio = std::max(worst_ratio, std::max(r1, r2));
      if (r1 > 1.1 || r2 > 1.1) ok = false;  // monotone within 10% slack
    }
  }
  return {ok, "worst step ratio " + num(worst_ratio) + " (< 1.1)"};
}

// ---- criterion 3: analytic gradients vs central differences ----

struct FdResult {
  double worst = 0.0;
  int probes = 0;
};

FdResult fd_probe(NetworkState& st, const RealGrid& img, int label, int probes, double h,
                  uint64_t probe_seed) {
  const KernelBank bank = KernelBank::build(st.config);
  const ForwardCache cache = forward(st, bank, img);
  std::vector<double> sg;
  softmax_xent(cache.scores, label, &sg);
  const std::vector<double> grad = backward(st, bank, cache, sg);
  const uint64_t sig = route_signature(cache);
  const size_t conv_span = st.conv_dims.back().bias_offset + size_t(st.conv_dims.back().c_out);

  FdResult res;
  Rng rng(probe_seed);
  int attempts = 0;
  while (res.probes < probes && attempts < probes * 50) {
    ++attempts;
    const size_t p = (attempts % 2) ? rng.uniform_int(conv_span)
                                    : rng.uniform_int(st.params.size());
    const double orig = st.params[p];
    st.params[p] = orig + h;
    const ForwardCache cp = forward(st, bank, img);
    const double lp = softmax_xent(cp.scores, label, nullptr);
    st.params[p] = orig - h;
    const ForwardCache cm = forward(st, bank, img);
    const double lm = softmax_xent(cm.scores, label, nullptr);
    st.params[p] = orig;
    if (route_signature(cp) != sig || route_signature(cm) != sig) continue;  // tie: redraw
    const double fd = (lp - lm) / (2.0 * h);
    res.worst = std::max(
        res.worst, std::abs(fd - grad[p]) / std::max(1e-6, std::abs(fd) + std::abs(grad[p])));
    ++res.probes;
  }
  return res;
}

RealGrid random_image(int rows, int cols, uint64_t seed) {
  Rng rng(seed);
  RealGrid g(rows, cols);
  for (size_t i = 0; i < g.count(); ++i) g[i] = rng.uniform01();
  return g;
}

Outcome gradient_correctness() {
  NetworkConfig one;
  one.channel_widths = {2};
  one.scales = {1.0, 1.3, 1.7};
  one.base_kernel_size = 5;
  one.spatial_pool_sizes = {2};
  one.upsample_factor = 1;
  one.dense_widths = {3};
  one.seed = 7;
  NetworkState st1 = NetworkState::init(one, 9, 9);
  const FdResult r1 = fd_probe(st1, random_image(9, 9, 42), 1, 20, 1e-5, 31);

  NetworkConfig three = one;
  three.channel_widths = {2, 2, 2};
  three.scales = {1.0, 1.55, 2.4};
  three.spatial_pool_sizes = {2, 2, 2};
  three.dense_widths = {4, 3};
  three.seed = 3;
  NetworkState st3 = NetworkState::init(three, 12, 12);
  const FdResult r3 = fd_probe(st3, random_image(12, 12, 45), 1, 15, 1e-5, 32);

  const bool ok = r1.probes == 20 && r1.worst < 1e-4 && r3.probes == 15 && r3.worst < 1e-3;
  return {ok, "single layer " + num(r1.worst) + " (tol 1e-4, " + std::to_string(r1.probes) +
                  " probes), three layers " + num(r3.worst) + " (tol 1e-3, " +
                  std::to_string(r3.probes) + " probes)"};
}

// ---- criterion 4: basis family structure ----

Outcome basis_structure() {
  const BasisSpec spec = BasisSpec::defaults();
  const int size = 15, c = size / 2;
  const SampledBasis basis = build_basis(spec, size);
  if (spec.filter_count() != 24 || int(basis.filters.size()) != 24)
    return {false, "expected 24 filters, got " + std::to_string(basis.filters.size())};

  double worst_com = 0.0;
  for (const ComplexGrid& f : basis.filters) {
    if (f(c, c) != std::complex<double>(1.0, 0.0)) return {false, "center pixel is not 1+0i"};
    double mass = 0.0, mr = 0.0, mc = 0.0;
    for (int r = 0; r < size; ++r)
      for (int col = 0; col < size; ++col) {
        const double m = std::abs(f(r, col));
        mass += m;
        mr += m * r;
        mc += m * col;
        if (std::abs(f(r, col)) != std::abs(f(size - 1 - r, size - 1 - col)))
          return {false, "magnitude point symmetry violated"};
      }
    worst_com = std::max({worst_com, std::abs(mr / mass - c), std::abs(mc / mass - c)});
  }
  return {worst_com < 1e-9,
          "24 filters, centre exact, |centre of mass drift| " + num(worst_com) + " px (tol 1e-9)"};
}

// ---- criteria 5 and 6: desk-scale training runs ----

NetworkConfig desk_config() {
  NetworkConfig cfg;
  cfg.channel_widths = {8, 12, 16};
  cfg.scales = default_scale_grid();
  cfg.base_kernel_size = 7;
  cfg.spatial_pool_sizes = {2, 2, 8};
  cfg.upsample_factor = 2;
  cfg.dense_widths = {256, 10};
  cfg.learning_rate = 0.003;
  cfg.momentum = 0.9;
  cfg.epochs = 10;
  cfg.batch_size = 8;
  cfg.clip_norm = 5.0;
  cfg.seed = 1;
  return cfg;
}

double train_and_score(const NetworkConfig& cfg, const LabeledImageSet& train_set,
                       const LabeledImageSet& test_set, const char* tag) {
  NetworkState st = NetworkState::init(cfg, train_set.height, train_set.width, &train_set.images);
  std::printf("    [%s] %zu params, %d epochs on %zu samples\n", tag, st.param_count(),
              cfg.epochs, train_set.count());
  std::fflush(stdout);
  const auto metrics = train(st, train_set, nullptr);
  const double err = evaluate(st, test_set);
  std::printf("    [%s] final train acc %.4f, held-out error %.4f\n", tag,
              metrics.back().train_acc, err);
  std::fflush(stdout);
  return err;
}

Outcome scaled_digit_training() {
  const LabeledImageSet digits = make_digits(3000, 101);
  const LabeledImageSet scaled = make_scaled(digits, 0.3, 1.0, 102);
  const auto parts = split(scaled, 1000, 0, 2000, 103);

  const NetworkConfig ss = desk_config();
  NetworkConfig control = ss;
  control.kernel_mode = KernelMode::plain;
  control.scales = {1.0};
  control.freeze_conv = true;  // control keeps its initial kernels; only the head trains

  const double ss_err = train_and_score(ss, parts[0], parts[2], "steered");
  const double ctrl_err = train_and_score(control, parts[0], parts[2], "control");
  const bool ok = ss_err <= 0.15 && ss_err < ctrl_err;
  return {ok, "steered error " + num(ss_err) + " (need <= 0.15), plain control " + num(ctrl_err) +
                  " (need steered < control)"};
}

Outcome pair_training() {
  const LabeledImageSet digits = make_digits(2000, 201);
  const LabeledImageSet pairs = make_local2(digits, 202);
  const auto parts = split(pairs, 1000, 0, 1000, 203);

  const double err = train_and_score(desk_config(), parts[0], parts[2], "pairs");
  return {err <= 0.20, "held-out error " + num(err) + " (need <= 0.20)"};
}

// ---- criterion 7: winning scale index tracks content scale ----

// Coefficients phase-matched to one image: with c_j the conjugate of the
// centre response at the middle grid scale, every orientation adds in phase
// there, so the winning scale follows the content when it is rescaled.
CoefficientSet matched_coeffs(const RealGrid& img, const BasisSpec& spec, double t, int base) {
  const int n = steered_odd_size(base, t);
  const SampledBasis basis = build_basis(spec, n);
  const int pr = n / 2, cr = (img.rows() - 1) / 2, cc = (img.cols() - 1) / 2;
  CoefficientSet cs = CoefficientSet::zeros(spec);
  for (int j = 0; j < spec.orientation_count(); ++j) {
    const ComplexGrid& f = basis.at(0, j);
    std::complex<double> resp = 0.0;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        const int ir = cr + r - pr, ic = cc + c - pr;
        if (ir < 0 || ir >= img.rows() || ic < 0 || ic >= img.cols()) continue;
        resp += img(ir, ic) * f(r, c);
      }
    cs.at(0, j) = std::conj(order_phase(spec.orders[0], spec.m, t) * resp);
  }
  return cs;
}

Outcome argmax_equivariance() {
  BasisSpec spec = BasisSpec::defaults();
  spec.orders = {2.0};  // single-order set keeps the phase matching clean

  const std::vector<double> grid = default_scale_grid();
  const int base = 27, canvas = 41, mid = 2;
  auto blob = [&](double sigma) {
    RealGrid g(canvas, canvas);
    for (int r = 0; r < canvas; ++r)
      for (int c = 0; c < canvas; ++c) {
        const double x = c - canvas / 2, y = canvas / 2 - r;
        g(r, c) = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
      }
    return g;
  };
  auto center_argmax = [&](const RealGrid& img, const CoefficientSet& cs) {
    const RealGrid up = upsample(img, 2);
    const ScalePyramidResponse r = scale_invariant_forward({up}, {cs}, grid, base);
    const int p = (up.rows() - 1) / 2;
    return r.argmax_scale(p, p);
  };

  Rng rng(7);
  int hits = 0;
  const int cases = 20;
  for (int i = 0; i < cases; ++i) {
    const double sigma = rng.uniform(2.0, 3.0);
    const int delta = (i % 2) ? 1 : -1;
    const double factor = grid[mid + delta] / grid[mid];
    const RealGrid img = blob(sigma);
    const CoefficientSet cs = matched_coeffs(upsample(img, 2), spec, grid[mid], base);
    const int i0 = center_argmax(img, cs);
    const int i1 = center_argmax(blob(sigma * factor), cs);
    if (i1 - i0 == delta) ++hits;
  }
  return {hits >= 18, std::to_string(hits) + "/" + std::to_string(cases) +
                          " index shifts matched (need >= 18)"};
}

// ---- criterion 8: CLI-level determinism ----

int run_cli(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " >> " + (g_work / "cli.log").string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  const std::vector<char> ba((std::istreambuf_iterator<char>(fa)), {});
  const std::vector<char> bb((std::istreambuf_iterator<char>(fb)), {});
  return !ba.empty() && ba == bb;
}

Outcome cli_determinism() {
  if (g_cli.empty()) return {false, "no --cli path provided"};
  const fs::path w = g_work;

  // dataset synthesis twice with one seed
  if (run_cli("synth-data --kind digits --count 120 --seed 3 --out " + (w / "src").string()) != 0)
    return {false, "synth-data (digits) failed"};
  for (const char* d : {"l2a", "l2b"})
    if (run_cli("synth-data --kind local2 --in " + (w / "src").string() + " --seed 7 --out " +
                (w / d).string()) != 0)
      return {false, "synth-data (local2) failed"};
  const bool synth_ok = same_bytes(w / "l2a" / "images-idx3-ubyte", w / "l2b" / "images-idx3-ubyte") &&
                        same_bytes(w / "l2a" / "labels-idx1-ubyte", w / "l2b" / "labels-idx1-ubyte");

  // training twice from one config and data directory
  NetworkConfig tiny;
  tiny.channel_widths = {2};
  tiny.scales = {1.0, 1.4};
  tiny.base_kernel_size = 5;
  tiny.spatial_pool_sizes = {4};
  tiny.upsample_factor = 1;
  tiny.dense_widths = {10};
  tiny.learning_rate = 0.01;
  tiny.epochs = 2;
  tiny.batch_size = 8;
  tiny.seed = 5;
  std::ofstream(w / "tiny.cfg") << tiny.serialize();
  if (run_cli("synth-data --kind digits --count 60 --seed 4 --split 40,10,10 --out " +
              (w / "d60").string()) != 0)
    return {false, "synth-data (split) failed"};
  for (const char* t : {"t1", "t2"})
    if (run_cli("train --config " + (w / "tiny.cfg").string() + " --data " + (w / "d60").string() +
                " --out " + (w / t).string() + ".ckpt --metrics " + (w / t).string() + ".csv") != 0)
      return {false, "train run failed"};
  const bool train_ok = same_bytes(w / "t1.csv", w / "t2.csv");
  const bool ckpt_ok = same_bytes(w / "t1.ckpt", w / "t2.ckpt");

  return {synth_ok && train_ok,
          std::string("synth bytes ") + (synth_ok ? "identical" : "DIFFER") + ", metrics " +
              (train_ok ? "identical" : "DIFFER") + ", checkpoints " +
              (ckpt_ok ? "identical" : "differ")};
}

// ---- criterion 9: IDX export-then-parse is exact ----

Outcome idx_round_trip() {
  const LabeledImageSet digits = make_digits(50, 301);
  const std::vector<LabeledImageSet> sets{make_scaled(digits, 0.3, 1.0, 302),
                                          make_local2(digits, 303)};
  for (size_t k = 0; k < sets.size(); ++k) {
    const fs::path ip = g_work / ("rt" + std::to_string(k) + "-images");
    const fs::path lp = g_work / ("rt" + std::to_string(k) + "-labels");
    save_idx(sets[k], ip.string(), lp.string());
    const LabeledImageSet back = load_idx(ip.string(), lp.string());
    if (back.count() != sets[k].count() || back.labels != sets[k].labels)
      return {false, "metadata mismatch after reload"};
    for (size_t i = 0; i < back.count(); ++i)
      for (size_t p = 0; p < back.images[i].count(); ++p)
        if (back.images[i][p] != sets[k].images[i][p])
          return {false, "pixel mismatch after reload"};
  }
  return {true, "scaled and pair sets reload bit-exact"};
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli") g_cli = argv[++i];
    else if (a == "--workdir") g_work = argv[++i];
  }
  if (g_work.empty()) g_work = fs::temp_directory_path() / "scalesteer_acceptance";
  fs::create_directories(g_work);

  struct Entry {
    const char* name;
    Outcome (*fn)();
    double budget_s;  // 0 = no stated budget
  };
  const Entry entries[] = {
      {"steered kernels match analytic oracle", steering_identity, 10},
      {"response scaling identity converges", response_scaling_convergence, 60},
      {"gradients match finite differences", gradient_correctness, 300},
      {"basis family structure", basis_structure, 0},
      {"scaled-digit training beats plain control", scaled_digit_training, 1800},
      {"digit-pair training", pair_training, 1800},
      {"winning scale index tracks content scale", argmax_equivariance, 0},
      {"CLI determinism", cli_determinism, 0},
      {"IDX export/parse round trip", idx_round_trip, 0},
  };

  bool all_ok = true;
  for (size_t i = 0; i < std::size(entries); ++i) {
    std::printf("criterion %zu: %s\n", i + 1, entries[i].name);
    std::fflush(stdout);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = entries[i].fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (entries[i].budget_s > 0 && secs > entries[i].budget_s) {
      o.pass = false;
      o.detail += " [over " + num(entries[i].budget_s) + " s budget]";
    }
    std::printf("criterion %zu: %s  (%.1f s)  %s\n", i + 1, o.pass ? "PASS" : "FAIL", secs,
                o.detail.c_str());
    std::fflush(stdout);
    all_ok = all_ok && o.pass;
  }
  std::printf("%s\n", all_ok ? "all acceptance criteria passed" : "ACCEPTANCE FAILURES PRESENT");
  return all_ok ? 0 : 1;
}
