// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "prn/cli/commands.hpp"
#include "prn/runtime.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace prn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) { return cli::fixed(v, digits); }

fs::path work_root() {
  static const fs::path root = fs::absolute("acceptance_work");
  return root;
}

cli::Context ctx_in(const fs::path& out) {
  cli::Context c;
  c.out_root = out;
  c.force = true;
  return c;
}

RunConfig config(const std::string& text) { return RunConfig::parse(text); }

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::vector<std::string> failed;
  double worst = 0;
  for (const auto& op : grad_check_ops()) {
    const auto r = grad_check(op, {}, 1e-3);
    worst = std::max(worst, r.max_rel_error);
    if (!r.pass) failed.push_back(op);
  }
  const double t = seconds_since(t0);
  std::ostringstream d;
  d << grad_check_ops().size() << " ops, worst rel error " << std::scientific << worst << ", " << std::fixed
    << std::setprecision(1) << t << " s";
  for (const auto& f : failed) d << ", failed " << f;
  return {failed.empty() && t < 120.0, d.str()};
}

Outcome mmcu_oracle_equivalence() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  std::size_t mismatches = 0, rule_violations = 0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t w = 1 + rng.below(128), h = 1 + rng.below(128);
    const auto frame = test::random_plane(w, h, rng);
    const auto forest = test::random_forest(w, h, rng, rng.uniform(0.1, 0.95));
    const auto a = generate_mmcu(frame, forest);
    const auto b = mmcu_oracle(frame, forest);
    for (std::size_t l = 0; l < 4; ++l)
      if (a.level[l].data != b.level[l].data) ++mismatches;
    Image<int> leaf_depth(w, h, 0);
    for (const auto& r : forest.roots)
      for_each_leaf(r, [&](const CUNode& n) {
        const CuRect c = clip_cu(n, w, h);
        for (std::size_t y = c.y0; y < c.y1; ++y)
          for (std::size_t x = c.x0; x < c.x1; ++x) leaf_depth(x, y) = n.depth;
      });
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t l = 1; l < 4; ++l)
          if (leaf_depth(x, y) < static_cast<int>(l) && a.level[l](x, y) != a.level[l - 1](x, y)) ++rule_violations;
  }
  const double t = seconds_since(t0);
  return {mismatches == 0 && rule_violations == 0 && t < 30.0,
          "50 cases, " + std::to_string(mismatches) + " map mismatches, " + std::to_string(rule_violations) +
              " leaf-rule violations, " + fmt(t, 2) + " s"};
}

Outcome partition_round_trip() {
  Rng rng(77);
  std::size_t bad = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t w = 1 + rng.below(300), h = 1 + rng.below(300);
    const std::string text = serialize_partition(test::random_forest(w, h, rng, rng.uniform(0.0, 1.0)));
    if (serialize_partition(parse_partition(text)) != text) ++bad;
  }
  auto error_of = [](const std::string& text) -> std::string {
    try {
      parse_partition(text);
    } catch (const ParseError& e) {
      return "line " + std::to_string(e.line()) + ": " + e.what();
    }
    return "";
  };
  const std::string unterminated = error_of("64 64\n1000\n");
  const std::string deep = error_of("64 64\n1111\n");
  const std::string count = error_of("128 64\n0\n");
  const bool errors_ok = unterminated.find("unterminated quadtree") != std::string::npos &&
                         deep.find("depth 3") != std::string::npos &&
                         count.find("CTU count mismatch") != std::string::npos;
  return {bad == 0 && errors_ok, "100 round trips, " + std::to_string(bad) + " differ; malformed classes " +
                                     (errors_ok ? "reported" : "NOT reported")};
}

// Composite Simpson quadrature over the fitted cubics, independent of the
// closed-form integral in the library.
double simpson_bd(const std::vector<RDPoint>& anchor, const std::vector<RDPoint>& test) {
  const Cubic pa = fit_log_rate(anchor), pt = fit_log_rate(test);
  const PsnrInterval iv = psnr_overlap(anchor, test);
  const int n = 20000;
  const double h = (iv.hi - iv.lo) / n;
  double s = 0;
  for (int i = 0; i <= n; ++i) {
    const double x = iv.lo + h * i;
    s += ((i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2)) * (pt(x) - pa(x));
  }
  return (std::pow(10.0, s * h / 3.0 / (iv.hi - iv.lo)) - 1.0) * 100.0;
}

Outcome bd_rate_correctness() {
  Rng rng(5150);
  auto curve = [&] {
    std::vector<RDPoint> c;
    double rate = rng.uniform(300, 3000), q = rng.uniform(27, 33);
    for (int i = 0; i < 4; ++i) {
      c.push_back({rate, q});
      rate *= rng.uniform(1.4, 2.1);
      q += rng.uniform(1.2, 3.0);
    }
    return c;
  };
  const auto base = curve();
  auto doubled = base;
  for (auto& p : doubled) p.rate *= 2;
  const double same = bd_rate(base, base), dbl = bd_rate(base, doubled);
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    const auto a = curve();
    auto t = a;
    for (auto& p : t) {
      p.rate *= rng.uniform(0.7, 1.2);
      p.psnr += rng.uniform(-0.4, 0.4);
    }
    worst = std::max(worst, std::abs(bd_rate(a, t) - simpson_bd(a, t)));
  }
  std::ostringstream d;
  d << "identical " << same << "%, doubled " << std::setprecision(12) << dbl << "%, worst quadrature gap "
    << std::scientific << worst;
  return {std::abs(same) < 1e-9 && std::abs(dbl - 100.0) <= 1e-6 && worst < 1e-9, d.str()};
}

PrbWidths small_widths() { return PrbWidths{4, 8, 4, 1}; }

ModelSet small_models() {
  PrcnnConfig c;
  c.widths = small_widths();
  c.blocks = 1;
  c.fusion_after = {1, 1, 1, 1};
  PrrnnConfig r;
  r.widths = small_widths();
  r.blocks_per_state = 1;
  r.unfold = 2;
  ModelSet m;
  m.prcnn.emplace(37, Prcnn<float>(c, 11));
  m.prrnn.emplace(37, Prrnn<float>(r, 12));
  return m;
}

// Declared RA order: per GOP of 4, [base, base+4, base+2, base+1, base+3]
// restricted to in-range POCs not yet listed.
std::vector<int> ra_order_oracle(int n) {
  std::vector<int> out;
  std::set<int> seen;
  for (int base = 0; base < n; base += 4)
    for (int d : {0, 4, 2, 1, 3})
      if (base + d < n && seen.insert(base + d).second) out.push_back(base + d);
  return out;
}

Outcome pipeline_conformance() {
  const fs::path out = work_root() / "c5";
  const auto deg = cli::run_command("degrade", config("frames=8\nwidth=64\nheight=64\nqps=37\nmode=LDP\nseed=5\n"),
                                    ctx_in(out));
  auto frames = cli::load_sequence(deg.run_dir / "qp37" / "manifest.txt");
  std::vector<std::string> problems;
  for (const auto& f : frames) {
    const bool h = f.slice == SliceType::I || f.poc % 4 == 0;
    if ((f.klass() == FrameClass::H) != h) problems.push_back("class of " + std::to_string(f.poc));
  }
  const auto ldp = coding_order(CodingMode::LDP, 8, 4);
  for (int i = 0; i < 8; ++i)
    if (ldp[static_cast<std::size_t>(i)] != i) problems.push_back("LDP order");
  try {
    const auto r = run_inloop(frames, CodingConfig{CodingMode::LDP, 4, true}, small_models());
    std::vector<int> seen;
    for (const auto& inv : r.invocations) {
      seen.push_back(inv.poc);
      const bool h = inv.poc % 4 == 0;
      if (inv.network != (h ? "prcnn" : "prrnn")) problems.push_back("network for " + std::to_string(inv.poc));
      if (!h && (inv.neighbour != inv.poc - 1 || inv.peak != (inv.poc / 4) * 4)) {
        problems.push_back("references of " + std::to_string(inv.poc));
      }
    }
    if (seen != ldp) problems.push_back("invocation order");
  } catch (const InvariantError& e) {
    problems.push_back(std::string("LDP causality: ") + e.what());
  }
  for (int n = 1; n <= 17; ++n)
    if (coding_order(CodingMode::RA, static_cast<std::size_t>(n), 4) != ra_order_oracle(n)) {
      problems.push_back("RA order for " + std::to_string(n));
    }
  try {
    auto ra_frames = cli::load_sequence(deg.run_dir / "qp37" / "manifest.txt");
    for (auto& f : ra_frames) f.slice = slice_type_for(CodingMode::RA, f.poc);
    run_inloop(ra_frames, CodingConfig{CodingMode::RA, 4, true}, small_models());
  } catch (const InvariantError& e) {
    problems.push_back(std::string("RA causality: ") + e.what());
  }
  std::string d = "8-frame LDP manifest, RA orders for 1..17 frames";
  for (const auto& p : problems) d += "; mismatch: " + p;
  return {problems.empty(), d};
}

Outcome rdo_dominance() {
  Rng rng(606);
  std::size_t violations = 0;
  const int trials = 200;
  for (int i = 0; i < trials; ++i) {
    const std::size_t w = 1 + rng.below(200), h = 1 + rng.below(200);
    const auto orig = test::random_plane(w, h, rng);
    auto unf = orig, filt = orig;
    const int a = static_cast<int>(rng.below(12)), b = static_cast<int>(rng.below(12));
    for (auto& v : unf.data) v = static_cast<std::uint8_t>(std::clamp<int>(v + rng.range(-a, a), 0, 255));
    for (auto& v : filt.data) v = static_cast<std::uint8_t>(std::clamp<int>(v + rng.range(-b, b), 0, 255));
    const auto r = ctu_rdo(orig, unf, filt);
    double oracle = 0;
    for (std::size_t y0 = 0; y0 < h; y0 += 64)
      for (std::size_t x0 = 0; x0 < w; x0 += 64) {
        double su = 0, sf = 0;
        for (std::size_t y = y0; y < std::min(h, y0 + 64); ++y)
          for (std::size_t x = x0; x < std::min(w, x0 + 64); ++x) {
            const double du = double(orig(x, y)) - unf(x, y), df = double(orig(x, y)) - filt(x, y);
            su += du * du;
            sf += df * df;
          }
        oracle += std::min(su, sf);
      }
    if (sse(orig, r.merged) != oracle) ++violations;
  }
  return {violations == 0, std::to_string(trials) + " random triples, " + std::to_string(violations) + " differ from oracle"};
}

const char* kToyModel =
    "features=16\nmemory=32\ngrowth=8\nlayers=2\nblocks=4\nfusion=1,1,3,3\ninput_skip=1\n";

Outcome toy_improvement() {
  const auto t0 = Clock::now();
  const fs::path out = work_root() / "c7";
  const auto train_deg = cli::run_command(
      "degrade", config("frames=20\nscenes=20\nwidth=128\nheight=128\nqps=37\nmode=AI\nseed=100\n"), ctx_in(out));
  const auto held_deg = cli::run_command(
      "degrade", config("frames=10\nwidth=128\nheight=128\nqps=37\nmode=AI\nseed=999\n"), ctx_in(out));
  const auto trained = cli::run_command(
      "train",
      config("train_manifests=" + (train_deg.run_dir / "qp37" / "manifest.txt").string() +
             "\nmodel=prcnn\nqps=37\n" + kToyModel + "steps=500\nbatch=4\npatch=64\npatches=200\nlr=1e-4\nseed=1\n"),
      ctx_in(out));
  const auto filtered = cli::run_command(
      "filter",
      config("manifests=" + (held_deg.run_dir / "qp37" / "manifest.txt").string() + "\ncheckpoints=" +
             trained.run_dir.string() + "\nmode=AI\n"),
      ctx_in(out));
  const auto before = parse_rd_curve(read_text_file(filtered.run_dir / "rd_before.txt"));
  const auto after = parse_rd_curve(read_text_file(filtered.run_dir / "rd_after.txt"));
  const double gain = after.at(0).psnr - before.at(0).psnr;
  const double t = seconds_since(t0);
  return {gain > 0 && t < 900.0, "mean PSNR " + fmt(before[0].psnr) + " -> " + fmt(after[0].psnr) + " dB (gain " +
                                     fmt(gain) + " dB), " + fmt(t, 1) + " s"};
}

// L-frames of translating sequences at qp 37. Both models see the same
// frames: PR-CNN the current frame with its MM-CU maps, PR-RNN the current
// frame plus its two references.
void l_frame_samples(std::uint64_t seed, std::vector<CnnSample>& cnn, std::vector<RnnSample>& rnn) {
  const auto seq = synthetic_sequence(96, 96, 8, seed);
  std::vector<LumaPlane> deg;
  for (const auto& f : seq) deg.push_back(degrade(f, QPConfig(37)).recon);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (t % 4 == 0) continue;
    cnn.push_back(make_cnn_sample(deg[t], build_partition(seq[t]), seq[t]));
    rnn.push_back(make_rnn_sample(deg[t], deg[t - 1], deg[t - t % 4], seq[t]));
  }
}

Outcome temporal_efficacy() {
  const auto t0 = Clock::now();
  std::vector<CnnSample> cnn_train, cnn_test;
  std::vector<RnnSample> rnn_train, rnn_test;
  for (std::uint64_t s = 0; s < 12; ++s) l_frame_samples(200 + s, cnn_train, rnn_train);
  for (std::uint64_t s = 0; s < 3; ++s) l_frame_samples(900 + s, cnn_test, rnn_test);

  TrainSchedule sched;
  sched.steps = 500;
  sched.batch = 4;
  sched.patch = 64;
  sched.lr = 5e-4;
  sched.seed = 8;

  PrcnnConfig cc;
  cc.widths = kToyWidths;
  cc.blocks = 4;
  cc.fusion_after = {1, 1, 3, 3};
  cc.input_skip = true;
  Prcnn<float> cnn(cc, 1);
  TrainState<float> cs;
  train(cnn, cs, cnn_train, sched);

  PrrnnConfig rc;
  rc.widths = kToyWidths;
  rc.unfold = 2;
  rc.input_skip = true;
  Prrnn<float> rnn(rc, 1);
  TrainState<float> rs;
  train(rnn, rs, rnn_train, sched);

  const double id = identity_mse(cnn_test);
  const double e_cnn = evaluate_mse<float>(cnn, cnn_test);
  const double e_rnn = evaluate_mse<float>(rnn, rnn_test);
  std::ostringstream d;
  d << "held-out L-frame MSE: unfiltered " << std::setprecision(6) << id << ", PR-CNN " << e_cnn << ", PR-RNN "
    << e_rnn << ", " << std::fixed << std::setprecision(1) << seconds_since(t0) << " s";
  return {e_rnn < e_cnn, d.str()};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Every regular file under `a` has a byte-identical twin under `b`.
bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    if (!fs::exists(b / rel) || read_text_file(e.path()) != read_text_file(b / rel)) {
      why = rel.string() + " differs";
      return false;
    }
    ++n;
  }
  why = std::to_string(n) + " files";
  return n > 0;
}

Outcome determinism_and_resume() {
  const fs::path data = work_root() / "c9-data";
  const auto deg = cli::run_command("degrade", config("frames=6\nwidth=64\nheight=64\nqps=37\nmode=LDP\nseed=21\n"),
                                    ctx_in(data));
  const std::string manifest = (deg.run_dir / "qp37" / "manifest.txt").string();
  const std::string model = "features=8\nmemory=8\ngrowth=4\nlayers=2\nblocks=2\nfusion=1,1,2,2\nrnn_blocks=1\n"
                            "unfold=2\nbatch=2\npatch=32\nlr=5e-4\nseed=4\nqps=37\ntrain_manifests=" + manifest + "\n";

  // Two full repeats into separate roots. The filter run directories are
  // named after checkpoint paths, which differ per root, so trees are
  // compared per run rather than per root.
  std::vector<std::vector<fs::path>> runs(2);
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path root = work_root() / ("c9-rep" + std::to_string(rep));
    const auto cnn = cli::run_command("train", config(model + "model=prcnn\nsteps=6\n"), ctx_in(root));
    const auto rnn = cli::run_command("train", config(model + "model=prrnn\nsteps=6\n"), ctx_in(root));
    const auto filt = cli::run_command("filter", config("manifests=" + manifest + "\ncheckpoints=" +
                                                        cnn.run_dir.string() + "," + rnn.run_dir.string() +
                                                        "\nmode=LDP\n"),
                                       ctx_in(root));
    runs[static_cast<std::size_t>(rep)] = {cnn.run_dir, rnn.run_dir, filt.run_dir / "seq0"};
  }
  bool repeat_ok = true;
  std::string detail = "repeat:";
  for (std::size_t k = 0; k < runs[0].size(); ++k) {
    std::string why;
    const bool same = same_tree(runs[0][k], runs[1][k], why) && same_tree(runs[1][k], runs[0][k], why);
    repeat_ok = repeat_ok && same;
    const char* label = k == 0 ? "prcnn" : (k == 1 ? "prrnn" : "filter");
    detail += std::string(" ") + label + (same ? " identical (" : " DIFFERS (") + why + ")";
  }
  const std::vector<fs::path> full_dirs{runs[0][0], runs[0][1]};

  // Interrupted at step 3, resumed to 6, against the uninterrupted runs above.
  bool resume_ok = true;
  for (const std::string name : {"prcnn", "prrnn"}) {
    const fs::path root = work_root() / ("c9-resume-" + name);
    const auto half = cli::run_command("train", config(model + "model=" + name + "\nsteps=3\n"), ctx_in(root));
    const auto rest = cli::run_command(
        "train", config(model + "model=" + name + "\nsteps=6\nfinetune_from=" + half.run_dir.string() + "\n"),
        ctx_in(root));
    const fs::path full_dir = full_dirs[name == "prcnn" ? 0 : 1];
    const auto full_log = lines_of(read_text_file(full_dir / "loss_qp37.txt"));
    auto split_log = lines_of(read_text_file(half.run_dir / "loss_qp37.txt"));
    for (const auto& l : lines_of(read_text_file(rest.run_dir / "loss_qp37.txt"))) split_log.push_back(l);
    const bool same_ckpt = read_text_file(full_dir / (name + "_qp37.prnw")) ==
                           read_text_file(rest.run_dir / (name + "_qp37.prnw"));
    const bool same_log = full_log == split_log && full_log.size() == 6;
    resume_ok = resume_ok && same_ckpt && same_log;
    detail += "; " + name + " resume " + (same_ckpt && same_log ? "matches" : "DIFFERS");
  }
  return {repeat_ok && resume_ok, detail};
}

}  // namespace

int main() {
  tune_allocator();
  std::error_code ec;
  fs::remove_all(work_root(), ec);
  fs::create_directories(work_root());

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"MM-CU oracle equivalence", mmcu_oracle_equivalence},
      {"partition round-trip", partition_round_trip},
      {"BD-rate correctness", bd_rate_correctness},
      {"pipeline conformance", pipeline_conformance},
      {"RDO dominance", rdo_dominance},
      {"end-to-end toy improvement", toy_improvement},
      {"temporal-path efficacy", temporal_efficacy},
      {"determinism and resume", determinism_and_resume},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << (i + 1) << " (" << criteria[i].first
              << "): " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size()
            << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
