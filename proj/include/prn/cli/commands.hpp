#pragma once

// The six commands of the prn tool. Each takes a loaded RunConfig plus the
// global flags and writes everything under one run directory named after a
// hash of (command, configuration, seed).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "prn/codec_sim.hpp"
#include "prn/config.hpp"
#include "prn/errors.hpp"
#include "prn/gradcheck.hpp"
#include "prn/image.hpp"
#include "prn/nn/prcnn.hpp"
#include "prn/nn/prrnn.hpp"
#include "prn/nn/train.hpp"
#include "prn/params.hpp"
#include "prn/pipeline.hpp"
#include "prn/sideinfo.hpp"

namespace prn::cli {

namespace fs = std::filesystem;

struct Context {
  fs::path out_root = "runs";
  std::optional<std::uint64_t> seed;  // --seed; overrides the config's seed key
  bool force = false;
  std::ostream* log = nullptr;  // progress lines; null = silent
};

struct Result {
  fs::path run_dir;
  std::string summary;
};

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t effective_seed(const RunConfig& cfg, const Context& ctx) {
  if (ctx.seed) return *ctx.seed;
  return static_cast<std::uint64_t>(cfg.integer("seed", 1));
}

inline std::string run_fingerprint(const std::string& command, const RunConfig& cfg, std::uint64_t seed) {
  return "command=" + command + "\n" + cfg.canonical() + "effective_seed=" + std::to_string(seed) + "\n";
}

// Creates <out>/<command>-<hash>. An existing directory is an error unless
// --force was given, in which case it is replaced.
inline fs::path make_run_dir(const std::string& command, const RunConfig& cfg, const Context& ctx) {
  const std::string fp = run_fingerprint(command, cfg, effective_seed(cfg, ctx));
  std::ostringstream name;
  name << command << '-' << std::hex << std::setw(16) << std::setfill('0') << fnv1a(fp);
  const fs::path dir = ctx.out_root / name.str();
  if (fs::exists(dir)) {
    if (!ctx.force) throw IoError("run directory " + dir.string() + " already exists (use --force to replace it)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  write_text_file(dir / "run.txt", fp);
  return dir;
}

inline void progress(const Context& ctx, const std::string& line) {
  if (ctx.log) *ctx.log << line << '\n' << std::flush;
}

inline std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// Sequence manifests: "poc sliceType qp framePath partitionPath [originalPath]"

struct ManifestEntry {
  int poc = 0;
  SliceType slice = SliceType::I;
  int qp = 0;
  fs::path frame;
  fs::path partition;
  std::optional<fs::path> original;
};

inline std::vector<ManifestEntry> parse_manifest(const std::string& text, const fs::path& base_dir) {
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string slice, frame, part, orig, extra;
    if (!(ls >> e.poc >> slice >> e.qp >> frame >> part)) {
      throw ParseError(n, "expected \"poc sliceType qp framePath partitionPath [originalPath]\"");
    }
    if (e.poc < 0) throw ParseError(n, "negative POC");
    if (e.qp < 0 || e.qp > 51) throw ParseError(n, "QP outside 0..51");
    try {
      e.slice = parse_slice_type(slice);
    } catch (const ParseError&) {
      throw ParseError(n, "unknown slice type '" + slice + "'");
    }
    e.frame = resolve(frame);
    e.partition = resolve(part);
    if (ls >> orig) e.original = resolve(orig);
    if (ls >> extra) throw ParseError(n, "too many fields");
    out.push_back(std::move(e));
  }
  if (out.empty()) throw ParseError(n, "manifest lists no frames");
  return out;
}

inline std::string format_manifest_line(const ManifestEntry& e, const fs::path& base_dir) {
  auto rel = [&](const fs::path& p) { return fs::relative(p, base_dir).generic_string(); };
  std::string s = std::to_string(e.poc) + " " + slice_char(e.slice) + " " + std::to_string(e.qp) + " " + rel(e.frame) +
                  " " + rel(e.partition);
  if (e.original) s += " " + rel(*e.original);
  return s + "\n";
}

// Loads a manifest into FrameRecords indexed by POC 0..N-1. Originals are
// required: every consumer measures PSNR or trains against them.
inline std::vector<FrameRecord> load_sequence(const fs::path& manifest) {
  const auto entries = parse_manifest(read_text_file(manifest), manifest.parent_path());
  std::vector<FrameRecord> frames(entries.size());
  std::vector<bool> seen(entries.size(), false);
  for (const auto& e : entries) {
    if (static_cast<std::size_t>(e.poc) >= entries.size() || seen[static_cast<std::size_t>(e.poc)]) {
      throw ArgumentError(manifest.string() + ": POCs must be 0..N-1 without repeats");
    }
    if (!e.original) throw ArgumentError(manifest.string() + ": POC " + std::to_string(e.poc) + " has no original frame");
    seen[static_cast<std::size_t>(e.poc)] = true;
    FrameRecord& f = frames[static_cast<std::size_t>(e.poc)];
    f.poc = e.poc;
    f.slice = e.slice;
    f.qp = e.qp;
    f.degraded = read_pgm(e.frame);
    f.raw = read_pgm(*e.original);
    f.partition = parse_partition(read_text_file(e.partition));
    if (!f.raw.same_size(f.degraded) || f.partition.width != f.degraded.width ||
        f.partition.height != f.degraded.height) {
      throw DimensionError(manifest.string() + ": POC " + std::to_string(e.poc) +
                           ": frame, original and partition sizes disagree");
    }
  }
  return frames;
}

// ---------------------------------------------------------------------------
// degrade

inline std::vector<LumaPlane> load_source(const RunConfig& cfg, std::uint64_t seed) {
  const std::string source = cfg.str("source", "synthetic");
  if (source == "synthetic") {
    // 'scenes' splits the frames into that many independent translating
    // scenes of consecutive POCs.
    const std::size_t frames = cfg.count("frames", 8);
    const std::size_t scenes = std::min(cfg.count("scenes", 1), frames);
    std::vector<LumaPlane> out;
    for (std::size_t s = 0; s < scenes; ++s) {
      const std::size_t begin = s * frames / scenes, end = (s + 1) * frames / scenes;
      const std::uint64_t scene_seed = s == 0 ? seed : derive_seed(seed, 0x5CE0 + s);
      for (auto& f : synthetic_sequence(cfg.count("width", 128), cfg.count("height", 128), end - begin, scene_seed)) {
        out.push_back(std::move(f));
      }
    }
    return out;
  }
  if (!cfg.has("input")) throw ConfigError("source=" + source + " needs 'input'");
  if (source == "raw") {
    if (!cfg.has("width") || !cfg.has("height")) throw ConfigError("raw input needs 'width' and 'height'");
    return read_raw_luma(cfg.path("input"), cfg.count("width", 0), cfg.count("height", 0), cfg.count("frames", 1),
                         cfg.flag("chroma420", false));
  }
  std::vector<LumaPlane> frames;
  for (const auto& p : cfg.paths("input")) frames.push_back(read_pgm(p));
  for (const auto& f : frames) {
    if (!f.same_size(frames[0])) throw DimensionError("input frames differ in size");
  }
  return frames;
}

// Codes every frame at every configured QP. Layout of the run directory:
//   orig/frame_<poc>.pgm
//   qp<QP>/rec_<poc>.pgm, part_<poc>.txt, manifest.txt, rates.txt
//   rd_anchor.txt  (mean bits per frame, mean PSNR; one line per QP)
inline Result cmd_degrade(const RunConfig& cfg, const Context& ctx) {
  const std::uint64_t seed = effective_seed(cfg, ctx);
  const auto frames = load_source(cfg, seed);
  const CodingMode mode = parse_mode(cfg.str("mode", "LDP"));
  const auto thresholds = cfg.thresholds();
  const auto qps = cfg.qps();
  const fs::path dir = make_run_dir("degrade", cfg, ctx);

  fs::create_directories(dir / "orig");
  std::vector<PartitionForest> forests;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    write_pgm(dir / "orig" / ("frame_" + std::to_string(i) + ".pgm"), frames[i]);
    forests.push_back(build_partition(frames[i], thresholds));
  }
  std::vector<RDPoint> anchor;
  std::ostringstream summary;
  for (int q : qps) {
    const fs::path qdir = dir / ("qp" + std::to_string(q));
    fs::create_directories(qdir);
    std::string manifest, rates = "# poc bits\n";
    double bits = 0, quality = 0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const int poc = static_cast<int>(i);
      const DegradeResult d = degrade(frames[i], QPConfig(q));
      ManifestEntry e{poc, slice_type_for(mode, poc), q, qdir / ("rec_" + std::to_string(i) + ".pgm"),
                      qdir / ("part_" + std::to_string(i) + ".txt"), dir / "orig" / ("frame_" + std::to_string(i) + ".pgm")};
      write_pgm(e.frame, d.recon);
      write_text_file(e.partition, serialize_partition(forests[i]));
      manifest += format_manifest_line(e, qdir);
      rates += std::to_string(poc) + " " + std::to_string(d.bits) + "\n";
      bits += static_cast<double>(d.bits);
      quality += psnr(frames[i], d.recon);
    }
    write_text_file(qdir / "manifest.txt", manifest);
    write_text_file(qdir / "rates.txt", rates);
    const double n = static_cast<double>(frames.size());
    anchor.push_back({bits / n, quality / n});
    summary << "qp " << q << ": " << fixed(bits / n, 1) << " bits/frame, " << fixed(quality / n) << " dB\n";
    progress(ctx, "degrade qp " + std::to_string(q) + " done");
  }
  write_text_file(dir / "rd_anchor.txt", format_rd_curve(anchor));
  return {dir, summary.str()};
}

// ---------------------------------------------------------------------------
// train

inline std::string checkpoint_name(const std::string& model, int qp) {
  return model + "_qp" + std::to_string(qp) + ".prnw";
}

// Frames of all training manifests, grouped by QP.
inline std::map<int, std::vector<std::vector<FrameRecord>>> load_training_sequences(const RunConfig& cfg) {
  if (!cfg.has("train_manifests")) throw ConfigError("train needs 'train_manifests'");
  std::map<int, std::vector<std::vector<FrameRecord>>> by_qp;
  for (const auto& m : cfg.paths("train_manifests")) {
    auto seq = load_sequence(m);
    std::set<int> qps;
    for (const auto& f : seq) qps.insert(f.qp);
    if (qps.size() != 1) throw ArgumentError(m.string() + ": training manifests must use a single QP");
    by_qp[*qps.begin()].push_back(std::move(seq));
  }
  return by_qp;
}

inline std::vector<CnnSample> cnn_samples(const std::vector<std::vector<FrameRecord>>& seqs) {
  std::vector<CnnSample> out;
  for (const auto& seq : seqs)
    for (const auto& f : seq) out.push_back(make_cnn_sample(f.degraded, f.partition, f.raw));
  return out;
}

// L-frames with their references in the configured coding order. The
// unfiltered reconstructions of the references stand in for filtered ones.
inline std::vector<RnnSample> rnn_samples(const std::vector<std::vector<FrameRecord>>& seqs, const CodingConfig& cc) {
  std::vector<RnnSample> out;
  for (const auto& seq : seqs) {
    std::set<int> decoded;
    for (int poc : coding_order(cc.mode, seq.size(), cc.gop)) {
      const FrameRecord& f = seq[static_cast<std::size_t>(poc)];
      if (cc.mode != CodingMode::AI && f.klass() == FrameClass::L) {
        const int n = nearest_reference(poc, decoded);
        const int q = peak_quality_poc(poc, cc.gop);
        out.push_back(make_rnn_sample(f.degraded, seq[static_cast<std::size_t>(n)].degraded,
                                      seq[static_cast<std::size_t>(q)].degraded, f.raw));
      }
      decoded.insert(poc);
    }
  }
  return out;
}

// Fixed pool of `count` patch-sized crops drawn once from the samples.
template <typename Sample>
std::vector<Sample> extract_patches(const std::vector<Sample>& data, std::size_t count, std::size_t patch,
                                    std::uint64_t seed) {
  if (data.empty()) throw TrainingError("empty training dataset");
  Rng rng(derive_seed(seed, 0xDA7A));
  auto cut = [&](const Image<float>& p, std::size_t x, std::size_t y) { return crop(p, x, y, patch, patch); };
  std::vector<Sample> out;
  for (std::size_t i = 0; i < count; ++i) {
    const Sample& s = data[rng.below(data.size())];
    const Image<float>& ref = sample_plane(s);
    if (ref.width < patch || ref.height < patch) throw TrainingError("frames are smaller than the patch size");
    const std::size_t x = rng.below(ref.width - patch + 1);
    const std::size_t y = rng.below(ref.height - patch + 1);
    Sample p;
    p.target = cut(s.target, x, y);
    if constexpr (std::is_same_v<Sample, CnnSample>) {
      p.input = cut(s.input, x, y);
      for (std::size_t l = 0; l < p.maps.size(); ++l) p.maps[l] = cut(s.maps[l], x, y);
    } else {
      for (std::size_t k = 0; k < p.frames.size(); ++k) p.frames[k] = cut(s.frames[k], x, y);
    }
    out.push_back(std::move(p));
  }
  return out;
}

// Resolves finetune_from for one QP: a directory holds per-QP checkpoints, a
// file is used for every QP.
inline std::optional<fs::path> finetune_source(const RunConfig& cfg, const std::string& model, int qp) {
  if (!cfg.has("finetune_from")) return std::nullopt;
  const fs::path p = cfg.path("finetune_from");
  if (fs::is_directory(p)) return p / checkpoint_name(model, qp);
  return p;
}

template <typename Model, typename Sample>
std::string train_one(const RunConfig& cfg, const Context& ctx, const fs::path& dir, const std::string& name, int qp,
                      const auto& model_cfg,
                      std::vector<Sample> data) {
  const std::uint64_t seed = effective_seed(cfg, ctx);
  TrainSchedule sched = cfg.schedule(derive_seed(seed, static_cast<std::uint64_t>(qp)));
  if (data.empty()) throw TrainingError("no training samples for qp " + std::to_string(qp));
  if (cfg.count("patches", 0) > 0) data = extract_patches(data, cfg.count("patches", 0), sched.patch, sched.seed);

  Model model(model_cfg, derive_seed(seed, 0x1A17 + static_cast<std::uint64_t>(qp)));
  TrainState<float> st;
  if (auto src = finetune_source(cfg, name, qp)) {
    const auto arrays = read_checkpoint(*src);
    model = Model::from_arrays(arrays);
    st = restore_train_state<float>(model, arrays);
    progress(ctx, "finetuning " + name + " qp " + std::to_string(qp) + " from " + src->string() + " at step " +
                      std::to_string(st.step));
  }
  const std::uint64_t first = st.step;
  train(model, st, data, sched, [&](const LossRecord& r) {
    if (r.step % 50 == 0 || r.step == first + 1) {
      progress(ctx, name + " qp " + std::to_string(qp) + " step " + std::to_string(r.step) + " loss " + fixed(r.loss, 7));
    }
  });
  write_checkpoint(dir / checkpoint_name(name, qp), training_checkpoint(model, st));
  write_text_file(dir / ("loss_qp" + std::to_string(qp) + ".txt"), format_loss_log(st.log));
  std::ostringstream s;
  s << name << " qp " << qp << ": " << data.size() << " samples, steps " << first << ".." << st.step;
  if (!st.log.empty()) s << ", loss " << std::setprecision(6) << st.log.front().loss << " -> " << st.log.back().loss;
  s << "\n";
  return s.str();
}

inline Result cmd_train(const RunConfig& cfg, const Context& ctx) {
  const std::string model = cfg.str("model", "prcnn");
  const auto by_qp = load_training_sequences(cfg);
  const CodingConfig cc = cfg.coding();
  const fs::path dir = make_run_dir("train", cfg, ctx);
  std::string summary;
  for (int qp : cfg.qps()) {
    auto it = by_qp.find(qp);
    if (it == by_qp.end()) throw TrainingError("no training manifest at qp " + std::to_string(qp));
    if (model == "prcnn") {
      summary += train_one<Prcnn<float>>(cfg, ctx, dir, model, qp, cfg.prcnn(), cnn_samples(it->second));
    } else {
      summary += train_one<Prrnn<float>>(cfg, ctx, dir, model, qp, cfg.prrnn(), rnn_samples(it->second, cc));
    }
  }
  return {dir, summary};
}

// ---------------------------------------------------------------------------
// filter

inline ModelSet load_models(const std::vector<fs::path>& sources) {
  ModelSet set;
  const std::regex pattern(R"((prcnn|prrnn)_qp(\d+)\.prnw)");
  auto load_file = [&](const fs::path& p) {
    std::smatch m;
    const std::string fname = p.filename().string();
    if (!std::regex_match(fname, m, pattern)) {
      throw ArgumentError(p.string() + ": checkpoint names must look like prcnn_qp37.prnw or prrnn_qp37.prnw");
    }
    const int qp = std::stoi(m[2].str());
    const auto arrays = read_checkpoint(p);
    if (m[1] == "prcnn") {
      set.prcnn.insert_or_assign(qp, Prcnn<float>::from_arrays(arrays));
    } else {
      set.prrnn.insert_or_assign(qp, Prrnn<float>::from_arrays(arrays));
    }
  };
  for (const auto& src : sources) {
    if (!fs::exists(src)) throw IoError("missing checkpoint " + src.string());
    if (fs::is_directory(src)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(src)) {
        if (std::regex_match(e.path().filename().string(), pattern)) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) load_file(f);
    } else {
      load_file(src);
    }
  }
  return set;
}

// Mean bits per frame from the rates.txt written by degrade next to the
// manifest, when present.
inline std::optional<double> manifest_rate(const fs::path& manifest) {
  const fs::path rates = manifest.parent_path() / "rates.txt";
  if (!fs::exists(rates)) return std::nullopt;
  std::istringstream in(read_text_file(rates));
  std::string line;
  double total = 0;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int poc;
    double bits;
    if (!(ls >> poc >> bits)) throw ParseError(n + 1, rates.string() + ": expected \"poc bits\"");
    total += bits;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return total / static_cast<double>(n);
}

// Runs the in-loop filter over every manifest. Per sequence i the run
// directory gets seq<i>/ with filtered_<poc>.pgm, rdo_<poc>.txt, report.txt
// and invocations.txt. rd_before.txt / rd_after.txt collect one "rate psnr"
// point per manifest when rate logs are available.
inline Result cmd_filter(const RunConfig& cfg, const Context& ctx) {
  if (!cfg.has("manifests")) throw ConfigError("filter needs 'manifests'");
  if (!cfg.has("checkpoints")) throw ConfigError("filter needs 'checkpoints'");
  const CodingConfig cc = cfg.coding();
  std::vector<std::vector<FrameRecord>> sequences;
  for (const auto& m : cfg.paths("manifests")) sequences.push_back(load_sequence(m));
  const ModelSet models = load_models(cfg.paths("checkpoints"));
  for (const auto& seq : sequences) {
    for (const auto& f : seq) {
      const bool cnn = cc.mode == CodingMode::AI || f.klass() == FrameClass::H;
      if (cnn && models.prcnn.empty()) throw StateError("missing checkpoint: no PR-CNN model for qp " + std::to_string(f.qp));
      if (!cnn && models.prrnn.empty()) throw StateError("missing checkpoint: no PR-RNN model for qp " + std::to_string(f.qp));
    }
  }
  const fs::path dir = make_run_dir("filter", cfg, ctx);
  std::vector<RDPoint> before, after;
  std::ostringstream summary;
  const auto manifests = cfg.paths("manifests");
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    auto& seq = sequences[i];
    const InloopResult r = run_inloop(seq, cc, models);
    const fs::path sdir = dir / ("seq" + std::to_string(i));
    fs::create_directories(sdir);
    for (const auto& f : seq) write_pgm(sdir / ("filtered_" + std::to_string(f.poc) + ".pgm"), *f.filtered);
    for (const auto& [poc, mask] : r.masks) write_text_file(sdir / ("rdo_" + std::to_string(poc) + ".txt"), mask.str());
    write_text_file(sdir / "report.txt", format_report(r));
    write_text_file(sdir / "invocations.txt", format_invocations(r));
    if (auto rate = manifest_rate(manifests[i])) {
      before.push_back({*rate, r.mean_before()});
      after.push_back({*rate, r.mean_after()});
    }
    summary << "seq" << i << " (" << manifests[i].string() << "): " << fixed(r.mean_before()) << " dB -> "
            << fixed(r.mean_after()) << " dB\n";
    progress(ctx, "filtered " + manifests[i].string());
  }
  if (!before.empty()) {
    write_text_file(dir / "rd_before.txt", format_rd_curve(before));
    write_text_file(dir / "rd_after.txt", format_rd_curve(after));
  }
  return {dir, summary.str()};
}

// ---------------------------------------------------------------------------
// eval

struct BdRow {
  std::string klass;
  std::string name;
  double bd = 0;
};

inline std::string format_bd_table(const std::vector<BdRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(8) << "Class" << std::setw(24) << "Sequence" << "BD-rate(%)\n";
  double sum = 0;
  for (const auto& r : rows) {
    out << std::left << std::setw(8) << r.klass << std::setw(24) << r.name << fixed(r.bd, 2) << "\n";
    sum += r.bd;
  }
  out << std::left << std::setw(8) << "" << std::setw(24) << "Average"
      << fixed(rows.empty() ? 0.0 : sum / static_cast<double>(rows.size()), 2) << "\n";
  return out.str();
}

// BD-rate of each test curve against its anchor. Writes bdrate.txt and, per
// sequence, plot_<name>_anchor.dat / plot_<name>_test.dat ("rate psnr").
inline Result cmd_eval(const RunConfig& cfg, const Context& ctx) {
  if (!cfg.has("anchor_curves")) throw ConfigError("eval needs 'anchor_curves' and 'test_curves'");
  const auto anchors = cfg.paths("anchor_curves");
  const auto tests = cfg.paths("test_curves");
  auto names = cfg.list("names");
  auto classes = cfg.list("classes");
  std::vector<BdRow> rows;
  std::vector<std::pair<std::vector<RDPoint>, std::vector<RDPoint>>> curves;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    auto a = parse_rd_curve(read_text_file(anchors[i]));
    auto t = parse_rd_curve(read_text_file(tests[i]));
    BdRow row;
    row.name = i < names.size() ? names[i] : tests[i].stem().string();
    row.klass = i < classes.size() ? classes[i] : "-";
    row.bd = bd_rate(a, t);
    rows.push_back(row);
    curves.emplace_back(std::move(a), std::move(t));
  }
  const fs::path dir = make_run_dir("eval", cfg, ctx);
  const std::string table = format_bd_table(rows);
  write_text_file(dir / "bdrate.txt", table);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string stem = "plot_" + std::to_string(i) + "_" + rows[i].name;
    write_text_file(dir / (stem + "_anchor.dat"), "# rate psnr\n" + format_rd_curve(curves[i].first));
    write_text_file(dir / (stem + "_test.dat"), "# rate psnr\n" + format_rd_curve(curves[i].second));
  }
  return {dir, table};
}

// ---------------------------------------------------------------------------
// gradcheck

inline Result cmd_gradcheck(const RunConfig& cfg, const Context& ctx) {
  const double tol = cfg.real("tolerance", 1e-3);
  std::vector<std::string> ops = cfg.has("ops") ? cfg.list("ops") : grad_check_ops();
  GradCheckOptions opt;
  opt.seed = effective_seed(cfg, ctx);
  const fs::path dir = make_run_dir("gradcheck", cfg, ctx);
  std::ostringstream out;
  out << "# op max_rel_error checked result\n";
  std::vector<std::string> failed;
  for (const auto& op : ops) {
    const GradCheckReport r = grad_check(op, {}, tol, opt);
    out << op << ' ' << std::scientific << std::setprecision(3) << r.max_rel_error << ' ' << r.checked << ' '
        << (r.pass ? "PASS" : "FAIL") << '\n';
    if (!r.pass) failed.push_back(op);
    progress(ctx, op + (r.pass ? " ok" : " FAILED"));
  }
  write_text_file(dir / "gradcheck.txt", out.str());
  if (!failed.empty()) {
    std::string list;
    for (const auto& f : failed) list += (list.empty() ? "" : ",") + f;
    throw InvariantError("gradient check failed for " + list + " (see " + (dir / "gradcheck.txt").string() + ")");
  }
  return {dir, out.str()};
}

// ---------------------------------------------------------------------------
// mmcu

// MM-CU maps for one PGM frame: partition from 'partition' when given,
// otherwise from the variance rule. Writes partition.txt and
// mmcu_level<l>.pgm (means rounded to 8 bits).
inline Result cmd_mmcu(const RunConfig& cfg, const Context& ctx) {
  if (!cfg.has("frame")) throw ConfigError("mmcu needs 'frame'");
  const LumaPlane frame = read_pgm(cfg.path("frame"));
  const PartitionForest forest = cfg.has("partition") ? parse_partition(read_text_file(cfg.path("partition")))
                                                      : build_partition(frame, cfg.thresholds());
  const MMCUMaps maps = generate_mmcu(frame, forest);
  const fs::path dir = make_run_dir("mmcu", cfg, ctx);
  write_text_file(dir / "partition.txt", serialize_partition(forest));
  for (std::size_t l = 0; l < maps.level.size(); ++l) {
    LumaPlane p(frame.width, frame.height);
    for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] = clamp_round_u8(maps.level[l].data[i]);
    write_pgm(dir / ("mmcu_level" + std::to_string(l) + ".pgm"), p);
  }
  std::size_t leaves = 0;
  for (const auto& r : forest.roots) for_each_leaf(r, [&](const CUNode&) { ++leaves; });
  return {dir, std::to_string(forest.roots.size()) + " CTUs, " + std::to_string(leaves) + " leaf CUs\n"};
}

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"degrade", "train", "filter", "eval", "gradcheck", "mmcu"};
  return names;
}

inline Result run_command(const std::string& name, const RunConfig& cfg, const Context& ctx) {
  if (name == "degrade") return cmd_degrade(cfg, ctx);
  if (name == "train") return cmd_train(cfg, ctx);
  if (name == "filter") return cmd_filter(cfg, ctx);
  if (name == "eval") return cmd_eval(cfg, ctx);
  if (name == "gradcheck") return cmd_gradcheck(cfg, ctx);
  if (name == "mmcu") return cmd_mmcu(cfg, ctx);
  throw ArgumentError("unknown command '" + name + "'");
}

}  // namespace prn::cli
