#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tcam/attention.hpp"
#include "tcam/config.hpp"
#include "tcam/data.hpp"
#include "tcam/frame_cnn.hpp"
#include "tcam/losses.hpp"
#include "tcam/optim.hpp"
#include "tcam/rng.hpp"
#include "tcam/synth.hpp"

namespace tcam {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::filesystem::path dataset;
  std::filesystem::path out_dir;
  int epochs = 1400;
  SgdConfig sgd;
  double margin = 2.0;
  std::size_t clip_length = 16;
  std::uint64_t seed = 0;
  std::size_t repetitions = 10;
  int checkpoint_every = 100;
  bool single_shot = false;
  CnnConfig cnn;
  AttentionConfig attention;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    sgd.validate();
    if (!(margin > 0)) throw ConfigError("margin must be positive");
    if (clip_length < 1) throw ConfigError("clip_length must be >= 1");
    if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    attention.validate();
  }

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k{
        "dataset", "out_dir", "epochs", "lr", "lr_schedule", "margin", "clip_length", "seed",
        "repetitions", "checkpoint_every", "mode", "attention", "w1", "w2"};
    return k;
  }

  /// Reads a flat config. Keys of a synthetic-dataset config are tolerated
  /// so one file can describe both the data and the run.
  static TrainConfig from(const KeyValueConfig& kv) {
    std::set<std::string> known = keys();
    known.insert(SynthConfig::keys().begin(), SynthConfig::keys().end());
    kv.check_keys(known);
    TrainConfig c;
    c.dataset = kv.get_path("dataset");
    c.out_dir = kv.get_path("out_dir", "run");
    c.epochs = static_cast<int>(kv.get_int("epochs", c.epochs));
    c.sgd.learning_rate = kv.get_double("lr", c.sgd.learning_rate);
    c.sgd.schedule = kv.get_schedule("lr_schedule");
    c.margin = kv.get_double("margin", c.margin);
    c.clip_length = static_cast<std::size_t>(kv.get_int("clip_length", 16));
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
    c.repetitions = static_cast<std::size_t>(kv.get_int("repetitions", 10));
    c.checkpoint_every = static_cast<int>(kv.get_int("checkpoint_every", 100));
    const auto mode = kv.get_string("mode", "multi-shot");
    if (mode != "multi-shot" && mode != "single-shot") {
      throw ConfigError("mode must be multi-shot or single-shot, got " + mode);
    }
    c.single_shot = mode == "single-shot";
    const auto att = kv.get_string("attention", "sigmoid");
    if (att != "sigmoid" && att != "softmax") {
      throw ConfigError("attention must be sigmoid or softmax, got " + att);
    }
    c.attention.softmax = att == "softmax";
    c.attention.w1 = static_cast<std::size_t>(kv.get_int("w1", 5));
    c.attention.w2 = static_cast<std::size_t>(kv.get_int("w2", 5));
    c.validate();
    return c;
  }

  std::string echo() const {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "dataset=" << dataset.string() << "\nepochs=" << epochs << "\nlr=" << sgd.learning_rate
        << "\nlr_schedule=";
    for (std::size_t i = 0; i < sgd.schedule.size(); ++i) {
      out << (i ? "," : "") << sgd.schedule[i].first << ":" << sgd.schedule[i].second;
    }
    out << "\nmargin=" << margin << "\nclip_length=" << clip_length << "\nseed=" << seed
        << "\nattention=" << (attention.softmax ? "softmax" : "sigmoid") << "\nw1=" << attention.w1
        << "\nw2=" << attention.w2 << "\n";
    return out.str();
  }
};

/// Mean loss components over one epoch.
struct EpochLoss {
  int epoch = 0;  // 1-based
  double hinge = 0, id1 = 0, id2 = 0, total = 0;
};

inline void write_loss_csv(const std::filesystem::path& path, const std::vector<EpochLoss>& log) {
  std::ofstream out(path);
  if (!out) throw TrainingError("cannot write " + path.string());
  out << "epoch,hinge,id1,id2,total\n" << std::setprecision(17);
  for (const auto& e : log) {
    out << e.epoch << ',' << e.hinge << ',' << e.id1 << ',' << e.id2 << ',' << e.total << '\n';
  }
}

// ---------------------------------------------------------------- checkpoint

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'T', 'C', 'A', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw CheckpointError("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, std::size_t limit = std::size_t{1} << 26) {
  const auto n = get_u64(in);
  if (n > limit) throw CheckpointError("corrupt checkpoint string length");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw CheckpointError("truncated checkpoint");
  return s;
}

inline std::string model_spec(const Model& m) {
  std::ostringstream out;
  const auto& c = m.cnn.config;
  const auto& a = m.attention.config;
  out << "classes=" << m.classifier.num_classes() << "\ncnn.channels=" << c.channels[0] << ","
      << c.channels[1] << "," << c.channels[2] << "," << c.channels[3] << "\ncnn.height=" << c.height
      << "\ncnn.width=" << c.width << "\ncnn.kernel=" << c.kernel << "\ncnn.padding=" << c.padding
      << "\ncnn.pool=" << c.pool << "\ncnn.feature_dim=" << c.feature_dim << "\natt.w1=" << a.w1
      << "\natt.w2=" << a.w2 << "\natt.hidden1=" << a.hidden1 << "\natt.hidden2=" << a.hidden2
      << "\natt.context=" << a.context << "\natt.softmax=" << (a.softmax ? 1 : 0) << "\n";
  return out.str();
}

inline Model model_from_spec(const std::string& text) {
  const auto kv = KeyValueConfig::parse(text, "checkpoint model spec");
  CnnConfig c;
  std::istringstream ch(kv.require_string("cnn.channels"));
  std::string item;
  for (std::size_t i = 0; i < 4; ++i) {
    if (!std::getline(ch, item, ',')) throw CheckpointError("bad cnn.channels in checkpoint");
    c.channels[i] = std::stoul(item);
  }
  c.height = static_cast<std::size_t>(kv.get_int("cnn.height", 0));
  c.width = static_cast<std::size_t>(kv.get_int("cnn.width", 0));
  c.kernel = static_cast<std::size_t>(kv.get_int("cnn.kernel", 0));
  c.padding = static_cast<std::size_t>(kv.get_int("cnn.padding", 0));
  c.pool = static_cast<std::size_t>(kv.get_int("cnn.pool", 0));
  c.feature_dim = static_cast<std::size_t>(kv.get_int("cnn.feature_dim", 0));
  AttentionConfig a;
  a.w1 = static_cast<std::size_t>(kv.get_int("att.w1", 0));
  a.w2 = static_cast<std::size_t>(kv.get_int("att.w2", 0));
  a.hidden1 = static_cast<std::size_t>(kv.get_int("att.hidden1", 0));
  a.hidden2 = static_cast<std::size_t>(kv.get_int("att.hidden2", 0));
  a.context = static_cast<std::size_t>(kv.get_int("att.context", 0));
  a.softmax = kv.get_bool("att.softmax", false);
  return init_model(0, static_cast<std::size_t>(kv.get_int("classes", 0)), c, a);
}

}  // namespace detail

struct Checkpoint {
  Model model;
  std::string train_config;  // TrainConfig::echo() of the producing run
  std::uint64_t epoch = 0;   // completed epochs
  std::string rng_state;
};

/// Layout (little-endian): magic "TCAMCKPT", u32 version, model spec,
/// config echo, u64 epoch, RNG state, u64 tensor count, then per tensor:
/// name, u64 rank, u64 dims, f64 payload (row-major).
inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ostringstream out(std::ios::binary);
  out.write(detail::kCheckpointMagic, 8);
  const std::uint32_t version = detail::kCheckpointVersion;
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>(version >> (8 * i)));
  detail::put_string(out, detail::model_spec(ckpt.model));
  detail::put_string(out, ckpt.train_config);
  detail::put_u64(out, ckpt.epoch);
  detail::put_string(out, ckpt.rng_state);
  const auto named = ckpt.model.named();
  detail::put_u64(out, named.size());
  for (const auto& nt : named) {
    detail::put_string(out, nt.name);
    detail::put_u64(out, nt.tensor.rank());
    for (auto d : nt.tensor.shape()) detail::put_u64(out, d);
    for (double v : nt.tensor.data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw CheckpointError("cannot write checkpoint " + path.string());
    const auto bytes = out.str();
    file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!file) throw CheckpointError("cannot write checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
  }
  unsigned char vb[4];
  if (!in.read(reinterpret_cast<char*>(vb), 4)) throw CheckpointError("truncated checkpoint");
  const std::uint32_t version = vb[0] | (vb[1] << 8) | (vb[2] << 16) | (static_cast<std::uint32_t>(vb[3]) << 24);
  if (version != detail::kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.model = detail::model_from_spec(detail::get_string(in));
  ckpt.train_config = detail::get_string(in);
  ckpt.epoch = detail::get_u64(in);
  ckpt.rng_state = detail::get_string(in);
  auto named = ckpt.model.named();
  const auto count = detail::get_u64(in);
  if (count != named.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                          std::to_string(named.size()));
  }
  for (auto& nt : named) {
    const auto name = detail::get_string(in, 256);
    if (name != nt.name) throw CheckpointError("checkpoint tensor '" + name + "', expected '" + nt.name + "'");
    const auto rank = detail::get_u64(in);
    if (rank > 8) throw CheckpointError("corrupt rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = detail::get_u64(in);
    if (shape != nt.tensor.shape()) {
      throw CheckpointError("shape mismatch for " + name + ": " + shape_string(shape) + " vs " +
                            shape_string(nt.tensor.shape()));
    }
    for (auto& v : nt.tensor.data_mut()) v = std::bit_cast<double>(detail::get_u64(in));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes in checkpoint");
  return ckpt;
}

// ------------------------------------------------------------------ training

struct TrainResult {
  Model model;
  std::vector<EpochLoss> log;
};

/// Per-epoch hook, called after the epoch's mean loss is known.
using EpochCallback = std::function<void(const EpochLoss&)>;

/// SGD with batch size 1 over 2*P alternating positive/negative pairs per
/// epoch. Writes `loss.csv` and `checkpoint.bin` into `out_dir` when it is
/// not empty.
inline TrainResult train(const TrainConfig& cfg, const PreparedDataset& train_set,
                         std::uint64_t seed, const std::filesystem::path& out_dir = {},
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_set.size() < 2) throw TrainingError("training needs at least 2 identities");
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  TrainResult result{init_model(seed, train_set.size(), cfg.cnn, cfg.attention), {}};
  auto params = result.model.parameters();
  Rng rng(mix_seed(seed, 0x7A));
  const std::size_t pairs = 2 * train_set.size();

  auto write_checkpoint = [&](int completed) {
    if (out_dir.empty()) return;
    save_checkpoint(out_dir / "checkpoint.bin",
                    {result.model, cfg.echo(), static_cast<std::uint64_t>(completed), rng_state(rng)});
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLoss mean{epoch + 1};
    for (std::size_t k = 0; k < pairs; ++k) {
      auto pair = sample_pair(train_set, cfg.clip_length, rng, k);
      Tape tape;
      auto br = combined_loss(tape, result.model, pair.seq1, pair.label1, pair.seq2, pair.label2, cfg.margin);
      if (!std::isfinite(br.total.item())) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch + 1 << ", pair " << k << " (hinge=" << br.hinge.item()
            << ", id1=" << br.id1.item() << ", id2=" << br.id2.item() << ", labels " << pair.label1
            << "/" << pair.label2 << ")";
        throw TrainingError(msg.str());
      }
      tape.backward(br.total);
      sgd_step(params, cfg.sgd, epoch);
      mean.hinge += br.hinge.item();
      mean.id1 += br.id1.item();
      mean.id2 += br.id2.item();
      mean.total += br.total.item();
    }
    const double inv = 1.0 / static_cast<double>(pairs);
    mean.hinge *= inv;
    mean.id1 *= inv;
    mean.id2 *= inv;
    mean.total *= inv;
    result.log.push_back(mean);
    if (on_epoch) on_epoch(mean);
    if ((epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs) write_checkpoint(epoch + 1);
  }
  if (!out_dir.empty()) {
    write_loss_csv(out_dir / "loss.csv", result.log);
    write_checkpoint(cfg.epochs);
  }
  return result;
}

// ---------------------------------------------------------------- evaluation

/// Descriptor of a whole track (multi-shot: every frame, no sampling).
inline std::vector<double> track_descriptor(const Model& model, const Tensor& track) {
  NoGrad no_grad;
  Tape tape;
  auto d = video_descriptor(tape, model.cnn, model.attention, track);
  return {d.f.data().begin(), d.f.data().end()};
}

struct Gallery {
  std::vector<std::vector<double>> probes;   // camera A, one per person
  std::vector<std::vector<double>> gallery;  // camera B, one per person
};

inline Gallery extract_gallery(const Model& model, const PreparedDataset& data) {
  Gallery g;
  for (std::size_t p = 0; p < data.size(); ++p) {
    g.probes.push_back(track_descriptor(model, data.cam_a[p]));
    g.gallery.push_back(track_descriptor(model, data.cam_b[p]));
  }
  return g;
}

inline std::vector<std::vector<double>> distance_matrix(const Gallery& g) {
  std::vector<std::vector<double>> d(g.probes.size(), std::vector<double>(g.gallery.size()));
  for (std::size_t i = 0; i < g.probes.size(); ++i) {
    for (std::size_t j = 0; j < g.gallery.size(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < g.probes[i].size(); ++k) {
        const double diff = g.probes[i][k] - g.gallery[j][k];
        s += diff * diff;
      }
      d[i][j] = std::sqrt(s);
    }
  }
  return d;
}

/// curve[k-1] = fraction of probes whose true match (the diagonal) ranks
/// within the top k; ties go to the lower gallery index.
inline std::vector<double> cmc_from_distances(const std::vector<std::vector<double>>& d) {
  const std::size_t p = d.size();
  if (p == 0) throw std::invalid_argument("cmc: empty distance matrix");
  for (const auto& row : d) {
    if (row.size() != p) throw std::invalid_argument("cmc: distance matrix must be square");
    for (double v : row) {
      if (!std::isfinite(v)) throw std::invalid_argument("cmc: non-finite distance");
    }
  }
  std::vector<std::size_t> hits(p, 0);
  for (std::size_t i = 0; i < p; ++i) {
    std::size_t rank = 0;
    for (std::size_t j = 0; j < p; ++j) {
      if (d[i][j] < d[i][i] || (d[i][j] == d[i][i] && j < i)) ++rank;
    }
    ++hits[rank];
  }
  std::vector<double> curve(p);
  std::size_t cumulative = 0;
  for (std::size_t k = 0; k < p; ++k) {
    cumulative += hits[k];
    curve[k] = static_cast<double>(cumulative) / static_cast<double>(p);
  }
  return curve;
}

struct EvalReport {
  std::vector<std::vector<double>> curves;  // one per repetition
  std::vector<double> mean;

  std::size_t repetitions() const { return curves.size(); }
  double rank(std::size_t k) const { return mean.at(k - 1); }

  void finalize() {
    mean.assign(curves.empty() ? 0 : curves.front().size(), 0.0);
    for (const auto& c : curves) {
      if (c.size() != mean.size()) throw std::logic_error("repetitions have different gallery sizes");
      for (std::size_t k = 0; k < c.size(); ++k) mean[k] += c[k];
    }
    for (auto& v : mean) v /= static_cast<double>(curves.size());
  }
};

inline void write_cmc_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw TrainingError("cannot write " + path.string());
  out << "rank";
  for (std::size_t r = 0; r < report.repetitions(); ++r) out << ",rep" << r;
  out << ",mean\n" << std::setprecision(17);
  for (std::size_t k = 0; k < report.mean.size(); ++k) {
    out << k + 1;
    for (const auto& c : report.curves) out << ',' << c[k];
    out << ',' << report.mean[k] << '\n';
  }
}

inline std::vector<double> evaluate_model(const Model& model, const PreparedDataset& test) {
  return cmc_from_distances(distance_matrix(extract_gallery(model, test)));
}

/// Full protocol outcome: trained curves plus the same splits scored by the
/// untrained initialization.
struct ProtocolResult {
  EvalReport trained;
  EvalReport untrained;
  std::vector<Model> models;
  std::vector<DatasetIndex> test_splits;
};

/// For each repetition r: split with seed+r, train on one half from a fresh
/// initialization (seed+r), evaluate on the other half. Repetition outputs go
/// to `<out_dir>/rep<r>/`.
inline ProtocolResult evaluate_retrain(const TrainConfig& cfg, const PreparedDataset& all,
                                       const EpochCallback& on_epoch = {}) {
  ProtocolResult out;
  for (std::size_t r = 0; r < cfg.repetitions; ++r) {
    const auto [train_idx, test_idx] = split_half(all.index, cfg.seed + r);
    const auto train_set = restrict_to(all, train_idx);
    const auto test_set = restrict_to(all, test_idx);
    const auto rep_dir = cfg.out_dir.empty() ? cfg.out_dir : cfg.out_dir / ("rep" + std::to_string(r));
    const auto initial = init_model(cfg.seed + r, train_set.size(), cfg.cnn, cfg.attention);
    out.untrained.curves.push_back(evaluate_model(initial, test_set));
    auto result = train(cfg, train_set, cfg.seed + r, rep_dir, on_epoch);
    out.trained.curves.push_back(evaluate_model(result.model, test_set));
    out.models.push_back(std::move(result.model));
    out.test_splits.push_back(test_idx);
  }
  out.trained.finalize();
  out.untrained.finalize();
  return out;
}

/// Fixed model; repetitions vary only the test split (seed+r).
inline EvalReport evaluate_checkpoint(const TrainConfig& cfg, const Model& model, const PreparedDataset& all) {
  EvalReport report;
  for (std::size_t r = 0; r < cfg.repetitions; ++r) {
    const auto test_idx = split_half(all.index, cfg.seed + r).second;
    report.curves.push_back(evaluate_model(model, restrict_to(all, test_idx)));
  }
  report.finalize();
  return report;
}

inline void require_multi_shot(const TrainConfig& cfg) {
  if (cfg.single_shot) {
    throw TrainingError(
        "single-shot cross-dataset evaluation is unsupported: the temporal attention model needs "
        "multi-shot tracks");
  }
}

/// Scores models already trained on dataset A (one per repetition) on the
/// test half of dataset B for split seed cfg_b.seed + r.
inline EvalReport cross_evaluate(const std::vector<Model>& models, const TrainConfig& cfg_b,
                                 const PreparedDataset& b) {
  require_multi_shot(cfg_b);
  EvalReport report;
  for (std::size_t r = 0; r < models.size(); ++r) {
    const auto test_idx = split_half(b.index, cfg_b.seed + r).second;
    report.curves.push_back(evaluate_model(models[r], restrict_to(b, test_idx)));
  }
  report.finalize();
  return report;
}

/// Train on half of dataset A, test on half of dataset B, per repetition.
inline EvalReport cross_dataset_eval(const TrainConfig& cfg_a, const PreparedDataset& a,
                                     const TrainConfig& cfg_b, const PreparedDataset& b) {
  require_multi_shot(cfg_a);
  require_multi_shot(cfg_b);
  std::vector<Model> models;
  for (std::size_t r = 0; r < cfg_a.repetitions; ++r) {
    const auto train_idx = split_half(a.index, cfg_a.seed + r).first;
    const auto rep_dir = cfg_a.out_dir.empty() ? cfg_a.out_dir : cfg_a.out_dir / ("cross_rep" + std::to_string(r));
    models.push_back(train(cfg_a, restrict_to(a, train_idx), cfg_a.seed + r, rep_dir).model);
  }
  return cross_evaluate(models, cfg_b, b);
}

// ----------------------------------------------------------------- attention

struct AttentionRow {
  std::size_t frame;
  double alpha;
  double lambda;
};

/// Attention for the first min(n, L) frames of a track (n = 0: all frames).
inline std::vector<AttentionRow> export_attention(const Model& model, const Tensor& track, std::size_t n = 0) {
  const std::size_t len = n == 0 ? track.dim(0) : std::min(n, track.dim(0));
  NoGrad no_grad;
  Tape tape;
  auto feats = forward_video(tape, model.cnn, frame_window(track, 0, len));
  auto att = attention_scores(tape, model.attention, feats);
  std::vector<AttentionRow> rows;
  for (std::size_t i = 0; i < len; ++i) rows.push_back({i, att.alpha[i], att.lambda[i]});
  return rows;
}

inline void write_attention_csv(const std::filesystem::path& path, const std::vector<AttentionRow>& rows) {
  std::ofstream out(path);
  if (!out) throw TrainingError("cannot write " + path.string());
  out << "frame_index,alpha,lambda\n" << std::setprecision(17);
  for (const auto& r : rows) out << r.frame << ',' << r.alpha << ',' << r.lambda << '\n';
}

/// Mean lambda over occluded and over clean frames of every track in `data`.
struct OcclusionAttention {
  double occluded = 0, clean = 0;
  std::size_t occluded_frames = 0, clean_frames = 0;
};

inline OcclusionAttention attention_by_occlusion(const Model& model, const PreparedDataset& data,
                                                 const std::vector<OcclusionRecord>& occlusions) {
  OcclusionAttention out;
  for (std::size_t p = 0; p < data.size(); ++p) {
    for (Camera cam : {Camera::A, Camera::B}) {
      const auto rows = export_attention(model, data.track(p, cam));
      for (const auto& row : rows) {
        const bool occ = std::any_of(occlusions.begin(), occlusions.end(), [&](const OcclusionRecord& o) {
          return o.camera == cam && o.person_id == data.index.persons[p].id && o.frame == row.frame;
        });
        (occ ? out.occluded : out.clean) += row.lambda;
        ++(occ ? out.occluded_frames : out.clean_frames);
      }
    }
  }
  if (out.occluded_frames) out.occluded /= static_cast<double>(out.occluded_frames);
  if (out.clean_frames) out.clean /= static_cast<double>(out.clean_frames);
  return out;
}

}  // namespace tcam
