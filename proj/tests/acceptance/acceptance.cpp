// Acceptance runner: one PASS/FAIL line per criterion, exit status 0 only
// when every criterion passes.
//
//   tcam_acceptance [work_dir] [--only 1,2,...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tcam/gradcheck_suite.hpp"
#include "tcam/preprocessing.hpp"
#include "tcam/synth.hpp"
#include "tcam/train_eval.hpp"

using namespace tcam;
using tcam::testing::max_abs_diff;
using tcam::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// ------------------------------------------------------------------ 1

Outcome gradient_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0;
  std::string worst_name;
  for (const auto& r : run_grad_suite()) {
    if (r.max_error > worst) {
      worst = r.max_error;
      worst_name = r.name;
    }
    o.require(r.max_error < 1e-4, r.name + " rel err " + fmt("%.2e", r.max_error));
  }
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "runtime " + fmt("%.1f s", secs));
  o.note("max rel err " + fmt("%.2e", worst) + " (" + worst_name + "), " + fmt("%.1f s", secs));
  return o;
}

// ------------------------------------------------------------------ 2

Outcome kernel_oracles() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0;
  auto check = [&](const char* name, const std::vector<double>& got, const std::vector<double>& want) {
    if (got.size() != want.size()) {
      o.require(false, std::string(name) + " size");
      return;
    }
    const double d = max_abs_diff(got, want);
    worst = std::max(worst, d);
    o.require(d <= 1e-10, std::string(name) + " diff " + fmt("%.2e", d));
  };
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(mix_seed(s, 0xACC));
    Tape tape;
    {
      const std::size_t c = 1 + uniform_index(rng, 5), h = 6 + uniform_index(rng, 10), w = 6 + uniform_index(rng, 10);
      const std::size_t co = 1 + uniform_index(rng, 4), kh = 1 + 2 * uniform_index(rng, 3), kw = 1 + 2 * uniform_index(rng, 3);
      const std::size_t sh = 1 + uniform_index(rng, 2), sw = 1 + uniform_index(rng, 2);
      const std::size_t ph = uniform_index(rng, kh), pw = uniform_index(rng, kw);
      auto x = random_tensor({c, h, w}, s), k = random_tensor({co, c, kh, kw}, s + 1), b = random_tensor({co}, s + 2);
      std::size_t oh, ow;
      check("conv2d", vec(conv2d(tape, x, k, b, {sh, sw}, {ph, pw})),
            testing::conv2d_direct(vec(x), c, h, w, vec(k), co, kh, kw, vec(b), sh, sw, ph, pw, oh, ow));
    }
    {
      const std::size_t c = 1 + uniform_index(rng, 6), n = 8 + uniform_index(rng, 24), co = 1 + uniform_index(rng, 5);
      const std::size_t kn = 1 + 2 * uniform_index(rng, 3), stride = 1 + uniform_index(rng, 2), pad = uniform_index(rng, kn);
      auto x = random_tensor({c, n}, s + 3), k = random_tensor({co, c, kn}, s + 4), b = random_tensor({co}, s + 5);
      std::size_t on;
      check("conv1d", vec(conv1d(tape, x, k, b, stride, pad)),
            testing::conv1d_direct(vec(x), c, n, vec(k), co, kn, vec(b), stride, pad, on));
    }
    {
      const std::size_t c = 1 + uniform_index(rng, 4), n = 2 + uniform_index(rng, 10), co = 1 + uniform_index(rng, 3);
      const std::size_t stride = 1 + uniform_index(rng, 4), kn = stride + uniform_index(rng, 2 * stride);
      auto x = random_tensor({c, n}, s + 6), k = random_tensor({c, co, kn}, s + 7);
      check("transposed_conv1d", vec(transposed_conv1d(tape, x, k, stride)),
            testing::transposed_conv1d_scatter(vec(x), c, n, vec(k), co, kn, stride));
    }
    {
      const std::size_t planes = 1 + uniform_index(rng, 4), h = 4 + uniform_index(rng, 9), w = 4 + uniform_index(rng, 9);
      auto x = random_tensor({planes, h, w}, s + 8);
      check("maxpool2d", vec(maxpool2d(tape, x, {2, 2}, {2, 2})),
            testing::maxpool2d_direct(vec(x), planes, h, w, 2, 2, 2, 2));
      const std::size_t rows = 1 + uniform_index(rng, 6), n = 4 + uniform_index(rng, 20);
      auto y = random_tensor({rows, n}, s + 9);
      check("maxpool1d", vec(maxpool1d(tape, y, 2, 2)), testing::maxpool1d_direct(vec(y), rows, n, 2, 2));
    }
    {
      const std::size_t n = 1 + uniform_index(rng, 30), d = 1 + uniform_index(rng, 64);
      auto z = random_tensor({n, d}, s + 10), l = random_tensor({n}, s + 11, 0, 1);
      std::vector<double> pooled(d, 0.0), avg(d, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          pooled[j] += l[i] * z.data()[i * d + j];
          avg[j] += z.data()[i * d + j];
        }
      }
      for (auto& v : avg) v /= static_cast<double>(n);
      check("attention_pool", vec(attention_pool(tape, z, l)), pooled);
      check("mean_pool", vec(mean_pool(tape, z)), avg);
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < 30.0, "runtime " + fmt("%.1f s", secs));
  o.note("10 seeded cases per kernel, max abs diff " + fmt("%.2e", worst) + ", " + fmt("%.2f s", secs));
  return o;
}

// ------------------------------------------------------------------ 3

Tensor embedded(const Tensor& core, const Tensor& fill, std::size_t n, std::size_t offset) {
  const std::size_t d = fill.size();
  std::vector<double> v;
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= offset && i < offset + core.dim(0)) {
      auto r = core.data().subspan((i - offset) * d, d);
      v.insert(v.end(), r.begin(), r.end());
    } else {
      v.insert(v.end(), fill.data().begin(), fill.data().end());
    }
  }
  return Tensor({n, d}, v);
}

Outcome attention_contract() {
  Outcome o;
  const auto t0 = Clock::now();
  double shift_err = 0, norm_err = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto p = init_attention(s);
    for (double bias : {0.0, 30.0, -30.0}) {
      if (bias != 0.0) std::fill(p.score_bias.data_mut().begin(), p.score_bias.data_mut().end(), bias);
      for (std::size_t n : {1, 5, 16, 37}) {
        Tape tape;
        auto att = attention_scores(tape, p, random_tensor({n, 128}, 100 * s + n, -3, 3));
        for (std::size_t i = 0; i < n; ++i) {
          o.require(att.lambda[i] > 0.0 && att.lambda[i] < 1.0, "lambda outside (0,1)");
          o.require(att.lambda[i] == sigmoid_value(att.alpha[i]), "lambda != sigmoid(alpha)");
        }
      }
    }
  }
  {
    const auto zero = zero_attention();
    Tape tape;
    auto att = attention_scores(tape, zero, random_tensor({23, 128}, 5));
    for (std::size_t i = 0; i < 23; ++i) o.require(att.lambda[i] == 0.5, "zero network lambda != 0.5");
  }
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto p = init_attention(s);
    auto core = random_tensor({12, 128}, 50 + s), fill = random_tensor({128}, 60 + s);
    const std::size_t n = 48, base = 16;
    Tape tape;
    auto ref = attention_scores(tape, p, embedded(core, fill, n, base));
    for (int shift : {-8, -4, 4, 8}) {
      auto moved = attention_scores(tape, p, embedded(core, fill, n, base + shift));
      for (std::size_t i = 12; i + 12 < n; ++i) {
        const auto j = static_cast<std::ptrdiff_t>(i) + shift;
        if (j < 12 || j + 12 >= static_cast<std::ptrdiff_t>(n)) continue;
        shift_err = std::max(shift_err, std::abs(moved.alpha[static_cast<std::size_t>(j)] - ref.alpha[i]));
      }
    }
  }
  o.require(shift_err <= 1e-9, "translation equivariance " + fmt("%.2e", shift_err));
  for (std::uint64_t s = 0; s < 10; ++s) {
    Tape tape;
    auto d = describe_features(tape, init_attention(s), random_tensor({1 + s * 3, 128}, 70 + s));
    double sq = 0;
    for (double v : d.f.data()) sq += v * v;
    norm_err = std::max(norm_err, std::abs(std::sqrt(sq) - 1.0));
  }
  o.require(norm_err <= 1e-9, "descriptor norm " + fmt("%.2e", norm_err));
  const double secs = seconds_since(t0);
  o.require(secs < 30.0, "runtime " + fmt("%.1f s", secs));
  o.note("shift err " + fmt("%.1e", shift_err) + ", norm err " + fmt("%.1e", norm_err) + ", " + fmt("%.2f s", secs));
  return o;
}

// ------------------------------------------------------------------ 4

Outcome loss_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  {
    Tape tape;
    auto f = Tensor::from({0.5, 0.5, 0.5, 0.5});
    o.require(hinge_loss(tape, f, f, true, 2.0).item() == 0.0, "identical positive pair");
    auto a = Tensor::from({1, 0, 0}), b = Tensor::from({-1, 0, 0});
    o.require(hinge_loss(tape, a, b, false, 2.0).item() == 0.0, "margin-satisfied negative");
    auto c = Tensor::from({0.5, std::sqrt(3.0) / 2, 0}), d = Tensor::from({1, 0, 0});
    o.require(std::abs(hinge_loss(tape, c, d, false, 2.0).item() - 0.5) < 1e-15, "m=2, d=1 negative");
  }
  CnnConfig toy;
  toy.height = toy.width = 8;
  auto model = init_model(2, 3, toy);
  for (std::uint64_t s = 0; s < 5; ++s) {
    Tape tape;
    auto br = combined_loss(tape, model, random_tensor({4, 5, 8, 8}, s), s % 3, random_tensor({4, 5, 8, 8}, 10 + s),
                            (s + 1) % 3, 2.0);
    o.require(br.total.item() == (br.id1.item() + br.hinge.item()) + br.id2.item(), "total is not the exact sum");
  }
  // Gradient of the two-branch loss equals the sum of each branch's
  // contribution with the other branch frozen.
  auto v1 = random_tensor({4, 5, 8, 8}, 21), v2 = random_tensor({4, 5, 8, 8}, 22);
  auto params = model.parameters();
  for (auto& p : params) p.set_requires_grad(true);
  auto grads = [&] {
    std::vector<std::vector<double>> g;
    for (const auto& p : params)
      g.emplace_back(p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                  : std::vector<double>(p.size(), 0.0));
    for (auto& p : params) p.clear_grad();
    return g;
  };
  auto frozen = [](const Tensor& t) { return Tensor(t.shape(), {t.data().begin(), t.data().end()}); };
  double worst = 0;
  for (bool positive : {true, false}) {
    const std::size_t l2 = positive ? 0 : 2;
    for (auto& p : params) p.clear_grad();
    {
      Tape tape;
      tape.backward(combined_loss(tape, model, v1, 0, v2, l2, 2.0).total);
    }
    const auto both = grads();
    std::vector<std::vector<double>> parts[2];
    for (int branch = 0; branch < 2; ++branch) {
      Tape tape, other;
      const auto& mine = branch == 0 ? v1 : v2;
      const auto& theirs = branch == 0 ? v2 : v1;
      auto d = video_descriptor(tape, model.cnn, model.attention, mine);
      auto e = video_descriptor(other, model.cnn, model.attention, theirs);
      auto loss = add(tape, identity_loss(tape, d.f, branch == 0 ? 0 : l2, model.classifier),
                      hinge_loss(tape, d.f, frozen(e.f), positive, 2.0));
      tape.backward(loss);
      parts[branch] = grads();
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      double scale = 1.0;
      for (double g : both[i]) scale = std::max(scale, std::abs(g));
      for (std::size_t j = 0; j < both[i].size(); ++j) {
        worst = std::max(worst, std::abs(both[i][j] - (parts[0][i][j] + parts[1][i][j])) / scale);
      }
    }
  }
  o.require(worst < 1e-10, "branch gradient sharing " + fmt("%.2e", worst));
  const double secs = seconds_since(t0);
  o.require(secs < 10.0, "runtime " + fmt("%.1f s", secs));
  o.note("branch sharing err " + fmt("%.1e", worst) + ", " + fmt("%.2f s", secs));
  return o;
}

// ------------------------------------------------------------------ 5, 6, 8

struct ReferenceRun {
  ProtocolResult result;
  std::vector<std::vector<EpochLoss>> logs;
  fs::path out_dir;
  double seconds = 0;
};

TrainConfig reference_config(const fs::path& dataset, const fs::path& out_dir) {
  TrainConfig cfg;
  cfg.dataset = dataset;
  cfg.out_dir = out_dir;
  cfg.epochs = 60;
  cfg.clip_length = 16;
  cfg.sgd.learning_rate = 1e-4;
  cfg.sgd.schedule = {{50, 0.1}};
  cfg.margin = 2.0;
  cfg.repetitions = 3;
  cfg.seed = 0;
  return cfg;
}

ReferenceRun run_reference(const PreparedDataset& data, const fs::path& dataset, const fs::path& out_dir) {
  ReferenceRun run;
  run.out_dir = out_dir;
  fs::remove_all(out_dir);
  const auto t0 = Clock::now();
  run.result = evaluate_retrain(reference_config(dataset, out_dir), data, [&](const EpochLoss& e) {
    if (e.epoch == 1) run.logs.emplace_back();
    run.logs.back().push_back(e);
    if (e.epoch % 10 == 0) {
      std::fprintf(stderr, "  rep %zu epoch %d total %.4f (%.0f s)\n", run.logs.size() - 1, e.epoch, e.total,
                   seconds_since(t0));
    }
  });
  write_cmc_csv(out_dir / "cmc.csv", run.result.trained);
  write_cmc_csv(out_dir / "cmc_untrained.csv", run.result.untrained);
  run.seconds = seconds_since(t0);
  return run;
}

Outcome reference_criteria(const ReferenceRun& run) {
  Outcome o;
  const auto& trained = run.result.trained;
  const double r1 = trained.rank(1), r5 = trained.rank(5), u1 = run.result.untrained.rank(1);
  double first = 0, last = 0;
  for (const auto& log : run.logs) {
    first += log.front().total / static_cast<double>(run.logs.size());
    last += log.back().total / static_cast<double>(run.logs.size());
  }
  o.require(r1 >= 0.80, "rank-1 " + fmt("%.3f", r1) + " < 0.80");
  o.require(r5 == 1.0, "rank-5 " + fmt("%.3f", r5) + " != 1");
  o.require(u1 <= 0.4, "untrained rank-1 " + fmt("%.3f", u1) + " > 0.4");
  o.require(last < 0.5 * first, "final loss " + fmt("%.4f", last) + " not < 50% of epoch-1 " + fmt("%.4f", first));
  o.note("rank-1 " + fmt("%.3f", r1) + ", rank-5 " + fmt("%.3f", r5) + ", untrained rank-1 " + fmt("%.3f", u1) +
         ", loss " + fmt("%.4f", first) + " -> " + fmt("%.4f", last) + " (" + fmt("%.0f%%", 100.0 * last / first) +
         "), " + fmt("%.0f s", run.seconds));
  return o;
}

Outcome occlusion_criterion(const ReferenceRun& run, const PreparedDataset& data, const fs::path& dataset) {
  Outcome o;
  const auto occ = read_occlusions(dataset);
  double occluded = 0, clean = 0;
  std::size_t n_occ = 0, n_clean = 0;
  for (const auto& model : run.result.models) {
    const auto s = attention_by_occlusion(model, data, occ);
    occluded += s.occluded * static_cast<double>(s.occluded_frames);
    clean += s.clean * static_cast<double>(s.clean_frames);
    n_occ += s.occluded_frames;
    n_clean += s.clean_frames;
  }
  o.require(n_occ > 0 && n_clean > 0, "no occluded or no clean frames");
  if (n_occ && n_clean) {
    occluded /= static_cast<double>(n_occ);
    clean /= static_cast<double>(n_clean);
  }
  o.require(occluded < clean, "occluded lambda not below clean");
  o.note("mean lambda occluded " + fmt("%.6f", occluded) + " (" + std::to_string(n_occ) + " frames) vs clean " +
         fmt("%.6f", clean) + " (" + std::to_string(n_clean) + " frames)");
  return o;
}

Outcome determinism_criterion(const ReferenceRun& a, const ReferenceRun& b) {
  Outcome o;
  for (std::size_t r = 0; r < 3; ++r) {
    const auto rel = fs::path("rep" + std::to_string(r)) / "loss.csv";
    const auto x = file_bytes(a.out_dir / rel), y = file_bytes(b.out_dir / rel);
    o.require(!x.empty() && x == y, rel.string() + " differs");
  }
  const auto x = file_bytes(a.out_dir / "cmc.csv"), y = file_bytes(b.out_dir / "cmc.csv");
  o.require(!x.empty() && x == y, "cmc.csv differs");
  o.note("3 loss.csv files and cmc.csv compared byte for byte");
  return o;
}

// ------------------------------------------------------------------ 7

Outcome protocol_suite(const ReferenceRun* run, const PreparedDataset* data_b) {
  Outcome o;
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t p = 2 + uniform_index(rng, 12);
    std::vector<std::vector<double>> d(p, std::vector<double>(p));
    for (auto& row : d)
      for (auto& v : row) v = std::round(uniform01(rng) * 5.0);
    const auto curve = cmc_from_distances(d);
    bool mono = curve.back() == 1.0;
    for (std::size_t k = 1; k < p; ++k) mono = mono && curve[k] >= curve[k - 1];
    o.require(mono, "CMC not monotone");
  }
  o.require(cmc_from_distances({{0.1, 0.2}, {0.05, 0.3}}) == std::vector<double>{0.5, 1.0}, "2x2 ranking");

  DatasetIndex ten;
  for (std::size_t i = 0; i < 10; ++i) {
    const auto id = synth_person_id(i);
    ten.persons.push_back({id, {id, Camera::A, {}}, {id, Camera::B, {}}});
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto [train, test] = split_half(ten, seed);
    std::set<std::string> ids;
    for (const auto& p : train.persons) ids.insert(p.id);
    for (const auto& p : test.persons) ids.insert(p.id);
    o.require(train.size() == 5 && test.size() == 5 && ids.size() == 10, "split not disjoint halves");
  }

  PreparedDataset tagged{ten, {}, {}};
  for (std::size_t p = 0; p < 10; ++p) {
    tagged.cam_a.push_back(Tensor::filled({20, 1, 1, 1}, static_cast<double>(p)));
    tagged.cam_b.push_back(Tensor::filled({20, 1, 1, 1}, static_cast<double>(p)));
  }
  Rng pair_rng(5);
  for (int epoch = 0; epoch < 10; ++epoch) {
    std::size_t positives = 0;
    for (std::size_t k = 0; k < 20; ++k) {
      const auto s = sample_pair(tagged, 16, pair_rng, k);
      positives += s.positive;
      o.require(s.positive == (s.label1 == s.label2), "pair label mismatch");
      o.require(s.seq1.data()[0] == static_cast<double>(s.label1), "pair sequence mismatch");
    }
    o.require(positives == 10, "positives per epoch " + std::to_string(positives));
  }

  if (run && data_b) {
    TrainConfig cfg_b = reference_config({}, {});
    const auto cross = cross_evaluate(run->result.models, cfg_b, *data_b);
    const double within = run->result.trained.rank(1);
    o.require(cross.rank(1) <= within, "cross rank-1 " + fmt("%.3f", cross.rank(1)) + " > within");
    write_cmc_csv(run->out_dir / "cmc_cross.csv", cross);
    o.note("cross-dataset rank-1 " + fmt("%.3f", cross.rank(1)) + " vs within " + fmt("%.3f", within));
  } else {
    o.require(false, "cross-dataset part needs the reference run");
  }
  return o;
}

// ------------------------------------------------------------------ 9

Outcome lucas_kanade_criterion() {
  Outcome o;
  const std::size_t h = 56, w = 40;
  auto texture = [](double x, double y) {
    return std::sin(0.35 * x) + std::cos(0.3 * y) + 0.5 * std::sin(0.21 * (x + y) + 1.0);
  };
  FloatImage prev(1, h, w), next(1, h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      prev.at(0, y, x) = texture(static_cast<double>(x), static_cast<double>(y));
      next.at(0, y, x) = texture(static_cast<double>(x) - 1.0, static_cast<double>(y));
    }
  }
  const auto flow = lucas_kanade(prev, next);
  double err = 0;
  std::size_t n = 0;
  const std::size_t margin = 4;
  for (std::size_t y = margin; y + margin < h; ++y) {
    for (std::size_t x = margin; x + margin < w; ++x) {
      err += std::hypot(flow.gx[y * w + x] - 1.0, flow.gy[y * w + x]);
      ++n;
    }
  }
  err /= static_cast<double>(n);
  o.require(err < 0.2, "mean interior error " + fmt("%.3f", err));

  bool zero = true;
  for (const auto& f : {lucas_kanade(prev, prev), lucas_kanade(FloatImage(1, 20, 20, 0.4), FloatImage(1, 20, 20, 0.9))}) {
    for (std::size_t i = 0; i < f.gx.size(); ++i) zero = zero && f.gx[i] == 0.0 && f.gy[i] == 0.0;
  }
  o.require(zero, "identical or constant frames gave non-zero flow");
  o.note("mean interior endpoint error " + fmt("%.4f px", err));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::current_path() / "acceptance_run";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream list(argv[++i]);
      std::string item;
      while (std::getline(list, item, ',')) only.insert(std::stoi(item));
    } else {
      work = arg;
    }
  }
  auto wanted = [&](int c) { return only.empty() || only.count(c) > 0; };
  fs::create_directories(work);

  bool all_pass = true;
  auto report = [&](int id, const char* title, const Outcome& o) {
    all_pass = all_pass && o.pass;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str());
    std::fflush(stdout);
  };
  auto guarded = [&](int id, const char* title, const std::function<Outcome()>& f) {
    if (!wanted(id)) return;
    try {
      report(id, title, f());
    } catch (const std::exception& e) {
      report(id, title, Outcome{false, std::string("exception: ") + e.what()});
    }
  };

  guarded(1, "gradient suite", gradient_suite);
  guarded(2, "kernel oracle suite", kernel_oracles);
  guarded(3, "attention contract suite", attention_contract);
  guarded(4, "loss suite", loss_suite);

  const bool need_reference = wanted(5) || wanted(6) || wanted(7) || wanted(8);
  std::optional<ReferenceRun> first;
  std::optional<PreparedDataset> data_a, data_b;
  const fs::path root_a = work / "synth_a", root_b = work / "synth_b";
  if (need_reference) {
    try {
      SynthConfig syn;
      syn.num_identities = 10;
      syn.frames_per_track = 24;
      syn.occlusion_prob = 0.2;
      syn.seed = 0;
      fs::remove_all(root_a);
      synth_generate(syn, root_a);
      data_a = prepare(load_dataset(root_a));
      syn.seed = 1;
      fs::remove_all(root_b);
      synth_generate(syn, root_b);
      data_b = prepare(load_dataset(root_b));
      std::fprintf(stderr, "reference run 1\n");
      first = run_reference(*data_a, root_a, work / "reference_1");
    } catch (const std::exception& e) {
      std::fprintf(stderr, "reference run failed: %s\n", e.what());
    }
  }
  auto with_reference = [&](int id, const char* title, const std::function<Outcome()>& f) {
    if (!wanted(id)) return;
    if (!first) {
      report(id, title, Outcome{false, "reference run did not complete"});
      return;
    }
    guarded(id, title, f);
  };

  with_reference(5, "synthetic end-to-end", [&] { return reference_criteria(*first); });
  with_reference(6, "occlusion attention", [&] { return occlusion_criterion(*first, *data_a, root_a); });
  guarded(7, "protocol suite", [&] { return protocol_suite(first ? &*first : nullptr, data_b ? &*data_b : nullptr); });
  with_reference(8, "determinism", [&] {
    std::fprintf(stderr, "reference run 2\n");
    const auto second = run_reference(*data_a, root_a, work / "reference_2");
    return determinism_criterion(*first, second);
  });
  guarded(9, "Lucas-Kanade", lucas_kanade_criterion);

  return all_pass ? 0 : 1;
}
