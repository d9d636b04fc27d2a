#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>

#include <unistd.h>

#include "tcam/synth.hpp"
#include "tcam/train_eval.hpp"

using namespace tcam;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("tcam_te_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// A small synthetic dataset shared by the tests in this file.
const PreparedDataset& small_data() {
  static const PreparedDataset data = [] {
    const auto root = fs::temp_directory_path() / ("tcam_te_small_" + std::to_string(::getpid()));
    fs::remove_all(root);
    SynthConfig cfg;
    cfg.num_identities = 4;
    cfg.frames_per_track = 20;
    synth_generate(cfg, root);
    auto d = prepare(load_dataset(root));
    fs::remove_all(root);
    return d;
  }();
  return data;
}

TrainConfig one_epoch() {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.repetitions = 1;
  return cfg;
}

double l2(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST(TrainConfig, ParsesAndEchoes) {
  auto kv = KeyValueConfig::parse(
      "dataset=/data\nepochs=7\nlr=0.001\nlr_schedule=5:0.1\nmargin=1.5\nseed=3\nmode=multi-shot\n"
      "num_identities=10\n");
  const auto cfg = TrainConfig::from(kv);
  EXPECT_EQ(cfg.epochs, 7);
  EXPECT_DOUBLE_EQ(cfg.sgd.learning_rate, 0.001);
  ASSERT_EQ(cfg.sgd.schedule.size(), 1u);
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_NE(cfg.echo().find("lr_schedule=5:0.1"), std::string::npos);
  EXPECT_THROW(TrainConfig::from(KeyValueConfig::parse("epochz=3\n")), ConfigError);
  EXPECT_THROW(TrainConfig::from(KeyValueConfig::parse("mode=burst\n")), ConfigError);
  EXPECT_THROW(TrainConfig::from(KeyValueConfig::parse("margin=0\n")), ConfigError);
}

TEST(Train, OneEpochSmokeWritesLoadableCheckpoint) {
  TempDir dir("smoke");
  const auto result = train(one_epoch(), small_data(), 0, dir.path());
  ASSERT_EQ(result.log.size(), 1u);
  const auto& e = result.log[0];
  EXPECT_EQ(e.epoch, 1);
  EXPECT_TRUE(std::isfinite(e.total));
  EXPECT_NEAR(e.total, e.hinge + e.id1 + e.id2, 1e-12);
  // Four classes from a near-uniform start: each identity loss sits close to ln 4.
  EXPECT_NEAR(e.id1, std::log(4.0), 0.1);

  const auto ckpt = load_checkpoint(dir.path() / "checkpoint.bin");
  EXPECT_EQ(ckpt.epoch, 1u);
  EXPECT_EQ(ckpt.model.classifier.num_classes(), 4u);
  const auto a = ckpt.model.named(), b = result.model.named();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a[i].tensor.data(), y = b[i].tensor.data();
    ASSERT_TRUE(std::equal(x.begin(), x.end(), y.begin())) << a[i].name;
  }

  std::ifstream csv(dir.path() / "loss.csv");
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_EQ(header, "epoch,hinge,id1,id2,total");
  EXPECT_EQ(row.substr(0, 2), "1,");
}

TEST(Train, SameSeedGivesIdenticalLossCsv) {
  TempDir a("det_a"), b("det_b");
  train(one_epoch(), small_data(), 5, a.path());
  train(one_epoch(), small_data(), 5, b.path());
  EXPECT_EQ(file_bytes(a.path() / "loss.csv"), file_bytes(b.path() / "loss.csv"));
  EXPECT_EQ(file_bytes(a.path() / "checkpoint.bin"), file_bytes(b.path() / "checkpoint.bin"));
}

TEST(Train, NeedsTwoIdentities) {
  DatasetIndex one;
  one.persons.push_back(small_data().index.persons[0]);
  EXPECT_THROW(train(one_epoch(), restrict_to(small_data(), one), 0), TrainingError);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  TempDir dir("ckpt");
  Checkpoint c{init_model(11, 3), one_epoch().echo(), 42, "state"};
  save_checkpoint(dir.path() / "a.bin", c);
  const auto loaded = load_checkpoint(dir.path() / "a.bin");
  EXPECT_EQ(loaded.epoch, 42u);
  EXPECT_EQ(loaded.rng_state, "state");
  EXPECT_EQ(loaded.train_config, c.train_config);
  save_checkpoint(dir.path() / "b.bin", loaded);
  EXPECT_EQ(file_bytes(dir.path() / "a.bin"), file_bytes(dir.path() / "b.bin"));
  EXPECT_FALSE(fs::exists(dir.path() / "a.bin.tmp"));
}

TEST(Checkpoint, RejectsCorruptFiles) {
  TempDir dir("ckpt_bad");
  save_checkpoint(dir.path() / "good.bin", {init_model(1, 2), "", 0, ""});
  const auto good = file_bytes(dir.path() / "good.bin");

  auto bad_magic = good;
  bad_magic[0] = 'X';
  write_bytes(dir.path() / "magic.bin", bad_magic);
  EXPECT_THROW(load_checkpoint(dir.path() / "magic.bin"), CheckpointError);

  auto bad_version = good;
  bad_version[8] = 9;
  write_bytes(dir.path() / "version.bin", bad_version);
  EXPECT_THROW(load_checkpoint(dir.path() / "version.bin"), CheckpointError);

  write_bytes(dir.path() / "short.bin", good.substr(0, good.size() - 5));
  EXPECT_THROW(load_checkpoint(dir.path() / "short.bin"), CheckpointError);

  write_bytes(dir.path() / "long.bin", good + "x");
  EXPECT_THROW(load_checkpoint(dir.path() / "long.bin"), CheckpointError);

  EXPECT_THROW(load_checkpoint(dir.path() / "missing.bin"), CheckpointError);
}

TEST(Cmc, IdentityLikeMatrixIsPerfect) {
  const std::vector<std::vector<double>> d{{0.0, 1.0, 2.0}, {1.0, 0.5, 0.9}, {3.0, 2.0, 1.0}};
  const auto curve = cmc_from_distances(d);
  EXPECT_EQ(curve, (std::vector<double>{1.0, 1.0, 1.0}));
}

TEST(Cmc, DiagonalLargestIsWorstCase) {
  std::vector<std::vector<double>> d(4, std::vector<double>(4, 1.0));
  for (std::size_t i = 0; i < 4; ++i) d[i][i] = 5.0;
  EXPECT_EQ(cmc_from_distances(d), (std::vector<double>{0.0, 0.0, 0.0, 1.0}));
}

TEST(Cmc, HandRankedTwoByTwo) {
  const auto curve = cmc_from_distances({{0.1, 0.2}, {0.05, 0.3}});
  EXPECT_EQ(curve, (std::vector<double>{0.5, 1.0}));
}

TEST(Cmc, TiesGoToLowerGalleryIndex) {
  // Probe 0 ties with gallery 1 and wins; probe 1 ties with gallery 0 and loses.
  const auto curve = cmc_from_distances({{1.0, 1.0}, {1.0, 1.0}});
  EXPECT_EQ(curve, (std::vector<double>{0.5, 1.0}));
}

TEST(Cmc, MonotoneAndEndsAtOneOnRandomMatrices) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t p = 2 + uniform_index(rng, 9);
    std::vector<std::vector<double>> d(p, std::vector<double>(p));
    for (auto& row : d)
      for (auto& v : row) v = std::round(uniform01(rng) * 4.0);
    const auto curve = cmc_from_distances(d);
    ASSERT_EQ(curve.size(), p);
    for (std::size_t k = 1; k < p; ++k) EXPECT_GE(curve[k], curve[k - 1]);
    EXPECT_EQ(curve.back(), 1.0);
  }
}

TEST(Cmc, RejectsBadMatrices) {
  EXPECT_THROW(cmc_from_distances({{0.1, std::numeric_limits<double>::quiet_NaN()}, {0.2, 0.3}}),
               std::invalid_argument);
  EXPECT_THROW(cmc_from_distances({{0.1, std::numeric_limits<double>::infinity()}, {0.2, 0.3}}),
               std::invalid_argument);
  EXPECT_THROW(cmc_from_distances({{0.1, 0.2}}), std::invalid_argument);
  EXPECT_THROW(cmc_from_distances({}), std::invalid_argument);
}

TEST(EvalReport, MeanOfRepetitions) {
  EvalReport r;
  r.curves = {{0.2, 0.6, 1.0}, {0.4, 0.8, 1.0}, {0.1, 0.7, 1.0}};
  r.finalize();
  for (std::size_t k = 0; k < 3; ++k) {
    const double expect = (r.curves[0][k] + r.curves[1][k] + r.curves[2][k]) / 3.0;
    EXPECT_NEAR(r.mean[k], expect, 1e-12);
  }
  EXPECT_DOUBLE_EQ(r.rank(2), 0.7);

  EvalReport single;
  single.curves = {{0.5, 1.0}};
  single.finalize();
  EXPECT_EQ(single.mean, single.curves[0]);
}

TEST(EvalReport, CmcCsvLayout) {
  TempDir dir("cmc");
  EvalReport r;
  r.curves = {{0.5, 1.0}, {1.0, 1.0}};
  r.finalize();
  write_cmc_csv(dir.path() / "cmc.csv", r);
  std::ifstream in(dir.path() / "cmc.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "rank,rep0,rep1,mean");
  std::getline(in, line);
  EXPECT_EQ(line, "1,0.5,1,0.75");
}

TEST(Gallery, UnitNormAndDeterministic) {
  const auto model = init_model(2, 4);
  const auto g1 = extract_gallery(model, small_data());
  const auto g2 = extract_gallery(model, small_data());
  ASSERT_EQ(g1.probes.size(), 4u);
  ASSERT_EQ(g1.gallery.size(), 4u);
  for (std::size_t p = 0; p < 4; ++p) {
    EXPECT_NEAR(l2(g1.probes[p]), 1.0, 1e-9);
    EXPECT_NEAR(l2(g1.gallery[p]), 1.0, 1e-9);
    EXPECT_EQ(g1.probes[p], g2.probes[p]);
    EXPECT_EQ(g1.gallery[p], g2.gallery[p]);
  }
}

TEST(Protocol, CheckpointEvaluationVariesOnlyTheSplit) {
  TrainConfig cfg = one_epoch();
  cfg.repetitions = 3;
  const auto model = init_model(0, 2);
  const auto report = evaluate_checkpoint(cfg, model, small_data());
  ASSERT_EQ(report.repetitions(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    const auto test_idx = split_half(small_data().index, r).second;
    EXPECT_EQ(report.curves[r], evaluate_model(model, restrict_to(small_data(), test_idx)));
  }
}

TEST(Protocol, CrossDatasetRejectsSingleShot) {
  TrainConfig a = one_epoch(), b = one_epoch();
  b.single_shot = true;
  try {
    cross_dataset_eval(a, small_data(), b, small_data());
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("unsupported"), std::string::npos);
    EXPECT_NE(what.find("multi-shot"), std::string::npos);
  }
}

TEST(Protocol, CrossEvaluateScoresTestHalfOfSecondDataset) {
  TrainConfig b = one_epoch();
  b.seed = 4;
  b.repetitions = 2;
  const std::vector<Model> models{init_model(0, 2), init_model(1, 2)};
  const auto report = cross_evaluate(models, b, small_data());
  ASSERT_EQ(report.repetitions(), 2u);
  const auto test_idx = split_half(small_data().index, 5).second;
  EXPECT_EQ(report.curves[1], evaluate_model(models[1], restrict_to(small_data(), test_idx)));
}

TEST(Attention, ExportRowsMatchSigmoid) {
  const auto model = init_model(3, 4);
  const auto& track = small_data().cam_a[0];
  const auto rows = export_attention(model, track, 16);
  ASSERT_EQ(rows.size(), 16u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].frame, i);
    EXPECT_GT(rows[i].lambda, 0.0);
    EXPECT_LT(rows[i].lambda, 1.0);
    EXPECT_NEAR(rows[i].lambda, 1.0 / (1.0 + std::exp(-rows[i].alpha)), 1e-12);
  }
  EXPECT_EQ(export_attention(model, track).size(), track.dim(0));
}

TEST(Attention, OcclusionSummaryCountsEveryFrame) {
  const auto model = init_model(3, 4);
  const auto& data = small_data();
  std::vector<OcclusionRecord> occ{{Camera::A, data.index.persons[0].id, 2},
                                   {Camera::B, data.index.persons[1].id, 5}};
  const auto s = attention_by_occlusion(model, data, occ);
  EXPECT_EQ(s.occluded_frames, 2u);
  EXPECT_EQ(s.clean_frames, 4u * 2u * 20u - 2u);
  const double expect =
      0.5 * (export_attention(model, data.cam_a[0])[2].lambda + export_attention(model, data.cam_b[1])[5].lambda);
  EXPECT_NEAR(s.occluded, expect, 1e-12);
}

TEST(Protocol, CrossDatasetEqualsTrainingThenCrossEvaluate) {
  TrainConfig a = one_epoch(), b = one_epoch();
  a.seed = 2;
  b.seed = 6;
  const auto direct = cross_dataset_eval(a, small_data(), b, small_data());
  const auto train_idx = split_half(small_data().index, 2).first;
  const auto model = train(a, restrict_to(small_data(), train_idx), 2).model;
  const auto reused = cross_evaluate({model}, b, small_data());
  EXPECT_EQ(direct.curves, reused.curves);
}
