#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "tcam/gradcheck_suite.hpp"
#include "tcam/synth.hpp"
#include "tcam/train_eval.hpp"

namespace fs = std::filesystem;
using namespace tcam;

namespace {

TrainConfig load_train_config(const fs::path& path) {
  return TrainConfig::from(KeyValueConfig::load(path));
}

PreparedDataset load_prepared(const TrainConfig& cfg) {
  if (cfg.dataset.empty()) throw ConfigError("config has no 'dataset' key");
  const auto index = load_dataset(cfg.dataset);
  if (index.skipped > 0) {
    std::fprintf(stderr, "warning: skipped %zu incomplete persons in %s\n", index.skipped,
                 cfg.dataset.string().c_str());
  }
  return prepare(index);
}

void print_epoch(const EpochLoss& e) {
  std::printf("epoch %d  hinge %.6f  id1 %.6f  id2 %.6f  total %.6f\n", e.epoch, e.hinge, e.id1, e.id2, e.total);
  std::fflush(stdout);
}

void print_ranks(const char* label, const EvalReport& r) {
  std::printf("%s rank-1 %.4f", label, r.rank(1));
  for (std::size_t k : {5, 10, 20}) {
    if (k <= r.mean.size()) std::printf("  rank-%zu %.4f", k, r.rank(k));
  }
  std::printf("\n");
}

int cmd_synth(const fs::path& cfg_path, const fs::path& out) {
  auto kv = KeyValueConfig::load(cfg_path);
  std::set<std::string> known = SynthConfig::keys();
  known.insert(TrainConfig::keys().begin(), TrainConfig::keys().end());
  kv.check_keys(known);
  const auto cfg = SynthConfig::from(kv);
  const auto occ = synth_generate(cfg, out);
  std::printf("wrote %zu identities x 2 cameras x %zu frames to %s (%zu occluded frames)\n", cfg.num_identities,
              cfg.frames_per_track, out.string().c_str(), occ.size());
  return 0;
}

int cmd_train(const fs::path& cfg_path) {
  const auto cfg = load_train_config(cfg_path);
  const auto all = load_prepared(cfg);
  const auto train_idx = split_half(all.index, cfg.seed).first;
  train(cfg, restrict_to(all, train_idx), cfg.seed, cfg.out_dir, print_epoch);
  std::printf("wrote %s and %s\n", (cfg.out_dir / "loss.csv").string().c_str(),
              (cfg.out_dir / "checkpoint.bin").string().c_str());
  return 0;
}

int cmd_eval(const fs::path& cfg_path, const std::string& ckpt_path) {
  const auto cfg = load_train_config(cfg_path);
  const auto all = load_prepared(cfg);
  fs::create_directories(cfg.out_dir);
  if (!ckpt_path.empty()) {
    const auto ckpt = load_checkpoint(ckpt_path);
    const auto report = evaluate_checkpoint(cfg, ckpt.model, all);
    write_cmc_csv(cfg.out_dir / "cmc.csv", report);
    print_ranks("checkpoint", report);
  } else {
    const auto result = evaluate_retrain(cfg, all, print_epoch);
    write_cmc_csv(cfg.out_dir / "cmc.csv", result.trained);
    write_cmc_csv(cfg.out_dir / "cmc_untrained.csv", result.untrained);
    print_ranks("untrained", result.untrained);
    print_ranks("trained", result.trained);
  }
  std::printf("wrote %s\n", (cfg.out_dir / "cmc.csv").string().c_str());
  return 0;
}

int cmd_cross_eval(const fs::path& cfg_a_path, const fs::path& cfg_b_path) {
  const auto cfg_a = load_train_config(cfg_a_path);
  const auto cfg_b = load_train_config(cfg_b_path);
  require_multi_shot(cfg_a);
  require_multi_shot(cfg_b);
  const auto a = load_prepared(cfg_a);
  const auto b = load_prepared(cfg_b);
  const auto report = cross_dataset_eval(cfg_a, a, cfg_b, b);
  fs::create_directories(cfg_a.out_dir);
  write_cmc_csv(cfg_a.out_dir / "cmc_cross.csv", report);
  print_ranks("cross-dataset", report);
  std::printf("wrote %s\n", (cfg_a.out_dir / "cmc_cross.csv").string().c_str());
  return 0;
}

int cmd_attn(const fs::path& ckpt_path, const fs::path& track_dir, const fs::path& out) {
  const auto ckpt = load_checkpoint(ckpt_path);
  PersonTrack track{track_dir.filename().string(), Camera::A, list_frames(track_dir)};
  if (track.frame_paths.empty()) throw DatasetError("no .png frames in " + track_dir.string());
  const auto rows = export_attention(ckpt.model, load_track(track));
  write_attention_csv(out, rows);
  std::printf("wrote %zu rows to %s\n", rows.size(), out.string().c_str());
  return 0;
}

int cmd_gradcheck(const std::string& op) {
  const auto results = run_grad_suite(op);
  if (results.empty()) throw std::invalid_argument("no gradient check named '" + op + "'");
  bool ok = true;
  for (const auto& r : results) {
    const bool pass = r.max_error < 1e-4;
    ok = ok && pass;
    std::printf("%-26s max rel err %.3e  %s\n", r.name.c_str(), r.max_error, pass ? "ok" : "FAIL");
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal attention video re-identification"};
  app.require_subcommand(1);

  std::string cfg, cfg_b, out, ckpt, track, op;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-camera dataset");
  synth->add_option("cfg", cfg, "synthetic dataset config")->required()->check(CLI::ExistingFile);
  synth->add_option("out", out, "output dataset root")->required();

  auto* train_cmd = app.add_subcommand("train", "Train on the first split half, write loss.csv and checkpoint.bin");
  train_cmd->add_option("cfg", cfg, "run config")->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "CMC evaluation; retrains per repetition when no checkpoint is given");
  eval->add_option("cfg", cfg, "run config")->required()->check(CLI::ExistingFile);
  eval->add_option("ckpt", ckpt, "checkpoint to score on every test split")->check(CLI::ExistingFile);

  auto* cross = app.add_subcommand("cross-eval", "Train on dataset A, test on dataset B");
  cross->add_option("cfgA", cfg, "config of the training dataset")->required()->check(CLI::ExistingFile);
  cross->add_option("cfgB", cfg_b, "config of the test dataset")->required()->check(CLI::ExistingFile);

  auto* attn = app.add_subcommand("attn", "Export per-frame attention of one track as CSV");
  attn->add_option("ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  attn->add_option("track", track, "directory of PNG frames")->required()->check(CLI::ExistingDirectory);
  attn->add_option("out", out, "output CSV")->required();

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable operation");
  grad->add_option("--op", op, "only cases whose name starts with this");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(cfg, out);
    if (*train_cmd) return cmd_train(cfg);
    if (*eval) return cmd_eval(cfg, ckpt);
    if (*cross) return cmd_cross_eval(cfg, cfg_b);
    if (*attn) return cmd_attn(ckpt, track, out);
    if (*grad) return cmd_gradcheck(op);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
