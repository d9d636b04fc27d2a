#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "tcam/config.hpp"
#include "tcam/image.hpp"
#include "tcam/preprocessing.hpp"
#include "tcam/rng.hpp"
#include "tcam/tensor.hpp"

namespace tcam {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Camera { A, B };

inline const char* camera_dir(Camera c) { return c == Camera::A ? "cam_a" : "cam_b"; }

struct PersonTrack {
  std::string person_id;
  Camera camera = Camera::A;
  std::vector<std::filesystem::path> frame_paths;  // sorted by filename
};

struct Person {
  std::string id;
  PersonTrack track_a;
  PersonTrack track_b;
};

struct DatasetIndex {
  std::vector<Person> persons;  // sorted by id
  std::size_t skipped = 0;      // persons missing a camera or with a short track

  std::size_t size() const { return persons.size(); }
};

/// Frames of one track directory, sorted by filename. Only .png files count.
inline std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  return out;
}

/// Reads `<root>/cam_a/<person>/<frame>.png` and `<root>/cam_b/...`.
inline DatasetIndex load_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DatasetError("cannot read dataset root " + root.string());

  auto persons_in = [&](Camera cam) {
    std::map<std::string, fs::path> out;
    const fs::path dir = root / camera_dir(cam);
    if (!fs::is_directory(dir, ec)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory()) out[entry.path().filename().string()] = entry.path();
    }
    return out;
  };
  const auto a = persons_in(Camera::A);
  const auto b = persons_in(Camera::B);

  DatasetIndex index;
  std::set<std::string> ids;
  for (const auto& [id, path] : a) ids.insert(id);
  for (const auto& [id, path] : b) ids.insert(id);
  for (const auto& id : ids) {
    auto ia = a.find(id);
    auto ib = b.find(id);
    if (ia == a.end() || ib == b.end()) {
      ++index.skipped;
      continue;
    }
    Person p{id, {id, Camera::A, list_frames(ia->second)}, {id, Camera::B, list_frames(ib->second)}};
    if (p.track_a.frame_paths.size() < 2 || p.track_b.frame_paths.size() < 2) {
      ++index.skipped;
      continue;
    }
    index.persons.push_back(std::move(p));
  }
  if (index.persons.empty()) {
    throw DatasetError("zero usable persons in " + root.string() + " (skipped " +
                       std::to_string(index.skipped) + ")");
  }
  return index;
}

/// Seeded shuffle, first ceil(P/2) persons train, the rest test.
inline std::pair<DatasetIndex, DatasetIndex> split_half(const DatasetIndex& index, std::uint64_t seed) {
  if (index.size() < 2) throw DatasetError("split_half needs at least 2 persons");
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0x5B));
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[uniform_index(rng, i + 1)]);
  }
  const std::size_t n_train = (index.size() + 1) / 2;
  DatasetIndex train, test;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < n_train ? train : test).persons.push_back(index.persons[order[k]]);
  }
  return {train, test};
}

/// Preprocessed full tracks, one [L,5,H,W] tensor per camera and person.
struct PreparedDataset {
  DatasetIndex index;
  std::vector<Tensor> cam_a;
  std::vector<Tensor> cam_b;

  std::size_t size() const { return index.size(); }
  const Tensor& track(std::size_t person, Camera cam) const {
    return cam == Camera::A ? cam_a.at(person) : cam_b.at(person);
  }
};

inline Tensor load_track(const PersonTrack& track, const PreprocessOptions& options = {}) {
  std::vector<RawFrame> frames;
  frames.reserve(track.frame_paths.size());
  for (const auto& p : track.frame_paths) frames.push_back(read_png(p));
  return build_video_tensor(frames, options);
}

inline PreparedDataset prepare(const DatasetIndex& index, const PreprocessOptions& options = {}) {
  PreparedDataset out{index, {}, {}};
  for (const auto& p : index.persons) {
    out.cam_a.push_back(load_track(p.track_a, options));
    out.cam_b.push_back(load_track(p.track_b, options));
  }
  return out;
}

/// Same preprocessed tracks, restricted to `subset` (matched by person id).
inline PreparedDataset restrict_to(const PreparedDataset& all, const DatasetIndex& subset) {
  PreparedDataset out{subset, {}, {}};
  for (const auto& p : subset.persons) {
    auto it = std::find_if(all.index.persons.begin(), all.index.persons.end(),
                           [&](const Person& q) { return q.id == p.id; });
    if (it == all.index.persons.end()) throw DatasetError("person " + p.id + " not prepared");
    const auto k = static_cast<std::size_t>(it - all.index.persons.begin());
    out.cam_a.push_back(all.cam_a[k]);
    out.cam_b.push_back(all.cam_b[k]);
  }
  return out;
}

/// Uniform start of a consecutive window of min(n, length) frames.
inline std::size_t sample_start(std::size_t length, std::size_t n, Rng& rng) {
  if (length < 2) throw DatasetError("track shorter than 2 frames");
  if (n == 0) throw std::invalid_argument("subsequence length must be positive");
  if (length <= n) return 0;
  return static_cast<std::size_t>(uniform_index(rng, length - n + 1));
}

/// Frames [start, start + len) of a [L,...] track tensor.
inline Tensor frame_window(const Tensor& track, std::size_t start, std::size_t len) {
  const std::size_t frame = track.size() / track.dim(0);
  Shape shape = track.shape();
  shape[0] = len;
  const auto d = track.data();
  return Tensor(std::move(shape), {d.begin() + static_cast<std::ptrdiff_t>(start * frame),
                                   d.begin() + static_cast<std::ptrdiff_t>((start + len) * frame)});
}

inline Tensor sample_subsequence(const Tensor& track, std::size_t n, Rng& rng) {
  const std::size_t length = track.dim(0);
  const std::size_t start = sample_start(length, n, rng);
  return frame_window(track, start, std::min(n, length));
}

struct PairSample {
  Tensor seq1;  // camera A
  Tensor seq2;  // camera B
  std::size_t label1 = 0;
  std::size_t label2 = 0;
  bool positive = false;
};

/// Even positions give a positive pair (one person, both cameras), odd
/// positions a negative pair (camera A of p, camera B of a distinct q).
/// Labels are person indices within `train`.
inline PairSample sample_pair(const PreparedDataset& train, std::size_t n, Rng& rng,
                              std::size_t epoch_position) {
  const std::size_t persons = train.size();
  if (persons < 2) throw DatasetError("pair sampling needs at least 2 training persons");
  PairSample s;
  s.positive = epoch_position % 2 == 0;
  s.label1 = static_cast<std::size_t>(uniform_index(rng, persons));
  if (s.positive) {
    s.label2 = s.label1;
  } else {
    const auto other = static_cast<std::size_t>(uniform_index(rng, persons - 1));
    s.label2 = other >= s.label1 ? other + 1 : other;
  }
  s.seq1 = sample_subsequence(train.cam_a[s.label1], n, rng);
  s.seq2 = sample_subsequence(train.cam_b[s.label2], n, rng);
  return s;
}

}  // namespace tcam
