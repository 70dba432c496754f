#pragma once
// Small on-disk datasets for end-to-end tests.

#include <filesystem>
#include <fstream>
#include <string>

#include "collact/collact.hpp"

namespace fixtures {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("collact_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

inline std::string slurp(const std::filesystem::path& p) { return collact::read_file(p); }

// Three taste groups over `items` items; each user rates ~40% of them.
inline std::filesystem::path write_ratings(const std::filesystem::path& dir, int users = 90, int items = 70) {
  collact::Rng rng(2024);
  std::string text;
  for (int u = 1; u <= users; ++u) {
    const int group = u % 3;
    for (int i = 1; i <= items; ++i) {
      if (rng.uniform() >= 0.4) continue;
      const double pref = (i % 3 == group) ? 4.2 : 2.6;
      const double r = std::clamp(std::round(pref + rng.normal(0.0, 0.8)), 1.0, 5.0);
      text += std::to_string(u) + "\t" + std::to_string(i) + "\t" + std::to_string(static_cast<int>(r)) + "\t" +
              std::to_string(880000000 + u * 100 + i) + "\n";
    }
  }
  const auto path = dir / "u.data";
  std::ofstream(path) << text;
  return path;
}

// Adult-format rows with four occupations; income follows education and hours.
inline std::filesystem::path write_adult(const std::filesystem::path& dir, const std::string& name, int rows,
                                         std::uint64_t seed) {
  static const char* occ[] = {"Craft-repair", "Exec-managerial", "Sales", "Tech-support"};
  collact::Rng rng(seed);
  std::string text;
  for (int r = 0; r < rows; ++r) {
    const int o = static_cast<int>(rng.below(4));
    const int edu = 6 + static_cast<int>(rng.below(10));
    const int hours = 20 + static_cast<int>(rng.below(40));
    const double z = 0.4 * (edu - 10) + 0.05 * (hours - 40) + (o == 1 ? 1.0 : 0.0) - (o == 0 ? 1.0 : 0.0) +
                     rng.normal(0.0, 1.0);
    text += std::to_string(20 + rng.below(45)) + ", Private, " + std::to_string(100000 + rng.below(200000)) +
            ", HS-grad, " + std::to_string(edu) + ", Never-married, " + occ[o] + ", Not-in-family, White, " +
            (rng.uniform() < 0.5 ? "Male" : "Female") + ", 0, 0, " + std::to_string(hours) + ", United-States, " +
            (z > 0.5 ? ">50K" : "<=50K") + "\n";
  }
  const auto path = dir / name;
  std::ofstream(path) << text;
  return path;
}

inline collact::Json recsys_config(const std::filesystem::path& ratings) {
  collact::Json j = collact::Json::parse(R"({
    "name": "mini",
    "family": "recsys",
    "model": {"factors": 4, "epochs": 8, "learning_rate": 0.02, "regularization": 0.02, "grid": "none"},
    "clustering": {"Q": 3, "method": "cosine_kmedoids", "seed_mode": "max_distance"},
    "evaluation": {"K": 10, "V": 3},
    "collectives": [{"archetype": "promoter", "size": 6, "propensity": 0.75}],
    "trials": 2,
    "master_seed": 5
  })");
  j["dataset"] = {{"path", ratings.string()}};
  return j;
}

inline collact::Json text_config() {
  return collact::Json::parse(R"({
    "name": "mini-text",
    "family": "textclass",
    "dataset": {"synthetic": {"class_count": 4, "vocab_size": 300, "doc_length": [20, 40],
                              "train_size": 240, "test_size": 60, "seed": 3}},
    "model": {"epochs": 40, "learning_rate": 0.1, "l2": 0.0001, "hash_dim": 512},
    "collectives": [{"participation": 0.05, "signal": "sig0", "target_class": "job1"}],
    "trials": 2,
    "master_seed": 8
  })");
}

inline collact::Json linear_config(const std::filesystem::path& train, const std::filesystem::path& test) {
  collact::Json j = collact::Json::parse(R"({
    "name": "mini-adult",
    "family": "linear",
    "model": {"epochs": 60, "learning_rate": 0.5, "l2": 0.0001},
    "collectives": [{"archetype": "promoter", "occupation": "Craft-repair", "participation": 0.5, "propensity": 1.0}],
    "trials": 2,
    "master_seed": 9
  })");
  j["dataset"] = {{"train", train.string()}, {"test", test.string()}};
  return j;
}

}  // namespace fixtures
