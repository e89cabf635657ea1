#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "f2scil/datasets.hpp"
#include "f2scil/error.hpp"

using namespace f2scil;

namespace {

LabeledDataset balanced(std::size_t classes, std::size_t per_class, std::uint64_t seed) {
  BlobsConfig cfg;
  cfg.classes = classes;
  cfg.dim = 2;
  cfg.per_class = per_class;
  cfg.test_per_class = 1;
  return make_blobs(cfg, seed).train;
}

void check_partition(const LabeledDataset& data, const std::vector<ClientShard>& shards) {
  std::vector<int> seen(data.size(), 0);
  for (const auto& s : shards) {
    CHECK(std::is_sorted(s.indices.begin(), s.indices.end()));
    for (auto i : s.indices) ++seen.at(i);
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; }));
}

}  // namespace

TEST_CASE("blobs") {
  BlobsConfig cfg;
  cfg.classes = 2;
  cfg.spread = 0.0;
  auto split = make_blobs(cfg, 4);
  for (std::size_t r = 0; r < split.train.size(); ++r)
    for (std::size_t c = 0; c < cfg.dim; ++c)
      CHECK(split.train.samples.at(r, c) == split.centers.at(static_cast<std::size_t>(split.train.labels[r]), c));

  auto a = make_blobs(BlobsConfig{}, 17), b = make_blobs(BlobsConfig{}, 17);
  CHECK(a.train.samples == b.train.samples);
  CHECK(a.train.labels == b.train.labels);
  CHECK(a.test.samples == b.test.samples);
  CHECK(a.train.size() == 2000);
  CHECK(a.test.size() == 1000);
  CHECK_FALSE(a.train.samples == make_blobs(BlobsConfig{}, 18).train.samples);

  BlobsConfig bad;
  bad.classes = 1;
  CHECK_THROWS_AS(make_blobs(bad, 1), ConfigError);
}

TEST_CASE("session schedule") {
  auto split = make_blobs(BlobsConfig{}, 1);
  ScheduleConfig cfg;  // 12 base, 4 sessions of 2-way 5-shot
  auto data = build_schedule(split.train, split.test, cfg, 3);
  REQUIRE(data.sessions.size() == 5);
  CHECK(data.sessions[0].train.size() == 12 * 100);

  std::set<int> order(data.schedule.class_order.begin(), data.schedule.class_order.end());
  CHECK(order.size() == 20);

  std::set<int> all_train_labels;
  for (std::size_t t = 0; t < 5; ++t) {
    const auto& s = data.sessions[t];
    if (t > 0) CHECK(s.train.size() == 10);
    // Counting oracle: test labels lie in [0, seen) with 50 per class.
    const std::size_t seen = 12 + 2 * t;
    std::vector<std::size_t> counts(20, 0);
    for (int l : s.test.labels) ++counts.at(static_cast<std::size_t>(l));
    for (std::size_t c = 0; c < 20; ++c) CHECK(counts[c] == (c < seen ? 50u : 0u));
    CHECK(s.test.size() == seen * 50);
    for (int l : s.train.labels) {
      CHECK(l >= static_cast<int>(s.classes.begin));
      CHECK(l < static_cast<int>(s.classes.end));
      // label spaces of distinct sessions are disjoint
      if (t > 0) CHECK(all_train_labels.count(l) == 0);
    }
    for (int l : s.train.labels) all_train_labels.insert(l);
  }

  // Relabeled samples keep their original feature rows.
  const int orig = data.schedule.class_order[13];
  const auto& s1 = data.sessions[1].train;
  for (std::size_t r = 0; r < s1.size(); ++r) {
    if (s1.labels[r] != 13) continue;
    bool found = false;
    for (std::size_t q = 0; q < split.train.size() && !found; ++q)
      found = split.train.labels[q] == orig &&
              std::equal(s1.samples.row(r).begin(), s1.samples.row(r).end(), split.train.samples.row(q).begin());
    CHECK(found);
  }

  ScheduleConfig none = cfg;
  none.sessions = 0;
  auto central = build_schedule(split.train, split.test, none, 3);
  CHECK(central.sessions.size() == 1);

  ScheduleConfig too_many = cfg;
  too_many.sessions = 5;
  CHECK_THROWS_AS(build_schedule(split.train, split.test, too_many, 3), ConfigError);
  ScheduleConfig too_many_shots = cfg;
  too_many_shots.shot = 101;
  CHECK_THROWS_AS(build_schedule(split.train, split.test, too_many_shots, 3), ConfigError);
}

TEST_CASE("dirichlet partition invariants") {
  auto data = balanced(5, 25, 2);
  for (std::size_t m : {1u, 3u, 5u, 9u})
    for (double alpha : {0.05, 1.0, 1000.0}) {
      auto shards = dirichlet_partition(data, m, alpha, 11);
      REQUIRE(shards.size() == m);
      check_partition(data, shards);
      std::size_t total = 0;
      for (const auto& s : shards) total += s.sample_count();
      CHECK(total == data.size());
    }
  auto one = dirichlet_partition(data, 1, 1.0, 5);
  CHECK(one[0].sample_count() == data.size());

  auto a = dirichlet_partition(data, 4, 1.0, 8), b = dirichlet_partition(data, 4, 1.0, 8);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a[i].indices == b[i].indices);

  CHECK_THROWS_AS(dirichlet_partition(data, 3, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(dirichlet_partition(data, 3, -1.0, 1), ConfigError);
  CHECK_THROWS_AS(dirichlet_partition(data, 0, 1.0, 1), ConfigError);
}

TEST_CASE("large alpha approaches the global prior") {
  auto data = balanced(5, 100, 3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto shards = dirichlet_partition(data, 5, 1000.0, seed);
    auto counts = shard_class_counts(data, shards);
    for (const auto& row : counts) {
      double n = 0;
      for (auto c : row) n += static_cast<double>(c);
      REQUIRE(n > 0);
      for (auto c : row) CHECK(std::abs(static_cast<double>(c) / n - 0.2) <= 0.10);
    }
  }
}

TEST_CASE("small alpha concentrates clients on few classes") {
  auto data = balanced(5, 25, 4);
  std::size_t concentrated = 0, clients = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto shards = dirichlet_partition(data, 5, 0.05, seed);
    for (auto row : shard_class_counts(data, shards)) {
      double n = 0;
      for (auto c : row) n += static_cast<double>(c);
      if (n == 0) continue;
      std::sort(row.rbegin(), row.rend());
      ++clients;
      if (static_cast<double>(row[0] + row[1]) >= 0.7 * n) ++concentrated;
    }
  }
  CHECK(static_cast<double>(concentrated) >= 0.8 * static_cast<double>(clients));
}

TEST_CASE("csv ingestion and json audit") {
  const auto path = std::filesystem::temp_directory_path() / "f2scil_csv_test.csv";
  {
    std::ofstream f(path);
    f << "0.5,1.5,0\n-1,2,2\n3,4,1\n";
  }
  auto d = read_csv_dataset(path);
  std::filesystem::remove(path);
  CHECK(d.size() == 3);
  CHECK(d.dim() == 2);
  CHECK(d.class_count == 3);
  CHECK(d.samples.at(1, 0) == -1.0);
  CHECK(d.labels == std::vector<int>{0, 2, 1});

  auto data = balanced(3, 10, 1);
  auto shards = dirichlet_partition(data, 2, 1.0, 1);
  auto j = shards_to_json(data, shards);
  CHECK(j.dump().find("client") != std::string::npos);
}
