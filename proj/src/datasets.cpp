#include "f2scil/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "f2scil/error.hpp"
#include "f2scil/rng.hpp"

namespace f2scil {

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.class_count = class_count;
  out.samples = samples.gather_rows(indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels.at(i));
  if (indices.empty()) out.samples = Tensor({0, samples.cols()});
  return out;
}

void LabeledDataset::validate() const {
  require(samples.rank() == 2, "dataset samples must be a matrix");
  require(samples.rows() == labels.size(), "dataset has " + std::to_string(samples.rows()) + " samples but " +
                                               std::to_string(labels.size()) + " labels");
  for (int l : labels)
    require(l >= 0 && static_cast<std::size_t>(l) < class_count, "label " + std::to_string(l) + " out of range");
}

BlobsSplit make_blobs(const BlobsConfig& cfg, std::uint64_t seed) {
  if (cfg.classes < 2) throw ConfigError("data.classes must be >= 2");
  if (cfg.dim < 2) throw ConfigError("data.dim must be >= 2");
  if (cfg.spread < 0.0) throw ConfigError("data.spread must be >= 0");
  Rng rng(seed);
  BlobsSplit out;
  out.centers = normal_tensor({cfg.classes, cfg.dim}, rng, cfg.center_scale);
  auto draw = [&](std::size_t per_class) {
    LabeledDataset d;
    d.class_count = cfg.classes;
    d.samples = Tensor({cfg.classes * per_class, cfg.dim});
    std::normal_distribution<double> noise(0.0, 1.0);
    std::size_t r = 0;
    for (std::size_t c = 0; c < cfg.classes; ++c)
      for (std::size_t i = 0; i < per_class; ++i, ++r) {
        for (std::size_t j = 0; j < cfg.dim; ++j) d.samples.at(r, j) = out.centers.at(c, j) + cfg.spread * noise(rng);
        d.labels.push_back(static_cast<int>(c));
      }
    return d;
  };
  out.train = draw(cfg.per_class);
  out.test = draw(cfg.test_per_class);
  return out;
}

LabeledDataset read_csv_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open dataset CSV " + path.string());
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    try {
      while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": non-numeric cell");
    }
    if (row.size() < 2) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": need features and a label");
    if (dim == 0) dim = row.size() - 1;
    if (row.size() - 1 != dim) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": ragged row");
    const double lab = row.back();
    if (lab < 0 || lab != std::floor(lab))
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": label must be a nonnegative integer");
    labels.push_back(static_cast<int>(lab));
    values.insert(values.end(), row.begin(), row.end() - 1);
  }
  if (labels.empty()) throw ConfigError("dataset CSV " + path.string() + " has no rows");
  LabeledDataset d;
  d.samples = Tensor({labels.size(), dim}, std::move(values));
  d.class_count = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
  d.labels = std::move(labels);
  return d;
}

ColumnRange SessionSchedule::classes_of(std::size_t session) const {
  require(session <= config.sessions, "session " + std::to_string(session) + " beyond the schedule");
  if (session == 0) return {0, config.base_classes};
  const std::size_t b = config.base_classes + (session - 1) * config.way;
  return {b, b + config.way};
}

ScheduledData build_schedule(const LabeledDataset& train, const LabeledDataset& test, const ScheduleConfig& cfg,
                             std::uint64_t seed) {
  train.validate();
  test.validate();
  const std::size_t C = train.class_count;
  if (cfg.base_classes == 0) throw ConfigError("schedule.base_classes must be >= 1");
  if (cfg.sessions > 0 && (cfg.way == 0 || cfg.shot == 0))
    throw ConfigError("schedule.way and schedule.shot must be >= 1 when schedule.sessions > 0");
  if (cfg.base_classes + cfg.sessions * cfg.way > C)
    throw ConfigError("schedule needs base_classes + sessions * way = " +
                      std::to_string(cfg.base_classes + cfg.sessions * cfg.way) + " classes, dataset has " +
                      std::to_string(C));

  Rng rng(seed);
  ScheduledData out;
  out.schedule.config = cfg;
  out.schedule.total_classes = C;
  out.schedule.class_order.resize(C);
  std::iota(out.schedule.class_order.begin(), out.schedule.class_order.end(), 0);
  std::shuffle(out.schedule.class_order.begin(), out.schedule.class_order.end(), rng);
  std::vector<int> to_schedule(C);
  for (std::size_t i = 0; i < C; ++i) to_schedule[static_cast<std::size_t>(out.schedule.class_order[i])] = static_cast<int>(i);

  auto by_class = [&](const LabeledDataset& d) {
    std::vector<std::vector<std::size_t>> idx(C);
    for (std::size_t i = 0; i < d.size(); ++i)
      idx[static_cast<std::size_t>(to_schedule[static_cast<std::size_t>(d.labels[i])])].push_back(i);
    return idx;
  };
  const auto train_idx = by_class(train);
  const auto test_idx = by_class(test);

  auto relabeled = [&](const LabeledDataset& d, const std::vector<std::size_t>& rows) {
    LabeledDataset s = d.subset(rows);
    for (int& l : s.labels) l = to_schedule[static_cast<std::size_t>(l)];
    s.class_count = C;
    return s;
  };

  std::vector<std::size_t> test_rows;
  for (std::size_t t = 0; t <= cfg.sessions; ++t) {
    const ColumnRange cls = out.schedule.classes_of(t);
    std::vector<std::size_t> rows;
    for (std::size_t c = cls.begin; c < cls.end; ++c) {
      std::vector<std::size_t> pool = train_idx[c];
      if (t == 0) {
        if (pool.empty()) throw ConfigError("base class " + std::to_string(c) + " has no training samples");
      } else {
        if (pool.size() < cfg.shot)
          throw ConfigError("class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                            " training samples, schedule.shot needs " + std::to_string(cfg.shot));
        std::shuffle(pool.begin(), pool.end(), rng);
        pool.resize(cfg.shot);
        std::sort(pool.begin(), pool.end());
      }
      rows.insert(rows.end(), pool.begin(), pool.end());
      test_rows.insert(test_rows.end(), test_idx[c].begin(), test_idx[c].end());
    }
    SessionData sd;
    sd.session = t;
    sd.classes = cls;
    sd.train = relabeled(train, rows);
    sd.test = relabeled(test, test_rows);
    out.sessions.push_back(std::move(sd));
  }

  const Tensor& base = out.sessions[0].train.samples;
  const std::size_t d = train.dim();
  out.lower = Tensor({d}, 0.0);
  out.upper = Tensor({d}, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double lo = base.at(0, j), hi = base.at(0, j);
    for (std::size_t r = 1; r < base.rows(); ++r) {
      lo = std::min(lo, base.at(r, j));
      hi = std::max(hi, base.at(r, j));
    }
    if (hi <= lo) {
      lo -= 1.0;
      hi += 1.0;
    }
    out.lower[j] = lo;
    out.upper[j] = hi;
  }
  return out;
}

std::vector<ClientShard> dirichlet_partition(const LabeledDataset& data, std::size_t clients, double alpha,
                                             std::uint64_t seed) {
  if (clients == 0) throw ConfigError("clients must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("dirichlet alpha must be > 0 (got " + std::to_string(alpha) + ")");
  data.validate();
  Rng rng(seed);
  std::vector<ClientShard> shards(clients);
  for (std::size_t m = 0; m < clients; ++m) shards[m].client_id = m;

  std::vector<std::vector<std::size_t>> per_class(data.class_count);
  for (std::size_t i = 0; i < data.size(); ++i) per_class[static_cast<std::size_t>(data.labels[i])].push_back(i);

  std::gamma_distribution<double> gamma(alpha, 1.0);
  for (auto& idx : per_class) {
    if (idx.empty()) continue;
    std::vector<double> p(clients);
    double total = 0.0;
    for (double& v : p) total += (v = gamma(rng));
    if (!(total > 0.0)) {
      // Every draw underflowed (tiny alpha); the limit is a point mass.
      std::fill(p.begin(), p.end(), 0.0);
      p[std::uniform_int_distribution<std::size_t>(0, clients - 1)(rng)] = 1.0;
      total = 1.0;
    }
    const std::size_t n = idx.size();
    std::vector<std::size_t> count(clients);
    std::vector<double> frac(clients);
    std::size_t assigned = 0;
    for (std::size_t m = 0; m < clients; ++m) {
      const double q = static_cast<double>(n) * p[m] / total;
      count[m] = static_cast<std::size_t>(std::floor(q));
      frac[m] = q - std::floor(q);
      assigned += count[m];
    }
    std::vector<std::size_t> order(clients);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++count[order[k % clients]];

    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t off = 0;
    for (std::size_t m = 0; m < clients; ++m) {
      shards[m].indices.insert(shards[m].indices.end(), idx.begin() + static_cast<std::ptrdiff_t>(off),
                               idx.begin() + static_cast<std::ptrdiff_t>(off + count[m]));
      off += count[m];
    }
  }
  for (auto& s : shards) std::sort(s.indices.begin(), s.indices.end());
  return shards;
}

std::vector<std::vector<std::size_t>> shard_class_counts(const LabeledDataset& data,
                                                         std::span<const ClientShard> shards) {
  std::vector<std::vector<std::size_t>> out(shards.size(), std::vector<std::size_t>(data.class_count, 0));
  for (std::size_t m = 0; m < shards.size(); ++m)
    for (std::size_t i : shards[m].indices) ++out[m][static_cast<std::size_t>(data.labels.at(i))];
  return out;
}

nlohmann::json schedule_to_json(const ScheduledData& data) {
  const auto& s = data.schedule;
  nlohmann::json j;
  j["base_classes"] = s.config.base_classes;
  j["sessions"] = s.config.sessions;
  j["way"] = s.config.way;
  j["shot"] = s.config.shot;
  j["total_classes"] = s.total_classes;
  j["class_order"] = s.class_order;
  j["session_list"] = nlohmann::json::array();
  for (const auto& sd : data.sessions) {
    j["session_list"].push_back({{"session", sd.session},
                                 {"classes", {sd.classes.begin, sd.classes.end}},
                                 {"train_samples", sd.train.size()},
                                 {"test_samples", sd.test.size()}});
  }
  return j;
}

nlohmann::json shards_to_json(const LabeledDataset& data, std::span<const ClientShard> shards) {
  const auto counts = shard_class_counts(data, shards);
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t m = 0; m < shards.size(); ++m) {
    nlohmann::json hist = nlohmann::json::object();
    for (std::size_t c = 0; c < counts[m].size(); ++c)
      if (counts[m][c] > 0) hist[std::to_string(c)] = counts[m][c];
    arr.push_back({{"client", shards[m].client_id},
                   {"sample_count", shards[m].sample_count()},
                   {"indices", shards[m].indices},
                   {"class_counts", hist}});
  }
  return arr;
}

}  // namespace f2scil
