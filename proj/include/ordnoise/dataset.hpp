#pragma once

// Synthetic ordinal datasets, CSV ingestion and stratified k-fold splits.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ordnoise/error.hpp"
#include "ordnoise/text.hpp"
#include "ordnoise/rng.hpp"

namespace ordnoise {

struct Sample {
  std::vector<double> features;
  int clean_label = 1;  // 1..C
  int noisy_label = 1;  // 1..C
  std::int64_t id = 0;
};

struct Dataset {
  int num_classes = 0;
  int dim = 0;
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }

  std::vector<int> clean_labels() const {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.clean_label);
    return out;
  }

  void set_noisy_labels(std::span<const int> noisy) {
    if (noisy.size() != samples.size()) throw ShapeError("noisy label count differs from dataset size");
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      if (noisy[i] < 1 || noisy[i] > num_classes)
        throw InvalidClassError("noisy label " + std::to_string(noisy[i]) + " out of range");
      samples[i].noisy_label = noisy[i];
    }
  }
};

// Per-class counts of the LIMUC endoscopy dataset (Mayo 0..3).
inline constexpr std::array<int, 4> kLimucClassCounts = {6105, 3052, 1254, 865};

struct BlobSpec {
  int num_classes = 4;
  int dim = 2;
  std::vector<int> counts;      // per class, length num_classes
  double spacing = 1.0;         // distance between consecutive class means
  double feature_scale = 0.6;   // isotropic standard deviation
  std::uint64_t seed = 0;
};

// Class c is drawn from N(c * spacing * e_1, feature_scale^2 I). Samples are
// emitted class by class with ids 0..N-1.
inline Dataset generate_ordinal_blobs(const BlobSpec& spec) {
  if (spec.num_classes < 2) throw InvalidParameterError("generate_ordinal_blobs: C must be >= 2");
  if (spec.dim < 1) throw InvalidParameterError("generate_ordinal_blobs: d must be >= 1");
  if (spec.counts.size() != static_cast<std::size_t>(spec.num_classes))
    throw InvalidParameterError("generate_ordinal_blobs: need one count per class");
  for (int n : spec.counts)
    if (n < 1) throw InvalidParameterError("generate_ordinal_blobs: every class count must be >= 1");
  if (!(spec.spacing > 0.0)) throw InvalidParameterError("generate_ordinal_blobs: spacing must be > 0");
  if (!(spec.feature_scale > 0.0))
    throw InvalidParameterError("generate_ordinal_blobs: feature scale must be > 0");

  Rng rng(derive_seed(spec.seed, "blobs"));
  Dataset ds;
  ds.num_classes = spec.num_classes;
  ds.dim = spec.dim;
  std::int64_t next_id = 0;
  for (int c = 1; c <= spec.num_classes; ++c) {
    for (int k = 0; k < spec.counts[static_cast<std::size_t>(c - 1)]; ++k) {
      Sample s;
      s.features.resize(static_cast<std::size_t>(spec.dim));
      for (int j = 0; j < spec.dim; ++j) {
        const double mean = j == 0 ? c * spec.spacing : 0.0;
        s.features[static_cast<std::size_t>(j)] = mean + spec.feature_scale * rng.normal();
      }
      s.clean_label = c;
      s.noisy_label = c;
      s.id = next_id++;
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline double parse_double(const std::string& cell, std::size_t lineno) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    throw ParseError("cannot parse number '" + cell + "'", lineno);
  }
  if (used != cell.size() || !std::isfinite(v))
    throw ParseError("cannot parse number '" + cell + "'", lineno);
  return v;
}

inline long long parse_integer(const std::string& cell, std::size_t lineno) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(cell, &used);
  } catch (const std::exception&) {
    throw ParseError("cannot parse integer '" + cell + "'", lineno);
  }
  if (used != cell.size()) throw ParseError("cannot parse integer '" + cell + "'", lineno);
  return v;
}

}  // namespace detail

// Reads `id,label,f1..fd`. C is the largest label; labels must cover 1..C.
inline Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line)) throw ParseError("dataset csv: empty file", lineno);
  const auto header = detail::split_csv_line(detail::trim(line));
  if (header.size() < 3 || detail::trim(header[0]) != "id" || detail::trim(header[1]) != "label")
    throw ParseError("dataset csv: header must be id,label,f1..fd", lineno);
  for (std::size_t j = 2; j < header.size(); ++j)
    if (detail::trim(header[j]) != "f" + std::to_string(j - 1))
      throw ParseError("dataset csv: expected column f" + std::to_string(j - 1), lineno);
  const auto dim = static_cast<int>(header.size() - 2);

  Dataset ds;
  ds.dim = dim;
  std::set<std::int64_t> ids;
  std::set<int> classes;
  while (std::getline(is, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("dataset csv: expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(cells.size()),
                       lineno);
    Sample s;
    s.id = detail::parse_integer(detail::trim(cells[0]), lineno);
    const auto label = detail::parse_integer(detail::trim(cells[1]), lineno);
    if (label < 1)
      throw InvalidClassError("dataset csv: label " + std::to_string(label) + " below 1 (line " +
                              std::to_string(lineno) + ")");
    s.clean_label = static_cast<int>(label);
    s.noisy_label = s.clean_label;
    for (int j = 0; j < dim; ++j)
      s.features.push_back(detail::parse_double(detail::trim(cells[static_cast<std::size_t>(j + 2)]), lineno));
    if (!ids.insert(s.id).second)
      throw ParseError("dataset csv: duplicate id " + std::to_string(s.id), lineno);
    classes.insert(s.clean_label);
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw ParseError("dataset csv: no data rows", lineno);
  const int max_class = *classes.rbegin();
  if (static_cast<int>(classes.size()) != max_class)
    throw InvalidClassError("dataset csv: class labels are not contiguous from 1 to " +
                            std::to_string(max_class));
  if (max_class < 2) throw InvalidClassError("dataset csv: need at least 2 classes");
  ds.num_classes = max_class;
  return ds;
}

inline Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file " + path.string());
  return read_dataset_csv(in);
}

inline void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  os << "id,label";
  for (int j = 1; j <= ds.dim; ++j) os << ",f" << j;
  os << '\n';
  for (const auto& s : ds.samples) {
    os << s.id << ',' << s.clean_label;
    for (double v : s.features) os << ',' << to_text(v);
    os << '\n';
  }
}

inline void write_noise_sidecar(std::ostream& os, const Dataset& ds) {
  os << "id,clean_label,noisy_label\n";
  for (const auto& s : ds.samples) os << s.id << ',' << s.clean_label << ',' << s.noisy_label << '\n';
}

// Positions (not ids) into Dataset::samples.
struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

struct SplitPlan {
  int fold_count = 0;
  std::vector<Fold> folds;
};

namespace detail {

// Integer table with the given row and column sums whose entries lie within 1
// of row_sum[r] * col_sum[c] / total: floors first, then the leftover units
// are placed column by column on the rows with the most left to place.
inline std::vector<std::vector<std::size_t>> proportional_table(const std::vector<std::size_t>& row_sums,
                                                                const std::vector<std::size_t>& col_sums) {
  std::size_t total = 0;
  for (auto r : row_sums) total += r;
  const std::size_t rows = row_sums.size(), cols = col_sums.size();
  std::vector<std::vector<std::size_t>> x(rows, std::vector<std::size_t>(cols));
  std::vector<std::size_t> row_left = row_sums, col_left = col_sums;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      x[r][c] = row_sums[r] * col_sums[c] / total;
      row_left[r] -= x[r][c];
      col_left[c] -= x[r][c];
    }
  std::vector<std::size_t> col_order(cols);
  for (std::size_t c = 0; c < cols; ++c) col_order[c] = c;
  std::stable_sort(col_order.begin(), col_order.end(),
                   [&](std::size_t a, std::size_t b) { return col_left[a] > col_left[b]; });
  for (std::size_t c : col_order) {
    std::vector<std::size_t> row_order(rows);
    for (std::size_t r = 0; r < rows; ++r) row_order[r] = r;
    std::stable_sort(row_order.begin(), row_order.end(), [&](std::size_t a, std::size_t b) {
      if (row_left[a] != row_left[b]) return row_left[a] > row_left[b];
      return (row_sums[a] * col_sums[c]) % total > (row_sums[b] * col_sums[c]) % total;
    });
    for (std::size_t i = 0; i < col_left[c]; ++i) {
      const std::size_t r = row_order[i];
      if (row_left[r] == 0) throw StratificationError("make_folds: cannot balance class counts");
      ++x[r][c];
      --row_left[r];
    }
    col_left[c] = 0;
  }
  return x;
}

// Per-class validation counts for one fold: each class's validation and
// train counts stay within 1 of n_c * size / total. Returns an empty vector
// when no assignment hits `val_size` exactly.
inline std::vector<std::size_t> validation_counts(const std::vector<std::size_t>& class_sizes,
                                                  const std::vector<std::size_t>& remaining, std::size_t total,
                                                  std::size_t val_size, std::size_t train_size) {
  auto within = [&](std::size_t count, std::size_t n, std::size_t size) {
    const long long diff = static_cast<long long>(count * total) - static_cast<long long>(n * size);
    return std::llabs(diff) <= static_cast<long long>(total);
  };
  const std::size_t k = class_sizes.size();
  std::vector<std::size_t> lo(k), hi(k), out(k);
  std::size_t sum_lo = 0, sum_hi = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t centre = class_sizes[c] * val_size / total;
    bool any = false;
    for (std::size_t v = centre > 0 ? centre - 1 : 0; v <= centre + 2 && v <= remaining[c]; ++v) {
      if (!within(v, class_sizes[c], val_size) || !within(remaining[c] - v, class_sizes[c], train_size)) continue;
      if (!any) lo[c] = v;
      hi[c] = v;
      any = true;
    }
    if (!any) return {};
    sum_lo += lo[c];
    sum_hi += hi[c];
  }
  if (val_size < sum_lo || val_size > sum_hi) return {};
  out = lo;
  std::size_t extra = val_size - sum_lo;
  while (extra > 0) {
    // Raise the class furthest below its proportional share.
    std::size_t best = k;
    long long best_gap = 0;
    for (std::size_t c = 0; c < k; ++c) {
      if (out[c] >= hi[c]) continue;
      const long long gap = static_cast<long long>(class_sizes[c] * val_size) - static_cast<long long>(out[c] * total);
      if (best == k || gap > best_gap) best = c, best_gap = gap;
    }
    ++out[best];
    --extra;
  }
  return out;
}

}  // namespace detail

// Stratified k-fold plan. Each class is shuffled independently. Per-class
// test counts for every fold come from a proportional rounding of the
// class x fold table, and fold f tests on consecutive runs of each shuffled
// class. The rest of the fold splits 1:3 into validation and train (60/20/20
// at k = 5). Every class count in every split lies within one sample of its
// proportional share.
inline SplitPlan make_folds(const Dataset& ds, int k, std::uint64_t seed) {
  if (k < 2) throw InvalidParameterError("make_folds: k must be >= 2");
  if (ds.size() < static_cast<std::size_t>(k))
    throw InvalidParameterError("make_folds: fewer samples than folds");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) by_class[ds.samples[i].clean_label].push_back(i);
  Rng rng(derive_seed(seed, "folds"));
  std::vector<std::vector<std::size_t>> members;
  std::vector<std::size_t> class_sizes;
  for (auto& [label, list] : by_class) {
    if (list.size() < static_cast<std::size_t>(k))
      throw StratificationError("make_folds: class " + std::to_string(label) + " has " +
                                std::to_string(list.size()) + " samples, fewer than k=" + std::to_string(k));
    rng.shuffle(std::span<std::size_t>(list));
    class_sizes.push_back(list.size());
    members.push_back(list);
  }

  const std::size_t n = ds.size(), uk = static_cast<std::size_t>(k);
  std::vector<std::size_t> fold_sizes(uk, n / uk);
  for (std::size_t f = 0; f < n % uk; ++f) ++fold_sizes[f];
  const auto test_counts = detail::proportional_table(class_sizes, fold_sizes);

  SplitPlan plan;
  plan.fold_count = k;
  plan.folds.resize(uk);
  std::vector<std::size_t> offset(members.size(), 0);
  for (std::size_t f = 0; f < uk; ++f) {
    auto& fold = plan.folds[f];
    std::vector<std::size_t> remaining(members.size());
    for (std::size_t c = 0; c < members.size(); ++c) remaining[c] = class_sizes[c] - test_counts[c][f];

    const std::size_t rest = n - fold_sizes[f];
    const std::size_t nominal = (rest + 2) / 4;
    std::vector<std::size_t> val;
    for (std::size_t step = 0; val.empty() && step <= 2 * members.size() + 2; ++step) {
      const long long delta = (step % 2 ? 1 : -1) * static_cast<long long>((step + 1) / 2);
      const long long size = static_cast<long long>(nominal) + delta;
      if (size < 0 || size > static_cast<long long>(rest)) continue;
      val = detail::validation_counts(class_sizes, remaining, n, static_cast<std::size_t>(size),
                                      rest - static_cast<std::size_t>(size));
    }
    if (val.empty()) throw StratificationError("make_folds: cannot balance validation counts");

    for (std::size_t c = 0; c < members.size(); ++c) {
      const auto& list = members[c];
      const std::size_t size = list.size(), t = test_counts[c][f];
      for (std::size_t i = 0; i < t; ++i) fold.test.push_back(list[offset[c] + i]);
      // The rest of the class in shuffled order, starting just after this fold's test run.
      for (std::size_t i = 0; i < size - t; ++i) {
        const std::size_t pos = list[(offset[c] + t + i) % size];
        (i < val[c] ? fold.validation : fold.train).push_back(pos);
      }
      offset[c] += t;
    }
    std::sort(fold.train.begin(), fold.train.end());
    std::sort(fold.validation.begin(), fold.validation.end());
    std::sort(fold.test.begin(), fold.test.end());
  }
  return plan;
}

// What a trainer is allowed to see of a noisy split: features and attached
// labels only. Clean labels never enter this type.
struct NoisyView {
  int num_classes = 0;
  Eigen::MatrixXd features;       // one row per sample
  std::vector<int> labels;        // noisy, 1-based
  std::vector<std::int64_t> ids;

  std::size_t size() const noexcept { return labels.size(); }
};

// Evaluation split labelled with ground truth (the clean test split).
struct LabeledView {
  int num_classes = 0;
  Eigen::MatrixXd features;
  std::vector<int> labels;  // clean, 1-based

  std::size_t size() const noexcept { return labels.size(); }
};

namespace detail {

inline Eigen::MatrixXd gather_features(const Dataset& ds, std::span<const std::size_t> positions) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(positions.size()), ds.dim);
  for (std::size_t r = 0; r < positions.size(); ++r) {
    const auto& f = ds.samples.at(positions[r]).features;
    for (int j = 0; j < ds.dim; ++j) x(static_cast<Eigen::Index>(r), j) = f[static_cast<std::size_t>(j)];
  }
  return x;
}

}  // namespace detail

inline NoisyView make_noisy_view(const Dataset& ds, std::span<const std::size_t> positions) {
  NoisyView v;
  v.num_classes = ds.num_classes;
  v.features = detail::gather_features(ds, positions);
  for (std::size_t p : positions) {
    v.labels.push_back(ds.samples[p].noisy_label);
    v.ids.push_back(ds.samples[p].id);
  }
  return v;
}

inline LabeledView make_clean_view(const Dataset& ds, std::span<const std::size_t> positions) {
  LabeledView v;
  v.num_classes = ds.num_classes;
  v.features = detail::gather_features(ds, positions);
  for (std::size_t p : positions) v.labels.push_back(ds.samples[p].clean_label);
  return v;
}

}  // namespace ordnoise
