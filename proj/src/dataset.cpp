#include "oobval/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "oobval/rng.hpp"

namespace oobval {

void Dataset::validate() const {
  if (features.rows == 0 || features.cols == 0) throw DataError("dataset: empty feature matrix");
  if (labels.size() != features.rows) throw DataError("dataset: labels/features row mismatch");
  if (feature_names.size() != features.cols) throw DataError("dataset: feature_names/columns mismatch");
  if (num_classes < 2) throw DataError("dataset: needs at least two classes");
  std::unordered_set<std::string> seen;
  for (const auto& name : feature_names) {
    if (name.empty()) throw DataError("dataset: empty feature name");
    if (!seen.insert(name).second) throw DataError("dataset: duplicate feature name '" + name + "'");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw DataError("dataset: label out of range");
  }
  for (double x : features.data) {
    if (!std::isfinite(x)) throw DataError("dataset: non-finite feature value");
  }
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string position(std::size_t row1, std::size_t col1) {
  return "row " + std::to_string(row1) + ", column " + std::to_string(col1);
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& label_column, bool has_header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");

  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    rows.push_back(split_line(line));
  }
  // A trailing newline produces one empty record at the end; drop it.
  if (!rows.empty() && rows.back().size() == 1 && rows.back()[0].empty()) rows.pop_back();
  if (rows.empty()) throw DataError("'" + path + "': empty file");

  const std::size_t width = rows[0].size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width) {
      throw DataError("'" + path + "': row " + std::to_string(r + 1) + " has " +
                      std::to_string(rows[r].size()) + " fields, expected " + std::to_string(width));
    }
  }
  if (width < 2) throw DataError("'" + path + "': needs at least one feature and a label column");

  std::vector<std::string> header;
  std::size_t first_data_row = 0;
  if (has_header) {
    header = rows[0];
    first_data_row = 1;
    if (rows.size() == 1) throw DataError("'" + path + "': header but no data rows");
  } else {
    for (std::size_t c = 0; c < width; ++c) header.push_back("c" + std::to_string(c));
  }

  // Resolve the label column: by header name first, else as a decimal index.
  std::size_t label_idx = width;
  if (has_header) {
    for (std::size_t c = 0; c < width; ++c) {
      if (header[c] == label_column) {
        label_idx = c;
        break;
      }
    }
  }
  if (label_idx == width) {
    std::size_t parsed = 0;
    auto [p, ec] = std::from_chars(label_column.data(), label_column.data() + label_column.size(), parsed);
    if (ec == std::errc{} && p == label_column.data() + label_column.size() && parsed < width) {
      label_idx = parsed;
    } else {
      throw DataError("'" + path + "': label column '" + label_column + "' not found");
    }
  }

  Dataset ds;
  const std::size_t n = rows.size() - first_data_row;
  const std::size_t d = width - 1;
  ds.features = Matrix(n, d);
  ds.labels.resize(n);
  for (std::size_t c = 0; c < width; ++c) {
    if (c != label_idx) ds.feature_names.push_back(has_header ? header[c] : ("f" + std::to_string(c)));
  }
  {
    std::unordered_set<std::string> seen;
    for (std::size_t j = 0; j < ds.feature_names.size(); ++j) {
      if (!seen.insert(ds.feature_names[j]).second) {
        throw DataError("'" + path + "': duplicate feature name '" + ds.feature_names[j] + "'");
      }
    }
  }

  std::unordered_map<std::string, int> label_codes;  // first-appearance encoding
  for (std::size_t r = 0; r < n; ++r) {
    const auto& fields = rows[r + first_data_row];
    std::size_t out_col = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (c == label_idx) {
        const std::string& tok = fields[c];
        if (tok.empty()) {
          throw DataError("'" + path + "': empty label at " + position(r + first_data_row + 1, c + 1));
        }
        auto it = label_codes.find(tok);
        if (it == label_codes.end()) {
          it = label_codes.emplace(tok, static_cast<int>(label_codes.size())).first;
        }
        ds.labels[r] = it->second;
        continue;
      }
      const std::string& tok = fields[c];
      double value = 0.0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
      if (ec != std::errc{} || p != tok.data() + tok.size()) {
        throw DataError("'" + path + "': cannot parse '" + tok + "' at " +
                        position(r + first_data_row + 1, c + 1));
      }
      if (!std::isfinite(value)) {
        throw DataError("'" + path + "': non-finite value at " + position(r + first_data_row + 1, c + 1));
      }
      ds.features(r, out_col++) = value;
    }
  }
  ds.num_classes = static_cast<int>(label_codes.size());
  if (ds.num_classes < 2) throw DataError("'" + path + "': only one class present");
  ds.validate();
  return ds;
}

void save_csv(const Dataset& ds, const std::string& path, const std::string& label_name) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (const auto& name : ds.feature_names) out << name << ',';
  out << label_name << '\n';
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t j = 0; j < ds.d(); ++j) out << format_double(ds.features(i, j)) << ',';
    out << ds.labels[i] << '\n';
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

std::pair<Dataset, NormalizationParams> normalize(const Dataset& ds) {
  ds.validate();
  NormalizationParams params;
  const std::size_t n = ds.n(), d = ds.d();
  params.means.resize(d);
  params.stds.resize(d);
  params.constant.assign(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += ds.features(i, j);
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double delta = ds.features(i, j) - mean;
      ss += delta * delta;
    }
    const double std_dev = std::sqrt(ss / static_cast<double>(n));
    params.means[j] = mean;
    params.stds[j] = std::max(std_dev, kStdFloor);
    params.constant[j] = std_dev < kStdFloor ? 1 : 0;
  }
  return {apply_normalization(ds, params), params};
}

Dataset apply_normalization(const Dataset& ds, const NormalizationParams& params) {
  if (params.means.size() != ds.d()) throw DataError("normalization params: dimension mismatch");
  Dataset out = ds;
  for (std::size_t j = 0; j < ds.d(); ++j) {
    if (params.constant[j]) {
      for (std::size_t i = 0; i < ds.n(); ++i) out.features(i, j) = 0.0;
      continue;
    }
    const double mean = params.means[j];
    const double inv = 1.0 / params.stds[j];
    for (std::size_t i = 0; i < ds.n(); ++i) out.features(i, j) = (ds.features(i, j) - mean) * inv;
  }
  return out;
}

Dataset invert_normalization(const Dataset& ds, const NormalizationParams& params) {
  if (params.means.size() != ds.d()) throw DataError("normalization params: dimension mismatch");
  Dataset out = ds;
  for (std::size_t j = 0; j < ds.d(); ++j) {
    for (std::size_t i = 0; i < ds.n(); ++i) {
      out.features(i, j) = ds.features(i, j) * params.stds[j] + params.means[j];
    }
  }
  return out;
}

namespace {

Dataset take_rows(const Dataset& ds, const std::vector<std::uint32_t>& rows) {
  Dataset out;
  out.features = Matrix(rows.size(), ds.d());
  out.labels.resize(rows.size());
  out.feature_names = ds.feature_names;
  out.num_classes = ds.num_classes;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t src = rows[i];
    std::copy_n(ds.features.row(src).data(), ds.d(), out.features.row(i).data());
    out.labels[i] = ds.labels[src];
  }
  return out;
}

}  // namespace

std::pair<Dataset, Dataset> split(const Dataset& ds, std::size_t n_train, std::size_t n_test,
                                  std::uint64_t seed) {
  ds.validate();
  if (n_train == 0 || n_test == 0) throw DataError("split: both parts must be non-empty");
  if (n_train + n_test > ds.n()) throw DataError("split: n_train + n_test exceeds dataset size");
  Rng rng(seed);
  std::vector<std::uint32_t> idx(ds.n());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = 0; i < n_train + n_test; ++i) {
    const std::size_t j = i + rng.uniform_below(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  std::vector<std::uint32_t> train_rows(idx.begin(), idx.begin() + n_train);
  std::vector<std::uint32_t> test_rows(idx.begin() + n_train, idx.begin() + n_train + n_test);
  return {take_rows(ds, train_rows), take_rows(ds, test_rows)};
}

std::pair<Dataset, PointMask> flip_labels(const Dataset& ds, double ratio, std::uint64_t seed) {
  ds.validate();
  if (ds.num_classes != 2) throw DataError("flip_labels: binary labels required");
  if (ratio < 0.0 || ratio > 1.0) throw DataError("flip_labels: ratio out of [0,1]");
  const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(ds.n())));
  Rng rng(seed);
  const auto rows = sample_without_replacement(ds.n(), count, rng);
  Dataset out = ds;
  PointMask mask(ds.n(), 0);
  for (std::uint32_t r : rows) {
    out.labels[r] = 1 - out.labels[r];
    mask[r] = 1;
  }
  return {std::move(out), std::move(mask)};
}

Dataset synth_gaussian(std::size_t n, std::size_t d, double class_sep, std::uint64_t seed) {
  if (n < 2 || d < 1) throw DataError("synth_gaussian: need n >= 2 and d >= 1");
  Dataset ds;
  ds.features = Matrix(n, d);
  ds.labels.resize(n);
  ds.num_classes = 2;
  for (std::size_t j = 0; j < d; ++j) ds.feature_names.push_back("f" + std::to_string(j));
  const double shift = (class_sep / 2.0) / std::sqrt(static_cast<double>(d));
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    ds.labels[i] = y;
    const double mean = y == 1 ? shift : -shift;
    for (std::size_t j = 0; j < d; ++j) ds.features(i, j) = mean + rng.normal();
  }
  return ds;
}

std::uint64_t fingerprint(const Dataset& ds) {
  std::uint64_t h = 14695981039346656037ULL;
  auto absorb = [&h](const void* bytes, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  const std::uint64_t shape[3] = {ds.n(), ds.d(), static_cast<std::uint64_t>(ds.num_classes)};
  absorb(shape, sizeof(shape));
  absorb(ds.labels.data(), ds.labels.size() * sizeof(int));
  absorb(ds.features.data.data(), ds.features.data.size() * sizeof(double));
  for (const auto& name : ds.feature_names) {
    absorb(name.data(), name.size());
    const char sep = '\0';
    absorb(&sep, 1);
  }
  return h;
}

}  // namespace oobval
