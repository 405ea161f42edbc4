#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "oobval/dataset.hpp"
#include "oobval/rng.hpp"

using namespace oobval;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("oobval_test_" + name);
}

void write_text(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

}  // namespace

TEST_CASE("load_csv resolves the label column by header name") {
  const auto p = temp_file("basic.csv");
  write_text(p, "a,b,label\n1,2,yes\n3,4,no\n5,6,yes\n");
  const Dataset ds = load_csv(p.string(), "label", true);
  CHECK(ds.n() == 3);
  CHECK(ds.d() == 2);
  CHECK(ds.feature_names == std::vector<std::string>{"a", "b"});
  CHECK(ds.num_classes == 2);
  CHECK(ds.labels == std::vector<int>{0, 1, 0});  // first-appearance coding
  CHECK(ds.features(1, 0) == 3.0);
  CHECK(ds.features(2, 1) == 6.0);
}

TEST_CASE("load_csv accepts a decimal column index and headerless files") {
  const auto p = temp_file("noheader.csv");
  write_text(p, "7,1,0.5\n8,0,1.5\n");
  const Dataset ds = load_csv(p.string(), "1", false);
  CHECK(ds.n() == 2);
  CHECK(ds.d() == 2);
  CHECK(ds.labels == std::vector<int>{0, 1});
  CHECK(ds.features(0, 0) == 7.0);
  CHECK(ds.features(0, 1) == 0.5);
}

TEST_CASE("load_csv handles CRLF line endings") {
  const auto p = temp_file("crlf.csv");
  write_text(p, "x,label\r\n1,a\r\n2,b\r\n");
  const Dataset ds = load_csv(p.string(), "label", true);
  CHECK(ds.n() == 2);
  CHECK(ds.features(1, 0) == 2.0);
}

TEST_CASE("load_csv reports malformed input with file positions") {
  const auto ragged = temp_file("ragged.csv");
  write_text(ragged, "a,b,label\n1,2,x\n1,x\n");
  CHECK_THROWS_AS(load_csv(ragged.string(), "label", true), DataError);

  const auto bad_value = temp_file("badvalue.csv");
  write_text(bad_value, "a,label\n1,x\nzzz,y\n");
  try {
    load_csv(bad_value.string(), "label", true);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("column 1") != std::string::npos);
  }

  const auto inf_value = temp_file("inf.csv");
  write_text(inf_value, "a,label\ninf,x\n2,y\n");
  CHECK_THROWS_AS(load_csv(inf_value.string(), "label", true), DataError);

  const auto missing_col = temp_file("missingcol.csv");
  write_text(missing_col, "a,b\n1,2\n");
  CHECK_THROWS_AS(load_csv(missing_col.string(), "label", true), DataError);

  const auto single_class = temp_file("oneclass.csv");
  write_text(single_class, "a,label\n1,x\n2,x\n");
  CHECK_THROWS_AS(load_csv(single_class.string(), "label", true), DataError);

  const auto dup = temp_file("dup.csv");
  write_text(dup, "a,a,label\n1,2,x\n3,4,y\n");
  CHECK_THROWS_AS(load_csv(dup.string(), "label", true), DataError);

  CHECK_THROWS_AS(load_csv("/nonexistent/path.csv", "label", true), DataError);
}

TEST_CASE("save_csv and load_csv round-trip a synthetic dataset exactly") {
  const Dataset ds = synth_gaussian(40, 5, 1.5, 2024);
  const auto p = temp_file("roundtrip.csv");
  save_csv(ds, p.string());
  const Dataset back = load_csv(p.string(), "label", true);
  CHECK(back.features == ds.features);
  CHECK(back.labels == ds.labels);
  CHECK(back.feature_names == ds.feature_names);
  CHECK(back.num_classes == ds.num_classes);
}

TEST_CASE("normalize maps a two-value column to plus and minus one") {
  Dataset ds;
  ds.features = Matrix(2, 1);
  ds.features(0, 0) = 1.0;
  ds.features(1, 0) = 3.0;
  ds.labels = {0, 1};
  ds.feature_names = {"x"};
  ds.num_classes = 2;
  auto [norm, params] = normalize(ds);
  CHECK(norm.features(0, 0) == -1.0);
  CHECK(norm.features(1, 0) == 1.0);
  CHECK(params.means[0] == 2.0);
  CHECK(params.stds[0] == 1.0);
  CHECK(params.constant[0] == 0);
}

TEST_CASE("normalize zeroes constant columns and flags them") {
  Dataset ds;
  ds.features = Matrix(3, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    ds.features(i, 0) = 5.0;
    ds.features(i, 1) = static_cast<double>(i);
  }
  ds.labels = {0, 1, 0};
  ds.feature_names = {"c", "x"};
  ds.num_classes = 2;
  auto [norm, params] = normalize(ds);
  CHECK(params.constant[0] == 1);
  CHECK(params.constant[1] == 0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(norm.features(i, 0) == 0.0);

  Dataset other = ds;
  other.features(0, 0) = 9.0;
  const Dataset applied = apply_normalization(other, params);
  CHECK(applied.features(0, 0) == 0.0);  // constant columns stay suppressed
}

TEST_CASE("normalization statistics come from the fitted set only") {
  const Dataset train = synth_gaussian(200, 3, 1.0, 11);
  const Dataset test = synth_gaussian(100, 3, 1.0, 12);
  auto [norm_train, params] = normalize(train);
  const Dataset norm_test = apply_normalization(test, params);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < norm_train.n(); ++i) mean += norm_train.features(i, j);
    CHECK(std::abs(mean / norm_train.n()) < 1e-12);
  }
  // the test set keeps its own offset relative to the train statistics
  CHECK(norm_test.features(0, 0) == (test.features(0, 0) - params.means[0]) / params.stds[0]);
}

TEST_CASE("invert_normalization undoes normalize") {
  const Dataset ds = synth_gaussian(50, 4, 2.0, 7);
  auto [norm, params] = normalize(ds);
  const Dataset back = invert_normalization(norm, params);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t j = 0; j < ds.d(); ++j) {
      CHECK(back.features(i, j) == doctest::Approx(ds.features(i, j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("split produces disjoint deterministic subsets") {
  const Dataset ds = synth_gaussian(100, 3, 1.0, 5);
  auto [train, test] = split(ds, 70, 30, 999);
  CHECK(train.n() == 70);
  CHECK(test.n() == 30);
  auto [train2, test2] = split(ds, 70, 30, 999);
  CHECK(train.features == train2.features);
  CHECK(test.labels == test2.labels);

  // every row of both parts appears in the original, and the multiset of
  // rows has no overlap between parts
  std::multiset<double> first_col_orig, first_col_parts;
  for (std::size_t i = 0; i < ds.n(); ++i) first_col_orig.insert(ds.features(i, 0));
  for (std::size_t i = 0; i < train.n(); ++i) first_col_parts.insert(train.features(i, 0));
  for (std::size_t i = 0; i < test.n(); ++i) first_col_parts.insert(test.features(i, 0));
  CHECK(first_col_parts == first_col_orig);

  CHECK_THROWS_AS(split(ds, 80, 30, 1), DataError);
}

TEST_CASE("flip_labels flips the requested fraction and marks it") {
  const Dataset ds = synth_gaussian(200, 3, 1.0, 3);
  auto [flipped, mask] = flip_labels(ds, 0.1, 42);
  std::size_t marked = 0, changed = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    marked += mask[i];
    if (flipped.labels[i] != ds.labels[i]) {
      ++changed;
      CHECK(mask[i] == 1);
      CHECK(flipped.labels[i] == 1 - ds.labels[i]);
    } else {
      CHECK(mask[i] == 0);
    }
  }
  CHECK(marked == 20);
  CHECK(changed == 20);
  CHECK(flipped.features == ds.features);

  Dataset three = ds;
  three.num_classes = 3;
  three.labels[0] = 2;
  CHECK_THROWS_AS(flip_labels(three, 0.1, 1), DataError);
}

TEST_CASE("synth_gaussian separates classes along the diagonal direction") {
  const std::size_t n = 4000, d = 4;
  const double sep = 2.0;
  const Dataset ds = synth_gaussian(n, d, sep, 123);
  CHECK(ds.n() == n);
  CHECK(ds.d() == d);
  for (std::size_t i = 0; i < n; ++i) CHECK(ds.labels[i] == static_cast<int>(i % 2));

  const double expect = (sep / 2.0) / std::sqrt(static_cast<double>(d));
  for (std::size_t j = 0; j < d; ++j) {
    double mean0 = 0.0, mean1 = 0.0;
    for (std::size_t i = 0; i < n; i += 2) {
      mean0 += ds.features(i, j);
      mean1 += ds.features(i + 1, j);
    }
    mean0 /= n / 2.0;
    mean1 /= n / 2.0;
    CHECK(std::abs(mean0 + expect) < 0.08);
    CHECK(std::abs(mean1 - expect) < 0.08);
  }

  const Dataset again = synth_gaussian(n, d, sep, 123);
  CHECK(again.features == ds.features);
}

TEST_CASE("fingerprint reacts to any content change") {
  const Dataset ds = synth_gaussian(30, 3, 1.0, 9);
  const auto base = fingerprint(ds);
  CHECK(fingerprint(ds) == base);

  Dataset m1 = ds;
  m1.features(4, 1) = std::nextafter(m1.features(4, 1), 1e300);
  CHECK(fingerprint(m1) != base);

  Dataset m2 = ds;
  m2.labels[0] = 1 - m2.labels[0];
  CHECK(fingerprint(m2) != base);

  Dataset m3 = ds;
  m3.feature_names[2] += "x";
  CHECK(fingerprint(m3) != base);
}

TEST_CASE("validate rejects inconsistent shapes") {
  Dataset ds = synth_gaussian(10, 2, 1.0, 1);
  ds.labels.pop_back();
  CHECK_THROWS_AS(ds.validate(), DataError);

  Dataset ds2 = synth_gaussian(10, 2, 1.0, 1);
  ds2.feature_names.push_back("extra");
  CHECK_THROWS_AS(ds2.validate(), DataError);

  Dataset ds3 = synth_gaussian(10, 2, 1.0, 1);
  ds3.labels[3] = 5;
  CHECK_THROWS_AS(ds3.validate(), DataError);
}
