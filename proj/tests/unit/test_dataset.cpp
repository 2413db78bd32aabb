#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "ntda/dataset.hpp"
#include "ntda/error.hpp"

using namespace ntda;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ntda_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

double row_norm(const Matrix& m, std::size_t i) {
  double s = 0;
  for (double v : m.row(i)) s += v * v;
  return std::sqrt(s);
}

Labels nearest_centroid(const DomainDataset& ds) {
  Matrix centroid(ds.class_count, ds.features.cols());
  std::vector<double> count(ds.class_count, 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t k = 0; k < ds.features.cols(); ++k) centroid(ds.labels[i], k) += ds.features(i, k);
    count[ds.labels[i]] += 1;
  }
  for (std::size_t c = 0; c < ds.class_count; ++c) {
    for (std::size_t k = 0; k < ds.features.cols(); ++k) centroid(c, k) /= count[c];
  }
  const Matrix d = pairwise_sqdist(ds.features, centroid);
  Labels pred(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t c = 1; c < ds.class_count; ++c) {
      if (d(i, c) < d(i, pred[i])) pred[i] = c;
    }
  }
  return pred;
}

}  // namespace

TEST_CASE("gen_blobs shape, balance and determinism") {
  const DomainDataset a = gen_blobs(4, 50, 10, 10.0, 1);
  CHECK(a.size() == 200);
  CHECK(a.features.cols() == 10);
  CHECK(a.class_count == 4);
  CHECK_FALSE(a.clean_flags.has_value());
  std::vector<int> per_class(4, 0);
  for (auto y : a.labels) ++per_class[y];
  CHECK(per_class == std::vector<int>{50, 50, 50, 50});
  CHECK(gen_blobs(4, 50, 10, 10.0, 1).features == a.features);
  CHECK_FALSE(gen_blobs(4, 50, 10, 10.0, 2).features == a.features);
  CHECK(gen_blobs(4, 0, 10, 10.0, 1).size() == 0);
  CHECK_THROWS_AS(gen_blobs(1, 5, 10, 10.0, 1), ConfigError);
}

TEST_CASE("well separated blobs are linearly recoverable") {
  const DomainDataset ds = gen_blobs(4, 200, 10, 10.0, 3);
  CHECK(nearest_centroid(ds) == ds.labels);
}

TEST_CASE("blob centers are equidistant") {
  // Zero-noise limit is approximated by the per-class means of a large draw.
  const DomainDataset ds = gen_blobs(4, 4000, 10, 10.0, 4);
  Matrix centroid(4, 10);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t k = 0; k < 10; ++k) centroid(ds.labels[i], k) += ds.features(i, k) / 4000.0;
  }
  const Matrix d = pairwise_sqdist(centroid, centroid);
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = a + 1; b < 4; ++b) CHECK(std::sqrt(d(a, b)) == doctest::Approx(10.0).epsilon(0.02));
  }
}

TEST_CASE("apply_shift") {
  const DomainDataset ds = gen_blobs(3, 20, 4, 5.0, 5);
  CHECK(apply_shift(ds, ShiftSpec{}).features == ds.features);

  const DomainDataset full_turn = apply_shift(ds, ShiftSpec{360.0, {}, 1.0});
  for (std::size_t i = 0; i < full_turn.features.size(); ++i) {
    CHECK(full_turn.features.flat()[i] == doctest::Approx(ds.features.flat()[i]).epsilon(1e-12));
  }

  const DomainDataset rotated = apply_shift(ds, ShiftSpec{30.0, {}, 1.0});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(row_norm(rotated.features, i) == doctest::Approx(row_norm(ds.features, i)).epsilon(1e-12));
    // Only the first plane turns.
    for (std::size_t k = 2; k < 4; ++k) CHECK(rotated.features(i, k) == ds.features(i, k));
  }
  CHECK(rotated.labels == ds.labels);

  const DomainDataset scaled = apply_shift(ds, ShiftSpec{0.0, {1, 1, 1, 1}, 2.0});
  CHECK(scaled.features(0, 3) == doctest::Approx(2.0 * ds.features(0, 3) + 1.0));

  CHECK_THROWS_AS(apply_shift(ds, ShiftSpec{0.0, {1, 2}, 1.0}), ShapeError);
  CHECK_THROWS_AS(apply_shift(ds, ShiftSpec{0.0, {}, 0.0}), ConfigError);
}

TEST_CASE("label corruption") {
  const DomainDataset ds = gen_blobs(4, 250, 3, 5.0, 6);
  const DomainDataset none = corrupt_labels(ds, 0.0, 1);
  CHECK(none.labels == ds.labels);
  REQUIRE(none.clean_flags.has_value());
  CHECK(std::count(none.clean_flags->begin(), none.clean_flags->end(), false) == 0);

  double changed = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const DomainDataset all = corrupt_labels(ds, 1.0, seed);
    CHECK(all.features == ds.features);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const bool diff = all.labels[i] != ds.labels[i];
      changed += diff;
      CHECK((*all.clean_flags)[i] == !diff);
    }
  }
  CHECK(changed / (50.0 * ds.size()) == doctest::Approx(0.75).epsilon(0.02 / 0.75));

  const DomainDataset excl = corrupt_labels(ds, 1.0, 0, LabelNoiseOptions{true});
  for (std::size_t i = 0; i < ds.size(); ++i) CHECK(excl.labels[i] != ds.labels[i]);

  CHECK_THROWS_AS(corrupt_labels(ds, 1.5, 0), ConfigError);
  CHECK(corrupt_labels(ds, 0.3, 9).labels == corrupt_labels(ds, 0.3, 9).labels);
}

TEST_CASE("feature corruption") {
  const DomainDataset ds = gen_blobs(4, 250, 5, 5.0, 7);
  CHECK(corrupt_features(ds, 0.0, 1).features == ds.features);

  double hit = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const DomainDataset c = corrupt_features(ds, 0.3, seed);
    CHECK(c.labels == ds.labels);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const bool same = std::equal(c.features.row(i).begin(), c.features.row(i).end(), ds.features.row(i).begin());
      CHECK((*c.clean_flags)[i] == same);
      hit += !same;
    }
  }
  CHECK(std::abs(hit / (50.0 * ds.size()) - 0.3) < 0.02);
}

TEST_CASE("mixed corruption splits the budget across both mechanisms") {
  const DomainDataset ds = gen_blobs(4, 250, 5, 5.0, 8);
  double label_hits = 0, feature_hits = 0, both = 0, unclean = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CorruptionLog log;
    const DomainDataset c = corrupt_mixed_logged(ds, 0.4, seed, log);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      label_hits += log.label_hit[i];
      feature_hits += log.feature_hit[i];
      both += log.label_hit[i] && log.feature_hit[i];
      unclean += !(*c.clean_flags)[i];
      CHECK((*c.clean_flags)[i] == !(log.label_hit[i] || log.feature_hit[i]));
    }
  }
  const double n = 50.0 * ds.size();
  CHECK(std::abs(feature_hits / n - 0.2) < 0.02);
  // A redraw may land on the original label (1 in 4).
  CHECK(std::abs(label_hits / n - 0.2 * 0.75) < 0.02);
  CHECK(both > 0);

  double excl_hits = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CorruptionLog log;
    corrupt_mixed_logged(ds, 0.4, seed, log, LabelNoiseOptions{true});
    for (bool b : log.label_hit) excl_hits += b;
  }
  CHECK(std::abs(excl_hits / n - 0.2) < 0.02);
}

TEST_CASE("corrupt dispatches on kind") {
  const DomainDataset ds = gen_blobs(3, 30, 3, 5.0, 9);
  CHECK(corrupt(ds, {CorruptionKind::kLabel, 0.5, 3}).labels == corrupt_labels(ds, 0.5, 3).labels);
  CHECK(corrupt(ds, {CorruptionKind::kFeature, 0.5, 3}).features == corrupt_features(ds, 0.5, 3).features);
  for (auto k : {CorruptionKind::kLabel, CorruptionKind::kFeature, CorruptionKind::kMixed}) {
    CHECK(corruption_kind_from_string(to_string(k)) == k);
  }
  CHECK_THROWS_AS(corruption_kind_from_string("blur"), ConfigError);
}

TEST_CASE("dataset save and load round trip") {
  const auto dir = temp_dir("dataset");
  const DomainDataset ds = corrupt_mixed(gen_blobs(3, 20, 4, 5.0, 10), 0.5, 2);
  save_dataset(dir / "d.csv", ds);
  const DomainDataset back = load_dataset(dir / "d.csv");
  CHECK(back.features == ds.features);
  CHECK(back.labels == ds.labels);
  CHECK(back.clean_flags == ds.clean_flags);
  CHECK(back.class_count == 3);
  CHECK(back.domain == ds.domain);

  DomainDataset target = apply_shift(gen_blobs(3, 5, 4, 5.0, 11), ShiftSpec{10.0, {}, 1.0});
  target.domain = DomainTag::kTarget;
  save_dataset(dir / "t.csv", target);
  const DomainDataset tback = load_dataset(dir / "t.csv");
  CHECK_FALSE(tback.clean_flags.has_value());
  CHECK(tback.domain == DomainTag::kTarget);
}

TEST_CASE("malformed dataset files are rejected with a line number") {
  const auto dir = temp_dir("dataset_bad");
  const DomainDataset ds = corrupt_labels(gen_blobs(3, 4, 2, 5.0, 12), 0.0, 1);
  save_dataset(dir / "d.csv", ds);

  std::ifstream in(dir / "d.csv");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  in.close();

  auto write = [&](const std::vector<std::string>& ls) {
    std::ofstream out(dir / "d.csv", std::ios::trunc);
    for (const auto& l : ls) out << l << '\n';
  };

  auto truncated = lines;
  truncated.pop_back();
  write(truncated);
  try {
    load_dataset(dir / "d.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() > 0);
  }

  auto bad_label = lines;
  // Row layout: f0,f1,label,clean.
  bad_label[2] = bad_label[2].substr(0, bad_label[2].find(',', bad_label[2].find(',') + 1)) + ",3,1";
  write(bad_label);
  try {
    load_dataset(dir / "d.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }

  auto bad_value = lines;
  bad_value[1] = "abc" + bad_value[1].substr(bad_value[1].find(','));
  write(bad_value);
  CHECK_THROWS_AS(load_dataset(dir / "d.csv"), ParseError);

  std::filesystem::remove(sidecar_path(dir / "d.csv"));
  CHECK_THROWS_AS(load_dataset(dir / "d.csv"), ParseError);
}
