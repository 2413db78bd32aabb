#include <doctest.h>

#include "ntda/error.hpp"
#include "ntda/metrics.hpp"

using namespace ntda;

TEST_CASE("accuracy examples") {
  const std::vector<std::size_t> truth{0, 1, 2, 1};
  CHECK(accuracy(std::vector<std::size_t>{0, 1, 2, 1}, truth) == 1.0);
  CHECK(accuracy(std::vector<std::size_t>{0, 1, 0, 0}, truth) == 0.5);
  CHECK_THROWS_AS(accuracy(std::vector<std::size_t>{0}, truth), ShapeError);
  CHECK_THROWS_AS(accuracy(std::vector<std::size_t>{}, std::vector<std::size_t>{}), DataError);
}

TEST_CASE("macro precision, recall and F1") {
  // Class 0: P 1/2, R 1/1. Class 1: P 2/2, R 2/3.
  const MacroPrf m = macro_prf(std::vector<std::size_t>{0, 0, 1, 1}, std::vector<std::size_t>{0, 1, 1, 1}, 2);
  CHECK(m.precision == doctest::Approx(0.75));
  CHECK(m.recall == doctest::Approx(5.0 / 6.0));
  CHECK(m.f1 == doctest::Approx(2 * 0.75 * (5.0 / 6.0) / (0.75 + 5.0 / 6.0)));

  // Class 2 never predicted and never present: counts 0 in both averages.
  const MacroPrf z = macro_prf(std::vector<std::size_t>{0, 1}, std::vector<std::size_t>{0, 1}, 3);
  CHECK(z.precision == doctest::Approx(2.0 / 3.0));
  CHECK(z.recall == doctest::Approx(2.0 / 3.0));

  CHECK_THROWS_AS(macro_prf(std::vector<std::size_t>{3}, std::vector<std::size_t>{0}, 3), DataError);
}

TEST_CASE("per-class accuracy") {
  const auto pc =
      per_class_accuracy(std::vector<std::size_t>{0, 1, 1, 2}, std::vector<std::size_t>{0, 0, 1, 1}, 3);
  CHECK(pc == std::vector<double>{0.5, 0.5, 0.0});
}

TEST_CASE("selection precision and recall") {
  // 18 clean selected, 2 noisy selected, 1 clean dropped.
  std::vector<double> w(21, 0.5);
  std::vector<bool> clean(21, true);
  clean[18] = clean[19] = false;
  w[20] = 0.0;
  const SelectionPr s = selection_prf(w, clean);
  CHECK(s.precision == doctest::Approx(0.9));
  CHECK(s.recall == doctest::Approx(18.0 / 19.0));

  const SelectionPr none = selection_prf(std::vector<double>(3, 0.0), std::vector<bool>{true, false, true});
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);

  const SelectionPr exact = selection_prf(std::vector<double>{1.0, 0.0, 0.2}, std::vector<bool>{true, false, true});
  CHECK(exact.precision == 1.0);
  CHECK(exact.recall == 1.0);

  CHECK_THROWS_AS(selection_prf(std::vector<double>{1.0}, std::optional<std::vector<bool>>{}), DataError);
  CHECK_THROWS_AS(selection_prf(std::vector<double>{1.0}, std::vector<bool>{true, true}), ShapeError);
}
