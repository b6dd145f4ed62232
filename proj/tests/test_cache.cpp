#include <doctest.h>

#include <cmath>
#include <vector>

#include "flowcache/cache.hpp"
#include "flowcache/core.hpp"
#include "flowcache/rng.hpp"

using namespace flowcache;

namespace {

Tangent<double> scalar(double v) {
  Tangent<double> t;
  auto ch = make_channel<double>("f", ChannelRole::Node, 1, 1);
  ch.data = {v};
  t.channels = {ch};
  return t;
}

double value(const Tangent<double>& t) { return t.channels[0].data[0]; }

Tangent<double> vec(std::vector<double> vals) {
  Tangent<double> t;
  auto ch = make_channel<double>("f", ChannelRole::Node, vals.size(), 1);
  ch.data = std::move(vals);
  t.channels = {ch};
  return t;
}

// Evaluates sum_i c_i * step^i.
double poly_at(const std::vector<double>& coeffs, double step) {
  double acc = 0, p = 1;
  for (double c : coeffs) {
    acc += c * p;
    p *= step;
  }
  return acc;
}

CachePolicy taylor(int interval, int order) {
  return CachePolicy{CacheKind::Taylor, interval, order, ABMode::OffsetAware};
}

CachePolicy ab(int interval, int order, ABMode mode = ABMode::OffsetAware) {
  return CachePolicy{CacheKind::AdamsBashforth, interval, order, mode};
}

CachePolicy naive(int interval) {
  return CachePolicy{CacheKind::Naive, interval, 0, ABMode::OffsetAware};
}

}  // namespace

TEST_SUITE_BEGIN("cache");

TEST_CASE("policy validation") {
  CHECK_NOTHROW(validate(CachePolicy{}));
  CHECK_THROWS_AS(validate(CachePolicy{CacheKind::Taylor, 0, 1, ABMode::OffsetAware}),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate(CachePolicy{CacheKind::Taylor, 2, -1, ABMode::OffsetAware}),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate(CachePolicy{CacheKind::AdamsBashforth, 2, 0, ABMode::OffsetAware}),
                  std::invalid_argument);
}

TEST_CASE("schedule hits the published checkpoint counts") {
  CHECK(schedule(100, taylor(2, 1)).size() == 51);
  CHECK(schedule(100, taylor(3, 1)).size() == 34);
  CHECK(schedule(100, taylor(4, 1)).size() == 26);
  CHECK(schedule(10, taylor(1, 1)).size() == 10);
  CHECK(schedule(10, CachePolicy{}).size() == 10);
}

TEST_CASE("schedule is every D-th step plus the final step") {
  for (int steps : {1, 2, 7, 10, 99, 100}) {
    for (int interval = 1; interval <= 7; ++interval) {
      const auto got = schedule(steps, naive(interval));
      std::vector<int> want;
      for (int k = 0; k < steps; ++k)
        if (k % interval == 0) want.push_back(k);
      if (want.back() != steps - 1) want.push_back(steps - 1);
      CHECK(got == want);
    }
  }
  CHECK_THROWS_AS(schedule(0, naive(2)), std::invalid_argument);
}

TEST_CASE("refresh accumulates backward differences") {
  CacheState<double> cs(taylor(2, 2));
  cs.refresh(scalar(1), 0);
  REQUIRE(cs.differences().size() == 1);
  CHECK(value(cs.differences()[0]) == 1.0);

  cs.refresh(scalar(3), 2);
  REQUIRE(cs.differences().size() == 2);
  CHECK(value(cs.differences()[1]) == 2.0);

  cs.refresh(scalar(7), 4);
  REQUIRE(cs.differences().size() == 3);
  CHECK(value(cs.differences()[0]) == 7.0);
  CHECK(value(cs.differences()[1]) == 4.0);
  CHECK(value(cs.differences()[2]) == 2.0);
  CHECK(cs.nfe() == 3);
  CHECK(cs.latest_step() == 4);
}

TEST_CASE("refresh rejects non-increasing step indices") {
  CacheState<double> cs(taylor(2, 1));
  cs.refresh(scalar(1), 4);
  CHECK_THROWS_AS(cs.refresh(scalar(2), 4), std::logic_error);
  CHECK_THROWS_AS(cs.refresh(scalar(2), 3), std::logic_error);
}

TEST_CASE("forecast preconditions") {
  CacheState<double> empty(taylor(2, 1));
  CHECK_THROWS_AS(empty.forecast(1), std::logic_error);

  CacheState<double> off(CachePolicy{});
  off.refresh(scalar(1), 0);
  CHECK_THROWS_AS(off.forecast(1), std::logic_error);

  CacheState<double> cs(taylor(2, 1));
  cs.refresh(scalar(1), 0);
  CHECK_THROWS_AS(cs.forecast(0), std::invalid_argument);
}

TEST_CASE("linear sequence forecast: one step past checkpoint 10 gives 27") {
  // F(step) = 5 + 2*step at spacing 2: F(8) = 21, F(10) = 25, so the first
  // difference is 4. One step ahead must hit F(11) = 27.
  CacheState<double> cs(taylor(2, 1));
  cs.refresh(scalar(21), 8);
  cs.refresh(scalar(25), 10);
  CHECK(value(cs.forecast(1)) == 27.0);
  CHECK(cs.forecast_count() == 1);
}

TEST_CASE("quadratic sequence forecast: step squared lands on 81") {
  // F(step) = step^2 at checkpoints 4, 6, 8; prediction at step 9.
  CacheState<double> cs(taylor(2, 2));
  cs.refresh(scalar(16), 4);
  cs.refresh(scalar(36), 6);
  cs.refresh(scalar(64), 8);
  CHECK(value(cs.forecast(1)) == 81.0);
}

TEST_CASE("order zero reuses the latest value") {
  CacheState<double> cs(taylor(3, 0));
  cs.refresh(scalar(5), 0);
  cs.refresh(scalar(9), 3);
  CHECK(value(cs.forecast(1)) == 9.0);
  CHECK(value(cs.forecast(2)) == 9.0);
}

TEST_CASE("two-step multistep forecast from a vector history") {
  CacheState<double> cs(ab(2, 2, ABMode::PaperExact));
  cs.refresh(vec({0, 0}), 0);
  cs.refresh(vec({1, 2}), 2);
  const auto out = cs.forecast(1);
  CHECK(out.channels[0].data[0] == 2.0);
  CHECK(out.channels[0].data[1] == 4.0);
}

TEST_CASE("multistep modes differ in offset semantics on a linear sequence") {
  // F(step) = 3*step, checkpoints at 4 and 6. offset_aware evaluated one step
  // past 6 must give F(7) = 21; the fixed-stride mode always extrapolates one
  // full interval, so it gives F(8) = 24 at the same call.
  CacheState<double> oa(ab(2, 2, ABMode::OffsetAware));
  oa.refresh(scalar(12), 4);
  oa.refresh(scalar(18), 6);
  CHECK(value(oa.forecast(1)) == 21.0);

  CacheState<double> pe(ab(2, 2, ABMode::PaperExact));
  pe.refresh(scalar(12), 4);
  pe.refresh(scalar(18), 6);
  CHECK(value(pe.forecast(1)) == 24.0);
}

TEST_CASE("single-step multistep forecast reuses the latest value") {
  for (ABMode mode : {ABMode::PaperExact, ABMode::OffsetAware}) {
    CacheState<double> cs(ab(2, 1, mode));
    cs.refresh(scalar(4), 0);
    cs.refresh(scalar(6), 2);
    CHECK(value(cs.forecast(1)) == 6.0);
  }
}

TEST_CASE("memory accounting follows the policy formula") {
  const std::size_t elems = 300;
  auto big = [&] {
    Tangent<double> t;
    auto ch = make_channel<double>("f", ChannelRole::Node, elems, 1);
    t.channels = {ch};
    return t;
  }();

  CacheState<double> none(CachePolicy{});
  CHECK(none.memory_footprint() == 0);
  none.refresh(big, 0);
  CHECK(none.memory_footprint() == 0);

  CacheState<double> nv(naive(2));
  nv.refresh(big, 0);
  CHECK(nv.memory_footprint() == elems);

  CacheState<double> ty(taylor(2, 2));
  ty.refresh(big, 0);
  CHECK(ty.memory_footprint() == elems);  // warm-up: only Delta^0 exists
  ty.refresh(big, 2);
  CHECK(ty.memory_footprint() == 2 * elems);
  ty.refresh(big, 4);
  CHECK(ty.memory_footprint() == 3 * elems);
  ty.refresh(big, 6);
  CHECK(ty.memory_footprint() == 3 * elems);  // saturated at (m+1)|F|

  CacheState<double> ab3(ab(2, 3));
  ab3.refresh(big, 0);
  ab3.refresh(big, 2);
  ab3.refresh(big, 4);
  CHECK(ab3.memory_footprint() == 3 * elems);
  ab3.refresh(big, 6);
  CHECK(ab3.memory_footprint() == 3 * elems);
}

TEST_CASE("polynomial sequences are reproduced exactly up to the order") {
  Rng rng(2024);
  for (int degree = 0; degree <= 3; ++degree) {
    for (int interval : {2, 3, 5}) {
      std::vector<double> coeffs(static_cast<std::size_t>(degree) + 1);
      for (auto& c : coeffs) c = rng.uniform(-2.0, 2.0);

      CacheState<double> ty(taylor(interval, degree));
      CacheState<double> oa(ab(interval, degree + 1, ABMode::OffsetAware));
      int step = 0;
      for (int cp = 0; cp <= degree; ++cp, step += interval) {
        ty.refresh(scalar(poly_at(coeffs, step)), step);
        oa.refresh(scalar(poly_at(coeffs, step)), step);
      }
      const int latest = step - interval;
      for (int k = 1; k < interval; ++k) {
        const double want = poly_at(coeffs, latest + k);
        const double scale = std::max(std::abs(want), 1.0);
        CHECK(std::abs(value(ty.forecast(k)) - want) / scale < 1e-9);
        CHECK(std::abs(value(oa.forecast(k)) - want) / scale < 1e-9);
      }
    }
  }
}

TEST_CASE("degenerate policies produce bit-identical forecasts") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    CacheState<double> m0(taylor(3, 0));
    CacheState<double> j1(ab(3, 1));
    CacheState<double> nv(naive(3));
    for (int cp = 0; cp < 4; ++cp) {
      const auto v = vec({rng.normal(), rng.normal(), rng.normal()});
      m0.refresh(v, cp * 3);
      j1.refresh(v, cp * 3);
      nv.refresh(v, cp * 3);
    }
    for (int k = 1; k < 3; ++k) {
      const auto a = m0.forecast(k), b = j1.forecast(k), c = nv.forecast(k);
      for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a.channels[0].data[i] == b.channels[0].data[i]);
        CHECK(b.channels[0].data[i] == c.channels[0].data[i]);
      }
    }
  }
}

TEST_CASE("both multistep modes coincide one full interval ahead") {
  Rng rng(11);
  for (int order : {1, 2, 3, 4}) {
    for (int interval : {2, 3}) {
      CacheState<double> pe(ab(interval, order, ABMode::PaperExact));
      CacheState<double> oa(ab(interval, order, ABMode::OffsetAware));
      for (int cp = 0; cp < order; ++cp) {
        const auto v = vec({rng.normal(), rng.normal()});
        pe.refresh(v, cp * interval);
        oa.refresh(v, cp * interval);
      }
      const auto a = pe.forecast(interval);
      const auto b = oa.forecast(interval);
      for (std::size_t i = 0; i < 2; ++i)
        CHECK(a.channels[0].data[i] == doctest::Approx(b.channels[0].data[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("forecasts are linear in the cached history") {
  Rng rng(13);
  const double alpha = 0.7, beta = -1.3;
  for (const CachePolicy& policy :
       {taylor(3, 2), ab(3, 3, ABMode::PaperExact), ab(3, 3, ABMode::OffsetAware)}) {
    CacheState<double> ca(policy), cb(policy), cc(policy);
    for (int cp = 0; cp < 3; ++cp) {
      const auto a = vec({rng.normal(), rng.normal()});
      const auto b = vec({rng.normal(), rng.normal()});
      auto combo = a;
      scale_in_place(combo, alpha);
      add_scaled(combo, beta, b);
      ca.refresh(a, cp * 3);
      cb.refresh(b, cp * 3);
      cc.refresh(combo, cp * 3);
    }
    const auto fa = ca.forecast(2), fb = cb.forecast(2), fc = cc.forecast(2);
    for (std::size_t i = 0; i < 2; ++i) {
      const double want = alpha * fa.channels[0].data[i] + beta * fb.channels[0].data[i];
      CHECK(fc.channels[0].data[i] == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("stored differences are recomputable from the raw history") {
  Rng rng(17);
  CacheState<double> cs(taylor(2, 3));
  for (int cp = 0; cp < 6; ++cp)
    cs.refresh(vec({rng.normal(), rng.normal(), rng.normal()}), cp * 2);

  const auto& hist = cs.history();  // newest first
  std::vector<std::vector<double>> rows;
  for (const auto& h : hist) rows.push_back(h.channels[0].data);
  // Delta^i at the newest point via iterated differencing, oldest-to-newest.
  for (std::size_t level = 0; level < cs.differences().size(); ++level) {
    const auto& stored = cs.differences()[level].channels[0].data;
    for (std::size_t i = 0; i < stored.size(); ++i)
      CHECK(stored[i] == doctest::Approx(rows[0][i]).epsilon(1e-12));
    // difference the rows in place: row[r] <- row[r] - row[r+1]
    for (std::size_t r = 0; r + 1 < rows.size(); ++r)
      for (std::size_t i = 0; i < rows[r].size(); ++i) rows[r][i] -= rows[r + 1][i];
    rows.pop_back();
  }
}

TEST_CASE("effective order ramps up while the history warms") {
  Rng rng(19);
  CacheState<double> high(taylor(2, 3));
  CacheState<double> low(taylor(2, 1));
  const auto v0 = vec({rng.normal(), rng.normal()});
  const auto v1 = vec({rng.normal(), rng.normal()});
  high.refresh(v0, 0);
  low.refresh(v0, 0);
  high.refresh(v1, 2);
  low.refresh(v1, 2);
  // Two checkpoints support order 1 only; both caches must agree bitwise.
  const auto a = high.forecast(1), b = low.forecast(1);
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(a.channels[0].data[i] == b.channels[0].data[i]);
}

TEST_SUITE_END();
