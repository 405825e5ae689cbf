#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <numbers>

#include "postdiff/schedule.hpp"

using namespace postdiff;

namespace {

LatentGrid scalar(double v) { return LatentGrid(GridShape(1, 1, 1), v); }

LatentGrid random_grid(const GridShape& s, uint64_t seed) {
    SeededRng rng(seed);
    return make_noise_grid(s, rng);
}

}  // namespace

TEST_CASE("schedule tables") {
    for (auto kind : {ScheduleKind::LinearBeta, ScheduleKind::Cosine}) {
        const auto s1 = make_schedule(kind, 1);
        CHECK(s1.steps() == 1);
        CHECK(s1.alpha_bar(0) == 1.0);
        CHECK(s1.alpha_bar(1) > 0.0);
        CHECK(s1.alpha_bar(1) < 1.0);
        for (int T : {2, 8, 20, 50}) {
            const auto s = make_schedule(kind, T);
            for (int t = 1; t <= T; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
        }
        CHECK_THROWS_AS(make_schedule(kind, 0), std::invalid_argument);
    }

    const auto cos10 = make_schedule(ScheduleKind::Cosine, 10);
    const auto f = [](double u) { return std::pow(std::cos((u + 0.008) / 1.008 * std::numbers::pi / 2.0), 2); };
    CHECK(cos10.alpha_bar(10) == doctest::Approx(f(1.0) / f(0.0)).epsilon(1e-12));
    CHECK(cos10.alpha_bar(4) == doctest::Approx(f(0.4) / f(0.0)).epsilon(1e-12));

    // brute-force cumulative product of the linear betas
    double prod = 1.0;
    for (int n = 0; n < 1000; ++n) prod *= 1.0 - (1e-4 + (2e-2 - 1e-4) * n / 999.0);
    CHECK(make_schedule(ScheduleKind::LinearBeta, 1000).alpha_bar(1000) == doctest::Approx(prod).epsilon(1e-10));

    const auto s20 = make_schedule(ScheduleKind::LinearBeta, 20);
    CHECK(s20.timestep_of_iteration(1) == 20);
    CHECK(s20.timestep_of_iteration(20) == 1);
    CHECK_THROWS(s20.alpha_bar(21));
    CHECK(parse_schedule_kind("cosine") == ScheduleKind::Cosine);
    CHECK_THROWS(parse_schedule_kind("quadratic"));
}

TEST_CASE("predict_x0") {
    const auto x = random_grid(GridShape(3, 3, 1), 1), e = random_grid(GridShape(3, 3, 1), 2);
    CHECK(predict_x0(x, e, 1.0) == x);
    const auto doubled = predict_x0(x, LatentGrid(x.shape()), 0.25);
    for (size_t i = 0; i < x.size(); ++i) CHECK(doubled[i] == doctest::Approx(2.0 * x[i]).epsilon(1e-15));
    CHECK(predict_x0(scalar(1.0), scalar(0.5), 0.64)[0] == doctest::Approx(0.875).epsilon(1e-14));
    CHECK_THROWS_AS(predict_x0(x, e, 0.0), std::invalid_argument);

    // forward-noise round trip
    const auto sched = make_schedule(ScheduleKind::LinearBeta, 20);
    for (int t = 1; t <= 20; ++t) {
        const double a = sched.alpha_bar(t);
        const auto xt  = axpby(std::sqrt(a), x, std::sqrt(1.0 - a), e);
        CHECK(l2_distance(predict_x0(xt, e, a), x) <= 1e-10 * l2_norm(x));
    }
}

TEST_CASE("ddim_step") {
    const auto sched = make_schedule(ScheduleKind::LinearBeta, 20);
    const auto x     = random_grid(GridShape(4, 2, 1), 3);
    const LatentGrid zero(x.shape());
    const auto next = ddim_step(x, zero, sched, 7);
    const double r  = std::sqrt(sched.alpha_bar(6) / sched.alpha_bar(7));
    for (size_t i = 0; i < x.size(); ++i) CHECK(next[i] == doctest::Approx(r * x[i]).epsilon(1e-14));

    const auto e = random_grid(x.shape(), 4);
    CHECK(ddim_step(x, e, sched, 1) == predict_x0(x, e, sched.alpha_bar(1)));

    // scalar evaluation with a hand-made table
    const NoiseSchedule hand(ScheduleKind::LinearBeta, {1.0, 0.81, 0.64});
    const double expect = 0.9 * 0.875 + std::sqrt(0.19) * 0.5;
    CHECK(ddim_step(scalar(1.0), scalar(0.5), hand, 2)[0] == doctest::Approx(expect).epsilon(1e-14));
    // the commonly quoted 1.00547 is a rounding of 1.005445
    CHECK(expect == doctest::Approx(1.00547).epsilon(5e-5));

    CHECK_THROWS_AS(ddim_step(x, e, sched, 0), std::invalid_argument);
    CHECK_THROWS_AS(ddim_step(x, e, sched, 21), std::invalid_argument);

    // eps = 0 over the full chain rescales by 1/sqrt(abar_T)
    LatentGrid cur = x;
    for (int t = 20; t >= 1; --t) cur = ddim_step(cur, zero, sched, t);
    const auto ref = (1.0 / std::sqrt(sched.alpha_bar(20))) * x;
    CHECK(l2_distance(cur, ref) <= 1e-10 * l2_norm(ref));
}

TEST_CASE("renoise") {
    const auto x0 = random_grid(GridShape(3, 3, 1), 8);
    SeededRng rng(1);
    CHECK(renoise(x0, 1.0, rng) == x0);

    SeededRng r2(99);
    const auto out = renoise(LatentGrid(GridShape(64, 64, 1)), 0.5, r2);
    double var = 0.0;
    for (double v : out.data()) var += v * v;
    var /= out.size();
    CHECK(std::abs(var - 0.5) < 0.05);

    SeededRng a(5), b(5);
    const double first = b.next_normal();
    CHECK(renoise(scalar(2.0), 0.25, a)[0] == 1.0 + std::sqrt(0.75) * first);
}

TEST_CASE("cfg_combine") {
    const auto u = random_grid(GridShape(4, 4, 1), 1), c = random_grid(GridShape(4, 4, 1), 2);
    CHECK(cfg_combine({u, c}, 1.0) == c);
    CHECK(cfg_combine({u, c}, 0.0) == u);
    const auto s = cfg_combine({LatentGrid(GridShape(2, 2, 1), 0.0), LatentGrid(GridShape(2, 2, 1), 1.0)}, 7.5);
    for (double v : s.data()) CHECK(v == 7.5);

    const double w1 = 2.0, w2 = 9.0;
    const auto mid  = cfg_combine({u, c}, (w1 + w2) / 2);
    const auto avg  = 0.5 * (cfg_combine({u, c}, w1) + cfg_combine({u, c}, w2));
    CHECK(l2_distance(mid, avg) <= 1e-12 * l2_norm(avg));
    CHECK_THROWS(cfg_combine({u, LatentGrid(GridShape(2, 2, 1))}, 1.0));
}
