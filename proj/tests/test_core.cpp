#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <set>
#include <stdexcept>

#include "octaq/core.hpp"
#include "octaq/parallel.hpp"

using namespace octaq;

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next(), b.next());
}

TEST(Rng, UniformInUnitInterval) {
    Rng r(1);
    for (int i = 0; i < 100000; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(Rng, MomentsOfDistributions) {
    Rng r(7);
    const int n = 200000;
    double sn = 0, sn2 = 0, se = 0, su = 0;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        sn += z;
        sn2 += z * z;
        se += r.exponential();
        su += r.uniform(2.0, 4.0);
    }
    // Bands of about 4 standard errors.
    EXPECT_NEAR(sn / n, 0.0, 4.0 / std::sqrt(n));
    EXPECT_NEAR(sn2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
    EXPECT_NEAR(se / n, 1.0, 4.0 / std::sqrt(n));
    EXPECT_NEAR(su / n, 3.0, 4.0 * (2.0 / std::sqrt(12.0)) / std::sqrt(n));
}

TEST(Rng, UniformIntCoversClosedRange) {
    Rng r(3);
    std::set<long> seen;
    for (int i = 0; i < 1000; ++i) {
        const long v = r.uniform_int(-2, 2);
        ASSERT_GE(v, -2);
        ASSERT_LE(v, 2);
        seen.insert(v);
    }
    EXPECT_EQ(seen.size(), 5u);
}

TEST(Rng, DerivedSeedsAreDistinct) {
    std::set<std::uint64_t> s;
    for (std::uint64_t base : {0ull, 1ull, 99ull})
        for (std::uint64_t k = 0; k < 100; ++k) s.insert(derive_seed(base, k));
    EXPECT_EQ(s.size(), 300u);
}

TEST(Grid, ClampedReplicatesBorder) {
    Grid<int> g(3, 2, std::vector<int>{1, 2, 3, 4, 5, 6});
    EXPECT_EQ(g.clamped(-5, 0), 1);
    EXPECT_EQ(g.clamped(10, 10), 6);
    EXPECT_EQ(g.clamped(1, -1), 2);
    EXPECT_TRUE(g.contains(2, 1));
    EXPECT_FALSE(g.contains(3, 0));
    EXPECT_THROW(Grid<int>(2, 2, std::vector<int>{1, 2, 3}), Error);
}

TEST(Grid, CountMask) {
    Mask m(4, 4);
    m(0, 0) = 1;
    m(3, 3) = 1;
    EXPECT_EQ(count(m), 2u);
}

TEST(Parallel, ResultsIndependentOfWorkerCount) {
    std::vector<double> a(257), b(257);
    parallel_for(a.size(), 1, [&](std::size_t i) { a[i] = std::sin(static_cast<double>(i)); });
    parallel_for(b.size(), 4, [&](std::size_t i) { b[i] = std::sin(static_cast<double>(i)); });
    EXPECT_EQ(a, b);
}

TEST(Parallel, RethrowsTaskError) {
    std::atomic<int> ran{0};
    EXPECT_THROW(parallel_for(50, 3,
                              [&](std::size_t i) {
                                  ++ran;
                                  if (i == 17) throw Error("boom");
                              }),
                 Error);
    EXPECT_EQ(ran.load(), 50);
}
