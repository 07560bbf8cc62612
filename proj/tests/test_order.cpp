#include <gtest/gtest.h>

#include <set>
#include <vector>

#include "monet/order/permutation.hpp"

using namespace monet;

namespace {

Permutation one_based(std::initializer_list<int> v) {
  const std::vector<int> tmp(v);
  return Permutation::from_one_based(tmp);
}

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace

TEST(Permutation, RejectsNonBijections) {
  EXPECT_THROW(Permutation({0, 0}), DomainError);
  EXPECT_THROW(Permutation({0, 2}), DomainError);
  EXPECT_NO_THROW(Permutation({1, 0}));
}

TEST(Permutation, OneBasedRoundTrip) {
  const Permutation p = one_based({3, 1, 2});
  EXPECT_EQ(p.at(0), 2);
  EXPECT_EQ(p.one_based(), (std::vector<int>{3, 1, 2}));
  EXPECT_EQ(p.str(), "[3,1,2]");
}

TEST(PermMatrix, Identity) {
  EXPECT_EQ(perm_matrix(Permutation::identity(3)).omega, Matrix::Identity(3, 3));
}

TEST(PermMatrix, Swap) { EXPECT_EQ(perm_matrix(one_based({2, 1})).omega, mat2(0, 1, 1, 0)); }

TEST(PermMatrix, AllOutputsAreDoublyStochastic) {
  for (int t = 1; t <= 5; ++t) {
    for (const Permutation& p : all_permutations(t)) {
      EXPECT_TRUE(is_doubly_stochastic(perm_matrix(p)));
    }
  }
}

TEST(Inverse, Examples) {
  EXPECT_EQ(inverse(Permutation::identity(4)), Permutation::identity(4));
  EXPECT_EQ(inverse(one_based({2, 3, 1})), one_based({3, 1, 2}));
}

TEST(Inverse, IsAnInvolutionAndUndoes) {
  RngStream rng(1, "t");
  for (int trial = 0; trial < 200; ++trial) {
    const Permutation p = random_permutation(1 + static_cast<int>(rng.index(7)), rng);
    EXPECT_EQ(inverse(inverse(p)), p);
    const Permutation q = inverse(p);
    for (int i = 0; i < p.size(); ++i) {
      EXPECT_EQ(q.at(p.at(i)), i);
    }
  }
}

TEST(Frobenius, Examples) {
  const SoftOrder id = perm_matrix(Permutation::identity(3));
  EXPECT_EQ(frobenius_sq(id, id), 0.0);
  EXPECT_EQ(frobenius_sq(perm_matrix(one_based({2, 1, 3})), id), 4.0);
  EXPECT_EQ(frobenius_sq(perm_matrix(one_based({3, 2, 1})), id), 4.0);
  EXPECT_THROW(frobenius_sq(id, perm_matrix(Permutation::identity(2))), ShapeError);
}

TEST(Frobenius, EqualsTwiceTheMovedPoints) {
  for (int t = 1; t <= 5; ++t) {
    for (const Permutation& p : all_permutations(t)) {
      EXPECT_EQ(distance_to_identity(p), 2.0 * p.moved_points()) << p.str();
    }
  }
}

TEST(Frobenius, DistinctPermutationsAreAtLeastFourApart) {
  const auto perms = all_permutations(4);
  for (std::size_t a = 0; a < perms.size(); ++a) {
    for (std::size_t b = a + 1; b < perms.size(); ++b) {
      EXPECT_GE(frobenius_sq(perm_matrix(perms[a]), perm_matrix(perms[b])), 4.0);
    }
  }
}

TEST(SamplePool, FullEnumeration) {
  RngStream rng(2, "order-pool");
  const OrderPool pool = sample_pool(5, 120, rng);
  EXPECT_EQ(pool.size(), 120u);
  EXPECT_GE(pool.identity_index(), 0);
  EXPECT_NE(pool.orders, all_permutations(5));
  std::set<Permutation> distinct(pool.orders.begin(), pool.orders.end());
  EXPECT_EQ(distinct.size(), 120u);
}

TEST(SamplePool, SingleOrderReproducible) {
  RngStream a(3, "order-pool");
  RngStream b(3, "order-pool");
  const OrderPool pa = sample_pool(3, 1, a);
  const OrderPool pb = sample_pool(3, 1, b);
  ASSERT_EQ(pa.size(), 1u);
  EXPECT_EQ(pa[0], pb[0]);
  EXPECT_EQ(pa[0].size(), 3);
}

TEST(SamplePool, PartialPoolIsDistinct) {
  RngStream rng(4, "order-pool");
  const OrderPool pool = sample_pool(6, 300, rng);
  std::set<Permutation> distinct(pool.orders.begin(), pool.orders.end());
  EXPECT_EQ(distinct.size(), 300u);
}

TEST(SamplePool, CapacityError) {
  RngStream rng(5, "order-pool");
  EXPECT_THROW(sample_pool(2, 3, rng), CapacityError);
}

TEST(MakePool, RejectsDuplicates) {
  EXPECT_THROW(make_pool({Permutation::identity(2), Permutation::identity(2)}), DomainError);
}

TEST(Combine, OneHotRecoversMember) {
  RngStream rng(6, "t");
  const OrderPool pool = sample_pool(4, 24, rng);
  for (std::size_t m = 0; m < pool.size(); ++m) {
    std::vector<double> pi(pool.size(), 0.0);
    pi[m] = 1.0;
    EXPECT_EQ(combine(pool, pi).omega, perm_matrix(pool[m]).omega);
  }
}

TEST(Combine, UniformOverTwo) {
  RngStream rng(7, "t");
  const OrderPool pool = sample_pool(2, 2, rng);
  const std::vector<double> pi{0.5, 0.5};
  EXPECT_EQ(combine(pool, pi).omega, mat2(0.5, 0.5, 0.5, 0.5));
}

TEST(Combine, RandomWeightsGiveDoublyStochastic) {
  RngStream rng(8, "t");
  for (int trial = 0; trial < 200; ++trial) {
    const int t = 2 + static_cast<int>(rng.index(4));
    const std::size_t m = 1 + rng.index(static_cast<std::size_t>(factorial(t)));
    const OrderPool pool = sample_pool(t, m, rng);
    std::vector<double> pi(m);
    double sum = 0.0;
    for (double& p : pi) {
      p = rng.uniform();
      sum += p;
    }
    for (double& p : pi) {
      p /= sum;
    }
    const SoftOrder s = combine(pool, pi);
    EXPECT_TRUE(is_doubly_stochastic(s, 1e-9));
    EXPECT_LE(s.omega.maxCoeff(), 1.0 + 1e-12);
    EXPECT_GE(s.omega.minCoeff(), 0.0);
  }
}

TEST(Combine, WeightErrors) {
  RngStream rng(9, "t");
  const OrderPool pool = sample_pool(2, 2, rng);
  EXPECT_THROW(combine(pool, std::vector<double>{1.2, -0.2}), WeightError);
  EXPECT_THROW(combine(pool, std::vector<double>{0.3, 0.3}), WeightError);
  EXPECT_THROW(combine(pool, std::vector<double>{1.0}), WeightError);
}

TEST(DoublyStochastic, Examples) {
  EXPECT_TRUE(is_doubly_stochastic(Matrix::Identity(4, 4)));
  EXPECT_FALSE(is_doubly_stochastic(mat2(0.9, 0.1, 0.2, 0.8)));
  EXPECT_FALSE(is_doubly_stochastic(mat2(1.5, -0.5, -0.5, 1.5)));
}

TEST(SelectedOrder, ArgmaxWithLowestIndexTies) {
  const OrderPool pool = make_pool(all_permutations(3));
  std::vector<double> one_hot(6, 0.0);
  one_hot[0] = 1.0;
  EXPECT_TRUE(selected_order(pool, one_hot).is_identity());
  const std::vector<double> uniform(6, 1.0 / 6.0);
  EXPECT_EQ(selected_order(pool, uniform), pool[0]);

  const OrderPool three = make_pool({pool[0], pool[1], pool[2]});
  EXPECT_EQ(selected_order(three, std::vector<double>{0.1, 0.7, 0.2}), pool[1]);
}

TEST(SoftOrderJson, RoundTrip) {
  RngStream rng(10, "t");
  const OrderPool pool = sample_pool(3, 6, rng);
  const std::vector<double> pi{0.1, 0.2, 0.3, 0.15, 0.05, 0.2};
  const SoftOrder s = combine(pool, pi);
  const nlohmann::json j = s;
  const SoftOrder back = j.get<SoftOrder>();
  EXPECT_EQ(back.omega, s.omega);
}
