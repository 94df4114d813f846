#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "test_support.hpp"

namespace fedplace {
namespace {

struct Client {
  ModelParams params;
  std::uint64_t n;
};

std::vector<Client> random_clients(std::size_t count, std::size_t dim, Rng& rng) {
  std::vector<Client> out;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.uniform(-10, 10);
    out.push_back({ModelParams(std::move(v)), 1 + rng.below(10000)});
  }
  return out;
}

// Flat FedAvg oracle.
std::vector<double> flat_mean(const std::vector<Client>& clients) {
  std::vector<double> sum(clients.front().params.dim(), 0.0);
  double total = 0.0;
  for (const auto& c : clients) {
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += c.params.values[i] * static_cast<double>(c.n);
    total += static_cast<double>(c.n);
  }
  for (double& v : sum) v /= total;
  return sum;
}

ModelParams partitioned(const std::vector<Client>& clients, const std::vector<std::size_t>& owner, std::size_t k) {
  std::vector<PartialAggregate> parts(k, PartialAggregate::empty(clients.front().params.dim()));
  for (std::size_t i = 0; i < clients.size(); ++i) fold_into(parts[owner[i]], clients[i].params, clients[i].n);
  return final_aggregate(parts);
}

void expect_close(const ModelParams& got, const std::vector<double>& want, double rel) {
  ASSERT_EQ(got.dim(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    ASSERT_NEAR(got.values[i], want[i], rel * std::max(1.0, std::abs(want[i]))) << "coordinate " << i;
  }
}

TEST(Fold, FirstClientIsCopied) {
  const auto agg = fold_client(PartialAggregate::empty(2), ModelParams({2, 4}), 10);
  EXPECT_EQ(agg.params.values, (std::vector<double>{2, 4}));
  EXPECT_EQ(agg.total_samples, 10u);
}

TEST(Fold, WeightedUpdateByHand) {
  const auto agg = fold_client(PartialAggregate{ModelParams({0, 0}), 10}, ModelParams({3, 3}), 30);
  EXPECT_DOUBLE_EQ(agg.params.values[0], 2.25);
  EXPECT_DOUBLE_EQ(agg.params.values[1], 2.25);
  EXPECT_EQ(agg.total_samples, 40u);
}

TEST(Fold, EqualWeightsGiveArithmeticMean) {
  auto agg = fold_client(PartialAggregate::empty(3), ModelParams({1, -2, 5}), 7);
  agg = fold_client(agg, ModelParams({3, 4, -1}), 7);
  EXPECT_EQ(agg.params.values, (std::vector<double>{2, 1, 2}));
}

TEST(Fold, Errors) {
  auto agg = PartialAggregate::empty(2);
  EXPECT_THROW(fold_into(agg, ModelParams({1, 2}), 0), DomainError);
  EXPECT_THROW(fold_into(agg, ModelParams({1, 2, 3}), 1), AggregationError);
  EXPECT_TRUE(agg.is_empty());
}

TEST(Final, SinglePartialUnchanged) {
  const std::vector<PartialAggregate> p{{ModelParams({1.5, -2}), 9}};
  EXPECT_EQ(final_aggregate(p).values, (std::vector<double>{1.5, -2}));
}

TEST(Final, TwoPartialsByHand) {
  const std::vector<PartialAggregate> p{{ModelParams({1}), 1}, {ModelParams({3}), 3}};
  EXPECT_DOUBLE_EQ(final_aggregate(p).values[0], 2.5);
}

TEST(Final, EmptyPartialsAreSkipped) {
  const std::vector<PartialAggregate> p{PartialAggregate::empty(1), {ModelParams({4}), 2},
                                        PartialAggregate::empty(1)};
  EXPECT_EQ(final_aggregate(p).values, (std::vector<double>{4}));
  const std::vector<PartialAggregate> none{PartialAggregate::empty(1), PartialAggregate::empty(1)};
  EXPECT_THROW(final_aggregate(none), AggregationError);
  const std::vector<PartialAggregate> mixed{{ModelParams({1}), 1}, {ModelParams({1, 2}), 1}};
  EXPECT_THROW(final_aggregate(mixed), AggregationError);
}

// Every set partition of up to six clients into workers, via restricted
// growth strings.
TEST(Grouping, AllPartitionsOfSmallSetsMatchFlatMean) {
  Rng rng(3);
  for (std::size_t n = 1; n <= 6; ++n) {
    const auto clients = random_clients(n, 5, rng);
    const auto want = flat_mean(clients);
    std::vector<std::size_t> rgs(n, 0);
    std::size_t partitions = 0;
    std::function<void(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t blocks) {
      if (i == n) {
        ++partitions;
        expect_close(partitioned(clients, rgs, blocks), want, 1e-12);
        return;
      }
      for (std::size_t b = 0; b <= blocks; ++b) {
        rgs[i] = b;
        go(i + 1, std::max(blocks, b + 1));
      }
    };
    go(0, 0);
    const std::size_t bell[] = {1, 1, 2, 5, 15, 52, 203};
    EXPECT_EQ(partitions, bell[n]);
  }
}

TEST(Grouping, RandomPartitionsMatchFlatMean) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto clients = random_clients(1 + rng.below(200), 16, rng);
    const std::size_t k = 1 + rng.below(20);
    std::vector<std::size_t> owner(clients.size());
    for (auto& o : owner) o = rng.below(k);
    expect_close(partitioned(clients, owner, k), flat_mean(clients), 1e-12);
  }
}

TEST(Grouping, FoldOrderWithinWorkerDoesNotMatter) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    auto clients = random_clients(2 + rng.below(50), 8, rng);
    auto fold_all = [](const std::vector<Client>& cs) {
      auto agg = PartialAggregate::empty(cs.front().params.dim());
      for (const auto& c : cs) fold_into(agg, c.params, c.n);
      return agg;
    };
    const auto a = fold_all(clients);
    for (std::size_t i = clients.size() - 1; i > 0; --i) std::swap(clients[i], clients[rng.below(i + 1)]);
    const auto b = fold_all(clients);
    EXPECT_EQ(a.total_samples, b.total_samples);
    expect_close(b.params, a.params.values, 1e-12);
  }
}

TEST(Grouping, OutputIsWithinClientRange) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const auto clients = random_clients(1 + rng.below(30), 6, rng);
    std::vector<std::size_t> owner(clients.size());
    const std::size_t k = 1 + rng.below(5);
    for (auto& o : owner) o = rng.below(k);
    const auto out = partitioned(clients, owner, k);
    for (std::size_t i = 0; i < out.dim(); ++i) {
      double lo = clients[0].params.values[i], hi = lo;
      for (const auto& c : clients) {
        lo = std::min(lo, c.params.values[i]);
        hi = std::max(hi, c.params.values[i]);
      }
      ASSERT_GE(out.values[i], lo - 1e-12 * std::abs(lo));
      ASSERT_LE(out.values[i], hi + 1e-12 * std::abs(hi));
    }
  }
}

TEST(RunningSum, AgreesWithIncrementalForm) {
  Rng rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    const auto clients = random_clients(1 + rng.below(100), 12, rng);
    auto inc = PartialAggregate::empty(12);
    RunningSumAggregate sum(12);
    for (const auto& c : clients) {
      fold_into(inc, c.params, c.n);
      sum.fold(c.params, c.n);
    }
    const auto out = sum.finish();
    EXPECT_EQ(out.total_samples, inc.total_samples);
    expect_close(out.params, inc.params.values, 1e-12);
  }
  EXPECT_TRUE(RunningSumAggregate(3).finish().is_empty());
}

TEST(ClientUpdate, ZeroBoundIsIdentity) {
  const ModelParams g({1, 2, 3});
  EXPECT_EQ(client_update(g, 5, 2, 9, 0.0), g);
}

TEST(ClientUpdate, DeterministicPerRoundAndClient) {
  const auto g = ModelParams::zeros(16);
  EXPECT_EQ(client_update(g, 5, 2, 9, 0.1), client_update(g, 5, 2, 9, 0.1));
  EXPECT_NE(client_update(g, 5, 2, 9, 0.1), client_update(g, 6, 2, 9, 0.1));
  EXPECT_NE(client_update(g, 5, 2, 9, 0.1), client_update(g, 5, 3, 9, 0.1));
}

TEST(ClientUpdate, PerturbationNormWithinBound) {
  const ModelParams g = ModelParams::zeros(64);
  for (std::uint32_t i = 0; i < 10000; ++i) {
    const auto u = client_update(g, i, i / 100, 1, 0.25);
    double norm = 0.0;
    for (double v : u.values) norm += v * v;
    ASSERT_LE(std::sqrt(norm), 0.25);
  }
}

TEST(ClientUpdate, RejectsBadInputs) {
  EXPECT_THROW(client_update(ModelParams({std::nan("")}), 0, 0, 0, 0.1), DomainError);
  EXPECT_THROW(client_update(ModelParams({0.0}), 0, 0, 0, -1.0), DomainError);
}

TEST(Checksum, SensitiveToEveryBit) {
  const ModelParams a({1.0, 2.0});
  ModelParams b = a;
  b.values[1] = std::nextafter(2.0, 3.0);
  EXPECT_EQ(params_checksum(a), params_checksum(ModelParams({1.0, 2.0})));
  EXPECT_NE(params_checksum(a), params_checksum(b));
}

}  // namespace
}  // namespace fedplace
