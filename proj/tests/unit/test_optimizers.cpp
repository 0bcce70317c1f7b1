#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "parle/error.hpp"
#include "parle/optimizers.hpp"
#include "parle/vector_ops.hpp"

using namespace parle;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

FlatParams random_point(Rng& rng, std::size_t d) {
  FlatParams x(d);
  for (std::size_t i = 0; i < d; ++i) x[i] = rng.normal();
  return x;
}

struct BlobTask {
  std::shared_ptr<Dataset> data;
  std::shared_ptr<MlpOracle> mlp;
  FlatParams x0;
  std::vector<std::size_t> all;
};

BlobTask blob_task(std::uint64_t seed) {
  Rng rng(seed);
  BlobTask t;
  t.data = std::make_shared<Dataset>(make_blobs(3, 20, 4, 0.4, rng));
  t.mlp = std::make_shared<MlpOracle>(std::vector<std::size_t>{4, 6, 3}, t.data, 1e-3);
  t.x0 = t.mlp->init_params(rng);
  t.all.resize(t.data->size());
  std::iota(t.all.begin(), t.all.end(), std::size_t{0});
  return t;
}

}  // namespace

TEST(EntropySgd, CycleImpliedGradientMatchesClosedForm) {
  Rng rng(1);
  for (int t = 0; t < 5; ++t) {
    const auto q = QuadraticOracle::random(6, rng, 0.5, 2.0, t % 2);
    for (double gamma : {0.1, 1.0, 10.0}) {
      HyperParams hp;
      hp.L = 500;
      hp.alpha = 0.75;
      hp.momentum = 0.0;
      hp.eta_prime = 0.1 / (q.spectral_norm() + 1.0 / gamma);
      ReplicaState s(random_point(rng, 6), {}, Rng(0));
      local_entropy_inner_loop(q, s, hp, gamma, 0);
      const FlatParams exact = quad_local_entropy_grad(q, s.x, gamma);
      double diff = 0, norm = 0;
      for (std::size_t i = 0; i < 6; ++i) {
        const double g = (s.x[i] - s.z[i]) / gamma;
        diff += (g - exact[i]) * (g - exact[i]);
        norm += exact[i] * exact[i];
      }
      EXPECT_LT(std::sqrt(diff / norm), 1e-3) << "gamma=" << gamma;
    }
  }
}

TEST(EntropySgd, CycleRequiresAlignedCounterAndAdvancesByL) {
  const auto q = QuadraticOracle::identity(3);
  HyperParams hp;
  hp.L = 5;
  ReplicaState s(FlatParams::from({1, 2, 3}), {}, Rng(0));
  entropy_sgd_cycle(q, s, hp);
  EXPECT_EQ(s.k, 5u);
  s.k = 7;
  EXPECT_THROW(entropy_sgd_cycle(q, s, hp), ConsistencyError);
}

TEST(Degeneracy, ParleSingleReplicaWithoutElasticTermIsEntropySgd) {
  BlobTask t = blob_task(3);
  HyperParams hp;
  hp.L = 5;
  hp.B = 4;
  hp.rho0 = kInf;
  auto replicas = make_replicas({t.x0}, {t.all}, 8, 42);
  ServerState server{t.x0, 0};
  CommLedger ledger;
  auto single = make_replicas({t.x0}, {t.all}, 8, 42);
  for (int r = 0; r < 12; ++r) {
    parle_round(*t.mlp, replicas, server, hp, ledger);
    entropy_sgd_cycle(*t.mlp, single[0], hp);
    ASSERT_EQ(replicas[0].x, single[0].x) << "round " << r;
    ASSERT_EQ(server.x, single[0].x);
    ASSERT_EQ(replicas[0].vel_x, single[0].vel_x);
  }
}

TEST(Degeneracy, ElasticSingleReplicaWithoutCouplingIsSgd) {
  BlobTask t = blob_task(4);
  HyperParams hp;
  hp.rho0 = kInf;
  hp.B = 1;
  auto replicas = make_replicas({t.x0}, {t.all}, 8, 9);
  ServerState server{t.x0, 0};
  CommLedger ledger;
  auto single = make_replicas({t.x0}, {t.all}, 8, 9);
  for (int s = 0; s < 30; ++s) {
    elastic_sgd_step(*t.mlp, replicas, server, hp, ledger);
    sgd_epoch(*t.mlp, single[0], hp);
    ASSERT_EQ(replicas[0].x, single[0].x);
  }
}

TEST(Degeneracy, SheriffSingleDeputyIsElasticSgd) {
  // One worker coupled to one deputy by gamma, deputy free of the sheriff,
  // is Elastic-SGD with one replica (the worker) and reference (the deputy)
  // at rho = gamma.
  BlobTask t = blob_task(5);
  const double gamma = 0.7;
  HyperParams sh;
  sh.L = 4;
  sh.B = 3;
  sh.eta = sh.eta_prime = 0.05;
  sh.gamma0 = sh.gamma_floor = gamma;
  sh.rho0 = kInf;
  SheriffState st = make_sheriff(t.x0, 1, t.all, 8, 77);

  HyperParams el = sh;
  el.rho0 = el.rho_floor = gamma;
  el.gamma0 = el.gamma_floor = 1.0;
  std::vector<ReplicaState> replicas;
  replicas.emplace_back(t.x0, MiniBatchSampler(t.all, 8), Rng::substream(77, 0));
  ServerState server{t.x0, 0};

  CommLedger l1, l2;
  for (int r = 0; r < 5; ++r) {
    sheriff_round(*t.mlp, st, sh, l1);
    for (std::uint64_t j = 0; j < sh.L; ++j) elastic_sgd_step(*t.mlp, replicas, server, el, l2);
    ASSERT_EQ(st.workers[0][0].y, replicas[0].x) << "round " << r;
    ASSERT_EQ(st.deputies[0].x, server.x);
    ASSERT_EQ(st.sheriff.x, server.x);
  }
}

TEST(Parle, SequentialAndParallelModesAgreeBitwise) {
  BlobTask t = blob_task(6);
  HyperParams hp;
  hp.L = 5;
  hp.B = 4;
  hp.n_replicas = 3;
  Rng rng(1);
  const ShardPlan plan = shard(t.data->size(), 3, 0.5, rng);
  std::vector<FlatParams> x0(3, t.x0);
  auto a = make_replicas(x0, plan.assignment, 8, 5);
  auto b = make_replicas(x0, plan.assignment, 8, 5);
  ServerState sa{t.x0, 0}, sb{t.x0, 0};
  CommLedger la, lb;
  for (int r = 0; r < 8; ++r) {
    parle_round(*t.mlp, a, sa, hp, la, ExecMode::sequential);
    parle_round(*t.mlp, b, sb, hp, lb, ExecMode::parallel);
  }
  EXPECT_EQ(sa.x, sb.x);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(a[i].x, b[i].x);
  EXPECT_EQ(la, lb);
}

TEST(Elastic, SequentialAndParallelModesAgreeBitwise) {
  const auto q = QuadraticOracle::identity(5, 0.1);
  HyperParams hp;
  hp.n_replicas = 4;
  Rng rng(2);
  std::vector<FlatParams> x0;
  for (int a = 0; a < 4; ++a) x0.push_back(random_point(rng, 5));
  auto a = make_replicas(x0, {}, 1, 3);
  auto b = make_replicas(x0, {}, 1, 3);
  const FlatParams start = vec_avg(std::span<const FlatParams>(x0));
  ServerState sa{start, 0}, sb{start, 0};
  CommLedger la, lb;
  for (int s = 0; s < 50; ++s) {
    elastic_sgd_step(q, a, sa, hp, la, ExecMode::sequential);
    elastic_sgd_step(q, b, sb, hp, lb, ExecMode::parallel);
  }
  EXPECT_EQ(sa.x, sb.x);
}

TEST(Sheriff, SequentialAndParallelModesAgreeBitwise) {
  BlobTask t = blob_task(7);
  HyperParams hp;
  hp.L = 3;
  hp.B = 2;
  SheriffState a = make_sheriff(t.x0, 3, t.all, 8, 1);
  SheriffState b = make_sheriff(t.x0, 3, t.all, 8, 1);
  CommLedger la, lb;
  for (int r = 0; r < 4; ++r) {
    sheriff_round(*t.mlp, a, hp, la, ExecMode::sequential);
    sheriff_round(*t.mlp, b, hp, lb, ExecMode::parallel);
  }
  EXPECT_EQ(a.sheriff.x, b.sheriff.x);
  EXPECT_THROW(make_sheriff(t.x0, 0, t.all, 8, 1), InvalidArgument);
  SheriffState big = make_sheriff(t.x0, 5, t.all, 8, 1);
  EXPECT_THROW(sheriff_round(*t.mlp, big, hp, la), InvalidArgument);
}

TEST(Ledger, CountsPerAlgorithm) {
  const auto q = QuadraticOracle::identity(7);
  const int n = 3;
  HyperParams hp;
  hp.L = 4;
  hp.n_replicas = n;
  std::vector<FlatParams> x0(n, FlatParams::from({1, 2, 3, 4, 5, 6, 7}));
  {
    auto reps = make_replicas(x0, {}, 1, 0);
    ServerState server{x0[0], 0};
    CommLedger l;
    for (int r = 0; r < 5; ++r) parle_round(q, reps, server, hp, l);
    EXPECT_EQ(l.reduce_events, 5u);
    EXPECT_EQ(l.floats_up, 5u * n * 7);
    EXPECT_EQ(l.floats_down, l.floats_up);
    EXPECT_EQ(l.grad_evals, 5u * n * hp.L);
  }
  {
    auto reps = make_replicas(x0, {}, 1, 0);
    ServerState server{x0[0], 0};
    CommLedger l;
    for (int s = 0; s < 20; ++s) elastic_sgd_step(q, reps, server, hp, l);
    EXPECT_EQ(l.reduce_events, 20u);
    EXPECT_EQ(l.floats_up, 20u * n * 7);
    EXPECT_EQ(l.grad_evals, 20u * n);
  }
  {
    SheriffState st = make_sheriff(x0[0], 2, {}, 1, 0);
    CommLedger l;
    for (int r = 0; r < 3; ++r) sheriff_round(q, st, hp, l);
    EXPECT_EQ(l.grad_evals, 3u * 4 * hp.L);
    EXPECT_EQ(l.reduce_events, 3u * (hp.L + 1));
    EXPECT_EQ(l.floats_up, 3u * (hp.L * 4 * 7 + 2 * 7));
  }
}

TEST(Parle, MisalignedCountersAreRejected) {
  const auto q = QuadraticOracle::identity(2);
  HyperParams hp;
  hp.L = 5;
  auto reps = make_replicas({FlatParams(2), FlatParams(2)}, {}, 1, 0);
  reps[1].k = 5;
  ServerState server{FlatParams(2), 0};
  CommLedger l;
  EXPECT_THROW(parle_round(q, reps, server, hp, l), ConsistencyError);
  reps[1].k = 0;
  reps[0].k = reps[1].k = 3;
  EXPECT_THROW(parle_round(q, reps, server, hp, l), ConsistencyError);
}

TEST(Parle, DivergenceNamesStepAndReplica) {
  const auto q = QuadraticOracle::diagonal({1.0, 1e3}, {0.0, 0.0});
  HyperParams hp;
  hp.L = 25;
  hp.eta_prime = 1e100;
  hp.n_replicas = 2;
  auto reps = make_replicas({FlatParams::from({1, 1}), FlatParams::from({1, 1})}, {}, 1, 0);
  ServerState server{FlatParams::from({1, 1}), 0};
  CommLedger l;
  try {
    for (int r = 0; r < 100; ++r) parle_round(q, reps, server, hp, l);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.replica(), 0);
    EXPECT_LT(e.step(), 25u);
  }
}

TEST(Parle, ConvergesAndCollapsesOnQuadratic) {
  Rng rng(11);
  const auto q = QuadraticOracle::random(8, rng, 0.5, 2.0);
  HyperParams hp;
  hp.n_replicas = 4;
  hp.B = 5;
  std::vector<FlatParams> x0;
  for (int a = 0; a < 4; ++a) x0.push_back(random_point(rng, 8));
  auto reps = make_replicas(x0, {}, 1, 0);
  ServerState server{vec_avg(std::span<const FlatParams>(x0)), 0};
  CommLedger l;
  for (int r = 0; r < 200; ++r) parle_round(q, reps, server, hp, l);
  for (const auto& r : reps) EXPECT_LT(distance2(r.x.span(), server.x.span()), 1e-6);
  EXPECT_LT(distance2(server.x.span(), q.xstar()), 1e-6);
}

TEST(Parle, ExplicitServerStepEqualToAveragingIsClose) {
  Rng rng(12);
  const auto q = QuadraticOracle::random(4, rng, 0.5, 2.0);
  HyperParams a;
  a.n_replicas = 2;
  a.rho0 = a.rho_floor = 0.5;
  HyperParams b = a;
  b.eta_dprime = 0.25;  // rho / n
  std::vector<FlatParams> x0{random_point(rng, 4), random_point(rng, 4)};
  auto ra = make_replicas(x0, {}, 1, 0), rb = make_replicas(x0, {}, 1, 0);
  const FlatParams start = vec_avg(std::span<const FlatParams>(x0));
  ServerState sa{start, 0}, sb{start, 0};
  CommLedger l;
  for (int r = 0; r < 10; ++r) {
    parle_round(q, ra, sa, a, l);
    parle_round(q, rb, sb, b, l);
  }
  EXPECT_LT(distance2(sa.x.span(), sb.x.span()), 1e-12);
}
