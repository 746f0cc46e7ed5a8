#include <gtest/gtest.h>

#include <random>

#include "fedcpf/federation.hpp"

using namespace fedcpf;

namespace {

// Adds a fixed per-client increment instead of training.
LocalTrainer scripted(std::vector<ParamVector> deltas, double accuracy = 1.0) {
  return [deltas = std::move(deltas), accuracy](const ClientState& c, const HyperParams&, std::size_t) {
    ParamVector t = c.theta;
    for (std::size_t j = 0; j < t.size(); ++j) t[j] += deltas[c.id][j];
    return LocalResult{t, accuracy};
  };
}

ClientState make_client(std::size_t id, ParamVector theta, BinaryMask eta) {
  ClientState c;
  c.id = id;
  c.window.delta_sum = ParamVector::zeros_like(theta);
  c.theta = std::move(theta);
  c.eta = std::move(eta);
  return c;
}

GlobalState make_global(std::size_t n, std::size_t round) {
  GlobalState g;
  g.theta_g = ParamVector(std::vector<double>(n, 0.0));
  g.zeta = g.theta_g;
  g.eta_g = BinaryMask(n);
  g.round = round;
  return g;
}

ExperimentConfig small_config(std::uint64_t seed) {
  ExperimentConfig c;
  c.n_clients = 3;
  c.rounds = 6;
  c.seed = seed;
  c.model = TokenModelConfig{2, 4, 4, 3, 1e8, 4};
  c.data.samples_per_client = 30;
  c.hyper.p = 0.2;
  return c;
}

}  // namespace

TEST(InitFederation, ClientsStartFromGlobalModel) {
  const TokenModelConfig m;
  const Federation f = init_federation(5, m, 42);
  ASSERT_EQ(f.clients.size(), 5u);
  for (const auto& c : f.clients) {
    EXPECT_EQ(c.theta, f.global.theta_g);
    EXPECT_EQ(c.eta.popcount(), 0u);
    EXPECT_EQ(c.window.k, 0u);
  }
  EXPECT_EQ(init_federation(5, m, 42).global.theta_g, f.global.theta_g);
  EXPECT_EQ(init_federation(1, m, 42).clients.size(), 1u);
  EXPECT_THROW(init_federation(0, m, 42), ContractError);
}

TEST(Partition, Examples) {
  const ParamVector theta{3, -2, 5};
  const Partition p = partition_params(theta, BinaryMask{1, 0, 1});
  EXPECT_EQ(p.u, (ParamVector{3, 0, 5}));
  EXPECT_EQ(p.v, (ParamVector{0, -2, 0}));
  const Partition none = partition_params(theta, BinaryMask(3));
  EXPECT_EQ(none.u, (ParamVector{0, 0, 0}));
  EXPECT_EQ(none.v, theta);
  const Partition all = partition_params(theta, BinaryMask(3, true));
  EXPECT_EQ(all.u, theta);
  EXPECT_EQ(all.v, (ParamVector{0, 0, 0}));
  EXPECT_THROW(partition_params(theta, BinaryMask(2)), ContractError);
}

TEST(Aggregate, ContributorCountedMean) {
  const std::vector<Contribution> cs{{ParamVector{0, 4, 6}, BinaryMask{1, 0, 0}},
                                     {ParamVector{2, 8, 0}, BinaryMask{0, 0, 1}}};
  const AggregateResult r = aggregate_global(cs);
  EXPECT_EQ(r.zeta, (ParamVector{1, 2, 1}));
  EXPECT_EQ(r.theta_g, (ParamVector{2, 6, 6}));
  EXPECT_EQ(r.eta_g, (BinaryMask{1, 1, 1}));
}

TEST(Aggregate, NoContributorsLeavesZeros) {
  const std::vector<Contribution> cs{{ParamVector{0, 0, 0}, BinaryMask{1, 1, 1}},
                                     {ParamVector{0, 0, 0}, BinaryMask{1, 1, 1}}};
  const AggregateResult r = aggregate_global(cs);
  EXPECT_EQ(r.zeta, (ParamVector{0, 0, 0}));
  EXPECT_EQ(r.theta_g, (ParamVector{0, 0, 0}));
  EXPECT_EQ(r.eta_g, BinaryMask(3));
}

TEST(Aggregate, AllGlobalIsPlainMean) {
  const std::vector<Contribution> cs{{ParamVector{1, -2, 4}, BinaryMask(3)},
                                     {ParamVector{3, 2, 5}, BinaryMask(3)},
                                     {ParamVector{2, 3, 0}, BinaryMask(3)}};
  EXPECT_EQ(aggregate_global(cs).theta_g, (ParamVector{2, 1, 3}));
  EXPECT_THROW(aggregate_global(std::span<const Contribution>{}), ContractError);
}

TEST(Aggregate, ContributionAccountingProperty) {
  std::mt19937_64 rng(13);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial % 17, clients = 1 + trial % 5;
    std::vector<Contribution> cs;
    std::size_t expected = 0;
    for (std::size_t i = 0; i < clients; ++i) {
      BinaryMask eta(n);
      std::vector<double> v(n, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        eta.set(j, coin(rng));
        if (!eta[j]) v[j] = n01(rng);
      }
      expected += n - eta.popcount();
      cs.push_back({ParamVector(v), eta});
    }
    const AggregateResult r = aggregate_global(cs);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      total += r.zeta[j];
      ASSERT_LE(r.zeta[j], static_cast<double>(clients));
      ASSERT_EQ(static_cast<bool>(r.eta_g[j]), r.zeta[j] != 0.0);
      ASSERT_TRUE(std::isfinite(r.theta_g[j]));
    }
    ASSERT_EQ(total, static_cast<double>(expected));
  }
}

TEST(Reconstruct, Examples) {
  const ParamVector g{2, 6, 6};
  EXPECT_EQ(broadcast_reconstruct(g, BinaryMask{1, 0, 0}, ParamVector{9, 0, 0}), (ParamVector{9, 6, 6}));
  EXPECT_EQ(broadcast_reconstruct(g, BinaryMask(3), ParamVector{0, 0, 0}), g);
  EXPECT_EQ(broadcast_reconstruct(g, BinaryMask(3, true), ParamVector{1, 2, 3}), (ParamVector{1, 2, 3}));
  EXPECT_THROW(broadcast_reconstruct(g, BinaryMask(2), ParamVector{1, 2}), ContractError);
  EXPECT_THROW(broadcast_reconstruct(g, BinaryMask{1, 0, 0}, ParamVector{9, 1, 0}), ContractError);
}

// The two-client scripted round, traced by hand:
//   client 0: theta [8,3,4] + [1,1,2] = [9,4,6], eta [1,0,0] -> u+ [9,0,0], v+ [0,4,6]
//   client 1: theta [1,5,2] + [1,3,1] = [2,8,3], eta [0,0,1] -> u+ [0,0,3], v+ [2,8,0]
//   zeta [1,2,1], theta_g [2,6,6]; reconstruction [9,6,6] and [2,6,3]
//   window starts this round (k=0), so delta_avg = |v+ - v| = [0,1,2] and [1,3,0]
//   p = 0.5 of the two still-global indices picks one: index 2 and index 1
TEST(RunRound, ScriptedTwoClientTrace) {
  std::vector<ClientState> clients{make_client(0, ParamVector{8, 3, 4}, BinaryMask{1, 0, 0}),
                                   make_client(1, ParamVector{1, 5, 2}, BinaryMask{0, 0, 1})};
  HyperParams h;
  h.p = 0.5;
  h.rho = 1.0;
  const RoundOutput out = run_round(make_global(3, 0), clients, h,
                                    scripted({ParamVector{1, 1, 2}, ParamVector{1, 3, 1}}));
  EXPECT_EQ(out.global.zeta, (ParamVector{1, 2, 1}));
  EXPECT_EQ(out.global.theta_g, (ParamVector{2, 6, 6}));
  EXPECT_EQ(out.global.eta_g, (BinaryMask{1, 1, 1}));
  EXPECT_EQ(out.global.round, 1u);
  EXPECT_EQ(out.clients[0].theta, (ParamVector{9, 6, 6}));
  EXPECT_EQ(out.clients[1].theta, (ParamVector{2, 6, 3}));
  EXPECT_EQ(out.clients[0].eta, (BinaryMask{1, 0, 1}));
  EXPECT_EQ(out.clients[1].eta, (BinaryMask{0, 1, 1}));
  EXPECT_EQ(out.u_plus[0], (ParamVector{9, 0, 0}));
  EXPECT_EQ(out.u_plus[1], (ParamVector{0, 0, 3}));
  EXPECT_EQ(out.eta_used[0], (BinaryMask{1, 0, 0}));
  EXPECT_EQ(out.clients[0].window.k, 1u);
  EXPECT_EQ(out.clients[0].window.delta_sum, (ParamVector{0, 1, 0}));  // frozen index 2 cleared
  EXPECT_EQ(out.clients[1].window.delta_sum, (ParamVector{1, 0, 0}));
  EXPECT_EQ(out.record.clients[0].newly_frozen, 1u);
  EXPECT_DOUBLE_EQ(out.record.clients[1].personalization_fraction, 2.0 / 3.0);
}

TEST(RunRound, ZeroMasksAndNoSelectionIsUnweightedAverage) {
  std::vector<ClientState> clients{make_client(0, ParamVector{1, 1}, BinaryMask(2)),
                                   make_client(1, ParamVector{1, 1}, BinaryMask(2))};
  HyperParams h;
  h.p = 0.0;
  const RoundOutput out = run_round(make_global(2, 0), clients, h, scripted({ParamVector{1, 3}, ParamVector{3, 5}}));
  EXPECT_EQ(out.global.theta_g, (ParamVector{3, 5}));
  for (const auto& c : out.clients) {
    EXPECT_EQ(c.theta, (ParamVector{3, 5}));
    EXPECT_EQ(c.eta.popcount(), 0u);
  }
}

TEST(RunRound, FullyPersonalizedIndexNeverReachesGlobal) {
  std::vector<ClientState> clients{make_client(0, ParamVector{5, 1}, BinaryMask{1, 0}),
                                   make_client(1, ParamVector{7, 1}, BinaryMask{1, 0})};
  HyperParams h;
  h.rho = 0.0;
  GlobalState g = make_global(2, 0);
  for (int r = 0; r < 3; ++r) {
    RoundOutput out = run_round(g, clients, h, scripted({ParamVector{100, 1}, ParamVector{-50, 1}}));
    EXPECT_EQ(out.global.theta_g[0], 0.0);
    EXPECT_EQ(out.global.eta_g[0], 0);
    g = out.global;
    clients = out.clients;
  }
  EXPECT_EQ(clients[0].theta[0], 305.0);
  EXPECT_EQ(clients[1].theta[0], -143.0);
}

TEST(RunRound, NumericFailureNamesClientAndRound) {
  std::vector<ClientState> clients{make_client(0, ParamVector{1}, BinaryMask(1)),
                                   make_client(1, ParamVector{1}, BinaryMask(1))};
  LocalTrainer bad = [](const ClientState& c, const HyperParams&, std::size_t) -> LocalResult {
    if (c.id == 1) throw NumericError("loss_and_grad: non-finite loss");
    return {c.theta, 1.0};
  };
  try {
    run_round(make_global(1, 7), clients, HyperParams{}, bad);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("client 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("round 7"), std::string::npos) << msg;
  }
}

TEST(RunFederation, RecordShape) {
  ExperimentConfig c = small_config(1);
  c.rounds = 0;
  EXPECT_TRUE(run_federation(c).empty());
  c.rounds = 4;
  const auto recs = run_federation(c);
  ASSERT_EQ(recs.size(), 4u);
  for (std::size_t r = 0; r < recs.size(); ++r) {
    EXPECT_EQ(recs[r].round, r);
    EXPECT_EQ(recs[r].seed, 1u);
    EXPECT_EQ(recs[r].clients.size(), 3u);
  }
}

TEST(RunFederation, PersonalizationNeverShrinks) {
  const auto recs = run_federation(small_config(3));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t r = 1; r < recs.size(); ++r) {
      EXPECT_GE(recs[r].clients[i].personalization_fraction, recs[r - 1].clients[i].personalization_fraction);
    }
  }
}

TEST(RunFederation, FrozenParametersComeBackUntouched) {
  RunOptions opt;
  std::size_t checked = 0;
  opt.observer = [&](const RoundStep& step, const Simulation& sim) {
    for (std::size_t i = 0; i < step.u_plus.size(); ++i) {
      const ClientState& c = sim.state().clients[i];
      for (std::size_t j = 0; j < c.theta.size(); ++j) {
        if (!step.eta_used[i][j]) continue;
        ASSERT_EQ(c.theta[j], step.u_plus[i][j]);
        ++checked;
      }
    }
  };
  run_experiment(small_config(5), opt);
  EXPECT_GT(checked, 0u);
}

TEST(RunFederation, DeterministicAcrossRuns) {
  RunOptions opt;
  opt.keep_trajectory = true;
  const RunResult a = run_experiment(small_config(9), opt);
  const RunResult b = run_experiment(small_config(9), opt);
  EXPECT_EQ(a.global_trajectory, b.global_trajectory);
  EXPECT_EQ(a.partition_digest, b.partition_digest);
  for (std::size_t r = 0; r < a.records.size(); ++r) {
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(a.records[r].clients[i].test_accuracy, b.records[r].clients[i].test_accuracy);
    }
  }
}
