#include <doctest.h>

#include <set>

#include "enserve/cost/cost_model.hpp"
#include "enserve/memory/memory_model.hpp"
#include "enserve/opt/optimizer.hpp"
#include "test_fixtures.hpp"

using namespace enserve;
using namespace enserve::testing;

namespace {

ScoreFn analytic_bench(const ClusterSpec& cluster) {
  return [&cluster](const AllocationMatrix& A) {
    return predict_ensemble_throughput(A, cluster);
  };
}

}  // namespace

TEST_CASE("worst_fit_decreasing places the only model on the only GPU") {
  ClusterSpec c;
  c.devices = {gpu(0, 16000.0)};
  c.models = {model(0, "m0", 1000.0, 10.0)};
  c.batch_menu = {8, 16, 32, 64, 128};
  AllocationMatrix A = worst_fit_decreasing(c, 8);
  CHECK(A.at(0, 0) == 8);
  CHECK(A.worker_count() == 1);
}

TEST_CASE("worst_fit_decreasing spreads by remaining memory, heaviest first") {
  // Hand execution: 8000 -> gpu0 (both empty, lower id); 6000 -> gpu1
  // (16000 free vs 8000); 4000 -> gpu1 again (10000 free vs 8000).
  ClusterSpec c;
  c.devices = {gpu(0, 16000.0), gpu(1, 16000.0)};
  c.models = {model(0, "big", 8000.0), model(1, "mid", 6000.0),
              model(2, "small", 4000.0)};
  c.batch_menu = {8};
  AllocationMatrix A = worst_fit_decreasing(c, 8);
  CHECK(A.at(0, 0) == 8);
  CHECK(A.at(1, 1) == 8);
  CHECK(A.at(1, 2) == 8);
}

TEST_CASE("worst_fit_decreasing falls back to the CPU when GPUs are full") {
  ClusterSpec c;
  c.devices = {cpu(0, 64000.0), gpu(1, 5000.0)};
  c.models = {model(0, "fills-gpu", 4000.0), model(1, "spills", 2000.0)};
  c.batch_menu = {8};
  AllocationMatrix A = worst_fit_decreasing(c, 8);
  CHECK(A.at(1, 0) == 8);  // heaviest takes the GPU
  CHECK(A.at(0, 1) == 8);  // second does not fit there; CPU catches it
}

TEST_CASE("worst_fit_decreasing errors when a model fits nowhere") {
  ClusterSpec c;
  c.devices = {gpu(0, 1000.0)};
  c.models = {model(0, "oversized", 5000.0)};
  c.batch_menu = {8};
  CHECK_THROWS_AS(worst_fit_decreasing(c, 8), AllocationError);
  try {
    worst_fit_decreasing(c, 8);
  } catch (const AllocationError& e) {
    CHECK(e.model_name == "oversized");
  }
}

TEST_CASE("worst_fit_decreasing rejects a batch outside the menu") {
  ClusterSpec c = tiny_cluster();
  CHECK_THROWS_AS(worst_fit_decreasing(c, 12), SpecError);
}

TEST_CASE("neighborhood enumerates single-cell edits") {
  SUBCASE("1x1 grid, menu {8,16}: only the other batch") {
    ClusterSpec c = tiny_cluster({8, 16}, 1, 1);
    AllocationMatrix A(1, 1);
    A.set(0, 0, 8);
    std::vector<AllocationMatrix> n = neighborhood(A, c);
    REQUIRE(n.size() == 1);
    CHECK(n[0].at(0, 0) == 16);
  }
  SUBCASE("2 devices x 1 model, menu {8}: only data-parallel growth") {
    ClusterSpec c = tiny_cluster({8}, 2, 1);
    AllocationMatrix A(2, 1);
    A.set(0, 0, 8);
    std::vector<AllocationMatrix> n = neighborhood(A, c);
    REQUIRE(n.size() == 1);
    CHECK(n[0].at(0, 0) == 8);
    CHECK(n[0].at(1, 0) == 8);
  }
  SUBCASE("every neighbor of a valid matrix is valid") {
    ClusterSpec c = imagenet4_cluster();
    AllocationMatrix A = imagenet4_matrix();
    for (const AllocationMatrix& B : neighborhood(A, c))
      CHECK(validate_matrix(B, c).ok);
  }
}

TEST_CASE("count_total_matrices is exact") {
  CHECK(count_total_matrices(5, 5, 8) ==
        BigInt("13353748160923658642730712890625"));  // 7775^8
  CHECK(count_total_matrices(5, 1, 1) == 5);
  CHECK(count_total_matrices(1, 2, 1) == 3);
}

TEST_CASE("count_total_neighs applies the reporting formula") {
  CHECK(count_total_neighs(5, 5, 8, 8) == 232);
  CHECK(count_total_neighs(5, 5, 8, 0) == 240);
  CHECK(count_total_neighs(1, 1, 1, 0) == 2);
  CHECK(count_total_neighs(5, 5, 8, 4) == 236);
}

TEST_CASE("enumerate_all_matrices yields each valid matrix once") {
  SUBCASE("1 batch value, 2 devices, 1 model: the three placements") {
    ClusterSpec c = tiny_cluster({8}, 2, 1);
    std::vector<AllocationMatrix> all = enumerate_all_matrices(c, BigInt(100));
    REQUIRE(all.size() == 3);
    std::set<std::pair<int, int>> seen;
    for (const AllocationMatrix& A : all) {
      CHECK(validate_matrix(A, c).ok);
      seen.insert({A.at(0, 0), A.at(1, 0)});
    }
    CHECK(seen == std::set<std::pair<int, int>>{{0, 8}, {8, 0}, {8, 8}});
  }
  SUBCASE("5 batch values, 1 device, 1 model") {
    ClusterSpec c = tiny_cluster({8, 16, 32, 64, 128}, 1, 1);
    CHECK(enumerate_all_matrices(c, BigInt(100)).size() == 5);
  }
  SUBCASE("refuses a space beyond the cap") {
    ClusterSpec c = imagenet4_cluster();
    for (int i = 0; i < 4; ++i)
      c.models.push_back(model(4 + i, "x" + std::to_string(i), 100.0));
    CHECK_THROWS_AS(enumerate_all_matrices(c, BigInt(1000000)),
                    CapExceededError);
  }
}

TEST_CASE("enumeration cardinality matches the closed form on small spaces") {
  std::vector<int> menu_pool = {8, 16};
  for (int B = 1; B <= 2; ++B) {
    for (int D = 1; D <= 3; ++D) {
      for (int M = 1; M <= 2; ++M) {
        ClusterSpec c = tiny_cluster(
            std::vector<int>(menu_pool.begin(), menu_pool.begin() + B), D, M);
        std::size_t seen = 0;
        std::set<std::vector<int>> distinct;
        for_each_matrix(c, BigInt(100000), [&](const AllocationMatrix& A) {
          ++seen;
          std::vector<int> flat;
          for (int d = 0; d < D; ++d)
            for (int m = 0; m < M; ++m) flat.push_back(A.at(d, m));
          distinct.insert(flat);
          CHECK(validate_matrix(A, c).ok);
        });
        BigInt expected = count_total_matrices(B, D, M);
        CHECK(BigInt(seen) == expected);
        CHECK(distinct.size() == seen);  // no duplicates
      }
    }
  }
}

TEST_CASE("effective_max_iter widens the cap on device-heavy clusters") {
  CHECK(effective_max_iter(17, 1, 10) == 16);
  CHECK(effective_max_iter(5, 8, 10) == 10);
  CHECK(effective_max_iter(13, 1, 10) == 12);
}

TEST_CASE("bounded_greedy returns the start matrix on an immediate plateau") {
  ClusterSpec c = tiny_cluster({8}, 1, 1);
  AllocationMatrix A(1, 1);
  A.set(0, 0, 8);  // no neighbors at all
  GreedyResult r = bounded_greedy(A, c, analytic_bench(c), {10, 100, 1});
  CHECK(r.matrix == A);
  CHECK(r.trace.stop_reason == StopReason::local_optimum);
  CHECK(r.trace.final_score == r.trace.start_score);
  CHECK(r.trace.iterations.size() == 1);
  CHECK_FALSE(r.trace.iterations[0].accepted);
}

TEST_CASE("bounded_greedy reaches the brute-force optimum of a tiny space") {
  // 1 model x 2 identical devices, menu {8,128}, overhead > 0: the analytic
  // optimum over all 8 valid matrices is both devices at 128.
  ClusterSpec c = tiny_cluster({8, 128}, 2, 1);
  for (DeviceSpec& d : c.devices) {
    d.compute_rate = 1000.0;
    d.batch_overhead_s = 0.01;
  }
  ScoreFn score = analytic_bench(c);

  double best_everywhere = 0.0;
  AllocationMatrix best_matrix;
  for (const AllocationMatrix& A : enumerate_all_matrices(c, BigInt(100))) {
    double s = score(A);
    if (s > best_everywhere) {
      best_everywhere = s;
      best_matrix = A;
    }
  }
  CHECK(best_matrix.at(0, 0) == 128);
  CHECK(best_matrix.at(1, 0) == 128);

  AllocationMatrix A0 = worst_fit_decreasing(c, 8);
  GreedyResult r = bounded_greedy(A0, c, score, {10, 100, 42});
  CHECK(r.trace.final_score == doctest::Approx(best_everywhere));
  CHECK(r.matrix == best_matrix);
}

TEST_CASE("bounded_greedy keeps inside the bench budget") {
  ClusterSpec c = imagenet4_cluster();
  for (int i = 0; i < 4; ++i)
    c.models.push_back(
        model(4 + i, "x" + std::to_string(i), 120.0, 4.0, 1.0 + i));
  int calls = 0;
  ScoreFn counted = [&](const AllocationMatrix& A) {
    ++calls;
    return predict_ensemble_throughput(A, c);
  };
  AllocationMatrix A0 = worst_fit_decreasing(c, 8);
  GreedyResult r = bounded_greedy(A0, c, counted, {10, 100, 3});
  int neighbor_evals = 0;
  for (const GreedyIteration& it : r.trace.iterations) {
    CHECK(it.neighbors_evaluated <= 100);
    neighbor_evals += it.neighbors_evaluated;
  }
  CHECK(neighbor_evals <= 1000);  // at most max_iter * max_neighs
  CHECK(calls <= 1 + 10 * 100);   // plus the starting evaluation
  CHECK(calls == r.trace.bench_calls());
}

TEST_CASE("bounded_greedy is deterministic for a fixed seed") {
  std::mt19937_64 rng(99);
  ClusterSpec c = random_cluster(rng);
  AllocationMatrix A0 = worst_fit_decreasing(c, c.min_batch());
  GreedyConfig config{5, 3, 1234};  // tiny cap forces subsampling
  GreedyResult a = bounded_greedy(A0, c, analytic_bench(c), config);
  GreedyResult b = bounded_greedy(A0, c, analytic_bench(c), config);
  CHECK(a.matrix == b.matrix);
  CHECK(a.trace.final_score == b.trace.final_score);
  REQUIRE(a.trace.iterations.size() == b.trace.iterations.size());
  for (std::size_t i = 0; i < a.trace.iterations.size(); ++i) {
    CHECK(a.trace.iterations[i].best_score ==
          b.trace.iterations[i].best_score);
    CHECK(a.trace.iterations[i].neighbors_evaluated ==
          b.trace.iterations[i].neighbors_evaluated);
  }
}

TEST_CASE("bounded_greedy never loses ground and accepted scores rise") {
  std::mt19937_64 rng(2024);
  int done = 0;
  while (done < 40) {
    ClusterSpec c = random_cluster(rng);
    AllocationMatrix A0;
    try {
      A0 = worst_fit_decreasing(c, c.min_batch());
    } catch (const AllocationError&) {
      continue;  // infeasible draw; try another instance
    }
    GreedyResult r = bounded_greedy(A0, c, analytic_bench(c), {10, 100, rng()});
    CHECK(r.trace.final_score >= r.trace.start_score);
    double last = r.trace.start_score;
    for (const GreedyIteration& it : r.trace.iterations) {
      if (it.accepted) {
        CHECK(it.best_score > last);
        last = it.best_score;
      }
    }
    ++done;
  }
}

TEST_CASE("greedy with the full neighborhood stops only at a local optimum") {
  ClusterSpec c = tiny_cluster({8, 16}, 2, 2);
  for (DeviceSpec& d : c.devices) d.batch_overhead_s = 0.01;
  c.models[1].cost_per_sample = 2.0;
  ScoreFn score = analytic_bench(c);
  AllocationMatrix A0 = worst_fit_decreasing(c, 8);
  GreedyResult r = bounded_greedy(A0, c, score, {50, 1000, 7});
  REQUIRE(r.trace.stop_reason == StopReason::local_optimum);
  double final_score = score(r.matrix);
  for (const AllocationMatrix& B : neighborhood(r.matrix, c))
    CHECK(score(B) <= final_score + 1e-12);
}

TEST_CASE("bbs_baseline scans each model's batch sizes in isolation") {
  SUBCASE("one model, one GPU: five calls") {
    ClusterSpec c;
    c.devices = {gpu(0, 16000.0)};
    c.models = {model(0, "m0", 1000.0, 2.0, 1.0)};
    c.batch_menu = {8, 16, 32, 64, 128};
    int calls = 0;
    BaselineResult r =
        bbs_baseline(c, [&](const AllocationMatrix& A, const ClusterSpec& cl) {
          ++calls;
          return predict_ensemble_throughput(A, cl);
        });
    CHECK(r.bench_calls == 5);
    CHECK(calls == 5);
    CHECK(r.matrix.at(0, 0) == 128);  // overhead favors the largest batch
  }
  SUBCASE("four models, four GPUs: twenty calls, one model per GPU") {
    ClusterSpec c = imagenet4_cluster();
    c.devices.erase(c.devices.begin());  // GPUs only
    for (std::size_t d = 0; d < c.devices.size(); ++d)
      c.devices[d].id = static_cast<int>(d);
    BaselineResult r = bbs_baseline(
        c, [](const AllocationMatrix& A, const ClusterSpec& cl) {
          return predict_ensemble_throughput(A, cl);
        });
    CHECK(r.bench_calls == 20);
    CHECK(r.matrix.worker_count() == 4);
    for (int m = 0; m < 4; ++m) CHECK(r.matrix.column_worker_count(m) == 1);
    for (int d = 0; d < 4; ++d) CHECK(r.matrix.row_worker_count(d) == 1);
    // vgg19 is the heaviest, so it lands on gpu id 0.
    CHECK(r.matrix.at(0, 3) > 0);
  }
  SUBCASE("fewer GPUs than models is inapplicable") {
    ClusterSpec c = tiny_cluster({8}, 1, 2);
    CHECK_THROWS_AS(
        bbs_baseline(
            c, [](const AllocationMatrix&, const ClusterSpec&) { return 1.0; }),
        BaselineError);
  }
}

TEST_CASE("worst_fit output is always valid and feasible, with GPU priority") {
  std::mt19937_64 rng(5150);
  int done = 0;
  while (done < 50) {
    ClusterSpec c = random_cluster(rng);
    AllocationMatrix A;
    try {
      A = worst_fit_decreasing(c, c.min_batch());
    } catch (const AllocationError&) {
      continue;
    }
    CHECK(validate_matrix(A, c).ok);
    CHECK(fit_mem(A, c).fits);
    CHECK(A.worker_count() == c.model_count());  // each model placed once

    // A model on a CPU means no GPU could take it, even against the final
    // loads (loads only grew since it was placed).
    for (int d = 0; d < c.device_count(); ++d) {
      if (c.devices[d].kind != DeviceKind::CPU) continue;
      for (int m = 0; m < c.model_count(); ++m) {
        if (A.at(d, m) == 0) continue;
        for (int g = 0; g < c.device_count(); ++g) {
          if (c.devices[g].kind != DeviceKind::GPU) continue;
          AllocationMatrix retry = A;
          retry.set(d, m, 0);
          retry.set(g, m, c.min_batch());
          CHECK_FALSE(fit_mem(retry, c).fits);
        }
      }
    }
    ++done;
  }
}

TEST_CASE("worst-fit round-robins identical empty devices") {
  ClusterSpec c;
  for (int d = 0; d < 4; ++d) c.devices.push_back(gpu(d, 16000.0));
  for (int m = 0; m < 4; ++m)
    c.models.push_back(model(m, "m" + std::to_string(m), 1000.0 - m));
  c.batch_menu = {8};
  AllocationMatrix A = worst_fit_decreasing(c, 8);
  for (int d = 0; d < 4; ++d) CHECK(A.row_worker_count(d) == 1);
  CHECK(A.at(0, 0) == 8);  // heaviest lands first, on the lowest id
  CHECK(A.at(3, 3) == 8);
}
