#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "sensched/policies.hpp"
#include "sensched/scenario.hpp"
#include "sensched/solver.hpp"

using namespace sensched;

namespace {

const std::string kScenarioDir = SENSCHED_SCENARIO_DIR;

ScenarioConfig wban() { return load_scenario(kScenarioDir + "/wban.json"); }
ScenarioConfig twostate() { return load_scenario(kScenarioDir + "/twostate.json"); }

// Stars-and-bars count of count vectors with total in [lo, hi] over S slots.
long compositions_between(int S, int lo, int hi) {
    long total = 0;
    for (int N = lo; N <= hi; ++N) {
        long c = 1; // C(N + S - 1, S - 1)
        for (int i = 1; i <= S - 1; ++i) c = c * (N + i) / i;
        total += c;
    }
    return total;
}

// Scenario whose observations carry no information about the state.
ScenarioConfig zero_information(int n) {
    ScenarioConfig c;
    for (int i = 0; i < n; ++i) c.states.push_back("s" + std::to_string(i));
    c.transition.assign(n, std::vector<double>(n, 0.0));
    // mildly asymmetric two-state chain; uniform rows otherwise
    if (n == 2) {
        c.transition = {{0.8, 0.2}, {0.3, 0.7}};
    } else {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) c.transition[i][j] = 1.0 / n;
    }
    c.n_tot = 2;
    c.min_samples = 1;
    c.sigma_ch = 0.0;
    c.sigma_noise = 0.1;
    SensorSpec s;
    s.name = "blind";
    s.cost = 0.5;
    for (int i = 0; i < n; ++i) s.measurement.push_back({1.0, 0.2}); // state-independent
    c.sensors.push_back(s);
    return c;
}

} // namespace

TEST_CASE("action enumeration counts and order") {
    ScenarioConfig c = wban();

    c.n_tot = 1;
    auto a1 = enumerate_actions(c);
    REQUIRE(a1.size() == 3);
    CHECK(a1[0].counts == std::vector<int>{0, 0, 1});
    CHECK(a1[1].counts == std::vector<int>{0, 1, 0});
    CHECK(a1[2].counts == std::vector<int>{1, 0, 0});

    c.n_tot = 6;
    const auto a6 = enumerate_actions(c);
    CHECK(a6.size() == 83);
    CHECK(static_cast<long>(a6.size()) == compositions_between(3, 1, 6));
    for (std::size_t i = 1; i < a6.size(); ++i) CHECK(a6[i - 1] < a6[i]);

    ScenarioConfig single = c;
    single.sensors.resize(1);
    single.n_tot = 3;
    single.min_samples = 0;
    const auto s1 = enumerate_actions(single);
    REQUIRE(s1.size() == 4);
    for (int k = 0; k < 4; ++k) CHECK(s1[k].counts == std::vector<int>{k});
}

TEST_CASE("expected future value: constants, zero information, martingale") {
    const ScenarioConfig c = twostate();
    const ObservationModel model(c, ChannelDesign::Intermediate);
    SolverOptions opt;
    opt.mc_samples = 128;
    const Belief b(std::vector<double>{0.6, 0.4});
    const Action a(std::vector<int>{1, 1, 0});
    const RngStream rng = RngStream(7).sub(role::quadrature);

    // Constant value function integrates exactly.
    const double kappa = 3.25;
    CHECK(expected_future_value(b, a, [&](const Belief&) { return kappa; }, model, opt, rng) ==
          Catch::Approx(kappa).margin(1e-14));

    // Zero-information scenario: posterior is the prediction, deterministically.
    const ScenarioConfig zc = zero_information(2);
    const ObservationModel zmodel(zc, ChannelDesign::Intermediate);
    const Belief pred = predict(b, zc);
    const ValueFn vf = [](const Belief& p) { return 3.0 * p[0] - p[1]; };
    CHECK(expected_future_value(b, Action(std::vector<int>{1}), vf, zmodel, opt, rng) ==
          Catch::Approx(vf(pred)).margin(1e-12));

    // Martingale property: for linear value functions the expectation equals
    // the value at the prediction, up to Monte Carlo error.
    opt.mc_samples = 4096;
    QuadratureStats stats;
    const double est = expected_future_value(b, a, vf, model, opt, rng, &stats);
    CHECK(std::abs(est - vf(predict(b, c))) < 5.0 * std::max(stats.se, 1e-6));
}

TEST_CASE("sigma-point quadrature agrees with Monte Carlo on small actions") {
    const ScenarioConfig c = twostate();
    const ObservationModel model(c, ChannelDesign::Intermediate);
    const Belief b(std::vector<double>{0.55, 0.45});
    const ValueFn vf = [](const Belief& p) { return estimation_error(p); };

    SolverOptions sp;
    sp.quadrature = QuadratureKind::SigmaPoint;
    sp.sigma_nodes = 9;
    SolverOptions mc;
    mc.mc_samples = 30000;

    for (const auto& counts : {std::vector<int>{1, 0, 0}, std::vector<int>{0, 1, 0},
                               std::vector<int>{1, 1, 0}}) {
        const Action a(counts);
        QuadratureStats stats;
        const double mc_est = expected_future_value(b, a, vf, model, mc,
                                                    RngStream(11).sub(role::quadrature), &stats);
        const double sp_est =
            expected_future_value(b, a, vf, model, sp, RngStream(11).sub(role::quadrature));
        CHECK(std::abs(sp_est - mc_est) < 4.0 * stats.se + 2e-3);
    }

    // Constant exactness holds for the deterministic rule too.
    CHECK(expected_future_value(b, Action(std::vector<int>{1, 1, 0}),
                                [](const Belief&) { return -2.5; }, model, sp,
                                RngStream(1)) == Catch::Approx(-2.5).margin(1e-12));
}

TEST_CASE("policy improvement at lambda=1 picks one cheapest sample") {
    const ScenarioConfig c = wban();
    const ObservationModel model(c, ChannelDesign::Intermediate);
    SolverOptions opt;
    opt.mc_samples = 64;
    const ValueFn zero = [](const Belief&) { return 0.0; };
    for (auto probs : {std::vector<double>{0.25, 0.25, 0.25, 0.25},
                       std::vector<double>{0.7, 0.1, 0.1, 0.1},
                       std::vector<double>{0.0, 0.0, 1.0, 0.0}}) {
        const auto r =
            policy_improvement(Belief(probs), zero, model, 1.0, opt, RngStream(3).sub(9));
        CHECK(r.action.counts == std::vector<int>{1, 0, 0});
        CHECK(r.k_value == Catch::Approx(0.58).margin(1e-12));
    }
}

TEST_CASE("policy improvement with a single feasible action returns it") {
    ScenarioConfig c = wban();
    c.n_tot = 1;
    c.min_samples = 1;
    c = restrict_to_sensor(c, 2);
    const ObservationModel model(c, ChannelDesign::Intermediate);
    SolverOptions opt;
    opt.mc_samples = 32;
    const auto r = policy_improvement(Belief(4), [](const Belief&) { return 1.0; }, model, 0.3,
                                      opt, RngStream(5));
    CHECK(r.action.counts == std::vector<int>{0, 0, 1});
}

TEST_CASE("greedy with the single-stage full budget equals exhaustive") {
    const ScenarioConfig c = twostate();
    const ObservationModel model(c, ChannelDesign::Intermediate);
    const ValueFn vf = [](const Belief& p) { return estimation_error(p); };
    SolverOptions ex;
    ex.mc_samples = 64;
    SolverOptions gr = ex;
    gr.greedy_schedule = {c.n_tot};

    for (double lambda : {0.0, 0.4, 1.0}) {
        for (auto probs : {std::vector<double>{0.5, 0.5}, std::vector<double>{0.9, 0.1}}) {
            const auto a = policy_improvement(Belief(probs), vf, model, lambda, ex,
                                              RngStream(17).sub(1));
            const auto b = policy_improvement(Belief(probs), vf, model, lambda, gr,
                                              RngStream(17).sub(1));
            CHECK(a.action == b.action);
            CHECK(a.k_value == b.k_value); // identical substreams: bit-equal
        }
    }
}

TEST_CASE("greedy dominance: stagewise minimum cannot beat the full minimum") {
    const ScenarioConfig c = wban();
    const ObservationModel model(c, ChannelDesign::Intermediate);
    const ValueFn vf = [](const Belief& p) { return 0.5 * estimation_error(p); };
    SolverOptions ex;
    ex.mc_samples = 48;
    SolverOptions gr = ex;
    gr.greedy_schedule.assign(static_cast<std::size_t>(c.n_tot), 1);

    RngStream beliefs(23);
    for (int t = 0; t < 4; ++t) {
        std::vector<double> p(4);
        double sum = 0.0;
        for (auto& v : p) sum += v = 0.05 + beliefs.uniform01();
        for (auto& v : p) v /= sum;
        for (double lambda : {0.0, 0.5}) {
            const auto full = policy_improvement(Belief(p), vf, model, lambda, ex,
                                                 RngStream(29).sub(2));
            const auto stag = policy_improvement(Belief(p), vf, model, lambda, gr,
                                                 RngStream(29).sub(2));
            CHECK(stag.k_value >= full.k_value - 1e-12);
        }
    }
}

TEST_CASE("value iteration at lambda=1 yields the cheapest sustained cost") {
    const ScenarioConfig c = wban();
    const BeliefGrid grid = build_grid(4, 3);
    SolverOptions opt;
    opt.mc_samples = 64;
    opt.compute_upper = false;
    const auto result = value_iteration(c, grid, 1.0, opt, RngStream(31).sub(role::quadrature));
    CHECK(std::abs(result.lower_bound_reward - 0.58) < 1e-6);
    for (const auto& a : result.policy.actions) CHECK(a.counts == std::vector<int>{1, 0, 0});
}

TEST_CASE("zero-information solve matches a hand-rolled deterministic recursion") {
    const ScenarioConfig c = zero_information(2);
    const BeliefGrid grid = build_grid(2, 6);
    SolverOptions opt;
    opt.mc_samples = 16;
    opt.compute_upper = false;
    opt.tolerance = 1e-9;
    opt.max_iterations = 4000;
    const double lambda = 0.0;
    const auto result = value_iteration(c, grid, lambda, opt, RngStream(37).sub(1));

    // Oracle: posterior == prediction, so the grid recursion is
    // h(b) <- Delta(b) + interp(h)(T b) with relative offsetting; iterate it
    // directly, independent of the solver machinery.
    std::vector<double> h(grid.size(), 0.0);
    double lo = 0.0, hi = 0.0;
    for (int it = 0; it < 100000; ++it) {
        std::vector<double> u(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const Belief pred = predict(grid.points[k], c);
            double interp = (1.0 - lambda) * estimation_error(pred);
            for (const auto& [idx, w] : barycentric_weights(pred, grid))
                interp += w * (h[idx] - (1.0 - lambda) * estimation_error(grid.points[idx]));
            u[k] = (1.0 - lambda) * estimation_error(grid.points[k]) + interp;
        }
        lo = std::numeric_limits<double>::infinity();
        hi = -lo;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            lo = std::min(lo, u[k] - h[k]);
            hi = std::max(hi, u[k] - h[k]);
        }
        const double off = u[0];
        for (std::size_t k = 0; k < grid.size(); ++k) h[k] = u[k] - off;
        if (hi - lo < 1e-10) break;
    }
    CHECK(std::abs(result.lower_bound_reward - 0.5 * (lo + hi)) < 1e-8);
}

TEST_CASE("finer grids do not lower the bound (twostate, lambda 0.5)") {
    const ScenarioConfig c = twostate();
    SolverOptions opt;
    opt.mc_samples = 96;
    opt.compute_upper = false;
    const double coarse =
        value_iteration(c, build_grid(2, 5), 0.5, opt, RngStream(41).sub(1)).lower_bound_reward;
    const double fine =
        value_iteration(c, build_grid(2, 200), 0.5, opt, RngStream(41).sub(1)).lower_bound_reward;
    // Finer interpolation can only raise the concavity lower bound, up to
    // Monte Carlo noise on the shared sample set.
    CHECK(coarse <= fine + 0.02);
}

TEST_CASE("lower bound interpolation: exactness and dominance over the loose bound") {
    const ScenarioConfig c = twostate();
    const BeliefGrid grid = build_grid(2, 5);
    SolverOptions opt;
    opt.mc_samples = 64;
    opt.compute_upper = false;
    const auto result = value_iteration(c, grid, 0.3, opt, RngStream(43).sub(1));
    const ValueTable& t = result.table;

    for (std::size_t k = 0; k < grid.size(); ++k)
        CHECK(lower_bound_value(grid.points[k], t, 0.3) ==
              Catch::Approx(t.values[k]).margin(1e-12));

    RngStream r(47);
    for (int trial = 0; trial < 200; ++trial) {
        const double x = r.uniform01();
        const Belief p(std::vector<double>{x, 1.0 - x});
        double loose = 0.0;
        for (const auto& [idx, w] : barycentric_weights(p, grid)) loose += w * t.values[idx];
        CHECK(lower_bound_value(p, t, 0.3) >= loose - 1e-12);
    }
}

TEST_CASE("linear value stub is reproduced exactly by the interpolant") {
    const BeliefGrid grid = build_grid(2, 5);
    ValueTable t;
    t.grid = grid;
    t.lambda = 1.0; // no Delta correction
    t.values.resize(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) t.values[k] = 2.0 * grid.points[k][0] - 0.7;
    RngStream r(53);
    for (int trial = 0; trial < 100; ++trial) {
        const double x = r.uniform01();
        const Belief p(std::vector<double>{x, 1.0 - x});
        CHECK(lower_bound_value(p, t, 1.0) == Catch::Approx(2.0 * x - 0.7).margin(1e-12));
    }
}

TEST_CASE("tangents: affine and concave quadratic stubs") {
    const BeliefGrid grid = build_grid(3, 4);

    // Affine G: every tangent reproduces G globally; upper == lower == exact.
    ValueTable affine;
    affine.grid = grid;
    affine.lambda = 1.0;
    affine.values.resize(grid.size());
    const auto g_affine = [](const Belief& p) { return 0.3 * p[0] - 1.1 * p[1] + 0.4 * p[2]; };
    for (std::size_t k = 0; k < grid.size(); ++k) affine.values[k] = g_affine(grid.points[k]);
    affine = compute_tangents(std::move(affine), 1.0);

    RngStream r(59);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> p(3);
        double sum = 0.0;
        for (auto& v : p) sum += v = 0.01 + r.uniform01();
        for (auto& v : p) v /= sum;
        const Belief b(p);
        CHECK(upper_bound_value(b, affine, 1.0) == Catch::Approx(g_affine(b)).margin(1e-10));
        CHECK(lower_bound_value(b, affine, 1.0) == Catch::Approx(g_affine(b)).margin(1e-10));
    }
    // Tangent through its own point.
    for (std::size_t k = 0; k < grid.size(); ++k)
        CHECK(upper_bound_value(grid.points[k], affine, 1.0) ==
              Catch::Approx(affine.values[k]).margin(1e-12));

    // Concave quadratic stub: min over tangents dominates G on a dense mesh.
    ValueTable quad;
    quad.grid = grid;
    quad.lambda = 1.0;
    quad.values.resize(grid.size());
    const auto g_quad = [](const Belief& p) {
        return -(1.3 * p[0] * p[0] + 0.7 * p[1] * p[1] + 2.0 * p[2] * p[2]) + 0.5 * p[0];
    };
    for (std::size_t k = 0; k < grid.size(); ++k) quad.values[k] = g_quad(grid.points[k]);
    quad = compute_tangents(std::move(quad), 1.0);
    for (int a = 0; a <= 20; ++a)
        for (int b2 = 0; a + b2 <= 20; ++b2) {
            const Belief p(std::vector<double>{a / 20.0, b2 / 20.0, (20 - a - b2) / 20.0});
            CHECK(upper_bound_value(p, quad, 1.0) >= g_quad(p) - 1e-10);
        }
    for (std::size_t k = 0; k < grid.size(); ++k)
        CHECK(upper_bound_value(grid.points[k], quad, 1.0) ==
              Catch::Approx(quad.values[k]).margin(1e-10));

    ValueTable bare;
    bare.grid = grid;
    bare.values = quad.values;
    CHECK_THROWS_AS(upper_bound_value(Belief(3), bare, 1.0), MissingTangents);
}

TEST_CASE("converged G is midpoint-concave on the grid") {
    // G = J - (1-lambda)*Delta should satisfy
    // G((p+q)/2) >= (G(p)+G(q))/2 - tol on grid-point pairs whose midpoint is
    // itself a grid point.
    const ScenarioConfig c = twostate();
    const BeliefGrid grid = build_grid(2, 8);
    SolverOptions opt;
    opt.mc_samples = 256;
    opt.compute_upper = false;
    for (double lambda : {0.0, 0.5}) {
        const auto result = value_iteration(c, grid, lambda, opt, RngStream(83).sub(1));
        std::vector<double> g(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k)
            g[k] = result.table.values[k] -
                   (1.0 - lambda) * estimation_error(grid.points[k]);
        int checked = 0;
        for (std::size_t i = 0; i < grid.size(); ++i)
            for (std::size_t j = i + 2; j < grid.size(); ++j) {
                if ((grid.coords[i][0] + grid.coords[j][0]) % 2 != 0) continue;
                std::vector<int> mid = {(grid.coords[i][0] + grid.coords[j][0]) / 2,
                                        (grid.coords[i][1] + grid.coords[j][1]) / 2};
                const std::size_t m = grid.index_of(mid);
                CHECK(g[m] >= 0.5 * (g[i] + g[j]) - 5e-3); // Monte Carlo slack
                ++checked;
            }
        CHECK(checked > 0);
    }
}

TEST_CASE("upper bound dominates lower bound on solved tables") {
    const ScenarioConfig c = twostate();
    const BeliefGrid grid = build_grid(2, 5);
    SolverOptions opt;
    opt.mc_samples = 96;
    for (double lambda : {0.0, 0.5, 1.0}) {
        const auto result = value_iteration(c, grid, lambda, opt, RngStream(61).sub(2));
        RngStream r(67);
        for (int t = 0; t < 300; ++t) {
            const double x = r.uniform01();
            const Belief p(std::vector<double>{x, 1.0 - x});
            CHECK(lower_bound_value(p, result.table, lambda) <=
                  upper_bound_value(p, result.table, lambda) + 1e-10);
        }
        CHECK(result.lower_bound_reward <= result.upper_bound_reward + 1e-9);
    }
}

TEST_CASE("monotone improvement with frozen substreams (discounted, from above)") {
    // With the sampled kernel frozen and J0 an upper bound, the Bellman
    // operator decreases monotonically; K at each grid point is
    // non-increasing across sweeps.
    const ScenarioConfig c = twostate();
    const ObservationModel model(c, ChannelDesign::Intermediate);
    const BeliefGrid grid = build_grid(2, 5);
    SolverOptions opt;
    opt.mode = SolveMode::Discounted;
    opt.discount = 0.9;
    opt.mc_samples = 64;

    const double r_max = 1.0 * (1.0 - 0.0) + 1.0 * 3.0; // coarse cost ceiling
    std::vector<double> J(grid.size(), r_max / (1.0 - opt.discount));
    const auto actions = enumerate_actions(c);
    std::vector<double> prev_k(grid.size() * actions.size(),
                               std::numeric_limits<double>::infinity());
    const RngStream rng = RngStream(71).sub(role::quadrature);
    for (int sweep = 0; sweep < 6; ++sweep) {
        ValueTable t;
        t.grid = grid;
        t.lambda = 0.5;
        t.values = J;
        const ValueFn vf = [&](const Belief& p) { return lower_bound_value(p, t, 0.5); };
        std::vector<double> newJ(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < actions.size(); ++a) {
                const double kv =
                    (1.0 - 0.5) * estimation_error(grid.points[k]) +
                    0.5 * energy_cost(actions[a], c) +
                    opt.discount *
                        expected_future_value(grid.points[k], actions[a], vf, model, opt, rng);
                CHECK(kv <= prev_k[k * actions.size() + a] + 1e-9);
                prev_k[k * actions.size() + a] = kv;
                best = std::min(best, kv);
            }
            newJ[k] = best;
        }
        J = newJ;
    }
}

TEST_CASE("discounted mode: lambda=1 gain-equivalent reward is the slot cost") {
    // At lambda=1 the cost is 0.58 per slot whatever happens, so
    // J = 0.58/(1-gamma) everywhere and (1-gamma)*J(pi) = 0.58.
    const ScenarioConfig c = wban();
    SolverOptions opt;
    opt.mode = SolveMode::Discounted;
    opt.discount = 0.9;
    opt.mc_samples = 32;
    opt.compute_upper = false;
    opt.tolerance = 1e-10;
    opt.max_iterations = 500;
    const auto result =
        value_iteration(c, build_grid(4, 3), 1.0, opt, RngStream(89).sub(1));
    CHECK(result.lower_bound_reward == Catch::Approx(0.58).margin(1e-7));
    for (double v : result.table.values)
        CHECK(v == Catch::Approx(0.58 / (1.0 - 0.9)).margin(1e-6));
    for (const auto& a : result.policy.actions) CHECK(a.counts == std::vector<int>{1, 0, 0});
}

TEST_CASE("value tables round-trip through JSON") {
    const ScenarioConfig c = twostate();
    const BeliefGrid grid = build_grid(2, 5);
    SolverOptions opt;
    opt.mc_samples = 48;
    const auto result = value_iteration(c, grid, 0.25, opt, RngStream(73).sub(1));

    const nlohmann::json jt = to_json(result.table);
    const ValueTable t2 = value_table_from_json(jt);
    CHECK(t2.values == result.table.values);
    CHECK(t2.lambda == result.table.lambda);
    REQUIRE(t2.tangents.size() == result.table.tangents.size());
    for (std::size_t i = 0; i < t2.tangents.size(); ++i) {
        CHECK(t2.tangents[i].intercept == result.table.tangents[i].intercept);
        CHECK(t2.tangents[i].slope == result.table.tangents[i].slope);
    }

    const nlohmann::json jp = to_json(result.policy);
    const PolicyTable p2 = policy_table_from_json(jp);
    REQUIRE(p2.actions.size() == result.policy.actions.size());
    for (std::size_t i = 0; i < p2.actions.size(); ++i)
        CHECK(p2.actions[i] == result.policy.actions[i]);
    CHECK(p2.k_values == result.policy.k_values);
}

TEST_CASE("non-convergence raises with diagnostics") {
    const ScenarioConfig c = twostate();
    const BeliefGrid grid = build_grid(2, 5);
    SolverOptions opt;
    opt.mc_samples = 32;
    opt.tolerance = 0.0;
    opt.max_iterations = 2;
    CHECK_THROWS_AS(value_iteration(c, grid, 0.5, opt, RngStream(79).sub(1)), NonConvergence);
}

TEST_CASE("solver options are validated") {
    const ScenarioConfig c = twostate();
    SolverOptions opt;
    opt.mode = SolveMode::Discounted;
    opt.discount = 1.0;
    CHECK_THROWS_AS(opt.check(c), ValidationError);

    SolverOptions greedy;
    greedy.greedy_schedule = {1, 1}; // sums to 2, n_tot is 3
    CHECK_THROWS_AS(greedy.check(c), ValidationError);
    greedy.greedy_schedule = {1, 1, 1};
    CHECK_NOTHROW(greedy.check(c));
}
