#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "sensched/policies.hpp"
#include "sensched/scenario.hpp"

using namespace sensched;

namespace {
const std::string kScenarioDir = SENSCHED_SCENARIO_DIR;
ScenarioConfig wban() { return load_scenario(kScenarioDir + "/wban.json"); }
ScenarioConfig twostate() { return load_scenario(kScenarioDir + "/twostate.json"); }
} // namespace

TEST_CASE("bbp is deterministic on grid points") {
    const BeliefGrid grid = build_grid(2, 5);
    PolicyTable table;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        table.actions.emplace_back(std::vector<int>{static_cast<int>(k % 3), 1, 0});
        table.k_values.push_back(0.0);
    }
    RngStream rng(5);
    for (std::size_t k = 0; k < grid.size(); ++k)
        for (int rep = 0; rep < 10; ++rep)
            CHECK(bbp_action(grid.points[k], table, grid, rng) == table.actions[k]);
}

TEST_CASE("bbp between vertices with equal actions is that action") {
    const BeliefGrid grid = build_grid(2, 5);
    PolicyTable table;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        table.actions.emplace_back(std::vector<int>{2, 0, 0});
        table.k_values.push_back(0.0);
    }
    RngStream rng(11);
    const Belief p(std::vector<double>{0.31, 0.69});
    for (int rep = 0; rep < 50; ++rep)
        CHECK(bbp_action(p, table, grid, rng).counts == std::vector<int>{2, 0, 0});
}

TEST_CASE("bbp vertex frequencies match the barycentric weights") {
    const BeliefGrid grid = build_grid(2, 5);
    PolicyTable table;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        table.actions.emplace_back(std::vector<int>{static_cast<int>(k), 0, 0});
        table.k_values.push_back(0.0);
    }
    // p = 0.25 * b(0.2,0.8) + 0.75 * b(0.4,0.6)
    const Belief p(std::vector<double>{0.35, 0.65});
    RngStream rng(13);
    std::map<std::vector<int>, int> hits;
    const int draws = 10000;
    for (int t = 0; t < draws; ++t) ++hits[bbp_action(p, table, grid, rng).counts];
    REQUIRE(hits.size() == 2);
    const double f1 = hits[{1, 0, 0}] / static_cast<double>(draws); // vertex 0.2/0.8
    const double f2 = hits[{2, 0, 0}] / static_cast<double>(draws); // vertex 0.4/0.6
    CHECK(std::abs(f1 - 0.25) < 0.01);
    CHECK(std::abs(f2 - 0.75) < 0.01);

    // Chi-square on the two-cell marginal at 10^4 draws.
    const double e1 = draws * 0.25, e2 = draws * 0.75;
    const double chi2 = (hits[{1, 0, 0}] - e1) * (hits[{1, 0, 0}] - e1) / e1 +
                        (hits[{2, 0, 0}] - e2) * (hits[{2, 0, 0}] - e2) / e2;
    CHECK(chi2 < 10.83); // p > 0.001 at 1 dof
}

TEST_CASE("sensor restriction constrains the action set") {
    const ScenarioConfig c = wban();
    const ScenarioConfig acc1 = restrict_to_sensor(c, 0);
    const auto actions = enumerate_actions(acc1);
    REQUIRE(actions.size() == static_cast<std::size_t>(c.n_tot - c.min_samples + 1));
    for (const auto& a : actions) {
        CHECK(a.counts[1] == 0);
        CHECK(a.counts[2] == 0);
        CHECK(a.counts[0] >= 1);
        CHECK(a.counts[0] <= 6);
    }
    CHECK_THROWS_AS(restrict_to_sensor(c, 3), ValidationError);
}

TEST_CASE("restricted solves cannot beat the unrestricted optimum") {
    const ScenarioConfig c = twostate();
    const BeliefGrid grid = build_grid(2, 5);
    SolverOptions opt;
    opt.mc_samples = 128;
    opt.compute_upper = false;
    const RngStream rng = RngStream(17).sub(role::quadrature);

    const double full = value_iteration(c, grid, 0.0, opt, rng).lower_bound_reward;
    for (int s = 0; s < 3; ++s) {
        const double restricted =
            value_iteration(restrict_to_sensor(c, s), grid, 0.0, opt, rng).lower_bound_reward;
        CHECK(restricted >= full - 0.02);
    }
}

TEST_CASE("masked variants: measurements-only equals full without channels") {
    // Strip channels and features: the masks agree exactly (same kernel).
    ScenarioConfig c = twostate();
    for (auto& s : c.sensors) {
        s.channel.clear();
        s.features.clear();
    }
    const BeliefGrid grid = build_grid(2, 5);
    SolverOptions full_opt;
    full_opt.mc_samples = 64;
    full_opt.compute_upper = false;
    const SolverOptions ms_opt = masked_variant(full_opt, LikelihoodMask::MeasurementsOnly);
    const RngStream rng = RngStream(19).sub(role::quadrature);

    const auto a = value_iteration(c, grid, 0.3, full_opt, rng);
    const auto b = value_iteration(c, grid, 0.3, ms_opt, rng);
    CHECK(a.lower_bound_reward == b.lower_bound_reward);
    CHECK(a.table.values == b.table.values);
    for (std::size_t k = 0; k < grid.size(); ++k)
        CHECK(a.policy.actions[k] == b.policy.actions[k]);
}

TEST_CASE("channel-only with ideal links only is uninformative") {
    // Single ideal-link sensor, channel-only mask: no observation ever
    // updates the belief, so the solved cost equals the prediction-only
    // recursion value.
    ScenarioConfig c;
    c.states = {"a", "b"};
    c.transition = {{0.8, 0.2}, {0.3, 0.7}};
    c.n_tot = 2;
    c.min_samples = 1;
    c.sigma_ch = 0.0;
    c.sigma_noise = 0.05;
    SensorSpec s;
    s.name = "ideal";
    s.cost = 0.4;
    s.measurement = {{-1.0, 0.2}, {1.0, 0.2}}; // informative, but masked away
    c.sensors.push_back(s);

    const BeliefGrid grid = build_grid(2, 6);
    SolverOptions opt = masked_variant({}, LikelihoodMask::ChannelOnly);
    opt.mc_samples = 32;
    opt.compute_upper = false;
    opt.tolerance = 1e-9;
    opt.max_iterations = 5000;
    const auto result = value_iteration(c, grid, 0.0, opt, RngStream(23).sub(1));

    // Prediction-only oracle (identical recursion to the zero-information
    // case): iterate h <- Delta + interp(h)(T b).
    std::vector<double> h(grid.size(), 0.0);
    double lo = 0.0, hi = 0.0;
    for (int it = 0; it < 100000; ++it) {
        std::vector<double> u(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const Belief pred = predict(grid.points[k], c);
            double interp = estimation_error(pred);
            for (const auto& [idx, w] : barycentric_weights(pred, grid))
                interp += w * (h[idx] - estimation_error(grid.points[idx]));
            u[k] = estimation_error(grid.points[k]) + interp;
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

TEST_CASE("channel-only never allocates to the channel-less sensor at lambda 0") {
    const ScenarioConfig c = wban();
    const BeliefGrid grid = build_grid(4, 3);
    SolverOptions opt = masked_variant({}, LikelihoodMask::ChannelOnly);
    opt.mc_samples = 64;
    opt.compute_upper = false;
    const auto result = value_iteration(c, grid, 0.0, opt, RngStream(29).sub(1));
    for (const auto& a : result.policy.actions) CHECK(a.counts[0] == 0);
}

TEST_CASE("full information dominates the masked variants") {
    const ScenarioConfig c = twostate();
    const BeliefGrid grid = build_grid(2, 5);
    SolverOptions opt;
    opt.mc_samples = 256;
    opt.compute_upper = false;
    const RngStream rng = RngStream(31).sub(role::quadrature);

    const double full = value_iteration(c, grid, 0.0, opt, rng).lower_bound_reward;
    const double ms =
        value_iteration(c, grid, 0.0, masked_variant(opt, LikelihoodMask::MeasurementsOnly), rng)
            .lower_bound_reward;
    const double ch =
        value_iteration(c, grid, 0.0, masked_variant(opt, LikelihoodMask::ChannelOnly), rng)
            .lower_bound_reward;
    const double eps = 0.01;
    CHECK(full <= ms + eps);
    CHECK(full <= ch + eps);
}

TEST_CASE("greedy online policy replays the stagewise improvement") {
    const ScenarioConfig c = twostate();
    SolverOptions opt;
    opt.mc_samples = 32;
    opt.compute_upper = false;
    const BeliefGrid grid = build_grid(2, 5);
    const auto solved = value_iteration(c, grid, 0.5, opt, RngStream(37).sub(1));

    auto model = std::make_shared<ObservationModel>(c, ChannelDesign::Intermediate);
    SolverOptions online = opt;
    online.greedy_schedule = {1, 1, 1};
    const GreedyOnlinePolicy policy(solved.table, model, online, RngStream(41).sub(2));

    RngStream rng(43);
    const Belief p(std::vector<double>{0.6, 0.4});
    const Action a = policy.act(p, rng);

    const ValueFn vf = [&](const Belief& b) { return lower_bound_value(b, solved.table, 0.5); };
    const auto expected = policy_improvement(p, vf, *model, 0.5, online, RngStream(41).sub(2));
    CHECK(a == expected.action);
}
