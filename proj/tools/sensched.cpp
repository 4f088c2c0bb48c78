// Command-line front end: validate scenarios, solve for value/policy tables
// and cost bounds, simulate policies, run lambda sweeps.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sensched/manifest.hpp"
#include "sensched/policies.hpp"
#include "sensched/scenario.hpp"
#include "sensched/sim.hpp"
#include "sensched/solver.hpp"

namespace {

using namespace sensched;

// Locale-independent float formatting (C locale, period decimal separator).
std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::vector<double> parse_lambdas(const std::string& text) {
    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        double start, step, stop;
        if (std::sscanf(text.c_str(), "%lf:%lf:%lf", &start, &step, &stop) != 3 || step <= 0.0)
            throw ValidationError("bad --lambdas range: " + text);
        for (double v = start; v <= stop + 1e-12; v += step) out.push_back(std::min(v, stop));
        if (out.empty() || std::abs(out.back() - stop) > 1e-12) out.push_back(stop);
    } else {
        std::stringstream ss(text);
        std::string tok;
        while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    }
    for (double v : out)
        if (v < 0.0 || v > 1.0) throw ValidationError("lambda out of [0,1]");
    return out;
}

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
}

struct SolveFlags {
    std::string scenario;
    double lambda = 0.0;
    int grid = 4;
    std::string mode = "avg";
    std::string improve = "exhaustive";
    std::string mask = "full";
    std::string design = "intermediate";
    int mc_samples = 256;
    std::uint64_t seed = 0;
    std::string out;
    int threads = 0;
    double tolerance = 1e-5;
    int max_iterations = 600;
};

SolverOptions make_solver_options(const SolveFlags& f, const ScenarioConfig& config) {
    SolverOptions opt;
    if (f.mode == "avg") {
        opt.mode = SolveMode::AverageCost;
    } else if (f.mode.rfind("disc:", 0) == 0) {
        opt.mode = SolveMode::Discounted;
        opt.discount = std::stod(f.mode.substr(5));
    } else {
        throw ValidationError("bad --mode (use avg or disc:<gamma>): " + f.mode);
    }
    if (f.improve == "exhaustive") {
        opt.greedy_schedule.clear();
    } else if (f.improve.rfind("greedy:", 0) == 0) {
        for (const auto& tok : split_csv(f.improve.substr(7)))
            opt.greedy_schedule.push_back(std::stoi(tok));
    } else {
        throw ValidationError("bad --improve (use exhaustive or greedy:N1,N2,...): " + f.improve);
    }
    if (f.mask == "full") opt.mask = LikelihoodMask::Full;
    else if (f.mask == "ms") opt.mask = LikelihoodMask::MeasurementsOnly;
    else if (f.mask == "ch") opt.mask = LikelihoodMask::ChannelOnly;
    else throw ValidationError("bad --mask (full|ms|ch): " + f.mask);
    if (f.design == "intermediate") opt.design = ChannelDesign::Intermediate;
    else if (f.design == "nonrobust") opt.design = ChannelDesign::NonRobust;
    else throw ValidationError("bad --design (intermediate|nonrobust): " + f.design);
    opt.mc_samples = f.mc_samples;
    opt.tolerance = f.tolerance;
    opt.max_iterations = f.max_iterations;
    opt.threads = f.threads > 0 ? f.threads
                                : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    opt.check(config);
    return opt;
}

nlohmann::json options_json(const SolveFlags& f) {
    return {{"lambda", f.lambda},     {"grid", f.grid},       {"mode", f.mode},
            {"improve", f.improve},   {"mask", f.mask},       {"design", f.design},
            {"mc_samples", f.mc_samples}, {"tolerance", f.tolerance},
            {"max_iterations", f.max_iterations}};
}

int cmd_validate(const std::string& path) {
    ScenarioConfig config;
    try {
        std::ifstream in(path);
        if (!in) {
            std::cerr << "error: cannot open " << path << "\n";
            return 1;
        }
        nlohmann::json j;
        in >> j;
        config = scenario_from_json(j);
    } catch (const std::exception& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 1;
    }
    const auto violations = validate(config);
    if (violations.empty()) {
        std::cout << "OK\n";
        return 0;
    }
    for (const auto& v : violations) std::cout << v << "\n";
    return 2;
}

nlohmann::json scenario_echo(const ScenarioConfig& config) {
    std::vector<std::string> sensor_names;
    for (const auto& s : config.sensors) sensor_names.push_back(s.name);
    return {{"states", config.states}, {"sensors", sensor_names}, {"n_tot", config.n_tot}};
}

int cmd_solve(const SolveFlags& f) {
    const ScenarioConfig config = load_scenario(f.scenario);
    const SolverOptions opt = make_solver_options(f, config);
    const BeliefGrid grid = build_grid(config.n(), f.grid);
    const RngStream rng = RngStream(f.seed).sub(role::quadrature);
    const SolveResult result = value_iteration(config, grid, f.lambda, opt, rng);

    std::filesystem::create_directories(f.out);

    nlohmann::json table;
    table["kind"] = "sensched-solve";
    table["schema_version"] = 1;
    table["scenario"] = scenario_echo(config);
    table["value_table"] = to_json(result.table);
    table["policy_table"] = to_json(result.policy);
    table["lower_bound_reward"] = result.lower_bound_reward;
    if (!result.upper_values.empty()) {
        table["upper_bound_reward"] = result.upper_bound_reward;
        table["upper_values"] = result.upper_values;
    }
    table["options"] = options_json(f);
    table["seed"] = f.seed;
    {
        std::ofstream out(f.out + "/table.json");
        out << table.dump(2) << "\n";
    }

    nlohmann::json bounds;
    bounds["lambda"] = f.lambda;
    bounds["lower_bound_reward"] = result.lower_bound_reward;
    if (!result.upper_values.empty()) bounds["upper_bound_reward"] = result.upper_bound_reward;
    // Per point: grid value of the converged table vs. its tangent envelope
    // (the envelope dominates the interpolant by construction). The headline
    // reward bounds come from the two value iterations.
    nlohmann::json per_point = nlohmann::json::array();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        nlohmann::json row;
        row["point"] = grid.points[i].probs;
        row["lower"] = result.table.values[i];
        row["upper"] = upper_bound_value(grid.points[i], result.table, f.lambda);
        per_point.push_back(row);
    }
    bounds["per_point"] = per_point;
    {
        std::ofstream out(f.out + "/bounds.json");
        out << bounds.dump(2) << "\n";
    }

    RunManifest manifest;
    manifest.command = "solve";
    manifest.scenario_path = f.scenario;
    manifest.scenario_hash = file_hash_fnv1a(f.scenario);
    manifest.options = options_json(f);
    manifest.seed = f.seed;
    manifest.timestamp = RunManifest::now_iso8601();
    manifest.write(f.out + "/manifest.json");

    std::cout << "lower_bound_reward " << fmt(result.lower_bound_reward);
    if (!result.upper_values.empty())
        std::cout << "  upper_bound_reward " << fmt(result.upper_bound_reward);
    std::cout << "\n";
    return 0;
}

int cmd_sweep(const SolveFlags& f, const std::string& lambdas_text, const std::string& modes_text,
              int episodes, int horizon) {
    const ScenarioConfig config = load_scenario(f.scenario);
    const SolverOptions opt = make_solver_options(f, config);
    const std::vector<double> lambdas = parse_lambdas(lambdas_text);
    const std::vector<std::string> modes = split_csv(modes_text);

    SweepOptions sweep;
    sweep.solver = opt;
    sweep.episodes = episodes;
    sweep.horizon = horizon;
    sweep.grid_resolution = f.grid;
    sweep.seed = f.seed;
    const auto rows = pareto_sweep(config, lambdas, modes, sweep);

    std::string csv = "lambda,mode,mse,err_prob,energy,reward_lb,reward_ub,se_mse,se_energy";
    for (const auto& s : config.sensors) csv += ",usage_" + s.name;
    csv += ",status\n";
    for (const auto& row : rows) {
        csv += fmt(row.lambda) + "," + row.mode + "," + fmt(row.metrics.mean_mse) + "," +
               fmt(row.metrics.map_error) + "," + fmt(row.metrics.mean_energy) + "," +
               fmt(row.reward_lb) + "," + fmt(row.reward_ub) + "," + fmt(row.metrics.se_mse) +
               "," + fmt(row.metrics.se_energy);
        for (int s = 0; s < config.num_sensors(); ++s) {
            csv += ",";
            csv += row.metrics.usage.empty() ? "0" : fmt(row.metrics.usage[s]);
        }
        csv += "," + row.status + "\n";
    }
    {
        std::ofstream out(f.out, std::ios::binary);
        if (!out) {
            std::cerr << "error: cannot write " << f.out << "\n";
            return 1;
        }
        out << csv;
    }

    RunManifest manifest;
    manifest.command = "sweep";
    manifest.scenario_path = f.scenario;
    manifest.scenario_hash = file_hash_fnv1a(f.scenario);
    manifest.options = options_json(f);
    manifest.options["lambdas"] = lambdas_text;
    manifest.options["modes"] = modes_text;
    manifest.options["episodes"] = episodes;
    manifest.options["horizon"] = horizon;
    manifest.seed = f.seed;
    manifest.timestamp = RunManifest::now_iso8601();
    manifest.write(f.out + ".manifest.json");

    bool any_failed = false;
    for (const auto& row : rows) any_failed |= row.status != "ok";
    if (any_failed) std::cerr << "warning: some sweep cells failed (see status column)\n";
    return 0;
}

int cmd_simulate(const std::string& table_path, const std::string& scenario_path,
                 const std::string& policy_kind, int episodes, int horizon, std::uint64_t seed,
                 const std::string& out_path, const std::string& trace_path, int threads,
                 int mc_samples) {
    const ScenarioConfig config = load_scenario(scenario_path);
    nlohmann::json j;
    {
        std::ifstream in(table_path);
        if (!in) {
            std::cerr << "error: cannot open " << table_path << "\n";
            return 1;
        }
        in >> j;
    }
    ValueTable table = value_table_from_json(j.at("value_table"));
    PolicyTable policy_table = policy_table_from_json(j.at("policy_table"));
    const auto echo = j.at("scenario");
    if (echo.at("states").get<std::vector<std::string>>() != config.states ||
        table.grid.n != config.n() ||
        static_cast<int>(echo.at("sensors").size()) != config.num_sensors()) {
        std::cerr << "error: table does not match scenario (states/sensors differ)\n";
        return 4;
    }

    SolverOptions opt;
    const auto oj = j.at("options");
    opt.mask = oj.at("mask").get<std::string>() == "ms" ? LikelihoodMask::MeasurementsOnly
               : oj.at("mask").get<std::string>() == "ch" ? LikelihoodMask::ChannelOnly
                                                          : LikelihoodMask::Full;
    opt.design = oj.at("design").get<std::string>() == "nonrobust" ? ChannelDesign::NonRobust
                                                                   : ChannelDesign::Intermediate;
    if (mc_samples > 0) opt.mc_samples = mc_samples;
    opt.threads = threads > 0 ? threads : 1;

    auto model = std::make_shared<ObservationModel>(config, opt.design);
    std::unique_ptr<PolicyRunner> policy;
    if (policy_kind == "bbp") {
        policy = std::make_unique<BbpPolicy>(policy_table, table.grid);
    } else if (policy_kind == "greedy") {
        policy = std::make_unique<GreedyOnlinePolicy>(table, model, opt,
                                                      RngStream(seed).sub(role::quadrature));
    } else {
        std::cerr << "error: unknown policy " << policy_kind << " (use bbp or greedy)\n";
        return 2;
    }

    SimOptions sim_opt;
    sim_opt.mask = opt.mask;
    sim_opt.design = opt.design;
    sim_opt.threads = opt.threads;
    const Metrics m = evaluate(*model, *policy, table.lambda, episodes, horizon, seed, sim_opt);

    nlohmann::json out;
    out["lambda"] = table.lambda;
    out["episodes"] = m.episodes;
    out["horizon"] = m.horizon;
    out["burn_in"] = m.burn_in;
    out["mean_mse"] = m.mean_mse;
    out["mean_energy"] = m.mean_energy;
    out["mean_cost"] = m.mean_cost;
    out["map_error"] = m.map_error;
    out["se_mse"] = m.se_mse;
    out["se_energy"] = m.se_energy;
    out["se_cost"] = m.se_cost;
    out["degenerate_fraction"] = m.degenerate_fraction;
    nlohmann::json usage;
    for (int s = 0; s < config.num_sensors(); ++s) usage[config.sensors[s].name] = m.usage[s];
    out["usage"] = usage;
    {
        std::ofstream f(out_path);
        if (!f) {
            std::cerr << "error: cannot write " << out_path << "\n";
            return 1;
        }
        f << out.dump(2) << "\n";
    }
    if (m.degenerate_fraction > 0.001)
        std::cerr << "warning: " << m.degenerate_fraction * 100.0
                  << "% of slots hit degenerate likelihoods (prediction-only fallback)\n";

    if (!trace_path.empty()) {
        std::string csv = "episode,slot,true_state,action,delta,energy,map_state,correct,degenerate\n";
        for (int e = 0; e < episodes; ++e) {
            RngStream ep_rng = RngStream(seed).sub({role::episode, static_cast<std::uint64_t>(e)});
            const EpisodeTrace trace =
                run_episode(*model, *policy, table.lambda, horizon, ep_rng, sim_opt.mask);
            for (int k = 0; k < horizon; ++k) {
                const auto& rec = trace.slots[k];
                csv += std::to_string(e) + "," + std::to_string(k) + "," +
                       config.states[rec.true_state] + "," + rec.action.str() + "," +
                       fmt(rec.delta) + "," + fmt(rec.energy) + "," +
                       config.states[rec.map_state] + "," + (rec.correct ? "1" : "0") + "," +
                       (rec.degenerate ? "1" : "0") + "\n";
            }
        }
        std::ofstream f(trace_path, std::ios::binary);
        f << csv;
    }

    RunManifest manifest;
    manifest.command = "simulate";
    manifest.scenario_path = scenario_path;
    manifest.scenario_hash = file_hash_fnv1a(scenario_path);
    manifest.options = {{"table", table_path}, {"policy", policy_kind},
                        {"episodes", episodes}, {"horizon", horizon}};
    manifest.seed = seed;
    manifest.timestamp = RunManifest::now_iso8601();
    manifest.write(out_path + ".manifest.json");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sensched: sensor-scheduling solver and simulator"};
    app.set_version_flag("--version", sensched::version_string);
    app.require_subcommand(1);

    std::string validate_path;
    auto* validate_cmd = app.add_subcommand("validate", "check a scenario file");
    validate_cmd->add_option("scenario", validate_path, "scenario JSON file")->required();

    SolveFlags sf;
    auto* solve_cmd = app.add_subcommand("solve", "solve for tables and cost bounds");
    solve_cmd->add_option("--scenario", sf.scenario)->required();
    solve_cmd->add_option("--lambda", sf.lambda)->required();
    solve_cmd->add_option("--grid", sf.grid)->required();
    solve_cmd->add_option("--mode", sf.mode, "avg | disc:<gamma>");
    solve_cmd->add_option("--improve", sf.improve, "exhaustive | greedy:N1,N2,...");
    solve_cmd->add_option("--mask", sf.mask, "full | ms | ch");
    solve_cmd->add_option("--design", sf.design, "intermediate | nonrobust");
    solve_cmd->add_option("--mc-samples", sf.mc_samples);
    solve_cmd->add_option("--seed", sf.seed)->required();
    solve_cmd->add_option("--out", sf.out)->required();
    solve_cmd->add_option("--threads", sf.threads);
    solve_cmd->add_option("--tol", sf.tolerance);
    solve_cmd->add_option("--max-iter", sf.max_iterations);

    SolveFlags wf;
    std::string lambdas_text = "0:0.1:1", modes_text = "optimal";
    int sweep_episodes = 64, sweep_horizon = 5000;
    auto* sweep_cmd = app.add_subcommand("sweep", "lambda sweep: solve + simulate per mode");
    sweep_cmd->add_option("--scenario", wf.scenario)->required();
    sweep_cmd->add_option("--lambdas", lambdas_text, "start:step:stop or comma list");
    sweep_cmd->add_option("--modes", modes_text,
                          "comma list: optimal,greedy,bbp,ms,ch,fixed:<sensor>");
    sweep_cmd->add_option("--episodes", sweep_episodes);
    sweep_cmd->add_option("--horizon", sweep_horizon);
    sweep_cmd->add_option("--seed", wf.seed)->required();
    sweep_cmd->add_option("--out", wf.out)->required();
    sweep_cmd->add_option("--grid", wf.grid);
    sweep_cmd->add_option("--mc-samples", wf.mc_samples);
    sweep_cmd->add_option("--threads", wf.threads);
    sweep_cmd->add_option("--tol", wf.tolerance);
    sweep_cmd->add_option("--max-iter", wf.max_iterations);

    std::string sim_table, sim_scenario, sim_policy = "bbp", sim_out, sim_trace;
    int sim_episodes = 64, sim_horizon = 5000, sim_threads = 0, sim_mc = 0;
    std::uint64_t sim_seed = 0;
    auto* sim_cmd = app.add_subcommand("simulate", "simulate a solved policy");
    sim_cmd->add_option("--table", sim_table)->required();
    sim_cmd->add_option("--scenario", sim_scenario)->required();
    sim_cmd->add_option("--policy", sim_policy, "bbp | greedy");
    sim_cmd->add_option("--episodes", sim_episodes);
    sim_cmd->add_option("--horizon", sim_horizon);
    sim_cmd->add_option("--seed", sim_seed)->required();
    sim_cmd->add_option("--out", sim_out)->required();
    sim_cmd->add_option("--trace", sim_trace);
    sim_cmd->add_option("--threads", sim_threads);
    sim_cmd->add_option("--mc-samples", sim_mc);

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate_cmd->parsed()) return cmd_validate(validate_path);
        if (solve_cmd->parsed()) return cmd_solve(sf);
        if (sweep_cmd->parsed())
            return cmd_sweep(wf, lambdas_text, modes_text, sweep_episodes, sweep_horizon);
        if (sim_cmd->parsed())
            return cmd_simulate(sim_table, sim_scenario, sim_policy, sim_episodes, sim_horizon,
                                sim_seed, sim_out, sim_trace, sim_threads, sim_mc);
    } catch (const sensched::NonConvergence& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const sensched::TableMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const sensched::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const sensched::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
