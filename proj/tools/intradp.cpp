#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

#include <intradp/intradp.hpp>

using namespace intradp;

namespace {

json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::FileNotFound, path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw Error(Errc::SchemaViolation, path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw Error(Errc::FileNotFound, "cannot write " + path);
  f << text;
}

void write_tensor(const std::string& path, const Tensor& t) {
  std::ostringstream os;
  os << std::setprecision(9);
  for (float x : t.values) os << x << '\n';
  write_text(path, os.str());
}

// "0:200:10" is an inclusive range; otherwise a comma list.
std::vector<double> parse_bandwidths(const std::string& s) {
  if (s.find(':') != std::string::npos) {
    std::vector<double> f;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ':')) f.push_back(std::stod(cell));
    if (f.size() != 3) throw Error(Errc::InvalidArgument, "range must be lo:hi:step");
    return bandwidth_range(f[0], f[1], f[2]);
  }
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
  return out;
}

struct Common {
  std::string model, profile, plan_table, out, trace;
  double bandwidth = -1.0;
  double latency = 0.0;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
  std::size_t population = 64, generations = 300;
};

DEConfig de_config(const Common& c) {
  DEConfig cfg;
  cfg.seed = c.seed;
  cfg.population = c.population;
  cfg.generations = c.generations;
  return cfg;
}

ModelGraph load_model(const Common& c) {
  if (c.model.empty()) throw Error(Errc::InvalidArgument, "--model is required");
  return build_graph(read_json(c.model));
}

ProfileTable load_profile(const Common& c, const ModelGraph& g) {
  if (c.profile.empty()) throw Error(Errc::InvalidArgument, "--profile is required");
  return profile_from_json(g, read_json(c.profile));
}

void add_common(CLI::App* app, Common& c, std::initializer_list<const char*> which) {
  auto has = [&](std::string_view k) { return std::find(which.begin(), which.end(), k) != which.end(); };
  if (has("model")) app->add_option("--model", c.model, "model document")->envname("INTRADP_MODEL");
  if (has("profile")) app->add_option("--profile", c.profile, "profile document")->envname("INTRADP_PROFILE");
  if (has("plan-table")) {
    app->add_option("--plan-table", c.plan_table, "plan table document")->envname("INTRADP_PLAN_TABLE");
  }
  if (has("bandwidth")) {
    app->add_option("--bandwidth", c.bandwidth, "link bandwidth in Mbps")->envname("INTRADP_BANDWIDTH");
  }
  if (has("trace")) app->add_option("--trace", c.trace, "bandwidth trace t_seconds,bandwidth_mbps")->envname("INTRADP_TRACE");
  if (has("seed")) app->add_option("--seed", c.seed, "random seed")->envname("INTRADP_SEED");
  if (has("jobs")) app->add_option("--jobs", c.jobs, "worker threads")->envname("INTRADP_JOBS");
  if (has("out")) app->add_option("--out", c.out, "output file (stdout when omitted)")->envname("INTRADP_OUT");
  if (has("latency")) {
    app->add_option("--latency", c.latency, "per-message link latency in seconds")->envname("INTRADP_LATENCY");
  }
  if (has("de")) {
    app->add_option("--population", c.population, "DE population")->envname("INTRADP_POPULATION");
    app->add_option("--generations", c.generations, "DE generations")->envname("INTRADP_GENERATIONS");
  }
}

std::atomic<bool> g_stop{false};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Intra-DP scheduling, simulation and loopback runtime"};
  app.require_subcommand(1);
  Common c;

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic model and/or profile");
  std::string kind;
  std::uint64_t profile_seed = 7;
  double speed_ratio = 20.0;
  synth->add_option("--kind", kind, "generate a model: vgg | chain | dag")
      ->check(CLI::IsMember({"vgg", "chain", "dag"}));
  synth->add_option("--speed-ratio", speed_ratio, "server speedup over the device");
  synth->add_option("--profile-seed", profile_seed, "seed for profile jitter");
  add_common(synth, c, {"model", "profile", "seed"});

  // solve
  auto* solve = app.add_subcommand("solve", "solve one plan at a bandwidth");
  add_common(solve, c, {"model", "profile", "bandwidth", "seed", "out", "latency", "de"});

  // table
  auto* table = app.add_subcommand("table", "precompute the bandwidth-bucketed plan table");
  double width = 1.0, max_mbps = 200.0;
  table->add_option("--width", width, "bucket width in Mbps");
  table->add_option("--max", max_mbps, "largest bandwidth in Mbps");
  add_common(table, c, {"model", "profile", "plan-table", "seed", "jobs", "out", "latency", "de"});

  // simulate
  auto* sim = app.add_subcommand("simulate", "simulate a plan and export its timeline");
  std::string system = "intradp", reference_out;
  std::uint64_t weights_seed = 11, input_seed = 13;
  sim->add_option("--system", system, "intradp | device_only | server_only | layer_partition");
  sim->add_option("--reference-output", reference_out, "write the single-process reference output here");
  sim->add_option("--weights-seed", weights_seed);
  sim->add_option("--input-seed", input_seed);
  add_common(sim, c, {"model", "profile", "plan-table", "bandwidth", "seed", "out", "latency", "de"});

  // sweep
  auto* sweep = app.add_subcommand("sweep", "simulate systems across bandwidths");
  std::string bw_spec = "0:200:10", systems_spec = "intradp,device_only,server_only,layer_partition";
  std::size_t reps = 1;
  sweep->add_option("--bandwidths", bw_spec, "lo:hi:step or a comma list (Mbps)");
  sweep->add_option("--systems", systems_spec, "comma list of systems");
  sweep->add_option("--reps", reps, "repetitions per point");
  add_common(sweep, c, {"model", "profile", "seed", "jobs", "out", "latency", "de"});

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "run the server side");
  std::string bind = "127.0.0.1:7500";
  double throttle = 0.0;
  std::size_t max_requests = 0;
  serve_cmd->add_option("--bind", bind, "listen address host:port")->envname("INTRADP_BIND");
  serve_cmd->add_option("--throttle", throttle, "pace outbound units to this many Mbps (0 = unpaced)");
  serve_cmd->add_option("--requests", max_requests, "exit after this many requests (0 = run until killed)");
  serve_cmd->add_option("--weights-seed", weights_seed);
  add_common(serve_cmd, c, {"model", "plan-table"});

  // client
  auto* client = app.add_subcommand("client", "run one inference against a server");
  std::string server = "127.0.0.1:7500";
  double at = 0.0;
  bool probe = false;
  client->add_option("--server", server, "server address host:port")->envname("INTRADP_SERVER");
  client->add_option("--at", at, "trace time in seconds");
  client->add_flag("--probe", probe, "estimate bandwidth with an echo probe");
  client->add_option("--throttle", throttle, "pace outbound units to this many Mbps (0 = unpaced)");
  client->add_option("--weights-seed", weights_seed);
  client->add_option("--input-seed", input_seed);
  add_common(client, c, {"model", "plan-table", "bandwidth", "trace", "out"});

  // report
  auto* report = app.add_subcommand("report", "median comparison table from sweep rows");
  std::string in_path;
  report->add_option("--in", in_path, "sweep rows file")->required();
  add_common(report, c, {"out"});

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      json doc;
      if (!kind.empty()) {
        if (c.model.empty()) throw Error(Errc::InvalidArgument, "--model is required");
        doc = kind == "vgg" ? vgg_like_model() : kind == "chain" ? random_chain(c.seed) : random_dag(c.seed);
        write_text(c.model, doc.dump(2) + "\n");
      }
      const ModelGraph g = load_model(c);
      if (!c.profile.empty()) {
        SynthParams sp = kind == "vgg" ? vgg_profile_params() : SynthParams{};
        sp.speed_ratio = speed_ratio;
        write_text(c.profile, profile_to_json(g, synth_profile(g, sp, profile_seed)).dump(2) + "\n");
      }
    } else if (*solve) {
      const ModelGraph g = load_model(c);
      const ProfileTable prof = load_profile(c, g);
      if (c.bandwidth < 0) throw Error(Errc::InvalidArgument, "--bandwidth is required");
      const auto res = solve_loss(g, prof, LinkModel::from_mbps(c.bandwidth, c.latency), de_config(c));
      json out = plan_to_json(g, res.plan);
      out["makespan_s"] = res.makespan;
      write_text(c.out, out.dump(2) + "\n");
    } else if (*table) {
      const ModelGraph g = load_model(c);
      const ProfileTable prof = load_profile(c, g);
      const PlanTable t = build_plan_table(g, prof, width, max_mbps, de_config(c), c.latency, c.jobs);
      write_text(c.out.empty() ? c.plan_table : c.out, plan_table_to_json(g, t).dump(1) + "\n");
    } else if (*sim) {
      const ModelGraph g = load_model(c);
      const ProfileTable prof = load_profile(c, g);
      if (c.bandwidth < 0) throw Error(Errc::InvalidArgument, "--bandwidth is required");
      const LinkModel link = LinkModel::from_mbps(c.bandwidth, c.latency);
      SchedulePlan plan;
      bool baseline = false;
      if (!c.plan_table.empty()) {
        plan = plan_table_from_json(g, read_json(c.plan_table)).lookup(c.bandwidth);
      } else {
        baseline = parse_system(system) == System::LayerPartition;
        plan = plan_for(parse_system(system), g, prof, link, de_config(c));
      }
      const Timeline t = simulate(g, prof, link, plan, !baseline);
      std::ostringstream os;
      write_timeline_csv(os, t);
      write_text(c.out, os.str());
      const PhaseBreakdown b = breakdown(t);
      std::cerr << std::setprecision(9) << "makespan_s=" << t.makespan << " energy_j=" << energy_of(t, {})
                << " m_compute_s=" << b.m_compute << " r_compute_s=" << b.r_compute
                << " transmit_s=" << b.transmit << " bytes=" << t.bytes_transferred() << "\n";
      if (!reference_out.empty()) {
        const Weights w = synth_weights(g, weights_seed);
        const auto outs = reference_forward(g, w, random_input(g, input_seed));
        write_tensor(reference_out, outs[g.output_index()]);
      }
    } else if (*sweep) {
      const ModelGraph g = load_model(c);
      const ProfileTable prof = load_profile(c, g);
      SweepSpec spec;
      spec.bandwidths_mbps = parse_bandwidths(bw_spec);
      spec.systems.clear();
      std::stringstream ss(systems_spec);
      std::string cell;
      while (std::getline(ss, cell, ',')) spec.systems.push_back(parse_system(cell));
      spec.repetitions = reps;
      spec.seed = c.seed;
      const auto rows = run_sweep(g, prof, spec, de_config(c), c.latency, c.jobs);
      std::ostringstream os;
      write_rows_csv(os, rows);
      write_text(c.out, os.str());
    } else if (*serve_cmd) {
      const ModelGraph g = load_model(c);
      const PlanTable t = plan_table_from_json(g, read_json(c.plan_table));
      const Weights w = synth_weights(g, weights_seed);
      ServerConfig cfg;
      cfg.bind = net::Endpoint::parse(bind);
      if (throttle > 0) cfg.throttle_mbps = throttle;
      Server s(g, t, w, cfg);
      std::signal(SIGINT, [](int) { g_stop = true; });
      std::signal(SIGTERM, [](int) { g_stop = true; });
      std::cerr << "listening on " << cfg.bind.host << ":" << s.port() << "\n";
      s.start();
      while (!g_stop && (max_requests == 0 || s.requests_served() < max_requests)) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      }
      s.stop();
    } else if (*client) {
      const ModelGraph g = load_model(c);
      const PlanTable t = plan_table_from_json(g, read_json(c.plan_table));
      const Weights w = synth_weights(g, weights_seed);
      ClientConfig cfg;
      cfg.server = net::Endpoint::parse(server);
      if (throttle > 0) cfg.throttle_mbps = throttle;
      Client cl(g, t, w, cfg);
      double bw;
      if (probe) bw = cl.probe_bandwidth();
      else if (!c.trace.empty()) bw = estimate_bandwidth(BandwidthTrace::load(c.trace), at);
      else if (c.bandwidth >= 0) bw = c.bandwidth;
      else throw Error(Errc::InvalidArgument, "one of --bandwidth, --trace or --probe is required");
      const auto [out, st] = cl.infer(random_input(g, input_seed), bw);
      write_tensor(c.out, out);
      std::cerr << std::setprecision(9) << "bucket=" << st.bucket << " bandwidth_mbps=" << st.bandwidth_mbps
                << " makespan_wallclock_s=" << st.makespan_wallclock << " bytes_tx=" << st.bytes_tx
                << " bytes_rx=" << st.bytes_rx << "\n";
    } else if (*report) {
      std::ifstream f(in_path);
      if (!f) throw Error(Errc::FileNotFound, in_path);
      std::ostringstream os;
      write_report(os, read_rows_csv(f));
      write_text(c.out, os.str());
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
