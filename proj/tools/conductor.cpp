#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "conductor/core.hpp"
#include "conductor/driver.hpp"
#include "conductor/replay.hpp"
#include "conductor/rpc/backend.hpp"
#include "conductor/rpc/server.hpp"
#include "conductor/rpc/stub.hpp"
#include "conductor/testcases.hpp"

using namespace conductor;

namespace {

std::string now_stamp() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

ProtocolSetup make_protocol(const std::string& protocol, int n, int f) {
  if (protocol == "pbft") return pbft::make_setup(n, f);
  if (protocol == "raft") return raft::make_setup(n);
  throw ConfigError("unknown protocol: " + protocol);
}

std::pair<std::string, int> split_addr(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw ConfigError("address must be host:port");
  return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
}

struct RunConfig {
  std::string test;
  int n = 0;
  int f = -1;
  std::size_t iterations = 100;
  std::uint64_t seed = 1;
  std::uint64_t budget = 5000;
  int depth = 10;
  std::uint64_t n_bound = 1000;
  std::string mode = "inproc";
  std::string bind = "127.0.0.1:0";
  std::string report_path;
};

int cmd_run(const RunConfig& cfg) {
  const RegisteredCase* rc = find_testcase(cfg.test);
  if (!rc) {
    std::cerr << "unknown testcase: " << cfg.test << "\n";
    return 2;
  }
  int n = cfg.n > 0 ? cfg.n : rc->default_n;
  int f = cfg.f >= 0 ? cfg.f : rc->default_f;
  TestCase tc = rc->make();
  tc.step_budget = cfg.budget;
  DriverOptions opts{cfg.depth, cfg.n_bound};

  SuiteReport report;
  if (cfg.mode == "inproc") {
    InProcessBackend backend(rc->make_setup(n, f));
    report = run_suite(tc, backend, cfg.iterations, cfg.seed, opts);
  } else if (cfg.mode == "rpc") {
    auto [host, port] = split_addr(cfg.bind);
    rpc::ApiServer server;
    server.start(host, port);
    std::cerr << "control plane listening on " << server.address() << ", waiting for " << n
              << " replicas\n";
    rpc::RpcBackend backend(server, n);
    report = run_suite(tc, backend, cfg.iterations, cfg.seed, opts);
    backend.stop_replicas();
  } else {
    std::cerr << "unknown mode: " << cfg.mode << "\n";
    return 2;
  }

  std::string text = report_to_text(report, now_stamp());
  if (!cfg.report_path.empty()) {
    std::ofstream out(cfg.report_path);
    out << text;
  }
  std::cout << report.summary() << "\n";
  bool ok = report.successes * 100 >= static_cast<std::size_t>(rc->threshold_pct) * cfg.iterations;
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"programmer-guided unit testing for distributed consensus protocols"};
  app.require_subcommand(1);

  // --- list ---
  auto* list = app.add_subcommand("list", "list registered test cases");

  // --- run ---
  RunConfig rcfg;
  auto* run = app.add_subcommand("run", "run a registered test case suite");
  run->add_option("--test", rcfg.test, "testcase name")->required();
  run->add_option("--n", rcfg.n, "number of replicas (default per testcase)");
  run->add_option("--f", rcfg.f, "fault bound (default per testcase)");
  run->add_option("--iterations", rcfg.iterations, "iterations per suite");
  run->add_option("--seed", rcfg.seed, "base seed");
  run->add_option("--budget", rcfg.budget, "product step budget per iteration");
  run->add_option("--depth", rcfg.depth, "scheduler depth d");
  run->add_option("--nbound", rcfg.n_bound, "scheduler event bound n");
  run->add_option("--mode", rcfg.mode, "inproc | rpc");
  run->add_option("--bind", rcfg.bind, "control-plane bind address (rpc mode)")
      ->envname("CONDUCTOR_BIND");
  run->add_option("--report", rcfg.report_path, "write the suite report here");

  // --- record ---
  std::string rec_protocol = "pbft", rec_out = "trace.jsonl";
  int rec_n = 4, rec_f = 1;
  std::uint64_t rec_budget = 5000;
  auto* record = app.add_subcommand("record", "record a fault-free synchronous run");
  record->add_option("--protocol", rec_protocol, "pbft | raft");
  record->add_option("--n", rec_n, "number of replicas");
  record->add_option("--f", rec_f, "fault bound");
  record->add_option("--budget", rec_budget, "step budget");
  record->add_option("--out", rec_out, "trace output path")->required();

  // --- replay-check ---
  std::string rp_trace, rp_protocol = "pbft";
  int rp_n = 4, rp_f = 1;
  std::size_t rp_trials = 100;
  std::uint64_t rp_seed = 1, rp_budget = 20000;
  bool rp_mutate = false, rp_verbose = false;
  auto* replay = app.add_subcommand("replay-check",
                                    "synthesize a replay monitor from a trace and check the "
                                    "prefix property over randomized trials");
  replay->add_option("--trace", rp_trace, "recorded trace path")->required();
  replay->add_option("--protocol", rp_protocol, "pbft | raft");
  replay->add_option("--n", rp_n, "number of replicas");
  replay->add_option("--f", rp_f, "fault bound");
  replay->add_option("--trials", rp_trials, "number of randomized trials");
  replay->add_option("--seed", rp_seed, "base seed");
  replay->add_option("--budget", rp_budget, "step budget per trial");
  replay->add_flag("--mutate-gate", rp_mutate,
                   "drop one causal-past release gate (checker self-test)");
  replay->add_flag("--verbose", rp_verbose, "per-trial verdicts");

  // --- distance ---
  std::string d_test;
  auto* distance = app.add_subcommand("distance", "filter distance table for a test case");
  distance->add_option("--test", d_test, "testcase name")->required();

  // --- stub ---
  int stub_id = 0, stub_n = 4, stub_f = 1;
  std::string stub_listen = "127.0.0.1:0", stub_server, stub_protocol = "pbft";
  auto* stub = app.add_subcommand("stub", "run one out-of-process replica");
  stub->add_option("--id", stub_id, "replica id")->required();
  stub->add_option("--listen", stub_listen, "host:port to serve on");
  stub->add_option("--server", stub_server, "control-plane address")->required();
  stub->add_option("--protocol", stub_protocol, "pbft | raft");
  stub->add_option("--n", stub_n, "number of replicas");
  stub->add_option("--f", stub_f, "fault bound");

  // --- check-filter ---
  std::string cf_file, cf_protocol = "pbft";
  int cf_n = 4, cf_f = 1;
  auto* checkf = app.add_subcommand(
      "check-filter", "parse declarative filter lines and count matches in a fault-free run");
  checkf->add_option("--file", cf_file, "file with one `if ... then ...` filter per line")
      ->required();
  checkf->add_option("--protocol", cf_protocol, "pbft | raft");
  checkf->add_option("--n", cf_n, "number of replicas");
  checkf->add_option("--f", cf_f, "fault bound");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (list->parsed()) {
      for (const auto& c : testcase_registry())
        std::cout << c.name << "\t" << c.protocol << "\tn=" << c.default_n << " f=" << c.default_f
                  << "\tthreshold=" << c.threshold_pct << "%\t" << c.description << "\n";
      return 0;
    }
    if (run->parsed()) return cmd_run(rcfg);
    if (record->parsed()) {
      auto setup = make_protocol(rec_protocol, rec_n, rec_f);
      SynchronousRun sr = run_synchronous(setup, rec_budget);
      if (!sr.trace.complete) {
        std::cerr << "recorded run did not complete within the budget\n";
        return 1;
      }
      std::ofstream out(rec_out);
      out << trace_to_text(sr.trace);
      std::cout << "recorded " << sr.trace.steps.size() << " steps to " << rec_out << "\n";
      return 0;
    }
    if (replay->parsed()) {
      std::ifstream in(rp_trace);
      if (!in) {
        std::cerr << "cannot open trace: " << rp_trace << "\n";
        return 2;
      }
      std::stringstream buf;
      buf << in.rdbuf();
      ExecutionTrace trace = trace_from_text(buf.str());
      ReplayMonitor rm = ReplayMonitor::synthesize(trace);
      if (rp_mutate) {
        auto gate = rm.pick_gate_candidate();
        if (!gate) {
          std::cerr << "no gate candidate to mutate\n";
          return 2;
        }
        rm.mutate_gate(*gate);
        std::cout << "mutated release gate of target message " << *gate << "\n";
      }
      auto setup = make_protocol(rp_protocol, rp_n, rp_f);
      if (rp_trials == 0) {
        std::cout << "prefix: 0/0 PASS (vacuous: no trials requested)\n";
        return 0;
      }
      if (rp_verbose) {
        for (std::size_t i = 0; i < rp_trials; ++i) {
          ReplayTrial t = replay_run(setup, rm, rp_seed + i, rp_budget);
          std::cout << "trial " << i << " seed=" << rp_seed + i
                    << " prefix=" << (t.prefix ? "ok" : "FAIL")
                    << " equal=" << (t.equal ? 1 : 0) << " events=" << t.live_events << "\n";
        }
      }
      ReplayVerdict v = check_replay(setup, rm, rp_trials, rp_seed, rp_budget);
      bool pass = v.prefix_ok == v.trials;
      std::cout << "prefix: " << v.prefix_ok << "/" << v.trials << (pass ? " PASS" : " FAIL")
                << "\n";
      if (!pass) std::cout << "counterexample:\n" << v.first_counterexample;
      return pass ? 0 : 1;
    }
    if (distance->parsed()) {
      const RegisteredCase* rc = find_testcase(d_test);
      if (!rc) {
        std::cerr << "unknown testcase: " << d_test << "\n";
        return 2;
      }
      TestCase tc = rc->make();
      auto setup = rc->make_setup(rc->default_n, rc->default_f);
      std::cout << distances_to_text(compute_filter_distances(tc.filters, setup));
      return 0;
    }
    if (stub->parsed()) {
      auto setup = make_protocol(stub_protocol, stub_n, stub_f);
      if (stub_id < 0 || stub_id >= setup.size()) {
        std::cerr << "replica id out of range\n";
        return 2;
      }
      auto [host, port] = split_addr(stub_listen);
      rpc::StubReplica replica(setup.automata[stub_id], stub_server);
      replica.run(host, port);
      return 0;
    }
    if (checkf->parsed()) {
      DslRegistry reg;
      pbft::register_dsl(reg);
      raft::register_dsl(reg);
      auto setup = make_protocol(cf_protocol, cf_n, cf_f);
      SynchronousRun sr = run_synchronous(setup, 20000);
      std::ifstream in(cf_file);
      if (!in) {
        std::cerr << "cannot open filter file: " << cf_file << "\n";
        return 2;
      }
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        Filter f = parse_filter(line, reg);
        MonitorContext ctx;
        int matches = 0;
        for (const Event& e : sr.trace.events()) {
          if (e.is_message_event()) ctx.pool_view.emplace(e.message->uid, *e.message);
          if (f.condition(e, ctx)) ++matches;
          ctx.event_history.push_back(e);
        }
        std::cout << matches << "\t" << f.condition.name() << "\n";
      }
      return 0;
    }
  } catch (const ConfigError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 2;
}
