#include <CLI11.hpp>
#include <fmt/format.h>

#include <fh/pipeline.hpp>

#include <iostream>
#include <optional>
#include <string>

using namespace fh;

namespace {

std::string g17(const ojson& x) { return x.is_number() ? fmt::format("{:.17g}", x.get<double>()) : x.dump(); }

void print_find(const ojson& j) {
  if (j.contains("gamma")) {
    const ojson& g = j["gamma"];
    if (g["exact"].is_string())
      fmt::print("gamma = {} ({})\n", g["exact"].get<std::string>(), g17(g["value"]));
    else
      fmt::print("gamma = {}\n", g17(g["value"]));
  }
  if (j["points"].empty()) {
    fmt::print("{}\n", j["finding"].get<std::string>());
    return;
  }
  for (const auto& p : j["points"]) {
    if (p.contains("branch")) {
      if (p["exact"].is_object()) {
        const ojson& e = p["exact"];
        fmt::print("branch {}: (u0, v0, w0) = ({}, 0, {}), p = {}\n", p["branch"].get<int>(),
                   e["u0"].get<std::string>(), e["w0"].get<std::string>(), e["p0"].get<std::string>());
        fmt::print("          numeric (u0, v0, w0) = ({}, 0, {}), p = {}\n", g17(p["u0"]), g17(p["w0"]),
                   g17(p["p0"]));
      } else {
        fmt::print("branch {}: gamma = {}, (u0, v0, w0) = ({}, 0, {}), p = {}\n", p["branch"].get<int>(),
                   g17(p["gamma"]), g17(p["u0"]), g17(p["w0"]), g17(p["p0"]));
      }
      fmt::print("          c0 = {}, mu0 = {}, eigenvalue error = {:.3g}\n", g17(p["c0"]), g17(p["mu0"]),
                 p["eigenvalue_error"].get<double>());
    } else {
      fmt::print("equilibrium (u, v, w) = ({}, 0, {}): {}\n", g17(p["u"]), g17(p["w"]), p["note"].get<std::string>());
    }
  }
  if (!j["selected"].is_null()) fmt::print("selected point: {}\n", j["selected"].get<int>());
  else fmt::print("{}\n", j["finding"].get<std::string>());
}

void print_summary(const std::string& stage, const ojson& j) {
  if (stage == "find") return print_find(j);
  if (is_skipped(j)) {
    fmt::print("{}: skipped ({})\n", stage, j["reason"].get<std::string>());
    return;
  }
  if (stage == "average") {
    const ojson& o = j["outputs"];
    fmt::print("average: r* = {}, w* = {}, det = {}\n", g17(o["r_star"]), g17(o["w_star"]), g17(o["det"]));
  } else if (stage == "orbit") {
    for (const auto& o : j["orbits"])
      fmt::print("orbit eps = {:g}: period = {}, amplitude = {}\n", o["epsilon"].get<double>(), g17(o["period"]),
                 g17(o["amplitude"]));
  } else if (stage == "spectrum") {
    for (const auto& e : j["entries"]) {
      fmt::print("spectrum eps = {:g}: winding = {}", e["epsilon"].get<double>(), e["winding"].get<int>());
      if (!e["lambda1"].is_null())
        fmt::print(", lambda1 = {} {:+.17g}i", g17(e["lambda1"]["re"]), e["lambda1"]["im"].get<double>());
      fmt::print(", {}\n", e["verdict_unstable"].get<bool>() ? "unstable" : "no verdict");
    }
  } else if (stage == "bounds") {
    fmt::print("bounds: relative bound and Kato inequality {}\n", j["all_hold"].get<bool>() ? "hold" : "VIOLATED");
  } else if (stage == "simulate") {
    const ojson& g = j["run"]["growth"];
    if (g["conclusive"].get<bool>())
      fmt::print("simulate: growth rate = {} (R^2 = {})\n", g17(g["rate"]), g17(g["r2"]));
    else
      fmt::print("simulate: inconclusive ({})\n", g["note"].get<std::string>());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fold-Hopf wave trains: locate, average, shoot, Evans spectrum, bounds, PDE check"};
  std::string config_path, stage_flag;
  std::optional<std::string> out, eps, gamma0, gamma1, gamma_alias;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::vector<std::string> choices = stage_names();
  choices.push_back("run");

  app.add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", out, "output directory");
  app.add_option("--seed", seed, "RNG seed");
  app.add_option("--workers", workers, "worker threads")->check(CLI::Range(1u, 1024u));
  app.add_option("--stage", stage_flag, "stage to run when no subcommand is given")->check(CLI::IsMember(choices));
  app.add_option("--eps", eps, "orbit eps list, comma separated");
  app.add_option("--gamma0", gamma0, "FHN gamma0 (rational a/b accepted, or auto)");
  app.add_option("--gamma1", gamma1, "FHN unfolding coefficient gamma1");
  app.fallthrough();
  app.require_subcommand(0, 1);
  for (const std::string& name : choices) {
    CLI::App* sub = app.add_subcommand(name, name == "run" ? "all stages and report.json" : "run the " + name + " stage");
    if (name == "find") sub->add_option("--gamma", gamma_alias, "same as --gamma0");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  std::string target = "run";
  if (!app.get_subcommands().empty()) target = app.get_subcommands().front()->get_name();
  else if (!stage_flag.empty()) target = stage_flag;

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    ConfigOverrides ov;
    ov.out = out;
    ov.eps = eps;
    ov.gamma0 = gamma_alias ? gamma_alias : gamma0;
    ov.gamma1 = gamma1;
    ov.seed = seed;
    ov.workers = workers;
    apply_overrides(cfg, ov);
    const Context ctx(cfg);
    if (target == "run") {
      const ojson rep = run_pipeline(ctx);
      for (const std::string& s : stage_names()) print_summary(s, rep["stages"][s]);
      fmt::print("report: {}\n", ctx.file("report.json").string());
    } else {
      print_summary(target, run_stage(ctx, target));
    }
  } catch (const ConfigError& e) {
    fmt::print(stderr, "fh: config error: {}\n", e.what());
    return 2;
  } catch (const MissingArtifact& e) {
    fmt::print(stderr, "fh: missing prerequisite, run stage '{}': {}\n", e.needed_stage, e.what());
    return 4;
  } catch (const StageFailure& e) {
    fmt::print(stderr, "fh: stage '{}' failed: {}\n", e.stage, e.what());
    return 3;
  } catch (const std::exception& e) {
    fmt::print(stderr, "fh: stage '{}' failed: {}\n", target, e.what());
    return 3;
  }
  return 0;
}
