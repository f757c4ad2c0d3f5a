// apl: command-line front end.
//
//   apl run <config.json> [--out DIR]
//   apl compare <dirA> <dirB> [--tol T]
//   apl oracle one-phase|radial|shoot [options] [--field PATH]
//
// Exit codes: 0 success, 1 compare found deltas above tolerance or an
// unexpected error, 2 invalid config or usage or incompatible bundles,
// 3 solver stall (partial report written), 4 I/O failure.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "apl/apl.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& out_override) {
  const apl::ExperimentConfig cfg = apl::load_config(config_path);
  const std::filesystem::path dir = std::filesystem::path(out_override.empty() ? cfg.output : out_override);
  const int code = apl::run_experiment(cfg, dir);
  if (code == 3) std::cerr << "apl: solver stalled; partial report in " << dir.string() << "\n";
  else std::cout << "wrote " << dir.string() << " (config " << apl::config_hash(cfg) << ")\n";
  return code;
}

int cmd_compare(const std::string& a, const std::string& b, double tol) {
  apl::CompareResult res;
  try {
    res = apl::compare_bundles(a, b);
  } catch (const apl::IoError&) {
    throw;
  } catch (const apl::Error& e) {
    std::cerr << "apl: " << e.what() << "\n";
    return 2;
  }
  bool exceeded = res.field_sup_diff > tol;
  std::cout << "field_sup_diff," << apl::detail::format_double(res.field_sup_diff)
            << (res.interpolated ? ",interpolated" : "") << "\n";
  for (const auto& e : res.entries) {
    if (e.delta > tol) exceeded = true;
    std::cout << e.path << ',' << apl::detail::format_double(e.a) << ',' << apl::detail::format_double(e.b) << ','
              << apl::detail::format_double(e.delta) << "\n";
  }
  for (const auto& m : res.missing) {
    exceeded = true;
    std::cout << m << ",missing\n";
  }
  return exceeded ? 1 : 0;
}

void print_samples(const apl::ExactProfile& e, double from, double to, int samples) {
  std::cout << "# beta=" << apl::detail::format_double(e.beta)
            << " coefficient=" << apl::detail::format_double(e.coefficient) << " valid: " << e.validity << "\n";
  std::cout << "x,u\n";
  for (int i = 0; i < samples; ++i) {
    const double x = samples == 1 ? from : from + (to - from) * i / (samples - 1);
    apl::Point pt{0.0, 0.0, 0.0};
    pt[0] = x;
    std::cout << apl::detail::format_double(x) << ',' << apl::detail::format_double(e(pt)) << "\n";
  }
}

// Samples the profile on [from, to]^dim with `samples` nodes per axis.
void export_field(const apl::ExactProfile& e, int dim, double from, double to, int samples, const std::string& path) {
  if (samples < 2) throw apl::ConfigError("--field needs --samples >= 2");
  const std::vector<apl::Interval> dom(static_cast<std::size_t>(dim), apl::Interval{from, to});
  const apl::Grid g(dom, std::vector<std::size_t>(static_cast<std::size_t>(dim), static_cast<std::size_t>(samples)));
  apl::ScalarField f = apl::ScalarField::sample(g, [&](const apl::Point& x) { return e(x); });
  f.fix_box_boundary();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw apl::IoError("cannot write " + path);
  apl::write_field(os, f);
  if (!os) throw apl::IoError("cannot write " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-phase free-boundary energy lab"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  auto* run = app.add_subcommand("run", "Solve a configured problem and write a report bundle");
  run->add_option("config", config_path, "JSON config file")->required();
  run->add_option("--out", out_dir, "Output directory (overrides the config)");

  std::string dir_a, dir_b;
  double tol = 1e-12;
  auto* cmp = app.add_subcommand("compare", "Compare two report bundles");
  cmp->add_option("dirA", dir_a)->required();
  cmp->add_option("dirB", dir_b)->required();
  cmp->add_option("--tol", tol, "Largest accepted delta");

  auto* orc = app.add_subcommand("oracle", "Print closed-form and shooting reference profiles");
  orc->require_subcommand(1);
  double p = 2.0, gamma = 1.0, lambda = 1.0, lambda_minus = 1.0, delta = 1.0;
  double from = 0.0, to = 1.0, ga = 0.0, gb = 1.0;
  int samples = 11, dim = 2;
  std::string field_path;
  auto* one = orc->add_subcommand("one-phase", "A (x_+)^beta");
  one->add_option("--p", p)->required();
  one->add_option("--gamma", gamma)->required();
  one->add_option("--lambda", lambda, "lambda_+")->required();
  one->add_option("--delta", delta);
  one->add_option("--from", from);
  one->add_option("--to", to);
  one->add_option("--samples", samples)->check(CLI::PositiveNumber);
  one->add_option("--field", field_path, "Also write the samples as a 1D field file");
  auto* rad = orc->add_subcommand("radial", "Radial p-harmonic function along the first axis");
  rad->add_option("--dim", dim)->required();
  rad->add_option("--p", p)->required();
  rad->add_option("--from", from);
  rad->add_option("--to", to);
  rad->add_option("--samples", samples)->check(CLI::PositiveNumber);
  rad->add_option("--field", field_path, "Also write samples on [from, to]^dim as a field file");
  auto* sh = orc->add_subcommand("shoot", "1D boundary value problem by shooting");
  sh->add_option("--p", p)->required();
  sh->add_option("--gamma", gamma)->required();
  sh->add_option("--lambda-plus", lambda)->required();
  sh->add_option("--lambda-minus", lambda_minus)->required();
  sh->add_option("--delta", delta);
  sh->add_option("--a", from)->required();
  sh->add_option("--b", to)->required();
  sh->add_option("--ga", ga)->required();
  sh->add_option("--gb", gb)->required();
  sh->add_option("--samples", samples)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(config_path, out_dir);
    if (*cmp) return cmd_compare(dir_a, dir_b, tol);
    apl::ParamsSpec ps;
    ps.p = p;
    ps.gamma = gamma;
    ps.lambda_plus = lambda;
    ps.lambda_minus = lambda_minus;
    ps.delta = delta;
    ps.alpha_p = 1.0;
    if (*one) {
      const apl::ExactProfile e = apl::one_phase_profile(apl::Params(ps));
      print_samples(e, from, to, samples);
      if (!field_path.empty()) export_field(e, 1, from, to, samples, field_path);
    } else if (*rad) {
      const apl::ExactProfile e = apl::radial_p_harmonic(dim, p);
      print_samples(e, from, to, samples);
      if (!field_path.empty()) export_field(e, dim, from, to, samples, field_path);
    } else if (*sh) {
      const auto rep = apl::shoot_two_phase_1d(apl::Params(ps), ga, gb, from, to);
      for (std::size_t r = 0; r < rep.roots.size(); ++r) {
        const auto& s = rep.roots[r];
        std::cout << "# root " << r << " initial_flux=" << apl::detail::format_double(s.initial_flux)
                  << " mismatch=" << apl::detail::format_double(s.mismatch)
                  << " refinement_delta=" << apl::detail::format_double(s.refinement_delta) << "\n";
        std::cout << "x,u\n";
        for (int i = 0; i < samples; ++i) {
          const double x = samples == 1 ? from : from + (to - from) * i / (samples - 1);
          std::cout << apl::detail::format_double(x) << ',' << apl::detail::format_double(s.at(x)) << "\n";
        }
      }
    }
    return 0;
  } catch (const apl::ConfigError& e) {
    std::cerr << "apl: invalid config: " << e.what() << "\n";
    return 2;
  } catch (const apl::IoError& e) {
    std::cerr << "apl: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "apl: " << e.what() << "\n";
    return 1;
  }
}
