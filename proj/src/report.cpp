#include "lillab/report.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lillab/corrector.hpp"

namespace lillab::report {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

const json& jreq(const json& j, const std::string& key) {
  const auto it = j.find(key);
  if (it == j.end()) throw ValidationError("config is missing \"" + key + "\"");
  return *it;
}

template <class T>
T jget(const json& j, const std::string& key, T fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config field \"" + key + "\" has the wrong type");
  }
}

std::vector<double> jget_vector(const json& j, const std::string& key,
                                std::vector<double> fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  require(it->is_array(), "config field \"" + key + "\" must be an array");
  std::vector<double> out;
  for (const auto& v : *it) {
    require(v.is_number(), "config field \"" + key + "\" must hold numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

models::Model parse_model(const json& config) {
  const json& mj = jreq(config, "model");
  const auto kind = jget<std::string>(mj, "kind", "");
  if (kind == "ou") {
    return models::OuModel(jget<double>(mj, "gamma", 1.0),
                           jget<double>(mj, "sigma", std::sqrt(2.0)));
  }
  if (kind == "chain") {
    const json& qj = jreq(mj, "q");
    require(qj.is_array() && !qj.empty(), "chain generator must be a 2d array");
    const auto n = static_cast<int>(qj.size());
    Eigen::MatrixXd q(n, n);
    for (int i = 0; i < n; ++i) {
      require(qj[i].is_array() && static_cast<int>(qj[i].size()) == n,
              "chain generator must be square");
      for (int j = 0; j < n; ++j) q(i, j) = qj[i][j].get<double>();
    }
    Metric metric = Metric::uniform(n);
    if (mj.contains("metric") && mj["metric"].is_array()) {
      Eigen::MatrixXd rho(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) rho(i, j) = mj["metric"][i][j].get<double>();
      metric = Metric::matrix(rho);
    }
    return models::CtmcModel(q, metric);
  }
  throw ValidationError("model kind must be \"ou\" or \"chain\"");
}

Observable parse_observable(const json& config, const models::Model& m) {
  const bool is_chain = std::holds_alternative<models::CtmcModel>(m);
  Observable g;
  if (!config.contains("observable")) {
    require(!is_chain, "chain configs must spell out the observable values");
    g = Observable::tanh_obs();
  } else {
    const json& oj = config["observable"];
    const auto kind = jget<std::string>(oj, "kind", is_chain ? "values" : "tanh");
    if (kind == "values") {
      require(is_chain, "value-table observables need a chain model");
      const auto& chain = std::get<models::CtmcModel>(m);
      std::vector<double> values;
      for (const auto& v : jreq(oj, "values")) values.push_back(v.get<double>());
      require(static_cast<int>(values.size()) == chain.n_states(),
              "observable values must match the state count");
      g = Observable::from_values(jget<std::string>(oj, "name", "table"),
                                  std::move(values), chain.metric);
    } else if (kind == "tanh") {
      require(!is_chain, "tanh observable needs the scalar model");
      g = Observable::tanh_obs();
    } else if (kind == "clipped_identity") {
      require(!is_chain, "clipped identity needs the scalar model");
      g = Observable::clipped_identity();
    } else if (kind == "zero") {
      g = Observable::zero(is_chain ? SpaceKind::discrete : SpaceKind::continuous_1d,
                           is_chain ? std::get<models::CtmcModel>(m).n_states() : 0);
    } else {
      throw ValidationError("unknown observable kind \"" + kind + "\"");
    }
    const double scale = jget<double>(oj, "scale", 1.0);
    if (scale != 1.0) g = Observable::scaled(g, scale);
    if (jget<bool>(oj, "center", false))
      g = models::center_observable(g, models::invariant_measure(m));
  }
  return g;
}

StatePoint parse_point(const json& pj, const models::Model& m) {
  if (std::holds_alternative<models::OuModel>(m))
    return StatePoint::real(jreq(pj, "x").get<double>());
  const int s = jreq(pj, "state").get<int>();
  const auto& chain = std::get<models::CtmcModel>(m);
  require(s >= 0 && s < chain.n_states(), "initial state out of range");
  return StatePoint::state(s);
}

models::InitialLaw parse_initial(const json& config, const models::Model& m) {
  if (!config.contains("initial")) return models::InvariantStart{};
  const json& ij = config["initial"];
  const auto kind = jget<std::string>(ij, "kind", "invariant");
  if (kind == "invariant") return models::InvariantStart{};
  if (kind == "point") return parse_point(ij, m);
  if (kind == "mixture") {
    const json& pts = jreq(ij, "points");
    require(pts.is_array() && !pts.empty(), "mixture points must be a nonempty array");
    std::vector<double> weights =
        jget_vector(ij, "weights", std::vector<double>(pts.size(), 1.0));
    require(weights.size() == pts.size(), "mixture weights must match the points");
    std::vector<EmpiricalMeasure::Atom> atoms;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      StatePoint p = std::holds_alternative<models::OuModel>(m)
                         ? StatePoint::real(pts[k].get<double>())
                         : StatePoint::state(pts[k].get<int>());
      atoms.push_back({p, weights[k]});
    }
    return EmpiricalMeasure(std::move(atoms));
  }
  throw ValidationError("initial kind must be \"invariant\", \"point\", or \"mixture\"");
}

ordered_json echo_model(const models::Model& m) {
  ordered_json out;
  if (const auto* ou = std::get_if<models::OuModel>(&m)) {
    out["kind"] = "ou";
    out["gamma"] = ou->gamma;
    out["sigma"] = ou->noise_sigma;
  } else {
    const auto& chain = std::get<models::CtmcModel>(m);
    out["kind"] = "chain";
    out["n_states"] = chain.n_states();
  }
  return out;
}

EmpiricalMeasure initial_as_measure(const models::InitialLaw& init) {
  if (const auto* p = std::get_if<StatePoint>(&init)) return EmpiricalMeasure::dirac(*p);
  if (const auto* e = std::get_if<EmpiricalMeasure>(&init)) return *e;
  throw ValidationError("this command needs a non-stationary start");
}

std::vector<StatePoint> default_grid(const models::Model& m, bool second) {
  std::vector<StatePoint> out;
  if (std::holds_alternative<models::OuModel>(m)) {
    for (double v : second ? std::vector<double>{-3.0, 0.5, 2.0}
                           : std::vector<double>{-2.0, -0.5, 1.0, 3.0})
      out.push_back(StatePoint::real(v));
  } else {
    const auto& chain = std::get<models::CtmcModel>(m);
    for (int s = 0; s < chain.n_states(); ++s) out.push_back(StatePoint::state(s));
  }
  return out;
}

std::vector<StatePoint> parse_grid(const json& config, const std::string& key,
                                   const models::Model& m, bool second) {
  if (!config.contains(key)) return default_grid(m, second);
  std::vector<StatePoint> out;
  for (const auto& v : config[key])
    out.push_back(std::holds_alternative<models::OuModel>(m)
                      ? StatePoint::real(v.get<double>())
                      : StatePoint::state(v.get<int>()));
  require(!out.empty(), "grid \"" + key + "\" must be nonempty");
  return out;
}

functionals::EnsembleSpec ensemble_from(const RunConfig& cfg, std::uint64_t lane,
                                        int threads) {
  return functionals::EnsembleSpec{cfg.model,    cfg.init, cfg.mesh, cfg.horizon,
                                   cfg.n_paths, cfg.seed, lane,     threads};
}

std::vector<functionals::PathRecord> simulate_ensemble(const RunConfig& cfg,
                                                       double horizon, int threads) {
  std::vector<functionals::PathRecord> paths(static_cast<std::size_t>(cfg.n_paths));
  struct Nothing {};
  parallel::chunked_reduce<Nothing>(
      paths.size(), static_cast<unsigned>(threads),
      [&](std::size_t i, Nothing&) {
        rng::Stream stream(cfg.seed, rng::stream_id(rng::lane::kPaths, i));
        const StatePoint x0 = models::sample_initial(cfg.model, cfg.init, stream);
        paths[i] = functionals::simulate_path(cfg.model, x0, horizon, cfg.mesh, stream);
      },
      [](Nothing&, const Nothing&) {}, Nothing{});
  return paths;
}

// ---- command handlers ------------------------------------------------------

ordered_json cmd_certify_mixing(const RunConfig& cfg, int threads) {
  (void)threads;
  const auto t_grid = jget_vector(cfg.raw, "t_grid", {0.25, 0.5, 1.0, 2.0, 4.0});
  const auto x_grid = parse_grid(cfg.raw, "x_grid", cfg.model, false);
  const auto y_grid = parse_grid(cfg.raw, "y_grid", cfg.model, true);
  std::optional<double> gamma_bound;
  if (cfg.raw.contains("gamma_bound")) gamma_bound = cfg.raw["gamma_bound"].get<double>();
  const auto cert = transport::certify_contraction(
      cfg.model, x_grid, y_grid, t_grid, jget<int>(cfg.raw, "n_kernel_samples", 20000),
      jget<double>(cfg.raw, "tol", 1e-9), gamma_bound, cfg.seed);

  ordered_json result;
  result["gamma_nominal"] = cert.gamma_nominal;
  result["gamma_hat"] = cert.gamma_hat;
  result["r_squared"] = cert.r_squared;
  result["max_ratio_violation"] = cert.max_ratio_violation;
  result["tol"] = cert.tol;
  result["continuity_defect"] = models::continuity_defect(
      cfg.model, cfg.g, transport::default_anchor(cfg.model),
      {1e-4, 3e-4, 1e-3, 3e-3, 1e-2});
  ordered_json checks = ordered_json::array();
  for (const auto& mc : cert.measure_checks) {
    ordered_json c;
    c["t"] = mc.t;
    c["distance"] = mc.distance;
    c["bound"] = mc.bound;
    c["noise_scale"] = mc.noise_scale;
    c["ok"] = mc.ok;
    checks.push_back(std::move(c));
  }
  result["measure_checks"] = std::move(checks);
  ordered_json series;
  std::vector<double> xs, ys, ts, ds, bs, rs;
  for (const auto& g : cert.grid) {
    xs.push_back(g.x_coord);
    ys.push_back(g.y_coord);
    ts.push_back(g.t);
    ds.push_back(g.distance);
    bs.push_back(g.bound);
    rs.push_back(g.ratio);
  }
  series["x"] = xs;
  series["y"] = ys;
  series["t"] = ts;
  series["distance"] = ds;
  series["bound"] = bs;
  series["ratio"] = rs;
  result["series"] = std::move(series);
  result["passed"] = cert.passed;
  return result;
}

ordered_json cmd_ergodicity(const RunConfig& cfg, int threads) {
  (void)threads;
  const auto t_grid = jget_vector(
      cfg.raw, "t_grid", {0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0});
  const EmpiricalMeasure nu = initial_as_measure(cfg.init);
  const auto rep = transport::certify_ergodicity(
      cfg.model, nu, t_grid, jget<int>(cfg.raw, "samples_per_t", 20000), cfg.seed);
  const double rate = models::contraction_rate(cfg.model);

  const auto cesaro = transport::cesaro_convergence(
      cfg.model, nu, cfg.g, std::max(cfg.horizon, 10.0), cfg.mesh,
      jget<int>(cfg.raw, "cesaro_samples", 20000), cfg.seed);

  ordered_json result;
  result["fitted_slope"] = rep.fitted_slope;
  result["rate_nominal"] = rate;
  result["slope_relative_error"] = std::abs(rep.fitted_slope + rate) / rate;
  result["fitted_C"] = rep.fitted_C;
  result["v_mean"] = rep.v_mean;
  result["noise_floor"] = rep.noise_floor;
  result["n_fit_points"] = rep.n_fit_points;
  result["cesaro_gap_initial"] = cesaro.gaps.front();
  result["cesaro_gap_terminal"] = cesaro.gaps.back();
  result["cesaro_gap_shrinks"] = cesaro.gap_shrinks;
  result["cesaro_c_fit"] = cesaro.c_fit;
  ordered_json series;
  series["t"] = rep.times;
  series["distance"] = rep.distances;
  result["series"] = std::move(series);
  result["passed"] = rep.n_fit_points >= 3 &&
                     std::abs(rep.fitted_slope + rate) <= 0.1 * rate &&
                     cesaro.gap_shrinks;
  return result;
}

ordered_json cmd_certify_moments(const RunConfig& cfg, int threads) {
  (void)threads;
  const double zeta = jget<double>(cfg.raw, "zeta", 2.5);
  std::vector<double> t_grid = jget_vector(cfg.raw, "t_grid", {});
  if (t_grid.empty()) {
    for (double t : {0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0})
      if (t < cfg.horizon) t_grid.push_back(t);
    t_grid.push_back(cfg.horizon);
  }
  const LyapunovConfig lcfg(transport::default_anchor(cfg.model), zeta);
  const auto rep = transport::certify_moments(
      cfg.model, cfg.init, lcfg, t_grid, jget<int>(cfg.raw, "samples_per_t", 20000),
      cfg.seed);

  ordered_json result;
  result["zeta"] = zeta;
  result["max_value"] = rep.max_value;
  result["stationary_level"] = rep.stationary_level;
  result["exact"] = rep.exact;
  result["settles_after_burnin"] = rep.settles_after_burnin;
  result["burnin_index"] = rep.burnin_index;
  ordered_json series;
  series["t"] = rep.times;
  series["value"] = rep.values;
  series["std_error"] = rep.std_errors;
  result["series"] = std::move(series);
  result["passed"] = std::isfinite(rep.max_value) && rep.settles_after_burnin;
  return result;
}

ordered_json cmd_corrector(const RunConfig& cfg, int threads) {
  (void)threads;
  const auto corr = functionals::make_corrector(cfg.model, cfg.g);
  const StatePoint x0 = cfg.raw.contains("x")
                            ? parse_point(cfg.raw, cfg.model)
                            : transport::default_anchor(cfg.model);
  const double quad_horizon =
      jget<double>(cfg.raw, "quad_horizon", 34.0 / corr.rate);
  const double quad_mesh = jget<double>(cfg.raw, "quad_mesh", 0.02 / corr.rate);
  const auto quad =
      corrector::corrector_quadrature(cfg.model, cfg.g, x0, quad_horizon, quad_mesh);
  const double chi_x0 = corr.chi(x0);
  const double gap = std::abs(chi_x0 - quad.value);
  const double gap_allow = 1e-6 + quad.error_est + quad.tail_bound + corr.fidelity;

  ordered_json result;
  result["sigma_sq"] = corr.sigma_sq;
  result["sigma"] = std::sqrt(std::max(0.0, corr.sigma_sq));
  result["rate"] = corr.rate;
  result["lip_bound"] = corr.lip_bound;
  result["fidelity"] = corr.fidelity;
  result["g_mean"] = corr.g_mean;
  result["chi_at_x"] = chi_x0;
  ordered_json qj;
  qj["value"] = quad.value;
  qj["error_est"] = quad.error_est;
  qj["tail_bound"] = quad.tail_bound;
  qj["horizon"] = quad.horizon;
  qj["n_panels"] = quad.n_panels;
  result["quadrature"] = std::move(qj);
  result["quadrature_gap"] = gap;

  ordered_json series;
  if (const auto* chain = std::get_if<models::CtmcModel>(&cfg.model)) {
    std::vector<double> states, chi, gc;
    for (int s = 0; s < chain->n_states(); ++s) {
      states.push_back(s);
      chi.push_back(corr.chi_vec(s));
      gc.push_back(cfg.g.values[static_cast<std::size_t>(s)] - corr.g_mean);
    }
    series["state"] = states;
    series["chi"] = chi;
    series["g_centered"] = gc;
  } else {
    const auto& ou = std::get<models::OuModel>(cfg.model);
    std::vector<double> xs, chi;
    for (int k = -20; k <= 20; ++k) {
      const double x = 0.2 * static_cast<double>(k) * ou.invariant_sd();
      xs.push_back(x);
      chi.push_back(corr.chi(StatePoint::real(x)));
    }
    series["x"] = xs;
    series["chi"] = chi;
  }
  result["series"] = std::move(series);

  const bool fidelity_ok =
      std::holds_alternative<models::CtmcModel>(cfg.model) ? corr.fidelity <= 1e-9
                                                           : corr.fidelity <= 1e-5;
  result["passed"] = fidelity_ok && gap <= gap_allow;
  return result;
}

ordered_json cmd_sigma(const RunConfig& cfg, int threads) {
  const auto corr = functionals::make_corrector(cfg.model, cfg.g);
  const auto triple = lil::sigma_triple(cfg.model, cfg.g, corr, cfg.init, cfg.n_paths,
                                        cfg.horizon, cfg.mesh, cfg.seed, threads);
  ordered_json result;
  result["sigma_pairing"] = triple.sigma_pairing;
  result["sigma_mart"] = triple.sigma_mart;
  result["sigma_mart_se"] = triple.sigma_mart_se;
  result["sigma_growth"] = triple.sigma_growth;
  result["sigma_growth_se"] = triple.sigma_growth_se;
  result["max_pairwise_gap_se"] = triple.max_pairwise_gap_se;
  ordered_json series;
  series["t"] = triple.growth_times;
  series["growth"] = triple.growth_values;
  series["growth_se"] = triple.growth_se;
  if (!triple.growth_exact.empty()) series["growth_exact"] = triple.growth_exact;
  result["series"] = std::move(series);
  result["passed"] = triple.pairwise_consistent;
  return result;
}

ordered_json cmd_martingale_check(const RunConfig& cfg, int threads) {
  const double horizon = cfg.raw.contains("horizon") ? cfg.horizon : 6.0;
  const auto corr = functionals::make_corrector(cfg.model, cfg.g);
  std::vector<functionals::MartingaleTrace> traces(
      static_cast<std::size_t>(cfg.n_paths));
  struct Nothing {};
  parallel::chunked_reduce<Nothing>(
      traces.size(), static_cast<unsigned>(threads),
      [&](std::size_t i, Nothing&) {
        rng::Stream stream(cfg.seed, rng::stream_id(rng::lane::kPaths, i));
        const StatePoint x0 = models::sample_initial(cfg.model, cfg.init, stream);
        const auto path =
            functionals::simulate_path(cfg.model, x0, horizon, cfg.mesh, stream);
        traces[i] = functionals::martingale_decompose(path, cfg.g, corr.chi);
      },
      [](Nothing&, const Nothing&) {}, Nothing{});
  const auto features = functionals::default_feature_maps(cfg.model);
  const auto check = functionals::martingale_property_test(traces, features);

  ordered_json result;
  result["n_paths"] = check.n_paths;
  result["threshold_se"] = check.threshold;
  double worst = 0.0;
  for (const auto& c : check.cells) worst = std::max(worst, c.ratio);
  result["worst_ratio"] = worst;
  ordered_json series;
  std::vector<std::string> names;
  std::vector<double> lags, means, ses, ratios;
  std::vector<bool> oks;
  for (const auto& c : check.cells) {
    names.push_back(c.feature);
    lags.push_back(c.n);
    means.push_back(c.mean);
    ses.push_back(c.se);
    ratios.push_back(c.ratio);
    oks.push_back(c.ok);
  }
  series["feature"] = names;
  series["lag"] = lags;
  series["mean"] = means;
  series["se"] = ses;
  series["ratio"] = ratios;
  series["ok"] = oks;
  result["series"] = std::move(series);
  result["passed"] = check.passed;
  return result;
}

ordered_json cmd_heyde_scott(const RunConfig& cfg, int threads) {
  const auto corr = functionals::make_corrector(cfg.model, cfg.g);
  const double sigma_ref = jget<double>(
      cfg.raw, "sigma_ref", std::sqrt(std::max(0.0, corr.sigma_sq)));
  const auto epsilons = jget_vector(cfg.raw, "epsilons", {0.5, 1.0, 2.0});
  const double delta = jget<double>(cfg.raw, "delta", 1.0);
  const auto rep = functionals::heyde_scott_diagnostics(
      ensemble_from(cfg, rng::lane::kPaths, threads), cfg.g, sigma_ref, epsilons,
      delta);

  ordered_json result;
  result["sigma_ref"] = rep.sigma_ref;
  result["delta"] = rep.delta;
  result["epsilons"] = rep.epsilons;
  result["n_paths"] = rep.n_paths;
  result["b2_terminal"] = rep.b2_terminal;
  result["b2_terminal_se"] = rep.b2_terminal_se;
  result["b1_ok"] = rep.b1_ok;
  result["b2_ok"] = rep.b2_ok;
  result["b3_ok"] = rep.b3_ok;
  result["b4_ok"] = rep.b4_ok;
  ordered_json series;
  series["n"] = rep.checkpoints;
  series["s_sq_over_n"] = rep.s_sq_over_n;
  series["s_sq_over_n_se"] = rep.s_sq_over_n_se;
  series["b1_median"] = rep.b1_median;
  series["b1_q25"] = rep.b1_q25;
  series["b1_q75"] = rep.b1_q75;
  series["b3_partial"] = rep.b3_partial;
  for (std::size_t e = 0; e < rep.epsilons.size(); ++e) {
    std::ostringstream key;
    key << "b4_partial_eps" << rep.epsilons[e];
    series[key.str()] = rep.b4_partial[e];
  }
  result["series"] = std::move(series);
  result["passed"] = rep.passed;
  return result;
}

ordered_json cmd_lil(const RunConfig& cfg, int threads) {
  double sigma = jget<double>(cfg.raw, "sigma", -1.0);
  if (sigma < 0.0) {
    const auto corr = functionals::make_corrector(cfg.model, cfg.g);
    sigma = std::sqrt(std::max(0.0, corr.sigma_sq));
  }
  const double delta = jget<double>(cfg.raw, "delta", 0.5);
  const auto rep = lil::lil_envelope(cfg.model, cfg.g, sigma, cfg.init, cfg.n_paths,
                                     cfg.horizon, delta, cfg.mesh, cfg.seed, threads);

  ordered_json result;
  result["sigma"] = rep.sigma;
  result["delta"] = rep.delta;
  result["envelope_level"] = rep.envelope_level;
  result["envelope_start_n"] = rep.envelope_start_n;
  result["degenerate_variance"] = rep.degenerate;
  if (!rep.degenerate) {
    result["exceed_fraction"] = rep.exceed_fraction;
    result["exceed_limit"] = rep.exceed_limit;
    result["exceed_ok"] = rep.exceed_ok;
    result["sup_at_10_median"] = rep.sup_at_10_median;
    result["sup_terminal_median"] = rep.sup_terminal_median;
    result["sup_grows"] = rep.sup_grows;
    result["remainder_median_terminal"] = rep.remainder_median_terminal;
    ordered_json series;
    series["n"] = rep.ns;
    series["ratio_median"] = rep.ratio_median;
    series["sup_median"] = rep.sup_median;
    series["sup_q10"] = rep.sup_q10;
    series["sup_q90"] = rep.sup_q90;
    series["mart_sup_median"] = rep.mart_sup_median;
    result["series"] = std::move(series);
  }
  result["passed"] = rep.passed;
  return result;
}

ordered_json cmd_clt_proxy(const RunConfig& cfg, int threads) {
  double sigma = jget<double>(cfg.raw, "sigma", -1.0);
  if (sigma < 0.0) {
    const auto corr = functionals::make_corrector(cfg.model, cfg.g);
    sigma = std::sqrt(std::max(0.0, corr.sigma_sq));
  }
  const double t_eval = jget<double>(cfg.raw, "t_eval", cfg.horizon);
  const auto rep =
      lil::clt_proxy(ensemble_from(cfg, rng::lane::kCltProxy, threads), cfg.g, sigma,
                     t_eval);
  ordered_json result;
  result["ks_stat"] = rep.ks_stat;
  result["ks_critical"] = rep.ks_critical;
  result["sample_mean"] = rep.sample_mean;
  result["sample_var"] = rep.sample_var;
  result["t_eval"] = rep.t_eval;
  result["sigma"] = rep.sigma;
  result["n_paths"] = rep.n_paths;
  result["passed"] = rep.passed;
  return result;
}

ordered_json cmd_discretization(const RunConfig& cfg, int threads) {
  if (std::holds_alternative<models::OuModel>(cfg.model)) {
    const double bytes = static_cast<double>(cfg.n_paths) *
                         (cfg.horizon / cfg.mesh + 1.0) * 8.0;
    require(bytes <= 1.5e9,
            "trace storage would exceed memory; coarsen the mesh or drop paths");
  }
  const auto traces = simulate_ensemble(cfg, cfg.horizon, threads);
  const auto rep = lil::discretization_gap(traces, cfg.g);

  ordered_json result;
  result["n_paths"] = rep.n_paths;
  result["horizon"] = rep.horizon;
  result["ceiling_ok"] = rep.ceiling_ok;
  result["median_decreasing"] = rep.median_decreasing;
  result["terminal_halved"] = rep.terminal_halved;
  ordered_json series;
  series["n"] = rep.ns;
  series["gap_median"] = rep.gap_median;
  series["gap_q90"] = rep.gap_q90;
  series["ceiling_median"] = rep.ceiling_median;
  result["series"] = std::move(series);
  result["passed"] = rep.passed;
  return result;
}

}  // namespace

RunConfig parse_config(const json& config) {
  require(config.is_object(), "config must be a JSON object");
  models::Model model = parse_model(config);
  Observable g = parse_observable(config, model);
  models::InitialLaw init = parse_initial(config, model);
  RunConfig cfg{std::move(model),
                std::move(g),
                std::move(init),
                jget<double>(config, "horizon", 100.0),
                jget<double>(config, "mesh", 0.01),
                jget<int>(config, "n_paths", 10000),
                jget<std::uint64_t>(config, "seed", 0),
                config};
  require(cfg.horizon > 0.0, "horizon must be positive");
  require(cfg.mesh > 0.0, "mesh must be positive");
  require(cfg.n_paths >= 1, "n_paths must be positive");
  return cfg;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {
      "certify-mixing", "certify-moments", "ergodicity",  "corrector",
      "sigma",          "martingale-check", "heyde-scott", "lil",
      "clt-proxy",      "discretization"};
  return names;
}

ordered_json run_command(const std::string& command, const json& config, int threads) {
  const RunConfig cfg = parse_config(config);
  ordered_json result;
  if (command == "certify-mixing") {
    result = cmd_certify_mixing(cfg, threads);
  } else if (command == "certify-moments") {
    result = cmd_certify_moments(cfg, threads);
  } else if (command == "ergodicity") {
    result = cmd_ergodicity(cfg, threads);
  } else if (command == "corrector") {
    result = cmd_corrector(cfg, threads);
  } else if (command == "sigma") {
    result = cmd_sigma(cfg, threads);
  } else if (command == "martingale-check") {
    result = cmd_martingale_check(cfg, threads);
  } else if (command == "heyde-scott") {
    result = cmd_heyde_scott(cfg, threads);
  } else if (command == "lil") {
    result = cmd_lil(cfg, threads);
  } else if (command == "clt-proxy") {
    result = cmd_clt_proxy(cfg, threads);
  } else if (command == "discretization") {
    result = cmd_discretization(cfg, threads);
  } else {
    std::string names;
    for (const auto& n : command_names()) names += (names.empty() ? "" : ", ") + n;
    throw ValidationError("unknown command \"" + command + "\"; expected one of " +
                          names);
  }

  ordered_json out;
  out["command"] = command;
  out["seed"] = cfg.seed;
  out["model"] = echo_model(cfg.model);
  out["observable"] = cfg.g.name;
  out["result"] = std::move(result);
  out["passed"] = out["result"].value("passed", false);
  return out;
}

std::string to_csv(const ordered_json& report) {
  std::ostringstream os;
  os << "# command=" << report.value("command", std::string("?")) << "\n";
  if (report.contains("seed")) os << "# seed=" << report["seed"].dump() << "\n";
  const auto it = report.find("result");
  if (it == report.end()) return os.str();
  const ordered_json* series = nullptr;
  for (const auto& [key, value] : it->items()) {
    if (key == "series") {
      series = &value;
      continue;
    }
    if (value.is_structured()) continue;  // nested blocks stay JSON-only
    os << "# " << key << "=" << value.dump() << "\n";
  }
  if (!series || series->empty()) return os.str();

  std::vector<std::string> cols;
  std::size_t n_rows = 0;
  for (const auto& [key, value] : series->items()) {
    cols.push_back(key);
    n_rows = std::max(n_rows, value.size());
  }
  for (std::size_t c = 0; c < cols.size(); ++c)
    os << cols[c] << (c + 1 < cols.size() ? "," : "\n");
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto& col = (*series)[cols[c]];
      if (r < col.size()) {
        const auto& cell = col[r];
        if (cell.is_string())
          os << cell.get<std::string>();
        else
          os << cell.dump();
      }
      os << (c + 1 < cols.size() ? "," : "\n");
    }
  }
  return os.str();
}

}  // namespace lillab::report
