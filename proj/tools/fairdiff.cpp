// fairdiff: embedding bias metrics, alignment audits and diffusion simulations.
//
// Exit codes: 0 pass, 1 audit or theorem failure, 2 input error,
// 3 hypotheses not met.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fairdiff/fairdiff.hpp"

namespace fs = std::filesystem;
using namespace fairdiff;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitInput = 2;
constexpr int kExitHypotheses = 3;

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  unsigned threads = 0;
  std::string output_dir = ".";
  std::string config_path;
};

std::string out_path(const Globals& g, const std::string& name) { return (fs::path(g.output_dir) / name).string(); }

// ---------------------------------------------------------------------------
// bias

struct BiasArgs {
  std::string store;
  std::vector<std::string> bases;
  std::vector<std::string> attributes{"male", "female"};
  std::string sort = "desc";
  std::string ratio_csv;
  double epsilon = -1.0;
  bool token_mode = false;
  bool normalize_word2vec = false;
};

struct RatioRow {
  std::string profession;
  std::optional<double> ratio;
  double proportion = 0.0;
};

std::vector<RatioRow> read_ratio_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open ratio file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("profession,ratio,proportion_male", 0) != 0) {
    throw InputError(path + ": expected header 'profession,ratio,proportion_male'");
  }
  std::vector<RatioRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 3) throw InputError(path + ": line " + std::to_string(line_no) + " needs 3 fields");
    RatioRow r;
    r.profession = f[0];
    if (!f[1].empty()) {
      auto v = detail::parse_double(f[1]);
      if (!v) throw InputError(path + ": line " + std::to_string(line_no) + ": bad ratio '" + f[1] + "'");
      r.ratio = *v;
    }
    auto p = detail::parse_double(f[2]);
    if (!p) throw InputError(path + ": line " + std::to_string(line_no) + ": bad proportion '" + f[2] + "'");
    r.proportion = *p;
    rows.push_back(r);
  }
  return rows;
}

int run_bias(const BiasArgs& a, const Globals& g, Json& outputs) {
  if (a.attributes.size() != 2) throw InputError("--attributes takes exactly two attributes");
  const auto store = load_any_store(a.store, a.normalize_word2vec);
  const auto mode = a.token_mode ? KeyComposition::kToken : KeyComposition::kPhrase;
  const std::pair<std::string, std::string> pair{a.attributes[0], a.attributes[1]};

  if (!a.bases.empty()) {
    SortOrder order = SortOrder::kDescending;
    if (a.sort == "asc") order = SortOrder::kAscending;
    if (a.sort == "none") order = SortOrder::kNone;
    const auto rows = text_text_bias_table(store, a.bases, pair, order, mode);
    std::ostringstream csv;
    csv << "base,cos_a1,cos_a2,delta,avg\n";
    for (const auto& r : rows) {
      csv << r.base << ',' << fixed(r.per_attribute_cosine[0].second, 6) << ','
          << fixed(r.per_attribute_cosine[1].second, 6) << ',' << fixed(r.delta, 6) << ','
          << fixed(r.average_cosine, 6) << '\n';
    }
    write_text(out_path(g, "bias_table.csv"), csv.str());
    outputs.push_back("bias_table.csv");
    std::cout << csv.str();

    if (a.epsilon >= 0.0) {
      std::ostringstream close;
      close << "base,attribute,distance,epsilon,is_close\n";
      for (const auto& b : a.bases) {
        for (const auto& attr : a.attributes) {
          const auto c = epsilon_closeness(store, b, attr, a.epsilon, mode);
          close << b << ',' << attr << ',' << fixed(c.distance, 6) << ',' << fixed(c.epsilon, 6) << ','
                << (c.is_close ? "true" : "false") << '\n';
        }
      }
      write_text(out_path(g, "closeness.csv"), close.str());
      outputs.push_back("closeness.csv");
    }
  }

  if (!a.ratio_csv.empty()) {
    auto rows = read_ratio_csv(a.ratio_csv);
    std::vector<std::pair<double, double>> pts;
    std::ostringstream csv;
    csv << "profession,ratio,proportion_male\n";
    for (auto& r : rows) {
      if (!r.ratio) r.ratio = bias_ratio(store, r.profession, pair, mode);
      pts.emplace_back(*r.ratio, r.proportion);
      csv << r.profession << ',' << fixed(*r.ratio, 6) << ',' << fixed(r.proportion, 6) << '\n';
    }
    const auto fit = ols_fit(pts);
    csv << "# slope=" << fixed(fit.slope, 6) << " intercept=" << fixed(fit.intercept, 6)
        << " r_squared=" << fixed(fit.r_squared, 6) << " n=" << fit.n << '\n';
    write_text(out_path(g, "ratio_regression.csv"), csv.str());
    outputs.push_back("ratio_regression.csv");
    std::cout << "regression: slope " << fixed(fit.slope, 6) << ", intercept " << fixed(fit.intercept, 6)
              << ", R^2 " << fixed(fit.r_squared, 6) << " (n = " << fit.n << ")\n";
  }
  if (a.bases.empty() && a.ratio_csv.empty()) throw InputError("bias needs --bases and/or --ratio");
  return kExitPass;
}

// ---------------------------------------------------------------------------
// audit

struct AuditArgs {
  std::string input;
  std::string mode = "multiaccuracy";
  std::optional<double> alpha;
  std::optional<double> lambda;
  std::optional<std::size_t> min_bin_count;
  bool clipscore_compat = false;
  double tolerate_mean_gap = 0.0;
  std::optional<double> sweep_step;
  std::optional<double> ball_radius;
};

Json report_json(const AuditReport& r) {
  Json j{{"mode", to_string(r.mode)}, {"max_deviation", r.max_deviation}, {"alpha", r.alpha}, {"passes", r.passes}};
  j["per_subset_deviation"] = Json::object();
  for (const auto& [attr, d] : r.per_subset_deviation) j["per_subset_deviation"][attr] = d;
  if (r.mode == AuditMode::kMulticalibration) {
    j["bin_width"] = r.bin_width;
    j["min_bin_count"] = r.min_bin_count;
    j["bins"] = Json::array();
    for (const auto& b : r.bins) {
      j["bins"].push_back({{"attribute", b.attribute},
                           {"bin", b.bin},
                           {"lower", b.lower},
                           {"upper", b.upper},
                           {"count", b.count},
                           {"deviation", b.deviation},
                           {"counted", b.counted}});
    }
  }
  return j;
}

int run_audit(const AuditArgs& a, const Config& cfg, const Globals& g, Json& outputs) {
  auto input = load_audit_input(a.input);
  auto& collection = input.collection;
  if (a.alpha) {
    if (!(*a.alpha >= 0.0 && *a.alpha <= 1.0)) throw InputError("--alpha must lie in [0, 1]");
    collection.alpha = *a.alpha;
  }
  const double lambda = a.lambda.value_or(cfg.lambda);
  const std::size_t min_bin = a.min_bin_count.value_or(cfg.min_bin_count);
  const double step = a.sweep_step.value_or(cfg.sweep_step);
  const double radius = a.ball_radius.value_or(cfg.ball_radius);
  if (a.tolerate_mean_gap < 0.0) throw InputError("--tolerate-mean-gap must be >= 0");

  const auto& prompt = input.prompts.at(collection.base);
  const Auditor auditor = embedding_auditor(prompt, a.clipscore_compat);

  std::vector<AuditReport> reports;
  if (a.mode == "multiaccuracy" || a.mode == "both") reports.push_back(multiaccuracy_audit(collection, auditor));
  if (a.mode == "multicalibration" || a.mode == "both") {
    reports.push_back(multicalibration_audit(collection, auditor, lambda, min_bin));
  }

  Json j;
  j["base"] = collection.base.render();
  j["alpha"] = collection.alpha;
  j["auditor"] = a.clipscore_compat ? "clipscore_compat" : "align_score";
  j["prompt_store_unit"] = input.prompts.unit();
  j["audits"] = Json::array();
  bool passes = true;
  for (const auto& r : reports) {
    j["audits"].push_back(report_json(r));
    passes = passes && r.passes;
  }
  Json notices = Json::array();

  // Summary: per subset, the largest deviation any requested audit counted.
  std::ostringstream summary;
  summary << "attribute,deviation,passes\n";
  for (const auto& subset : collection.subsets) {
    double worst = 0.0;
    for (const auto& r : reports) {
      if (r.mode == AuditMode::kMultiaccuracy) {
        for (const auto& [attr, d] : r.per_subset_deviation) {
          if (attr == subset.attribute) worst = std::max(worst, d);
        }
      } else {
        for (const auto& b : r.bins) {
          if (b.attribute == subset.attribute && b.counted) worst = std::max(worst, b.deviation);
        }
      }
    }
    summary << subset.attribute << ',' << fixed(worst, 6) << ',' << (worst <= collection.alpha ? "true" : "false")
            << '\n';
  }
  write_text(out_path(g, "audit_summary.csv"), summary.str());
  outputs.push_back("audit_summary.csv");

  // Model-level scores under a sweep of the first subset's share.
  std::vector<std::string> subclass_attrs;
  for (const auto& s : collection.subsets) {
    if (input.prompts.contains(composed_key(collection.base.base, s.attribute))) {
      subclass_attrs.push_back(s.attribute);
    } else {
      notices.push_back("subclass score skipped: no composed prompt '" + composed_key(collection.base.base, s.attribute) +
                        "'");
      subclass_attrs.clear();
      break;
    }
  }
  if (collection.subsets.size() >= 2) {
    const auto sweep = scoring_sweep(collection, prompt, &input.prompts, subclass_attrs, step);
    std::ostringstream csv;
    csv << "proportion,score_then_average,average_then_score,average_then_score_variance,subclass_score\n";
    for (const auto& p : sweep) {
      csv << fixed(p.proportion, 6) << ',' << fixed(p.score_then_average, 6) << ',' << fixed(p.average_then_score, 6)
          << ',' << fixed(p.average_then_score_variance, 6) << ',' << (p.subclass ? fixed(*p.subclass, 6) : "") << '\n';
    }
    write_text(out_path(g, "sweep.csv"), csv.str());
    outputs.push_back("sweep.csv");

    // Mixture stability over the same proportions.
    try {
      Json ms = Json::array();
      const auto others = static_cast<double>(collection.subsets.size() - 1);
      bool all_hold = true;
      for (const auto& p : sweep) {
        std::vector<double> w(collection.subsets.size(), (1.0 - p.proportion) / others);
        w[0] = p.proportion;
        const auto r = mixture_stability_check(collection, auditor, w, a.tolerate_mean_gap, cfg.mean_tolerance);
        ms.push_back({{"proportion", p.proportion},
                      {"expected_score", r.expected_score},
                      {"mean_true_score", r.mean_true_score},
                      {"bound", r.bound},
                      {"holds", r.holds}});
        all_hold = all_hold && r.holds;
      }
      j["mixture_stability"] = ms;
      passes = passes && all_hold;
    } catch (const HypothesisError& e) {
      notices.push_back(std::string("mixture stability not evaluated: ") + e.what());
    }
  } else {
    notices.push_back("sweep skipped: needs at least two subsets");
  }

  // Necessary-condition detectors; reported, never gating.
  Json cond;
  try {
    const auto ti = text_image_condition_check(collection, prompt, cfg.mean_tolerance);
    Json pairs = Json::array();
    for (const auto& p : ti.pairs) pairs.push_back({{"first", p.first}, {"second", p.second}, {"gap", p.gap}});
    cond["text_image"] = {{"pairs", pairs},
                          {"max_gap", ti.max_gap},
                          {"alpha_lower_bound", ti.alpha_lower_bound},
                          {"notices", ti.notices}};
  } catch (const InputError& e) {
    notices.push_back(std::string("text-image check skipped: ") + e.what());
  }
  if (!subclass_attrs.empty() && input.prompts.unit()) {
    std::vector<std::string> attrs;
    for (const auto& s : collection.subsets) attrs.push_back(s.attribute);
    Json tt = Json::array();
    for (const auto& v : text_text_condition_check(input.prompts, collection.base.base, attrs, radius, collection.alpha)) {
      tt.push_back({{"first", v.first},
                    {"second", v.second},
                    {"gap", v.gap},
                    {"threshold", v.threshold},
                    {"violation", v.violation}});
    }
    cond["text_text"] = {{"ball_radius", radius}, {"pairs", tt}};
  } else {
    notices.push_back("text-text check skipped: needs composed prompts in a unit=true prompt store");
  }
  j["conditions"] = cond;
  j["notices"] = notices;
  j["passes"] = passes;
  write_json(out_path(g, "audit_report.json"), j);
  outputs.push_back("audit_report.json");

  for (const auto& r : reports) {
    std::cout << to_string(r.mode) << ": max deviation " << fixed(r.max_deviation, 6) << " vs alpha "
              << fixed(r.alpha, 6) << " -> " << (r.passes ? "pass" : "FAIL") << "\n";
  }
  for (const auto& n : notices) std::cout << "note: " << n.get<std::string>() << "\n";
  return passes ? kExitPass : kExitFail;
}

// ---------------------------------------------------------------------------
// simulate

struct SimArgs {
  std::string model;
  std::string experiment;
  std::optional<int> pairs;
  std::optional<double> epsilon;
  std::vector<double> v;
  std::string store;
  std::string base;
  std::vector<std::string> attributes;
  std::optional<double> horizon;
  std::optional<int> steps;
  std::optional<int> paths;
  std::optional<std::size_t> probes;
  std::optional<double> sigma;
  std::optional<int> trials;
  std::vector<double> prompt;
  double tolerance = 1e-5;
};

Json divergence_json(const DivergenceReport& r) {
  return {{"kl_numeric", r.kl_numeric},
          {"kl_girsanov_bound", r.kl_girsanov_bound},
          {"ci_half_width", r.ci_half_width},
          {"tv_numeric", r.tv_numeric},
          {"pinsker_bound", r.pinsker_bound},
          {"prompt_distance", r.prompt_distance},
          {"lipschitz_bound", r.lipschitz_bound},
          {"inconclusive", r.inconclusive},
          {"kl_within_bound", r.kl_within_bound},
          {"tv_within_pinsker", r.tv_within_pinsker},
          {"bound_within_lipschitz", r.bound_within_lipschitz}};
}

Json lipschitz_json(const LipschitzEstimate& l) {
  return {{"estimate", l.estimate},
          {"analytic_bound", l.analytic_bound},
          {"drift_estimate", l.drift_estimate()},
          {"drift_bound", 2.0 * l.analytic_bound},
          {"probes", l.probes},
          {"within_bound", l.within_bound()}};
}

int run_simulate(const SimArgs& a, Config cfg, const Globals& g, Json& outputs, std::vector<std::string>& inputs) {
  if (a.horizon) cfg.sde.horizon = *a.horizon;
  if (a.steps) cfg.sde.steps = *a.steps;
  if (a.paths) cfg.sde.paths = *a.paths;
  if (a.probes) cfg.lipschitz_probes = *a.probes;
  if (a.epsilon) cfg.epsilon = *a.epsilon;
  if (a.pairs) cfg.girsanov_pairs = *a.pairs;
  if (a.sigma) cfg.tweedie_sigma = *a.sigma;
  if (a.trials) cfg.tweedie_trials = *a.trials;
  QuadratureOptions quad;
  quad.abs_tol = cfg.quadrature_abs_tol;

  if (a.experiment == "tweedie") {
    GaussianMixture prior({Component{0.3, {-2.0}, {0.5}}, Component{0.7, {1.5}, {1.0}}});
    if (!a.model.empty()) {
      const auto spec = load_model(a.model);
      if (a.prompt.empty()) throw InputError("--experiment tweedie with --model needs --prompt");
      prior = spec.model.mixture(a.prompt);
    }
    const auto r = tweedie_check(prior, cfg.tweedie_sigma, cfg.tweedie_trials);
    std::ostringstream csv;
    csv << "observed,tweedie,posterior,deviation\n";
    for (const auto& p : r.points) {
      csv << detail::format_double(p.observed) << ',' << detail::format_double(p.tweedie) << ','
          << detail::format_double(p.posterior) << ',' << detail::format_double(std::abs(p.tweedie - p.posterior))
          << '\n';
    }
    write_text(out_path(g, "tweedie.csv"), csv.str());
    const bool ok = r.max_deviation <= a.tolerance;
    write_json(out_path(g, "tweedie.json"), {{"sigma", cfg.tweedie_sigma},
                                              {"trials", cfg.tweedie_trials},
                                              {"max_deviation", r.max_deviation},
                                              {"tolerance", a.tolerance},
                                              {"passes", ok}});
    outputs.push_back("tweedie.csv");
    outputs.push_back("tweedie.json");
    std::cout << "tweedie: max deviation " << r.max_deviation << " (tolerance " << a.tolerance << ") -> "
              << (ok ? "pass" : "FAIL") << "\n";
    return ok ? kExitPass : kExitFail;
  }

  if (a.model.empty()) throw InputError("--model is required for --experiment " + a.experiment);
  inputs.push_back(a.model);
  const auto spec = load_model(a.model);
  const auto& model = spec.model;

  auto prompt_context = [&]() {
    const std::string store_path = !a.store.empty() ? a.store : spec.prompt_store.value_or("");
    const std::string base = !a.base.empty() ? a.base : spec.base.value_or("");
    const auto attrs = !a.attributes.empty() ? a.attributes : spec.attributes;
    const auto v = !a.v.empty() ? a.v : spec.v;
    if (store_path.empty()) throw InputError("no prompt store: pass --store or set prompt_store in the model");
    if (base.empty()) throw InputError("no base prompt: pass --base or set base in the model");
    if (attrs.empty()) throw InputError("no attributes: pass --attributes or set attributes in the model");
    inputs.push_back(store_path);
    return std::make_tuple(load_store(store_path, StoreKind::kPrompt), base, attrs, v);
  };

  if (a.experiment == "girsanov") {
    if (cfg.girsanov_pairs < 1) throw InputError("--pairs must be >= 1");
    if (model.data_dimension() > 2) throw InputError("girsanov experiment needs a 1D or 2D model");
    GirsanovOptions opts;
    opts.z = cfg.ci_z;
    opts.max_relative_ci = cfg.max_relative_ci;
    opts.quadrature_slack = cfg.quadrature_slack;
    opts.quadrature = quad;
    Json pairs = Json::array();
    int held = 0;
    int inconclusive = 0;
    fs::create_directories(fs::path(g.output_dir) / "girsanov_series");
    const auto suite = girsanov_suite(model, cfg.sde, cfg.girsanov_pairs, opts);
    for (std::size_t k = 0; k < suite.size(); ++k) {
      const auto& r = suite[k].report;
      Json pj = divergence_json(r);
      pj["y"] = suite[k].y;
      pj["y_prime"] = suite[k].y_prime;
      pj["holds"] = r.holds();
      pairs.push_back(pj);
      held += r.holds() ? 1 : 0;
      inconclusive += r.inconclusive ? 1 : 0;
      std::ostringstream csv;
      csv << "t,expected_drift_gap_sq\n";
      for (const auto& s : r.series) csv << detail::format_double(s.t) << ',' << detail::format_double(s.expected_drift_gap_sq) << '\n';
      char name[64];
      std::snprintf(name, sizeof name, "girsanov_series/pair_%02zu.csv", k + 1);
      write_text(out_path(g, name), csv.str());
      std::cout << "pair " << k + 1 << ": KL " << r.kl_numeric << " <= " << r.kl_girsanov_bound << " +- "
                << r.ci_half_width << ", TV " << r.tv_numeric << " <= " << r.pinsker_bound
                << (r.inconclusive ? " (inconclusive)" : "") << (r.holds() ? "" : "  VIOLATED") << "\n";
    }
    write_json(out_path(g, "girsanov.json"), {{"pairs", pairs},
                                               {"satisfied", held},
                                               {"total", cfg.girsanov_pairs},
                                               {"inconclusive", inconclusive}});
    outputs.push_back("girsanov.json");
    outputs.push_back("girsanov_series/");
    std::cout << held << "/" << cfg.girsanov_pairs << " pairs satisfy both bounds\n";
    return held == cfg.girsanov_pairs ? kExitPass : kExitFail;
  }

  if (a.experiment == "theorem41") {
    auto [store, base, attrs, v] = prompt_context();
    if (v.empty()) throw InputError("theorem41 needs thresholds: pass --v or set v in the model");
    Theorem41Options opts;
    opts.slack = cfg.quadrature_slack;
    opts.quadrature = quad;
    opts.probes.probes = cfg.lipschitz_probes;
    opts.probes.seed = cfg.sde.seed;
    const auto r = theorem41_experiment(model, store, base, attrs, cfg.epsilon, v, cfg.sde.horizon, opts);
    Json others = Json::array();
    for (const auto& o : r.others) {
      others.push_back({{"attribute", o.attribute},
                        {"tv_to_base", o.tv_to_base},
                        {"tv_to_closest", o.tv_to_closest},
                        {"lower_bound", 1.0 - 2.0 * r.epsilon},
                        {"meets_lower_bound", o.meets_lower_bound}});
    }
    Json balance = Json::array();
    for (const auto& b : r.balance) {
      balance.push_back({{"attribute", b.attribute}, {"tv", b.tv}, {"v", b.threshold}, {"satisfied", b.satisfied}});
    }
    write_json(out_path(g, "theorem41.json"), {{"verdict", to_string(r.verdict)},
                                                {"unmet_hypotheses", r.unmet},
                                                {"epsilon", r.epsilon},
                                                {"horizon", r.horizon},
                                                {"closest_attribute", r.closest_attribute},
                                                {"embedding_distance", r.embedding_distance},
                                                {"closeness_radius", r.closeness_radius},
                                                {"drift_lipschitz_bound", r.drift_lipschitz},
                                                {"lipschitz", lipschitz_json(r.lipschitz)},
                                                {"min_pairwise_tv", r.min_pairwise_tv},
                                                {"kl_bound", r.kl_bound},
                                                {"kl_numeric", r.kl_numeric},
                                                {"pinsker_bound", r.pinsker_bound},
                                                {"tv_closest", r.tv_closest},
                                                {"closest_within_epsilon", r.closest_within_epsilon},
                                                {"others", others},
                                                {"balance", balance}});
    outputs.push_back("theorem41.json");
    std::cout << "theorem41: " << to_string(r.verdict) << "\n";
    for (const auto& u : r.unmet) std::cout << "  unmet: " << u << "\n";
    std::cout << "  TV(p_b, p_" << r.closest_attribute << ") = " << r.tv_closest << " (<= " << r.epsilon << ")\n";
    for (const auto& o : r.others) {
      std::cout << "  TV(p_b, p_" << o.attribute << ") = " << o.tv_to_base << " (>= " << 1.0 - 2.0 * r.epsilon << ")\n";
    }
    if (r.verdict == Verdict::kHypothesesNotMet) return kExitHypotheses;
    return r.verdict == Verdict::kVerified ? kExitPass : kExitFail;
  }

  if (a.experiment == "balance") {
    auto [store, base, attrs, v] = prompt_context();
    if (v.empty()) throw InputError("balance needs thresholds: pass --v or set v in the model");
    const auto rows = rep_balance_audit(model, store, base, attrs, v, cfg.quadrature_slack, quad);
    std::ostringstream csv;
    csv << "attribute,tv,threshold,satisfied\n";
    bool all = true;
    for (const auto& r : rows) {
      csv << r.attribute << ',' << fixed(r.tv, 6) << ',' << fixed(r.threshold, 6) << ','
          << (r.satisfied ? "true" : "false") << '\n';
      all = all && r.satisfied;
    }
    write_text(out_path(g, "balance.csv"), csv.str());
    outputs.push_back("balance.csv");
    std::cout << csv.str();
    return all ? kExitPass : kExitFail;
  }

  if (a.experiment == "sample") {
    if (a.prompt.empty()) throw InputError("--experiment sample needs --prompt");
    const auto target = model.mixture(a.prompt);
    const auto s = reverse_sde_sample(target, cfg.sde);
    std::ostringstream csv;
    for (std::size_t d = 0; d < s.dimension; ++d) csv << (d ? ",x" : "x") << d + 1;
    csv << '\n';
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto x = s.sample(i);
      for (std::size_t d = 0; d < x.size(); ++d) csv << (d ? "," : "") << detail::format_double(x[d]);
      csv << '\n';
    }
    write_text(out_path(g, "samples.csv"), csv.str());
    Json j{{"mean", s.mean}, {"variance", s.variance}, {"paths", cfg.sde.paths}, {"steps", cfg.sde.steps},
           {"horizon", cfg.sde.horizon}, {"seed", cfg.sde.seed}};
    Json props = Json::object();
    Json weights = Json::object();
    const auto w = model.weights(a.prompt);
    for (std::size_t i = 0; i < model.size(); ++i) {
      props[model.shapes()[i].attribute] = s.proportions[i];
      weights[model.shapes()[i].attribute] = w[i];
    }
    j["proportions"] = props;
    j["target_weights"] = weights;
    if (s.dimension == 1) j["ks_distance"] = ks_distance(s.samples, target);
    write_json(out_path(g, "sample_summary.json"), j);
    outputs.push_back("samples.csv");
    outputs.push_back("sample_summary.json");
    std::cout << j.dump(2) << "\n";
    return kExitPass;
  }

  if (a.experiment == "lipschitz") {
    LipschitzProbeOptions opts;
    opts.probes = cfg.lipschitz_probes;
    opts.seed = cfg.sde.seed;
    opts.horizon = cfg.sde.horizon;
    const auto l = score_lipschitz_estimate(model, opts);
    write_json(out_path(g, "lipschitz.json"), lipschitz_json(l));
    outputs.push_back("lipschitz.json");
    std::cout << "score Lipschitz estimate " << l.estimate << " vs analytic bound " << l.analytic_bound << "\n";
    return l.within_bound() ? kExitPass : kExitFail;
  }

  throw InputError("unknown experiment '" + a.experiment + "'");
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  bool write_defaults = false;
  std::string proportions;
  std::string run_dir;
};

int run_report(const ReportArgs& a, const Config& cfg, const Globals& g, Json& outputs) {
  if (!a.write_defaults && a.proportions.empty() && a.run_dir.empty()) {
    throw InputError("report needs --write-defaults, --proportions or --run");
  }
  if (a.write_defaults) {
    write_json(out_path(g, "default_config.json"), to_json(cfg));
    outputs.push_back("default_config.json");
    std::cout << "wrote " << out_path(g, "default_config.json") << "\n";
  }
  if (!a.proportions.empty()) {
    std::ifstream in(a.proportions);
    if (!in) throw InputError("cannot open '" + a.proportions + "'");
    std::string line;
    if (!std::getline(in, line) || line.rfind("generation,proportion", 0) != 0) {
      throw InputError(a.proportions + ": expected header 'generation,proportion'");
    }
    std::ostringstream csv;
    csv << "generation,proportion\n";
    std::cout << "Generation    Proportion\n";
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto comma = line.find(',');
      const auto p = comma == std::string::npos ? std::nullopt : detail::parse_double(line.substr(comma + 1));
      if (!p || *p < 0.0 || *p > 1.0) {
        throw InputError(a.proportions + ": line " + std::to_string(line_no) + ": proportion must be a number in [0, 1]");
      }
      const std::string name = line.substr(0, comma);
      csv << name << ',' << fixed(*p, 3) << '\n';
      std::cout << name << std::string(name.size() < 14 ? 14 - name.size() : 1, ' ') << fixed(*p, 3) << "\n";
    }
    write_text(out_path(g, "proportions.csv"), csv.str());
    outputs.push_back("proportions.csv");
  }
  if (!a.run_dir.empty()) {
    const auto m = read_json_file((fs::path(a.run_dir) / "run.json").string());
    std::cout << m.dump(2) << "\n";
  }
  return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairdiff: embedding bias metrics, alignment audits and diffusion simulations"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed (overrides the config)")->each([&](const std::string&) { g.seed_set = true; });
  app.add_option("--threads", g.threads, "Worker thread cap (0 = all cores)");
  app.add_option("--output-dir", g.output_dir, "Directory for outputs and run.json")->capture_default_str();
  app.add_option("--config", g.config_path, "JSON config overriding the defaults");

  BiasArgs bias;
  auto* cb = app.add_subcommand("bias", "Text-text bias table, closeness and ratio regression");
  cb->add_option("--store", bias.store, "Prompt store (fairdiff-store v1 or word2vec text)")->required();
  cb->add_option("--bases", bias.bases, "Base prompts, one table row each");
  cb->add_option("--attributes", bias.attributes, "Attribute pair; delta is first minus second")->capture_default_str();
  cb->add_option("--sort", bias.sort, "Row order by delta")->check(CLI::IsMember({"desc", "asc", "none"}))->capture_default_str();
  cb->add_option("--ratio", bias.ratio_csv, "CSV profession,ratio,proportion_male; empty ratios are computed");
  cb->add_option("--epsilon", bias.epsilon, "Also write epsilon-closeness per base and attribute")->check(CLI::NonNegativeNumber);
  cb->add_flag("--token-mode", bias.token_mode, "Compare attribute tokens directly (word stores)");
  cb->add_flag("--normalize-word2vec", bias.normalize_word2vec, "L2-normalize word2vec rows on load");

  AuditArgs audit;
  auto* ca = app.add_subcommand("audit", "Multiaccuracy / multicalibration audit with scoring sweep");
  ca->add_option("--input", audit.input, "Audit input JSON")->required();
  ca->add_option("--mode", audit.mode, "Audit(s) to run")
      ->check(CLI::IsMember({"multiaccuracy", "multicalibration", "both"}))
      ->capture_default_str();
  ca->add_option("--alpha", audit.alpha, "Override alpha from the input");
  ca->add_option("--lambda", audit.lambda, "Multicalibration bin width (default 0.1)");
  ca->add_option("--min-bin-count", audit.min_bin_count, "Smallest bin that counts toward pass/fail (default 5)");
  ca->add_flag("--clipscore-compat", audit.clipscore_compat, "Score with max(cos, 0) instead of (cos + 1)/2");
  ca->add_option("--tolerate-mean-gap", audit.tolerate_mean_gap, "Allowed spread of subset true means; widens the bound");
  ca->add_option("--sweep-step", audit.sweep_step, "Step of the first-subset proportion sweep (default 0.1)");
  ca->add_option("--ball-radius", audit.ball_radius, "Image ball radius for the text-text condition (default 0.01)");

  SimArgs sim;
  auto* cs = app.add_subcommand("simulate", "Diffusion simulator experiments");
  cs->add_option("--model", sim.model, "Model file (JSON)");
  cs->add_option("--experiment", sim.experiment, "Experiment to run")
      ->required()
      ->check(CLI::IsMember({"girsanov", "theorem41", "balance", "tweedie", "sample", "lipschitz"}));
  cs->add_option("--pairs", sim.pairs, "Random prompt pairs for girsanov (default 20)");
  cs->add_option("--epsilon", sim.epsilon, "Epsilon for theorem41 (default 0.05)");
  cs->add_option("--v", sim.v, "Balance thresholds, one per attribute");
  cs->add_option("--store", sim.store, "Prompt store (overrides the model file)");
  cs->add_option("--base", sim.base, "Base prompt key (overrides the model file)");
  cs->add_option("--attributes", sim.attributes, "Attributes (overrides the model file)");
  cs->add_option("--horizon", sim.horizon, "SDE horizon T (default 5)");
  cs->add_option("--steps", sim.steps, "Euler-Maruyama steps (default 400)");
  cs->add_option("--paths", sim.paths, "Sample paths (default 5000)");
  cs->add_option("--probes", sim.probes, "Lipschitz probes (default 10000)");
  cs->add_option("--sigma", sim.sigma, "Noise level for tweedie (default 0.8)");
  cs->add_option("--trials", sim.trials, "Grid points for tweedie (default 50)");
  cs->add_option("--prompt", sim.prompt, "Prompt embedding y for sample / tweedie");
  cs->add_option("--tolerance", sim.tolerance, "Pass threshold for the tweedie deviation")->capture_default_str();

  ReportArgs rep;
  auto* cr = app.add_subcommand("report", "Defaults file, proportion tables and run summaries");
  cr->add_flag("--write-defaults", rep.write_defaults, "Write default_config.json to the output directory");
  cr->add_option("--proportions", rep.proportions, "CSV generation,proportion to format");
  cr->add_option("--run", rep.run_dir, "Print the manifest of a previous run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  const auto start = std::chrono::steady_clock::now();
  RunManifest manifest;
  manifest.tool_version = kToolVersion;
  Json outputs = Json::array();
  int code = kExitPass;
  Config cfg;
  bool manifest_ok = false;
  try {
    if (!g.config_path.empty()) {
      cfg = load_config(g.config_path);
      manifest.inputs.push_back(g.config_path);
    }
    if (g.seed_set) cfg.sde.seed = g.seed;
    if (g.threads) cfg.sde.threads = g.threads;
    fs::create_directories(g.output_dir);
    manifest_ok = true;

    if (cb->parsed()) {
      manifest.subcommand = "bias";
      manifest.inputs.push_back(bias.store);
      if (!bias.ratio_csv.empty()) manifest.inputs.push_back(bias.ratio_csv);
      code = run_bias(bias, g, outputs);
    } else if (ca->parsed()) {
      manifest.subcommand = "audit";
      manifest.inputs.push_back(audit.input);
      if (audit.lambda) cfg.lambda = *audit.lambda;
      if (audit.min_bin_count) cfg.min_bin_count = *audit.min_bin_count;
      if (audit.sweep_step) cfg.sweep_step = *audit.sweep_step;
      if (audit.ball_radius) cfg.ball_radius = *audit.ball_radius;
      code = run_audit(audit, cfg, g, outputs);
    } else if (cs->parsed()) {
      manifest.subcommand = "simulate";
      code = run_simulate(sim, cfg, g, outputs, manifest.inputs);
    } else if (cr->parsed()) {
      manifest.subcommand = "report";
      if (!rep.proportions.empty()) manifest.inputs.push_back(rep.proportions);
      code = run_report(rep, cfg, g, outputs);
    }
  } catch (const HypothesisError& e) {
    std::cerr << "hypotheses not met: " << e.what() << "\n";
    code = kExitHypotheses;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    code = kExitInput;
  } catch (const Json::exception& e) {
    std::cerr << "input error: " << e.what() << "\n";
    code = kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = kExitFail;
  }

  if (manifest_ok) {
    manifest.config_hash = config_hash(cfg);
    manifest.seed = cfg.sde.seed;
    manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    Json m = to_json(manifest);
    m["outputs"] = outputs;
    m["exit_code"] = code;
    try {
      write_json(out_path(g, "run.json"), m);
    } catch (const std::exception& e) {
      std::cerr << "warning: " << e.what() << "\n";
    }
  }
  return code;
}
