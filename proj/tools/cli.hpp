#pragma once

// Command-line surface. cli_main is separate from main() so tests can drive
// it with captured streams.
//
// Exit codes: 0 success, 1 failed self-check (report --check) or internal
// error, 2 invalid arguments, 3 guard or convergence failure.

#include "sandtree/sandtree.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace sandtree::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kBadArgs = 2, kGuard = 3 };

struct Globals {
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "csv";
  std::optional<std::size_t> guard;
};

// Raised for malformed option values that CLI11 cannot catch by itself.
struct BadArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline std::string read_file(const std::string& path) {
  if (path == "-") {
    std::ostringstream os;
    os << std::cin.rdbuf();
    return os.str();
  }
  std::ifstream in(path);
  if (!in) throw BadArgument("cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline TreeTopology load_tree(const std::string& path) { return deserialize(read_file(path)); }

inline std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(text);
  while (std::getline(is, cur, sep)) {
    if (!cur.empty()) parts.push_back(cur);
  }
  return parts;
}

inline double to_number(const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw BadArgument("not a number: " + s);
  }
  if (used != s.size()) throw BadArgument("not a number: " + s);
  return v;
}

inline std::vector<double> number_list(const std::string& text) {
  std::vector<double> xs;
  for (const auto& s : split(text, ',')) xs.push_back(to_number(s));
  if (xs.empty()) throw BadArgument("empty list");
  return xs;
}

/// point:x | atoms:x:w,x:w,... | fixed:p | file:measure.csv
inline DiscreteMeasure parse_distribution(const std::string& spec, std::size_t cap) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw BadArgument("distribution needs a kind prefix: " + spec);
  const std::string kind = spec.substr(0, colon);
  const std::string rest = spec.substr(colon + 1);
  if (kind == "point") return DiscreteMeasure::dirac(to_number(rest));
  if (kind == "fixed") return fixed_point_measure(to_number(rest), cap).measure;
  if (kind == "file") return DiscreteMeasure::from_csv(read_file(rest));
  if (kind == "atoms") {
    std::vector<std::pair<double, double>> atoms;
    for (const auto& a : split(rest, ',')) {
      const auto parts = split(a, ':');
      if (parts.size() != 2) throw BadArgument("atom must be x:w, got " + a);
      atoms.emplace_back(to_number(parts[0]), to_number(parts[1]));
    }
    return DiscreteMeasure::from_atoms(atoms);
  }
  throw BadArgument("unknown distribution kind: " + kind);
}

// CSV table as JSON rows; cells that read fully as numbers become numbers.
inline nlohmann::ordered_json table_json(const CsvTable& t) {
  const auto lines = split(t.csv(), '\n');
  const auto header = split(lines.at(0), ',');
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(lines[i]);
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    cells.resize(header.size());
    nlohmann::ordered_json row;
    for (std::size_t k = 0; k < header.size(); ++k) {
      const std::string& c = cells[k];
      const bool integral = c.size() < 19 && c.find_first_of("0123456789") != std::string::npos &&
                            c.find_first_not_of("-0123456789") == std::string::npos && c.rfind('-') <= 0;
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (integral) {
        row[header[k]] = std::stoll(c);
      } else if (!c.empty() && end == c.c_str() + c.size() && std::isfinite(v)) {
        row[header[k]] = v;
      } else {
        row[header[k]] = c;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(int argc, const char* const* argv);

 private:
  void emit(const std::string& text) {
    if (g_.out.empty()) {
      out_ << text;
      return;
    }
    std::ofstream f(g_.out, std::ios::binary);
    if (!f) throw BadArgument("cannot write " + g_.out);
    f << text;
  }

  // Tables with optional "# " comment lines in front (csv only).
  void emit_tables(const std::vector<CsvTable>& tables, const std::vector<std::string>& comments = {}) {
    if (g_.format == "json") {
      nlohmann::ordered_json j;
      for (const auto& t : tables) j[t.name()] = table_json(t);
      if (!comments.empty()) j["notes"] = comments;
      emit(j.dump(2) + "\n");
      return;
    }
    std::ostringstream os;
    for (const auto& c : comments) os << "# " << c << "\n";
    for (std::size_t i = 0; i < tables.size(); ++i) {
      if (tables.size() > 1) os << (i ? "\n" : "") << "# table: " << tables[i].name() << "\n";
      os << tables[i].csv();
    }
    emit(os.str());
  }

  void emit_report(const ExperimentReport& r) { emit(g_.format == "json" ? r.to_json_text() : r.to_csv_text()); }

  std::size_t guard_or(std::size_t fallback) const { return g_.guard.value_or(fallback); }

  void setup_tree(CLI::App& app);
  void setup_sandpile(CLI::App& app);
  void setup_ratio(CLI::App& app);
  void setup_transfer(CLI::App& app);
  void setup_animals(CLI::App& app);
  void setup_experiment(CLI::App& app);
  void setup_report(CLI::App& app);

  std::ostream& out_;
  std::ostream& err_;
  Globals g_;
  std::function<int()> action_;
};

// ---------------------------------------------------------------------------
// tree

inline void Runner::setup_tree(CLI::App& app) {
  auto* tree = app.add_subcommand("tree", "Sample, build and enumerate trees");
  tree->require_subcommand(1);

  struct SampleOpts {
    double p = 0.5;
    int max_gen = 10;
    bool binomial = false;
  };
  auto so = std::make_shared<SampleOpts>();
  auto* sample = tree->add_subcommand("sample", "Random binary GW(p) tree as JSON");
  sample->add_option("--p", so->p, "Branching probability")->required()->check(CLI::Range(0.0, 1.0));
  sample->add_option("--max-gen", so->max_gen, "Generations")->check(CLI::NonNegativeNumber);
  sample->add_flag("--binomial", so->binomial, "Children 2/1/0 with probabilities p^2, 2p(1-p), (1-p)^2");
  sample->callback([this, so] {
    action_ = [this, so] {
      RandomSource rng(g_.seed);
      const TreeTopology t =
          so->binomial ? sample_binomial(so->p, so->max_gen, rng) : sample_gw_binary(so->p, so->max_gen, rng);
      emit(serialize(t) + "\n");
      return kOk;
    };
  });

  struct BuildOpts {
    std::string family;
    int n = 1;
    int tail = 0;
    std::string attachment;
  };
  auto bo = std::make_shared<BuildOpts>();
  auto* build = tree->add_subcommand("build", "Deterministic tree families as JSON");
  build->add_option("--family", bo->family, "full | single | backbone | perturbed")
      ->required()
      ->check(CLI::IsMember({"full", "single", "backbone", "perturbed"}));
  build->add_option("--n", bo->n, "Depth, length or perturbation level")->check(CLI::NonNegativeNumber);
  build->add_option("--tail", bo->tail, "Branch length below the perturbation")->check(CLI::NonNegativeNumber);
  build->add_option("--attachment", bo->attachment, "Tree JSON hung off each backbone vertex");
  build->callback([this, bo] {
    action_ = [this, bo] {
      const TreeTopology att = bo->attachment.empty() ? TreeTopology::point() : load_tree(bo->attachment);
      DeterministicFamily fam;
      if (bo->family == "full") fam = FullFamily{bo->n};
      if (bo->family == "single") fam = SingleBranchFamily{bo->n};
      if (bo->family == "backbone") fam = BackboneFamily{att, bo->n};
      if (bo->family == "perturbed") fam = PerturbedBranchFamily{att, bo->n, bo->tail};
      emit(serialize(build_deterministic(fam)) + "\n");
      return kOk;
    };
  });

  auto max_vertices = std::make_shared<std::size_t>(5);
  auto* shapes = tree->add_subcommand("shapes", "All rooted binary shapes up to a size");
  shapes->add_option("--max-vertices", *max_vertices, "Largest shape")->required();
  shapes->callback([this, max_vertices] {
    action_ = [this, max_vertices] {
      const auto all = enumerate_rooted_shapes(*max_vertices, guard_or(kShapeGuard));
      if (g_.format == "json") {
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const auto& t : all) j.push_back(tree_to_json(t));
        emit(j.dump() + "\n");
        return kOk;
      }
      CsvTable tab("shapes", {"vertices", "code"});
      for (const auto& t : all) tab.add({t.size(), canonical_code(t)});
      emit_tables({tab});
      return kOk;
    };
  });
}

// ---------------------------------------------------------------------------
// sandpile

inline HeightConfig parse_heights(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw BadArgument(std::string("heights must be a JSON array: ") + e.what());
  }
  if (!j.is_array()) throw BadArgument("heights must be a JSON array");
  HeightConfig eta;
  for (const auto& h : j) {
    if (!h.is_number_integer()) throw BadArgument("heights must be integers");
    eta.heights.push_back(h.get<std::int64_t>());
  }
  return eta;
}

inline void Runner::setup_sandpile(CLI::App& app) {
  auto* sp = app.add_subcommand("sandpile", "Sandpile dynamics on a tree");
  sp->require_subcommand(1);

  struct StabOpts {
    std::string tree;
    std::string heights;
    std::optional<NodeId> add;
  };
  auto st = std::make_shared<StabOpts>();
  auto* stab = sp->add_subcommand("stabilize", "Topple a configuration until stable");
  stab->add_option("--tree", st->tree, "Tree JSON file")->required();
  stab->add_option("--heights", st->heights, "JSON array of heights aligned with node ids")->required();
  stab->add_option("--add", st->add, "Add one grain here first (configuration must be stable)");
  stab->callback([this, st] {
    action_ = [this, st] {
      const TreeTopology t = load_tree(st->tree);
      const HeightConfig eta = parse_heights(st->heights);
      const StabilizationOutcome r = st->add ? add_grain(t, eta, *st->add) : stabilize(t, eta);
      CsvTable tab("stabilized", {"node", "height", "topplings"});
      for (std::size_t v = 0; v < t.size(); ++v) tab.add({v, static_cast<long>(r.final[v]), static_cast<long>(r.topple_counts[v])});
      std::string av;
      for (NodeId v : r.avalanche) av += (av.empty() ? "" : " ") + std::to_string(v);
      emit_tables({tab}, {"avalanche: " + (av.empty() ? std::string("(none)") : av)});
      return kOk;
    };
  });

  struct RecOpts {
    std::string tree;
    bool list = false;
  };
  auto ro = std::make_shared<RecOpts>();
  auto* rec = sp->add_subcommand("recurrent", "Count (and list) recurrent configurations");
  rec->add_option("--tree", ro->tree, "Tree JSON file")->required();
  rec->add_flag("--list", ro->list, "Enumerate the configurations (size guard applies)");
  rec->callback([this, ro] {
    action_ = [this, ro] {
      const TreeTopology t = load_tree(ro->tree);
      const BigInt by_dp = count_allowed(t);
      const BigInt det = toppling_determinant(t);
      CsvTable summary("recurrent", {"vertices", "count", "toppling_determinant"});
      summary.add({t.size(), by_dp, det});
      std::vector<CsvTable> tables{summary};
      if (ro->list) {
        const RecurrentSet set = enumerate_recurrent(t, guard_or(kEnumerationGuard));
        CsvTable configs("configurations", {"heights"});
        for (const auto& eta : set.configs) {
          std::string h;
          for (auto x : eta.heights) h += (h.empty() ? "" : " ") + std::to_string(x);
          configs.add({h});
        }
        tables.push_back(configs);
      }
      emit_tables(tables);
      return kOk;
    };
  });

  struct AvOpts {
    std::string tree;
    NodeId origin = 0;
    bool clusters = false;
  };
  auto ao = std::make_shared<AvOpts>();
  auto* av = sp->add_subcommand("avalanche", "Exact avalanche size law at a vertex");
  av->add_option("--tree", ao->tree, "Tree JSON file")->required();
  av->add_option("--origin", ao->origin, "Vertex receiving the grain");
  av->add_flag("--clusters", ao->clusters, "Also list the law per toppled set (enumeration, size guard applies)");
  av->callback([this, ao] {
    action_ = [this, ao] {
      const TreeTopology t = load_tree(ao->tree);
      const AvalancheSizeLaw law = avalanche_size_law(t, ao->origin, t.size());
      CsvTable sizes("size_law", {"vertices", "edges", "probability", "probability_float"});
      for (std::size_t k = 0; k < law.probability.size(); ++k) {
        sizes.add({k, k == 0 ? std::string("") : std::to_string(k - 1), law.probability[k], to_double(law.probability[k])});
      }
      std::vector<CsvTable> tables{sizes};
      if (ao->clusters) {
        const AvalancheLaw full = exact_avalanche_law(t, ao->origin, guard_or(kEnumerationGuard));
        CsvTable cl("cluster_law", {"cluster", "probability", "neg_log_lambda_plus"});
        for (const auto& [c, q] : full.by_cluster) {
          std::string name;
          for (NodeId v : c) name += (name.empty() ? "" : " ") + std::to_string(v);
          cl.add({name, q, -eigen_2x2(cluster_matrix(t, c, ao->origin)).log_lambda_plus});
        }
        tables.push_back(cl);
      }
      emit_tables(tables, {"vertices = toppled vertices (0: no toppling), edges = vertices - 1"});
      return kOk;
    };
  });
}

// ---------------------------------------------------------------------------
// ratio

inline void Runner::setup_ratio(CLI::App& app) {
  auto* ratio = app.add_subcommand("ratio", "Characteristic ratio W/S");
  ratio->require_subcommand(1);

  auto tree_path = std::make_shared<std::string>();
  auto* exact = ratio->add_subcommand("exact", "x(T) of a tree, exact when small enough");
  exact->add_option("--tree", *tree_path, "Tree JSON file")->required();
  exact->callback([this, tree_path] {
    action_ = [this, tree_path] {
      const TreeTopology t = load_tree(*tree_path);
      const auto q = x_exact(t);
      const std::string text = q ? to_fraction_string(*q) : fmt17(x_recursive(t));
      if (g_.format == "json") {
        emit(nlohmann::ordered_json{{"x", text}, {"x_float", x_recursive(t)}, {"exact", q.has_value()}}.dump() + "\n");
      } else {
        emit(text + "\n");
      }
      return kOk;
    };
  });

  struct DistOpts {
    double p = 0.5;
    std::size_t cap = kDefaultSupportCap;
    double tol = 1e-10;
    std::size_t max_iter = 500;
    bool branching = false;
  };
  auto d = std::make_shared<DistOpts>();
  auto* dist = ratio->add_subcommand("dist", "Fixed-point ratio distribution (support,weight)");
  dist->add_option("--p", d->p, "Branching probability")->required()->check(CLI::Range(0.0, 1.0));
  dist->add_option("--cap", d->cap, "Support cap")->check(CLI::PositiveNumber);
  dist->add_option("--tol", d->tol, "W1 tolerance")->check(CLI::PositiveNumber);
  dist->add_option("--max-iter", d->max_iter, "Iteration cap")->check(CLI::PositiveNumber);
  dist->add_flag("--branching", d->branching, "One-generation recursion instead of the two-generation operator");
  dist->callback([this, d] {
    action_ = [this, d] {
      const FixedPointResult r = d->branching ? branching_fixed_point(d->p, d->cap, d->tol, d->max_iter)
                                              : fixed_point_measure(d->p, d->cap, d->tol, d->max_iter);
      if (g_.format == "json") {
        nlohmann::ordered_json j{{"iterations", r.iterations},
                                 {"final_w1", r.final_w1},
                                 {"compression_budget", r.compression_budget},
                                 {"distance_bound", r.distance_bound},
                                 {"mean", r.measure.mean()},
                                 {"support", r.measure.support()},
                                 {"weights", r.measure.weights()}};
        emit(j.dump(2) + "\n");
      } else {
        std::ostringstream os;
        os << "# iterations " << r.iterations << ", final_w1 " << fmt17(r.final_w1) << ", compression_budget "
           << fmt17(r.compression_budget) << "\n"
           << r.measure.to_csv();
        emit(os.str());
      }
      return kOk;
    };
  });

  struct DirectOpts {
    double p = 0.5;
    int max_gen = 20;
    std::size_t samples = 10000;
  };
  auto dd = std::make_shared<DirectOpts>();
  auto* direct = ratio->add_subcommand("direct", "Empirical ratio law from sampled GW trees");
  direct->add_option("--p", dd->p, "Branching probability")->required()->check(CLI::Range(0.0, 1.0));
  direct->add_option("--max-gen", dd->max_gen, "Generations")->check(CLI::NonNegativeNumber);
  direct->add_option("--samples", dd->samples, "Trees")->check(CLI::PositiveNumber);
  direct->callback([this, dd] {
    action_ = [this, dd] {
      const DiscreteMeasure m = sample_ratio_direct(dd->p, dd->max_gen, dd->samples, RandomSource(g_.seed));
      if (g_.format == "json") {
        emit(nlohmann::ordered_json{{"mean", m.mean()}, {"support", m.support()}, {"weights", m.weights()}}.dump(2) +
             "\n");
      } else {
        emit(m.to_csv());
      }
      return kOk;
    };
  });
}

// ---------------------------------------------------------------------------
// transfer

inline void Runner::setup_transfer(CLI::App& app) {
  auto* tr = app.add_subcommand("transfer", "Transfer-matrix products");
  tr->require_subcommand(1);

  auto xs = std::make_shared<std::string>();
  auto* eig = tr->add_subcommand("eigen", "Eigenvalues of the product of M(x_i)");
  eig->add_option("--xs", *xs, "Comma-separated ratios in [1/2, 1] (or 0)")->required();
  eig->callback([this, xs] {
    action_ = [this, xs] {
      const auto values = number_list(*xs);
      const ScaledMatrix2 m = product_log_scaled(values);
      const EigenPair e = eigen_2x2(m);
      CsvTable tab("eigen", {"n", "log_lambda_plus", "log_lambda_minus", "lambda_plus", "lambda_minus", "log_trace",
                             "log_trace_lower_bound"});
      const bool in_range = std::all_of(values.begin(), values.end(), [](double x) { return x >= 0.5; });
      tab.add({values.size(), e.log_lambda_plus, e.log_lambda_minus, std::exp(e.log_lambda_plus),
               std::exp(e.log_lambda_minus), m.log_trace(),
               in_range ? CsvTable::Cell(trace_lower_bound(values)) : CsvTable::Cell("")});
      emit_tables({tab});
      return kOk;
    };
  });

  struct LyapOpts {
    std::string dist;
    std::size_t n = 100;
    std::size_t samples = 100;
    std::size_t cap = 512;
  };
  auto lo = std::make_shared<LyapOpts>();
  auto* lyap = tr->add_subcommand("lyapunov", "Lyapunov exponents of i.i.d. products");
  lyap->add_option("--dist", lo->dist, "point:x | atoms:x:w,... | fixed:p | file:measure.csv")->required();
  lyap->add_option("--n", lo->n, "Product length")->check(CLI::PositiveNumber);
  lyap->add_option("--samples", lo->samples, "Independent products")->check(CLI::Range(2, 100000000));
  lyap->add_option("--cap", lo->cap, "Support cap for fixed:p")->check(CLI::PositiveNumber);
  lyap->callback([this, lo] {
    action_ = [this, lo] {
      const DiscreteMeasure mu = parse_distribution(lo->dist, lo->cap);
      const LyapunovEstimate e = lyapunov_estimate(mu, lo->n, lo->samples, RandomSource(g_.seed));
      const AnnealedBound ab = annealed_bound(mu);
      CsvTable tab("lyapunov", {"n", "samples", "Yn_mean", "Yn_std", "Lplus", "Lminus", "det_check_err"});
      tab.add({e.n, e.samples, e.Yn_mean, e.Yn_std, e.L_plus, e.L_minus, e.det_check_err});
      CsvTable bound("annealed", {"gamma", "log_Lambda_ratio", "Lambda_ratio", "two_E_log_1px"});
      bound.add({ab.gamma, ab.log_ratio, ab.ratio, e.two_E_log});
      emit_tables({tab, bound});
      return kOk;
    };
  });

  struct ConcOpts {
    std::string dist;
    std::string ns = "32,64,128,256,512,1024";
    std::size_t samples = 200;
    std::size_t cap = 512;
  };
  auto co = std::make_shared<ConcOpts>();
  auto* conc = tr->add_subcommand("concentration", "Spread of Y_n across n");
  conc->add_option("--dist", co->dist, "point:x | atoms:x:w,... | fixed:p | file:measure.csv")->required();
  conc->add_option("--ns", co->ns, "Comma-separated increasing n values");
  conc->add_option("--samples", co->samples, "Products per n")->check(CLI::Range(2, 100000000));
  conc->add_option("--cap", co->cap, "Support cap for fixed:p")->check(CLI::PositiveNumber);
  conc->callback([this, co] {
    action_ = [this, co] {
      const DiscreteMeasure mu = parse_distribution(co->dist, co->cap);
      std::vector<std::size_t> grid;
      for (double v : number_list(co->ns)) {
        if (v < 1 || v != std::floor(v)) throw BadArgument("n values must be positive integers");
        grid.push_back(static_cast<std::size_t>(v));
      }
      const auto rows = concentration_stats(mu, grid, co->samples, RandomSource(g_.seed));
      CsvTable tab("concentration", {"n", "samples", "Yn_mean", "Yn_std", "Lplus", "Lminus", "det_check_err"});
      for (const auto& r : rows) tab.add({r.n, r.samples, r.Yn_mean, r.Yn_std, r.L_plus, r.L_minus, r.det_check_err});
      emit_tables({tab});
      return kOk;
    };
  });
}

// ---------------------------------------------------------------------------
// animals

inline void Runner::setup_animals(CLI::App& app) {
  auto* an = app.add_subcommand("animals", "Expected cluster counts on GW(p) trees");
  an->require_subcommand(1);

  struct TableOpts {
    std::string p;
    std::size_t nmax = 10;
    std::size_t brute_samples = 0;
    bool exact = false;
  };
  auto to = std::make_shared<TableOpts>();
  auto* table = an->add_subcommand("table", "a_n by recursion, exact sum and hypergeometric sum");
  table->add_option("--p", to->p, "Probability, decimal or num/den (read exactly)")->required();
  table->add_option("--nmax", to->nmax, "Largest n")->check(CLI::Range(0, 2000));
  table->add_option("--brute-samples", to->brute_samples, "Monte-Carlo trees per row (0: skip)");
  table->add_flag("--exact", to->exact, "Print exact fractions instead of floats");
  table->callback([this, to] {
    action_ = [this, to] {
      Rational p;
      try {
        p = parse_rational(to->p);
      } catch (const std::exception&) {
        throw BadArgument("bad probability: " + to->p);
      }
      if (p < 0 || p > 1) throw BadArgument("probability must lie in [0, 1]");
      const double pd = to_double(p);
      const auto rec = a_recursion(p, to->nmax).values;
      const std::size_t brute_guard = guard_or(kBruteClusterGuard);
      const RandomSource rng(g_.seed);
      auto cell = [&](const Rational& q) { return to->exact ? CsvTable::Cell(q) : CsvTable::Cell(to_double(q)); };
      CsvTable tab("animals", {"n", "a_recursion", "a_exact_sum", "hyper", "brute_mean", "brute_stderr", "largen_bound"});
      for (std::size_t n = 0; n <= to->nmax; ++n) {
        CsvTable::Cell bm(""), bs("");
        if (to->brute_samples > 0 && n >= 1 && n - 1 <= brute_guard) {
          const BruteEstimate b = brute_expected(pd, n - 1, std::max<std::size_t>(2, to->brute_samples),
                                                 rng.substream(n), brute_guard);
          bm = CsvTable::Cell(b.mean);
          bs = CsvTable::Cell(b.std_error);
        }
        const CsvTable::Cell bound = n >= 2 ? CsvTable::Cell(animal_bounds(pd, n - 1).largen) : CsvTable::Cell("");
        tab.add({n, cell(rec[n]), cell(a_exact_sum(p, n)), cell(a_hypergeometric(p, n)), bm, bs, bound});
      }
      emit_tables({tab}, {"a_n = expected number of clusters with n vertices containing the root = E A_(n-1), "
                          "clusters with n-1 edges; brute columns count n-1 edges; largen_bound uses C = 1"});
      return kOk;
    };
  });

  auto* th = an->add_subcommand("threshold", "Critical probabilities for exponential avalanche decay");
  th->callback([this] {
    action_ = [this] {
      const Thresholds t = threshold_solve();
      CsvTable tab("thresholds", {"p_star", "p_binomial_star", "residual"});
      tab.add({t.p_star, t.p_binomial_star, t.residual});
      emit_tables({tab});
      return kOk;
    };
  });
}

// ---------------------------------------------------------------------------
// experiments and reports

inline void Runner::setup_experiment(CLI::App& app) {
  auto* ex = app.add_subcommand("experiment", "Run an experiment and emit its report");
  ex->require_subcommand(1);

  auto cp = std::make_shared<CovarianceParams>();
  auto* cov = ex->add_subcommand("cov", "Covariance decay");
  cov->add_option("--p", cp->p, "Branching probability")->check(CLI::Range(0.0, 1.0));
  cov->add_option("--n-max", cp->n_max, "Largest distance")->check(CLI::Range(2, 14));
  cov->add_option("--trees", cp->tree_budget, "Sampled trees");
  cov->add_option("--shape-max", cp->shape_max, "Enumerate shapes up to this size");
  cov->add_option("--depth-margin", cp->depth_margin, "Generations below the spine")->check(CLI::NonNegativeNumber);
  cov->add_option("--spine-samples", cp->spine_samples, "Spine trees per distance")->check(CLI::Range(2, 100000000));
  cov->add_option("--cap", cp->support_cap, "Support cap of the fixed-point measure")->check(CLI::PositiveNumber);
  cov->callback([this, cp] {
    action_ = [this, cp] {
      CovarianceParams p = *cp;
      p.seed = g_.seed;
      p.guard = guard_or(kShapeGuard);
      emit_report(run_covariance_experiment(p));
      return kOk;
    };
  });

  auto ap = std::make_shared<AvalancheParams>();
  auto* av = ex->add_subcommand("avalanche", "Avalanche sizes");
  av->add_option("--p", ap->p, "Branching probability")->check(CLI::Range(0.0, 1.0));
  av->add_option("--size-min", ap->size_min, "Fit window start (edges)")->check(CLI::NonNegativeNumber);
  av->add_option("--size-max", ap->size_max, "Fit window end (edges)")->check(CLI::NonNegativeNumber);
  av->add_option("--trees", ap->tree_budget, "Sampled trees")->check(CLI::Range(2, 100000000));
  av->add_option("--max-gen", ap->max_gen, "Depth cutoff of sampled trees")->check(CLI::NonNegativeNumber);
  av->add_option("--full-depth", ap->full_depth, "Regression tree depth")->check(CLI::Range(0, 6));
  av->add_option("--clusters", ap->cluster_budget, "Cluster budget of the regression")->check(CLI::PositiveNumber);
  av->callback([this, ap] {
    action_ = [this, ap] {
      AvalancheParams p = *ap;
      p.seed = g_.seed;
      emit_report(run_avalanche_experiment(p));
      return kOk;
    };
  });
}

inline ExperimentReport rerun(const nlohmann::json& report) {
  const std::string name = report.at("experiment").get<std::string>();
  const auto& params = report.at("params");
  if (name == "covariance") return run_covariance_experiment(covariance_params_from_json(params));
  if (name == "avalanche") return run_avalanche_experiment(avalanche_params_from_json(params));
  throw BadArgument("unknown experiment: " + name);
}

inline void Runner::setup_report(CLI::App& app) {
  struct ReportOpts {
    std::string from;
    bool check = false;
  };
  auto ro = std::make_shared<ReportOpts>();
  auto* rep = app.add_subcommand("report", "Re-run an experiment from a JSON report");
  rep->add_option("--from", ro->from, "JSON report written by `experiment`")->required();
  rep->add_flag("--check", ro->check, "Compare the regenerated JSON byte for byte; exit 1 on mismatch");
  rep->callback([this, ro] {
    action_ = [this, ro] {
      const std::string text = read_file(ro->from);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(text);
      } catch (const nlohmann::json::exception& e) {
        throw BadArgument(std::string("report is not JSON: ") + e.what());
      }
      const ExperimentReport r = rerun(j);
      if (ro->check) {
        const bool same = r.to_json_text() == text;
        emit(same ? "identical\n" : "differs\n");
        return same ? kOk : kCheckFailed;
      }
      emit_report(r);
      return kOk;
    };
  });
}

inline int Runner::run(int argc, const char* const* argv) {
  CLI::App app{"Sandpiles on random binary trees: exact counts, ratios, transfer matrices, experiments", "sandtree"};
  app.fallthrough();
  app.require_subcommand(1);
  app.add_option("--seed", g_.seed, "Random seed");
  app.add_option("--out", g_.out, "Write output to this file instead of stdout");
  app.add_option("--format", g_.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--guard", g_.guard, "Override enumeration size guards")->check(CLI::PositiveNumber);
  setup_tree(app);
  setup_sandpile(app);
  setup_ratio(app);
  setup_transfer(app);
  setup_animals(app);
  setup_experiment(app);
  setup_report(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out_ << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out_ << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err_ << "error: " << e.what() << "\n\n" << app.help();
    return kBadArgs;
  }
  if (!action_) {
    err_ << app.help();
    return kBadArgs;
  }
  try {
    return action_();
  } catch (const GuardError& e) {
    err_ << "guard: " << e.what() << "\n";
    return kGuard;
  } catch (const ConvergenceError& e) {
    err_ << "no convergence: " << e.what() << "\n";
    return kGuard;
  } catch (const ParseError& e) {
    err_ << "error: " << e.what() << "\n";
    return kBadArgs;
  } catch (const nlohmann::json::exception& e) {
    err_ << "error: " << e.what() << "\n";
    return kBadArgs;
  } catch (const NumericalDomainError& e) {
    err_ << "error: " << e.what() << "\n";
    return kBadArgs;
  } catch (const std::invalid_argument& e) {
    err_ << "error: " << e.what() << "\n";
    return kBadArgs;
  } catch (const std::out_of_range& e) {
    err_ << "error: " << e.what() << "\n";
    return kBadArgs;
  } catch (const std::exception& e) {
    err_ << "internal error: " << e.what() << "\n";
    return kCheckFailed;
  }
}

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Runner r(out, err);
  return r.run(argc, argv);
}

}  // namespace sandtree::cli
