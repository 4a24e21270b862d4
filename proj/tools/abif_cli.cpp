// abif: generate data, fit and score models, and run the benchmark tables.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "abif/abif.hpp"

#ifndef ABIF_VERSION
#define ABIF_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw UsageError(msg);
}

/// The command line and version, written into every output so a run can
/// be replayed from its own output file.
struct Provenance {
  std::string command;
  std::vector<std::string> argv;
  json config;

  json to_json() const {
    return {{"version", ABIF_VERSION},
            {"command", command},
            {"argv", argv},
            {"config", config}};
  }

  void write_csv_header(std::ostream& out) const {
    out << "# abif " << ABIF_VERSION << '\n'
        << "# provenance: " << to_json().dump() << '\n';
  }
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(1) << '\n';
}

unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Loads a CSV; when the label column is absent and labels are optional,
/// the file is read unlabelled instead.
abif::Dataset load_data(const std::string& path, const std::string& label_column,
                        const std::string& positive, bool labels_required) {
  abif::CsvOptions opt{label_column, positive, ','};
  try {
    return abif::load_csv(path, opt);
  } catch (const abif::IngestionError& e) {
    const bool missing_label = e.row() == 0 && !label_column.empty() &&
                               e.column() == label_column;
    if (labels_required || !missing_label) throw;
  }
  opt.label_column.clear();
  return abif::load_csv(path, opt);
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string generator;
  std::size_t n_norm = 1000;
  std::size_t n_anom = 200;
  double noise = 0.1;
  std::uint64_t seed = 1;
  std::string out;
};

int run_generate(const GenerateArgs& a, const Provenance& prov) {
  require(a.n_norm + a.n_anom > 0, "--n-norm and --n-anom cannot both be 0");
  require(a.noise >= 0.0, "--noise must be >= 0");
  const abif::Dataset d = a.generator == "circle"
                              ? abif::gen_circle(a.n_norm, a.n_anom, a.noise, a.seed)
                              : abif::gen_normal(a.n_norm, a.n_anom, a.seed);
  auto out = open_out(a.out);
  prov.write_csv_header(out);
  abif::write_csv(out, d);
  std::cout << "wrote " << a.out << ": " << d.rows() << " rows, "
            << d.count_label(abif::kNormal) << " normal, "
            << d.count_label(abif::kAnomaly) << " anomalous\n";
  return 0;
}

// --------------------------------------------------------------------- fit

struct FitArgs {
  std::string data;
  std::string label_column = "label";
  std::string positive_label = "1";
  std::string mode = "abiforest";
  std::size_t trees = 150;
  std::size_t psi = 0;
  int height_limit = -1;
  double tau = 0.5;
  double epsilon = 0.5;
  double omega = 20.0;
  double lambda = 1e-3;
  std::uint64_t seed = 1;
  std::string label_source = "given";
  double solver_tol = 1e-6;
  int max_iters = 5000;
  unsigned threads = 1;
  std::string out;
};

void validate_fit(const FitArgs& a) {
  require(a.trees >= 1, "--trees must be >= 1");
  require(a.psi == 0 || a.psi >= 2, "--psi must be >= 2 (0 selects min(n, 256))");
  require(a.tau > 0.0 && a.tau < 1.0, "--tau must lie in (0, 1)");
  require(a.epsilon >= 0.0 && a.epsilon <= 1.0, "--epsilon must lie in [0, 1]");
  require(a.omega > 0.0, "--omega must be positive");
  require(a.lambda >= 0.0, "--lambda must be >= 0");
  require(a.solver_tol > 0.0, "--solver-tol must be positive");
  require(a.max_iters >= 1, "--max-iters must be >= 1");
}

int run_fit(const FitArgs& a, const Provenance& prov) {
  const abif::Mode mode = abif::mode_from_string(a.mode);
  const bool pseudo = a.label_source == "pseudo";
  const abif::Dataset data =
      load_data(a.data, a.label_column, a.positive_label,
                mode == abif::Mode::kABIForest && !pseudo);
  abif::ForestOptions fo;
  fo.trees = a.trees;
  fo.subsample = a.psi;
  fo.height_limit = a.height_limit;
  fo.seed = a.seed;
  fo.threads = a.threads;
  const abif::IsolationForest forest = abif::build_forest(data, fo);

  json model = {{"provenance", prov.to_json()},
                {"mode", a.mode},
                {"tau", a.tau},
                {"forest", abif::to_json(forest)}};
  if (mode == abif::Mode::kABIForest) {
    abif::FitConfig fc{a.epsilon, a.omega,      a.tau,
                       a.lambda,  a.solver_tol, a.max_iters,
                       pseudo ? abif::LabelSource::kPseudo : abif::LabelSource::kGiven};
    abif::FitResult fr;
    try {
      fr = abif::fit(forest, data, fc);
    } catch (const abif::ConvergenceError& e) {
      const std::string diag = a.out + ".diagnostics.json";
      write_json(diag, {{"provenance", prov.to_json()},
                        {"error", e.what()},
                        {"best_w", e.best_w()},
                        {"best_objective", e.best_objective()},
                        {"residual", e.residual()},
                        {"iterations", e.iterations()}});
      std::cerr << "error: " << e.what() << "; diagnostics written to " << diag << '\n';
      return kExitRuntime;
    }
    model["attention"] = abif::to_json(fr.model);
    model["training"] = {{"objective", fr.objective}, {"iterations", fr.iterations}};
    std::cout << "objective " << abif::format_double(fr.objective) << " after "
              << fr.iterations << " iterations\n";
  }
  write_json(a.out, model);
  std::cout << "wrote " << a.out << ": " << a.mode << ", T=" << forest.size()
            << ", psi=" << forest.psi << ", n=" << data.rows() << '\n';
  return 0;
}

// ------------------------------------------------------------------- score

struct ScoreArgs {
  std::string model;
  std::string data;
  std::string label_column = "label";
  std::string positive_label = "1";
  std::string out;
  std::size_t explain_top = 0;
};

int run_score(const ScoreArgs& a, const Provenance& prov) {
  json mj;
  {
    std::ifstream in(a.model);
    if (!in) throw std::runtime_error("cannot open model " + a.model);
    mj = json::parse(in);
  }
  const abif::IsolationForest forest = abif::forest_from_json(mj.at("forest"));
  abif::AttentionModel model;
  const bool attended = mj.contains("attention");
  if (attended) {
    model = abif::attention_from_json(mj.at("attention"), forest);
  } else {
    // Plain iForest is attention with full contamination by uniform weights.
    const double tau = mj.at("tau").get<double>();
    model = {1.0, 1.0, tau, abif::gamma_from_tau(tau, forest.c_psi),
             abif::uniform_weights(forest.size())};
  }
  require(a.explain_top <= forest.size(),
          "--explain-top must not exceed the tree count " +
              std::to_string(forest.size()));

  const abif::Dataset data =
      load_data(a.data, a.label_column, a.positive_label, false);
  abif::check_dims(forest.dims, data.dims());

  auto out = open_out(a.out);
  prov.write_csv_header(out);
  out << "row,score,label";
  if (data.labels) out << ",truth";
  for (std::size_t m = 1; m <= a.explain_top; ++m)
    out << ",tree_" << m << ",alpha_" << m << ",h_" << m;
  out << '\n';

  std::vector<int> pred(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto x = data.row(i);
    abif::ScoredInstance s;
    if (attended) {
      s = abif::abif_score(forest, model, x);
    } else {
      s.score = abif::iforest_score(forest, x);
      s.label = abif::classify(s.score, model.tau);
    }
    pred[i] = s.label;
    out << i << ',' << abif::format_double(s.score) << ',' << s.label;
    if (data.labels) out << ',' << (*data.labels)[i];
    if (a.explain_top > 0)
      for (const auto& t : abif::explain(forest, model, x, a.explain_top))
        out << ',' << t.tree << ',' << abif::format_double(t.alpha) << ','
            << abif::format_double(t.h);
    out << '\n';
  }
  std::cout << "wrote " << a.out << ": " << data.rows() << " rows\n";
  if (data.labels && data.count_label(abif::kAnomaly) > 0)
    std::cout << "F1 " << abif::format_double(abif::f1_score(pred, *data.labels))
              << '\n';
  return 0;
}

// --------------------------------------------------------------- benchmark

struct BenchArgs {
  std::string experiment;
  std::size_t reps = 100;
  std::uint64_t seed = 1;
  std::uint64_t data_seed = 42;
  unsigned threads = default_threads();
  std::string out_dir = ".";
  std::string data_dir;
};

const std::vector<std::string> kExperiments{
    "circle-table2", "circle-table3", "normal-table4", "normal-table5",
    "size-table6",   "real-table7",   "omega-curves",  "epsilon-curves"};

abif::Dataset circle_data(std::uint64_t seed) { return abif::gen_circle(1000, 200, 0.1, seed); }
abif::Dataset normal_data(std::uint64_t seed) { return abif::gen_normal(1000, 50, seed); }

abif::ModelConfig iforest_config(double tau) {
  abif::ModelConfig c;
  c.mode = abif::Mode::kIForest;
  c.tau = tau;
  return c;
}

abif::ModelConfig abiforest_config(double eps, double tau, double omega) {
  abif::ModelConfig c;
  c.epsilon = eps;
  c.tau = tau;
  c.omega = omega;
  return c;
}

class Bench {
 public:
  Bench(const BenchArgs& a, const Provenance& prov) : a_(a), prov_(prov) {
    opt_.reps = a.reps;
    opt_.base_seed = a.seed;
    opt_.threads = a.threads;
  }

  int run() {
    const std::string& e = a_.experiment;
    if (e == "circle-table2") return abif_table("circle", circle_data(a_.data_seed), "table2");
    if (e == "normal-table4") return abif_table("normal", normal_data(a_.data_seed), "table4");
    if (e == "circle-table3") return iforest_table("circle", circle_data(a_.data_seed), "table3");
    if (e == "normal-table5") return iforest_table("normal", normal_data(a_.data_seed), "table5");
    if (e == "size-table6") return size_table();
    if (e == "real-table7") return real_table();
    if (e == "omega-curves") return curves(false);
    return curves(true);
  }

 private:
  std::string stem(const std::string& dataset, const std::string& what,
                   const std::string& mode) const {
    return dataset + "_" + what + "_" + mode + "_seed" + std::to_string(a_.seed);
  }

  void emit(const std::string& name, const abif::EvalReport& rep,
            const json& extra = json::object()) const {
    const fs::path dir(a_.out_dir);
    {
      auto out = open_out(dir / (name + ".csv"));
      prov_.write_csv_header(out);
      abif::write_report_csv(out, rep);
    }
    json j = {{"provenance", prov_.to_json()}, {"report", abif::report_summary(rep)}};
    for (auto& [k, v] : extra.items()) j[k] = v;
    write_json(dir / (name + ".json"), j);
    const auto& best = rep.stats[rep.best];
    std::cout << name << ": " << rep.cells.size() << " cells x " << a_.reps
              << " reps, best mean F1 " << abif::format_double(best.mean)
              << " (cell " << rep.best << ": "
              << abif::to_json(rep.cells[rep.best]).dump() << ")\n";
  }

  // ABIForest at T=150, omega=20 over epsilon x tau, the published layout.
  int abif_table(const std::string& dataset, const abif::Dataset& data,
                 const std::string& what) {
    abif::Grid g;
    g.trees = {150};
    g.omegas = {20.0};
    g.taus = {0.5, 0.6, 0.7};
    emit(stem(dataset, what, "abiforest"),
         abif::grid_search(data, g, abif::ModelConfig{}, opt_));
    return 0;
  }

  // iForest over T x tau, the published layout.
  int iforest_table(const std::string& dataset, const abif::Dataset& data,
                    const std::string& what) {
    abif::Grid g;
    g.modes = {abif::Mode::kIForest};
    g.taus = {0.3, 0.4, 0.5, 0.6};
    emit(stem(dataset, what, "iforest"),
         abif::grid_search(data, g, abif::ModelConfig{}, opt_));
    return 0;
  }

  int size_table() {
    struct Study {
      std::string name;
      abif::Generator gen;
      std::vector<std::size_t> sizes;
    };
    // Class ratios follow the full datasets: 5:1 for Circle, 20:1 for Normal.
    const std::vector<Study> studies{
        {"circle",
         [](std::size_t n, std::uint64_t s) {
           const std::size_t anom = n / 6;
           return abif::gen_circle(n - anom, anom, 0.1, s);
         },
         {50, 200, 800, 1200}},
        {"normal",
         [](std::size_t n, std::uint64_t s) {
           const std::size_t anom = std::max<std::size_t>(1, n / 21);
           return abif::gen_normal(n - anom, anom, s);
         },
         {50, 150, 350, 550}}};
    const std::vector<abif::ModelConfig> configs{iforest_config(0.5),
                                                 abiforest_config(0.5, 0.6, 20.0)};
    for (const auto& s : studies) {
      // Data is generated from data_seed; repetitions use the base seed.
      std::vector<abif::SizeRow> rows;
      for (std::size_t n : s.sizes) {
        const abif::Dataset data = s.gen(n, a_.data_seed);
        for (const auto& c : configs)
          rows.push_back({n, c, abif::repeated_eval(data, c, opt_)});
      }
      const std::string name = stem(s.name, "table6", "both");
      auto out = open_out(fs::path(a_.out_dir) / (name + ".csv"));
      prov_.write_csv_header(out);
      out << "kind,n,mode,trees,tau,epsilon,omega,lambda,rep,seed,f1,sd\n";
      json jrows = json::array();
      for (const auto& r : rows) {
        const auto& c = r.config;
        const bool abf = c.mode == abif::Mode::kABIForest;
        auto prefix = [&](const char* kind) {
          out << kind << ',' << r.n << ',' << abif::to_string(c.mode) << ','
              << c.trees << ',' << abif::format_double(c.tau) << ','
              << (abf ? abif::format_double(c.epsilon) : "") << ','
              << (abf ? abif::format_double(c.omega) : "") << ','
              << (abf ? abif::format_double(c.lambda) : "") << ',';
        };
        for (std::size_t k = 0; k < r.stats.reps(); ++k) {
          prefix("rep");
          out << k << ',' << r.stats.seeds[k] << ','
              << abif::format_double(r.stats.f1[k]) << ",\n";
        }
        prefix("mean");
        out << r.stats.reps() << ",," << abif::format_double(r.stats.mean) << ','
            << abif::format_double(r.stats.sd) << '\n';
        jrows.push_back({{"n", r.n},
                         {"config", abif::to_json(c)},
                         {"mean_f1", r.stats.mean},
                         {"sd_f1", r.stats.sd},
                         {"reps", r.stats.reps()}});
        std::cout << s.name << " n=" << r.n << " " << abif::to_string(c.mode)
                  << ": mean F1 " << abif::format_double(r.stats.mean) << '\n';
      }
      write_json(fs::path(a_.out_dir) / (name + ".json"),
                 {{"provenance", prov_.to_json()}, {"rows", jrows}});
    }
    return 0;
  }

  struct RealSpec {
    std::string name;
    double epsilon, tau, omega, iforest_tau;
  };

  int real_table() {
    // Published optimal hyperparameters per dataset. Arrhythmia uses
    // epsilon = 1, where omega has no effect.
    const std::vector<RealSpec> specs{{"credit", 0.25, 0.55, 0.1, 0.4},
                                      {"ionosphere", 0.0, 0.4, 0.1, 0.45},
                                      {"arrhythmia", 1.0, 0.45, 20.0, 0.4},
                                      {"mulcross", 0.0, 0.6, 0.1, 0.5},
                                      {"http", 0.75, 0.55, 0.1, 0.5},
                                      {"pima", 0.75, 0.45, 30.0, 0.4}};
    const fs::path dir(a_.data_dir);
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) {
      std::cerr << "error: no dataset manifest at " << manifest_path.string()
                << "\nset --data-dir or ABIF_DATA_DIR to the directory holding "
                   "manifest.json and run scripts/fetch_data.sh to download the "
                   "real datasets\n";
      return kExitRuntime;
    }
    json manifest;
    {
      std::ifstream in(manifest_path);
      manifest = json::parse(in);
    }
    std::vector<std::string> missing;
    for (const auto& s : specs) {
      const auto& m = manifest.at("datasets").at(s.name);
      if (!fs::exists(dir / m.at("file").get<std::string>()))
        missing.push_back((dir / m.at("file").get<std::string>()).string());
    }
    if (!missing.empty()) {
      std::cerr << "error: real datasets not found:\n";
      for (const auto& f : missing) std::cerr << "  " << f << '\n';
      std::cerr << "run scripts/fetch_data.sh " << dir.string()
                << " (see manifest.json for sources and expected layout)\n";
      return kExitRuntime;
    }
    for (const auto& s : specs) {
      const auto& m = manifest.at("datasets").at(s.name);
      abif::Dataset data = abif::load_csv(
          (dir / m.at("file").get<std::string>()).string(),
          m.at("label_column").get<std::string>(),
          m.at("positive_label").get<std::string>());
      const auto n_norm = m.at("n_norm").get<std::size_t>();
      const auto n_anom = m.at("n_anom").get<std::size_t>();
      if (data.count_label(abif::kNormal) != n_norm ||
          data.count_label(abif::kAnomaly) != n_anom)
        data = abif::subsample_classes(data, n_norm, n_anom, a_.data_seed);
      emit(stem(s.name, "table7", "abiforest"),
           abif::grid_search(data,
                             abif::singleton_grid(abiforest_config(s.epsilon, s.tau, s.omega)),
                             abiforest_config(s.epsilon, s.tau, s.omega), opt_));
      emit(stem(s.name, "table7", "iforest"),
           abif::grid_search(data, abif::singleton_grid(iforest_config(s.iforest_tau)),
                             iforest_config(s.iforest_tau), opt_));
    }
    return 0;
  }

  // F1 against omega for each epsilon (or the transpose), T=150, tau=0.6.
  int curves(bool by_epsilon) {
    abif::Grid g;
    g.trees = {150};
    g.taus = {0.6};
    if (by_epsilon) g.epsilons = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    const std::string what = by_epsilon ? "epsilon-curves" : "omega-curves";
    for (const auto& [name, data] :
         std::vector<std::pair<std::string, abif::Dataset>>{
             {"circle", circle_data(a_.data_seed)}, {"normal", normal_data(a_.data_seed)}}) {
      const abif::EvalReport rep = abif::grid_search(data, g, abif::ModelConfig{}, opt_);
      const std::string base = stem(name, what, "abiforest");
      emit(base, rep);
      // Wide table: one row per x value, one column per curve.
      const auto& xs = by_epsilon ? g.epsilons : g.omegas;
      const auto& curves = by_epsilon ? g.omegas : g.epsilons;
      auto out = open_out(fs::path(a_.out_dir) / (base + "_wide.csv"));
      prov_.write_csv_header(out);
      out << (by_epsilon ? "epsilon" : "omega");
      for (double c : curves)
        out << ',' << (by_epsilon ? "omega=" : "epsilon=") << abif::format_double(c);
      out << '\n';
      for (double x : xs) {
        out << abif::format_double(x);
        for (double c : curves) {
          for (std::size_t i = 0; i < rep.cells.size(); ++i) {
            const auto& cell = rep.cells[i];
            const double cx = by_epsilon ? cell.epsilon : cell.omega;
            const double cc = by_epsilon ? cell.omega : cell.epsilon;
            if (cx == x && cc == c) out << ',' << abif::format_double(rep.stats[i].mean);
          }
        }
        out << '\n';
      }
    }
    return 0;
  }

  BenchArgs a_;
  Provenance prov_;
  abif::EvalOptions opt_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Isolation forest anomaly detection with attention-weighted trees"};
  app.set_version_flag("--version", std::string("abif ") + ABIF_VERSION);
  app.require_subcommand(1);

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset as CSV");
  gen->add_option("generator", ga.generator, "circle or normal")
      ->required()
      ->check(CLI::IsMember({"circle", "normal"}));
  gen->add_option("--n-norm", ga.n_norm, "Normal instances")->capture_default_str();
  gen->add_option("--n-anom", ga.n_anom, "Anomalous instances")->capture_default_str();
  gen->add_option("--noise", ga.noise, "Noise SD (circle only)")->capture_default_str();
  gen->add_option("--seed", ga.seed)->capture_default_str();
  gen->add_option("--out", ga.out, "Output CSV")->required();

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Build a forest and train attention weights");
  fit->add_option("--data", fa.data, "Training CSV")->required();
  fit->add_option("--label-column", fa.label_column)->capture_default_str();
  fit->add_option("--positive-label", fa.positive_label)->capture_default_str();
  fit->add_option("--mode", fa.mode)
      ->check(CLI::IsMember({"iforest", "abiforest"}))
      ->capture_default_str();
  fit->add_option("--trees", fa.trees)->capture_default_str();
  fit->add_option("--psi", fa.psi, "Subsample size; 0 selects min(n, 256)")
      ->capture_default_str();
  fit->add_option("--height-limit", fa.height_limit, "-1 selects ceil(log2 psi)")
      ->capture_default_str();
  fit->add_option("--tau", fa.tau, "Score threshold")->capture_default_str();
  auto* eps_opt = fit->add_option("--epsilon", fa.epsilon)->capture_default_str();
  auto* omega_opt = fit->add_option("--omega", fa.omega)->capture_default_str();
  auto* lambda_opt = fit->add_option("--lambda", fa.lambda)->capture_default_str();
  fit->add_option("--seed", fa.seed)->capture_default_str();
  fit->add_option("--label-source", fa.label_source)
      ->check(CLI::IsMember({"given", "pseudo"}))
      ->capture_default_str();
  fit->add_option("--solver-tol", fa.solver_tol)->capture_default_str();
  fit->add_option("--max-iters", fa.max_iters)->capture_default_str();
  fit->add_option("--threads", fa.threads)->capture_default_str();
  fit->add_option("--out", fa.out, "Output model JSON")->required();

  ScoreArgs sa;
  auto* score = app.add_subcommand("score", "Score a CSV with a fitted model");
  score->add_option("--model", sa.model)->required();
  score->add_option("--data", sa.data)->required();
  score->add_option("--label-column", sa.label_column)->capture_default_str();
  score->add_option("--positive-label", sa.positive_label)->capture_default_str();
  score->add_option("--out", sa.out, "Output CSV")->required();
  score->add_option("--explain-top", sa.explain_top,
                    "Also list the M trees with the largest attention weights")
      ->capture_default_str();

  BenchArgs ba;
  if (const char* env = std::getenv("ABIF_DATA_DIR")) ba.data_dir = env;
  else ba.data_dir = "data";
  auto* bench = app.add_subcommand("benchmark", "Regenerate a result table or curve");
  bench->add_option("experiment", ba.experiment)
      ->required()
      ->check(CLI::IsMember(kExperiments));
  bench->add_option("--reps", ba.reps)->capture_default_str();
  bench->add_option("--seed", ba.seed, "Base seed for splits and forests")
      ->capture_default_str();
  bench->add_option("--data-seed", ba.data_seed, "Seed for synthetic data")
      ->capture_default_str();
  bench->add_option("--threads", ba.threads)->capture_default_str();
  bench->add_option("--out-dir", ba.out_dir)->capture_default_str();
  bench->add_option("--data-dir", ba.data_dir, "Real datasets (env ABIF_DATA_DIR)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  Provenance prov;
  for (int i = 1; i < argc; ++i) prov.argv.emplace_back(argv[i]);
  try {
    if (*gen) {
      prov.command = "generate";
      prov.config = {{"generator", ga.generator}, {"n_norm", ga.n_norm},
                     {"n_anom", ga.n_anom},       {"noise", ga.noise},
                     {"seed", ga.seed}};
      return run_generate(ga, prov);
    }
    if (*fit) {
      validate_fit(fa);
      if (fa.mode == "iforest" &&
          (eps_opt->count() || omega_opt->count() || lambda_opt->count()))
        std::cerr << "warning: --epsilon, --omega and --lambda are ignored in "
                     "iforest mode\n";
      prov.command = "fit";
      prov.config = {{"data", fa.data},
                     {"label_column", fa.label_column},
                     {"positive_label", fa.positive_label},
                     {"mode", fa.mode},
                     {"trees", fa.trees},
                     {"psi", fa.psi},
                     {"height_limit", fa.height_limit},
                     {"tau", fa.tau},
                     {"seed", fa.seed}};
      if (fa.mode == "abiforest") {
        prov.config["epsilon"] = fa.epsilon;
        prov.config["omega"] = fa.omega;
        prov.config["lambda"] = fa.lambda;
        prov.config["label_source"] = fa.label_source;
        prov.config["solver_tol"] = fa.solver_tol;
        prov.config["max_iters"] = fa.max_iters;
      }
      return run_fit(fa, prov);
    }
    if (*score) {
      prov.command = "score";
      prov.config = {{"model", sa.model},
                     {"data", sa.data},
                     {"label_column", sa.label_column},
                     {"positive_label", sa.positive_label},
                     {"explain_top", sa.explain_top}};
      return run_score(sa, prov);
    }
    require(ba.reps >= 1, "--reps must be >= 1");
    require(ba.threads >= 1, "--threads must be >= 1");
    prov.command = "benchmark";
    prov.config = {{"experiment", ba.experiment}, {"reps", ba.reps},
                   {"seed", ba.seed},             {"data_seed", ba.data_seed},
                   {"data_dir", ba.data_dir}};
    return Bench(ba, prov).run();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\nRun with --help for usage.\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
