// sct: fit, sample and score composite transformation models.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sct/config.hpp"
#include "sct/errors.hpp"
#include "sct/geometry.hpp"
#include "sct/io.hpp"
#include "sct/model.hpp"

namespace {

using namespace sct;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.precision(17);
  return out;
}

ModelConfig config_from(const std::string& path) { return path.empty() ? ModelConfig{} : load_config(path); }

void write_score_rows(std::ostream& out, const ScoreReport& r) {
  for (std::size_t j = 0; j < r.log_density.size(); ++j) {
    out << r.split << ',' << j << ',' << r.log_density[j] - r.adjustment << ','
        << -(r.log_density[j] - r.adjustment) << '\n';
  }
}

void print_summary(const ScoreReport& r) {
  std::printf("split=%s replicates=%zu mean_negative_log_score=%.10g standard_error=%.6g adjustment=%.10g\n",
              r.split.c_str(), r.log_density.size(), r.mean_negative, r.standard_error, r.adjustment);
}

// ---------------------------------------------------------------------------

struct OrderArgs {
  std::string data, out;
  std::size_t first = 0;
};

void run_order(const OrderArgs& a) {
  const Ensemble e = io::read_ensemble(a.data);
  const auto ord = geo::maximin_order(e.locs, a.first);
  auto out = open_out(a.out);
  out << "position,index,lon,lat,delta\n";
  for (std::size_t p = 0; p < ord.order.size(); ++p) {
    const auto c = e.locs.coords()[ord.order[p]];
    out << p << ',' << ord.order[p] << ',' << c.x << ',' << c.y << ',';
    if (p > 0) out << ord.delta(p);
    out << '\n';
  }
}

struct FitArgs {
  std::string config, data, out, trace;
};

void run_fit(const FitArgs& a) {
  const ModelConfig cfg = config_from(a.config);
  const Ensemble e = io::read_ensemble(a.data);
  std::ofstream trace_file;
  if (!a.trace.empty()) trace_file = open_out(a.trace);
  std::ostream& trace = a.trace.empty() ? std::cerr : trace_file;
  FitReport rep;
  const FittedModel m = FittedModel::fit(e, cfg, &rep, [&trace](std::string_view stage, const opt::TraceRecord& r) {
    trace << opt::format_trace(stage, r) << '\n';
  });
  io::write_model(a.out, m);
  std::printf("locations=%zu replicates=%zu stage1_iterations=%d stage1_seconds=%.3f stage2_seconds=%.3f "
              "conditioning=%zu saturated=%zu flagged=%zu fingerprint=%s\n",
              e.locations(), e.replicates(), rep.stage1.optimization.iterations, rep.stage1.seconds,
              rep.stage2_seconds, m.transport().structure().m, rep.saturated, rep.stage1.flagged.size(),
              m.fingerprint().c_str());
}

struct NoiseArgs {
  std::string model, out;
  std::size_t count = 100, locations = 0;
  std::uint64_t seed = 1;
};

void run_noise(const NoiseArgs& a) {
  std::size_t L = a.locations;
  if (!a.model.empty()) L = io::read_model(a.model).size();
  if (L == 0) throw DomainError("noise needs --model or --locations");
  io::write_noise(a.out, draw_noise(a.count, L, a.seed));
}

struct SampleArgs {
  std::string model, out, noise;
  std::size_t count = 100;
  std::uint64_t seed = 1;
};

void run_sample(const SampleArgs& a) {
  const FittedModel m = io::read_model(a.model);
  const Eigen::MatrixXd z = a.noise.empty() ? draw_noise(a.count, m.size(), a.seed) : io::read_noise(a.noise);
  const Ensemble e{m.locations(), sample_from_noise(m, z)};
  if (!a.out.empty()) {
    io::write_ensemble(a.out, e);
    return;
  }
  std::printf("lon,lat");
  for (Eigen::Index r = 0; r < e.Y.rows(); ++r) std::printf(",r%ld", static_cast<long>(r + 1));
  std::printf("\n");
  for (std::size_t l = 0; l < e.locs.size(); ++l) {
    std::printf("%.10g,%.10g", e.locs.coords()[l].x, e.locs.coords()[l].y);
    for (Eigen::Index r = 0; r < e.Y.rows(); ++r) std::printf(",%.10g", e.Y(r, static_cast<Eigen::Index>(l)));
    std::printf("\n");
  }
}

struct ScoreArgs {
  std::string model, test, data, config, out;
  int splits = 0;
  std::size_t n_test = 14;
  std::uint64_t seed = 1;
};

void run_score(const ScoreArgs& a) {
  std::ofstream out_file;
  if (!a.out.empty()) {
    out_file = open_out(a.out);
    out_file << "split,replicate,log_density,negative_log_score\n";
  }
  if (!a.model.empty()) {
    if (a.test.empty()) throw DomainError("score --model needs --test");
    const FittedModel m = io::read_model(a.model);
    const Ensemble t = io::read_ensemble(a.test);
    const ScoreReport r = log_score(m, t.Y, "test");
    if (out_file.is_open()) write_score_rows(out_file, r);
    print_summary(r);
    return;
  }
  if (a.data.empty() || a.splits <= 0) throw DomainError("score needs --model/--test or --data with --splits");
  const ModelConfig cfg = config_from(a.config);
  const Ensemble all = io::read_ensemble(a.data);
  const std::size_t N = all.replicates();
  if (a.n_test + 2 > N) throw DomainError("--n-test leaves fewer than two training replicates");
  std::mt19937_64 rng(a.seed);
  double total = 0.0;
  for (int s = 0; s < a.splits; ++s) {
    std::vector<std::size_t> idx(N);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(a.n_test));
    const std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(a.n_test), idx.end());
    const FittedModel m = FittedModel::fit(all.rows(train), cfg);
    const ScoreReport r = log_score(m, all.rows(test).Y, std::to_string(s));
    if (out_file.is_open()) write_score_rows(out_file, r);
    print_summary(r);
    total += r.mean_negative;
  }
  std::printf("split=mean splits=%d mean_negative_log_score=%.10g\n", a.splits, total / a.splits);
}

struct ExceedArgs {
  std::string model, reference, out;
  double threshold = 0.0, quantile = -1.0;
  std::string direction = "above";
  std::size_t count = 1000;
  std::uint64_t seed = 1;
};

void run_exceed(const ExceedArgs& a) {
  const FittedModel m = io::read_model(a.model);
  double threshold = a.threshold;
  if (a.quantile >= 0.0) {
    if (a.reference.empty()) throw DomainError("--quantile needs --reference data");
    threshold = global_quantile(io::read_ensemble(a.reference).Y, a.quantile);
  }
  const Eigen::MatrixXd s = sample(m, a.count, a.seed);
  const auto p = exceedance_map(s, threshold, parse_direction(a.direction));
  auto out = open_out(a.out);
  out << "index,lon,lat,probability\n";
  for (std::size_t l = 0; l < p.size(); ++l) {
    const auto c = m.locations().coords()[l];
    out << l << ',' << c.x << ',' << c.y << ',' << p[l] << '\n';
  }
  std::printf("threshold=%.10g direction=%s samples=%zu\n", threshold, a.direction.c_str(), a.count);
}

struct RoundtripArgs {
  std::string model, data;
  double z_tol = 1e-6, y_tol = 1e-4;
};

int run_roundtrip(const RoundtripArgs& a) {
  const FittedModel m = io::read_model(a.model);
  const Ensemble e = io::read_ensemble(a.data);
  const RoundtripReport r = roundtrip(m, e.Y);
  const bool ok = r.all_finite && r.max_z_error <= a.z_tol && r.max_y_error <= a.y_tol;
  std::printf("fields=%zu max_z_error=%.3g max_y_error=%.3g max_y_relative=%.3g finite=%d status=%s\n", r.fields,
              r.max_z_error, r.max_y_error, r.max_y_relative, r.all_finite ? 1 : 0, ok ? "ok" : "violated");
  return ok ? 0 : exit_code(ErrorKind::numerical);
}

struct IngestArgs {
  std::string csv, out, metric = "chordal-sphere";
  bool keep_poles = false;
};

void run_ingest(const IngestArgs& a) {
  io::CsvOptions opt;
  opt.metric = geo::parse_metric(a.metric);
  opt.collapse_poles = !a.keep_poles;
  const Ensemble e = io::ingest_csv(a.csv, opt);
  io::write_ensemble(a.out, e);
  std::printf("locations=%zu replicates=%zu\n", e.locations(), e.replicates());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scalable composite transformation models for spatial ensembles"};
  app.require_subcommand(0, 1);

  std::string explain_path;
  bool explain = false;
  app.add_flag("--explain-config", explain, "Print every configuration key with its value and default");
  app.add_option("--config", explain_path, "Configuration used with --explain-config");

  OrderArgs order;
  auto* c_order = app.add_subcommand("order", "Write the maximin permutation and distance table");
  c_order->add_option("--data", order.data, "Ensemble file")->required();
  c_order->add_option("--out", order.out, "Output CSV")->required();
  c_order->add_option("--first", order.first, "Index of the first location");

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "Fit both stages and write the model");
  c_fit->add_option("--config", fit.config, "Configuration file");
  c_fit->add_option("--data", fit.data, "Training ensemble file")->required();
  c_fit->add_option("--out", fit.out, "Model file")->required();
  c_fit->add_option("--trace", fit.trace, "Trace file (default: stderr)");

  NoiseArgs noise;
  auto* c_noise = app.add_subcommand("noise", "Write standard-normal reference draws for --common-noise");
  c_noise->add_option("--model", noise.model, "Take the field size from this model");
  c_noise->add_option("--locations", noise.locations, "Field size");
  c_noise->add_option("-n,--count", noise.count, "Number of fields");
  c_noise->add_option("--seed", noise.seed, "Random seed");
  c_noise->add_option("--out", noise.out, "Noise file")->required();

  SampleArgs smp;
  auto* c_sample = app.add_subcommand("sample", "Generate fields by inverting the model");
  c_sample->add_option("--model", smp.model, "Model file")->required();
  c_sample->add_option("-n,--count", smp.count, "Number of fields");
  c_sample->add_option("--seed", smp.seed, "Random seed");
  c_sample->add_option("--common-noise", smp.noise, "Read reference draws from a noise file");
  c_sample->add_option("--out", smp.out, "Output ensemble file (CSV on stdout if omitted)");

  ScoreArgs score;
  auto* c_score = app.add_subcommand("score", "Held-out negative log score");
  c_score->add_option("--model", score.model, "Model file");
  c_score->add_option("--test", score.test, "Test ensemble file");
  c_score->add_option("--data", score.data, "Ensemble to split repeatedly into train and test");
  c_score->add_option("--config", score.config, "Configuration used for split fits");
  c_score->add_option("--splits", score.splits, "Number of random splits");
  c_score->add_option("--n-test", score.n_test, "Test replicates per split");
  c_score->add_option("--seed", score.seed, "Split seed");
  c_score->add_option("--out", score.out, "Per-replicate CSV");

  ExceedArgs ex;
  auto* c_exceed = app.add_subcommand("exceed", "Per-location exceedance probabilities from model samples");
  c_exceed->add_option("--model", ex.model, "Model file")->required();
  c_exceed->add_option("--threshold", ex.threshold, "Threshold in data units");
  c_exceed->add_option("--quantile", ex.quantile, "Use this global quantile of --reference as threshold");
  c_exceed->add_option("--reference", ex.reference, "Ensemble for --quantile");
  c_exceed->add_option("--direction", ex.direction, "above or below")->check(CLI::IsMember({"above", "below"}));
  c_exceed->add_option("-n,--count", ex.count, "Number of samples");
  c_exceed->add_option("--seed", ex.seed, "Random seed");
  c_exceed->add_option("--out", ex.out, "Output CSV")->required();

  RoundtripArgs rt;
  auto* c_rt = app.add_subcommand("roundtrip-check", "Check forward-then-inverse reproduction on data");
  c_rt->add_option("--model", rt.model, "Model file")->required();
  c_rt->add_option("--data", rt.data, "Ensemble file")->required();
  c_rt->add_option("--z-tol", rt.z_tol, "Tolerance in reference space");
  c_rt->add_option("--y-tol", rt.y_tol, "Tolerance in data units");

  IngestArgs ing;
  auto* c_ingest = app.add_subcommand("ingest", "Convert a lon,lat,replicates CSV into an ensemble file");
  c_ingest->add_option("--csv", ing.csv, "Input CSV")->required();
  c_ingest->add_option("--out", ing.out, "Ensemble file")->required();
  c_ingest->add_option("--metric", ing.metric, "chordal-sphere or euclidean-plane");
  c_ingest->add_flag("--keep-poles", ing.keep_poles, "Do not collapse repeated pole rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::validation);
  }

  try {
    if (explain) {
      std::cout << explain_config(config_from(explain_path));
      return 0;
    }
    if (*c_order) run_order(order);
    else if (*c_fit) run_fit(fit);
    else if (*c_noise) run_noise(noise);
    else if (*c_sample) run_sample(smp);
    else if (*c_score) run_score(score);
    else if (*c_exceed) run_exceed(ex);
    else if (*c_rt) return run_roundtrip(rt);
    else if (*c_ingest) run_ingest(ing);
    else {
      std::cout << app.help();
      return exit_code(ErrorKind::validation);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "sct: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "sct: %s\n", e.what());
    return 1;
  }
  return 0;
}
