// fedq: command-line front end of the federated recommender simulator.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedq/binary_io.hpp"
#include "fedq/compression/quantize.hpp"
#include "fedq/error.hpp"
#include "fedq/exp/config.hpp"
#include "fedq/exp/experiment.hpp"
#include "fedq/exp/report.hpp"
#include "fedq/nn/serialize.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  if (with_config) {
    cmd->add_option("--config", c.config, "Experiment config (JSON); defaults apply when omitted")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "Master seed (overrides master_seed)");
    cmd->add_option("--override", c.overrides, "Dotted-path override, key=value (repeatable)");
  }
  cmd->add_option("--out", c.out, "Output directory (default: $FQS_OUT_DIR/<command>, FQS_OUT_DIR defaults to runs)");
}

fs::path output_dir(const Common& c, const std::string& command) {
  if (!c.out.empty()) return c.out;
  const char* root = std::getenv("FQS_OUT_DIR");
  return fs::path(root && *root ? root : "runs") / command;
}

fedq::exp::ExperimentConfig resolve_config(const Common& c) {
  auto overrides = c.overrides;
  if (c.seed) overrides.push_back("master_seed=" + std::to_string(*c.seed));
  if (c.config.empty()) return fedq::exp::parse_config("{}", overrides);
  return fedq::exp::load_config(c.config, overrides);
}

void write_text(const fs::path& path, const std::string& text) {
  fedq::write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = fedq::read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

json histogram_json(const fedq::data::Histogram& h) {
  json bins = json::array();
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    json bin = {{"lower", h.edges[i]}};
    if (i + 1 < h.edges.size()) bin["upper"] = h.edges[i + 1];
    bin["count"] = h.counts[i];
    bins.push_back(bin);
  }
  return bins;
}

std::string metric_summary(const fedq::federation::MetricValues& m) {
  std::ostringstream s;
  for (const auto& [name, value] : m) s << "  " << name << "=" << value;
  return s.str();
}

int run_prepare(const Common& c) {
  const auto config = resolve_config(c);
  const fs::path dir = output_dir(c, "prepare-data");
  const auto data = fedq::exp::prepare_data(config);
  fedq::exp::save_prepared_data(data, dir);
  if (config.data.source == fedq::exp::DataSource::MovieLens) {
    fedq::data::save_remap_tables(fedq::exp::load_corpus(config.data), dir);
  }
  write_text(dir / "config.json", fedq::exp::to_json(config));
  std::cout << "prepared " << data.sample_count() << " " << fedq::exp::to_string(data.kind()) << " samples ("
            << data.split.split.train.size() << " train, " << data.split.split.validation.size() << " validation, "
            << data.split.partition.num_clients() << " clients) in " << dir.string() << "\n";
  return 0;
}

int run_stats(const Common& c, const std::string& ratings, const std::string& movies) {
  auto config = resolve_config(c);
  if (!ratings.empty() || !movies.empty()) {
    if (ratings.empty() || movies.empty()) throw fedq::ArgumentError("--ratings and --movies go together");
    config.data.source = fedq::exp::DataSource::MovieLens;
    config.data.ratings_csv = ratings;
    config.data.movies_csv = movies;
  }
  const auto corpus = fedq::exp::load_corpus(config.data);
  const auto s = fedq::data::dataset_stats(corpus.interactions);
  json rating_counts = json::array();
  for (std::size_t i = 0; i < s.rating_value_counts.size(); ++i) {
    rating_counts.push_back({{"rating", 0.5 + 0.5 * static_cast<double>(i)}, {"count", s.rating_value_counts[i]}});
  }
  json doc = {{"interactions", s.interactions},
              {"users", s.users},
              {"movies", s.movies},
              {"mean_ratings_per_user", s.mean_ratings_per_user},
              {"mean_ratings_per_movie", s.mean_ratings_per_movie},
              {"mean_inter_rating_seconds", s.mean_inter_rating_seconds},
              {"inter_rating_pairs", s.inter_rating_pairs},
              {"inter_rating_seconds", histogram_json(s.inter_rating_seconds)},
              {"ratings_per_user", histogram_json(s.ratings_per_user)},
              {"ratings_per_movie", histogram_json(s.ratings_per_movie)},
              {"rating_values", rating_counts}};
  const fs::path dir = output_dir(c, "stats");
  fs::create_directories(dir);
  write_text(dir / "stats.json", doc.dump(2) + "\n");
  std::cout << s.interactions << " interactions, " << s.users << " users, " << s.movies << " movies\n"
            << "mean ratings per user " << s.mean_ratings_per_user << ", per movie " << s.mean_ratings_per_movie
            << "\nwritten to " << (dir / "stats.json").string() << "\n";
  return 0;
}

void write_run(const fs::path& dir, const fedq::exp::RunResult& r) {
  fs::create_directories(dir);
  write_text(dir / "config.json", fedq::exp::to_json(r.resolved));
  write_text(dir / "metrics.jsonl", fedq::exp::metrics_jsonl(r.series));
  write_text(dir / "timings.jsonl", fedq::exp::timings_jsonl(r.series));
  fedq::nn::save_parameters(r.params, dir / "model.fqs");
  if (!r.buffers.empty()) fedq::nn::save_parameters(r.buffers, dir / "buffers.fqs");
}

int run_central(const Common& c) {
  const auto config = resolve_config(c);
  const fs::path dir = output_dir(c, "train-central");
  const auto data = fedq::exp::prepare_data(config);
  const auto result = fedq::exp::run_central(config, data);
  write_run(dir, result);
  std::cout << "epoch " << result.series.back().round << metric_summary(result.series.back().metrics) << "\n"
            << "run written to " << dir.string() << "\n";
  return 0;
}

int run_federated(const Common& c, bool resume, std::size_t checkpoint_every) {
  const auto config = resolve_config(c);
  const fs::path dir = output_dir(c, "train-federated");
  fs::create_directories(dir);
  const auto data = fedq::exp::prepare_data(config);

  fedq::federation::TrainingOptions options;
  // Metrics are rewritten after every round so an interrupted run keeps its
  // completed rounds; checkpoints follow --checkpoint-every.
  options.on_round_end = [&](const fedq::federation::TrainingState& state) {
    write_text(dir / "metrics.jsonl", fedq::exp::metrics_jsonl(state.history));
    if (checkpoint_every > 0 && state.rounds_done % checkpoint_every == 0) {
      fedq::federation::save_checkpoint(state, dir / "checkpoint");
    }
    const auto& last = state.history.back();
    std::cerr << "round " << last.round << metric_summary(last.metrics) << "\n";
  };

  fedq::exp::RunResult result;
  if (resume) {
    auto state = fedq::federation::load_checkpoint(dir / "checkpoint");
    const auto saved = fedq::exp::parse_config(read_text(dir / "config.json"));
    auto expected = config;
    expected.model = saved.model;
    expected.federation.rounds = saved.federation.rounds;
    if (fedq::exp::to_json(expected) != fedq::exp::to_json(saved)) {
      throw fedq::ConfigError("--resume: configuration differs from the saved run beyond federation.rounds");
    }
    result = fedq::exp::resume_federated(config, data, std::move(state), options);
  } else {
    write_text(dir / "config.json", fedq::exp::to_json(config));
    result = fedq::exp::run_federated(config, data, options);
  }
  write_run(dir, result);
  fedq::federation::save_checkpoint(result.state, dir / "checkpoint");
  std::cout << "round " << result.series.back().round << metric_summary(result.series.back().metrics) << "\n"
            << "run written to " << dir.string() << "\n";
  return 0;
}

int run_compress_eval(const Common& c, const std::string& model_path, const std::vector<int>& qps_flag) {
  const auto config = resolve_config(c);
  const fs::path dir = output_dir(c, "compress-eval");
  fs::create_directories(dir);
  const auto data = fedq::exp::prepare_data(config);
  const auto params = fedq::nn::load_parameters(model_path);
  const std::vector<int> qps = qps_flag.empty() ? config.compression.qp_sweep : qps_flag;
  if (qps.empty()) throw fedq::ArgumentError("no QP values given (--qp or compression.qp_sweep)");

  const auto baseline = fedq::exp::evaluate_parameters(config, data, params);
  const auto points = fedq::exp::compression_sweep(config, data, params, qps);
  std::string lines;
  json base = {{"qp", nullptr}, {"bytes", fedq::compression::uncompressed_bytes(params)}, {"space_saving", 0.0}};
  for (const auto& [name, value] : baseline) base[name] = value;
  lines += base.dump() + "\n";
  std::printf("%6s %12s %10s %12s %9s", "qp", "step", "bytes", "saving", "entropy");
  for (const auto& [name, value] : baseline) std::printf(" %16s", name.c_str());
  std::printf("\n%6s %12s %10llu %12s %9s", "none", "-",
              static_cast<unsigned long long>(fedq::compression::uncompressed_bytes(params)), "0", "-");
  for (const auto& [name, value] : baseline) std::printf(" %16.6f", value);
  std::printf("\n");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    json line = {{"qp", p.qp},
                 {"step", p.step},
                 {"bytes", p.bytes},
                 {"uncompressed_bytes", p.uncompressed_bytes},
                 {"space_saving", p.space_saving},
                 {"entropy_bits", p.entropy_bits}};
    for (const auto& [name, value] : p.metrics) line[name] = value;
    lines += line.dump() + "\n";
    std::printf("%6d %12.6g %10llu %11.2f%% %9.3f", p.qp, p.step, static_cast<unsigned long long>(p.bytes),
                100.0 * p.space_saving, p.entropy_bits);
    for (const auto& [name, value] : p.metrics) std::printf(" %16.6f", value);
    std::printf("\n");
    if (i > 0 && p.qp > points[i - 1].qp && p.bytes > points[i - 1].bytes) {
      std::cerr << "note: compressed size grows from qp " << points[i - 1].qp << " to " << p.qp << "\n";
    }
  }
  write_text(dir / "compress.jsonl", lines);
  write_text(dir / "config.json", fedq::exp::to_json(config));
  std::cout << "written to " << (dir / "compress.jsonl").string() << "\n";
  return 0;
}

int run_report(const Common& c, const std::vector<std::string>& inputs) {
  std::vector<fedq::exp::MetricRun> runs;
  for (const auto& input : inputs) {
    fs::path file = input;
    if (fs::is_directory(file)) file /= "metrics.jsonl";
    if (!fs::exists(file)) throw fedq::ArgumentError("metric file not found: " + file.string());
    std::string id = file.filename() == "metrics.jsonl" ? file.parent_path().filename().string() : file.stem().string();
    if (id.empty()) id = file.string();
    for (const auto& r : runs) {
      if (r.run_id == id) {
        id = file.string();
        break;
      }
    }
    runs.push_back(fedq::exp::parse_metric_jsonl(id, read_text(file)));
  }
  const auto report = fedq::exp::build_report(runs);
  const fs::path dir = output_dir(c, "report");
  fs::create_directories(dir);
  write_text(dir / "report.csv", report.csv);
  write_text(dir / "summary.txt", report.summary);
  std::cout << report.summary << "written to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated recommender simulator: data preparation, central and federated training, "
               "compression sweeps and reports"};
  app.require_subcommand(1);

  Common common;
  auto* prepare = app.add_subcommand("prepare-data", "Build samples, split and client partition");
  add_common(prepare, common);

  auto* stats = app.add_subcommand("stats", "Dataset statistics and histograms");
  add_common(stats, common);
  std::string ratings, movies;
  stats->add_option("--ratings", ratings, "MovieLens ratings.csv (instead of the configured source)");
  stats->add_option("--movies", movies, "MovieLens movies.csv");

  auto* central = app.add_subcommand("train-central", "Centralized baseline training");
  add_common(central, common);

  auto* federated = app.add_subcommand("train-federated", "FedAvg or FedQ training");
  add_common(federated, common);
  bool resume = false;
  std::size_t checkpoint_every = 0;
  federated->add_flag("--resume", resume, "Continue from <out>/checkpoint up to federation.rounds");
  federated->add_option("--checkpoint-every", checkpoint_every, "Save a checkpoint every N rounds");

  auto* compress = app.add_subcommand("compress-eval", "QP sweep over a trained model");
  add_common(compress, common);
  std::string model_path;
  std::vector<int> qps;
  compress->add_option("--model", model_path, "Trained parameter file (.fqs)")->required()->check(CLI::ExistingFile);
  compress->add_option("--qp", qps, "QP values (default: compression.qp_sweep)");

  auto* report = app.add_subcommand("report", "Long-format CSV and summary of metric files");
  add_common(report, common, false);
  std::vector<std::string> inputs;
  report->add_option("inputs", inputs, "metrics.jsonl files or run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*prepare) return run_prepare(common);
    if (*stats) return run_stats(common, ratings, movies);
    if (*central) return run_central(common);
    if (*federated) return run_federated(common, resume, checkpoint_every);
    if (*compress) return run_compress_eval(common, model_path, qps);
    if (*report) return run_report(common, inputs);
  } catch (const fedq::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const fedq::ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const fedq::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
