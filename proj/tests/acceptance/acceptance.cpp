// Acceptance suite: one PASS/FAIL line per criterion.
//
//   fedq_acceptance            run every criterion
//   fedq_acceptance 1 7 8      run a subset
//
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../support/fixtures.hpp"
#include "../support/gradcheck_support.hpp"
#include "fedq/binary_io.hpp"
#include "fedq/compression/codec.hpp"
#include "fedq/compression/quantize.hpp"
#include "fedq/data/samples.hpp"
#include "fedq/data/synthetic.hpp"
#include "fedq/exp/config.hpp"
#include "fedq/exp/experiment.hpp"
#include "fedq/federation/federation.hpp"
#include "fedq/models/models.hpp"
#include "fedq/nn/training.hpp"
#include "fedq/rng.hpp"

#ifndef FEDQ_CLI_PATH
#error "FEDQ_CLI_PATH must name the fedq executable"
#endif

using namespace fedq;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string pct(double v) { return fmt("%.2f%%", 100.0 * v); }

// Desk-scale federated task shared by the efficacy and compression criteria.
const char* kDeskConfig = R"({
  "data": {"synthetic": {"num_users": 2000, "num_movies": 500, "cluster_count": 8}, "partition": "per_user",
           "window": 7, "ordering": "timestamp_asc"},
  "model": {"type": "candidate_generator", "input_vocab_size": 501, "output_vocab_size": 500,
            "embedding_dim": 16, "hidden_sizes": [64, 32], "norm_groups": 4},
  "federation": {"rounds": 50, "clients_per_round": 100, "batch_size": 32, "local_epochs": 1,
                 "learning_rate": 0.5},
  "metrics": {"top_k": 10},
  "central": {"epochs": 8, "batch_size": 64, "learning_rate": 0.3}
})";

exp::ExperimentConfig desk_config(std::uint64_t seed, std::vector<std::string> overrides = {}) {
  overrides.push_back("master_seed=" + std::to_string(seed));
  overrides.push_back("data.synthetic.seed=" + std::to_string(seed));
  return exp::parse_config(kDeskConfig, overrides);
}

double final_metric(const exp::RunResult& r, const std::string& name) {
  for (const auto& [n, v] : r.series.back().metrics) {
    if (n == name) return v;
  }
  throw InternalError("metric " + name + " missing from the final record");
}

// Desk FedQ(L=10) run of seed 1, shared between criteria 6 and 9.
struct DeskCache {
  std::optional<exp::PreparedData> data;
  std::optional<exp::RunResult> fedq;
};
DeskCache desk_seed1;

// ---------------------------------------------------------------------------

Outcome architecture() {
  const auto t0 = Clock::now();
  const auto cg = models::build_candidate_generator(models::CandidateGeneratorConfig{}, 1);
  const auto ranker = models::build_ranker(models::RankerConfig{}, 1);
  const double elapsed = seconds_since(t0);
  const std::size_t cg_count = cg.params.parameter_count();
  const std::size_t ranker_count = ranker.params.parameter_count();
  const nn::Tensor* first_fc = nullptr;
  for (const auto& e : ranker.params) {
    if (e.name.find(".fc.weight") != std::string::npos) {
      first_fc = &e.tensor;
      break;
    }
  }
  const bool shape_ok = first_fc && first_fc->shape() == nn::Shape{256, 177};
  Outcome o;
  o.pass = cg_count == 17'994'852 && ranker_count == 12'136'170 && shape_ok && elapsed < 1.0;
  o.detail = "candidate generator " + std::to_string(cg_count) + " params, ranker " + std::to_string(ranker_count) +
             ", first ranker FC " + (first_fc ? nn::shape_string(first_fc->shape()) : std::string("missing")) +
             ", construction " + fmt("%.2f s", elapsed);
  return o;
}

Outcome gradients() {
  Rng rng(2024);
  double worst = 0.0;
  std::size_t instances = 0, checked = 0, skipped = 0, max_params = 0;
  const auto t0 = Clock::now();
  for (int i = 0; i < 12; ++i) {
    models::CandidateGeneratorConfig c;
    c.output_vocab_size = 20 + rng.uniform_index(60);
    c.input_vocab_size = c.output_vocab_size + 1;
    c.embedding_dim = 2 + rng.uniform_index(7);
    c.norm = i % 4 == 3 ? models::NormKind::BatchNorm : models::NormKind::GroupNorm;
    c.norm_groups = 1 + rng.uniform_index(3);
    c.hidden_sizes.clear();
    const std::size_t layers = 1 + rng.uniform_index(2);
    for (std::size_t l = 0; l < layers; ++l) c.hidden_sizes.push_back(c.norm_groups * (2 + rng.uniform_index(8)));
    const auto built = models::build_candidate_generator(c, rng.next_u64());
    nn::Network net(built.spec);
    const auto batch =
        testing::random_history_batch(rng, 3 + rng.uniform_index(6), 1 + rng.uniform_index(7), c.input_vocab_size,
                                      c.output_vocab_size);
    const auto report = testing::check_gradients(net, built.params, batch, nn::LossKind::SoftmaxCrossEntropy);
    worst = std::max(worst, report.max_relative_error);
    checked += report.checked;
    skipped += report.kink_skipped;
    max_params = std::max(max_params, built.params.parameter_count());
    ++instances;
  }
  const nn::LossKind losses[] = {nn::LossKind::SoftmaxCrossEntropy, nn::LossKind::MeanSquaredError,
                                 nn::LossKind::SumOfBoth};
  for (int i = 0; i < 12; ++i) {
    models::RankerConfig c;
    c.num_users = 5 + rng.uniform_index(40);
    c.num_movies = 5 + rng.uniform_index(40);
    c.num_genres = 3 + rng.uniform_index(8);
    c.user_dim = 2 + rng.uniform_index(6);
    c.movie_dim = 2 + rng.uniform_index(6);
    c.genre_dim = 1 + rng.uniform_index(4);
    c.use_movie_age = i % 2 == 0;
    c.norm = i % 4 == 1 ? models::NormKind::BatchNorm : models::NormKind::GroupNorm;
    c.norm_groups = 1 + rng.uniform_index(3);
    c.hidden_sizes = {c.norm_groups * (2 + rng.uniform_index(6))};
    const auto built = models::build_ranker(c, rng.next_u64());
    nn::Network net(built.spec);
    const auto batch = testing::random_rating_batch(rng, 3 + rng.uniform_index(6), c);
    const auto report = testing::check_gradients(net, built.params, batch, losses[i % 3]);
    worst = std::max(worst, report.max_relative_error);
    checked += report.checked;
    skipped += report.kink_skipped;
    max_params = std::max(max_params, built.params.parameter_count());
    ++instances;
  }
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = worst < 1e-4 && instances >= 20 && max_params <= 10'000 && elapsed < 120.0;
  o.detail = std::to_string(instances) + " instances (<= " + std::to_string(max_params) + " params), " +
             std::to_string(checked) + " partials, max relative error " + fmt("%.2e", worst) + ", " +
             std::to_string(skipped) + " kink probes skipped, " + fmt("%.1f s", elapsed);
  return o;
}

Outcome aggregation() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Rng rng(seed);
    nn::ParameterSet tmpl;
    tmpl.add("a", nn::Tensor({7, 5}));
    tmpl.add("b", nn::Tensor({11}));
    std::vector<nn::ParameterSet> updates;
    std::vector<double> weights;
    for (int k = 0; k < 100; ++k) {
      nn::ParameterSet u = tmpl;
      for (auto& e : u) {
        for (double& v : e.tensor.values()) v = rng.normal(0.0, 3.0);
      }
      updates.push_back(std::move(u));
      weights.push_back(rng.uniform(0.1, 50.0));
    }
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    federation::AggregationState agg(tmpl, total);
    for (int k = 0; k < 100; ++k) agg.accumulate(updates[k], weights[k]);
    const auto& cumulative = agg.result();
    // Batch oracle: long double weighted sum, divided once.
    for (std::size_t e = 0; e < tmpl.size(); ++e) {
      for (std::size_t i = 0; i < tmpl.entry(e).tensor.size(); ++i) {
        long double sum = 0.0L;
        for (int k = 0; k < 100; ++k) {
          sum += static_cast<long double>(weights[k]) * updates[k].entry(e).tensor[i];
        }
        const double batch = static_cast<double>(sum / total);
        const double got = cumulative.entry(e).tensor[i];
        worst = std::max(worst, std::abs(got - batch) / std::max(std::abs(batch), 1e-300));
      }
    }
  }
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = worst <= 1e-12 && elapsed < 10.0;
  o.detail = "50 seeds x 100 weighted updates, max relative deviation " + fmt("%.2e", worst) + ", " +
             fmt("%.2f s", elapsed);
  return o;
}

Outcome degeneration() {
  const auto t0 = Clock::now();
  const char* toy = R"({
    "master_seed": 5,
    "data": {"synthetic": {"num_users": 150, "num_movies": 60, "num_genres": 8, "cluster_count": 3, "mu": 2.5}},
    "model": {"embedding_dim": 8, "hidden_sizes": [16], "norm_groups": 4},
    "federation": {"rounds": 10, "clients_per_round": 12, "batch_size": 8, "learning_rate": 0.3},
    "metrics": {"top_k": 10}
  })";
  const auto avg_cfg = exp::parse_config(toy);
  const auto q_cfg = exp::parse_config(toy, {"federation.algorithm=fedq", "federation.queue_length=1"});
  const auto data = exp::prepare_data(avg_cfg);
  const auto avg = exp::run_federated(avg_cfg, data);
  const auto q = exp::run_federated(q_cfg, data);
  const bool params_equal = avg.params == q.params;
  const bool metrics_equal = exp::metrics_jsonl(avg.series) == exp::metrics_jsonl(q.series);
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = params_equal && metrics_equal && avg.series.size() == 11 && elapsed < 60.0;
  o.detail = std::string("10 rounds: parameters ") + (params_equal ? "bit-identical" : "DIFFER") + ", metric JSONL " +
             (metrics_equal ? "byte-identical" : "DIFFERS") + ", " + fmt("%.1f s", elapsed);
  return o;
}

Outcome complexity() {
  // 60 clients with 24 samples each.
  Rng rng(31);
  models::CandidateGeneratorConfig c;
  c.output_vocab_size = 30;
  c.input_vocab_size = 31;
  c.embedding_dim = 4;
  c.hidden_sizes = {8};
  c.norm_groups = 2;
  const auto built = models::build_candidate_generator(c, 3);
  nn::Network net(built.spec);
  const std::size_t clients = 60, per_client = 24;
  auto all = testing::random_history_batch(rng, clients * per_client, 5, 31, 30);
  std::vector<std::vector<std::size_t>> parts(clients);
  for (std::size_t i = 0; i < clients * per_client; ++i) parts[i / per_client].push_back(i);
  federation::BatchClientData data(all, parts);
  federation::LocalTrainer trainer{&net, nn::LossKind::SoftmaxCrossEntropy};
  federation::IdentityChannel channel;

  auto round_stats = [&](federation::Algorithm alg, std::size_t n, std::size_t L) {
    federation::FederationConfig f;
    f.rounds = 3;
    f.clients_per_round = n;
    f.algorithm = alg;
    f.queue_length = L;
    f.batch_size = 5;
    f.local_epochs = 2;
    f.learning_rate = 0.05;
    f.seed = 9;
    auto state = federation::initial_training_state(f, built.params);
    state = federation::run_training(f, trainer, data, std::move(state),
                                     [](const nn::ParameterSet&) { return federation::MetricValues{}; }, channel);
    std::vector<federation::RoundStats> out;
    for (std::size_t r = 1; r < state.history.size(); ++r) out.push_back(state.history[r].stats);
    return out;
  };

  bool pass = true;
  std::ostringstream detail;
  const std::size_t N = 20;
  const auto avg = round_stats(federation::Algorithm::FedAvg, N, 1);
  const std::size_t steps_per_client = federation::client_steps(per_client, 2, 5);
  for (std::size_t L : {2, 5, 10}) {
    const auto q = round_stats(federation::Algorithm::FedQ, N, L);
    // Same N: the critical path of a round grows L-fold while total work is unchanged.
    // Same number of aggregated models (N / L FedAvg clients): total work grows L-fold.
    const auto avg_k = round_stats(federation::Algorithm::FedAvg, N / L, 1);
    for (std::size_t r = 0; r < q.size(); ++r) {
      pass = pass && q[r].sequential_steps == L * avg[r].sequential_steps;
      pass = pass && q[r].local_steps == avg[r].local_steps;
      pass = pass && q[r].local_steps == L * avg_k[r].local_steps;
    }
    detail << "L=" << L << ": sequential " << q[0].sequential_steps << " vs " << avg[0].sequential_steps
           << ", total " << q[0].local_steps << " vs " << avg_k[0].local_steps << " (FedAvg N=" << N / L << "); ";
  }
  pass = pass && avg[0].sequential_steps == steps_per_client;
  detail << "steps per client " << steps_per_client;
  return {pass, detail.str()};
}

Outcome fedq_efficacy() {
  const auto t0 = Clock::now();
  std::size_t wins = 0;
  double improvement_sum = 0.0;
  std::ostringstream detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto avg_cfg = desk_config(seed);
    const auto q_cfg = desk_config(seed, {"federation.algorithm=fedq", "federation.queue_length=10"});
    auto data = exp::prepare_data(avg_cfg);
    const auto avg = exp::run_federated(avg_cfg, data);
    auto q = exp::run_federated(q_cfg, data);
    const double a = final_metric(avg, "top_k_accuracy");
    const double b = final_metric(q, "top_k_accuracy");
    wins += b >= a;
    improvement_sum += b - a;
    detail << "seed " << seed << ": FedAvg " << pct(a) << ", FedQ " << pct(b) << "; ";
    if (seed == 1) {
      desk_seed1.data = std::move(data);
      desk_seed1.fedq = std::move(q);
    }
  }
  const double elapsed = seconds_since(t0);
  const double mean = improvement_sum / 3.0;
  Outcome o;
  o.pass = wins >= 2 && mean > 0.0 && elapsed < 900.0;
  detail << "FedQ >= FedAvg in " << wins << "/3, mean improvement " << fmt("%+.2f pp", 100.0 * mean) << ", "
         << fmt("%.0f s", elapsed);
  o.detail = detail.str();
  return o;
}

Outcome quantization_formula() {
  const auto t0 = Clock::now();
  bool pass = true;
  for (int f : {0, 1, 2, 3}) pass = pass && compression::step_size(0, f) == 1.0;
  const double d30 = compression::step_size(-30, 2);
  const double d48 = compression::step_size(-48, 2);
  pass = pass && d30 == 0.005859375 && d48 == 4.0 * std::ldexp(1.0, -14);
  Rng rng(7);
  double worst_ratio = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int qp = -48 + static_cast<int>(rng.uniform_index(41));
    const double step = compression::step_size(qp, 2);
    nn::Tensor x({1 + rng.uniform_index(2000)});
    const double sd = std::pow(10.0, rng.uniform(-3.0, 0.0));
    for (double& v : x.values()) v = rng.normal(0.0, sd);
    const auto back = compression::dequantize(compression::quantize(x, step));
    for (std::size_t i = 0; i < x.size(); ++i) worst_ratio = std::max(worst_ratio, std::abs(back[i] - x[i]) / step);
  }
  const double elapsed = seconds_since(t0);
  pass = pass && worst_ratio <= 0.5 && elapsed < 10.0;
  return {pass, "delta(0,f)=1 for f=0..3, delta(-30,2)=" + fmt("%.9g", d30) + ", delta(-48,2)=" + fmt("%.9g", d48) +
                    ", max |error|/delta " + fmt("%.6f", worst_ratio) + " over 100 tensors, " +
                    fmt("%.2f s", elapsed)};
}

Outcome codec_losslessness() {
  const auto t0 = Clock::now();
  Rng rng(8);
  std::size_t exact = 0, total_indices = 0;
  std::uint64_t total_bytes = 0;
  std::vector<double> values;
  for (int t = 0; t < 1000; ++t) {
    // Sizes log-uniform in [1, 1e6], endpoints included; sparsity uniform in [0, 0.99].
    std::size_t n = t == 0 ? 1 : t == 1 ? 1'000'000 : static_cast<std::size_t>(std::llround(std::pow(10.0, rng.uniform(0.0, 6.0))));
    const double sparsity = t == 2 ? 0.99 : t == 3 ? 0.0 : rng.uniform(0.0, 0.99);
    const int qp = -48 + static_cast<int>(rng.uniform_index(29));
    const double step = compression::step_size(qp, 2);
    values.assign(n, 0.0);
    const double sd = std::pow(10.0, rng.uniform(-2.0, 0.5));
    for (double& v : values) {
      if (rng.uniform() >= sparsity) v = rng.normal(0.0, sd);
    }
    const auto indices = compression::quantize_values(values, step);
    const auto bytes = compression::encode_indices(indices);
    exact += compression::decode_indices(bytes, n) == indices;
    total_indices += n;
    total_bytes += bytes.size();
  }
  const double elapsed = seconds_since(t0);
  return {exact == 1000 && elapsed < 300.0,
          std::to_string(exact) + "/1000 tensors decoded exactly (" + std::to_string(total_indices) + " indices, " +
              std::to_string(total_bytes) + " bytes), " + fmt("%.1f s", elapsed)};
}

Outcome compression_efficacy() {
  const auto t0 = Clock::now();
  if (!desk_seed1.fedq) {
    const auto cfg = desk_config(1, {"federation.algorithm=fedq", "federation.queue_length=10"});
    desk_seed1.data = exp::prepare_data(cfg);
    desk_seed1.fedq = exp::run_federated(cfg, *desk_seed1.data);
  }
  const auto cfg = desk_config(1, {"federation.algorithm=fedq", "federation.queue_length=10"});
  const auto& data = *desk_seed1.data;
  const auto& trained = *desk_seed1.fedq;
  const double base = final_metric(trained, "top_k_accuracy");

  const std::vector<int> sweep = {-48, -43, -38, -30, -24};
  const auto points = exp::compression_sweep(cfg, data, trained.params, sweep);
  bool monotone = true;
  for (std::size_t i = 1; i < points.size(); ++i) monotone = monotone && points[i].bytes <= points[i - 1].bytes;
  std::optional<std::size_t> best;
  std::ostringstream detail;
  detail << "uncompressed FL top-10 " << pct(base) << "; post-training sweep:";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    const double acc = p.metrics[0].second;
    detail << " qp " << p.qp << " " << p.bytes << " B / " << pct(p.space_saving) << " / " << pct(acc) << ";";
    if (p.space_saving >= 0.70 && base - acc <= 0.02 && (!best || p.space_saving > points[*best].space_saving)) {
      best = i;
    }
  }

  // The same task trained with compressed transfers in both directions.
  const int fl_qp = -30;
  const auto fl_cfg = desk_config(1, {"federation.algorithm=fedq", "federation.queue_length=10",
                                      "compression.enabled=true", "compression.qp=" + std::to_string(fl_qp)});
  const auto compressed = exp::run_federated(fl_cfg, data);
  std::uint64_t plain_bytes = 0, packed_bytes = 0;
  for (std::size_t r = 0; r < trained.series.size(); ++r) {
    plain_bytes += trained.series[r].stats.bytes_up + trained.series[r].stats.bytes_down;
    packed_bytes += compressed.series[r].stats.bytes_up + compressed.series[r].stats.bytes_down;
  }
  const double fl_saving = compression::space_saving(plain_bytes, packed_bytes);
  const double fl_acc = final_metric(compressed, "top_k_accuracy");
  const bool fl_ok = fl_saving >= 0.70 && base - fl_acc <= 0.02;
  detail << " compressed FL at qp " << fl_qp << ": saving " << pct(fl_saving) << ", top-10 " << pct(fl_acc) << ";";

  const double elapsed = seconds_since(t0);
  detail << " bytes " << (monotone ? "non-increasing" : "NOT monotone") << " across the sweep";
  if (best) detail << ", best qp " << points[*best].qp;
  detail << ", " << fmt("%.0f s", elapsed);
  return {best.has_value() && monotone && fl_ok && elapsed < 1200.0, detail.str()};
}

Outcome preprocessing() {
  const auto t0 = Clock::now();
  bool counts_ok = true;
  std::size_t corpora = 0;
  auto check_corpus = [&](const std::vector<data::Interaction>& interactions, Rng& rng) {
    std::map<std::int32_t, std::size_t> per_user;
    for (const auto& i : interactions) ++per_user[i.user_id];
    std::size_t expected = 0;
    for (const auto& [u, n] : per_user) expected += n > 0 ? n - 1 : 0;
    for (auto ordering : {data::OrderingMode::TimestampAsc, data::OrderingMode::Random,
                          data::OrderingMode::RatingDesc}) {
      const auto samples = data::build_watch_histories(interactions, 7, ordering, rng);
      counts_ok = counts_ok && samples.size() == expected;
      for (const auto& s : samples) counts_ok = counts_ok && !s.history.empty() && s.history.size() <= 7;
    }
    ++corpora;
  };
  Rng rng(10);
  for (int c = 0; c < 20; ++c) {
    std::vector<data::Interaction> interactions;
    const std::size_t users = 1 + rng.uniform_index(30);
    for (std::size_t u = 0; u < users; ++u) {
      const std::size_t n = rng.uniform_index(25);
      for (std::size_t k = 0; k < n; ++k) {
        interactions.push_back({static_cast<std::int32_t>(u), static_cast<std::int32_t>(rng.uniform_index(50)),
                                0.5 * static_cast<double>(1 + rng.uniform_index(10)),
                                static_cast<std::int64_t>(rng.uniform_index(1000))});
      }
    }
    shuffle(interactions, rng);
    check_corpus(interactions, rng);
  }
  check_corpus(data::generate_synthetic(data::SyntheticConfig{}).corpus.interactions, rng);

  std::size_t wins = 0;
  std::ostringstream detail;
  detail << "counts and window bound hold on " << corpora << " corpora: " << (counts_ok ? "yes" : "NO") << "; ";
  for (std::uint64_t seed : {1, 2, 3}) {
    double acc[2];
    int i = 0;
    for (const char* ordering : {"timestamp_asc", "random"}) {
      const auto cfg = desk_config(seed, {std::string("data.ordering=") + ordering});
      acc[i++] = final_metric(exp::run_central(cfg, exp::prepare_data(cfg)), "top_k_accuracy");
    }
    wins += acc[0] > acc[1];
    detail << "seed " << seed << ": timestamp_asc " << pct(acc[0]) << ", random " << pct(acc[1]) << "; ";
  }
  const double elapsed = seconds_since(t0);
  detail << "timestamp_asc ahead in " << wins << "/3, " << fmt("%.0f s", elapsed);
  return {counts_ok && wins >= 2 && elapsed < 900.0, detail.str()};
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / "fedq_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string config = R"({
    "data": {"synthetic": {"num_users": 300, "num_movies": 120, "num_genres": 10, "cluster_count": 4}},
    "model": {"embedding_dim": 8, "hidden_sizes": [16, 8], "norm_groups": 4},
    "federation": {"rounds": 6, "clients_per_round": 20, "batch_size": 16, "learning_rate": 0.3},
    "metrics": {"top_k": 10}
  })";
  {
    std::ofstream out(root / "config.json");
    out << config;
  }
  struct Variant {
    std::string name;
    std::string flags;
  };
  const std::vector<Variant> variants = {
      {"fedavg", ""},
      {"fedq-parallel-compressed",
       " --override federation.algorithm=fedq --override federation.queue_length=5"
       " --override federation.parallel_queues=true --override compression.enabled=true"
       " --override compression.qp=-30"},
  };
  bool pass = true;
  std::ostringstream detail;
  for (const auto& v : variants) {
    std::vector<std::string> texts;
    for (int rep = 0; rep < 2; ++rep) {
      const auto dir = root / (v.name + "-" + std::to_string(rep));
      const std::string cmd = std::string("\"") + FEDQ_CLI_PATH + "\" train-federated --config \"" +
                              (root / "config.json").string() + "\" --seed 7 --out \"" + dir.string() + "\"" +
                              v.flags + " > \"" + (root / "log.txt").string() + "\" 2>&1";
      if (std::system(cmd.c_str()) != 0) {
        pass = false;
        detail << v.name << ": command failed; ";
        break;
      }
      const auto bytes = read_file_bytes(dir / "metrics.jsonl");
      texts.emplace_back(bytes.begin(), bytes.end());
    }
    if (texts.size() != 2) continue;
    const bool same = texts[0] == texts[1] && !texts[0].empty();
    pass = pass && same;
    detail << v.name << ": " << (same ? "byte-identical" : "DIFFERENT") << " (" << texts[0].size() << " bytes); ";
  }
  return {pass, detail.str() + "CLI train-federated run twice per variant with --seed 7"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "architecture fidelity", architecture},
      {2, "gradient suite", gradients},
      {3, "aggregation oracle", aggregation},
      {4, "FedQ(L=1) equals FedAvg", degeneration},
      {5, "round cost grows L-fold", complexity},
      {6, "FedQ efficacy at desk scale", fedq_efficacy},
      {7, "quantization step size and error", quantization_formula},
      {8, "codec losslessness", codec_losslessness},
      {9, "compression efficacy at desk scale", compression_efficacy},
      {10, "preprocessing counts and ordering", preprocessing},
      {11, "end-to-end determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (c.id < 10 ? " " : "") << c.id << "  " << c.name << ": "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
