#pragma once

// N-way K-shot evaluation over the novel split.
//
// Episode i draws from derive_rng(seed, i), so the sampled tasks and the
// reduced statistics do not depend on how many workers run them.

#include "fsar/core.hpp"
#include "fsar/data.hpp"
#include "fsar/model.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace fsar {

struct EvalReport {
  double mean_accuracy = 0.0;
  /// 1.96 * sd(per-episode accuracy) / sqrt(episodes)
  double ci95 = 0.0;
  int episodes = 0;
  int total_queries = 0;
  std::uint64_t seed = 0;
  PredictMode mode = PredictMode::fewshot;
  std::vector<double> per_episode;  ///< filled when EvalOptions::keep_per_episode
};

struct EvalOptions {
  std::optional<double> beta;             ///< defaults to the model's beta
  std::optional<int> queries_per_class;   ///< defaults to eval_queries_per_class
  int workers = 1;
  bool keep_per_episode = false;
};

inline double ci95_halfwidth(const std::vector<double>& samples) {
  const std::size_t n = samples.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double x : samples) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return 1.96 * sd / std::sqrt(static_cast<double>(n));
}

inline EvalReport evaluate(const Model& model, const Dataset& data, int way, int shot, int episodes, PredictMode mode,
                           std::uint64_t seed, const EvalOptions& opt = {}) {
  if (episodes < 1) throw Error(Errc::invalid_config, "episodes must be >= 1");
  if (opt.workers < 1) throw Error(Errc::invalid_config, "workers must be >= 1");
  const int queries = opt.queries_per_class.value_or(model.config.eval_queries_per_class);
  const double beta = opt.beta.value_or(model.config.beta);
  const TextEncoder text = make_text_encoder(model);

  // Fail fast on configurations the sampler rejects, before spawning workers.
  {
    Rng probe = derive_rng(seed, 0);
    (void)sample_episode(data, Split::novel, way, shot, queries, probe);
  }

  std::vector<int> correct(static_cast<std::size_t>(episodes), 0);
  std::vector<int> asked(static_cast<std::size_t>(episodes), 0);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto work = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= episodes) return;
      try {
        Rng rng = derive_rng(seed, static_cast<std::uint64_t>(i));
        const Episode ep = sample_episode(data, Split::novel, way, shot, queries, rng);
        const auto dists = predict_episode(model, data, ep, mode, beta, text);
        int hits = 0;
        for (std::size_t q = 0; q < dists.size(); ++q) {
          if (static_cast<int>(dists[q].argmax()) == ep.queries[q].label) ++hits;
        }
        correct[static_cast<std::size_t>(i)] = hits;
        asked[static_cast<std::size_t>(i)] = static_cast<int>(dists.size());
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(episodes);
        return;
      }
    }
  };

  if (opt.workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < opt.workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  EvalReport r;
  r.episodes = episodes;
  r.seed = seed;
  r.mode = mode;
  std::vector<double> acc(static_cast<std::size_t>(episodes));
  long long hits = 0;
  long long total = 0;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    hits += correct[i];
    total += asked[i];
    acc[i] = asked[i] > 0 ? static_cast<double>(correct[i]) / asked[i] : 0.0;
  }
  r.total_queries = static_cast<int>(total);
  r.mean_accuracy = total > 0 ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
  r.ci95 = ci95_halfwidth(acc);
  if (opt.keep_per_episode) r.per_episode = std::move(acc);
  return r;
}

}  // namespace fsar
