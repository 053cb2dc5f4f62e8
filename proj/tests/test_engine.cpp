#include "fsar/checkpoint.hpp"
#include "fsar/cli.hpp"
#include "fsar/evaluate.hpp"
#include "fsar/export.hpp"
#include "fsar/train.hpp"

#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fsar;

namespace {

RunConfig tiny_config(std::uint64_t seed = 3) {
  RunConfig c;
  c.seed = seed;
  c.frames = 4;
  c.embed_dim = 8;
  c.encoder_hidden = 12;
  c.transformer_heads = 2;
  c.transformer_ff_dim = 16;
  c.train_episodes = 30;
  c.log_every = 10;
  c.synthetic.num_classes = 16;
  c.synthetic.samples_per_class = 6;
  c.synthetic.frame_dim = 6;
  c.synthetic.frames_min = 3;
  c.synthetic.frames_max = 7;
  c.synthetic.base_fraction = 0.5;
  c.synthetic.seed = seed;
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("fsar_engine_" + name)).string();
}

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an fsar::Error");
  return Errc::usage;
}

int run_cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "fsar");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int rc = cli_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return rc;
}

/// Same task with classes listed in a different order; labels follow.
Episode permute_classes(const Episode& ep, const std::vector<int>& perm) {
  Episode out = ep;
  std::vector<int> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.support[i] = ep.support[static_cast<std::size_t>(perm[i])];
    out.class_ids[i] = ep.class_ids[static_cast<std::size_t>(perm[i])];
    inverse[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  }
  for (auto& q : out.queries) q.label = inverse[static_cast<std::size_t>(q.label)];
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

TEST_CASE("config text round-trips through the canonical form") {
  RunConfig c = tiny_config();
  c.metric = MetricKind::bi_mhm;
  c.beta = 0.4;
  c.learning_rate = 3e-4;
  c.prompt_template = "a video of [CLS] happening";
  c.synthetic.temporal_pattern = TemporalPattern::drifting;
  const RunConfig back = parse_config(to_config_text(c));
  CHECK(back == c);
  CHECK(config_hash(back) == config_hash(c));
  RunConfig d = c;
  d.alpha = 0.5;
  CHECK(config_hash(d) != config_hash(c));
}

TEST_CASE("config parser errors") {
  CHECK(code_of([] { parse_config("way = 5\n"); }) == Errc::invalid_config);               // no seed
  CHECK(code_of([] { parse_config("seed = 1\nwya = 5\n"); }) == Errc::invalid_config);     // unknown key
  CHECK(code_of([] { parse_config("seed = 1\nseed = 2\n"); }) == Errc::invalid_config);    // duplicate
  CHECK(code_of([] { parse_config("seed = 1\nway = five\n"); }) == Errc::invalid_config);  // bad int
  CHECK(code_of([] { parse_config("seed = 1\nway\n"); }) == Errc::invalid_config);         // no '='
  CHECK(code_of([] { parse_config("seed = 1\nalpha = -1\n"); }) == Errc::invalid_config);
  CHECK(code_of([] { parse_config("seed = 1\ntransformer_heads = 5\n"); }) == Errc::invalid_config);
  CHECK(code_of([] { parse_config("seed = 1\nuse_video_text = false\nalpha = 0\n"); }) == Errc::invalid_config);
  const RunConfig ok = parse_config("# comment\nseed = 9   # trailing\n\nway = 3\nuse_modulation = false\n");
  CHECK(ok.seed == 9);
  CHECK(ok.way == 3);
  CHECK_FALSE(ok.use_modulation);
}

TEST_CASE("all four ablation configurations run") {
  for (bool vt : {false, true}) {
    for (bool mod : {false, true}) {
      RunConfig c = tiny_config();
      c.train_episodes = 3;
      c.use_video_text = vt;
      c.use_modulation = mod;
      const Model m = train(c);
      CHECK(m.step == 3);
    }
  }
}

// ---------------------------------------------------------------------------
// Training

TEST_CASE("training is deterministic for a fixed seed") {
  const RunConfig c = tiny_config(5);
  CHECK(serialize_checkpoint(train(c)) == serialize_checkpoint(train(c)));
  CHECK(serialize_checkpoint(train(c)) != serialize_checkpoint(train(tiny_config(6))));
}

TEST_CASE("telemetry is emitted on the configured cadence") {
  std::vector<int> steps;
  train(tiny_config(), [&](const TrainTelemetry& t) {
    steps.push_back(t.step);
    CHECK(std::isfinite(t.loss));
    CHECK(t.tau > 0.0);
  });
  CHECK(steps == std::vector<int>{10, 20, 30});
}

TEST_CASE("alpha = 0 removes every few-shot gradient") {
  RunConfig c = tiny_config();
  const Dataset data = generate_synthetic(c.synthetic);
  const Model model = Model::init(c, data.frame_dim());
  const TextEncoder text = make_text_encoder(model);
  const Matrix base = base_text_matrix(data, text, PromptTemplate(c.prompt_template));
  Rng rng(1);
  const Episode ep = sample_episode(data, Split::base, c.way, c.shot, c.queries_per_class, rng);
  const EpisodeFrames frames = gather_frames(data, ep, c.frames, SampleMode::eval);

  auto grads = [&](const RunConfig& cfg) {
    ad::Tape tape;
    const BoundModel b = bind(model, &tape);
    const EpisodeLoss loss = episode_loss(b, cfg, data, ep, frames, text, base);
    tape.backward(loss.total);
    std::vector<Matrix> g;
    b.for_each_var([&](const ad::Var& v) { g.push_back(v.grad()); });
    return std::make_pair(loss.total.scalar(), g);
  };
  RunConfig zero = c;
  zero.alpha = 0.0;
  const auto [l0, g0] = grads(zero);
  const auto [l1, g1] = grads(c);
  CHECK(l0 < l1);
  // The transformer only feeds the few-shot head, so it gets no gradient at alpha = 0.
  std::size_t idx = 0;
  model.for_each_parameter([&](const std::string& name, const Matrix&) {
    if (name.rfind("transformer.", 0) == 0) CHECK((g0[idx].size() == 0 || g0[idx].cwiseAbs().maxCoeff() == 0.0));
    ++idx;
  });
  // Encoder gradients equal the video-text gradient alone.
  RunConfig vt_only = zero;
  const auto [l2, g2] = grads(vt_only);
  CHECK(l2 == l0);
  for (std::size_t i = 0; i < g0.size(); ++i) CHECK(g0[i] == g2[i]);
}

TEST_CASE("noise-free separable data trains to near-zero loss") {
  RunConfig c;
  c.seed = 1;
  c.train_episodes = 2000;
  c.log_every = 2000;
  c.synthetic.num_classes = 30;
  c.synthetic.visual_noise_sigma = 0.0;
  c.synthetic.base_fraction = 2.0 / 3.0;
  double final_loss = -1.0;
  train(c, [&](const TrainTelemetry& t) { final_loss = t.loss; });
  CHECK(final_loss >= 0.0);
  CHECK(final_loss < 0.1);
}

TEST_CASE("training rejects a base split smaller than the episode") {
  RunConfig c = tiny_config();
  c.way = 9;  // 8 base classes
  CHECK(code_of([&] { train(c); }) == Errc::insufficient_classes);
}

TEST_CASE("Adam matches a hand-computed first step") {
  Matrix p = Matrix::Constant(1, 2, 1.0);
  std::vector<Matrix*> params{&p};
  Adam adam(0.1, 0.9, 0.999, 1e-8);
  Matrix g(1, 2);
  g << 2.0, -0.5;
  adam.step(params, {g});
  // First bias-corrected step is lr * sign(g) up to eps.
  CHECK(p(0, 0) == Catch::Approx(0.9).epsilon(1e-7));
  CHECK(p(0, 1) == Catch::Approx(1.1).epsilon(1e-7));
}

// ---------------------------------------------------------------------------
// Prediction

TEST_CASE("prediction invariants on a trained tiny model") {
  RunConfig c = tiny_config();
  c.train_episodes = 40;
  const Dataset data = generate_synthetic(c.synthetic);
  const Model model = train(c, data);
  const TextEncoder text = make_text_encoder(model);
  Rng rng(8);
  const Episode ep = sample_episode(data, Split::novel, 5, 2, 2, rng);

  SECTION("distributions are valid") {
    for (PredictMode mode : {PredictMode::fewshot, PredictMode::ensemble, PredictMode::zeroshot}) {
      for (const auto& d : predict_episode(model, data, ep, mode)) {
        double s = 0.0;
        for (double p : d.probs) {
          CHECK(p >= 0.0);
          s += p;
        }
        CHECK(std::abs(s - 1.0) <= 1e-9);
        CHECK(d.class_ids == ep.class_ids);
      }
    }
  }

  SECTION("ensemble endpoints reproduce the single heads exactly") {
    const auto fs = predict_episode(model, data, ep, PredictMode::fewshot, 0.5, text);
    const auto e0 = predict_episode(model, data, ep, PredictMode::ensemble, 0.0, text);
    const auto zs = predict_episode(model, data, ep, PredictMode::zeroshot, 0.5, text);
    const auto e1 = predict_episode(model, data, ep, PredictMode::ensemble, 1.0, text);
    for (std::size_t q = 0; q < fs.size(); ++q) {
      CHECK(e0[q].probs == fs[q].probs);
      CHECK(e1[q].probs == zs[q].probs);
    }
  }

  SECTION("zero-shot ignores support videos") {
    Episode other = ep;
    for (std::size_t cidx = 0; cidx < other.support.size(); ++cidx) {
      // Swap in different videos of the same class.
      const auto& members = data.samples_of(other.class_ids[cidx]);
      for (auto& idx : other.support[cidx]) {
        for (auto candidate : members) {
          if (candidate != idx) {
            idx = candidate;
            break;
          }
        }
      }
    }
    const auto a = predict_episode(model, data, ep, PredictMode::zeroshot);
    const auto b = predict_episode(model, data, other, PredictMode::zeroshot);
    for (std::size_t q = 0; q < a.size(); ++q) CHECK(a[q].probs == b[q].probs);
  }

  SECTION("few-shot predictions follow a permutation of the support classes") {
    const std::vector<int> perm{3, 0, 4, 1, 2};
    const Episode permuted = permute_classes(ep, perm);
    const auto a = predict_episode(model, data, ep, PredictMode::fewshot);
    const auto b = predict_episode(model, data, permuted, PredictMode::fewshot);
    for (std::size_t q = 0; q < a.size(); ++q) {
      for (std::size_t i = 0; i < perm.size(); ++i) {
        CHECK(std::abs(b[q].probs[i] - a[q].probs[static_cast<std::size_t>(perm[i])]) <= 1e-12);
      }
      CHECK(static_cast<std::size_t>(perm[b[q].argmax()]) == a[q].argmax());
    }
  }
}

TEST_CASE("a query identical to a support video picks that class") {
  RunConfig c = tiny_config();
  c.use_modulation = false;  // keeps the query and support paths identical
  c.otam_lambda = 0.0;
  const Dataset data = generate_synthetic(c.synthetic);
  const Model model = Model::init(c, data.frame_dim());
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Episode ep = sample_episode(data, Split::novel, 5, 1, 1, rng);
    const int target = trial % 5;
    ep.queries = {{ep.support[static_cast<std::size_t>(target)][0], target}};
    const auto d = predict_episode(model, data, ep, PredictMode::fewshot);
    const double best = *std::max_element(d[0].probs.begin(), d[0].probs.end());
    CHECK(d[0].probs[static_cast<std::size_t>(target)] == best);
  }
}

TEST_CASE("prediction errors") {
  RunConfig c = tiny_config();
  c.use_video_text = false;
  const Dataset data = generate_synthetic(c.synthetic);
  const Model model = Model::init(c, data.frame_dim());
  Rng rng(10);
  const Episode ep = sample_episode(data, Split::novel, 5, 1, 1, rng);
  CHECK(code_of([&] { predict_episode(model, data, ep, PredictMode::ensemble); }) == Errc::mode_config_conflict);
  CHECK(code_of([&] { predict_episode(model, data, ep, PredictMode::zeroshot); }) == Errc::mode_config_conflict);

  SyntheticSpec wide = c.synthetic;
  wide.frame_dim = 9;
  const Dataset other = generate_synthetic(wide);
  CHECK(code_of([&] { predict_episode(model, other, ep, PredictMode::fewshot); }) == Errc::dimension_mismatch);
}

// ---------------------------------------------------------------------------
// Evaluation

TEST_CASE("confidence interval half-width") {
  std::vector<double> xs(10000);
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = (i % 5 == 0) ? 0.0 : 1.0;  // sd = 0.4
  CHECK(ci95_halfwidth(xs) == Catch::Approx(0.0078).margin(5e-5));
  CHECK(ci95_halfwidth({0.5}) == 0.0);
}

TEST_CASE("evaluation is independent of the worker count") {
  const RunConfig c = tiny_config();
  const Dataset data = generate_synthetic(c.synthetic);
  const Model model = train(c, data);
  EvalOptions one, four;
  four.workers = 4;
  one.keep_per_episode = four.keep_per_episode = true;
  const EvalReport a = evaluate(model, data, 5, 1, 60, PredictMode::fewshot, 17, one);
  const EvalReport b = evaluate(model, data, 5, 1, 60, PredictMode::fewshot, 17, four);
  CHECK(a.mean_accuracy == b.mean_accuracy);
  CHECK(a.ci95 == b.ci95);
  CHECK(a.per_episode == b.per_episode);
  CHECK(a.total_queries == 60 * 5);
  CHECK(a.mean_accuracy >= 0.0);
  CHECK(a.mean_accuracy <= 1.0);
  CHECK(code_of([&] { evaluate(model, data, 9, 1, 5, PredictMode::fewshot, 1); }) == Errc::insufficient_classes);
}

// ---------------------------------------------------------------------------
// Checkpoints

TEST_CASE("checkpoint round-trip is lossless") {
  const RunConfig c = tiny_config();
  const Dataset data = generate_synthetic(c.synthetic);
  const Model model = train(c, data);
  const std::string path = temp_path("model.ckpt");
  save_checkpoint(model, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.config == model.config);
  CHECK(back.step == model.step);
  CHECK(serialize_checkpoint(back) == serialize_checkpoint(model));
  const EvalReport a = evaluate(model, data, 5, 1, 30, PredictMode::ensemble, 4);
  const EvalReport b = evaluate(back, data, 5, 1, 30, PredictMode::ensemble, 4);
  CHECK(a.mean_accuracy == b.mean_accuracy);
  CHECK(a.ci95 == b.ci95);
  std::remove(path.c_str());
}

TEST_CASE("damaged checkpoints are rejected") {
  const Model model = train(tiny_config());
  const std::string bytes = serialize_checkpoint(model);

  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  CHECK(code_of([&] { deserialize_checkpoint(flipped); }) == Errc::malformed_file);
  CHECK(code_of([&] { deserialize_checkpoint(bytes.substr(0, bytes.size() - 5)); }) == Errc::malformed_file);
  CHECK(code_of([&] { deserialize_checkpoint("FSARDS1\nnot a checkpoint"); }) == Errc::schema_mismatch);

  // A future schema version with a valid checksum.
  std::string future = bytes.substr(0, bytes.size() - 8);
  future[8] = 2;
  io::put_u64(future, fnv1a(future));
  CHECK(code_of([&] { deserialize_checkpoint(future); }) == Errc::schema_mismatch);

  CHECK(code_of([&] { load_checkpoint(temp_path("does_not_exist.ckpt")); }) == Errc::io_failure);
}

// ---------------------------------------------------------------------------
// Feature export

TEST_CASE("feature export carries exact encoder outputs") {
  const RunConfig c = tiny_config();
  const Dataset data = generate_synthetic(c.synthetic);
  const Model model = train(c, data);
  std::ostringstream csv;
  export_features(model, data, csv);

  std::istringstream in(csv.str());
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("video_id,class_id,split,kind,frame,f0,", 0) == 0);

  std::map<std::pair<std::uint32_t, std::string>, Matrix> seen;
  std::string line;
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 5u + static_cast<std::size_t>(c.embed_dim));
    auto& m = seen[{static_cast<std::uint32_t>(std::stoul(cells[0])), cells[3]}];
    if (m.size() == 0) m = Matrix::Zero(c.frames, c.embed_dim);
    const int k = std::stoi(cells[4]);
    for (int j = 0; j < c.embed_dim; ++j) m(k, j) = std::strtod(cells[5 + j].c_str(), nullptr);
  }
  CHECK(seen.size() == 3 * data.samples().size());

  int differing = 0;
  for (const VideoSample& s : data.samples()) {
    const Matrix raw = encode_video(model.encoder, sparse_sample_frames(s, c.frames, SampleMode::eval));
    CHECK(seen.at({s.video_id, "raw"}) == raw);
    if ((seen.at({s.video_id, "support_modulated"}) - raw).norm() > 1e-9) ++differing;
  }
  CHECK(differing == static_cast<int>(data.samples().size()));
}

// ---------------------------------------------------------------------------
// Command line

TEST_CASE("CLI pipeline: gen-data, train, eval, zeroshot, export-features") {
  const std::string spec = temp_path("cli.spec");
  const std::string cfg = temp_path("cli.cfg");
  const std::string ds = temp_path("cli.ds");
  const std::string ckpt = temp_path("cli.ckpt");
  const std::string csv = temp_path("cli.csv");
  const std::string result = temp_path("cli.result");
  io::write_file(spec, to_spec_text(tiny_config().synthetic));
  io::write_file(cfg, to_config_text(tiny_config()));

  std::string out, err;
  CHECK(run_cli({"gen-data", "--spec", spec, "--out", ds}, &out, &err) == 0);
  CHECK(load_dataset(ds) == generate_synthetic(tiny_config().synthetic));
  CHECK(run_cli({"train", "--config", cfg, "--out", ckpt, "--quiet"}, &out, &err) == 0);
  CHECK(out.find("trained 30 episodes") != std::string::npos);

  CHECK(run_cli({"eval", "--ckpt", ckpt, "--data", ds, "--way", "5", "--shot", "1", "--episodes", "40", "--mode",
                 "ensemble", "--beta", "0.5", "--result", result},
                &out, &err) == 0);
  CHECK(out.find("+-") != std::string::npos);
  const std::string res = io::read_file(result);
  CHECK(res.find("mean_accuracy = ") != std::string::npos);
  CHECK(res.find("ci95 = ") != std::string::npos);
  CHECK(res.find("config_hash = ") != std::string::npos);
  CHECK(res.find("mode = ensemble") != std::string::npos);

  CHECK(run_cli({"zeroshot", "--ckpt", ckpt, "--data", ds, "--episodes", "20", "--result", result}, &out, &err) == 0);
  CHECK(io::read_file(result).find("mode = zeroshot") != std::string::npos);

  CHECK(run_cli({"export-features", "--ckpt", ckpt, "--data", ds, "--out", csv}, &out, &err) == 0);
  CHECK(io::read_file(csv).find("support_modulated") != std::string::npos);

  for (const auto& p : {spec, cfg, ds, ckpt, csv, result, ds + ".result", ckpt + ".result"}) std::remove(p.c_str());
}

TEST_CASE("CLI error handling and exit codes") {
  std::string out, err;
  CHECK(run_cli({"eval", "--bogus"}, &out, &err) == 2);
  CHECK(err.find("Usage") != std::string::npos);
  CHECK(run_cli({}, &out, &err) == 2);
  CHECK(run_cli({"--help"}, &out, &err) == 0);
  CHECK(run_cli({"eval", "--ckpt", "x", "--data", "y", "--mode", "sideways"}, &out, &err) == 2);
  CHECK(run_cli({"train", "--config", temp_path("missing.cfg"), "--out", temp_path("x.ckpt")}, &out, &err) == 5);

  const std::string cfg = temp_path("bad.cfg");
  io::write_file(cfg, "seed = 1\nway = 0\n");
  CHECK(run_cli({"train", "--config", cfg, "--out", temp_path("x.ckpt")}, &out, &err) == 2);

  const std::string junk = temp_path("junk.ckpt");
  io::write_file(junk, "FSARCKPT garbage");
  CHECK(run_cli({"eval", "--ckpt", junk, "--data", junk, "--episodes", "1"}, &out, &err) == 3);
  std::remove(cfg.c_str());
  std::remove(junk.c_str());
}

#ifdef FSAR_CLI_PATH
TEST_CASE("installed binary reports usage errors through its exit status") {
  const std::string cmd = std::string(FSAR_CLI_PATH) + " eval --bogus > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 2);
}
#endif
