#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vcfl/annotation.hpp"
#include "vcfl/annotation_server.hpp"
#include "vcfl/campaign.hpp"
#include "vcfl/error.hpp"
#include "vcfl/experiment.hpp"
#include "vcfl/idx.hpp"
#include "vcfl/macro.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vcfl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitVerification = 3;
constexpr int kExitIo = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::Parse:
    case ErrorCode::UnknownObservationalClass: return kExitConfig;
    case ErrorCode::Io:
    case ErrorCode::TruncatedFile:
    case ErrorCode::BadMagic:
    case ErrorCode::CountMismatch:
    case ErrorCode::HashMismatch: return kExitIo;
    default: return 1;
  }
}

struct Common {
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

ExperimentConfig load_config(const Common& c) {
  json j = json::object();
  if (!c.config_path.empty()) {
    try {
      j = json::parse(read_text_file(c.config_path));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Parse, c.config_path + ": " + e.what());
    }
  }
  if (c.seed_opt && c.seed_opt->count() > 0) j["seed"] = c.seed;
  if (!c.out.empty()) j["output_dir"] = c.out;
  ExperimentConfig cfg;
  try {
    cfg = j.get<ExperimentConfig>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "experiment config (JSON)");
  cmd->add_option("--out", c.out, "output directory");
  // one Common is shared by all subcommands; only the parsed one counts
  auto* opt = cmd->add_option("--seed", c.seed, "overrides the config seed");
  cmd->parse_complete_callback([&c, opt] { c.seed_opt = opt; });
}

// Runs a command body under a RunLog; the log marks the run incomplete if
// the body throws.
template <class Body>
int logged(const ExperimentConfig& cfg, const std::string& command, Body&& body) {
  RunLog log(cfg.output_dir, config_hash(cfg), command);
  try {
    const auto [code, queries] = body(log);
    log.finish(code == kExitOk ? "complete" : "verification-failed", queries);
    if (code == kExitVerification)
      std::cerr << json{{"error", "verification-failed"}, {"message", command + ": check did not hold"}}.dump()
                << '\n';
    return code;
  } catch (const std::exception& e) {
    log.fail(e.what());
    throw;
  }
}

json world_report(const DiscreteWorld& w, double tol) {
  const auto obs = observational_partition(w, tol);
  const auto cau = causal_partition(w, tol);
  return {{"world", w},
          {"observational", obs},
          {"causal", cau},
          {"causal_coarsens_observational", is_coarsening(cau, obs)},
          {"observational_coarsens_causal", is_coarsening(obs, cau)}};
}

std::string write_artifact(RunLog& log, const fs::path& path, const std::string& text) {
  write_text_file(path, text);
  log.artifact(path);
  return path.string();
}

AnnotationServer* g_server = nullptr;

void handle_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual causal feature learning: worlds, causal coarsening checks, grating experiments "
               "and the annotation service"};
  app.require_subcommand(1);
  Common common;

  // world
  auto* world = app.add_subcommand("world", "sample worlds and inspect their partitions");
  world->require_subcommand(1);
  std::size_t wk = 2, wn = 4, perturbations = 100;
  double delta = 1e-3;
  std::string kind_text = "obs-coarsens-causal";
  auto* w_sample = world->add_subcommand("sample", "unconstrained random world");
  auto* w_constrained = world->add_subcommand("constrained", "world with a random prescribed observational partition");
  auto* w_violation = world->add_subcommand("violation", "measure-zero world violating causal coarsening");
  for (auto* c : {w_sample, w_constrained, w_violation}) {
    add_common(c, common);
    c->add_option("--k", wk, "hidden states")->check(CLI::PositiveNumber);
    c->add_option("--n", wn, "images")->check(CLI::PositiveNumber);
  }
  w_violation->add_option("--kind", kind_text, "obs-coarsens-causal | incomparable");
  w_violation->add_option("--perturbations", perturbations, "random alpha perturbations to try");
  w_violation->add_option("--delta", delta, "perturbation size");

  // cct-sweep
  auto* sweep = app.add_subcommand("cct-sweep", "causal coarsening campaign over constrained worlds");
  add_common(sweep, common);
  CctSweepConfig sweep_cfg;
  std::string sweep_mode = "constrained";
  sweep->add_option("--trials", sweep_cfg.trials, "number of worlds");
  sweep->add_option("--mode", sweep_mode, "constrained | auxiliary");
  sweep->add_option("--tol", sweep_cfg.tolerance, "partition tolerance");

  // theorem2-check, appendix9
  auto* t2 = app.add_subcommand("theorem2-check", "complete-description check with full partition enumeration");
  add_common(t2, common);
  Theorem2Config t2_cfg;
  t2->add_option("--worlds", t2_cfg.worlds, "number of worlds");
  t2->add_option("--max-n", t2_cfg.n_max, "largest image count (<= 8)");
  auto* a9 = app.add_subcommand("appendix9", "the two-image confounded example");
  add_common(a9, common);

  // grating
  auto* grating = app.add_subcommand("grating", "bars experiment");
  grating->require_subcommand(1);
  auto* g_gen = grating->add_subcommand("gen", "generate the observational dataset");
  auto* g_train = grating->add_subcommand("train", "causal predictor from coarsened observational data");
  auto* g_manip = grating->add_subcommand("manipulate", "one manipulation with a trained predictor");
  auto* g_run = grating->add_subcommand("run", "full manipulator learning loop with the synthetic oracle");
  for (auto* c : {g_gen, g_train, g_manip, g_run}) add_common(c, common);
  std::string checkpoint_path;
  double target = 0.8;
  int src_h1 = -1, src_h2 = -1;
  bool strict_hash = false;
  g_manip->add_option("--checkpoint", checkpoint_path, "predictor checkpoint")->required();
  g_manip->add_option("--target", target, "target causal value");
  g_manip->add_option("--h1", src_h1, "force H1 of the source image");
  g_manip->add_option("--h2", src_h2, "force H2 of the source image");
  g_manip->add_flag("--strict", strict_hash, "fail when the checkpoint comes from another config");
  std::size_t gallery = 16;
  g_run->add_option("--gallery", gallery, "before/after pairs written per round");

  // serve
  auto* serve = app.add_subcommand("serve", "annotation service (human oracle)");
  add_common(serve, common);
  ServerConfig server_cfg;
  AnnotationConfig ann_cfg;
  std::string state_dir, annotation_config_path;
  std::vector<std::string> tokens;
  serve->add_option("--port", server_cfg.port, "TCP port");
  serve->add_option("--host", server_cfg.host, "bind address");
  serve->add_option("--state-dir", state_dir, "event log and snapshot directory");
  serve->add_option("--admin-token", server_cfg.admin_token, "bearer token for admin endpoints");
  serve->add_option("--token", tokens, "accepted annotator token (repeatable)");
  serve->add_option("--annotation-config", annotation_config_path, "grid, pages, quorum (JSON)");

  // annotate-merge
  auto* merge = app.add_subcommand("annotate-merge", "fold a commit delta into a causal dataset");
  add_common(merge, common);
  std::string delta_path, dataset_path, merged_path;
  std::size_t merge_round = 0;
  merge->add_option("--delta", delta_path, "commit delta JSON")->required();
  merge->add_option("--dataset", dataset_path, "causal dataset JSONL")->required();
  merge->add_option("--output", merged_path, "merged dataset (default: overwrite --dataset)");
  merge->add_option("--round", merge_round, "round index recorded on merged records");

  // ingest-idx
  auto* idx = app.add_subcommand("ingest-idx", "read IDX images (and labels) into JSONL");
  add_common(idx, common);
  std::string idx_images, idx_labels;
  bool header_only = false;
  idx->add_option("--images", idx_images, "IDX image file")->required();
  idx->add_option("--labels", idx_labels, "IDX label file");
  idx->add_flag("--header-only", header_only, "only report the header");

  // config
  auto* show = app.add_subcommand("config", "print the effective experiment config and its hash");
  add_common(show, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    const auto cfg = load_config(common);
    const double tol = cfg.tolerance;

    if (show->parsed()) {
      print({{"config", cfg}, {"config_hash", config_hash(cfg)}});
      return kExitOk;
    }

    if (w_sample->parsed() || w_constrained->parsed()) {
      return logged(cfg, w_sample->parsed() ? "world sample" : "world constrained", [&](RunLog& log) {
        Rng rng(cfg.seed);
        json out;
        if (w_sample->parsed()) {
          out = world_report(sample_world(wk, wn, rng), tol);
        } else {
          const auto spec = random_observational_spec(wn, rng);
          json target = json::array();
          for (const auto& c : spec) target.push_back({{"images", c.images}, {"value", c.value}});
          out = world_report(sample_world_constrained(spec, wk, rng), tol);
          out["target"] = target;
        }
        out["config_hash"] = config_hash(cfg);
        write_artifact(log, fs::path(cfg.output_dir) / "world.json", out.dump(2));
        print(out);
        return std::pair{kExitOk, std::size_t{0}};
      });
    }

    if (w_violation->parsed()) {
      return logged(cfg, "world violation", [&](RunLog& log) {
        const auto kind = parse_violation_kind(kind_text);
        const auto r = run_counterexample(kind, wk, wn, cfg.seed, perturbations, delta, tol);
        json out = r;
        out["config_hash"] = config_hash(cfg);
        write_artifact(log, fs::path(cfg.output_dir) / "violation.json", out.dump(2));
        print(out);
        const bool ok = r.violation_verified && r.restored == r.perturbations;
        return std::pair{ok ? kExitOk : kExitVerification, std::size_t{0}};
      });
    }

    if (sweep->parsed()) {
      return logged(cfg, "cct-sweep", [&](RunLog& log) {
        sweep_cfg.mode = parse_sweep_mode(sweep_mode);
        sweep_cfg.seed = cfg.seed;
        const auto r = run_cct_sweep(sweep_cfg);
        json out = r;
        out["mode"] = std::string(to_string(sweep_cfg.mode));
        out["config_hash"] = config_hash(cfg);
        write_artifact(log, fs::path(cfg.output_dir) / "cct_sweep.json", out.dump(2));
        out.erase("examples");
        print(out);
        return std::pair{r.violations == 0 ? kExitOk : kExitVerification, std::size_t{0}};
      });
    }

    if (t2->parsed()) {
      return logged(cfg, "theorem2-check", [&](RunLog& log) {
        t2_cfg.seed = cfg.seed;
        t2_cfg.tolerance = tol;
        const auto r = run_theorem2(t2_cfg);
        json out = r;
        out["config_hash"] = config_hash(cfg);
        write_artifact(log, fs::path(cfg.output_dir) / "theorem2.json", out.dump(2));
        print(out);
        return std::pair{r.passed == r.worlds ? kExitOk : kExitVerification, std::size_t{0}};
      });
    }

    if (a9->parsed()) {
      return logged(cfg, "appendix9", [&](RunLog& log) {
        const auto r = appendix9_example(appendix9_world());
        json out = r;
        out["config_hash"] = config_hash(cfg);
        write_artifact(log, fs::path(cfg.output_dir) / "appendix9.json", out.dump(2));
        print(out);
        return std::pair{r.passed() ? kExitOk : kExitVerification, std::size_t{0}};
      });
    }

    if (g_gen->parsed()) {
      return logged(cfg, "grating gen", [&](RunLog& log) {
        Rng rng(derive_seed(cfg.seed, 1));
        const auto data = generate_observational_dataset(cfg.grating, cfg.observations, rng);
        const auto path = write_artifact(log, fs::path(cfg.output_dir) / "observational.jsonl",
                                         dataset_to_jsonl(data, config_hash(cfg)));
        print({{"records", data.size()}, {"path", path}, {"config_hash", config_hash(cfg)}});
        return std::pair{kExitOk, std::size_t{0}};
      });
    }

    if (g_train->parsed()) {
      return logged(cfg, "grating train", [&](RunLog& log) {
        std::vector<ObservationalRecord> data;
        if (cfg.dataset_path) {
          data = dataset_from_jsonl(read_text_file(*cfg.dataset_path));
        } else {
          Rng rng(derive_seed(cfg.seed, 1));
          data = generate_observational_dataset(cfg.grating, cfg.observations, rng);
        }
        GratingOracle oracle(cfg.grating, cfg.oracle_mode, derive_seed(cfg.seed, 3));
        const auto classes = observational_classes(data, tol);
        const auto r = causal_predictor_training(data, classes, oracle, cfg.train, cfg.pipeline.hidden_units,
                                                 cfg.reps, tol);
        const auto hash = config_hash(cfg);
        const fs::path dir = cfg.output_dir;
        write_artifact(log, dir / "checkpoint.json",
                       checkpoint_to_json({r.predictor, cfg.train, cfg.train.seed, hash}).dump());
        write_artifact(log, dir / "causal.jsonl", causal_dataset_to_jsonl(r.dataset, hash));
        print({{"observational_classes", r.class_values},
               {"causal_estimates", r.causal_estimates},
               {"representatives", r.representatives},
               {"oracle_queries", r.oracle_queries},
               {"initial_loss", r.training.initial_loss},
               {"final_loss", r.training.final_loss},
               {"non_decreasing", r.training.non_decreasing},
               {"config_hash", hash}});
        return std::pair{kExitOk, r.oracle_queries};
      });
    }

    if (g_manip->parsed()) {
      return logged(cfg, "grating manipulate", [&](RunLog& log) {
        const auto hash = config_hash(cfg);
        if (strict_hash) verify_artifact(checkpoint_path, hash);
        json ckj;
        try {
          ckj = json::parse(read_text_file(checkpoint_path));
        } catch (const json::exception& e) {
          throw Error(ErrorCode::Parse, checkpoint_path + ": " + e.what());
        }
        const auto ck = checkpoint_from_json(ckj);
        Rng rng(derive_seed(cfg.seed, 4));
        auto pin = [](int v) { return v < 0 ? std::nullopt : std::optional<int>(v != 0); };
        const auto src = grating_sample(cfg.grating, rng, pin(src_h1), pin(src_h2));
        const auto rec = manipulate(ck.model, src.pixels, target, cfg.pipeline.alpha, cfg.pipeline.optimizer,
                                    derive_seed(cfg.seed, 5));
        GratingOracle oracle(cfg.grating, OracleMode::Exact);
        const fs::path dir = cfg.output_dir;
        write_artifact(log, dir / "source.pbm", to_pbm(rec.source));
        write_artifact(log, dir / "manipulated.pbm", to_pbm(rec.output));
        print({{"target", rec.target},
               {"predictor_value", rec.predictor_value},
               {"exact_causal_value", oracle.exact(rec.output)},
               {"source_hbar", detect_hbar(rec.source)},
               {"output_hbar", detect_hbar(rec.output)},
               {"distance", rec.distance},
               {"objective", rec.objective},
               {"checkpoint_config_hash", ck.config_hash},
               {"config_hash", hash}});
        return std::pair{kExitOk, std::size_t{0}};
      });
    }

    if (g_run->parsed()) {
      return logged(cfg, "grating run", [&](RunLog& log) {
        const auto hash = config_hash(cfg);
        const auto run = run_grating(cfg);
        for (const auto& m : run.learning.metrics) log.round(m);
        const fs::path dir = cfg.output_dir;
        write_artifact(log, dir / "metrics.csv", metrics_to_csv(run.learning.metrics, hash));
        write_artifact(log, dir / "checkpoint.json",
                       checkpoint_to_json({run.learning.predictor, cfg.pipeline.round_train, cfg.seed, hash}).dump());
        write_artifact(log, dir / "causal.jsonl", causal_dataset_to_jsonl(run.learning.dataset, hash));
        for (std::size_t r = 0; r < run.learning.rounds.size(); ++r)
          for (const auto& p : write_gallery(dir / "gallery", r + 1, run.learning.rounds[r], gallery)) log.artifact(p);
        json summary{{"rounds", run.learning.metrics},
                     {"oracle_queries", run.oracle_queries},
                     {"algorithm1_queries", run.algorithm1.oracle_queries},
                     {"vbar_insensitivity", run.vbar_insensitivity},
                     {"seconds", run.seconds},
                     {"config_hash", hash}};
        write_artifact(log, dir / "summary.json", summary.dump(2));
        log.note("vbar_insensitivity", run.vbar_insensitivity);
        print(summary);
        return std::pair{kExitOk, run.oracle_queries};
      });
    }

    if (serve->parsed()) {
      if (!annotation_config_path.empty()) {
        try {
          ann_cfg = json::parse(read_text_file(annotation_config_path)).get<AnnotationConfig>();
        } catch (const json::exception& e) {
          throw Error(ErrorCode::Parse, annotation_config_path + ": " + e.what());
        }
      }
      server_cfg.annotator_tokens = {tokens.begin(), tokens.end()};
      std::optional<fs::path> dir;
      if (!state_dir.empty()) dir = state_dir;
      AnnotationStore store(ann_cfg, dir);
      AnnotationServer server(store, server_cfg);
      RunLog log(cfg.output_dir, config_hash(cfg), "serve");
      log.note("listen", server_cfg.host + ":" + std::to_string(server_cfg.port));
      if (server_cfg.admin_token.empty())
        std::cerr << "warning: no --admin-token, admin endpoints are open" << std::endl;
      std::cerr << "serving on " << server_cfg.host << ":" << server_cfg.port << std::endl;
      g_server = &server;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      server.listen();
      g_server = nullptr;
      store.snapshot();
      log.finish("complete", 0);
      return kExitOk;
    }

    if (merge->parsed()) {
      return logged(cfg, "annotate-merge", [&](RunLog& log) {
        CommitDelta d;
        try {
          d = json::parse(read_text_file(delta_path)).get<CommitDelta>();
        } catch (const json::exception& e) {
          throw Error(ErrorCode::Parse, delta_path + ": " + e.what());
        }
        std::string hash;
        auto data = causal_dataset_from_jsonl(read_text_file(dataset_path), &hash);
        const auto before = data.size();
        merge_commit(data, d, merge_round);
        const auto out = merged_path.empty() ? dataset_path : merged_path;
        write_artifact(log, out, causal_dataset_to_jsonl(data, hash));
        print({{"merged", data.size() - before}, {"records", data.size()}, {"pending", d.pending}, {"path", out}});
        return std::pair{kExitOk, d.records.size()};
      });
    }

    if (idx->parsed()) {
      return logged(cfg, "ingest-idx", [&](RunLog& log) {
        const auto h = read_idx_header(fs::path(idx_images));
        if (header_only) {
          print({{"magic", h.magic}, {"count", h.count}, {"rows", h.rows}, {"cols", h.cols}});
          return std::pair{kExitOk, std::size_t{0}};
        }
        const auto data = ingest_idx_images(idx_images, idx_labels.empty()
                                                            ? std::nullopt
                                                            : std::optional<fs::path>(idx_labels));
        std::string text = json{{"header", {{"config_hash", config_hash(cfg)}, {"format", "vcfl-idx/1"}}}}.dump() + "\n";
        for (const auto& r : data.records) {
          json line{{"rows", data.rows}, {"cols", data.cols}, {"pixels", r.image.to_base64()}};
          if (r.label) line["label"] = *r.label;
          text += line.dump() + "\n";
        }
        const auto path = write_artifact(log, fs::path(cfg.output_dir) / "idx.jsonl", text);
        print({{"records", data.records.size()}, {"rows", data.rows}, {"cols", data.cols}, {"path", path}});
        return std::pair{kExitOk, std::size_t{0}};
      });
    }
  } catch (const Error& e) {
    std::cerr << json{{"error", std::string(to_string(e.code()))}, {"message", e.what()}}.dump() << std::endl;
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << json{{"error", "Io"}, {"message", e.what()}}.dump() << std::endl;
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump() << std::endl;
    return 1;
  }
  return kExitOk;
}
