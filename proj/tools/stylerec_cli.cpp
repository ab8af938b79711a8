/**
 * @file stylerec_cli.cpp
 * @brief Command-line front end: ingest, synth, train-pair, train-attention,
 *        eval, generate, export and serve.
 */
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "stylerec/catalog.hpp"
#include "stylerec/composer.hpp"
#include "stylerec/digest.hpp"
#include "stylerec/evaluation.hpp"
#include "stylerec/http.hpp"
#include "stylerec/outfit_models.hpp"
#include "stylerec/pair_model.hpp"
#include "stylerec/service.hpp"
#include "stylerec/synth.hpp"

using namespace stylerec;

namespace {

/// Corpus plus the windows selected for one split (all windows when no
/// split file is given).
struct Data {
  Corpus corpus;
  std::vector<TimeWindow> windows;
  std::vector<TimeWindow> selected;
  std::string digest;
};

Data load_data(const std::string& corpus_path, const std::string& splits_path, std::size_t window_size,
               std::optional<Split> split) {
  Data d;
  const std::string text = read_file(corpus_path);
  d.digest = content_digest(text);
  std::istringstream in(text);
  d.corpus = parse_corpus(in);
  if (!splits_path.empty()) {
    const SplitFile f = split_file_from_string(read_file(splits_path));
    d.windows = window_split(d.corpus, f.window_size);
    if (f.assignment.by_window.size() != d.windows.size()) {
      throw InvalidArgument("split file covers " + std::to_string(f.assignment.by_window.size()) +
                            " windows but the corpus has " + std::to_string(d.windows.size()));
    }
    if (split) {
      d.selected = select_windows(d.windows, f.assignment.windows_in(*split));
    } else {
      d.selected = d.windows;
    }
  } else {
    d.windows = window_split(d.corpus, window_size);
    d.selected = d.windows;
  }
  if (d.selected.empty()) throw InvalidArgument("no windows selected");
  return d;
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    write_file(path, text);
  }
}

std::vector<Slot> parse_slot_list(const std::string& csv) {
  std::vector<Slot> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_slot(item));
  }
  return out;
}

std::optional<AttentionModel> maybe_attention(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_attention_model(path);
}

// ---- ingest -----------------------------------------------------------------

struct IngestArgs {
  std::string input, output, splits_output;
  std::size_t min_frequency = 3;
  std::size_t window_size = 1000;
  SplitFractions fractions;
  std::uint64_t seed = 0;
};

void add_ingest(CLI::App& app, IngestArgs& a) {
  auto* c = app.add_subcommand("ingest", "Clean a raw outfit file and assign windows to splits");
  c->add_option("--input", a.input, "Raw outfit JSONL")->required();
  c->add_option("--output", a.output, "Canonical corpus JSONL")->required();
  c->add_option("--splits-output", a.splits_output, "Split assignment file");
  c->add_option("--min-frequency", a.min_frequency, "Drop products seen in fewer outfits")->capture_default_str();
  c->add_option("--window-size", a.window_size, "Outfits per time window")->capture_default_str();
  c->add_option("--train", a.fractions.train, "Train fraction of windows")->capture_default_str();
  c->add_option("--validation", a.fractions.validation, "Validation fraction")->capture_default_str();
  c->add_option("--test", a.fractions.test, "Test fraction")->capture_default_str();
  c->add_option("--seed", a.seed, "Seed for dedupe and split shuffling")->capture_default_str();
  c->callback([&a] {
    const auto raw = load_corpus(a.input);
    const auto pre = preprocess(raw, a.min_frequency, a.seed);
    save_corpus(a.output, pre.corpus);
    const auto& s = pre.stats;
    std::fprintf(stderr,
                 "ingest: %zu outfits kept, %zu products removed, %zu memberships removed, %zu deduplicated, "
                 "%zu outfits dropped\n",
                 pre.corpus.size(), s.removed_products, s.removed_memberships, s.deduplicated, s.dropped_outfits);
    if (s.warnings > 0) std::fprintf(stderr, "ingest: warning: corpus is empty after preprocessing\n");
    if (!a.splits_output.empty()) {
      const auto windows = window_split(pre.corpus, a.window_size);
      SplitFile f{a.window_size, a.seed, assign_splits(windows, a.fractions, a.seed)};
      write_file(a.splits_output, split_file_to_string(f));
    }
  });
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
  synth::SynthConfig config;
  std::string output, truth;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* c = app.add_subcommand("synth", "Generate a synthetic corpus with planted styles");
  auto& k = a.config;
  c->add_option("--output", a.output, "Corpus JSONL")->required();
  c->add_option("--truth", a.truth, "Hidden style sidecar JSONL");
  c->add_option("--products", k.n_products)->capture_default_str();
  c->add_option("--outfits", k.n_outfits)->capture_default_str();
  c->add_option("--clusters", k.n_clusters)->capture_default_str();
  c->add_option("--dim", k.d_true, "Dimension of hidden style vectors")->capture_default_str();
  c->add_option("--min-size", k.min_outfit_size)->capture_default_str();
  c->add_option("--max-size", k.max_outfit_size)->capture_default_str();
  c->add_option("--temperature", k.noise_temperature, "0 = argmax, inf = popularity only")->capture_default_str();
  c->add_option("--style-noise", k.style_noise)->capture_default_str();
  c->add_option("--popularity-exponent", k.popularity_exponent)->capture_default_str();
  c->add_option("--seed", k.seed)->capture_default_str();
  c->callback([&a] {
    const auto cat = synth::generate_catalog(a.config);
    const auto s = synth::generate_outfits(cat, a.config);
    save_corpus(a.output, s.corpus);
    if (!a.truth.empty()) {
      std::ostringstream out;
      synth::write_truth(out, cat);
      write_file(a.truth, out.str());
    }
  });
}

// ---- train-pair ---------------------------------------------------------------

struct TrainPairArgs {
  std::string corpus, splits, output, tsv;
  std::size_t window_size = 1000;
  TrainConfig config;
  bool no_subsample = false;
  bool uniform_negatives = false;
  bool quiet = false;
};

void add_train_pair(CLI::App& app, TrainPairArgs& a) {
  auto* c = app.add_subcommand("train-pair", "Train pairwise embeddings on the train windows");
  auto& k = a.config;
  c->add_option("--corpus", a.corpus)->required();
  c->add_option("--splits", a.splits, "Split file; without it every window is used");
  c->add_option("--window-size", a.window_size, "Used when no split file is given")->capture_default_str();
  c->add_option("--output", a.output, "Model file")->required();
  c->add_option("--tsv", a.tsv, "Also write an embedding TSV");
  c->add_option("--m", k.m, "Embedding dimension")->capture_default_str();
  c->add_option("--epochs", k.epochs)->capture_default_str();
  c->add_option("--negatives", k.n_pair, "Negatives per positive pair")->capture_default_str();
  c->add_option("--rho", k.rho, "Subsampling threshold")->capture_default_str();
  c->add_option("--lr", k.learning_rate, "AdaGrad learning rate")->capture_default_str();
  c->add_option("--seed", k.seed)->capture_default_str();
  c->add_flag("--no-subsample", a.no_subsample, "Keep every positive pair");
  c->add_flag("--uniform-negatives", a.uniform_negatives, "Draw negatives uniformly from the slot pool");
  c->add_flag("--weight-by-outfit-size", k.weight_by_outfit_size, "Scale pair gradients by 1/|outfit|");
  c->add_flag("--quiet", a.quiet, "No per-epoch progress");
  c->callback([&a] {
    TrainConfig k = a.config;
    k.subsample = !a.no_subsample;
    if (a.uniform_negatives) k.negatives = NegativeDistribution::uniform;
    const Data d = load_data(a.corpus, a.splits, a.window_size, Split::train);
    TrainReport report;
    const PairModel model = train(d.corpus, d.selected, k, &report);
    if (!a.quiet) {
      for (std::size_t e = 0; e < report.epoch_mean_log_prob.size(); ++e) {
        std::fprintf(stderr, "epoch %zu: %zu batches, mean log-prob %.6f\n", e + 1, report.epoch_batches[e],
                     report.epoch_mean_log_prob[e]);
      }
    }
    if (a.tsv.empty()) {
      save_pair_model(a.output, model);
    } else {
      export_embeddings(model, a.output, a.tsv);
    }
  });
}

// ---- train-attention ----------------------------------------------------------

struct TrainAttentionArgs {
  std::string corpus, splits, pair_model, output;
  std::size_t window_size = 1000;
  AttentionTrainConfig config;
  bool uniform_negatives = false;
  bool quiet = false;
};

void add_train_attention(CLI::App& app, TrainAttentionArgs& a) {
  auto* c = app.add_subcommand("train-attention", "Train slot-pair attention logits over a frozen pair model");
  auto& k = a.config;
  c->add_option("--corpus", a.corpus)->required();
  c->add_option("--splits", a.splits);
  c->add_option("--window-size", a.window_size)->capture_default_str();
  c->add_option("--pair-model", a.pair_model)->required();
  c->add_option("--output", a.output)->required();
  c->add_option("--epochs", k.epochs)->capture_default_str();
  c->add_option("--lr", k.learning_rate)->capture_default_str();
  c->add_option("--negatives", k.n_outfit, "Negative queries per outfit sample")->capture_default_str();
  c->add_option("--seed", k.seed)->capture_default_str();
  c->add_flag("--uniform-negatives", a.uniform_negatives);
  c->add_flag("--quiet", a.quiet);
  c->callback([&a] {
    AttentionTrainConfig k = a.config;
    if (a.uniform_negatives) k.negatives = NegativeDistribution::uniform;
    const Data d = load_data(a.corpus, a.splits, a.window_size, Split::train);
    const std::string pair_text = read_file(a.pair_model);
    const PairModel pair = pair_model_from_string(pair_text);
    AttentionTrainReport report;
    AttentionModel model = train_attention(pair, d.corpus, d.selected, k, &report);
    model.pair_model_ref = content_digest(pair_text);
    if (!a.quiet) {
      for (std::size_t e = 0; e < report.epoch_mean_loss.size(); ++e) {
        std::fprintf(stderr, "epoch %zu: mean loss %.6f\n", e + 1, report.epoch_mean_loss[e]);
      }
    }
    save_attention_model(a.output, model);
  });
}

// ---- eval -----------------------------------------------------------------------

struct EvalArgs {
  std::string corpus, splits, pair_model, attention_model, output;
  std::size_t window_size = 1000;
  std::string split = "test";
  std::string model = "mean";
  std::string metric = "all";
  std::vector<std::size_t> fitb_n = {4, 10};
  std::size_t negatives = 19;
  std::size_t instances = 0;
  std::uint64_t seed = 0;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* c = app.add_subcommand("eval", "Score held-out windows and write a metric report");
  c->add_option("--corpus", a.corpus)->required();
  c->add_option("--splits", a.splits);
  c->add_option("--window-size", a.window_size)->capture_default_str();
  c->add_option("--split", a.split)->check(CLI::IsMember({"train", "validation", "test"}))->capture_default_str();
  c->add_option("--pair-model", a.pair_model)->required();
  c->add_option("--attention-model", a.attention_model);
  c->add_option("--model", a.model)->check(CLI::IsMember({"pair", "mean", "attention"}))->capture_default_str();
  c->add_option("--metric", a.metric)
      ->check(CLI::IsMember({"top2", "hitrate", "fitb", "aps", "all"}))
      ->capture_default_str();
  c->add_option("--n", a.fitb_n, "FITB candidate counts")->capture_default_str();
  c->add_option("--negatives", a.negatives, "Negatives per ranked list")->capture_default_str();
  c->add_option("--instances", a.instances, "Cap on instances per metric, 0 = all")->capture_default_str();
  c->add_option("--seed", a.seed)->capture_default_str();
  c->add_option("--output", a.output, "Report path, stdout when omitted");
  c->callback([&a] {
    const Split split = parse_split(a.split);
    const Data d = load_data(a.corpus, a.splits, a.window_size, a.splits.empty() ? std::nullopt : std::optional(split));
    const std::string pair_text = read_file(a.pair_model);
    const PairModel pair = pair_model_from_string(pair_text);
    const auto attention = maybe_attention(a.attention_model);

    EvalOptions opt;
    opt.model = parse_scoring_model(a.model);
    opt.negatives = a.negatives;
    opt.max_instances = a.instances;
    opt.seed = a.seed;
    const bool all = a.metric == "all";
    opt.list_metrics = all || a.metric == "top2" || a.metric == "hitrate" || a.metric == "aps";
    if (!(all || a.metric == "fitb") || opt.model == ScoringModel::pair) opt.fitb_n.clear();
    else opt.fitb_n = a.fitb_n;
    if (a.metric == "fitb" && opt.model == ScoringModel::pair) {
      throw InvalidArgument("FITB needs an outfit model (mean or attention)");
    }
    const auto metrics = evaluate(d.corpus, d.selected, pair, attention ? &*attention : nullptr, opt);

    nlohmann::ordered_json report;
    report["format_version"] = 1;
    report["kind"] = "eval_report";
    report["split"] = a.splits.empty() ? std::string("all") : a.split;
    report["corpus_digest"] = d.digest;
    report["pair_model_digest"] = content_digest(pair_text);
    if (attention) report["attention_model_digest"] = content_digest(attention_model_to_string(*attention));
    report["windows"] = d.selected.size();
    for (const auto& [key, value] : metrics.items()) {
      const bool keep = all || key == "model" || key == "seed" || key == "instance_count" ||
                        key == "candidates_per_instance" || (a.metric == "top2" && key == "top2") ||
                        (a.metric == "hitrate" && (key == "hit_rate_by_rank" || key == "mrr")) ||
                        (a.metric == "aps" && key == "aps") ||
                        (a.metric == "fitb" && (key == "fitb" || key == "fitb_instance_count"));
      if (keep) report[key] = value;
    }
    write_output(a.output, report.dump(2) + "\n");
  });
}

// ---- generate -------------------------------------------------------------------

struct GenerateArgs {
  std::string corpus, pair_model, attention_model, output, slot_order, model = "mean";
  std::size_t window_size = 1000;
  std::size_t beam_width = 1;
  std::optional<std::size_t> window;
  std::uint64_t seed = 0;
};

void add_generate(CLI::App& app, GenerateArgs& a) {
  auto* c = app.add_subcommand("generate", "Compose outfits from a window's stock with beam search");
  c->add_option("--corpus", a.corpus)->required();
  c->add_option("--window-size", a.window_size)->capture_default_str();
  c->add_option("--pair-model", a.pair_model)->required();
  c->add_option("--attention-model", a.attention_model);
  c->add_option("--model", a.model)->check(CLI::IsMember({"mean", "attention"}))->capture_default_str();
  c->add_option("--beam-width", a.beam_width)->capture_default_str();
  c->add_option("--slot-order", a.slot_order, "Comma-separated slots, default jacket,suit,shirt,trouser,shoes,belt");
  c->add_option("--window", a.window, "Window index, default the latest");
  c->add_option("--seed", a.seed)->capture_default_str();
  c->add_option("--output", a.output);
  c->callback([&a] {
    const Service service(load_corpus(a.corpus), a.window_size, load_pair_model(a.pair_model),
                          maybe_attention(a.attention_model),
                          ServiceConfig{.max_beam_width = std::numeric_limits<std::size_t>::max()});
    GenerateRequest req;
    req.beam_width = a.beam_width;
    if (!a.slot_order.empty()) req.slot_order = parse_slot_list(a.slot_order);
    req.window = a.window;
    req.seed = a.seed;
    req.model = parse_scoring_model(a.model);
    try {
      write_output(a.output, service.to_json(service.generate(req)).dump(2) + "\n");
    } catch (const ApiError& e) {
      throw InvalidArgument(e.what());
    }
  });
}

// ---- export ---------------------------------------------------------------------

struct ExportArgs {
  std::string pair_model, output;
};

void add_export(CLI::App& app, ExportArgs& a) {
  auto* c = app.add_subcommand("export", "Write a pair model's embeddings as TSV");
  c->add_option("--pair-model", a.pair_model)->required();
  c->add_option("--output", a.output, "TSV path, stdout when omitted");
  c->callback([&a] {
    std::ostringstream out;
    write_embedding_tsv(out, load_pair_model(a.pair_model));
    write_output(a.output, out.str());
  });
}

// ---- serve ----------------------------------------------------------------------

struct ServeArgs {
  std::string corpus, pair_model, attention_model, addr;
  std::size_t window_size = 1000;
  bool no_cache = false;
};

void add_serve(CLI::App& app, ServeArgs& a) {
  auto* c = app.add_subcommand("serve", "Serve the HTTP API");
  c->add_option("--corpus", a.corpus)->required();
  c->add_option("--window-size", a.window_size)->capture_default_str();
  c->add_option("--pair-model", a.pair_model);
  c->add_option("--attention-model", a.attention_model);
  c->add_option("--addr", a.addr, "host:port, default $STYLEREC_ADDR or 127.0.0.1:8080");
  c->add_flag("--no-cache", a.no_cache, "Disable the ranking cache");
  c->callback([&a] {
    std::optional<PairModel> pair;
    if (!a.pair_model.empty()) pair = load_pair_model(a.pair_model);
    ServiceConfig cfg;
    cfg.cache = !a.no_cache;
    const Service service(load_corpus(a.corpus), a.window_size, std::move(pair), maybe_attention(a.attention_model),
                          cfg);
    const auto [host, port] = parse_bind_address(a.addr.empty() ? bind_address_from_env() : a.addr);
    httplib::Server server;
    mount_routes(server, service);
    std::fprintf(stderr, "serving on %s:%d\n", host.c_str(), port);
    if (!server.listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outfit compatibility: train, evaluate and compose outfits"};
  app.require_subcommand(1);
  IngestArgs ingest;
  SynthArgs synth_args;
  TrainPairArgs train_pair;
  TrainAttentionArgs train_attn;
  EvalArgs eval;
  GenerateArgs generate;
  ExportArgs export_args;
  ServeArgs serve;
  add_ingest(app, ingest);
  add_synth(app, synth_args);
  add_train_pair(app, train_pair);
  add_train_attention(app, train_attn);
  add_eval(app, eval);
  add_generate(app, generate);
  add_export(app, export_args);
  add_serve(app, serve);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "stylerec: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
