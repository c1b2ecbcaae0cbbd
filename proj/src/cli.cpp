// SPDX-License-Identifier: Apache-2.0
#include "protoedit/cli.hpp"

#include <algorithm>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <pthread.h>
#include <unistd.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "protoedit/corpus.hpp"
#include "protoedit/error.hpp"
#include "protoedit/evaluation.hpp"
#include "protoedit/matcher.hpp"
#include "protoedit/pipeline.hpp"
#include "protoedit/retrieval.hpp"
#include "protoedit/service.hpp"
#include "protoedit/trainer.hpp"

namespace protoedit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

json default_config() {
  return json{
      {"work_dir", "protoedit_run"},
      {"corpus", {{"input", ""}, {"max_len", 30}, {"lowercase", false}, {"vocab_size", 30000}}},
      {"quads", {{"k", 20}, {"min_jaccard", 0.3}, {"max_jaccard", 0.7}}},
      {"editor", editor::Hyperparams{}},
      {"train", {{"val_fraction", 0.05}, {"max_quads", 0}, {"seed", 1}}},
      {"matcher", matcher::MatcherHyperparams{}},
      {"train_matcher", {{"val_fraction", 0.05}, {"seed", 1}}},
      {"pipeline", {{"variant", "edit-n-rerank"}, {"k", 20}, {"min_len", 1}, {"fallback_response", "i see ."}}},
      {"eval",
       {{"test", ""},
        {"word_vectors", ""},
        {"limit", 0},
        {"skipgram", {{"dim", 100}, {"window", 5}, {"negatives", 5}, {"epochs", 5}, {"seed", 1}}}}},
      {"serve", {{"host", "127.0.0.1"}, {"port", 8080}, {"request_log", ""}}}};
}

namespace {

// Rejects keys absent from the defaults so typos fail loudly.
void check_keys(const json& user, const json& defaults, const std::string& prefix) {
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!defaults.contains(key)) throw InvalidArgument("unknown config key '" + path + "'");
    if (value.is_object() && defaults[key].is_object()) check_keys(value, defaults[key], path);
  }
}

void set_dotted(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw InvalidArgument("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json::json_pointer ptr;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    ptr /= key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json patch = json::object();
  patch[ptr] = value;
  check_keys(patch, default_config(), "");
  cfg[ptr] = value;
}

struct Settings {
  json cfg = default_config();
  fs::path work_dir;
  [[nodiscard]] fs::path file(const char* name) const { return work_dir / name; }
};

struct GlobalArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::string> work_dir;
};

Settings resolve(const GlobalArgs& g, const std::function<void(json&)>& overrides) {
  Settings s;
  if (!g.config_path.empty()) {
    std::ifstream in(g.config_path);
    if (!in) throw IoError("cannot open config " + g.config_path);
    json user = json::parse(in, nullptr, false);
    if (user.is_discarded() || !user.is_object()) {
      throw InvalidArgument("config " + g.config_path + " is not a JSON object");
    }
    check_keys(user, s.cfg, "");
    s.cfg.merge_patch(user);
  }
  for (const auto& a : g.sets) set_dotted(s.cfg, a);
  if (g.work_dir) s.cfg["work_dir"] = *g.work_dir;
  if (overrides) overrides(s.cfg);
  s.work_dir = s.cfg["work_dir"].get<std::string>();
  return s;
}

void require(const fs::path& p, const char* produced_by) {
  if (!fs::exists(p)) {
    throw IoError(p.string() + " not found; run '" + produced_by + "' first");
  }
}

std::vector<corpus::Pair> read_work_pairs(const Settings& s) {
  require(s.file("pairs.tsv"), "ingest");
  const corpus::TokenizerOptions tok{s.cfg["corpus"]["lowercase"].get<bool>()};
  auto loaded = corpus::load_pairs(s.file("pairs.tsv"), std::numeric_limits<std::size_t>::max(), tok);
  if (!loaded.errors.empty()) throw IoError(s.file("pairs.tsv").string() + " is corrupt");
  return std::move(loaded.pairs);
}

corpus::Vocab read_work_vocab(const Settings& s) {
  require(s.file("vocab.txt"), "ingest");
  return corpus::Vocab::load(s.file("vocab.txt"));
}

// Seeded shuffle, then the first `val_fraction` (at least one item) goes to validation.
template <class T>
std::pair<std::vector<T>, std::vector<T>> split(std::vector<T> items, double val_fraction,
                                                std::uint64_t seed) {
  if (items.size() < 2) throw InvalidArgument("need at least two items to split off validation");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw InvalidArgument("val_fraction must lie in (0, 1)");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(items.begin(), items.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(items.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, items.size() - 1);
  std::vector<T> val(std::make_move_iterator(items.begin()),
                     std::make_move_iterator(items.begin() + static_cast<std::ptrdiff_t>(n_val)));
  items.erase(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_val));
  return {std::move(items), std::move(val)};
}

pipeline::PipelineConfig pipeline_config(const Settings& s) {
  const auto& p = s.cfg["pipeline"];
  const auto hp = s.cfg["editor"].get<editor::Hyperparams>();
  pipeline::PipelineConfig c;
  c.variant = pipeline::variant_from_string(p["variant"].get<std::string>());
  c.k = p["k"].get<int>();
  c.pairs_path = s.file("pairs.tsv");
  c.vocab_path = s.file("vocab.txt");
  c.context_index_path = s.file("context.idx");
  c.editor_path = s.file("editor.ckpt");
  if (fs::exists(s.file("matcher.ckpt"))) c.matcher_path = s.file("matcher.ckpt");
  c.beam.width = hp.beam;
  c.beam.max_len = hp.max_decode_len;
  c.beam.min_len = p["min_len"].get<int>();
  c.beam.forbid_unk = true;
  c.fallback_response = p["fallback_response"].get<std::string>();
  c.lowercase = s.cfg["corpus"]["lowercase"].get<bool>();
  require(c.editor_path, "train");
  require(c.context_index_path, "index");
  return c;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------

int cmd_ingest(const Settings& s) {
  const auto& c = s.cfg["corpus"];
  const std::string input = c["input"].get<std::string>();
  if (input.empty()) throw InvalidArgument("no input corpus; pass --input or set corpus.input");
  const corpus::TokenizerOptions tok{c["lowercase"].get<bool>()};
  auto loaded = corpus::load_pairs(input, c["max_len"].get<std::size_t>(), tok);
  for (std::size_t i = 0; i < loaded.errors.size() && i < 10; ++i) {
    std::cerr << input << ":" << loaded.errors[i].line << ": " << loaded.errors[i].message << "\n";
  }
  if (loaded.pairs.empty()) throw InvalidArgument(input + " contains no usable pairs");
  const auto vocab = corpus::build_vocab(loaded.pairs, c["vocab_size"].get<std::size_t>());
  fs::create_directories(s.work_dir);
  corpus::write_pairs(s.file("pairs.tsv"), loaded.pairs);
  vocab.save(s.file("vocab.txt"));
  std::cout << "pairs " << loaded.pairs.size() << ", malformed " << loaded.errors.size()
            << ", duplicates " << loaded.duplicates << ", too long " << loaded.too_long
            << ", vocab " << vocab.size() << "\n";
  return 0;
}

int cmd_index(const Settings& s) {
  const auto pairs = read_work_pairs(s);
  const auto ctx = retrieval::InvertedIndex::build(pairs, retrieval::Side::kContext);
  const auto rsp = retrieval::InvertedIndex::build(pairs, retrieval::Side::kResponse);
  ctx.save(s.file("context.idx"));
  rsp.save(s.file("response.idx"));
  std::cout << "indexed " << pairs.size() << " pairs (" << ctx.term_count() << " context terms, "
            << rsp.term_count() << " response terms)\n";
  return 0;
}

int cmd_make_quads(const Settings& s) {
  const auto pairs = read_work_pairs(s);
  require(s.file("response.idx"), "index");
  const auto index = retrieval::InvertedIndex::load(s.file("response.idx"));
  const auto& q = s.cfg["quads"];
  retrieval::QuadrupleOptions opts;
  opts.k = q["k"].get<std::size_t>();
  opts.min_jaccard = q["min_jaccard"].get<double>();
  opts.max_jaccard = q["max_jaccard"].get<double>();
  const auto quads = retrieval::build_training_quadruples(pairs, index, opts);
  retrieval::write_quadruples(s.file("quads.tsv"), quads);
  std::cout << "quadruples " << quads.size() << " from " << pairs.size() << " pairs\n";
  return 0;
}

int cmd_train(const Settings& s) {
  const auto vocab = read_work_vocab(s);
  require(s.file("quads.tsv"), "make-quads");
  const auto quads = retrieval::read_quadruples(s.file("quads.tsv"));
  if (quads.empty()) throw InvalidArgument("quads.tsv is empty");
  std::vector<editor::Example> examples;
  examples.reserve(quads.size());
  for (const auto& q : quads) examples.push_back(editor::make_example(q, vocab));

  const auto& t = s.cfg["train"];
  auto [train_set, val_set] =
      split(std::move(examples), t["val_fraction"].get<double>(), t["seed"].get<std::uint64_t>());
  const auto max_quads = t["max_quads"].get<std::size_t>();
  if (max_quads > 0 && train_set.size() > max_quads) train_set.resize(max_quads);

  auto hp = s.cfg["editor"].get<editor::Hyperparams>();
  hp.vocab_size = static_cast<int>(vocab.size());
  hp.validate();
  editor::TrainOptions options;
  options.log_path = s.file("train_log.jsonl");
  fs::remove(options.log_path);
  options.on_epoch = [](const editor::EpochLog& e) {
    std::cerr << "epoch " << e.epoch << "  train nll " << fmt(e.train_loss) << "  val ppl "
              << fmt(e.val_perplexity, 3) << "  lr " << e.lr << "  " << fmt(e.seconds, 1) << "s\n";
  };
  std::cerr << "training on " << train_set.size() << " quadruples, validating on "
            << val_set.size() << "\n";
  const auto result = editor::train(train_set, val_set, hp, options);
  editor::save_editor(s.file("editor.ckpt"), hp, vocab.hash(), result.params);
  std::cout << "best epoch " << result.best_epoch << ", val perplexity "
            << fmt(result.best_val_perplexity, 3) << " (" << result.stop_reason << ")\n";
  return 0;
}

int cmd_train_matcher(const Settings& s) {
  const auto vocab = read_work_vocab(s);
  auto pairs = read_work_pairs(s);
  const auto& t = s.cfg["train_matcher"];
  auto [train_pairs, val_pairs] =
      split(std::move(pairs), t["val_fraction"].get<double>(), t["seed"].get<std::uint64_t>());
  auto hp = s.cfg["matcher"].get<matcher::MatcherHyperparams>();
  hp.vocab_size = static_cast<int>(vocab.size());
  hp.validate();
  const auto result = matcher::train_matcher(train_pairs, val_pairs, vocab, hp, [](const auto& e) {
    std::cerr << "epoch " << e.epoch << "  train bce " << fmt(e.train_loss) << "  val bce "
              << fmt(e.val_loss) << "  val acc " << fmt(e.val_accuracy) << "\n";
  });
  matcher::save_matcher(s.file("matcher.ckpt"), hp, vocab.hash(), result.params);
  std::cout << "val loss " << fmt(result.best_val_loss) << ", val accuracy "
            << fmt(result.best_val_accuracy) << " (" << result.stop_reason << ")\n";
  return 0;
}

int cmd_eval(const Settings& s) {
  const auto& e = s.cfg["eval"];
  const std::string test_path = e["test"].get<std::string>();
  if (test_path.empty()) throw InvalidArgument("no test set; pass --test or set eval.test");
  const corpus::TokenizerOptions tok{s.cfg["corpus"]["lowercase"].get<bool>()};
  auto test = corpus::load_pairs(test_path, std::numeric_limits<std::size_t>::max(), tok);
  for (std::size_t i = 0; i < test.errors.size() && i < 10; ++i) {
    std::cerr << test_path << ":" << test.errors[i].line << ": " << test.errors[i].message << "\n";
  }
  const auto limit = e["limit"].get<std::size_t>();
  if (limit > 0 && test.pairs.size() > limit) test.pairs.resize(limit);
  if (test.pairs.empty()) throw InvalidArgument(test_path + " contains no usable pairs");

  const auto pairs = read_work_pairs(s);
  const auto config = pipeline_config(s);
  const pipeline::Pipeline pipe(pipeline::Snapshot::load(config));

  std::vector<corpus::Utterance> outputs, references, training;
  std::ofstream out_file(s.file("outputs.txt"));
  for (const auto& p : test.pairs) {
    const auto trace = pipe.run(corpus::join(p.context));
    outputs.push_back(corpus::tokenize(trace.response));
    references.push_back(p.response);
    out_file << trace.response << "\n";
  }
  for (const auto& p : pairs) training.push_back(p.response);

  eval::WordVectors wv;
  const std::string wv_path = e["word_vectors"].get<std::string>();
  if (!wv_path.empty()) {
    wv = eval::WordVectors::load(wv_path);
  } else if (fs::exists(s.file("word_vectors.txt"))) {
    wv = eval::WordVectors::load(s.file("word_vectors.txt"));
  } else {
    const auto& sg = e["skipgram"];
    eval::SkipGramOptions opts;
    opts.dim = sg["dim"].get<int>();
    opts.window = sg["window"].get<int>();
    opts.negatives = sg["negatives"].get<int>();
    opts.epochs = sg["epochs"].get<int>();
    opts.seed = sg["seed"].get<std::uint64_t>();
    std::vector<corpus::Utterance> sentences;
    for (const auto& p : pairs) {
      sentences.push_back(p.context);
      sentences.push_back(p.response);
    }
    std::cerr << "training " << opts.dim << "-d skip-gram vectors on " << sentences.size()
              << " utterances\n";
    wv = eval::train_skipgram(sentences, opts);
    wv.save(s.file("word_vectors.txt"));
  }

  const auto report = eval::evaluate_suite(outputs, references, training, wv);
  json j = report;
  j["variant"] = std::string(pipeline::to_string(config.variant));
  std::ofstream(s.file("report.json")) << j.dump(2) << "\n";
  std::cout << eval::format_table(report);
  return 0;
}

void print_trace(const pipeline::EditTrace& t, bool brief) {
  if (t.fallback) {
    std::cout << "(no prototype found)\n";
  } else {
    std::cout << "prototype: " << t.prototype->context << " => " << t.prototype->response << "\n";
  }
  for (const auto& w : t.insertions) std::cout << "  + " << w.word << " " << fmt(w.weight, 3) << "\n";
  for (const auto& w : t.deletions) std::cout << "  - " << w.word << " " << fmt(w.weight, 3) << "\n";
  std::cout << "response [" << pipeline::to_string(t.variant) << ", "
            << pipeline::to_string(t.response_origin) << "]: " << t.response << "\n";
  if (!brief) std::cout << json(t).dump(2) << "\n";
}

int cmd_chat(const Settings& s, bool brief) {
  const pipeline::Pipeline pipe(pipeline::Snapshot::load(pipeline_config(s)));
  std::string line;
  const bool tty = isatty(STDIN_FILENO) != 0;
  while (true) {
    if (tty) std::cout << "> " << std::flush;
    if (!std::getline(std::cin, line)) break;
    if (line == ":q" || line == ":quit") break;
    if (corpus::tokenize(line).empty()) continue;
    try {
      print_trace(pipe.run(line), brief);
    } catch (const InvalidArgument& e) {
      std::cout << "error: " << e.what() << "\n";
    }
    std::cout << std::flush;
  }
  return 0;
}

int cmd_serve(const Settings& s) {
  const auto& sv = s.cfg["serve"];
  service::ServiceOptions opts;
  opts.host = sv["host"].get<std::string>();
  opts.port = sv["port"].get<int>();
  const std::string log = sv["request_log"].get<std::string>();
  opts.request_log = log.empty() ? s.file("requests.jsonl") : fs::path(log);
  service::Service svc(pipeline_config(s), opts);
  svc.reload();

  // Block the stop signals in every thread, then wait for one here.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);
  const int port = svc.start();
  std::cout << "serving on http://" << opts.host << ":" << port << std::endl;
  int received = 0;
  sigwait(&stop_signals, &received);
  svc.stop();
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Prototype-editing response generation toolkit", "protoedit"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  GlobalArgs g;
  app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "Override a config value: section.key=value (repeatable)");
  app.add_option("--work-dir", g.work_dir, "Directory holding all artifacts");

  std::function<void(json&)> overrides;
  std::function<int(const Settings&)> action;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Read a context\\tresponse TSV, write pairs and vocabulary");
  std::optional<std::string> input;
  std::optional<int> max_len, vocab_size;
  bool lowercase = false;
  ingest->add_option("--input", input, "Raw corpus TSV");
  ingest->add_option("--max-len", max_len, "Drop pairs with a longer side");
  ingest->add_option("--vocab-size", vocab_size, "Vocabulary size including reserved tokens");
  ingest->add_flag("--lowercase", lowercase, "Lowercase while tokenizing");
  ingest->callback([&] {
    overrides = [&](json& c) {
      if (input) c["corpus"]["input"] = *input;
      if (max_len) c["corpus"]["max_len"] = *max_len;
      if (vocab_size) c["corpus"]["vocab_size"] = *vocab_size;
      if (lowercase) c["corpus"]["lowercase"] = true;
    };
    action = cmd_ingest;
  });

  auto* index = app.add_subcommand("index", "Build BM25 indexes over contexts and responses");
  index->callback([&] { action = cmd_index; });

  auto* quads = app.add_subcommand("make-quads", "Pair every response with similar prototypes");
  std::optional<int> quad_k;
  std::optional<double> min_j, max_j;
  quads->add_option("--k", quad_k, "Prototypes retrieved per pair");
  quads->add_option("--min-jaccard", min_j, "Lower Jaccard bound");
  quads->add_option("--max-jaccard", max_j, "Upper Jaccard bound");
  quads->callback([&] {
    overrides = [&](json& c) {
      if (quad_k) c["quads"]["k"] = *quad_k;
      if (min_j) c["quads"]["min_jaccard"] = *min_j;
      if (max_j) c["quads"]["max_jaccard"] = *max_j;
    };
    action = cmd_make_quads;
  });

  auto* train = app.add_subcommand("train", "Train the prototype editor");
  std::optional<int> epochs, batch, max_quads;
  std::optional<double> lr;
  std::optional<std::string> ablation;
  train->add_option("--epochs", epochs, "Maximum epochs");
  train->add_option("--batch-size", batch, "Examples per update");
  train->add_option("--lr", lr, "Initial learning rate");
  train->add_option("--max-quads", max_quads, "Cap on training quadruples (0 = all)");
  train->add_option("--ablation", ablation, "full, ins_only, del_only or none");
  train->callback([&] {
    overrides = [&](json& c) {
      if (epochs) c["editor"]["max_epochs"] = *epochs;
      if (batch) c["editor"]["batch_size"] = *batch;
      if (lr) c["editor"]["lr_init"] = *lr;
      if (max_quads) c["train"]["max_quads"] = *max_quads;
      if (ablation) c["editor"]["ablation"] = *ablation;
    };
    action = cmd_train;
  });

  auto* train_m = app.add_subcommand("train-matcher", "Train the context/response matcher");
  std::optional<int> m_epochs;
  train_m->add_option("--epochs", m_epochs, "Maximum epochs");
  train_m->callback([&] {
    overrides = [&](json& c) {
      if (m_epochs) c["matcher"]["max_epochs"] = *m_epochs;
    };
    action = cmd_train_matcher;
  });

  std::optional<std::string> variant;
  std::optional<int> pipe_k;
  auto pipeline_flags = [&](CLI::App* sub) {
    sub->add_option("--variant", variant, "edit-default, edit-1-rerank, edit-n-rerank or edit-merge");
    sub->add_option("--k", pipe_k, "Prototypes retrieved per request");
  };
  auto pipeline_overrides = [&](json& c) {
    if (variant) c["pipeline"]["variant"] = *variant;
    if (pipe_k) c["pipeline"]["k"] = *pipe_k;
  };

  auto* evaluate = app.add_subcommand("eval", "Generate for a test set and write report.json");
  std::optional<std::string> test, word_vectors;
  std::optional<int> limit;
  pipeline_flags(evaluate);
  evaluate->add_option("--test", test, "context\\treference TSV");
  evaluate->add_option("--word-vectors", word_vectors, "Word vector text file (trained if absent)");
  evaluate->add_option("--limit", limit, "Evaluate only the first N test pairs");
  evaluate->callback([&] {
    overrides = [&](json& c) {
      pipeline_overrides(c);
      if (test) c["eval"]["test"] = *test;
      if (word_vectors) c["eval"]["word_vectors"] = *word_vectors;
      if (limit) c["eval"]["limit"] = *limit;
    };
    action = cmd_eval;
  });

  auto* chat = app.add_subcommand("chat", "Read contexts from stdin, print edit traces");
  bool brief = false;
  pipeline_flags(chat);
  chat->add_flag("--brief", brief, "Omit the JSON trace");
  chat->callback([&] {
    overrides = pipeline_overrides;
    action = [&](const Settings& s) { return cmd_chat(s, brief); };
  });

  auto* serve = app.add_subcommand("serve", "Serve the HTTP edit-trace API");
  std::optional<std::string> host, request_log;
  std::optional<int> port;
  pipeline_flags(serve);
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "TCP port");
  serve->add_option("--request-log", request_log, "JSON-lines request log");
  serve->callback([&] {
    overrides = [&](json& c) {
      pipeline_overrides(c);
      if (host) c["serve"]["host"] = *host;
      if (port) c["serve"]["port"] = *port;
      if (request_log) c["serve"]["request_log"] = *request_log;
    };
    action = cmd_serve;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
  }

  try {
    return action(resolve(g, overrides));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace protoedit::cli
