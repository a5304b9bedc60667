#include "sit/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "sit/errors.hpp"
#include "sit/eval.hpp"
#include "sit/training.hpp"

namespace sit {

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_path;
};

// Splits `model.<key>` and `train.<key>` entries of the config file.
struct FileConfig {
  ModelConfig model;
  TrainConfig train;
};

FileConfig load_config(const Globals& g) {
  KeyValues model_kv, train_kv;
  if (!g.config_path.empty()) {
    const auto all = KeyValues::load(g.config_path);
    for (const auto& [key, value] : all.entries()) {
      if (key.rfind("model.", 0) == 0) {
        model_kv.set(key.substr(6), value);
      } else if (key.rfind("train.", 0) == 0) {
        train_kv.set(key.substr(6), value);
      } else {
        throw ConfigError("config key '" + key + "' needs a model. or train. prefix");
      }
    }
  }
  FileConfig c{ModelConfig::from_key_values(model_kv), TrainConfig::from_key_values(train_kv)};
  if (g.seed) {
    c.model.seed = *g.seed;
    c.train.seed = *g.seed;
  }
  return c;
}

// "1-4" or "1,2,4".
std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  auto number = [&](const std::string& s) -> std::size_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("expected a number list such as 1-4 or 1,2,4, got '" + text + "'");
    }
    return std::stoul(s);
  };
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      out.push_back(number(part));
      continue;
    }
    const std::size_t lo = number(part.substr(0, dash)), hi = number(part.substr(dash + 1));
    if (lo > hi) throw ConfigError("empty range '" + part + "'");
    for (std::size_t v = lo; v <= hi; ++v) out.push_back(v);
  }
  return out;
}

// Writes to --out when given, otherwise to the console stream.
void emit(const Globals& g, std::ostream& console, const std::string& text) {
  if (g.out_path.empty()) {
    console << text;
    return;
  }
  std::ofstream f(g.out_path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + g.out_path);
  f << text;
}

std::string percent(double rate) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * rate << '%';
  return s.str();
}

Seq2SeqModel model_or_default(const std::string& path, const Globals& g) {
  if (!path.empty()) return load_checkpoint(path);
  return Seq2SeqModel(load_config(g).model, Vocabulary::standard());
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Symbol-invariant transformer toolkit", "sit"};
  app.fallthrough();
  app.require_subcommand(1, 1);
  Globals g;
  app.add_option("--config", g.config_path, "key=value file with model.* and train.* entries");
  app.add_option("--seed", g.seed, "seed for data, initialization and sampling");
  app.add_option("--out", g.out_path, "output file (stdout when omitted)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a dataset file");
  std::string task_text;
  std::size_t gen_aps = 3, gen_n = 100, min_size = 3, max_size = 12, min_len = 5, max_len = 15, first = 0;
  bool exact_aps = false, renamed = false;
  double reduce = 1.0;
  gen->add_option("--task", task_text, "copying, prop or ltl")->required();
  gen->add_option("--aps", gen_aps, "propositions (or copying alphabet size)");
  gen->add_option("--n", gen_n, "samples");
  gen->add_option("--min-size", min_size, "smallest formula size");
  gen->add_option("--max-size", max_size, "largest formula size");
  gen->add_option("--min-len", min_len, "shortest copying string");
  gen->add_option("--max-len", max_len, "longest copying string");
  gen->add_option("--first", first, "copying: index of the first letter used");
  gen->add_flag("--exact-aps", exact_aps, "keep formulas using every proposition");
  gen->add_flag("--renamed", renamed, "relabel propositions by first appearance");
  gen->add_option("--reduce", reduce, "keep this fraction of the samples");

  // train
  auto* train = app.add_subcommand("train", "train a model on a dataset");
  std::string train_data, init_path;
  std::optional<std::size_t> steps, batch_size;
  std::optional<double> lr;
  train->add_option("--data", train_data, "dataset file")->required();
  train->add_option("--init", init_path, "start from this checkpoint");
  train->add_option("--steps", steps, "optimizer steps");
  train->add_option("--batch-size", batch_size, "sequences per step");
  train->add_option("--lr", lr, "learning rate");

  // eval / topn / alpha-cov share model and data options.
  std::string model_path, data_path;
  std::size_t beam = 1, slack = 8, top_n = 3;
  auto* eval = app.add_subcommand("eval", "correct and exact-match rates");
  eval->add_option("--model", model_path, "checkpoint")->required();
  eval->add_option("--data", data_path, "dataset file")->required();
  eval->add_option("--beam", beam, "beam width");
  eval->add_option("--slack", slack, "output tokens allowed beyond the target length");

  auto* topn = app.add_subcommand("topn", "top-N semantic accuracy");
  topn->add_option("--model", model_path, "checkpoint")->required();
  topn->add_option("--data", data_path, "dataset file")->required();
  topn->add_option("--n", top_n, "candidates per input");

  auto* alpha = app.add_subcommand("alpha-cov", "alpha-covariance per sample");
  alpha->add_option("--model", model_path, "checkpoint")->required();
  alpha->add_option("--data", data_path, "dataset file")->required();

  // heatmap
  auto* heat = app.add_subcommand("heatmap", "accuracy grid over AP count and formula size");
  std::string heat_task = "prop", heat_aps = "1-4", heat_lengths = "3-12";
  std::size_t per_cell = 20;
  heat->add_option("--model", model_path, "checkpoint")->required();
  heat->add_option("--task", heat_task, "prop or ltl");
  heat->add_option("--aps", heat_aps, "AP counts, e.g. 1-4");
  heat->add_option("--lengths", heat_lengths, "formula sizes, e.g. 3-12");
  heat->add_option("--per-cell", per_cell, "samples per cell");
  heat->add_option("--beam", beam, "beam width");

  // certify
  auto* cert = app.add_subcommand("certify", "check invariance under random renamings");
  std::size_t trials = 100, cert_len = 16;
  cert->add_option("--model", model_path, "checkpoint (default: freshly initialized model)");
  cert->add_option("--trials", trials, "random input/renaming pairs");
  cert->add_option("--max-len", cert_len, "decode budget");

  // time
  auto* time = app.add_subcommand("time", "forward-pass time against stream count");
  std::string streams = "1,2,4,8";
  std::size_t samples = 20, length = 16;
  time->add_option("--model", model_path, "checkpoint (default: freshly initialized model)");
  time->add_option("--streams", streams, "stream counts");
  time->add_option("--samples", samples, "samples per stream count");
  time->add_option("--length", length, "input length");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    const std::uint64_t seed = g.seed.value_or(0);
    if (gen->parsed()) {
      const auto task = logic::parse_task(task_text);
      logic::Generated d;
      if (task == logic::Task::copying) {
        d = logic::gen_copying(seed, gen_aps, {min_len, max_len}, gen_n, first);
      } else {
        auto fs = task == logic::Task::prop ? logic::FormulaSpec::prop(gen_aps, {min_size, max_size})
                                            : logic::FormulaSpec::ltl(gen_aps, {min_size, max_size});
        fs.exact_aps = exact_aps;
        d = task == logic::Task::prop ? logic::gen_prop(seed, fs, gen_n) : logic::gen_ltl(seed, fs, gen_n);
      }
      if (!d.warning.empty()) err << "warning: " << d.warning << '\n';
      logic::Dataset data = std::move(d.data);
      if (renamed) data = logic::perturb_renamed(data);
      if (reduce < 1.0) data = logic::perturb_reduced(data, reduce, seed);
      emit(g, out, data.serialize());
      return 0;
    }

    if (train->parsed()) {
      if (g.out_path.empty()) throw ConfigError("train needs --out for the checkpoint");
      auto cfg = load_config(g);
      if (steps) cfg.train.steps = *steps;
      if (batch_size) cfg.train.batch_size = *batch_size;
      if (lr) cfg.train.learning_rate = *lr;
      const auto data = logic::Dataset::load(train_data);
      Seq2SeqModel model = init_path.empty() ? Seq2SeqModel(cfg.model, logic::task_vocabulary(data.aps))
                                             : load_checkpoint(init_path);
      const auto pairs = logic::encode(data, model.vocab());
      const auto result = fit(model, pairs, cfg.train, g.out_path, &out);
      out << "trained " << result.steps << " steps\n";
      return 0;
    }

    if (eval->parsed()) {
      const auto model = load_checkpoint(model_path);
      const auto data = logic::Dataset::load(data_path);
      const auto r = eval_correct(ModelPredictor(model), data, {beam, slack});
      std::ostringstream s;
      s << "n=" << r.n << " correct=" << percent(r.correct_rate()) << " exact=" << percent(r.exact_rate()) << '\n';
      emit(g, out, s.str());
      return 0;
    }

    if (topn->parsed()) {
      const auto model = load_checkpoint(model_path);
      const auto data = logic::Dataset::load(data_path);
      const ModelPredictor p(model);
      std::ostringstream s;
      s << "top1=" << percent(topn_accuracy(p, data, 1)) << " top" << top_n << '='
        << percent(topn_accuracy(p, data, top_n)) << '\n';
      emit(g, out, s.str());
      return 0;
    }

    if (alpha->parsed()) {
      const auto model = load_checkpoint(model_path);
      const auto data = logic::Dataset::load(data_path);
      const auto r = alpha_covariance_report(ModelPredictor(model), data, seed);
      std::ostringstream csv;
      write_alpha_cov(r, csv);
      emit(g, out, csv.str());
      for (const auto& [aps, mean] : r.mean_by_ap_count()) {
        (g.out_path.empty() ? err : out) << "aps=" << aps << " mean=" << format_double(mean) << '\n';
      }
      return 0;
    }

    if (heat->parsed()) {
      const auto model = load_checkpoint(model_path);
      GridSpec spec{logic::parse_task(heat_task), parse_list(heat_aps), parse_list(heat_lengths), per_cell, seed,
                    beam};
      emit(g, out, heatmap(ModelPredictor(model), spec).csv());
      return 0;
    }

    if (cert->parsed()) {
      const auto model = model_or_default(model_path, g);
      const auto t0 = std::chrono::steady_clock::now();
      const auto r = certify_invariance(model, trials, seed, cert_len);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::ostringstream s;
      s << "trials=" << r.trials;
      for (const auto& [task, n] : r.trials_by_task) s << ' ' << task << '=' << n;
      s << " decode_unequal=" << r.decode_unequal << " near_ties=" << r.near_ties
        << " max_logit_discrepancy=" << format_double(r.max_logit_discrepancy) << " seconds=" << std::fixed
        << std::setprecision(1) << secs << " result=" << (r.passed() ? "PASS" : "FAIL") << '\n';
      emit(g, out, s.str());
      return r.passed() ? 0 : 1;
    }

    if (time->parsed()) {
      const auto model = model_or_default(model_path, g);
      const auto counts = parse_list(streams);
      const auto r = time_scaling(model, counts, samples, length, seed);
      std::ostringstream s;
      s << "streams,mean_ms\n";
      for (const auto& p : r.points) s << p.streams << ',' << format_double(p.mean_ms) << '\n';
      emit(g, out, s.str());
      (g.out_path.empty() ? err : out) << "slope_ms=" << format_double(r.slope) << " r2=" << format_double(r.r2)
                                       << '\n';
      return 0;
    }
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ResourceError& e) {
    err << "resource limit: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace sit
