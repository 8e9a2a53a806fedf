// xencdec: experiment runner for crossover encoder-decoder training.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xencdec/experiment.hpp"

namespace fs = std::filesystem;
using namespace xencdec;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigFailure = 2, kDiverged = 3 };

// Config sources shared by every verb: preset, then file, then flags.
struct ConfigOptions {
  std::string preset;
  std::string file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;

  void attach(CLI::App& app) {
    app.add_option("--preset", preset, "start from a named preset");
    app.add_option("--config", file, "flat key = value config file")->check(CLI::ExistingFile);
    app.add_option("--set", sets, "key=value override, repeatable");
    for (const auto& key : config_keys())
      app.add_option("--" + key.name, flags[key.name], key.description + " [" + key.default_value + "]")
          ->group("Config keys");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c;
    if (!preset.empty()) c = ExperimentConfig::preset(preset);
    if (!file.empty()) {
      std::ifstream in(file);
      std::stringstream text;
      if (!preset.empty()) text << "preset = " << preset << '\n';
      text << in.rdbuf();
      c = parse_config(text, file);
    }
    for (const auto& [key, value] : flags)
      if (!value.empty()) c.set(key, value);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      c.set(s.substr(0, eq), s.substr(eq + 1));
    }
    c.validate();
    return c;
  }
};

void print_summary(const ExperimentReport& report, std::ostream& out) {
  out << std::fixed << std::setprecision(2);
  for (const auto& d : report.directions)
    out << std::left << std::setw(8) << d.direction << std::setw(11) << d.group << std::setw(11) << d.kind
        << d.bleu << '\n';
  for (const auto& [name, value] : report.averages()) out << "avg " << std::setw(14) << name << value << '\n';
  for (const auto& p : report.robustness)
    out << "noise " << p.fraction << ' ' << std::setw(11) << p.kind << p.bleu << '\n';
  if (report.clustering)
    out << std::setprecision(4) << "clustering SC " << report.clustering->silhouette << " CH "
        << report.clustering->calinski_harabasz << " DB " << report.clustering->davies_bouldin << '\n';
  out.unsetf(std::ios::floatfield);
}

Seq2SeqModel load_model(const ExperimentConfig& config, const std::string& checkpoint) {
  const std::string path =
      checkpoint.empty() ? artifact_paths(resolve_output_dir(config)).checkpoint.string() : checkpoint;
  Seq2SeqModel model = load_checkpoint(path);
  const auto want = config.resolved_model();
  const auto& got = model.config();
  if (got.vocab_size != want.vocab_size || got.num_languages != want.num_languages || got.tag_mode != want.tag_mode)
    throw ConfigError("checkpoint " + path + " does not match the configured languages or tag mode");
  return model;
}

fs::path ensure_output(const ExperimentConfig& config) {
  const fs::path dir = resolve_output_dir(config);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilingual crossover encoder-decoder experiments"};
  app.require_subcommand(1);

  ConfigOptions gen_opts, train_opts, eval_opts, sweep_opts, export_opts, run_opts, show_opts;
  std::string eval_checkpoint, eval_report, sweep_checkpoint, export_checkpoint, export_out;
  std::string compare_a, compare_b, compare_json;

  auto* gen = app.add_subcommand("generate-data", "write corpora, multiway evaluation sets and the dictionary");
  gen_opts.attach(*gen);
  auto* trn = app.add_subcommand("train", "train a model and write its checkpoint and metrics");
  train_opts.attach(*trn);
  auto* evl = app.add_subcommand("evaluate", "evaluate a checkpoint and write a report");
  eval_opts.attach(*evl);
  evl->add_option("--checkpoint", eval_checkpoint, "model checkpoint [<output_dir>/model.ckpt]");
  evl->add_option("--report", eval_report, "report path [<output_dir>/report.json]");
  auto* cmp = app.add_subcommand("compare", "compare a method report against a baseline report");
  cmp->add_option("report", compare_a, "method report")->required()->check(CLI::ExistingFile);
  cmp->add_option("baseline", compare_b, "baseline report")->required()->check(CLI::ExistingFile);
  cmp->add_option("--json", compare_json, "also write the comparison as JSON");
  auto* swp = app.add_subcommand("sweep-noise", "BLEU under code-switching noise for a checkpoint");
  sweep_opts.attach(*swp);
  swp->add_option("--checkpoint", sweep_checkpoint, "model checkpoint [<output_dir>/model.ckpt]");
  auto* exp = app.add_subcommand("export-representations", "write mean-pooled encoder outputs of the multiway set");
  export_opts.attach(*exp);
  exp->add_option("--checkpoint", export_checkpoint, "model checkpoint [<output_dir>/model.ckpt]");
  exp->add_option("--out", export_out, "output path [<output_dir>/representations.tsv]");
  auto* run = app.add_subcommand("run", "train, evaluate and write every artifact");
  run_opts.attach(*run);
  auto* show = app.add_subcommand("show-config", "print the resolved config");
  show_opts.attach(*show);
  bool reference = false;
  show->add_flag("--reference", reference, "print every key with its default and description instead");
  app.add_subcommand("list-presets", "print preset names");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto config = gen_opts.resolve();
      const auto dir = ensure_output(config);
      const auto langs = config.languages();
      {
        std::ofstream out(dir / "corpus.tsv");
        write_corpus(out, scenario_corpus(config, langs), langs.vocab());
      }
      const auto eval = generate_multiway_eval(langs, config.data.eval_sentences, config.data.lengths, config.seed);
      Corpus eval_corpus;
      for (const auto& d : config.evaluated_directions()) eval_corpus[d] = eval.examples(langs, d, config.model.tag_mode);
      {
        std::ofstream out(dir / "eval.tsv");
        write_corpus(out, eval_corpus, langs.vocab());
      }
      std::ofstream out(dir / "dictionary.tsv");
      NoiseDictionary(langs).write(out, langs.vocab());
      std::cout << "wrote " << (dir / "corpus.tsv").string() << ", eval.tsv and dictionary.tsv\n";
    } else if (trn->parsed()) {
      const auto config = train_opts.resolve();
      const auto paths = artifact_paths(ensure_output(config));
      {
        std::ofstream out(paths.config);
        write_config(out, config);
      }
      std::ofstream metrics(paths.metrics);
      const auto langs = config.languages();
      auto trained = train_model(config, langs, &metrics);
      save_checkpoint(paths.checkpoint.string(), trained.model);
      const auto& last = trained.result.log.back();
      std::cout << "step " << last.step << " L_M " << last.mle << " L_X " << last.cross << "\nwrote "
                << paths.checkpoint.string() << '\n';
    } else if (evl->parsed()) {
      const auto config = eval_opts.resolve();
      const auto langs = config.languages();
      const auto model = load_model(config, eval_checkpoint);
      const auto report = evaluate_model(config, model, langs);
      const fs::path path = eval_report.empty() ? artifact_paths(ensure_output(config)).report : fs::path(eval_report);
      write_report(path, report);
      print_summary(report, std::cout);
      std::cout << "wrote " << path.string() << '\n';
    } else if (cmp->parsed()) {
      const auto c = compare_reports(read_report(compare_a), read_report(compare_b));
      c.write_table(std::cout);
      if (!compare_json.empty()) {
        std::ofstream out(compare_json);
        out << c.to_json().dump(2) << '\n';
      }
    } else if (swp->parsed()) {
      const auto config = sweep_opts.resolve();
      const auto langs = config.languages();
      const auto model = load_model(config, sweep_checkpoint);
      const auto curve = noise_sweep(config, model, langs);
      const auto dir = ensure_output(config);
      std::ofstream out(dir / "robustness.tsv");
      out << "fraction\tkind\tbleu\n";
      std::cout << "fraction\tkind\tbleu\n";
      for (const auto& p : curve) {
        out << p.fraction << '\t' << p.kind << '\t' << p.bleu << '\n';
        std::cout << p.fraction << '\t' << p.kind << '\t' << p.bleu << '\n';
      }
    } else if (exp->parsed()) {
      const auto config = export_opts.resolve();
      const auto langs = config.languages();
      const auto model = load_model(config, export_checkpoint);
      const fs::path path =
          export_out.empty() ? artifact_paths(ensure_output(config)).representations : fs::path(export_out);
      std::ofstream out(path);
      write_representations(out, representations(config, model, langs), langs.vocab());
      std::cout << "wrote " << path.string() << '\n';
    } else if (run->parsed()) {
      const auto config = run_opts.resolve();
      const auto report = run_experiment(config);
      print_summary(report, std::cout);
      std::cout << "wrote " << artifact_paths(resolve_output_dir(config)).directory.string() << '\n';
    } else if (show->parsed()) {
      if (reference)
        write_config_reference(std::cout);
      else
        write_config(std::cout, show_opts.resolve());
    } else {
      for (const auto& name : ExperimentConfig::preset_names()) std::cout << name << '\n';
    }
  } catch (const TrainingDivergence& e) {
    std::cerr << "error: training diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
