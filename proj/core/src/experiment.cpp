#include "xencdec/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace xencdec {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) + ": expected " +
                    std::string(expected));
}

std::size_t parse_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "a nonnegative integer");
  return out;
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "a nonnegative integer");
  return out;
}

int parse_int(std::string_view key, std::string_view v) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "an integer");
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true or false");
}

std::string fmt(double x) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

std::string fmt(std::size_t x) { return std::to_string(x); }
std::string fmt(bool x) { return x ? "true" : "false"; }

std::string rule_name(const SyntheticLanguageSpec& s) {
  if (s.rule == ReorderRule::Rotate) return "rotate" + std::to_string(s.rotate_by);
  return to_string(s.rule);
}

std::string languages_text(const std::vector<SyntheticLanguageSpec>& specs) {
  std::vector<std::string> parts;
  for (std::size_t l = 1; l < specs.size(); ++l)
    parts.push_back(specs[l].name + ":" + rule_name(specs[l]) + ":" + std::to_string(specs[l].corpus_size));
  return join(parts, ',');
}

// Pivot "en" plus name:rule:size entries; permutation seeds are 101 * index.
std::vector<SyntheticLanguageSpec> parse_languages(std::string_view key, std::string_view v) {
  std::vector<SyntheticLanguageSpec> specs{{"en", 0, ReorderRule::Identity, 0, 0}};
  for (const auto& entry : split(v, ',')) {
    const auto f = split(entry, ':');
    if (f.size() != 3 || f[0].empty()) bad_value(key, v, "name:rule:size entries separated by commas");
    SyntheticLanguageSpec s;
    s.name = f[0];
    s.permutation_seed = 101 * specs.size();
    if (f[1] == "identity") {
      s.rule = ReorderRule::Identity;
    } else if (f[1] == "reverse") {
      s.rule = ReorderRule::Reverse;
    } else if (f[1] == "swap-adjacent-pairs") {
      s.rule = ReorderRule::SwapAdjacentPairs;
    } else if (f[1].rfind("rotate", 0) == 0) {
      s.rule = ReorderRule::Rotate;
      s.rotate_by = parse_size(key, f[1].substr(6));
    } else {
      bad_value(key, f[1], "identity, reverse, rotateK or swap-adjacent-pairs");
    }
    s.corpus_size = parse_size(key, f[2]);
    specs.push_back(std::move(s));
  }
  return specs;
}

struct Key {
  std::string name;
  std::string description;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  bool affects_results = true;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    auto size_key = [&](std::string name, std::string doc, auto member) {
      k.push_back({name, std::move(doc), [member](const ExperimentConfig& c) { return fmt(member(const_cast<ExperimentConfig&>(c))); },
                   [member, name](ExperimentConfig& c, std::string_view v) { member(c) = parse_size(name, v); }});
    };
    auto double_key = [&](std::string name, std::string doc, auto member) {
      k.push_back({name, std::move(doc), [member](const ExperimentConfig& c) { return fmt(member(const_cast<ExperimentConfig&>(c))); },
                   [member, name](ExperimentConfig& c, std::string_view v) { member(c) = parse_double(name, v); }});
    };
    auto bool_key = [&](std::string name, std::string doc, auto member) {
      k.push_back({name, std::move(doc), [member](const ExperimentConfig& c) { return fmt(member(const_cast<ExperimentConfig&>(c))); },
                   [member, name](ExperimentConfig& c, std::string_view v) { member(c) = parse_bool(name, v); }});
    };

    k.push_back({"name", "experiment label copied into the report",
                 [](const ExperimentConfig& c) { return c.name; },
                 [](ExperimentConfig& c, std::string_view v) { c.name = std::string(v); }});
    k.push_back({"scenario", "many-to-one | one-to-many | many-to-many",
                 [](const ExperimentConfig& c) { return std::string(to_string(c.scenario)); },
                 [](ExperimentConfig& c, std::string_view v) { c.scenario = parse_scenario(v); }});
    k.push_back({"seed", "master seed for data, initialization and sampling",
                 [](const ExperimentConfig& c) { return std::to_string(c.seed); },
                 [](ExperimentConfig& c, std::string_view v) { c.seed = parse_u64("seed", v); }});
    k.push_back({"output_dir", "artifact directory; relative paths go under $XENCDEC_OUTPUT_ROOT",
                 [](const ExperimentConfig& c) { return c.output_dir.string(); },
                 [](ExperimentConfig& c, std::string_view v) { c.output_dir = std::string(v); }, false});

    k.push_back({"train.objective", "mle | mixup | xencdec-a | xencdec-s",
                 [](const ExperimentConfig& c) { return to_string(c.train.objective); },
                 [](ExperimentConfig& c, std::string_view v) {
                   try {
                     c.train.objective = parse_objective(v);
                   } catch (const ValidationError& e) {
                     throw ConfigError(e.what());
                   }
                 }});
    bool_key("train.hard", "hard target-input interpolation across target languages",
             [](ExperimentConfig& c) -> bool& { return c.train.hard; });
    size_key("train.steps", "optimizer steps", [](ExperimentConfig& c) -> std::size_t& { return c.train.steps; });
    size_key("train.batch_size", "examples per batch",
             [](ExperimentConfig& c) -> std::size_t& { return c.train.batch_size; });
    double_key("train.learning_rate", "peak learning rate",
               [](ExperimentConfig& c) -> double& { return c.train.learning_rate; });
    size_key("train.warmup_steps", "linear warmup, then inverse square root decay",
             [](ExperimentConfig& c) -> std::size_t& { return c.train.warmup_steps; });
    double_key("train.adam_beta1", "Adam beta1", [](ExperimentConfig& c) -> double& { return c.train.adam_beta1; });
    double_key("train.adam_beta2", "Adam beta2", [](ExperimentConfig& c) -> double& { return c.train.adam_beta2; });
    double_key("train.adam_epsilon", "Adam epsilon",
               [](ExperimentConfig& c) -> double& { return c.train.adam_epsilon; });
    double_key("train.beta_end", "label co-refinement beta after annealing",
               [](ExperimentConfig& c) -> double& { return c.train.beta_end; });
    double_key("train.beta_anneal_fraction", "fraction of steps over which beta rises from 0",
               [](ExperimentConfig& c) -> double& { return c.train.beta_anneal_fraction; });
    double_key("train.mixup_alpha", "Beta(alpha, alpha) for mixup",
               [](ExperimentConfig& c) -> double& { return c.train.mixup_alpha; });
    double_key("train.mle_loss_weight", "weight of L_M next to the crossover or mixup term",
               [](ExperimentConfig& c) -> double& { return c.train.mle_loss_weight; });
    double_key("train.forced_ratio", "fixed shuffle ratio; negative samples it per pair",
               [](ExperimentConfig& c) -> double& { return c.train.forced_ratio; });
    bool_key("train.self_pairing", "pair every example with itself",
             [](ExperimentConfig& c) -> bool& { return c.train.self_pairing; });
    bool_key("train.independent_cross_batch", "draw the crossover batch separately from the L_M batch",
             [](ExperimentConfig& c) -> bool& { return c.train.independent_cross_batch; });
    bool_key("train.exact_count_mask", "masks with exactly round(ratio * n) zeros",
             [](ExperimentConfig& c) -> bool& { return c.train.exact_count_mask; });
    size_key("train.log_every", "metrics interval in steps",
             [](ExperimentConfig& c) -> std::size_t& { return c.train.log_every; });

    double_key("sampler.p", "shuffle ratio p (pairs use p or 1 - p)",
               [](ExperimentConfig& c) -> double& { return c.train.sampler.p; });
    double_key("sampler.tau", "pairwise sampling temperature",
               [](ExperimentConfig& c) -> double& { return c.train.sampler.tau; });
    double_key("sampler.data_temperature", "corpus over-sampling temperature",
               [](ExperimentConfig& c) -> double& { return c.train.sampler.data_temperature; });

    size_key("model.num_layers", "encoder and decoder layers",
             [](ExperimentConfig& c) -> std::size_t& { return c.model.num_layers; });
    size_key("model.dim", "model width", [](ExperimentConfig& c) -> std::size_t& { return c.model.model_dim; });
    size_key("model.heads", "attention heads", [](ExperimentConfig& c) -> std::size_t& { return c.model.num_heads; });
    size_key("model.ffn_dim", "feed-forward width", [](ExperimentConfig& c) -> std::size_t& { return c.model.ffn_dim; });
    size_key("model.max_len", "longest source or target sequence",
             [](ExperimentConfig& c) -> std::size_t& { return c.model.max_len; });
    double_key("model.label_smoothing", "label smoothing epsilon",
               [](ExperimentConfig& c) -> double& { return c.model.label_smoothing; });
    k.push_back({"model.tag_mode", "source-tag | language-embedding",
                 [](const ExperimentConfig& c) { return std::string(to_string(c.model.tag_mode)); },
                 [](ExperimentConfig& c, std::string_view v) {
                   try {
                     c.model.tag_mode = parse_tag_mode(v);
                   } catch (const ValidationError& e) {
                     throw ConfigError(e.what());
                   }
                 }});
    bool_key("model.tie_embeddings", "share input and output embeddings",
             [](ExperimentConfig& c) -> bool& { return c.model.tie_embeddings; });
    k.push_back({"model.attention_layer", "decoder layer whose cross-attention weights targets; -1 is the last",
                 [](const ExperimentConfig& c) { return std::to_string(c.model.attention_layer); },
                 [](ExperimentConfig& c, std::string_view v) { c.model.attention_layer = parse_int("model.attention_layer", v); }});

    k.push_back({"data.languages", "non-pivot languages as name:rule:size",
                 [](const ExperimentConfig& c) { return languages_text(c.data.languages); },
                 [](ExperimentConfig& c, std::string_view v) { c.data.languages = parse_languages("data.languages", v); }});
    size_key("data.concept_vocab", "words per language",
             [](ExperimentConfig& c) -> std::size_t& { return c.data.concept_vocab; });
    size_key("data.min_length", "shortest sentence", [](ExperimentConfig& c) -> std::size_t& { return c.data.lengths.min; });
    size_key("data.max_length", "longest sentence", [](ExperimentConfig& c) -> std::size_t& { return c.data.lengths.max; });
    size_key("data.eval_sentences", "multiway evaluation sentences",
             [](ExperimentConfig& c) -> std::size_t& { return c.data.eval_sentences; });
    size_key("data.cluster_sentences", "multiway sentences used for clustering and export",
             [](ExperimentConfig& c) -> std::size_t& { return c.data.cluster_sentences; });
    k.push_back({"data.zero_shot", "auto | none | comma-separated directions such as h1-h2",
                 [](const ExperimentConfig& c) {
                   if (!c.data.zero_shot) return std::string("auto");
                   if (c.data.zero_shot->empty()) return std::string("none");
                   return join(*c.data.zero_shot, ',');
                 },
                 [](ExperimentConfig& c, std::string_view v) {
                   if (v == "auto")
                     c.data.zero_shot.reset();
                   else if (v == "none")
                     c.data.zero_shot = std::vector<std::string>{};
                   else
                     c.data.zero_shot = split(v, ',');
                 }});

    k.push_back({"eval.strategy", "greedy | beam",
                 [](const ExperimentConfig& c) { return std::string(to_string(c.eval.decode.strategy)); },
                 [](ExperimentConfig& c, std::string_view v) {
                   try {
                     c.eval.decode.strategy = parse_decode_strategy(v);
                   } catch (const ValidationError& e) {
                     throw ConfigError(e.what());
                   }
                 }});
    size_key("eval.beam_size", "beam width", [](ExperimentConfig& c) -> std::size_t& { return c.eval.decode.beam_size; });
    double_key("eval.length_penalty", "length penalty exponent",
               [](ExperimentConfig& c) -> double& { return c.eval.decode.length_penalty; });
    size_key("eval.max_length", "generated tokens including EOS; 0 is max_len - 1",
             [](ExperimentConfig& c) -> std::size_t& { return c.eval.decode.max_length; });
    size_key("eval.batch_size", "sentences decoded together",
             [](ExperimentConfig& c) -> std::size_t& { return c.eval.decode.batch_size; });
    k.push_back({"eval.noise_fractions", "code-switching fractions, ascending from 0",
                 [](const ExperimentConfig& c) {
                   std::vector<std::string> parts;
                   for (double f : c.eval.noise_fractions) parts.push_back(fmt(f));
                   return join(parts, ',');
                 },
                 [](ExperimentConfig& c, std::string_view v) {
                   c.eval.noise_fractions.clear();
                   for (const auto& p : split(v, ',')) c.eval.noise_fractions.push_back(parse_double("eval.noise_fractions", p));
                 }});
    bool_key("eval.robustness", "run the code-switching sweep",
             [](ExperimentConfig& c) -> bool& { return c.eval.robustness; });
    bool_key("eval.clustering", "compute clustering metrics",
             [](ExperimentConfig& c) -> bool& { return c.eval.clustering; });
    k.push_back({"eval.threads", "evaluation threads; results do not depend on it",
                 [](const ExperimentConfig& c) { return std::to_string(c.eval.threads); },
                 [](ExperimentConfig& c, std::string_view v) { c.eval.threads = parse_size("eval.threads", v); }, false});
    return k;
  }();
  return table;
}

const Key& find_key(std::string_view name) {
  for (const auto& k : keys())
    if (k.name == name) return k;
  throw ConfigError("unknown config key '" + std::string(name) + "'");
}

const std::vector<std::string> kMethods{"mle",       "mixup",          "xencdec-a",           "xencdec-a-hard",
                                        "xencdec-s", "xencdec-s-hard", "xencdec-a-hard-tau0", "xencdec-s-hard-tau0"};
const std::vector<std::pair<std::string, Scenario>> kScenarios{
    {"m2o", Scenario::ManyToOne}, {"o2m", Scenario::OneToMany}, {"m2m", Scenario::ManyToMany}};

}  // namespace

std::string_view to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::ManyToOne: return "many-to-one";
    case Scenario::OneToMany: return "one-to-many";
    case Scenario::ManyToMany: return "many-to-many";
  }
  return "?";
}

Scenario parse_scenario(std::string_view text) {
  if (text == "many-to-one") return Scenario::ManyToOne;
  if (text == "one-to-many") return Scenario::OneToMany;
  if (text == "many-to-many") return Scenario::ManyToMany;
  throw ConfigError("unknown scenario '" + std::string(text) + "' (many-to-one, one-to-many, many-to-many)");
}

ExperimentConfig::ExperimentConfig() { model.max_len = 32; }

void ExperimentConfig::set(std::string_view key, std::string_view value) { find_key(key).set(*this, trim(value)); }

std::map<std::string, std::string> ExperimentConfig::to_map(bool all) const {
  std::map<std::string, std::string> out;
  for (const auto& k : keys())
    if (all || k.affects_results) out[k.name] = k.get(*this);
  return out;
}

void ExperimentConfig::validate() const {
  try {
    train.validate();
    eval.decode.validate();
    resolved_model().validate();
    const auto langs = languages();
    if (data.lengths.min < 1 || data.lengths.max < data.lengths.min)
      throw ConfigError("data.min_length must be at least 1 and at most data.max_length");
    const std::size_t tag = model.tag_mode == TagMode::SourceTag ? 1 : 0;
    if (data.lengths.max + tag > model.max_len || data.lengths.max + 1 > model.max_len)
      throw ConfigError("data.max_length does not fit model.max_len with tag and EOS");
    if (data.eval_sentences == 0) throw ConfigError("data.eval_sentences must be positive");
    if (eval.clustering && data.cluster_sentences < 2) throw ConfigError("data.cluster_sentences must be at least 2");
    if (eval.clustering && data.cluster_sentences > data.eval_sentences)
      throw ConfigError("data.cluster_sentences exceeds data.eval_sentences");
    if (eval.threads == 0) throw ConfigError("eval.threads must be positive");
    if (eval.robustness) {
      if (eval.noise_fractions.empty() || eval.noise_fractions.front() != 0.0)
        throw ConfigError("eval.noise_fractions must start at 0");
      for (std::size_t i = 0; i < eval.noise_fractions.size(); ++i) {
        const double f = eval.noise_fractions[i];
        if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("eval.noise_fractions must lie in [0, 1]");
        if (i && !(f > eval.noise_fractions[i - 1])) throw ConfigError("eval.noise_fractions must ascend");
      }
    }
    const auto zs = zero_shot_directions();
    if (!zs.empty() && scenario != Scenario::ManyToMany)
      throw ConfigError("zero-shot directions are only evaluated under many-to-many");
    for (const auto& d : zs)
      if (d.source == 0 || d.target == 0 || d.source == d.target)
        throw ConfigError("zero-shot direction " + langs.vocab().direction_name(d) + " must join two non-pivot languages");
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

SyntheticLanguages ExperimentConfig::languages() const { return SyntheticLanguages(data.languages, data.concept_vocab); }

ModelConfig ExperimentConfig::resolved_model() const {
  ModelConfig m = model;
  m.num_languages = data.languages.size();
  m.vocab_size = 3 + data.languages.size() * (1 + data.concept_vocab);
  return m;
}

std::vector<Direction> ExperimentConfig::trained_directions() const {
  std::vector<Direction> out;
  for (std::size_t l = 1; l < data.languages.size(); ++l) {
    const int lang = static_cast<int>(l);
    if (scenario != Scenario::OneToMany) out.push_back({lang, 0});
    if (scenario != Scenario::ManyToOne) out.push_back({0, lang});
  }
  return out;
}

std::set<Direction> ExperimentConfig::zero_shot_directions() const {
  std::vector<std::string> names;
  if (data.zero_shot) {
    names = *data.zero_shot;
  } else if (scenario == Scenario::ManyToMany && data.languages.size() >= 4) {
    names = {data.languages[1].name + "-" + data.languages[2].name,
             data.languages[2].name + "-" + data.languages[3].name};
  }
  std::vector<std::string> lang_names;
  for (const auto& s : data.languages) lang_names.push_back(s.name);
  const Vocabulary vocab(lang_names, 1);
  std::set<Direction> out;
  for (const auto& n : names) {
    try {
      out.insert(vocab.parse_direction(n));
    } catch (const std::exception&) {
      throw ConfigError("unknown zero-shot direction '" + n + "'");
    }
  }
  return out;
}

std::vector<Direction> ExperimentConfig::evaluated_directions() const {
  auto out = trained_directions();
  for (const auto& d : zero_shot_directions()) out.push_back(d);
  return out;
}

ExperimentConfig ExperimentConfig::preset(std::string_view name) {
  const std::string n(name);
  for (const auto& [tag, scenario] : kScenarios) {
    const std::string prefix = "toy-" + tag + "-";
    if (n.rfind(prefix, 0) != 0) continue;
    const std::string method = n.substr(prefix.size());
    if (std::find(kMethods.begin(), kMethods.end(), method) == kMethods.end()) break;
    ExperimentConfig c;
    c.name = n;
    c.scenario = scenario;
    c.output_dir = "runs/" + n;
    if (method == "mle") c.train.objective = Objective::MLE;
    if (method == "mixup") c.train.objective = Objective::Mixup;
    if (method.rfind("xencdec-a", 0) == 0) c.train.objective = Objective::XEncDecAttention;
    if (method.rfind("xencdec-s", 0) == 0) c.train.objective = Objective::XEncDecSimplified;
    c.train.hard = method.find("-hard") != std::string::npos;
    if (scenario != Scenario::ManyToMany || method.ends_with("-tau0")) c.train.sampler.tau = 0.0;
    if (scenario == Scenario::ManyToOne) c.train.sampler.p = 0.25;
    return c;
  }
  throw ConfigError("unknown preset '" + n + "'");
}

std::vector<std::string> ExperimentConfig::preset_names() {
  std::vector<std::string> out;
  for (const auto& [tag, scenario] : kScenarios)
    for (const auto& m : kMethods) out.push_back("toy-" + tag + "-" + m);
  return out;
}

std::vector<ConfigKey> config_keys() {
  const ExperimentConfig defaults;
  std::vector<ConfigKey> out;
  for (const auto& k : keys()) out.push_back({k.name, k.description, k.get(defaults)});
  return out;
}

void write_config_reference(std::ostream& out) {
  const ExperimentConfig defaults;
  for (const auto& k : keys()) out << k.name << " = " << k.get(defaults) << "  # " << k.description << '\n';
}

ExperimentConfig parse_config(std::istream& in, const std::string& origin) {
  ExperimentConfig c;
  std::string line;
  std::size_t number = 0;
  bool seen_key = false;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    try {
      if (key == "preset") {
        if (seen_key) throw ConfigError("preset must precede other keys");
        c = ExperimentConfig::preset(value);
      } else {
        c.set(key, value);
      }
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
    seen_key = true;
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  return parse_config(in, path.string());
}

void write_config(std::ostream& out, const ExperimentConfig& config) {
  for (const auto& [k, v] : config.to_map(true)) out << k << " = " << v << '\n';
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& config) {
  if (config.output_dir.is_absolute()) return config.output_dir;
  if (const char* root = std::getenv("XENCDEC_OUTPUT_ROOT"); root && *root)
    return std::filesystem::path(root) / config.output_dir;
  return config.output_dir;
}

Corpus scenario_corpus(const ExperimentConfig& config, const SyntheticLanguages& languages) {
  Corpus all = generate_corpus(languages, config.data.lengths, config.seed, config.model.tag_mode);
  Corpus out;
  for (const auto& d : config.trained_directions()) out[d] = std::move(all.at(d));
  return out;
}

Seq2SeqModel initial_model(const ExperimentConfig& config) {
  Rng rng = make_stream(config.seed, streams::kInit);
  return Seq2SeqModel(config.resolved_model(), rng());
}

TrainedModel train_model(const ExperimentConfig& config, const SyntheticLanguages& languages, std::ostream* metrics) {
  config.validate();
  const Corpus corpus = scenario_corpus(config, languages);
  TrainConfig tc = config.train;
  tc.sampler.seed = config.seed;
  tc.held_out = config.zero_shot_directions();
  TrainedModel out{initial_model(config), {}};
  out.result = train(tc, corpus, out.model, metrics, &languages.vocab());
  return out;
}

namespace {

MultiwayEval eval_set(const ExperimentConfig& config, const SyntheticLanguages& languages) {
  return generate_multiway_eval(languages, config.data.eval_sentences, config.data.lengths, config.seed);
}

std::uint64_t noise_seed(const ExperimentConfig& config) { return make_stream(config.seed, streams::kNoise)(); }

}  // namespace

std::vector<RobustnessPoint> noise_sweep(const ExperimentConfig& config, const Seq2SeqModel& model,
                                         const SyntheticLanguages& languages) {
  const auto eval = eval_set(config, languages);
  const auto dirs = config.evaluated_directions();
  const auto sets = make_eval_sets(languages, eval, dirs, config.model.tag_mode);
  const NoiseDictionary dict(languages);
  return robustness_sweep(model, languages, sets, config.zero_shot_directions(), config.eval.noise_fractions, dict,
                          config.eval.decode, noise_seed(config), config.eval.threads);
}

RepresentationSet representations(const ExperimentConfig& config, const Seq2SeqModel& model,
                                  const SyntheticLanguages& languages) {
  return multiway_representations(model, languages, eval_set(config, languages), config.data.cluster_sentences);
}

ExperimentReport evaluate_model(const ExperimentConfig& config, const Seq2SeqModel& model,
                                const SyntheticLanguages& languages) {
  config.validate();
  ExperimentReport report;
  report.scenario = std::string(to_string(config.scenario));
  report.objective = to_string(config.train.objective) + (config.train.hard ? "+hard" : "");
  report.config = config.to_map(false);
  const auto eval = eval_set(config, languages);
  const auto dirs = config.evaluated_directions();
  const auto zs = config.zero_shot_directions();
  const auto sets = make_eval_sets(languages, eval, dirs, config.model.tag_mode);
  if (config.eval.robustness) {
    const NoiseDictionary dict(languages);
    report.robustness = robustness_sweep(model, languages, sets, zs, config.eval.noise_fractions, dict,
                                         config.eval.decode, noise_seed(config), config.eval.threads);
  }
  report.directions = evaluate_directions(model, languages, sets, zs, config.eval.decode, config.eval.threads);
  if (config.eval.clustering) {
    const auto reps = multiway_representations(model, languages, eval, config.data.cluster_sentences);
    report.clustering = clustering_metrics(reps.points, reps.labels);
  }
  return report;
}

ExperimentArtifacts artifact_paths(const std::filesystem::path& directory) {
  return {directory,
          directory / "report.json",
          directory / "metrics.jsonl",
          directory / "model.ckpt",
          directory / "representations.tsv",
          directory / "config.txt"};
}

void write_report(const std::filesystem::path& path, const ExperimentReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << report.to_json().dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ExperimentReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read report " + path.string());
  try {
    return ExperimentReport::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed report " + path.string() + ": " + e.what());
  }
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto paths = artifact_paths(resolve_output_dir(config));
  std::filesystem::create_directories(paths.directory);
  {
    std::ofstream out(paths.config);
    write_config(out, config);
  }
  const auto languages = config.languages();
  std::ofstream metrics(paths.metrics);
  if (!metrics) throw std::runtime_error("cannot write " + paths.metrics.string());
  auto trained = train_model(config, languages, &metrics);
  save_checkpoint(paths.checkpoint.string(), trained.model);

  auto report = evaluate_model(config, trained.model, languages);
  if (!trained.result.log.empty()) {
    report.final_mle_loss = trained.result.log.back().mle;
    report.final_cross_loss = trained.result.log.back().cross;
  }
  write_report(paths.report, report);
  std::ofstream reps(paths.representations);
  write_representations(reps, representations(config, trained.model, languages), languages.vocab());
  return report;
}

}  // namespace xencdec
