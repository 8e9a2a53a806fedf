#include "xencdec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace xencdec {

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` threads. Each index is
// handled by exactly one call, so results stored by index are deterministic.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct Hypothesis {
  std::vector<TokenId> tokens;  // generated tokens, no BOS
  double log_prob = 0.0;
  std::size_t parent_row = 0;   // decoder row holding this prefix's cache
};

struct Finished {
  std::vector<TokenId> tokens;
  double score = 0.0;
};

struct Candidate {
  double log_prob;
  std::size_t hypothesis;
  TokenId token;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  if (a.hypothesis != b.hypothesis) return a.hypothesis < b.hypothesis;
  return a.token < b.token;
}

// Content ids follow PAD, BOS, EOS and one tag per language.
bool has_content(const ParallelExample& ex, std::size_t num_languages) {
  const auto first = static_cast<TokenId>(3 + num_languages);
  return std::any_of(ex.source.begin(), ex.source.end(), [first](TokenId t) { return t >= first; });
}

void decode_chunk(const Seq2SeqModel& model, std::span<const ParallelExample> chunk, const DecodeConfig& config,
                  std::size_t max_length, std::vector<std::vector<TokenId>>& out) {
  const auto& mc = model.config();
  const std::size_t n = chunk.size(), beams = config.beams(), vocab = mc.vocab_size;
  std::vector<std::vector<Hypothesis>> alive(n);
  std::vector<std::vector<Finished>> finished(n);
  std::vector<ParallelExample> live;
  std::vector<std::size_t> live_index;
  for (std::size_t s = 0; s < n; ++s) {
    if (!has_content(chunk[s], mc.num_languages)) {
      out[s] = {kEos};
      continue;
    }
    live.push_back(chunk[s]);
    live_index.push_back(s);
    alive[s].push_back({});
  }
  if (live.empty()) return;

  const ParallelBatch batch = make_batch(live);
  const auto valid = batch.source.valid_mask();
  const Tensor enc = model.encode(model.embed_tokens(batch.source, batch.source_languages()), valid);
  IncrementalDecoder decoder(model, enc, valid);
  std::vector<std::size_t> row_of(n, 0);
  for (std::size_t r = 0; r < live_index.size(); ++r) row_of[live_index[r]] = r;

  for (std::size_t step = 0; step < max_length; ++step) {
    std::vector<TokenId> tokens;
    std::vector<std::size_t> sources, parents;
    std::vector<int> langs;
    for (std::size_t s = 0; s < n; ++s)
      for (const auto& hyp : alive[s]) {
        tokens.push_back(hyp.tokens.empty() ? kBos : hyp.tokens.back());
        sources.push_back(row_of[s]);
        parents.push_back(hyp.parent_row);
        langs.push_back(chunk[s].direction.target);
      }
    if (tokens.empty()) break;
    const Tensor lp = decoder.step(tokens, sources, parents, langs);
    const auto lpv = lp.values();

    std::size_t r0 = 0;
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t hyps = alive[s].size();
      if (hyps == 0) continue;
      const std::size_t slots = beams - finished[s].size();
      std::vector<Candidate> cands;
      cands.reserve(hyps * vocab);
      for (std::size_t h = 0; h < hyps; ++h)
        for (std::size_t v = 0; v < vocab; ++v) {
          if (v == static_cast<std::size_t>(kPad) || v == static_cast<std::size_t>(kBos)) continue;
          cands.push_back({alive[s][h].log_prob + lpv[(r0 + h) * vocab + v], h, static_cast<TokenId>(v)});
        }
      const std::size_t keep = std::min(slots, cands.size());
      std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);
      std::vector<Hypothesis> next;
      for (std::size_t k = 0; k < keep; ++k) {
        const auto& c = cands[k];
        Hypothesis hyp{alive[s][c.hypothesis].tokens, c.log_prob, r0 + c.hypothesis};
        hyp.tokens.push_back(c.token);
        if (c.token == kEos || step + 1 == max_length) {
          const double score = hyp.log_prob / length_penalty(hyp.tokens.size(), config.length_penalty);
          finished[s].push_back({std::move(hyp.tokens), score});
        } else {
          next.push_back(std::move(hyp));
        }
      }
      r0 += hyps;
      alive[s] = std::move(next);
    }
  }
  for (std::size_t s : live_index) {
    const auto& f = finished[s];
    std::size_t best = 0;
    for (std::size_t k = 1; k < f.size(); ++k)
      if (f[k].score > f[best].score) best = k;
    out[s] = f[best].tokens;
  }
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return s;
}

double distance(std::span<const double> a, std::span<const double> b) { return std::sqrt(squared_distance(a, b)); }

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string format_number(double x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << x;
  return os.str();
}

nlohmann::ordered_json clustering_json(const ClusteringMetrics& c) {
  nlohmann::ordered_json j;
  j["silhouette"] = c.silhouette;
  j["calinski_harabasz"] = c.calinski_harabasz;
  j["davies_bouldin"] = c.davies_bouldin;
  return j;
}

}  // namespace

std::string_view to_string(DecodeStrategy strategy) {
  return strategy == DecodeStrategy::Greedy ? "greedy" : "beam";
}

DecodeStrategy parse_decode_strategy(std::string_view text) {
  if (text == "greedy") return DecodeStrategy::Greedy;
  if (text == "beam") return DecodeStrategy::Beam;
  throw ValidationError("unknown decode strategy '" + std::string(text) + "'");
}

void DecodeConfig::validate() const {
  if (beam_size < 1) throw ValidationError("beam size must be at least 1");
  if (!(length_penalty >= 0.0) || !std::isfinite(length_penalty))
    throw ValidationError("length penalty must be nonnegative");
  if (batch_size < 1) throw ValidationError("decode batch size must be at least 1");
}

double length_penalty(std::size_t length, double alpha) {
  return std::pow((5.0 + static_cast<double>(length)) / 6.0, alpha);
}

std::vector<std::vector<TokenId>> decode(const Seq2SeqModel& model, std::span<const ParallelExample> examples,
                                         const DecodeConfig& config) {
  config.validate();
  const std::size_t cap = model.config().max_len - 1;
  const std::size_t max_length = config.max_length == 0 ? cap : std::min(config.max_length, cap);
  std::vector<std::vector<TokenId>> out(examples.size());
  NoGradGuard guard;
  for (std::size_t start = 0; start < examples.size(); start += config.batch_size) {
    const std::size_t count = std::min(config.batch_size, examples.size() - start);
    std::vector<std::vector<TokenId>> part(count);
    decode_chunk(model, examples.subspan(start, count), config, max_length, part);
    std::move(part.begin(), part.end(), out.begin() + static_cast<std::ptrdiff_t>(start));
  }
  return out;
}

std::vector<TokenId> strip_special(std::span<const TokenId> tokens) {
  std::vector<TokenId> out;
  for (TokenId t : tokens) {
    if (t == kEos) break;
    if (t == kPad || t == kBos) continue;
    out.push_back(t);
  }
  return out;
}

BleuStats bleu_stats(const TokenSequences& hypotheses, const TokenSequences& references) {
  if (hypotheses.size() != references.size()) {
    throw ValidationError("bleu: " + std::to_string(hypotheses.size()) + " hypotheses for " +
                          std::to_string(references.size()) + " references");
  }
  BleuStats st;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& h = hypotheses[s];
    const auto& r = references[s];
    st.hypothesis_length += h.size();
    st.reference_length += r.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<std::vector<TokenId>, std::size_t> ref_counts;
      for (std::size_t i = 0; i + n <= r.size(); ++i) ++ref_counts[{r.begin() + static_cast<std::ptrdiff_t>(i), r.begin() + static_cast<std::ptrdiff_t>(i + n)}];
      std::map<std::vector<TokenId>, std::size_t> hyp_counts;
      for (std::size_t i = 0; i + n <= h.size(); ++i) ++hyp_counts[{h.begin() + static_cast<std::ptrdiff_t>(i), h.begin() + static_cast<std::ptrdiff_t>(i + n)}];
      for (const auto& [gram, c] : hyp_counts) {
        const auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) st.matches[n - 1] += std::min(c, it->second);
        st.totals[n - 1] += c;
      }
    }
  }
  return st;
}

double bleu_from_stats(const BleuStats& st) {
  if (st.hypothesis_length == 0 || st.matches[0] == 0) return 0.0;
  double log_precision = std::log(static_cast<double>(st.matches[0]) / static_cast<double>(st.totals[0]));
  for (std::size_t n = 1; n < 4; ++n)
    log_precision += std::log((static_cast<double>(st.matches[n]) + 1.0) / (static_cast<double>(st.totals[n]) + 1.0));
  const double h = static_cast<double>(st.hypothesis_length), r = static_cast<double>(st.reference_length);
  const double log_bp = h < r ? 1.0 - r / h : 0.0;
  return 100.0 * std::exp(log_bp + log_precision / 4.0);
}

double bleu(const TokenSequences& hypotheses, const TokenSequences& references) {
  return bleu_from_stats(bleu_stats(hypotheses, references));
}

Matrix mean_pool(const Tensor& encoder_out, const TokenMatrix& source, const Vocabulary& vocab) {
  const std::size_t b = encoder_out.dim(0), len = encoder_out.dim(1), d = encoder_out.dim(2);
  if (source.rows != b || source.cols != len) throw ShapeError("mean_pool: source does not match encoder output");
  Matrix m{b, d, std::vector<double>(b * d, 0.0)};
  const auto v = encoder_out.values();
  for (std::size_t r = 0; r < b; ++r) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < len; ++i) {
      const TokenId t = source.at(r, i);
      if (!vocab.is_content(t)) continue;
      ++count;
      for (std::size_t k = 0; k < d; ++k) m.values[r * d + k] += v[(r * len + i) * d + k];
    }
    if (count == 0) continue;
    for (std::size_t k = 0; k < d; ++k) m.values[r * d + k] /= static_cast<double>(count);
  }
  return m;
}

Matrix encoder_representations(const Seq2SeqModel& model, const SyntheticLanguages& languages,
                               std::span<const ConceptSentence> sentences, int language, int target_language,
                               std::size_t batch_size) {
  if (batch_size == 0) throw ValidationError("representation batch size must be at least 1");
  NoGradGuard guard;
  const std::size_t d = model.config().model_dim;
  Matrix out{sentences.size(), d, std::vector<double>(sentences.size() * d)};
  for (std::size_t start = 0; start < sentences.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, sentences.size() - start);
    std::vector<ParallelExample> ex;
    for (std::size_t i = 0; i < count; ++i)
      ex.push_back(languages.make_example({language, target_language}, sentences[start + i],
                                          static_cast<std::int64_t>(start + i), model.config().tag_mode));
    const auto batch = make_batch(ex);
    const Tensor enc = model.encode(model.embed_tokens(batch.source, batch.source_languages()),
                                    batch.source.valid_mask());
    const Matrix part = mean_pool(enc, batch.source, languages.vocab());
    std::copy(part.values.begin(), part.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(start * d));
  }
  return out;
}

ClusteringMetrics clustering_metrics(const Matrix& points, std::span<const std::int64_t> labels) {
  const std::size_t n = points.rows, dim = points.cols;
  if (labels.size() != n) throw ValidationError("clustering: label count does not match points");
  std::map<std::int64_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);
  const std::size_t k = members.size();
  if (k < 2) throw ValidationError("clustering: need at least two clusters");
  for (const auto& [label, idx] : members)
    if (idx.size() < 2) throw ValidationError("clustering: cluster " + std::to_string(label) + " has one member");
  if (n <= k) throw ValidationError("clustering: need more points than clusters");

  std::vector<std::vector<double>> centroids;
  std::vector<std::size_t> cluster_of(n);
  std::vector<double> global(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < dim; ++c) global[c] += points.values[i * dim + c];
  for (auto& g : global) g /= static_cast<double>(n);
  for (const auto& [label, idx] : members) {
    std::vector<double> c(dim, 0.0);
    for (std::size_t i : idx) {
      cluster_of[i] = centroids.size();
      for (std::size_t q = 0; q < dim; ++q) c[q] += points.values[i * dim + q];
    }
    for (auto& x : c) x /= static_cast<double>(idx.size());
    centroids.push_back(std::move(c));
  }

  ClusteringMetrics out;
  // silhouette
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> sum(k, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum[cluster_of[j]] += distance(points.row(i), points.row(j));
    std::size_t ci = 0;
    double a = 0.0, b = std::numeric_limits<double>::infinity();
    for (const auto& [label, idx] : members) {
      if (ci == cluster_of[i])
        a = sum[ci] / static_cast<double>(idx.size() - 1);
      else
        b = std::min(b, sum[ci] / static_cast<double>(idx.size()));
      ++ci;
    }
    const double denom = std::max(a, b);
    s[i] = denom > 0.0 ? (b - a) / denom : 0.0;
  }
  out.silhouette = mean_of(s);

  // Calinski-Harabasz
  double between = 0.0, within = 0.0;
  std::size_t ci = 0;
  for (const auto& [label, idx] : members) {
    between += static_cast<double>(idx.size()) * squared_distance(centroids[ci], global);
    for (std::size_t i : idx) within += squared_distance(points.row(i), centroids[ci]);
    ++ci;
  }
  out.calinski_harabasz = within == 0.0 ? 1.0
                                        : (between / static_cast<double>(k - 1)) /
                                              (within / static_cast<double>(n - k));

  // Davies-Bouldin
  std::vector<double> spread(k, 0.0);
  ci = 0;
  for (const auto& [label, idx] : members) {
    for (std::size_t i : idx) spread[ci] += distance(points.row(i), centroids[ci]);
    spread[ci] /= static_cast<double>(idx.size());
    ++ci;
  }
  double db = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    double worst = 0.0;
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      const double sep = distance(centroids[a], centroids[b]);
      if (sep == 0.0) throw ValidationError("clustering: coincident cluster centroids");
      worst = std::max(worst, (spread[a] + spread[b]) / sep);
    }
    db += worst;
  }
  out.davies_bouldin = db / static_cast<double>(k);
  return out;
}

std::string_view to_string(DirectionKind kind) {
  switch (kind) {
    case DirectionKind::ToPivot: return "xx-en";
    case DirectionKind::FromPivot: return "en-xx";
    case DirectionKind::ZeroShot: return "zero-shot";
  }
  return "?";
}

DirectionKind direction_kind(Direction direction, const std::set<Direction>& zero_shot) {
  if (zero_shot.count(direction) || (direction.source != 0 && direction.target != 0)) return DirectionKind::ZeroShot;
  return direction.target == 0 ? DirectionKind::ToPivot : DirectionKind::FromPivot;
}

std::string resource_group(const SyntheticLanguageSpec& spec) {
  if (spec.corpus_size >= 20000) return "High";
  if (spec.corpus_size >= 5000) return "Med";
  return "Low";
}

std::map<std::string, double> ExperimentReport::averages() const {
  std::map<std::string, std::vector<double>> buckets;
  for (const auto& d : directions) {
    buckets[d.group].push_back(d.bleu);
    buckets[d.kind].push_back(d.bleu);
    if (d.kind != "zero-shot") buckets["supervised"].push_back(d.bleu);
    buckets["all"].push_back(d.bleu);
  }
  std::map<std::string, double> out;
  for (const auto& [name, v] : buckets) out[name] = mean_of(v);
  return out;
}

nlohmann::ordered_json ExperimentReport::to_json() const {
  nlohmann::ordered_json j;
  j["scenario"] = scenario;
  j["objective"] = objective;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  j["config"] = cfg;
  j["directions"] = nlohmann::ordered_json::array();
  for (const auto& d : directions) {
    nlohmann::ordered_json e;
    e["direction"] = d.direction;
    e["group"] = d.group;
    e["kind"] = d.kind;
    e["bleu"] = d.bleu;
    j["directions"].push_back(e);
  }
  nlohmann::ordered_json avg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : averages()) avg[k] = v;
  j["averages"] = avg;
  j["zero_shot"] = nlohmann::ordered_json::array();
  for (const auto& d : directions)
    if (d.kind == "zero-shot") j["zero_shot"].push_back({{"direction", d.direction}, {"bleu", d.bleu}});
  j["robustness"] = nlohmann::ordered_json::array();
  for (const auto& p : robustness) {
    nlohmann::ordered_json e;
    e["fraction"] = p.fraction;
    e["kind"] = p.kind;
    e["bleu"] = p.bleu;
    j["robustness"].push_back(e);
  }
  j["clustering"] = clustering ? clustering_json(*clustering) : nlohmann::ordered_json();
  j["final_mle_loss"] = final_mle_loss;
  j["final_cross_loss"] = final_cross_loss;
  return j;
}

ExperimentReport ExperimentReport::from_json(const nlohmann::json& j) {
  try {
    ExperimentReport r;
    r.scenario = j.at("scenario").get<std::string>();
    r.objective = j.at("objective").get<std::string>();
    for (const auto& [k, v] : j.at("config").items()) r.config[k] = v.get<std::string>();
    for (const auto& e : j.at("directions"))
      r.directions.push_back({e.at("direction").get<std::string>(), e.at("group").get<std::string>(),
                              e.at("kind").get<std::string>(), e.at("bleu").get<double>()});
    for (const auto& e : j.at("robustness"))
      r.robustness.push_back({e.at("fraction").get<double>(), e.at("kind").get<std::string>(),
                              e.at("bleu").get<double>()});
    if (j.contains("clustering") && !j.at("clustering").is_null()) {
      const auto& c = j.at("clustering");
      r.clustering = ClusteringMetrics{c.at("silhouette").get<double>(), c.at("calinski_harabasz").get<double>(),
                                       c.at("davies_bouldin").get<double>()};
    }
    r.final_mle_loss = j.value("final_mle_loss", 0.0);
    r.final_cross_loss = j.value("final_cross_loss", 0.0);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
}

double winning_ratio(const std::vector<DirectionScore>& a, const std::vector<DirectionScore>& b) {
  if (a.size() != b.size()) throw ValidationError("winning ratio: direction sets differ in size");
  if (a.empty()) throw ValidationError("winning ratio: no directions");
  std::map<std::string, double> other;
  for (const auto& d : b) other[d.direction] = d.bleu;
  std::size_t wins = 0;
  for (const auto& d : a) {
    const auto it = other.find(d.direction);
    if (it == other.end()) throw ValidationError("winning ratio: direction " + d.direction + " missing");
    if (d.bleu > it->second) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(a.size());
}

Comparison compare_reports(const ExperimentReport& a, const ExperimentReport& b) {
  std::map<std::string, const DirectionScore*> bmap;
  for (const auto& d : b.directions) bmap[d.direction] = &d;
  if (a.directions.size() != b.directions.size()) throw ValidationError("compare: direction sets differ");
  Comparison c;
  std::vector<DirectionScore> sup_a, sup_b, zs_a, zs_b;
  for (const auto& d : a.directions) {
    const auto it = bmap.find(d.direction);
    if (it == bmap.end()) throw ValidationError("compare: direction " + d.direction + " missing from baseline");
    const auto& o = *it->second;
    if (o.kind != d.kind) throw ValidationError("compare: direction " + d.direction + " differs in kind");
    c.rows.push_back({d.direction, d.kind == "zero-shot" ? "zero-shot" : "direction", d.bleu, o.bleu, d.bleu - o.bleu});
    (d.kind == "zero-shot" ? zs_a : sup_a).push_back(d);
    (d.kind == "zero-shot" ? zs_b : sup_b).push_back(o);
  }
  const auto avg_a = a.averages(), avg_b = b.averages();
  for (const auto& [name, v] : avg_a) {
    const auto it = avg_b.find(name);
    if (it != avg_b.end()) c.rows.push_back({name, "group", v, it->second, v - it->second});
  }
  if (!sup_a.empty()) c.winning_ratio = winning_ratio(sup_a, sup_b);
  if (!zs_a.empty()) c.zero_shot_winning_ratio = winning_ratio(zs_a, zs_b);
  if (a.robustness.size() == b.robustness.size()) {
    for (std::size_t i = 0; i < a.robustness.size(); ++i) {
      const auto& p = a.robustness[i];
      const auto& q = b.robustness[i];
      if (p.fraction != q.fraction || p.kind != q.kind) {
        c.robustness_delta.clear();
        break;
      }
      c.robustness_delta.push_back({p.fraction, p.kind, p.bleu - q.bleu});
    }
  }
  if (a.clustering && b.clustering) {
    c.clustering_delta = ClusteringMetrics{a.clustering->silhouette - b.clustering->silhouette,
                                           a.clustering->calinski_harabasz - b.clustering->calinski_harabasz,
                                           a.clustering->davies_bouldin - b.clustering->davies_bouldin};
  }
  return c;
}

nlohmann::ordered_json Comparison::to_json() const {
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json e;
    e["name"] = r.name;
    e["kind"] = r.kind;
    e["bleu_a"] = r.bleu_a;
    e["bleu_b"] = r.bleu_b;
    e["delta"] = r.delta;
    j["rows"].push_back(e);
  }
  j["winning_ratio"] = winning_ratio;
  j["zero_shot_winning_ratio"] = zero_shot_winning_ratio;
  j["robustness_delta"] = nlohmann::ordered_json::array();
  for (const auto& p : robustness_delta)
    j["robustness_delta"].push_back({{"fraction", p.fraction}, {"kind", p.kind}, {"delta", p.bleu}});
  j["clustering_delta"] = clustering_delta ? clustering_json(*clustering_delta) : nlohmann::ordered_json();
  return j;
}

void Comparison::write_table(std::ostream& out) const {
  auto find = [&](std::string_view name) -> const ComparisonRow* {
    for (const auto& r : rows)
      if (r.kind == "group" && r.name == name) return &r;
    return nullptr;
  };
  auto cell = [&](std::string_view name, bool delta) {
    const auto* r = find(name);
    if (!r) return std::string("-");
    return delta ? format_number(r->delta) : format_number(r->bleu_a) + " / " + format_number(r->bleu_b);
  };
  out << std::left << std::setw(12) << "" << std::setw(18) << "Low" << std::setw(18) << "Med" << std::setw(18)
      << "High" << std::setw(18) << "Avg" << "WR\n";
  out << std::setw(12) << "a / b" << std::setw(18) << cell("Low", false) << std::setw(18) << cell("Med", false)
      << std::setw(18) << cell("High", false) << std::setw(18) << cell("supervised", false)
      << format_number(100.0 * winning_ratio) << '\n';
  out << std::setw(12) << "delta" << std::setw(18) << cell("Low", true) << std::setw(18) << cell("Med", true)
      << std::setw(18) << cell("High", true) << std::setw(18) << cell("supervised", true) << '\n';
  out << "\ndirection         a        b        delta\n";
  for (const auto& r : rows) {
    if (r.kind == "group") continue;
    out << std::setw(18) << r.name << std::setw(9) << format_number(r.bleu_a) << std::setw(9)
        << format_number(r.bleu_b) << format_number(r.delta) << (r.kind == "zero-shot" ? "  (zero-shot)" : "")
        << '\n';
  }
  if (const auto* z = find("zero-shot")) {
    out << "\nzero-shot avg     " << std::setw(9) << format_number(z->bleu_a) << std::setw(9)
        << format_number(z->bleu_b) << format_number(z->delta) << "  WR " << format_number(100.0 * zero_shot_winning_ratio)
        << '\n';
  }
  if (!robustness_delta.empty()) {
    out << "\nnoise  kind        delta\n";
    for (const auto& p : robustness_delta)
      out << std::setw(7) << format_number(p.fraction) << std::setw(12) << p.kind << format_number(p.bleu) << '\n';
  }
  if (clustering_delta) {
    out << "\nclustering delta  SC " << clustering_delta->silhouette << "  CH " << clustering_delta->calinski_harabasz
        << "  DB " << clustering_delta->davies_bouldin << '\n';
  }
}

std::vector<EvalSet> make_eval_sets(const SyntheticLanguages& languages, const MultiwayEval& eval,
                                    std::span<const Direction> directions, TagMode mode) {
  std::vector<EvalSet> sets;
  for (const auto& d : directions) sets.push_back({d, eval.examples(languages, d, mode)});
  std::sort(sets.begin(), sets.end(), [&](const EvalSet& a, const EvalSet& b) {
    return languages.vocab().direction_name(a.direction) < languages.vocab().direction_name(b.direction);
  });
  return sets;
}

namespace {

double set_bleu(const Seq2SeqModel& model, std::span<const ParallelExample> examples, const DecodeConfig& config) {
  const auto outputs = decode(model, examples, config);
  TokenSequences hyps, refs;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    hyps.push_back(strip_special(outputs[i]));
    refs.push_back(strip_special(examples[i].target));
  }
  return bleu(hyps, refs);
}

DirectionScore score_entry(const SyntheticLanguages& languages, Direction d, const std::set<Direction>& zero_shot,
                           double value) {
  const auto kind = direction_kind(d, zero_shot);
  const int other = d.source == 0 ? d.target : d.source;
  const std::string group = kind == DirectionKind::ZeroShot
                                ? "zero-shot"
                                : resource_group(languages.specs()[static_cast<std::size_t>(other)]);
  return {languages.vocab().direction_name(d), group, std::string(to_string(kind)), value};
}

}  // namespace

std::vector<DirectionScore> evaluate_directions(const Seq2SeqModel& model, const SyntheticLanguages& languages,
                                                std::span<const EvalSet> sets, const std::set<Direction>& zero_shot,
                                                const DecodeConfig& decode_config, std::size_t threads) {
  std::vector<double> scores(sets.size());
  parallel_for(sets.size(), threads,
               [&](std::size_t i) { scores[i] = set_bleu(model, sets[i].examples, decode_config); });
  std::vector<DirectionScore> out;
  for (std::size_t i = 0; i < sets.size(); ++i)
    out.push_back(score_entry(languages, sets[i].direction, zero_shot, scores[i]));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.direction < b.direction; });
  return out;
}

std::vector<RobustnessPoint> robustness_sweep(const Seq2SeqModel& model, const SyntheticLanguages& languages,
                                              std::span<const EvalSet> sets, const std::set<Direction>& zero_shot,
                                              std::span<const double> fractions,
                                              const NoiseDictionary& dictionary, const DecodeConfig& decode_config,
                                              std::uint64_t seed, std::size_t threads) {
  if (fractions.empty() || fractions.front() != 0.0) throw ValidationError("noise fractions must start at 0");
  for (std::size_t f = 1; f < fractions.size(); ++f)
    if (!(fractions[f] > fractions[f - 1])) throw ValidationError("noise fractions must ascend");
  const std::size_t nf = fractions.size(), ns = sets.size();
  std::vector<double> scores(nf * ns);
  parallel_for(nf * ns, threads, [&](std::size_t job) {
    const std::size_t f = job / ns, s = job % ns;
    const auto& set = sets[s];
    if (fractions[f] == 0.0) {
      scores[job] = set_bleu(model, set.examples, decode_config);
      return;
    }
    Rng rng = make_stream(seed, 1000 + 100 * f + s);
    std::vector<ParallelExample> noisy;
    noisy.reserve(set.examples.size());
    for (const auto& ex : set.examples)
      noisy.push_back(inject_code_switching(ex, fractions[f], dictionary, languages.vocab(), rng));
    scores[job] = set_bleu(model, noisy, decode_config);
  });
  std::vector<RobustnessPoint> out;
  for (std::size_t f = 0; f < nf; ++f) {
    std::map<std::string, std::vector<double>> by_kind;
    for (std::size_t s = 0; s < ns; ++s)
      by_kind[std::string(to_string(direction_kind(sets[s].direction, zero_shot)))].push_back(scores[f * ns + s]);
    for (const auto& [kind, v] : by_kind) out.push_back({fractions[f], kind, mean_of(v)});
  }
  return out;
}

RepresentationSet multiway_representations(const Seq2SeqModel& model, const SyntheticLanguages& languages,
                                           const MultiwayEval& eval, std::size_t sentences) {
  const std::size_t n = std::min(sentences, eval.sentences.size());
  const std::span<const ConceptSentence> subset(eval.sentences.data(), n);
  RepresentationSet set;
  set.points.cols = model.config().model_dim;
  for (std::size_t l = 0; l < languages.num_languages(); ++l) {
    const int lang = static_cast<int>(l);
    const Matrix m = encoder_representations(model, languages, subset, lang, lang == 0 ? 1 : 0);
    set.points.values.insert(set.points.values.end(), m.values.begin(), m.values.end());
    set.points.rows += m.rows;
    for (std::size_t i = 0; i < n; ++i) {
      set.languages.push_back(lang);
      set.labels.push_back(eval.ids[i]);
    }
  }
  return set;
}

void write_representations(std::ostream& out, const RepresentationSet& set, const Vocabulary& vocab) {
  const auto old = out.precision(17);
  for (std::size_t r = 0; r < set.points.rows; ++r) {
    out << vocab.language_name(set.languages[r]) << '\t' << set.labels[r] << '\t';
    const auto row = set.points.row(r);
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? " " : "") << row[k];
    out << '\n';
  }
  out.precision(old);
}

}  // namespace xencdec
