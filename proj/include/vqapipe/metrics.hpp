#pragma once

// Evaluation harness: accuracy, sentence-level BLEU-1..4, ROUGE-L, CIDEr,
// object-match recall, judge score and the weighted final score. Everything
// here is a pure function of the (gt, prediction) corpus.
//
// Shared conventions (mirrored by the independent test oracles):
//  - tokens are maximal alphanumeric runs, lowercased;
//  - an n-gram order where BOTH sentences have no n-grams scores neutral 1
//    (keeps the identity maxima exact for short sentences);
//  - zero precisions are floored at eps = 1e-9 inside BLEU's geometric mean;
//  - CIDEr idf = log(N / max(df, 1)) from the ground-truth side, with idf == 1
//    for the degenerate single-pair corpus.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqapipe/common.hpp"
#include "vqapipe/error.hpp"
#include "vqapipe/scene_graph.hpp"

namespace vqapipe {

inline constexpr double kBleuEpsilon = 1e-9;
inline constexpr double kRougeBeta = 1.2;
inline constexpr double kDefaultMatchDelta = 16.0;  // px, inclusive

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string token;
  for (char raw : text) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      token += static_cast<char>(std::tolower(c));
    } else if (!token.empty()) {
      tokens.push_back(token);
      token.clear();
    }
  }
  if (!token.empty()) tokens.push_back(token);
  return tokens;
}

// ---------------------------------------------------------------------------
// Accuracy

// Normalization: trim; a leading option letter ("A." / "A)" / bare "A") wins;
// otherwise lowercase, collapse whitespace, strip trailing sentence
// punctuation.
inline std::string normalize_answer(std::string_view text) {
  std::string t = trim(text);
  if (!t.empty()) {
    char first = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
    bool letter = first >= 'A' && first <= 'E';
    bool bare = t.size() == 1;
    bool punctuated = t.size() >= 2 && (t[1] == '.' || t[1] == ')') &&
                      (t.size() == 2 || t[2] == ' ');
    if (letter && (bare || punctuated)) {
      return std::string(1, static_cast<char>(std::tolower(static_cast<unsigned char>(t[0]))));
    }
  }
  std::string out;
  bool pending_space = false;
  for (char raw : t) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += static_cast<char>(std::tolower(c));
  }
  while (!out.empty() && (out.back() == '.' || out.back() == '!' || out.back() == '?')) {
    out.pop_back();
  }
  return trim(out);
}

inline double accuracy(const std::vector<std::pair<std::string, std::string>>& pairs) {
  if (pairs.empty()) return 0.0;
  size_t hits = 0;
  for (const auto& [gt, pred] : pairs) {
    if (normalize_answer(gt) == normalize_answer(pred)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// BLEU

namespace detail {

inline std::unordered_map<std::string, size_t> ngram_counts(
    const std::vector<std::string>& tokens, size_t n) {
  std::unordered_map<std::string, size_t> counts;
  if (tokens.size() < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (size_t j = 0; j < n; ++j) {
      key += tokens[i + j];
      key += '\x1f';
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace detail

// Sentence-level BLEU_n: clipped modified precision per order, geometric mean
// over orders 1..n, brevity penalty min(1, e^{1 - r/c}).
inline double bleu_n(std::string_view gt, std::string_view pred, size_t n) {
  if (n < 1 || n > 4) throw Error("bleu_n: order must be in 1..4");
  const std::vector<std::string> ref = tokenize(gt);
  const std::vector<std::string> hyp = tokenize(pred);
  if (hyp.empty()) return ref.empty() ? 1.0 : 0.0;

  double log_sum = 0.0;
  for (size_t order = 1; order <= n; ++order) {
    auto hyp_counts = detail::ngram_counts(hyp, order);
    auto ref_counts = detail::ngram_counts(ref, order);
    if (hyp_counts.empty() && ref_counts.empty()) {
      continue;  // neutral order: contributes log(1)
    }
    size_t total = 0, clipped = 0;
    for (const auto& [gram, count] : hyp_counts) {
      total += count;
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) clipped += std::min(count, it->second);
    }
    double precision =
        total == 0 ? 0.0 : static_cast<double>(clipped) / static_cast<double>(total);
    if (precision <= 0.0) precision = kBleuEpsilon;
    log_sum += std::log(precision);
  }
  double geo_mean = std::exp(log_sum / static_cast<double>(n));

  double r = static_cast<double>(ref.size());
  double c = static_cast<double>(hyp.size());
  double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return geo_mean * bp;
}

inline double corpus_bleu_n(const std::vector<std::pair<std::string, std::string>>& pairs,
                            size_t n) {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [gt, pred] : pairs) sum += bleu_n(gt, pred, n);
  return sum / static_cast<double>(pairs.size());
}

// Corpus-level BLEU: clipped counts pooled over all pairs per order, one
// corpus-wide brevity penalty. Available behind a flag; per-pair averaging is
// the default scoring mode.
inline double corpus_level_bleu_n(const std::vector<std::pair<std::string, std::string>>& pairs,
                                  size_t n) {
  if (n < 1 || n > 4) throw Error("corpus_level_bleu_n: order must be in 1..4");
  if (pairs.empty()) return 0.0;

  double ref_len = 0.0, hyp_len = 0.0;
  double log_sum = 0.0;
  std::vector<std::vector<std::string>> refs, hyps;
  refs.reserve(pairs.size());
  hyps.reserve(pairs.size());
  for (const auto& [gt, pred] : pairs) {
    refs.push_back(tokenize(gt));
    hyps.push_back(tokenize(pred));
    ref_len += static_cast<double>(refs.back().size());
    hyp_len += static_cast<double>(hyps.back().size());
  }
  if (hyp_len == 0.0) return ref_len == 0.0 ? 1.0 : 0.0;

  for (size_t order = 1; order <= n; ++order) {
    size_t clipped = 0, total = 0, ref_grams = 0;
    for (size_t i = 0; i < pairs.size(); ++i) {
      auto hyp_counts = detail::ngram_counts(hyps[i], order);
      auto ref_counts = detail::ngram_counts(refs[i], order);
      for (const auto& [gram, count] : ref_counts) ref_grams += count;
      for (const auto& [gram, count] : hyp_counts) {
        total += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) clipped += std::min(count, it->second);
      }
    }
    if (total == 0 && ref_grams == 0) continue;  // neutral order
    double precision =
        total == 0 ? 0.0 : static_cast<double>(clipped) / static_cast<double>(total);
    if (precision <= 0.0) precision = kBleuEpsilon;
    log_sum += std::log(precision);
  }
  double geo_mean = std::exp(log_sum / static_cast<double>(n));
  double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return geo_mean * bp;
}

enum class BleuMode { Sentence, Corpus };

inline std::string_view bleu_mode_name(BleuMode mode) {
  return mode == BleuMode::Sentence ? "sentence" : "corpus";
}

inline std::optional<BleuMode> parse_bleu_mode(std::string_view name) {
  if (name == "sentence") return BleuMode::Sentence;
  if (name == "corpus") return BleuMode::Corpus;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// ROUGE-L

// Token-level LCS F-measure with beta = 1.2.
inline double rouge_l(std::string_view gt, std::string_view pred, double beta = kRougeBeta) {
  const std::vector<std::string> ref = tokenize(gt);
  const std::vector<std::string> hyp = tokenize(pred);
  if (ref.empty() || hyp.empty()) return 0.0;

  std::vector<std::vector<size_t>> dp(ref.size() + 1, std::vector<size_t>(hyp.size() + 1, 0));
  for (size_t i = 1; i <= ref.size(); ++i) {
    for (size_t j = 1; j <= hyp.size(); ++j) {
      dp[i][j] = ref[i - 1] == hyp[j - 1] ? dp[i - 1][j - 1] + 1
                                          : std::max(dp[i - 1][j], dp[i][j - 1]);
    }
  }
  const double lcs = static_cast<double>(dp[ref.size()][hyp.size()]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(hyp.size());
  const double r = lcs / static_cast<double>(ref.size());
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

inline double corpus_rouge_l(const std::vector<std::pair<std::string, std::string>>& pairs,
                             double beta = kRougeBeta) {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [gt, pred] : pairs) sum += rouge_l(gt, pred, beta);
  return sum / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// CIDEr

// Plain CIDEr: per order n in 1..4, cosine between tf-idf n-gram vectors with
// idf taken from the ground-truth corpus; pair score = 10 * mean over orders;
// corpus score = mean over pairs.
inline double cider(const std::vector<std::pair<std::string, std::string>>& corpus) {
  if (corpus.empty()) throw Error("cider: corpus must hold at least one pair");
  const size_t N = corpus.size();

  std::vector<std::vector<std::string>> ref_tokens, hyp_tokens;
  ref_tokens.reserve(N);
  hyp_tokens.reserve(N);
  for (const auto& [gt, pred] : corpus) {
    ref_tokens.push_back(tokenize(gt));
    hyp_tokens.push_back(tokenize(pred));
  }

  double total = 0.0;
  for (size_t order = 1; order <= 4; ++order) {
    // Document frequency over ground-truth sentences.
    std::unordered_map<std::string, size_t> df;
    std::vector<std::unordered_map<std::string, size_t>> ref_counts(N), hyp_counts(N);
    for (size_t i = 0; i < N; ++i) {
      ref_counts[i] = detail::ngram_counts(ref_tokens[i], order);
      hyp_counts[i] = detail::ngram_counts(hyp_tokens[i], order);
      for (const auto& [gram, count] : ref_counts[i]) ++df[gram];
    }
    auto idf = [&](const std::string& gram) {
      if (N == 1) return 1.0;  // degenerate corpus: plain tf cosine
      auto it = df.find(gram);
      size_t d = it == df.end() ? 0 : it->second;
      return std::log(static_cast<double>(N) / static_cast<double>(std::max<size_t>(d, 1)));
    };

    for (size_t i = 0; i < N; ++i) {
      if (ref_counts[i].empty() && hyp_counts[i].empty()) {
        total += 1.0;  // neutral order, keeps identity at 10 for short sentences
        continue;
      }
      double dot = 0.0, ref_norm = 0.0, hyp_norm = 0.0;
      for (const auto& [gram, count] : ref_counts[i]) {
        double w = static_cast<double>(count) * idf(gram);
        ref_norm += w * w;
      }
      for (const auto& [gram, count] : hyp_counts[i]) {
        double w = static_cast<double>(count) * idf(gram);
        hyp_norm += w * w;
        auto it = ref_counts[i].find(gram);
        if (it != ref_counts[i].end()) {
          dot += w * static_cast<double>(it->second) * idf(gram);
        }
      }
      if (ref_norm > 0.0 && hyp_norm > 0.0) {
        total += dot / std::sqrt(ref_norm * hyp_norm);
      }
    }
  }
  return 10.0 * total / (4.0 * static_cast<double>(N));
}

// ---------------------------------------------------------------------------
// Match score

namespace detail {

struct Coordinate {
  std::optional<Camera> camera;  // nullopt for bare "(x, y)" pairs
  double x = 0.0;
  double y = 0.0;
};

// Object refs carry their camera; bare "(x, y)" pairs are camera-agnostic.
inline std::vector<Coordinate> extract_coordinates(std::string_view text) {
  std::vector<Coordinate> coords;
  std::string residue(text);
  for (const ObjectRef& ref : extract_object_refs(text)) {
    coords.push_back(Coordinate{ref.camera, ref.x, ref.y});
  }
  // Blank out ref tuples so their coordinates are not re-read as bare pairs.
  size_t pos = 0;
  while (true) {
    size_t open = residue.find('<', pos);
    if (open == std::string::npos) break;
    size_t close = residue.find('>', open);
    if (close == std::string::npos) break;
    if (try_parse_object_ref(std::string_view(residue).substr(open, close - open + 1))) {
      std::fill(residue.begin() + static_cast<std::ptrdiff_t>(open),
                residue.begin() + static_cast<std::ptrdiff_t>(close) + 1, ' ');
    }
    pos = close + 1;
  }
  pos = 0;
  while (true) {
    size_t open = residue.find('(', pos);
    if (open == std::string::npos) break;
    size_t close = residue.find(')', open);
    if (close == std::string::npos) break;
    std::string body = residue.substr(open + 1, close - open - 1);
    size_t comma = body.find(',');
    if (comma != std::string::npos && body.find(',', comma + 1) == std::string::npos) {
      auto x = parse_nonnegative(trim(body.substr(0, comma)));
      auto y = parse_nonnegative(trim(body.substr(comma + 1)));
      if (x && y) coords.push_back(Coordinate{std::nullopt, *x, *y});
    }
    pos = close + 1;
  }
  return coords;
}

}  // namespace detail

// Recall of ground-truth object coordinates recovered by the prediction text
// within delta pixels (inclusive). 100 when the ground truth names no objects.
inline double match_score(std::string_view gt_text, std::string_view pred_text,
                          double delta = kDefaultMatchDelta) {
  const auto gt_coords = detail::extract_coordinates(gt_text);
  if (gt_coords.empty()) return 100.0;
  const auto pred_coords = detail::extract_coordinates(pred_text);

  size_t matched = 0;
  for (const auto& gt : gt_coords) {
    bool hit = false;
    for (const auto& pred : pred_coords) {
      if (gt.camera && pred.camera && *gt.camera != *pred.camera) continue;
      if (std::hypot(gt.x - pred.x, gt.y - pred.y) <= delta) {
        hit = true;
        break;
      }
    }
    if (hit) ++matched;
  }
  return 100.0 * static_cast<double>(matched) / static_cast<double>(gt_coords.size());
}

inline double corpus_match_score(const std::vector<std::pair<std::string, std::string>>& pairs,
                                 double delta = kDefaultMatchDelta) {
  if (pairs.empty()) return 100.0;
  double sum = 0.0;
  for (const auto& [gt, pred] : pairs) sum += match_score(gt, pred, delta);
  return sum / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// Final score

struct FinalScoreWeights {
  double accuracy = 0.2;
  double judge = 0.4;
  double language = 0.2;
  double match = 0.2;
  std::string language_rule = "mean_b4_rl_cider10";

  void validate() const {
    if (accuracy < 0 || judge < 0 || language < 0 || match < 0) {
      throw BadWeights("final-score weights must be non-negative");
    }
    if (std::abs(accuracy + judge + language + match - 1.0) > 1e-9) {
      throw BadWeights("final-score weights must sum to 1");
    }
    if (language_rule != "mean_b4_rl_cider10") {
      throw BadWeights("unknown language aggregation rule '" + language_rule + "'");
    }
  }
};

struct MetricComponents {
  double accuracy = 0.0;   // [0,1]
  double judge = 0.0;      // [0,100]
  double bleu[4] = {0.0, 0.0, 0.0, 0.0};
  double rouge_l = 0.0;    // [0,1]
  double cider = 0.0;      // [0,10]
  double match = 0.0;      // [0,100]

  double language(const FinalScoreWeights&) const {
    return (bleu[3] + rouge_l + cider / 10.0) / 3.0;
  }
};

inline double final_score(const MetricComponents& c, const FinalScoreWeights& w) {
  w.validate();
  return w.accuracy * c.accuracy + w.judge * c.judge / 100.0 + w.language * c.language(w) +
         w.match * c.match / 100.0;
}

// ---------------------------------------------------------------------------
// Corpus evaluation

struct EvalPair {
  std::string record_id;
  std::string category;
  std::string question;
  std::string gt;
  std::string pred;
};

using JudgeFn = std::function<double(const std::string& question, const std::string& gt,
                                     const std::string& pred)>;

struct ScoringOptions {
  double match_delta = kDefaultMatchDelta;
  double rouge_beta = kRougeBeta;
  BleuMode bleu_mode = BleuMode::Sentence;
};

struct MetricsReport {
  size_t count = 0;
  MetricComponents overall;
  double final = 0.0;
  FinalScoreWeights weights;
  std::string judge_id;
  std::map<std::string, MetricComponents> per_category;
  std::map<std::string, size_t> category_counts;

  nlohmann::json to_json() const {
    auto components_json = [](const MetricComponents& c) {
      return nlohmann::json{{"accuracy", c.accuracy}, {"judge", c.judge},
                            {"bleu_1", c.bleu[0]},    {"bleu_2", c.bleu[1]},
                            {"bleu_3", c.bleu[2]},    {"bleu_4", c.bleu[3]},
                            {"rouge_l", c.rouge_l},   {"cider", c.cider},
                            {"match", c.match}};
    };
    nlohmann::json per_cat = nlohmann::json::object();
    for (const auto& [category, components] : per_category) {
      per_cat[category] = components_json(components);
      per_cat[category]["count"] = category_counts.at(category);
    }
    return {{"schema", "vqapipe.metrics.v1"},
            {"count", count},
            {"overall", components_json(overall)},
            {"language", overall.language(weights)},
            {"final", final},
            {"weights",
             {{"accuracy", weights.accuracy},
              {"judge", weights.judge},
              {"language", weights.language},
              {"match", weights.match},
              {"language_rule", weights.language_rule}}},
            {"judge_id", judge_id},
            {"per_category", per_cat}};
  }
};

inline MetricComponents compute_components(const std::vector<EvalPair>& pairs,
                                           const JudgeFn& judge,
                                           const ScoringOptions& options = {}) {
  MetricComponents c;
  if (pairs.empty()) return c;
  std::vector<std::pair<std::string, std::string>> texts;
  texts.reserve(pairs.size());
  for (const EvalPair& p : pairs) texts.emplace_back(p.gt, p.pred);

  c.accuracy = accuracy(texts);
  for (size_t n = 1; n <= 4; ++n) {
    c.bleu[n - 1] = options.bleu_mode == BleuMode::Sentence ? corpus_bleu_n(texts, n)
                                                            : corpus_level_bleu_n(texts, n);
  }
  c.rouge_l = corpus_rouge_l(texts, options.rouge_beta);
  c.cider = cider(texts);
  c.match = corpus_match_score(texts, options.match_delta);
  double judge_sum = 0.0;
  for (const EvalPair& p : pairs) judge_sum += judge(p.question, p.gt, p.pred);
  c.judge = judge_sum / static_cast<double>(pairs.size());
  return c;
}

// Pairs are evaluated in record_id order; per-category breakdowns reuse the
// same component set.
inline MetricsReport evaluate(std::vector<EvalPair> pairs, const FinalScoreWeights& weights,
                              const JudgeFn& judge, const std::string& judge_id,
                              const ScoringOptions& options = {}) {
  weights.validate();
  std::sort(pairs.begin(), pairs.end(),
            [](const EvalPair& a, const EvalPair& b) { return a.record_id < b.record_id; });

  MetricsReport report;
  report.count = pairs.size();
  report.weights = weights;
  report.judge_id = judge_id;
  report.overall = compute_components(pairs, judge, options);
  report.final = pairs.empty() ? 0.0 : final_score(report.overall, weights);

  std::map<std::string, std::vector<EvalPair>> by_category;
  for (const EvalPair& p : pairs) by_category[p.category].push_back(p);
  for (const auto& [category, group] : by_category) {
    report.per_category[category] = compute_components(group, judge, options);
    report.category_counts[category] = group.size();
  }
  return report;
}

}  // namespace vqapipe
