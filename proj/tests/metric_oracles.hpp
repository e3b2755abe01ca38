#pragma once

// Brute-force reference implementations for the text metrics, written
// independently of the library path: plain n-gram lists with count-by-scan,
// recursive memoized LCS, and per-pair tf-idf recomputation. Intentionally
// slow and obvious. Test-only.

#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace oracle {

inline std::vector<std::string> tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (char raw : text) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      out.push_back(current);
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(current);
  return out;
}

inline std::vector<std::vector<std::string>> ngrams(const std::vector<std::string>& toks,
                                                    size_t n) {
  std::vector<std::vector<std::string>> out;
  if (toks.size() < n) return out;
  for (size_t i = 0; i + n <= toks.size(); ++i) {
    out.emplace_back(toks.begin() + static_cast<std::ptrdiff_t>(i),
                     toks.begin() + static_cast<std::ptrdiff_t>(i + n));
  }
  return out;
}

inline size_t count_occurrences(const std::vector<std::vector<std::string>>& grams,
                                const std::vector<std::string>& gram) {
  size_t count = 0;
  for (const auto& g : grams) {
    if (g == gram) ++count;
  }
  return count;
}

// Modified n-gram precision with clipping, computed by scanning. The shared
// conventions match the production contract: orders where neither side has
// n-grams are neutral (precision 1), zero precisions floor at 1e-9, brevity
// penalty min(1, e^{1-r/c}).
inline double bleu(const std::string& gt, const std::string& pred, size_t n) {
  const auto ref = tokens(gt);
  const auto hyp = tokens(pred);
  if (hyp.empty()) return ref.empty() ? 1.0 : 0.0;

  double log_sum = 0.0;
  for (size_t order = 1; order <= n; ++order) {
    const auto hyp_grams = ngrams(hyp, order);
    const auto ref_grams = ngrams(ref, order);
    if (hyp_grams.empty() && ref_grams.empty()) continue;

    // Unique hypothesis n-grams, then clip each count against the reference.
    std::vector<std::vector<std::string>> uniques;
    for (const auto& g : hyp_grams) {
      if (count_occurrences(uniques, g) == 0) uniques.push_back(g);
    }
    size_t clipped = 0;
    for (const auto& g : uniques) {
      size_t in_hyp = count_occurrences(hyp_grams, g);
      size_t in_ref = count_occurrences(ref_grams, g);
      clipped += in_hyp < in_ref ? in_hyp : in_ref;
    }
    double precision = hyp_grams.empty()
                           ? 0.0
                           : static_cast<double>(clipped) / static_cast<double>(hyp_grams.size());
    if (precision <= 0.0) precision = 1e-9;
    log_sum += std::log(precision);
  }
  double geo = std::exp(log_sum / static_cast<double>(n));
  double r = static_cast<double>(ref.size());
  double c = static_cast<double>(hyp.size());
  double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return geo * bp;
}

inline size_t lcs_recursive(const std::vector<std::string>& a, const std::vector<std::string>& b,
                            size_t i, size_t j, std::map<std::pair<size_t, size_t>, size_t>& memo) {
  if (i == 0 || j == 0) return 0;
  auto key = std::make_pair(i, j);
  auto it = memo.find(key);
  if (it != memo.end()) return it->second;
  size_t value;
  if (a[i - 1] == b[j - 1]) {
    value = lcs_recursive(a, b, i - 1, j - 1, memo) + 1;
  } else {
    size_t left = lcs_recursive(a, b, i - 1, j, memo);
    size_t up = lcs_recursive(a, b, i, j - 1, memo);
    value = left > up ? left : up;
  }
  memo[key] = value;
  return value;
}

inline double rouge_l(const std::string& gt, const std::string& pred, double beta = 1.2) {
  const auto ref = tokens(gt);
  const auto hyp = tokens(pred);
  if (ref.empty() || hyp.empty()) return 0.0;
  std::map<std::pair<size_t, size_t>, size_t> memo;
  double lcs = static_cast<double>(lcs_recursive(ref, hyp, ref.size(), hyp.size(), memo));
  if (lcs == 0.0) return 0.0;
  double p = lcs / static_cast<double>(hyp.size());
  double r = lcs / static_cast<double>(ref.size());
  return (1.0 + beta * beta) * p * r / (r + beta * beta * p);
}

// Plain CIDEr with ground-truth-side idf = log(N / max(df, 1)), idf == 1 on a
// single-pair corpus, and a neutral order score of 1 when neither sentence
// has n-grams of that order.
inline double cider(const std::vector<std::pair<std::string, std::string>>& corpus) {
  const size_t N = corpus.size();
  double pair_total = 0.0;
  for (const auto& [gt, pred] : corpus) {
    double order_total = 0.0;
    for (size_t order = 1; order <= 4; ++order) {
      const auto ref_grams = ngrams(tokens(gt), order);
      const auto hyp_grams = ngrams(tokens(pred), order);
      if (ref_grams.empty() && hyp_grams.empty()) {
        order_total += 1.0;
        continue;
      }

      auto idf_of = [&](const std::vector<std::string>& gram) {
        if (N == 1) return 1.0;
        size_t df = 0;
        for (const auto& [other_gt, other_pred] : corpus) {
          if (count_occurrences(ngrams(tokens(other_gt), order), gram) > 0) ++df;
        }
        if (df < 1) df = 1;
        return std::log(static_cast<double>(N) / static_cast<double>(df));
      };

      // Unique grams on each side form sparse tf-idf vectors.
      std::vector<std::vector<std::string>> vocab;
      for (const auto& g : ref_grams) {
        if (count_occurrences(vocab, g) == 0) vocab.push_back(g);
      }
      for (const auto& g : hyp_grams) {
        if (count_occurrences(vocab, g) == 0) vocab.push_back(g);
      }
      double dot = 0.0, ref_norm = 0.0, hyp_norm = 0.0;
      for (const auto& g : vocab) {
        double idf = idf_of(g);
        double ref_w = static_cast<double>(count_occurrences(ref_grams, g)) * idf;
        double hyp_w = static_cast<double>(count_occurrences(hyp_grams, g)) * idf;
        dot += ref_w * hyp_w;
        ref_norm += ref_w * ref_w;
        hyp_norm += hyp_w * hyp_w;
      }
      if (ref_norm > 0.0 && hyp_norm > 0.0) order_total += dot / std::sqrt(ref_norm * hyp_norm);
    }
    pair_total += 10.0 * order_total / 4.0;
  }
  return pair_total / static_cast<double>(N);
}

}  // namespace oracle
