#pragma once

#include <string>
#include <vector>

#include "fdan/vocab.hpp"

namespace fdan {

// Levenshtein distance over UTF-8 codepoints / whitespace-split words.
int edit_distance_units(const std::vector<std::string>& ref,
                        const std::vector<std::string>& hyp);

// Character error rate: distance / reference length. The reference must be
// nonempty (strip layout first; see document_text()).
double cer(const std::string& reference, const std::string& hypothesis);

// Word error rate over tokens split on spaces and line breaks.
double wer(const std::string& reference, const std::string& hypothesis);

// Text a document contributes to CER/WER: lines joined with '\n', layout
// structure dropped.
std::string document_text(const DocumentStructure& doc);

// Layout-only view of a document: a root node, one node per classed entity
// and reading-order chain edges.
struct LayoutGraph {
  std::vector<std::string> classes;  // entity labels in reading order
  static LayoutGraph from_document(const DocumentStructure& doc);
  int nodes() const { return 1 + static_cast<int>(classes.size()); }
  int edges() const {
    int n = static_cast<int>(classes.size());
    return n == 0 ? 0 : 2 * n - 1;
  }
};

// Exact graph edit distance between two layout graphs under unit costs
// (node/edge insertion, deletion, label substitution).
int layout_ged(const LayoutGraph& a, const LayoutGraph& b);

// GED normalized by the truth graph's node+edge count.
double loer(const DocumentStructure& pred, const DocumentStructure& truth);

// Precision/recall evaluation of classed entities matched by text CER at
// thresholds 5%..50% (step 5): per class, predictions are greedily matched
// to same-class, same-document truth entities by lowest CER; average
// precision is the mean precision over the thresholds, and the final score
// is the truth-entity-count weighted mean over classes, in percent.
double map_cer(const std::vector<DocumentStructure>& preds,
               const std::vector<DocumentStructure>& truths);

// CER between concatenated line-initial characters of the first pass and
// the ground truth's line initials (layout tokens stripped). Dataset-level:
// total distance over total reference length.
double first_pass_cer(const std::vector<std::vector<TokenId>>& pass1_tokens,
                      const std::vector<TokenSequence>& truths, const Vocabulary& vocab,
                      int l_max = 256, int n_max_line = 256);

std::string line_initial_string(const std::vector<TokenId>& initials, const Vocabulary& vocab);

}  // namespace fdan
