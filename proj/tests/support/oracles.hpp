// Frozen oracle values for the detector tests. The robust-z numbers were
// computed with exact rational arithmetic (Python fractions) and rounded to
// double once; the bigram numbers come from hand-built add-one count tables.
// Both were produced before the implementation existed.
#pragma once

#include <string>
#include <vector>

#include "failanchor/wire.hpp"

namespace oracles {

namespace fa = failanchor;

struct MadOracle {
  std::vector<double> values;
  std::vector<double> z;
  // Indices an upper-tail metric flags at z_thresh 3.5 / quantile 0.95, and
  // whether each is high severity (|z| >= 7).
  std::vector<std::size_t> flagged;
  std::vector<bool> high;
};

inline const std::vector<MadOracle>& mad_table() {
  static const std::vector<MadOracle> table = {
      {{10, 12, 11, 13, 12, 11, 40},
       {-1.3489815189531904, 0.0, -0.6744907594765952, 0.6744907594765952, 0.0, -0.6744907594765952,
        18.885741265344663},
       {6},
       {true}},
      {{1, 2, 3, 4, 5, 6, 7, 8, 9, 100},
       {-1.2140833670578712, -0.9442870632672332, -0.6744907594765952, -0.4046944556859571,
        -0.13489815189531904, 0.13489815189531904, 0.4046944556859571, 0.6744907594765952,
        0.9442870632672332, 25.495750708215297},
       {9},
       {true}},
      // MAD is zero here, so the scale comes from the mean absolute deviation.
      {{5, 5, 5, 5, 5, 5, 9}, {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 5.585191925620058}, {6}, {false}},
      {{0.1, 0.12, 0.11, 0.13, 0.09, 0.1, 0.95, 0.11},
       {-0.6744907594765952, 0.6744907594765952, 0.0, 1.3489815189531904, -1.3489815189531904,
        -0.6744907594765952, 56.657223796033996, 0.0},
       {6},
       {true}},
      // Big low outlier: an upper-tail metric must ignore it.
      {{100, 98, 101, 99, 102, 100, 20, 101},
       {0.0, -1.3489815189531904, 0.6744907594765952, -0.6744907594765952, 1.3489815189531904, 0.0,
        -53.95926075812761, 0.6744907594765952},
       {},
       {}},
      {{3, 3, 4, 4, 5, 5, 6, 6, 50, -40},
       {-0.6744907594765952, -0.6744907594765952, -0.22483025315886507, -0.22483025315886507,
        0.22483025315886507, 0.22483025315886507, 0.6744907594765952, 0.6744907594765952,
        20.459553037456722, -20.00989253113899},
       {8},
       {true}},
      {{2.5, 2.5, 2.5, 2.5, 2.5, 2.5, 2.5, 2.5, 0.0},
       {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -7.1809610472257885},
       {},
       {}},
      {{1, 1, 2, 2, 3, 3, 4, 4},
       {-1.0117361392148927, -1.0117361392148927, -0.3372453797382976, -0.3372453797382976,
        0.3372453797382976, 0.3372453797382976, 1.0117361392148927, 1.0117361392148927},
       {},
       {}},
      {{7, 8, 7, 9, 8, 7, 8, 60, 8, 7, 9, 8},
       {-0.6744907594765952, 0.0, -0.6744907594765952, 0.6744907594765952, 0.0, -0.6744907594765952, 0.0,
        35.07351949278295, 0.0, -0.6744907594765952, 0.6744907594765952, 0.0},
       {7},
       {true}},
      {{0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 25},
       {0.0, 0.0, 0.0, 0.3682544126782456, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 9.20636031695614},
       {11},
       {true}},
      {{1000, 1010, 990, 1005, 995, 1002, 998, 4000},
       {-0.13489815189531904, 1.2140833670578712, -1.4838796708485094, 0.5395926075812761,
        -0.8093889113719142, 0.13489815189531904, -0.4046944556859571, 404.5595575340618},
       {7},
       {true}},
  };
  return table;
}

struct BigramOracle {
  std::string seq;
  std::vector<double> bits;
};

// Letters map to labels A=gather_evidence, B=edit_artifact,
// C=run_verification, D=prepare_submission, E=other.
inline const std::vector<BigramOracle>& bigram_table() {
  static const std::vector<BigramOracle> table = {
      // P(B|A) = (1+1)/(3+2) = 0.4
      {"AAAB", {0.7369655941662062, 0.7369655941662062, 1.3219280948873622}},
      {"ABAB", {0.4150374992788438, 0.5849625007211563, 0.4150374992788438}},
      {"ABCABC", {0.7369655941662062, 0.7369655941662062, 1.0, 0.7369655941662062, 0.7369655941662062}},
      {"AABBA", {1.0, 1.0, 1.0, 1.0}},
      {"ABCDDDDA", {1.3219280948873622, 1.3219280948873622, 1.3219280948873622, 1.0, 1.0, 1.0, 2.0}},
      {"AAAAAAAAB",
       {0.3219280948873623, 0.3219280948873623, 0.3219280948873623, 0.3219280948873623, 0.3219280948873623,
        0.3219280948873623, 0.3219280948873623, 2.321928094887362}},
      {"EAABCDE",
       {1.5849625007211563, 1.8073549220576042, 1.8073549220576042, 1.5849625007211563, 1.5849625007211563,
        1.5849625007211563}},
  };
  return table;
}

inline std::vector<fa::IntentLabel> labels(const std::string& seq) {
  std::vector<fa::IntentLabel> out;
  for (char c : seq) out.push_back(static_cast<fa::IntentLabel>(c - 'A'));
  return out;
}

}  // namespace oracles
