#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kinit/audio_io.hpp"
#include "kinit/csv.hpp"
#include "kinit/error.hpp"

namespace kinit {

// Per-item vote counts: N items x k categories, each row summing to the
// fixed number of raters.
struct RatingsMatrix {
  std::vector<std::vector<int>> counts;
  int raters_per_item = 5;

  int n_items() const { return static_cast<int>(counts.size()); }
  int n_categories() const { return counts.empty() ? 0 : static_cast<int>(counts.front().size()); }

  void validate() const {
    require(n_items() >= 1, Errc::MalformedRow, "ratings matrix has no items");
    require(n_categories() >= 2, Errc::MalformedRow, "need at least two categories");
    require(raters_per_item >= 2, Errc::MalformedRow, "need at least two raters");
    for (std::size_t i = 0; i < counts.size(); ++i) {
      const auto& row = counts[i];
      require(static_cast<int>(row.size()) == n_categories(), Errc::MalformedRow,
              "row " + std::to_string(i) + " has inconsistent category count");
      int sum = 0;
      for (const int c : row) {
        require(c >= 0, Errc::MalformedRow, "row " + std::to_string(i) + " has negative count");
        sum += c;
      }
      require(sum == raters_per_item, Errc::MalformedRow,
              "row " + std::to_string(i) + " sums to " + std::to_string(sum) + ", expected " +
                  std::to_string(raters_per_item));
    }
  }
};

enum class KappaVariant { Fleiss, FreeMarginal };

struct AgreementReport {
  double p_bar_0 = 0.0;  // observed agreement
  double p_bar_e = 0.0;  // chance agreement
  double kappa = 0.0;
  KappaVariant variant = KappaVariant::Fleiss;
};

// Returns the unique category with count >= threshold, or nothing when the
// item is rejected. Three-of-five is the corpus acceptance rule.
inline std::optional<int> majority_category(const std::vector<int>& votes, int raters_per_item,
                                            int threshold = 3) {
  int sum = 0;
  for (const int v : votes) {
    require(v >= 0, Errc::MalformedRow, "negative vote count");
    sum += v;
  }
  require(sum == raters_per_item, Errc::MalformedRow,
          "votes sum to " + std::to_string(sum) + ", expected " +
              std::to_string(raters_per_item));
  std::optional<int> winner;
  for (std::size_t j = 0; j < votes.size(); ++j) {
    if (votes[j] >= threshold) {
      if (winner) return std::nullopt;  // not unique
      winner = static_cast<int>(j);
    }
  }
  return winner;
}

inline std::optional<KinitLabel> majority_label(const std::vector<int>& votes,
                                                int raters_per_item, int threshold = 3) {
  require(votes.size() == kNumClasses, Errc::MalformedRow,
          "expected one vote count per Kinit");
  const auto cat = majority_category(votes, raters_per_item, threshold);
  if (!cat) return std::nullopt;
  return static_cast<KinitLabel>(*cat);
}

// kappa = (p0 - pe) / (1 - pe) with
//   P_i = (sum_j n_ij^2 - n) / (n (n - 1)),   p0 = mean_i P_i,
//   pe  = sum_j (sum_i n_ij / (N n))^2        (Fleiss)
//   pe  = 1 / k                               (free-marginal)
inline AgreementReport fleiss_kappa(const RatingsMatrix& m,
                                    KappaVariant variant = KappaVariant::Fleiss) {
  m.validate();
  const int n = m.raters_per_item;
  const int k = m.n_categories();
  const auto n_items = static_cast<double>(m.n_items());

  double p0 = 0.0;
  std::vector<double> col_share(static_cast<std::size_t>(k), 0.0);
  for (const auto& row : m.counts) {
    double sq = 0.0;
    for (int j = 0; j < k; ++j) {
      sq += static_cast<double>(row[static_cast<std::size_t>(j)]) *
            static_cast<double>(row[static_cast<std::size_t>(j)]);
      col_share[static_cast<std::size_t>(j)] += row[static_cast<std::size_t>(j)];
    }
    p0 += (sq - n) / (static_cast<double>(n) * (n - 1));
  }
  p0 /= n_items;

  double pe = 0.0;
  if (variant == KappaVariant::FreeMarginal) {
    pe = 1.0 / k;
  } else {
    for (double& share : col_share) {
      share /= n_items * n;
      pe += share * share;
    }
  }
  require(pe < 1.0, Errc::DegenerateAgreement,
          "chance agreement is 1; kappa is undefined");

  AgreementReport report;
  report.p_bar_0 = p0;
  report.p_bar_e = pe;
  report.kappa = (p0 - pe) / (1.0 - pe);
  report.variant = variant;
  return report;
}

// ---------------------------------------------------------------------------
// Votes CSV: clip_id,judge1,...,judgeN with Kinit names as entries.

struct VotesTable {
  std::vector<std::string> clip_ids;
  RatingsMatrix matrix;  // k = 4 Kinit categories
};

inline VotesTable read_votes_csv(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  require(rows.size() >= 2, Errc::BadArgument, path.string() + ": no vote rows");
  const auto& header = rows.front();
  require(header.size() >= 3 && header.front() == "clip_id", Errc::BadArgument,
          path.string() + ": expected header clip_id,judge1,...");
  const int n_raters = static_cast<int>(header.size()) - 1;

  VotesTable table;
  table.matrix.raters_per_item = n_raters;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    require(static_cast<int>(r.size()) == n_raters + 1, Errc::MalformedRow,
            path.string() + ": row " + std::to_string(i) + " has wrong field count");
    std::vector<int> counts(kNumClasses, 0);
    for (int j = 1; j <= n_raters; ++j) {
      const auto label = parse_label(r[static_cast<std::size_t>(j)]);
      require(label.has_value(), Errc::MalformedRow,
              path.string() + ": unknown category '" + r[static_cast<std::size_t>(j)] + "'");
      ++counts[static_cast<std::size_t>(*label)];
    }
    table.clip_ids.push_back(r[0]);
    table.matrix.counts.push_back(std::move(counts));
  }
  table.matrix.validate();
  return table;
}

}  // namespace kinit
