#pragma once

// Train/validation/test assignment of series windows under the five split
// rules, and the certificate that checks each rule's defining predicate.

#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "unicorn/datamodel.hpp"

namespace unicorn {

enum class SplitMethod { random, random_time, consecutive_time, by_stimuli, by_subject };

std::string to_string(SplitMethod m);
SplitMethod parse_split_method(const std::string& text);
const std::vector<SplitMethod>& all_split_methods();

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;

  void validate() const;
  std::array<double, 3> as_array() const { return {train, val, test}; }
};

/// Parses "0.7,0.15,0.15" (or "0.7/0.15/0.15").
SplitRatios parse_ratios(const std::string& text);
std::string format_ratios(const SplitRatios& r);

struct SplitAssignment {
  SplitMethod method = SplitMethod::random;
  SplitRatios ratios;
  std::uint64_t seed = 0;
  bool purge_overlap = false;
  std::vector<WindowKey> train, val, test;
  /// Windows dropped from val/test because their frames overlap training frames.
  std::vector<WindowKey> purged;

  /// F_Tr, T^j_Tr, C_Tr and S_Tr.
  std::set<WindowKey> train_windows() const;
  std::map<std::string, std::set<std::size_t>> train_start_indices() const;
  std::set<std::string> train_stimuli() const;
  std::set<std::string> train_subjects() const;
};

/// Throws InfeasibleSplitError when a grouped method has fewer than three
/// groups, ValidationError on bad ratios or duplicate keys.
SplitAssignment generate_split(const std::vector<WindowKey>& windows, SplitMethod method, const SplitRatios& ratios,
                               std::uint64_t seed, bool purge_overlap);

struct PredicateResult {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct SplitCertificate {
  std::vector<PredicateResult> predicates;
  /// Test windows whose frame range meets a training window of the same
  /// subject and stimulus; the same count for validation windows.
  std::size_t test_leakage = 0;
  std::size_t val_leakage = 0;
  std::array<double, 3> achieved_ratios{};
  std::array<std::size_t, 3> counts{};

  bool passed() const;
  std::size_t violations() const;
  /// One "name: PASS|FAIL" line per predicate plus leakage and ratio lines.
  std::string render() const;
};

SplitCertificate verify_split(const SplitAssignment& assignment);

/// Number of windows in `candidates` whose [k, k+T-1] range intersects a
/// window of `reference` with the same subject and stimulus.
std::size_t count_frame_overlap(const std::vector<WindowKey>& candidates, const std::vector<WindowKey>& reference);

std::string encode_split(const SplitAssignment& assignment);
SplitAssignment decode_split(std::string_view text);
void write_split(const SplitAssignment& assignment, const std::filesystem::path& path);
SplitAssignment read_split(const std::filesystem::path& path);

}  // namespace unicorn
