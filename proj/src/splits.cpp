#include "unicorn/splits.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "unicorn/errors.hpp"
#include "unicorn/log.hpp"
#include "unicorn/rng.hpp"

namespace unicorn {

using json = nlohmann::ordered_json;

std::string to_string(SplitMethod m) {
  switch (m) {
    case SplitMethod::random: return "random";
    case SplitMethod::random_time: return "random_time";
    case SplitMethod::consecutive_time: return "consecutive_time";
    case SplitMethod::by_stimuli: return "by_stimuli";
    case SplitMethod::by_subject: return "by_subject";
  }
  return "random";
}

SplitMethod parse_split_method(const std::string& text) {
  for (auto m : all_split_methods())
    if (to_string(m) == text) return m;
  throw ValidationError("unknown split method '" + text +
                        "' (expected random|random_time|consecutive_time|by_stimuli|by_subject)");
}

const std::vector<SplitMethod>& all_split_methods() {
  static const std::vector<SplitMethod> methods = {SplitMethod::random, SplitMethod::random_time,
                                                   SplitMethod::consecutive_time, SplitMethod::by_stimuli,
                                                   SplitMethod::by_subject};
  return methods;
}

void SplitRatios::validate() const {
  if (!(train > 0.0 && val > 0.0 && test > 0.0)) throw ValidationError("split ratios must be positive");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
}

SplitRatios parse_ratios(const std::string& text) {
  std::string normalized = text;
  std::replace(normalized.begin(), normalized.end(), '/', ',');
  std::istringstream in(normalized);
  std::string part;
  std::vector<double> values;
  while (std::getline(in, part, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ValidationError("ratios: cannot parse '" + part + "'");
    }
  }
  if (values.size() != 3) throw ValidationError("ratios: expected three values");
  SplitRatios r{values[0], values[1], values[2]};
  r.validate();
  return r;
}

std::string format_ratios(const SplitRatios& r) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.2f/%.2f/%.2f", r.train, r.val, r.test);
  return buffer;
}

std::set<WindowKey> SplitAssignment::train_windows() const { return {train.begin(), train.end()}; }

std::map<std::string, std::set<std::size_t>> SplitAssignment::train_start_indices() const {
  std::map<std::string, std::set<std::size_t>> out;
  for (const auto& w : train) out[w.stimulus_id].insert(w.start_index);
  return out;
}

std::set<std::string> SplitAssignment::train_stimuli() const {
  std::set<std::string> out;
  for (const auto& w : train) out.insert(w.stimulus_id);
  return out;
}

std::set<std::string> SplitAssignment::train_subjects() const {
  std::set<std::string> out;
  for (const auto& w : train) out.insert(w.subject_id);
  return out;
}

namespace {

enum Part : int { kTrain = 0, kVal = 1, kTest = 2 };

/// Cut points [0,a) train, [a,b) val, [b,n) test over n ordered items. Every
/// part is nonempty when n >= 3.
std::pair<std::size_t, std::size_t> cut_points(std::size_t n, const SplitRatios& r) {
  const double dn = static_cast<double>(n);
  auto a = static_cast<std::size_t>(std::floor(r.train * dn + 1e-9));
  auto b = static_cast<std::size_t>(std::floor((r.train + r.val) * dn + 1e-9));
  if (n >= 3) {
    a = std::clamp<std::size_t>(a, 1, n - 2);
    b = std::clamp<std::size_t>(b, a + 1, n - 1);
  } else {
    b = std::min(std::max(a, b), n);
  }
  return {a, b};
}

Part part_of(std::size_t position, std::pair<std::size_t, std::size_t> cuts) {
  if (position < cuts.first) return kTrain;
  if (position < cuts.second) return kVal;
  return kTest;
}

struct Interval {
  std::size_t first, last;
};

using RecordingIntervals = std::map<std::pair<std::string, std::string>, std::vector<Interval>>;

RecordingIntervals index_intervals(const std::vector<WindowKey>& windows) {
  RecordingIntervals out;
  for (const auto& w : windows)
    out[{w.subject_id, w.stimulus_id}].push_back({w.start_index, w.start_index + w.series_length - 1});
  return out;
}

bool overlaps_any(const WindowKey& w, const RecordingIntervals& index) {
  auto it = index.find({w.subject_id, w.stimulus_id});
  if (it == index.end()) return false;
  const std::size_t first = w.start_index, last = w.start_index + w.series_length - 1;
  return std::any_of(it->second.begin(), it->second.end(),
                     [&](const Interval& iv) { return iv.first <= last && first <= iv.last; });
}

/// Grouped partition: contiguous cuts over shuffled groups minimizing the
/// L1 distance between achieved and requested window counts.
std::map<std::string, Part> partition_groups(const std::map<std::string, std::size_t>& group_sizes,
                                             const SplitRatios& ratios, Rng& rng, const char* what) {
  if (group_sizes.size() < 3) {
    throw InfeasibleSplitError(std::string("split by ") + what + " needs at least 3 distinct " + what + ", found " +
                               std::to_string(group_sizes.size()));
  }
  std::vector<std::string> order;
  std::size_t total = 0;
  for (const auto& [name, size] : group_sizes) {
    order.push_back(name);
    total += size;
  }
  rng.shuffle(order);
  std::vector<std::size_t> prefix{0};
  for (const auto& name : order) prefix.push_back(prefix.back() + group_sizes.at(name));
  const auto target = ratios.as_array();
  const std::size_t g = order.size();
  double best = std::numeric_limits<double>::infinity();
  std::pair<std::size_t, std::size_t> best_cut{1, 2};
  for (std::size_t a = 1; a + 1 < g; ++a)
    for (std::size_t b = a + 1; b < g; ++b) {
      const double counts[3] = {static_cast<double>(prefix[a]), static_cast<double>(prefix[b] - prefix[a]),
                                static_cast<double>(total - prefix[b])};
      double cost = 0.0;
      for (int p = 0; p < 3; ++p) cost += std::abs(counts[p] - target[p] * static_cast<double>(total));
      if (cost < best) {
        best = cost;
        best_cut = {a, b};
      }
    }
  std::map<std::string, Part> out;
  for (std::size_t i = 0; i < g; ++i) out[order[i]] = part_of(i, best_cut);
  return out;
}

}  // namespace

SplitAssignment generate_split(const std::vector<WindowKey>& windows, SplitMethod method, const SplitRatios& ratios,
                               std::uint64_t seed, bool purge_overlap) {
  ratios.validate();
  std::vector<WindowKey> keys = windows;
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end())
    throw ValidationError("generate_split: duplicate window keys");
  for (const auto& k : keys)
    if (k.series_length == 0) throw ValidationError("generate_split: window with zero length");

  SplitAssignment out;
  out.method = method;
  out.ratios = ratios;
  out.seed = seed;
  out.purge_overlap = purge_overlap;
  Rng rng(derive_seed(seed, 0x73706c6974ULL + static_cast<std::uint64_t>(method)));

  std::vector<Part> parts(keys.size(), kTrain);
  switch (method) {
    case SplitMethod::random: {
      std::vector<std::size_t> order(keys.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(order);
      const auto cuts = cut_points(order.size(), ratios);
      for (std::size_t pos = 0; pos < order.size(); ++pos) parts[order[pos]] = part_of(pos, cuts);
      break;
    }
    case SplitMethod::random_time:
    case SplitMethod::consecutive_time: {
      // Start-index sets per stimulus, shared by every subject.
      std::map<std::string, std::set<std::size_t>> starts;
      for (const auto& k : keys) starts[k.stimulus_id].insert(k.start_index);
      std::map<std::pair<std::string, std::size_t>, Part> start_part;
      for (const auto& [stimulus, set] : starts) {
        std::vector<std::size_t> order(set.begin(), set.end());
        if (method == SplitMethod::random_time) rng.shuffle(order);
        const auto cuts = cut_points(order.size(), ratios);
        for (std::size_t pos = 0; pos < order.size(); ++pos) start_part[{stimulus, order[pos]}] = part_of(pos, cuts);
      }
      for (std::size_t i = 0; i < keys.size(); ++i) parts[i] = start_part.at({keys[i].stimulus_id, keys[i].start_index});
      break;
    }
    case SplitMethod::by_stimuli:
    case SplitMethod::by_subject: {
      const bool by_subject = method == SplitMethod::by_subject;
      std::map<std::string, std::size_t> sizes;
      for (const auto& k : keys) ++sizes[by_subject ? k.subject_id : k.stimulus_id];
      auto groups = partition_groups(sizes, ratios, rng, by_subject ? "subjects" : "stimuli");
      for (std::size_t i = 0; i < keys.size(); ++i)
        parts[i] = groups.at(by_subject ? keys[i].subject_id : keys[i].stimulus_id);
      break;
    }
  }

  for (std::size_t i = 0; i < keys.size(); ++i) {
    auto& bucket = parts[i] == kTrain ? out.train : (parts[i] == kVal ? out.val : out.test);
    bucket.push_back(keys[i]);
  }

  if (purge_overlap) {
    const auto train_index = index_intervals(out.train);
    for (auto* bucket : {&out.val, &out.test}) {
      std::vector<WindowKey> kept;
      for (auto& w : *bucket) {
        if (overlaps_any(w, train_index)) {
          out.purged.push_back(w);
        } else {
          kept.push_back(w);
        }
      }
      *bucket = std::move(kept);
    }
    std::sort(out.purged.begin(), out.purged.end());
  }
  return out;
}

std::size_t count_frame_overlap(const std::vector<WindowKey>& candidates, const std::vector<WindowKey>& reference) {
  const auto index = index_intervals(reference);
  return static_cast<std::size_t>(
      std::count_if(candidates.begin(), candidates.end(), [&](const WindowKey& w) { return overlaps_any(w, index); }));
}

bool SplitCertificate::passed() const { return violations() == 0; }

std::size_t SplitCertificate::violations() const {
  return static_cast<std::size_t>(
      std::count_if(predicates.begin(), predicates.end(), [](const PredicateResult& p) { return !p.passed; }));
}

std::string SplitCertificate::render() const {
  std::ostringstream out;
  for (const auto& p : predicates) {
    out << p.name << ": " << (p.passed ? "PASS" : "FAIL");
    if (!p.detail.empty()) out << " (" << p.detail << ")";
    out << '\n';
  }
  out << "test_leakage: " << test_leakage << '\n';
  out << "val_leakage: " << val_leakage << '\n';
  char buffer[128];
  std::snprintf(buffer, sizeof buffer, "achieved_ratios: %.4f/%.4f/%.4f (%zu/%zu/%zu windows)\n", achieved_ratios[0],
                achieved_ratios[1], achieved_ratios[2], counts[0], counts[1], counts[2]);
  out << buffer;
  out << "certificate: " << (passed() ? "PASS" : "FAIL") << '\n';
  return out.str();
}

namespace {

std::string join(const std::set<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ",";
    out += s;
  }
  return out;
}

/// "no held-out <group> appears in the training set"
void check_group_atomicity(const SplitAssignment& a, bool by_subject, SplitCertificate& cert) {
  const auto train_groups = by_subject ? a.train_subjects() : a.train_stimuli();
  const char* symbol = by_subject ? "S_Tr" : "C_Tr";
  const char* field = by_subject ? "subject" : "stimulus";
  for (const auto& [name, bucket] :
       {std::pair{"test", &a.test}, std::pair{"val", &a.val}}) {
    std::set<std::string> offenders;
    for (const auto& w : *bucket) {
      const auto& g = by_subject ? w.subject_id : w.stimulus_id;
      if (train_groups.count(g)) offenders.insert(g);
    }
    cert.predicates.push_back({std::string(name) + " " + field + " not in " + symbol, offenders.empty(),
                               offenders.empty() ? "" : "offending " + std::string(field) + ": " + join(offenders)});
  }
  if (!by_subject) return;
  // Val and test must also be group-disjoint from each other.
  std::set<std::string> val_groups, clash;
  for (const auto& w : a.val) val_groups.insert(w.subject_id);
  for (const auto& w : a.test)
    if (val_groups.count(w.subject_id)) clash.insert(w.subject_id);
  cert.predicates.push_back({"val/test subjects disjoint", clash.empty(), clash.empty() ? "" : join(clash)});
}

}  // namespace

SplitCertificate verify_split(const SplitAssignment& a) {
  SplitCertificate cert;
  const std::size_t total = a.train.size() + a.val.size() + a.test.size();
  cert.counts = {a.train.size(), a.val.size(), a.test.size()};
  for (int p = 0; p < 3; ++p)
    cert.achieved_ratios[p] = total ? static_cast<double>(cert.counts[p]) / static_cast<double>(total) : 0.0;

  {
    std::map<WindowKey, int> seen;
    std::size_t clashes = 0;
    for (const auto* bucket : {&a.train, &a.val, &a.test})
      for (const auto& w : *bucket)
        if (++seen[w] > 1) ++clashes;
    cert.predicates.push_back({"train/val/test pairwise disjoint", clashes == 0,
                               clashes ? std::to_string(clashes) + " shared windows" : ""});
  }

  switch (a.method) {
    case SplitMethod::random: {
      const auto f_tr = a.train_windows();
      std::size_t bad = 0;
      for (const auto* bucket : {&a.val, &a.test})
        for (const auto& w : *bucket) bad += f_tr.count(w);
      cert.predicates.push_back({"held-out windows not in F_Tr", bad == 0, bad ? std::to_string(bad) + " windows" : ""});
      break;
    }
    case SplitMethod::random_time: {
      const auto t_tr = a.train_start_indices();
      for (const auto& [name, bucket] : {std::pair{"test", &a.test}, std::pair{"val", &a.val}}) {
        std::set<std::string> offenders;
        for (const auto& w : *bucket) {
          auto it = t_tr.find(w.stimulus_id);
          if (it != t_tr.end() && it->second.count(w.start_index)) offenders.insert(w.to_string());
        }
        cert.predicates.push_back({std::string(name) + " start k not in T^j_Tr", offenders.empty(), join(offenders)});
      }
      break;
    }
    case SplitMethod::consecutive_time: {
      std::map<std::string, std::array<std::vector<std::size_t>, 3>> starts;
      for (int p = 0; p < 3; ++p) {
        const auto& bucket = p == 0 ? a.train : (p == 1 ? a.val : a.test);
        for (const auto& w : bucket) starts[w.stimulus_id][p].push_back(w.start_index);
      }
      for (const auto& [stimulus, sets] : starts) {
        auto max_of = [](const std::vector<std::size_t>& v) { return *std::max_element(v.begin(), v.end()); };
        auto min_of = [](const std::vector<std::size_t>& v) { return *std::min_element(v.begin(), v.end()); };
        const auto& [tr, va, te] = sets;
        if (!tr.empty() && !te.empty()) {
          const bool ok = max_of(tr) < min_of(te);
          cert.predicates.push_back({"[" + stimulus + "] max_train_start < min_test_start", ok,
                                     std::to_string(max_of(tr)) + " < " + std::to_string(min_of(te))});
        }
        if (!tr.empty() && !va.empty()) {
          cert.predicates.push_back({"[" + stimulus + "] max_train_start < min_val_start", max_of(tr) < min_of(va),
                                     std::to_string(max_of(tr)) + " < " + std::to_string(min_of(va))});
        }
        if (!va.empty() && !te.empty()) {
          cert.predicates.push_back({"[" + stimulus + "] max_val_start < min_test_start", max_of(va) < min_of(te),
                                     std::to_string(max_of(va)) + " < " + std::to_string(min_of(te))});
        }
      }
      break;
    }
    case SplitMethod::by_stimuli:
      check_group_atomicity(a, false, cert);
      break;
    case SplitMethod::by_subject:
      check_group_atomicity(a, true, cert);
      break;
  }

  cert.test_leakage = count_frame_overlap(a.test, a.train);
  cert.val_leakage = count_frame_overlap(a.val, a.train);
  if (a.purge_overlap) {
    const bool clean = cert.test_leakage == 0 && cert.val_leakage == 0;
    cert.predicates.push_back({"purged: no held-out frame overlaps training", clean,
                               std::to_string(cert.test_leakage + cert.val_leakage) + " overlapping windows"});
  }
  return cert;
}

namespace {

json keys_to_json(const std::vector<WindowKey>& keys) {
  json out = json::array();
  for (const auto& k : keys) out.push_back(json::array({k.subject_id, k.stimulus_id, k.start_index, k.series_length}));
  return out;
}

std::vector<WindowKey> keys_from_json(const json& array) {
  std::vector<WindowKey> out;
  for (const auto& item : array) {
    if (!item.is_array() || item.size() != 4) throw FormatError("split: window keys are 4-element arrays");
    out.push_back({item[0].get<std::string>(), item[1].get<std::string>(), item[2].get<std::size_t>(),
                   item[3].get<std::size_t>()});
  }
  return out;
}

}  // namespace

std::string encode_split(const SplitAssignment& a) {
  const auto cert = verify_split(a);
  json doc{{"method", to_string(a.method)},
           {"seed", a.seed},
           {"ratios", json::array({a.ratios.train, a.ratios.val, a.ratios.test})},
           {"purge_overlap", a.purge_overlap},
           {"train", keys_to_json(a.train)},
           {"val", keys_to_json(a.val)},
           {"test", keys_to_json(a.test)},
           {"purged", keys_to_json(a.purged)},
           {"certificate",
            {{"passed", cert.passed()},
             {"violations", cert.violations()},
             {"test_leakage", cert.test_leakage},
             {"val_leakage", cert.val_leakage},
             {"achieved_ratios", cert.achieved_ratios}}}};
  return doc.dump(1) + "\n";
}

SplitAssignment decode_split(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("split: ") + e.what());
  }
  SplitAssignment a;
  try {
    a.method = parse_split_method(doc.at("method").get<std::string>());
    a.seed = doc.at("seed").get<std::uint64_t>();
    const auto& r = doc.at("ratios");
    if (!r.is_array() || r.size() != 3) throw FormatError("split: ratios must have three entries");
    a.ratios = {r[0].get<double>(), r[1].get<double>(), r[2].get<double>()};
    a.purge_overlap = doc.at("purge_overlap").get<bool>();
    a.train = keys_from_json(doc.at("train"));
    a.val = keys_from_json(doc.at("val"));
    a.test = keys_from_json(doc.at("test"));
    a.purged = keys_from_json(doc.at("purged"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("split: ") + e.what());
  }
  return a;
}

void write_split(const SplitAssignment& assignment, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out << encode_split(assignment);
}

SplitAssignment read_split(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open split file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_split(buffer.str());
}

}  // namespace unicorn
