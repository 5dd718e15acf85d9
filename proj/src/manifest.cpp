#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "unicorn/datamodel.hpp"
#include "unicorn/errors.hpp"

namespace unicorn {

using json = nlohmann::ordered_json;

void RecordingMeta::validate() const {
  if (subject_id.empty() || stimulus_id.empty()) throw ValidationError("recording: empty subject or stimulus id");
  if (!(tr_seconds > 0.0)) throw ValidationError("recording " + subject_id + "/" + stimulus_id + ": tr_seconds must be > 0");
  if (n_frames != volume_paths.size()) {
    throw ValidationError("recording " + subject_id + "/" + stimulus_id + ": n_frames " + std::to_string(n_frames) +
                          " but " + std::to_string(volume_paths.size()) + " volume paths");
  }
  double previous_onset = 0.0;
  for (const auto& w : transcript) {
    if (w.onset_sec < 0.0 || w.offset_sec < w.onset_sec)
      throw ValidationError("transcript word '" + w.word + "' has invalid onset/offset");
    if (w.onset_sec < previous_onset) throw ValidationError("transcript onsets must be non-decreasing");
    previous_onset = w.onset_sec;
  }
}

namespace {

json to_json(const RecordingMeta& meta) {
  json transcript = json::array();
  for (const auto& w : meta.transcript) transcript.push_back(json::array({w.word, w.onset_sec, w.offset_sec}));
  return json{{"subject_id", meta.subject_id},     {"stimulus_id", meta.stimulus_id},
              {"tr_seconds", meta.tr_seconds},     {"n_frames", meta.n_frames},
              {"volume_paths", meta.volume_paths}, {"transcript", std::move(transcript)}};
}

RecordingMeta from_json(const json& record) {
  static const std::vector<std::string> kFields = {"subject_id", "stimulus_id", "tr_seconds",
                                                   "n_frames",   "volume_paths", "transcript"};
  if (!record.is_object()) throw FormatError("manifest record is not an object");
  for (const auto& [key, _] : record.items()) {
    if (std::find(kFields.begin(), kFields.end(), key) == kFields.end())
      throw FormatError("manifest: unknown field '" + key + "'");
  }
  RecordingMeta meta;
  try {
    meta.subject_id = record.at("subject_id").get<std::string>();
    meta.stimulus_id = record.at("stimulus_id").get<std::string>();
    meta.tr_seconds = record.at("tr_seconds").get<double>();
    meta.n_frames = record.at("n_frames").get<std::size_t>();
    meta.volume_paths = record.at("volume_paths").get<std::vector<std::string>>();
    for (const auto& triple : record.at("transcript")) {
      if (!triple.is_array() || triple.size() != 3) throw FormatError("manifest: transcript entries are triples");
      meta.transcript.push_back({triple[0].get<std::string>(), triple[1].get<double>(), triple[2].get<double>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  meta.validate();
  return meta;
}

}  // namespace

std::string encode_manifest(const std::vector<RecordingMeta>& recordings) {
  std::string out;
  for (const auto& r : recordings) {
    r.validate();
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::vector<RecordingMeta> decode_manifest(std::string_view text) {
  std::vector<RecordingMeta> recordings;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    recordings.push_back(from_json(record));
  }
  return recordings;
}

void write_manifest(const std::vector<RecordingMeta>& recordings, const std::filesystem::path& path) {
  const std::string text = encode_manifest(recordings);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out << text;
}

std::vector<RecordingMeta> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open manifest " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_manifest(buffer.str());
}

std::string encode_eeg_features(const std::vector<EegWordFeature>& features) {
  std::string out;
  for (const auto& f : features) {
    if (f.subject_id.empty() || f.sentence_id.empty()) throw ValidationError("EEG feature: empty subject or sentence id");
    out += json{{"subject_id", f.subject_id},
                {"sentence_id", f.sentence_id},
                {"word_index", f.word_index},
                {"word", f.word},
                {"features", f.features}}
               .dump();
    out += '\n';
  }
  return out;
}

std::vector<EegWordFeature> decode_eeg_features(std::string_view text) {
  std::vector<EegWordFeature> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json record = json::parse(line);
      if (!record.is_object() || record.size() != 5) throw FormatError("expected exactly five fields");
      EegWordFeature f;
      f.subject_id = record.at("subject_id").get<std::string>();
      f.sentence_id = record.at("sentence_id").get<std::string>();
      f.word_index = record.at("word_index").get<std::size_t>();
      f.word = record.at("word").get<std::string>();
      f.features = record.at("features").get<std::vector<double>>();
      out.push_back(std::move(f));
    } catch (const json::exception& e) {
      throw FormatError("EEG features line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("EEG features line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_eeg_features(const std::vector<EegWordFeature>& features, const std::filesystem::path& path) {
  const std::string text = encode_eeg_features(features);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out << text;
}

std::vector<EegWordFeature> read_eeg_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open EEG features " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_eeg_features(buffer.str());
}

}  // namespace unicorn
