#include "depgcn/io.hpp"

#include "binary.hpp"
#include "depgcn/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>

namespace depgcn::io {

namespace fs = std::filesystem;
using detail::ByteReader;
using detail::ByteWriter;

namespace {

std::vector<fs::path> list_with_extension(const fs::path& dir, std::string_view ext) {
  if (!fs::is_directory(dir)) throw InputError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ext) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void write_recording(const RawRecording& rec, const fs::path& path) {
  ByteWriter w;
  w.magic("EEGR");
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(rec.signal.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(rec.signal.cols()));
  w.put<double>(rec.sample_rate_hz);
  w.put<std::int32_t>(rec.score ? *rec.score : -1);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(rec.scale));
  for (Eigen::Index c = 0; c < rec.signal.rows(); ++c) {
    for (Eigen::Index t = 0; t < rec.signal.cols(); ++t) w.put<float>(static_cast<float>(rec.signal(c, t)));
  }
  w.save(path);
}

RawRecording read_recording(const fs::path& path) {
  auto r = ByteReader::load(path);
  r.expect_magic("EEGR");
  r.expect_version(kFormatVersion);
  const auto channels = r.get<std::uint32_t>();
  const auto samples = r.get<std::uint32_t>();
  RawRecording rec;
  rec.subject_id = path.stem().string();
  rec.sample_rate_hz = r.get<double>();
  const auto score = r.get<std::int32_t>();
  if (score >= 0) rec.score = score;
  const auto scale = r.get<std::uint8_t>();
  if (scale > 1) throw FormatError(r.source() + ": unknown scale code " + std::to_string(scale));
  rec.scale = static_cast<Scale>(scale);
  if (!(rec.sample_rate_hz > 0.0)) throw FormatError(r.source() + ": non-positive sample rate");
  if (r.remaining() != std::size_t{4} * channels * samples) throw FormatError(r.source() + ": truncated file");
  rec.signal.resize(channels, samples);
  for (std::uint32_t c = 0; c < channels; ++c) {
    for (std::uint32_t t = 0; t < samples; ++t) rec.signal(c, t) = r.get<float>();
  }
  r.expect_end();
  return rec;
}

void write_features(const SubjectDataset& subject, const fs::path& path) {
  validate(subject);
  if (subject.subject_id.size() > 0xFFFF) throw InputError("subject id too long");
  if (subject.label < 0 || subject.label > 0xFF) throw InputError("label does not fit in u8");
  ByteWriter w;
  w.magic("DEFS");
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(subject.subject_id.size()));
  w.raw(subject.subject_id);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(subject.samples.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(subject.channels()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(subject.bands()));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(subject.label));
  for (const auto& s : subject.samples) {
    for (Eigen::Index c = 0; c < s.features.rows(); ++c) {
      for (Eigen::Index b = 0; b < s.features.cols(); ++b) w.put<float>(static_cast<float>(s.features(c, b)));
    }
  }
  w.save(path);
}

SubjectDataset read_features(const fs::path& path) {
  auto r = ByteReader::load(path);
  r.expect_magic("DEFS");
  r.expect_version(kFormatVersion);
  SubjectDataset subject;
  subject.subject_id = r.raw(r.get<std::uint16_t>());
  const auto epochs = r.get<std::uint32_t>();
  const auto channels = r.get<std::uint32_t>();
  const auto bands = r.get<std::uint32_t>();
  subject.label = r.get<std::uint8_t>();
  if (epochs == 0) throw FormatError(r.source() + ": no epochs");
  if (r.remaining() != std::size_t{4} * epochs * channels * bands) throw FormatError(r.source() + ": truncated file");
  subject.samples.reserve(epochs);
  for (std::uint32_t e = 0; e < epochs; ++e) {
    FeatureSample s{subject.subject_id, e, Eigen::MatrixXd(channels, bands), subject.label};
    for (std::uint32_t c = 0; c < channels; ++c) {
      for (std::uint32_t b = 0; b < bands; ++b) s.features(c, b) = r.get<float>();
    }
    subject.samples.push_back(std::move(s));
  }
  r.expect_end();
  validate(subject);
  return subject;
}

void quantize_to_f32(SubjectDataset& subject) {
  for (auto& s : subject.samples) s.features = s.features.cast<float>().cast<double>();
}

std::vector<fs::path> write_feature_store(const std::vector<SubjectDataset>& subjects, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<fs::path> written;
  nlohmann::ordered_json scores = nlohmann::ordered_json::object();
  for (const auto& s : subjects) {
    auto path = dir / (s.subject_id + ".defs");
    write_features(s, path);
    written.push_back(path);
    if (s.score) scores[s.subject_id] = *s.score;
  }
  if (!scores.empty()) {
    auto path = dir / "scores.json";
    std::ofstream(path) << scores.dump(2) << '\n';
    written.push_back(path);
  }
  return written;
}

std::vector<SubjectDataset> read_feature_store(const fs::path& dir) {
  std::vector<SubjectDataset> subjects;
  for (const auto& path : list_with_extension(dir, ".defs")) subjects.push_back(read_features(path));
  if (subjects.empty()) throw InputError("no feature files found in '" + dir.string() + "'");
  const auto score_path = dir / "scores.json";
  if (fs::exists(score_path)) {
    std::ifstream in(score_path);
    nlohmann::json scores;
    try {
      scores = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(score_path.string() + ": " + e.what());
    }
    for (auto& s : subjects) {
      if (auto it = scores.find(s.subject_id); it != scores.end() && it->is_number_integer()) {
        s.score = it->get<int>();
      }
    }
  }
  return subjects;
}

std::vector<fs::path> list_recordings(const fs::path& dir) { return list_with_extension(dir, ".eegr"); }

}  // namespace depgcn::io
