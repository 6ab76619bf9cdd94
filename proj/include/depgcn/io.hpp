#pragma once

#include "depgcn/features.hpp"

#include <filesystem>
#include <map>
#include <vector>

namespace depgcn::io {

// Binary layouts are little-endian regardless of host.
//
// Raw recording (.eegr):
//   "EEGR" u32 version=1 u32 channels u32 samples f64 sample_rate
//   i32 score (-1 absent) u8 scale (0 PHQ9, 1 BDI) f32[channels*samples] row-major
//
// Feature store (.defs), one file per subject:
//   "DEFS" u32 version=1 u16 id_len u8[id_len] (UTF-8) u32 epochs u32 channels
//   u32 bands u8 label f32[epochs*channels*bands] row-major

inline constexpr std::uint32_t kFormatVersion = 1;

void write_recording(const RawRecording& rec, const std::filesystem::path& path);
RawRecording read_recording(const std::filesystem::path& path);

void write_features(const SubjectDataset& subject, const std::filesystem::path& path);
SubjectDataset read_features(const std::filesystem::path& path);

/// Rounds every feature to float precision, so the dataset equals what a
/// write_features/read_features round trip would produce.
void quantize_to_f32(SubjectDataset& subject);

/// Writes `<dir>/<subject_id>.defs` for every subject, plus `scores.json`
/// when any subject carries a questionnaire score.
std::vector<std::filesystem::path> write_feature_store(const std::vector<SubjectDataset>& subjects,
                                                       const std::filesystem::path& dir);

/// Loads every *.defs file in `dir` (sorted by file name) and attaches
/// scores from `scores.json` when present.
std::vector<SubjectDataset> read_feature_store(const std::filesystem::path& dir);

/// Sorted list of *.eegr files in `dir`.
std::vector<std::filesystem::path> list_recordings(const std::filesystem::path& dir);

}  // namespace depgcn::io
