#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pathopaint/corpus.hpp"
#include "pathopaint/embedding_bank.hpp"
#include "pathopaint/inpaint.hpp"

namespace pathopaint {

/// One line of a corpus manifest. Paths are relative to the manifest's directory.
struct CorpusRecord {
  std::string patch_id;
  std::string source_image_id;
  int family = -1;
  std::string split;  // train | validation | test
  std::string image_path;
  std::string mask_path;
  std::int64_t fg_pixels = 0;

  bool operator==(const CorpusRecord&) const = default;
};

/// One line of a synthetic-set manifest.
struct SyntheticRecord {
  std::string patch_id;
  std::string recipient_patch_id;
  std::string donor_patch_id;
  std::int32_t cluster_id = -1;
  std::uint64_t seed = 0;
  std::string image_path;
  std::string mask_path;
  std::optional<std::string> uncertain_path;
  bool fallback = false;
  std::string source_image_id;

  bool operator==(const SyntheticRecord&) const = default;
};

void write_corpus_manifest(const std::filesystem::path& path, const std::vector<CorpusRecord>& records);
std::vector<CorpusRecord> read_corpus_manifest(const std::filesystem::path& path);

void write_synthetic_manifest(const std::filesystem::path& path, const std::vector<SyntheticRecord>& records);
std::vector<SyntheticRecord> read_synthetic_manifest(const std::filesystem::path& path);

/// Writes images/, masks/ and manifest.jsonl under `dir`.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& dir);

/// Reads any directory holding a corpus manifest as a flat dataset (all splits).
Dataset read_dataset(const std::filesystem::path& dir);

/// Writes images/, masks/, uncertain/ (when present) and manifest.jsonl under `dir`.
void write_synthetic_set(const std::filesystem::path& dir, const std::vector<SyntheticPair>& pairs);
std::vector<SyntheticPair> read_synthetic_set(const std::filesystem::path& dir);

struct AuditReport {
  std::size_t records = 0;
  std::vector<std::string> orphan_files;       // on disk but referenced by no record
  std::vector<std::string> missing_files;      // referenced but absent
  std::vector<std::string> duplicate_refs;     // referenced by more than one record
  std::vector<std::string> sampling_violations;  // donor/recipient constraint failures

  bool ok() const {
    return orphan_files.empty() && missing_files.empty() && duplicate_refs.empty() && sampling_violations.empty();
  }
};

/// Checks that every file under a synthetic set is referenced exactly once and, when a bank is
/// given, that each donor shares the recipient's cluster (unless flagged as fallback) and comes
/// from a different source image.
AuditReport audit_synthetic_set(const std::filesystem::path& dir, const EmbeddingBank* bank = nullptr);

}  // namespace pathopaint
