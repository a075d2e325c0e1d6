#include "pathopaint/manifest.hpp"

#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "pathopaint/errors.hpp"
#include "pathopaint/image_io.hpp"

namespace pathopaint {

using nlohmann::json;
namespace fs = std::filesystem;

void to_json(json& j, const CorpusRecord& r) {
  j = json{{"patch_id", r.patch_id},     {"source_image_id", r.source_image_id}, {"family", r.family},
           {"split", r.split},           {"image_path", r.image_path},           {"mask_path", r.mask_path},
           {"fg_pixels", r.fg_pixels}};
}

void from_json(const json& j, CorpusRecord& r) {
  j.at("patch_id").get_to(r.patch_id);
  j.at("source_image_id").get_to(r.source_image_id);
  r.family = j.value("family", -1);
  r.split = j.value("split", std::string("train"));
  j.at("image_path").get_to(r.image_path);
  j.at("mask_path").get_to(r.mask_path);
  r.fg_pixels = j.value("fg_pixels", std::int64_t{0});
}

void to_json(json& j, const SyntheticRecord& r) {
  j = json{{"patch_id", r.patch_id},
           {"recipient_patch_id", r.recipient_patch_id},
           {"donor_patch_id", r.donor_patch_id},
           {"cluster_id", r.cluster_id},
           {"seed", r.seed},
           {"image_path", r.image_path},
           {"mask_path", r.mask_path},
           {"fallback", r.fallback},
           {"source_image_id", r.source_image_id}};
  if (r.uncertain_path) j["uncertain_path"] = *r.uncertain_path;
}

void from_json(const json& j, SyntheticRecord& r) {
  j.at("patch_id").get_to(r.patch_id);
  j.at("recipient_patch_id").get_to(r.recipient_patch_id);
  j.at("donor_patch_id").get_to(r.donor_patch_id);
  j.at("cluster_id").get_to(r.cluster_id);
  j.at("seed").get_to(r.seed);
  j.at("image_path").get_to(r.image_path);
  j.at("mask_path").get_to(r.mask_path);
  r.fallback = j.value("fallback", false);
  r.source_image_id = j.value("source_image_id", std::string());
  if (j.contains("uncertain_path") && !j["uncertain_path"].is_null()) r.uncertain_path = j["uncertain_path"].get<std::string>();
}

namespace {

template <typename Record>
void write_jsonl(const fs::path& path, const std::vector<Record>& records) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw FormatError("cannot open " + tmp.string());
    for (const auto& r : records) os << json(r).dump() << '\n';
  }
  fs::rename(tmp, path);
}

template <typename Record>
std::vector<Record> read_jsonl(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  std::vector<Record> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line).get<Record>());
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

void write_corpus_manifest(const fs::path& path, const std::vector<CorpusRecord>& records) { write_jsonl(path, records); }
std::vector<CorpusRecord> read_corpus_manifest(const fs::path& path) { return read_jsonl<CorpusRecord>(path); }
void write_synthetic_manifest(const fs::path& path, const std::vector<SyntheticRecord>& records) {
  write_jsonl(path, records);
}
std::vector<SyntheticRecord> read_synthetic_manifest(const fs::path& path) { return read_jsonl<SyntheticRecord>(path); }

void write_corpus(const fs::path& dir, const Corpus& corpus) {
  std::vector<CorpusRecord> records;
  auto add = [&](const Dataset& split, const char* name) {
    for (const auto& s : split) {
      CorpusRecord r{s.patch_id, s.source_image_id, s.family, name, "images/" + s.patch_id + ".png",
                     "masks/" + s.patch_id + ".png", foreground_pixels(s)};
      write_rgb_png(dir / r.image_path, s.image);
      write_mask_png(dir / r.mask_path, s.mask);
      records.push_back(std::move(r));
    }
  };
  add(corpus.train, "train");
  add(corpus.validation, "validation");
  add(corpus.test, "test");
  write_corpus_manifest(dir / "manifest.jsonl", records);
}

Corpus read_corpus(const fs::path& dir) {
  Corpus corpus;
  for (const auto& r : read_corpus_manifest(dir / "manifest.jsonl")) {
    PatchSample s;
    s.image = read_rgb_png(dir / r.image_path);
    s.mask = read_mask_png(dir / r.mask_path);
    s.source_image_id = r.source_image_id;
    s.patch_id = r.patch_id;
    s.family = r.family;
    validate_sample(s);
    if (r.split == "validation") {
      corpus.validation.push_back(std::move(s));
    } else if (r.split == "test") {
      corpus.test.push_back(std::move(s));
    } else {
      corpus.train.push_back(std::move(s));
    }
  }
  return corpus;
}

Dataset read_dataset(const fs::path& dir) { return read_corpus(dir).all(); }

void write_synthetic_set(const fs::path& dir, const std::vector<SyntheticPair>& pairs) {
  std::vector<SyntheticRecord> records;
  for (const auto& p : pairs) {
    SyntheticRecord r;
    r.patch_id = p.sample.patch_id;
    r.recipient_patch_id = p.recipient_patch_id;
    r.donor_patch_id = p.donor_patch_id;
    r.cluster_id = p.cluster_id;
    r.seed = p.seed;
    r.fallback = p.fallback;
    r.source_image_id = p.sample.source_image_id;
    r.image_path = "images/" + r.patch_id + ".png";
    r.mask_path = "masks/" + r.patch_id + ".png";
    write_rgb_png(dir / r.image_path, p.sample.image);
    write_mask_png(dir / r.mask_path, p.sample.mask);
    if (p.uncertain) {
      r.uncertain_path = "uncertain/" + r.patch_id + ".png";
      write_mask_png(dir / *r.uncertain_path, p.uncertain->fn_map);
    }
    records.push_back(std::move(r));
  }
  write_synthetic_manifest(dir / "manifest.jsonl", records);
}

std::vector<SyntheticPair> read_synthetic_set(const fs::path& dir) {
  std::vector<SyntheticPair> out;
  for (const auto& r : read_synthetic_manifest(dir / "manifest.jsonl")) {
    SyntheticPair p;
    p.sample.image = read_rgb_png(dir / r.image_path);
    p.sample.mask = read_mask_png(dir / r.mask_path);
    p.sample.patch_id = r.patch_id;
    p.sample.source_image_id = r.source_image_id;
    p.sample.origin = Origin::synthetic;
    p.donor_patch_id = r.donor_patch_id;
    p.recipient_patch_id = r.recipient_patch_id;
    p.cluster_id = r.cluster_id;
    p.fallback = r.fallback;
    p.seed = r.seed;
    if (r.uncertain_path) {
      UncertainMask u;
      u.fn_map = read_mask_png(dir / *r.uncertain_path);
      u.mask = p.sample.mask;
      u.predicted = (p.sample.mask - u.fn_map).to(torch::kUInt8);
      p.uncertain = std::move(u);
    }
    out.push_back(std::move(p));
  }
  return out;
}

AuditReport audit_synthetic_set(const fs::path& dir, const EmbeddingBank* bank) {
  AuditReport report;
  const auto records = read_synthetic_manifest(dir / "manifest.jsonl");
  report.records = records.size();

  std::map<std::string, int> refs;
  for (const auto& r : records) {
    for (const auto* path : {&r.image_path, &r.mask_path}) ++refs[fs::path(*path).lexically_normal().string()];
    if (r.uncertain_path) ++refs[fs::path(*r.uncertain_path).lexically_normal().string()];
  }
  for (const auto& [path, count] : refs) {
    if (count > 1) report.duplicate_refs.push_back(path);
    if (!fs::exists(dir / path)) report.missing_files.push_back(path);
  }
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir).lexically_normal().string();
    if (rel == "manifest.jsonl") continue;
    if (!refs.contains(rel)) report.orphan_files.push_back(rel);
  }

  if (bank != nullptr) {
    for (const auto& r : records) {
      const auto* donor = bank->find(r.donor_patch_id);
      const auto* recipient = bank->find(r.recipient_patch_id);
      if (donor == nullptr || recipient == nullptr) {
        report.sampling_violations.push_back(r.patch_id + ": donor or recipient missing from bank");
        continue;
      }
      if (donor->cluster_id != r.cluster_id) {
        report.sampling_violations.push_back(r.patch_id + ": recorded cluster differs from the donor's");
      }
      if (!r.fallback && donor->cluster_id != recipient->cluster_id) {
        report.sampling_violations.push_back(r.patch_id + ": donor from a different cluster");
      }
      if (donor->source_image_id == recipient->source_image_id && donor->patch_id != recipient->patch_id) {
        report.sampling_violations.push_back(r.patch_id + ": donor from the recipient's own image");
      }
      if (donor->patch_id == recipient->patch_id && !r.fallback) {
        report.sampling_violations.push_back(r.patch_id + ": donor is the recipient");
      }
    }
  }
  return report;
}

}  // namespace pathopaint
