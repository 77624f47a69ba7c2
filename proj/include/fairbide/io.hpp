#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairbide/bvgae.hpp"
#include "fairbide/evalmetrics.hpp"
#include "fairbide/matrix.hpp"

namespace fairbide::io {

// Minimal CSV handling: comma-separated, no quoting (identifiers in this
// pipeline never contain commas), tolerant of trailing CR.
std::vector<std::vector<std::string>> read_csv(const std::string& path);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

Matrix read_matrix_csv(const std::string& path);
void write_matrix_csv(const std::string& path, const Matrix& m);

// Interaction ingestion. One row per observed (session, insect) pair with
// the exact header
//   session_id,insect_taxon,plant_genus,user_id,prior_session_count,temperature,date
// Sessions keep file order; insect taxa and plant genera are sorted.
struct IngestResult {
  bvgae::BipartiteGraph graph;  // x1 = [P, std temperature] or P
  bvgae::PlantAssignment plants;
  Matrix s;  // standardized log10(prior_session_count + 1)
  std::vector<std::string> session_ids;
  std::vector<std::string> insect_taxa;
  std::vector<std::string> plant_genera;
  std::vector<std::int64_t> prior_counts;
  bool has_temperature = false;
};

IngestResult ingest(const std::string& path);

// Versioned key -> matrix archive for trained encoder weights.
inline constexpr const char* kCheckpointMagic = "FAIRBIDE-CKPT-v1";

struct Checkpoint {
  bvgae::EncoderParams params;
  bvgae::LatentSignature signature;
  std::string config_hash;
};

void write_checkpoint(const std::string& path, const bvgae::EncoderParams& params,
                      const bvgae::LatentSignature& signature,
                      const std::string& config_hash);
Checkpoint read_checkpoint(const std::string& path);

// FNV-1a content hashes for the run manifest.
std::string content_hash_hex(const void* data, std::size_t size);
std::string file_hash_hex(const std::string& path);

// Report serialization with the fixed key roster.
void write_summary_json(const std::string& path, const eval::ExperimentReport& report);
void write_trials_csv(const std::string& path, const eval::ExperimentReport& report);

}  // namespace fairbide::io
