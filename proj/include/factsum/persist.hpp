#pragma once

#include <string>
#include <vector>

#include "factsum/claimgen.hpp"
#include "factsum/params.hpp"
#include "factsum/ppo.hpp"
#include "factsum/tokenizer.hpp"

namespace factsum::harness {

// On-disk corpus: claims.jsonl + manifest.json + vocab.json + a sidecar
// clusters/ directory of document text and image-feature files.
struct Corpus {
    std::vector<claimgen::DocumentCluster> clusters;
    std::vector<claimgen::ClaimRecord> claims;
    policy::Tokenizer tokenizer;
    std::uint64_t seed = 0;
    std::string corpus_sha256; // hash of claims.jsonl bytes
};

std::string claims_to_jsonl(const std::vector<claimgen::ClaimRecord>& claims);
std::vector<claimgen::ClaimRecord> claims_from_jsonl(const std::string& text);

void save_corpus(const std::string& dir, const Corpus& corpus);
Corpus load_corpus(const std::string& dir);

struct CheckpointManifest {
    int format_version = 1;
    std::string stage = "sft";
    std::int64_t step = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
};

// Checkpoint directory: manifest.json + index.json (tensor names/shapes) +
// params.bin (little-endian float32, insertion order).
void save_checkpoint(const std::string& dir, const ParamSet& params, const CheckpointManifest& manifest);
CheckpointManifest load_checkpoint(const std::string& dir, ParamSet& params);
bool checkpoint_exists(const std::string& dir);

// Per-stage run manifest. wall_time_secs is the one self-declared volatile
// field; fingerprint() hashes everything else for determinism checks.
struct RunManifest {
    int format_version = 1;
    std::string stage;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<ppo::StepMetric> steps;
    double wall_time_secs = 0.0;
    std::string policy_hash_before, policy_hash_after;
    std::string ref_hash_before, ref_hash_after;

    std::string to_json() const;
    static RunManifest from_json(const std::string& text);
    std::string fingerprint() const;
};

void save_run_manifest(const std::string& path, const RunManifest& manifest);
RunManifest load_run_manifest(const std::string& path);

// `report` subcommand payload: manifests merged into one monotone per-step
// series (plot-ready).
std::string merged_report_json(const std::vector<RunManifest>& manifests);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

} // namespace factsum::harness
