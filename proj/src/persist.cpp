#include "factsum/persist.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "factsum/error.hpp"
#include "factsum/prompts.hpp"
#include "factsum/sha256.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace factsum::harness {

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Validation, "cannot write file: " + path);
    out << content;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Validation, "cannot read file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string claims_to_jsonl(const std::vector<claimgen::ClaimRecord>& claims) {
    std::string out;
    for (const auto& c : claims) {
        json j;
        j["id"] = c.id;
        j["cluster_id"] = c.cluster_id;
        j["claim"] = c.claim;
        j["label"] = label_name(c.label);
        j["checkworthiness"] = claimgen::checkworthiness_name(c.checkworthiness);
        j["verified_label"] = c.verified_label ? json(label_name(*c.verified_label)) : json(nullptr);
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<claimgen::ClaimRecord> claims_from_jsonl(const std::string& text) {
    std::vector<claimgen::ClaimRecord> out;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw Error(ErrorKind::Format, "corrupted claims.jsonl at line " + std::to_string(line_no), line);
        claimgen::ClaimRecord rec;
        try {
            rec.id = j.at("id").get<std::string>();
            rec.cluster_id = j.at("cluster_id").get<std::string>();
            rec.claim = j.at("claim").get<std::string>();
            const auto label = parse_label(j.at("label").get<std::string>());
            if (!label) throw Error(ErrorKind::Format, "bad label", "label");
            rec.label = *label;
            const auto cw = claimgen::parse_checkworthiness(j.at("checkworthiness").get<std::string>());
            if (!cw) throw Error(ErrorKind::Format, "bad checkworthiness", "checkworthiness");
            rec.checkworthiness = *cw;
            if (!j.at("verified_label").is_null()) {
                const auto v = parse_label(j.at("verified_label").get<std::string>());
                if (!v) throw Error(ErrorKind::Format, "bad verified_label", "verified_label");
                rec.verified_label = v;
            }
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Format, "claims.jsonl record missing field at line " + std::to_string(line_no),
                        e.what());
        }
        out.push_back(std::move(rec));
    }
    return out;
}

void save_corpus(const std::string& dir, const Corpus& corpus) {
    fs::create_directories(dir);
    const std::string jsonl = claims_to_jsonl(corpus.claims);
    write_text_file(dir + "/claims.jsonl", jsonl);
    write_text_file(dir + "/vocab.json", corpus.tokenizer.to_json());

    for (const auto& cluster : corpus.clusters) {
        const std::string cdir = dir + "/clusters/" + cluster.id;
        fs::create_directories(cdir);
        for (std::size_t i = 0; i < cluster.documents.size(); ++i)
            write_text_file(cdir + "/doc_" + std::to_string(i) + ".txt", cluster.documents[i]);
        for (std::size_t i = 0; i < cluster.images.size(); ++i)
            write_text_file(cdir + "/img_" + std::to_string(i) + ".json",
                            encoding::image_record_to_json(cluster.images[i]));
        write_text_file(cdir + "/summary.txt", cluster.summary);
    }

    json manifest;
    manifest["format_version"] = 1;
    manifest["seed"] = corpus.seed;
    manifest["counts"] = {{"clusters", corpus.clusters.size()}, {"claims", corpus.claims.size()}};
    manifest["corpus_sha256"] = sha256_hex(jsonl);
    manifest["prompt_template_hashes"] = {
        {"claim_entailment", prompts::template_hash(prompts::k_claim_entailment)},
        {"claim_neutral", prompts::template_hash(prompts::k_claim_neutral)},
        {"claim_contradiction", prompts::template_hash(prompts::k_claim_contradiction)},
        {"double_check", prompts::template_hash(prompts::k_double_check)},
        {"quality", prompts::template_hash(prompts::k_quality)},
    };
    write_text_file(dir + "/manifest.json", manifest.dump(2));
}

Corpus load_corpus(const std::string& dir) {
    Corpus corpus;
    const std::string jsonl = read_text_file(dir + "/claims.jsonl");
    corpus.claims = claims_from_jsonl(jsonl);
    corpus.corpus_sha256 = sha256_hex(jsonl);
    corpus.tokenizer = policy::Tokenizer::from_json(read_text_file(dir + "/vocab.json"));

    json manifest = json::parse(read_text_file(dir + "/manifest.json"), nullptr, false);
    if (manifest.is_discarded() || !manifest.contains("format_version"))
        throw Error(ErrorKind::Format, "corrupted corpus manifest", "format_version");
    if (manifest["format_version"].get<int>() != 1)
        throw Error(ErrorKind::Format,
                    "corpus manifest format_version " + manifest["format_version"].dump() +
                        " needs explicit migration; this build reads version 1",
                    "format_version");
    if (!manifest.contains("seed") || !manifest["seed"].is_number())
        throw Error(ErrorKind::Format, "corpus manifest missing field: seed", "seed");
    corpus.seed = manifest["seed"].get<std::uint64_t>();
    if (manifest.contains("corpus_sha256") &&
        manifest["corpus_sha256"].get<std::string>() != corpus.corpus_sha256)
        throw Error(ErrorKind::Format, "corpus hash mismatch against manifest", "corpus_sha256");

    std::vector<std::string> cluster_ids;
    for (const auto& claim : corpus.claims)
        if (std::find(cluster_ids.begin(), cluster_ids.end(), claim.cluster_id) == cluster_ids.end())
            cluster_ids.push_back(claim.cluster_id);
    for (const auto& id : cluster_ids) {
        const std::string cdir = dir + "/clusters/" + id;
        claimgen::DocumentCluster cluster;
        cluster.id = id;
        for (int i = 0; fs::exists(cdir + "/doc_" + std::to_string(i) + ".txt"); ++i)
            cluster.documents.push_back(read_text_file(cdir + "/doc_" + std::to_string(i) + ".txt"));
        for (int i = 0; fs::exists(cdir + "/img_" + std::to_string(i) + ".json"); ++i)
            cluster.images.push_back(
                encoding::parse_image_record(read_text_file(cdir + "/img_" + std::to_string(i) + ".json")));
        cluster.summary = read_text_file(cdir + "/summary.txt");
        if (cluster.documents.empty())
            throw Error(ErrorKind::Format, "cluster " + id + " has no documents", id);
        corpus.clusters.push_back(std::move(cluster));
    }
    return corpus;
}

bool checkpoint_exists(const std::string& dir) { return fs::exists(dir + "/manifest.json") && fs::exists(dir + "/params.bin"); }

void save_checkpoint(const std::string& dir, const ParamSet& params, const CheckpointManifest& manifest) {
    fs::create_directories(dir);
    json m;
    m["format_version"] = manifest.format_version;
    m["stage"] = manifest.stage;
    m["step"] = manifest.step;
    m["seed"] = manifest.seed;
    m["config_hash"] = manifest.config_hash;
    write_text_file(dir + "/manifest.json", m.dump(2));

    json index;
    index["format_version"] = 1;
    index["tensors"] = json::array();
    std::size_t offset = 0;
    params.for_each([&](const Param& p) {
        index["tensors"].push_back({{"name", p.name},
                                    {"rows", p.value.rows},
                                    {"cols", p.value.cols},
                                    {"offset", offset},
                                    {"trainable", p.trainable}});
        offset += p.value.size() * 4;
    });
    write_text_file(dir + "/index.json", index.dump(2));

    const auto blob = params.to_blob();
    std::ofstream bin(dir + "/params.bin", std::ios::binary);
    if (!bin) throw Error(ErrorKind::Validation, "cannot write checkpoint blob");
    bin.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
}

CheckpointManifest load_checkpoint(const std::string& dir, ParamSet& params) {
    json m = json::parse(read_text_file(dir + "/manifest.json"), nullptr, false);
    if (m.is_discarded() || !m.contains("format_version"))
        throw Error(ErrorKind::Format, "corrupted checkpoint manifest", "format_version");
    if (m["format_version"].get<int>() != 1)
        throw Error(ErrorKind::Format,
                    "checkpoint format_version " + m["format_version"].dump() +
                        " needs explicit migration; this build reads version 1",
                    "format_version");
    CheckpointManifest manifest;
    manifest.format_version = 1;
    try {
        manifest.stage = m.at("stage").get<std::string>();
        manifest.step = m.at("step").get<std::int64_t>();
        manifest.seed = m.at("seed").get<std::uint64_t>();
        manifest.config_hash = m.at("config_hash").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, "checkpoint manifest missing field", e.what());
    }

    json index = json::parse(read_text_file(dir + "/index.json"), nullptr, false);
    if (index.is_discarded() || !index.contains("tensors"))
        throw Error(ErrorKind::Format, "corrupted checkpoint index", "tensors");
    const auto& tensors = index["tensors"];
    std::size_t i = 0;
    bool mismatch = tensors.size() != params.count();
    params.for_each([&](const Param& p) {
        if (mismatch || i >= tensors.size()) return;
        const auto& t = tensors[i];
        if (t.at("name").get<std::string>() != p.name || t.at("rows").get<int>() != p.value.rows ||
            t.at("cols").get<int>() != p.value.cols)
            mismatch = true;
        ++i;
    });
    if (mismatch)
        throw Error(ErrorKind::Format, "checkpoint index does not match the configured model",
                    "tensors");

    const std::string raw = read_text_file(dir + "/params.bin");
    std::vector<std::uint8_t> blob(raw.begin(), raw.end());
    params.from_blob(blob);
    return manifest;
}

namespace {

json step_to_json(const ppo::StepMetric& s) {
    json j;
    j["step"] = s.step;
    j["sft_loss"] = s.sft_loss;
    j["mean_reward"] = s.stats.mean_reward;
    j["mean_kl"] = s.stats.mean_kl;
    j["mean_entail"] = s.stats.mean_entail;
    j["policy_loss"] = s.stats.policy_loss;
    j["value_loss"] = s.stats.value_loss;
    j["entropy"] = s.stats.entropy;
    j["mean_return"] = s.stats.mean_return;
    j["failed_episodes"] = s.failed;
    return j;
}

ppo::StepMetric step_from_json(const json& j) {
    ppo::StepMetric s;
    s.step = j.at("step").get<std::int64_t>();
    s.sft_loss = j.at("sft_loss").get<double>();
    s.stats.mean_reward = j.at("mean_reward").get<double>();
    s.stats.mean_kl = j.at("mean_kl").get<double>();
    s.stats.mean_entail = j.at("mean_entail").get<double>();
    s.stats.policy_loss = j.at("policy_loss").get<double>();
    s.stats.value_loss = j.at("value_loss").get<double>();
    s.stats.entropy = j.at("entropy").get<double>();
    s.stats.mean_return = j.at("mean_return").get<double>();
    s.failed = j.at("failed_episodes").get<int>();
    return s;
}

json manifest_core_json(const RunManifest& m) {
    json j;
    j["format_version"] = m.format_version;
    j["stage"] = m.stage;
    j["seed"] = m.seed;
    j["config_hash"] = m.config_hash;
    j["steps"] = json::array();
    for (const auto& s : m.steps) j["steps"].push_back(step_to_json(s));
    j["policy_hash_before"] = m.policy_hash_before;
    j["policy_hash_after"] = m.policy_hash_after;
    j["ref_hash_before"] = m.ref_hash_before;
    j["ref_hash_after"] = m.ref_hash_after;
    return j;
}

} // namespace

std::string RunManifest::fingerprint() const { return sha256_hex(manifest_core_json(*this).dump()); }

std::string RunManifest::to_json() const {
    json j = manifest_core_json(*this);
    j["wall_time_secs"] = wall_time_secs;
    j["fingerprint"] = fingerprint();
    return j.dump(2);
}

RunManifest RunManifest::from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.contains("format_version"))
        throw Error(ErrorKind::Format, "corrupted run manifest", "format_version");
    if (j["format_version"].get<int>() != 1)
        throw Error(ErrorKind::Format, "run manifest needs migration; this build reads version 1",
                    "format_version");
    RunManifest m;
    try {
        m.stage = j.at("stage").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.config_hash = j.at("config_hash").get<std::string>();
        for (const auto& s : j.at("steps")) m.steps.push_back(step_from_json(s));
        m.wall_time_secs = j.at("wall_time_secs").get<double>();
        m.policy_hash_before = j.at("policy_hash_before").get<std::string>();
        m.policy_hash_after = j.at("policy_hash_after").get<std::string>();
        m.ref_hash_before = j.at("ref_hash_before").get<std::string>();
        m.ref_hash_after = j.at("ref_hash_after").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, "run manifest missing field", e.what());
    }
    return m;
}

void save_run_manifest(const std::string& path, const RunManifest& manifest) {
    write_text_file(path, manifest.to_json());
}

RunManifest load_run_manifest(const std::string& path) {
    return RunManifest::from_json(read_text_file(path));
}

std::string merged_report_json(const std::vector<RunManifest>& manifests) {
    std::vector<std::pair<std::string, ppo::StepMetric>> rows;
    for (const auto& m : manifests)
        for (const auto& s : m.steps) rows.emplace_back(m.stage, s);
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.second.step < b.second.step; });
    json j;
    j["format_version"] = 1;
    j["series"] = json::array();
    for (const auto& [stage, s] : rows) {
        json row = step_to_json(s);
        row["stage"] = stage;
        j["series"].push_back(std::move(row));
    }
    return j.dump(2);
}

} // namespace factsum::harness
