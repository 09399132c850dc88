#include "factsum/encoding.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "factsum/error.hpp"
#include "factsum/transport.hpp"

namespace factsum::encoding {

std::vector<TokenSequence> chunk_tokens(const TokenSequence& tokens, int chunk_size) {
    if (chunk_size < 1) throw Error(ErrorKind::Validation, "chunk_size must be >= 1");
    std::vector<TokenSequence> out;
    const int n = tokens.length();
    for (int start = 0; start < n; start += chunk_size) {
        const int end = std::min(n, start + chunk_size);
        TokenSequence c;
        c.ids.assign(tokens.ids.begin() + start, tokens.ids.begin() + end);
        out.push_back(std::move(c));
    }
    return out;
}

ImageRecord parse_image_record(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("patches") || !j["patches"].is_array())
        throw Error(ErrorKind::Format, "unparseable image record", "patches");
    const auto& patches = j["patches"];
    if (patches.empty()) throw Error(ErrorKind::Format, "image record has no patches", "patches");
    ImageRecord rec;
    const int k = static_cast<int>(patches.size());
    int dim = -1;
    for (int r = 0; r < k; ++r) {
        if (!patches[r].is_array()) throw Error(ErrorKind::Format, "image patch is not an array", "patches");
        if (dim < 0) {
            dim = static_cast<int>(patches[r].size());
            if (dim == 0) throw Error(ErrorKind::Format, "image patch is empty", "patches");
            rec.patches = Mat(k, dim);
        }
        if (static_cast<int>(patches[r].size()) != dim)
            throw Error(ErrorKind::Format, "ragged image patches", "patches");
        for (int c = 0; c < dim; ++c) {
            if (!patches[r][c].is_number()) throw Error(ErrorKind::Format, "non-numeric patch value", "patches");
            rec.patches.at(r, c) = patches[r][c].get<double>();
        }
    }
    return rec;
}

std::string image_record_to_json(const ImageRecord& rec) {
    nlohmann::json patches = nlohmann::json::array();
    for (int r = 0; r < rec.patches.rows; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < rec.patches.cols; ++c) row.push_back(rec.patches.at(r, c));
        patches.push_back(std::move(row));
    }
    nlohmann::json j;
    j["format_version"] = 1;
    j["patches"] = std::move(patches);
    return j.dump();
}

BuiltinEncoders::BuiltinEncoders(ParamSet& store, const EncodingConfig& cfg) : store_(&store), cfg_(cfg) {
    if (cfg.vocab_size < 1) throw Error(ErrorKind::Config, "encoding vocab_size must be set before building encoders");
    Rng rng = Rng(cfg.seed).fork(0x10c0de);
    text_table_ = store.add("encoding.text_embed", init_uniform(rng, cfg.vocab_size, cfg.dim, 0.5),
                            /*trainable=*/false);
    image_proj_ = store.add("encoding.image_proj", init_xavier(rng, cfg.patch_dim, cfg.dim),
                            /*trainable=*/false);
}

Mat BuiltinEncoders::text(const TokenSequence& tokens) const {
    if (tokens.length() == 0) throw Error(ErrorKind::Validation, "encode_text requires non-empty tokens");
    const Mat& table = store_->at(text_table_).value;
    Mat out(tokens.length(), cfg_.dim);
    for (int r = 0; r < tokens.length(); ++r) {
        const int id = tokens.ids[r];
        if (id < 0 || id >= table.rows)
            throw Error(ErrorKind::Validation, "token id out of vocabulary: " + std::to_string(id));
        for (int c = 0; c < cfg_.dim; ++c) out.at(r, c) = table.at(id, c);
    }
    return out;
}

Mat BuiltinEncoders::image(const ImageRecord& rec) const {
    if (rec.patches.cols != cfg_.patch_dim)
        throw Error(ErrorKind::Config, "image patch dim mismatch: expected " + std::to_string(cfg_.patch_dim) +
                                           ", got " + std::to_string(rec.patches.cols));
    return matmul(rec.patches, store_->at(image_proj_).value);
}

namespace {

Mat call_external_encoder(const EncoderPlugin& plugin, const nlohmann::json& payload, int expected_dim) {
    const std::string response =
        transport::call_endpoint(plugin.endpoint, payload.dump(), plugin.timeout_secs);
    nlohmann::json j = nlohmann::json::parse(response, nullptr, false);
    if (j.is_discarded() || !j.contains("rows") || !j.contains("dim") || !j.contains("values"))
        throw Error(ErrorKind::Parse, "malformed encoder plugin response", response);
    const int rows = j["rows"].get<int>();
    const int dim = j["dim"].get<int>();
    if (dim != expected_dim)
        throw Error(ErrorKind::Config, "encoder plugin dim mismatch: expected " + std::to_string(expected_dim) +
                                           ", got " + std::to_string(dim));
    const auto& values = j["values"];
    if (!values.is_array() || static_cast<int>(values.size()) != rows * dim)
        throw Error(ErrorKind::Parse, "encoder plugin values length mismatch", response);
    Mat out(rows, dim);
    for (std::size_t i = 0; i < values.size(); ++i) out.v[i] = values[i].get<double>();
    if (!out.all_finite()) throw Error(ErrorKind::Parse, "encoder plugin returned non-finite values", response);
    return out;
}

} // namespace

Mat encode_text(const TokenSequence& tokens, const EncoderPlugin& plugin, const BuiltinEncoders& builtin) {
    if (plugin.kind == EncoderPlugin::Kind::BuiltinLearned) return builtin.text(tokens);
    nlohmann::json req;
    req["modality"] = "text";
    req["payload"] = {{"ids", tokens.ids}};
    return call_external_encoder(plugin, req, builtin.config().dim);
}

Mat encode_image(const ImageRecord& rec, const EncoderPlugin& plugin, const BuiltinEncoders& builtin) {
    if (plugin.kind == EncoderPlugin::Kind::BuiltinLearned) return builtin.image(rec);
    nlohmann::json patches = nlohmann::json::array();
    for (int r = 0; r < rec.patches.rows; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < rec.patches.cols; ++c) row.push_back(rec.patches.at(r, c));
        patches.push_back(std::move(row));
    }
    nlohmann::json req;
    req["modality"] = "image";
    req["payload"] = {{"patches", std::move(patches)}};
    return call_external_encoder(plugin, req, builtin.config().dim);
}

PerceiverResampler::PerceiverResampler(ParamSet& store, std::string prefix, const EncodingConfig& cfg)
    : store_(&store), cfg_(cfg) {
    Rng rng = Rng(cfg.seed).fork(std::hash<std::string>{}(prefix));
    const int d = cfg.dim;
    latents_ = store.add(prefix + ".latents", init_uniform(rng, cfg.latent_count, d, 0.5));
    cross_wq_ = store.add(prefix + ".cross.wq", init_xavier(rng, d, d));
    cross_wk_ = store.add(prefix + ".cross.wk", init_xavier(rng, d, d));
    cross_wv_ = store.add(prefix + ".cross.wv", init_xavier(rng, d, d));
    self_wq_ = store.add(prefix + ".self.wq", init_xavier(rng, d, d));
    self_wk_ = store.add(prefix + ".self.wk", init_xavier(rng, d, d));
    self_wv_ = store.add(prefix + ".self.wv", init_xavier(rng, d, d));
    self_wo_ = store.add(prefix + ".self.wo", init_xavier(rng, d, d));
}

NodeId concat_chunks(Tape& t, const std::vector<NodeId>& chunks, int dim) {
    if (chunks.empty()) throw Error(ErrorKind::Validation, "merge_chunks requires at least one chunk");
    NodeId x = chunks[0];
    if (t.val(x).cols != dim) throw Error(ErrorKind::Config, "chunk dim mismatch");
    for (std::size_t i = 1; i < chunks.size(); ++i) {
        if (t.val(chunks[i]).cols != dim) throw Error(ErrorKind::Config, "chunk dim mismatch");
        x = t.concat_rows(x, chunks[i]);
    }
    return x;
}

NodeId PerceiverResampler::merge(Tape& t, const std::vector<NodeId>& chunks, Mat* cross_attn) const {
    const int d = cfg_.dim;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    const NodeId x = concat_chunks(t, chunks, d);

    const NodeId latents = t.param(*store_, latents_);
    const NodeId q = t.matmul(latents, t.param(*store_, cross_wq_));
    const NodeId k = t.matmul(x, t.param(*store_, cross_wk_));
    const NodeId v = t.matmul(x, t.param(*store_, cross_wv_));
    const NodeId scores = t.scale(t.matmul_nt(q, k), inv_sqrt_d);
    const NodeId attn = t.softmax_rows(scores);
    if (cross_attn) *cross_attn = t.val(attn);
    NodeId h = t.matmul(attn, v);

    if (cfg_.latent_self_attention) {
        const NodeId q2 = t.matmul(h, t.param(*store_, self_wq_));
        const NodeId k2 = t.matmul(h, t.param(*store_, self_wk_));
        const NodeId v2 = t.matmul(h, t.param(*store_, self_wv_));
        const NodeId attn2 = t.softmax_rows(t.scale(t.matmul_nt(q2, k2), inv_sqrt_d));
        const NodeId mixed = t.matmul(t.matmul(attn2, v2), t.param(*store_, self_wo_));
        h = t.add(h, mixed);
    }
    return h;
}

Mat PerceiverResampler::merge_values(const std::vector<Mat>& chunks, Mat* cross_attn) const {
    Tape t;
    std::vector<NodeId> nodes;
    nodes.reserve(chunks.size());
    for (const auto& c : chunks) nodes.push_back(t.constant(c));
    return t.val(merge(t, nodes, cross_attn));
}

} // namespace factsum::encoding
