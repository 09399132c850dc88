#pragma once

#include <string>
#include <vector>

#include "factsum/mat.hpp"
#include "factsum/params.hpp"
#include "factsum/rng.hpp"
#include "factsum/tape.hpp"

namespace factsum::encoding {

struct TokenSequence {
    std::vector<int> ids;

    int length() const { return static_cast<int>(ids.size()); }
};

// Splits into consecutive chunks of `chunk_size`; the last chunk may be
// shorter. Concatenation of the output equals the input.
std::vector<TokenSequence> chunk_tokens(const TokenSequence& tokens, int chunk_size);

// Desk-scale image record: a stack of patch feature vectors, stored as a
// structured JSON file ({"format_version":1,"patches":[[...],...]}).
struct ImageRecord {
    Mat patches; // k x patch_dim
};

ImageRecord parse_image_record(const std::string& json_text);
std::string image_record_to_json(const ImageRecord& rec);

struct EncodingConfig {
    int dim = 64;          // D, shared width across modalities
    int latent_count = 64; // L
    int chunk_size = 1024;
    int vocab_size = 0; // set from the persisted tokenizer
    int patch_dim = 8;
    bool latent_self_attention = true;
    std::uint64_t seed = 0;
};

// Pluggable encoder descriptor. Builtin encoders are learned-at-init frozen
// tables; external encoders speak the line-delimited {modality,payload} ->
// {rows,dim,values} protocol over a child process or HTTP.
struct EncoderPlugin {
    enum class Kind { BuiltinLearned, External };
    Kind kind = Kind::BuiltinLearned;
    std::string endpoint;      // "http://host:port" or "proc:<command line>"
    double timeout_secs = 30.0; // FACTSUM_TIMEOUT_SECS overrides
};

// Frozen builtin encoders: an embedding lookup table for text and a linear
// patch projection for images. Registered as non-trainable parameters so
// checkpoints capture them; they stand in for fixed pretrained encoders.
class BuiltinEncoders {
public:
    BuiltinEncoders(ParamSet& store, const EncodingConfig& cfg);

    Mat text(const TokenSequence& tokens) const;
    Mat image(const ImageRecord& rec) const;

    const EncodingConfig& config() const { return cfg_; }

private:
    ParamSet* store_;
    ParamId text_table_;
    ParamId image_proj_;
    EncodingConfig cfg_;
};

Mat encode_text(const TokenSequence& tokens, const EncoderPlugin& plugin, const BuiltinEncoders& builtin);
Mat encode_image(const ImageRecord& rec, const EncoderPlugin& plugin, const BuiltinEncoders& builtin);

// Perceiver-style resampler: a fixed set of learned latents cross-attends
// over the concatenation of all chunk rows, optionally followed by one latent
// self-attention layer. Output is always latent_count x dim.
class PerceiverResampler {
public:
    PerceiverResampler(ParamSet& store, std::string prefix, const EncodingConfig& cfg);

    // Differentiable merge. `cross_attn` (optional) receives the cross-stage
    // attention weight rows (L x total_input_rows).
    NodeId merge(Tape& t, const std::vector<NodeId>& chunks, Mat* cross_attn = nullptr) const;

    // Convenience wrapper over plain values.
    Mat merge_values(const std::vector<Mat>& chunks, Mat* cross_attn = nullptr) const;

    ParamId latents_id() const { return latents_; }

private:
    ParamSet* store_;
    EncodingConfig cfg_;
    ParamId latents_;
    ParamId cross_wq_, cross_wk_, cross_wv_;
    ParamId self_wq_, self_wk_, self_wv_, self_wo_;
};

// Seam used by merge wrappers: validates chunk dims and concatenates rows.
NodeId concat_chunks(Tape& t, const std::vector<NodeId>& chunks, int dim);

} // namespace factsum::encoding
