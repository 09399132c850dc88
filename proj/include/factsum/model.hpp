#pragma once

#include <memory>

#include "factsum/encoding.hpp"
#include "factsum/fusion.hpp"
#include "factsum/policy.hpp"

namespace factsum {

struct ModelConfig {
    encoding::EncodingConfig enc;
    fusion::FusionConfig fus;
    policy::PolicyConfig pol;
    bool image_resampler = false; // desk-scale patch counts sit below L

    void set_seed(std::uint64_t seed) {
        enc.seed = seed;
        fus.seed = seed;
        pol.seed = seed;
    }
    void set_dim(int d) {
        enc.dim = d;
        fus.dim = d;
        pol.dim = d;
    }
};

// Full parameter-owning model: builtin encoders (frozen), per-modality
// perceiver resamplers, fusion block, seq2seq policy and value-head probe.
// Construction order fixes the checkpoint blob layout.
struct Model {
    ModelConfig cfg;
    ParamSet store;
    std::unique_ptr<encoding::BuiltinEncoders> encoders;
    std::unique_ptr<encoding::PerceiverResampler> doc_resampler;
    std::unique_ptr<encoding::PerceiverResampler> image_resampler;
    std::unique_ptr<fusion::FusionBlock> fusion_block;
    std::unique_ptr<policy::Seq2Seq> policy_net;
    std::unique_ptr<policy::ValueHead> value_head;

    explicit Model(ModelConfig config) : cfg(config) {
        encoders = std::make_unique<encoding::BuiltinEncoders>(store, cfg.enc);
        doc_resampler = std::make_unique<encoding::PerceiverResampler>(store, "encoding.perceiver_doc", cfg.enc);
        if (cfg.image_resampler)
            image_resampler =
                std::make_unique<encoding::PerceiverResampler>(store, "encoding.perceiver_img", cfg.enc);
        fusion_block = std::make_unique<fusion::FusionBlock>(store, cfg.fus);
        policy_net = std::make_unique<policy::Seq2Seq>(store, "policy", cfg.pol);
        value_head = std::make_unique<policy::ValueHead>(store, cfg.pol.dim);
    }

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    std::string policy_hash() const { return store.blob_sha256_prefix("policy."); }
    std::string full_hash() const { return store.blob_sha256(); }
};

} // namespace factsum
