#include <doctest.h>

#include "factsum/claimgen.hpp"
#include "factsum/error.hpp"
#include "factsum/prompts.hpp"
#include "factsum/sha256.hpp"

using namespace factsum;
using namespace factsum::claimgen;

TEST_CASE("prompts: substitution slots and stable hashes") {
    const std::string p = prompts::render_quality_prompt("short summary");
    CHECK(p.find("short summary") != std::string::npos);
    CHECK(p.find("<summary>") == std::string::npos);
    CHECK(p.find("The quality score is <score>.") != std::string::npos);
    const std::string d = prompts::render_double_check_prompt("doc body", "the claim");
    CHECK(d.find("doc body") != std::string::npos);
    CHECK(d.find("the claim") != std::string::npos);
    CHECK(prompts::template_hash(prompts::k_quality) == prompts::template_hash(prompts::k_quality));
    CHECK(prompts::template_hash(prompts::k_quality) != prompts::template_hash(prompts::k_double_check));
}

TEST_CASE("generate_claims: scripted parse contract") {
    DocumentCluster cluster;
    cluster.id = "cluster-9";
    cluster.documents = {"doc"};
    cluster.summary = "the summary";

    std::string ten;
    for (int i = 1; i <= 10; ++i) ten += std::to_string(i) + ". claim number " + std::to_string(i) + "\n";
    auto client = LlmClient::scripted(
        {{sha256_hex(prompts::render_claim_prompt(Label::Entailment, cluster.summary)), ten}});
    const auto records = generate_claims(cluster, Label::Entailment, client);
    REQUIRE(records.size() == 10);
    CHECK(records[0].claim == "claim number 1");
    CHECK(records[9].claim == "claim number 10");
    CHECK(records[3].cluster_id == "cluster-9");
    CHECK(records[3].label == Label::Entailment);

    std::string seven;
    for (int i = 1; i <= 7; ++i) seven += std::to_string(i) + ". item\n";
    auto short_client = LlmClient::scripted({}, seven);
    try {
        generate_claims(cluster, Label::Neutral, short_client);
        FAIL("expected generation error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Generation);
        CHECK(e.detail() == seven); // raw response attached
    }
}

TEST_CASE("generate_claims: all three labels give 30 records over one cluster") {
    const auto world = synth_world(5, 1);
    auto client = LlmClient::scripted(scripted_responses_for(world));
    std::size_t total = 0;
    for (Label label : {Label::Entailment, Label::Neutral, Label::Contradiction})
        total += generate_claims(world.clusters[0], label, client).size();
    CHECK(total == 30);
}

TEST_CASE("verify_label: first label word wins; unparseable responses fail") {
    DocumentCluster cluster;
    cluster.id = "c";
    cluster.documents = {"d1", "d2"};
    cluster.summary = "s";
    ClaimRecord claim;
    claim.id = "c-entailment-0";
    claim.cluster_id = "c";
    claim.claim = "the claim";

    auto respond = [&](const std::string& text) {
        std::string documents = cluster.documents[0] + "\n\n" + cluster.documents[1];
        return LlmClient::scripted(
            {{sha256_hex(prompts::render_double_check_prompt(documents, claim.claim)), text}});
    };
    CHECK(verify_label(claim, cluster, respond("Entailment.")) == Label::Entailment);
    CHECK(verify_label(claim, cluster, respond("The label is contradiction")) == Label::Contradiction);
    CHECK(verify_label(claim, cluster, respond("neutral, because contradiction is wrong")) == Label::Neutral);
    CHECK_THROWS_AS(verify_label(claim, cluster, respond("unsure")), Error);

    ClaimRecord foreign = claim;
    foreign.cluster_id = "other";
    CHECK_THROWS_AS(verify_label(foreign, cluster, respond("neutral")), Error);
}

TEST_CASE("checkworthiness: builtin heuristic rules") {
    CheckworthinessPlugin plugin;
    auto classify = [&](const std::string& text) {
        ClaimRecord rec;
        rec.claim = text;
        return checkworthiness(rec, plugin);
    };
    CHECK(classify("Job growth missed expectations.") == Checkworthiness::CFS);
    CHECK(classify("Nice weather is pleasant.") == Checkworthiness::NFS);
    CHECK(classify("The council funded nice weather programs.") == Checkworthiness::UFS);
    CHECK(classify("Revenue reached 120,000 units.") == Checkworthiness::CFS); // number
    CHECK(classify("so it goes.") == Checkworthiness::NFS);
}

TEST_CASE("synth_world: determinism, counts, oracle agreement") {
    const auto w1 = synth_world(7, 2);
    const auto w2 = synth_world(7, 2);
    REQUIRE(w1.clusters.size() == 2);
    REQUIRE(w1.claims.size() == 60);
    for (std::size_t i = 0; i < w1.claims.size(); ++i) {
        CHECK(w1.claims[i].claim == w2.claims[i].claim);
        CHECK(w1.claims[i].label == w2.claims[i].label);
    }
    for (std::size_t c = 0; c < w1.clusters.size(); ++c) {
        CHECK(w1.clusters[c].summary == w2.clusters[c].summary);
        CHECK(!w1.clusters[c].images.empty());
        int per_label[3] = {0, 0, 0};
        for (const auto& claim : w1.claims)
            if (claim.cluster_id == w1.clusters[c].id) ++per_label[static_cast<int>(claim.label)];
        CHECK(per_label[0] == 10);
        CHECK(per_label[1] == 10);
        CHECK(per_label[2] == 10);
    }

    // Containment oracle: 100% of entailment claims, 0% of contradictions.
    for (const auto& claim : w1.claims) {
        const DocumentCluster* cluster = nullptr;
        for (const auto& cl : w1.clusters)
            if (cl.id == claim.cluster_id) cluster = &cl;
        REQUIRE(cluster != nullptr);
        if (claim.label == Label::Entailment) CHECK(containment_entails(*cluster, claim.claim));
        if (claim.label == Label::Contradiction) CHECK(!containment_entails(*cluster, claim.claim));
    }

    CHECK_THROWS_AS(synth_world(1, 0), Error);
}

TEST_CASE("make_nli_pairs: deterministic, all labels, premises non-empty") {
    const auto a = make_nli_pairs(11, 90);
    const auto b = make_nli_pairs(11, 90);
    REQUIRE(a.size() == 90);
    int counts[3] = {0, 0, 0};
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].premise == b[i].premise);
        CHECK(a[i].hypothesis == b[i].hypothesis);
        CHECK(!a[i].premise.empty());
        ++counts[static_cast<int>(a[i].label)];
    }
    CHECK(counts[0] == 30);
    CHECK(counts[1] == 30);
    CHECK(counts[2] == 30);
}

TEST_CASE("scripted client: byte replay, default fallback, miss is a transport error") {
    auto client = LlmClient::scripted({{sha256_hex("known prompt"), "the exact\tresponse bytes"}});
    CHECK(client.complete("known prompt") == "the exact\tresponse bytes");
    CHECK_THROWS_AS(client.complete("unknown prompt"), Error);
    auto with_default = LlmClient::scripted({}, "fallback");
    CHECK(with_default.complete("anything") == "fallback");
}
