#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "factsum/claimgen.hpp"
#include "factsum/encoding.hpp"
#include "factsum/labels.hpp"
#include "factsum/metrics.hpp"
#include "factsum/reward.hpp"

namespace py = pybind11;
using namespace factsum;

namespace {

std::vector<std::vector<int>> py_chunk_tokens(const std::vector<int>& ids, int chunk_size) {
    encoding::TokenSequence seq;
    seq.ids = ids;
    std::vector<std::vector<int>> out;
    for (auto& chunk : encoding::chunk_tokens(seq, chunk_size)) out.push_back(std::move(chunk.ids));
    return out;
}

Label label_from_string(const std::string& name) {
    const auto l = parse_label(name);
    if (!l) throw Error(ErrorKind::Validation, "unknown label: " + name);
    return *l;
}

} // namespace

PYBIND11_MODULE(_factsum, m) {
    m.doc() = "Claim-conditioned multi-document summarization core";

    m.def("chunk_tokens", &py_chunk_tokens, py::arg("ids"), py::arg("chunk_size"),
          "Split token ids into consecutive chunks; the last chunk may be short.");

    m.def(
        "entailment_reward",
        [](double p_entail, double p_neutral, double p_contra, const std::string& gt) {
            reward::EntailmentDistribution d;
            d.p = {p_entail, p_neutral, p_contra};
            return reward::entailment_reward(d, label_from_string(gt));
        },
        py::arg("p_entailment"), py::arg("p_neutral"), py::arg("p_contradiction"), py::arg("gt_label"),
        "P(gt) - 0.5 * sum of the other label probabilities.");

    m.def(
        "total_reward",
        [](double r_entail, double r_quality, double kl, double eta) {
            const auto b = reward::total_reward(r_entail, r_quality, kl, eta);
            py::dict out;
            out["r_entail"] = b.r_entail;
            out["r_quality"] = b.r_quality;
            out["kl"] = b.kl;
            out["eta"] = b.eta;
            out["r_total"] = b.r_total;
            return out;
        },
        py::arg("r_entail"), py::arg("r_quality"), py::arg("kl"), py::arg("eta") = 0.2);

    m.def("parse_quality_response", &reward::parse_quality_response, py::arg("raw"),
          "First 'The quality score is <number>' occurrence, clamped to [0, 1].");

    m.def(
        "kl_estimate",
        [](const std::vector<double>& logp_active, const std::vector<double>& logp_ref) {
            policy::SummarySample s;
            s.ids.assign(logp_active.size(), 0);
            s.logp_active = logp_active;
            s.logp_ref = logp_ref;
            return reward::kl_estimate(s);
        },
        py::arg("logp_active"), py::arg("logp_ref"));

    m.def(
        "rouge_n",
        [](const std::string& cand, const std::string& ref, int n) {
            const auto s = harness::rouge_n(cand, ref, n);
            return py::make_tuple(s.precision, s.recall, s.f1);
        },
        py::arg("candidate"), py::arg("reference"), py::arg("n") = 1,
        "Returns (precision, recall, f1).");

    m.def(
        "rouge_l",
        [](const std::string& cand, const std::string& ref) {
            const auto s = harness::rouge_l(cand, ref);
            return py::make_tuple(s.precision, s.recall, s.f1);
        },
        py::arg("candidate"), py::arg("reference"));

    m.def(
        "bleu",
        [](const std::string& cand, const std::vector<std::string>& refs, int max_n) {
            return harness::bleu(cand, refs, max_n);
        },
        py::arg("candidate"), py::arg("references"), py::arg("max_n") = 4);

    m.def(
        "synth_world_summary",
        [](std::uint64_t seed, int clusters) {
            const auto world = claimgen::synth_world(seed, clusters);
            py::list claim_list;
            for (const auto& c : world.claims) {
                py::dict d;
                d["id"] = c.id;
                d["cluster_id"] = c.cluster_id;
                d["claim"] = c.claim;
                d["label"] = label_name(c.label);
                d["checkworthiness"] = claimgen::checkworthiness_name(c.checkworthiness);
                claim_list.append(std::move(d));
            }
            py::dict out;
            out["clusters"] = static_cast<int>(world.clusters.size());
            out["claims"] = std::move(claim_list);
            return out;
        },
        py::arg("seed"), py::arg("clusters"),
        "Deterministic synthetic fact world: 30 claims per cluster, 10 per label.");

    m.attr("__version__") = "0.1.0";
}
