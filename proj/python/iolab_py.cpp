#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>
#include <pybind11/functional.h>

#include "iolab/checkpoint.hpp"
#include "iolab/corpus.hpp"
#include "iolab/decoder.hpp"
#include "iolab/evaluation.hpp"
#include "iolab/harness.hpp"
#include "iolab/oracle.hpp"
#include "iolab/orders.hpp"

namespace py = pybind11;
using namespace iolab;

namespace {

OrderKind order_arg(const std::string& name) {
  const auto kind = parse_order_kind(name);
  if (!kind) throw py::value_error("unknown order kind '" + name + "'; valid kinds: " + order_kind_list());
  return *kind;
}

// Holds the parameters a TransformerScorer points at.
struct Model {
  Checkpoint ckpt;
};

}  // namespace

PYBIND11_MODULE(_iolab, m) {
  m.doc() = "Insertion Transformer with order oracles: canvas algebra, oracle policies, training and decoding.";
  m.attr("__version__") = "0.1.0";
  m.attr("ORDER_KINDS") = [] {
    std::vector<std::string> names;
    for (auto k : kAllOrderKinds) names.emplace_back(to_string(k));
    return names;
  }();
  m.attr("EOS") = special::kEos;

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<CorpusError>(m, "CorpusError", PyExc_ValueError);
  py::register_exception<CanvasError>(m, "CanvasError", PyExc_ValueError);
  py::register_exception<OracleError>(m, "OracleError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);

  py::class_<Vocabulary>(m, "Vocabulary")
      .def(py::init([](const std::vector<std::pair<std::string, std::uint64_t>>& entries) {
             std::vector<Vocabulary::Entry> e;
             for (const auto& [tok, f] : entries) e.push_back({tok, f});
             return Vocabulary(std::move(e));
           }),
           py::arg("entries"))
      .def_static(
          "build",
          [](const std::vector<std::vector<std::string>>& corpus, std::size_t max_size) { return build_vocabulary(corpus, max_size); },
          py::arg("corpus"), py::arg("max_size"))
      .def_static("synthetic", &synthetic_vocabulary, py::arg("vocab_size"))
      .def_static("load", &Vocabulary::load)
      .def("save", &Vocabulary::save)
      .def("__len__", &Vocabulary::size)
      .def("token", &Vocabulary::token)
      .def("id", [](const Vocabulary& v, const std::string& t) { return v.id(t); })
      .def("frequency", &Vocabulary::frequency)
      .def("encode", [](const Vocabulary& v, const std::vector<std::string>& toks) { return v.encode(toks); })
      .def("decode", [](const Vocabulary& v, const TokenSeq& ids) { return v.decode(ids); })
      .def("with_target_frequencies",
           [](const Vocabulary& v, const std::vector<ParallelExample>& data) { return with_target_frequencies(v, data); });

  py::class_<ParallelExample>(m, "ParallelExample")
      .def(py::init<TokenSeq, TokenSeq>(), py::arg("source"), py::arg("target"))
      .def_readwrite("source", &ParallelExample::source)
      .def_readwrite("target", &ParallelExample::target)
      .def("__eq__", [](const ParallelExample& a, const ParallelExample& b) { return a == b; });

  m.def(
      "generate_synthetic",
      [](const std::string& kind, int vocab_size, int min_len, int max_len, std::uint64_t seed, int n) {
        return generate_synthetic({parse_synthetic_kind(kind), vocab_size, min_len, max_len, seed}, n);
      },
      py::arg("kind"), py::arg("vocab_size"), py::arg("min_len"), py::arg("max_len"), py::arg("seed"), py::arg("n"));

  py::class_<InsertionAction>(m, "InsertionAction")
      .def_readonly("content", &InsertionAction::content)
      .def_readonly("location", &InsertionAction::location)
      .def_readonly("target_pos", &InsertionAction::target_pos)
      .def("__repr__", [](const InsertionAction& a) {
        return "InsertionAction(" + std::to_string(a.content) + ", " + std::to_string(a.location) + ")";
      });

  m.def(
      "valid_actions",
      [](const TokenSeq& hyp, const TokenSeq& ref) {
        const auto set = valid_actions(aligned_canvas(hyp, ref));
        std::vector<std::vector<InsertionAction>> out;
        for (int l = 0; l < set.slot_count(); ++l) out.push_back(set.slot(l));
        return out;
      },
      py::arg("hypothesis"), py::arg("reference"), "Per-slot valid actions (hypothesis aligned leftmost).");

  m.def(
      "order_scores",
      [](const std::string& order, const Vocabulary& vocab, const TokenSeq& hyp, const TokenSeq& ref,
         const std::vector<double>& posterior) {
        const auto canvas = aligned_canvas(hyp, ref);
        const auto set = valid_actions(canvas);
        return std::make_pair(set.flat(), score_all({order_arg(order), &vocab}, canvas, set, posterior));
      },
      py::arg("order"), py::arg("vocab"), py::arg("hypothesis"), py::arg("reference"),
      py::arg("posterior") = std::vector<double>{}, "(actions, scores) over the flattened valid-action set.");

  m.def(
      "oracle_policy",
      [](const std::string& order, const Vocabulary& vocab, const TokenSeq& hyp, const TokenSeq& ref, double tau,
         const std::vector<double>& posterior) {
        const auto canvas = aligned_canvas(hyp, ref);
        const auto p = build_policy({order_arg(order), &vocab}, canvas, valid_actions(canvas), tau, posterior);
        std::vector<std::map<TokenId, double>> slots;
        for (const auto& s : p.slots) {
          std::map<TokenId, double> q;
          for (std::size_t k = 0; k < s.contents.size(); ++k) q[s.contents[k]] = std::exp(s.log_probs[k]);
          slots.push_back(std::move(q));
        }
        std::vector<double> location;
        for (double lp : p.location_log_probs) location.push_back(std::exp(lp));
        return std::make_pair(slots, location);
      },
      py::arg("order"), py::arg("vocab"), py::arg("hypothesis"), py::arg("reference"), py::arg("tau"),
      py::arg("posterior") = std::vector<double>{}, "(per-slot content probabilities, location probabilities).");

  m.def(
      "corpus_bleu", [](const std::vector<TokenSeq>& h, const std::vector<TokenSeq>& r, int order) {
        return corpus_bleu(h, r, order).bleu;
      },
      py::arg("hypotheses"), py::arg("references"), py::arg("max_order") = kBleuOrder);
  m.def("sentence_bleu", &sentence_bleu, py::arg("hypothesis"), py::arg("reference"),
        py::arg("max_order") = kBleuOrder);

  py::class_<Model>(m, "Model")
      .def_static("load", [](const std::filesystem::path& p) { return Model{load_checkpoint(p)}; })
      .def("save", [](const Model& mdl, const std::filesystem::path& p) {
        save_checkpoint(p, mdl.ckpt.config, mdl.ckpt.params);
      })
      .def_property_readonly("parameter_count", [](const Model& mdl) { return mdl.ckpt.params.scalar_count(); })
      .def(
          "decode",
          [](const Model& mdl, const TokenSeq& src, const std::string& mode, double gamma) {
            const TransformerScorer scorer(mdl.ckpt.config, mdl.ckpt.params);
            const auto r = decode(scorer, src, DecodeConfig::defaults(parse_decode_mode(mode), src.size(), gamma));
            return std::make_pair(r.output, static_cast<int>(r.trace.steps.size()));
          },
          py::arg("source"), py::arg("mode") = "serial", py::arg("eos_penalty") = 0.0,
          "(output ids, number of decoding steps).")
      .def(
          "trace",
          [](const Model& mdl, const Vocabulary& vocab, const TokenSeq& src, const std::string& mode, double gamma) {
            const TransformerScorer scorer(mdl.ckpt.config, mdl.ckpt.params);
            const auto r = decode(scorer, src, DecodeConfig::defaults(parse_decode_mode(mode), src.size(), gamma));
            return render_trace(r.trace, vocab);
          },
          py::arg("vocab"), py::arg("source"), py::arg("mode") = "serial", py::arg("eos_penalty") = 0.0)
      .def(
          "adherence",
          [](const Model& mdl, const std::string& order, const Vocabulary& vocab,
             const std::vector<ParallelExample>& data, double gamma) {
            const TransformerScorer scorer(mdl.ckpt.config, mdl.ckpt.params);
            return adherence(scorer, {order_arg(order), &vocab}, data, gamma).percentage;
          },
          py::arg("order"), py::arg("vocab"), py::arg("data"), py::arg("eos_penalty") = 0.0);

  m.def(
      "train",
      [](const std::vector<ParallelExample>& data, const Vocabulary& vocab, const py::dict& settings) {
        Settings s;
        for (const auto& [k, v] : settings) s.set(py::str(k), py::str(v));
        auto cfg = TrainConfig::from_settings(s);
        cfg.model.vocab_size = static_cast<int>(vocab.size());
        py::gil_scoped_release release;
        auto result = train(cfg, data, vocab);
        return std::make_pair(Model{{cfg.model, std::move(result.params)}}, result.step_losses);
      },
      py::arg("data"), py::arg("vocab"), py::arg("settings") = py::dict(),
      "Train with config keys as a dict; returns (model, per-step losses).");
}
