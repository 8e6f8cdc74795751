#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dsel/clustering.hpp"
#include "dsel/data_model.hpp"
#include "dsel/discovery.hpp"
#include "dsel/evaluation.hpp"
#include "dsel/selection.hpp"
#include "dsel/synthbench.hpp"
#include "dsel/transport.hpp"

namespace py = pybind11;
using namespace dsel;

namespace {

WeightAssignment to_weights(const std::map<int, double>& w) {
  WeightAssignment out;
  out.category_weights = w;
  out.validate();
  return out;
}

py::dict selection_dict(const SelectionResult& r) {
  py::dict d;
  d["method"] = r.diagnostics.method;
  d["weights"] = r.weights.category_weights;
  d["scores"] = r.diagnostics.scores;
  d["threshold"] = r.diagnostics.threshold;
  d["discarded"] = r.diagnostics.discarded;
  return d;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["acc_all"] = r.acc_all;
  d["acc_old"] = r.acc_old;
  d["acc_new"] = r.acc_new;
  d["permutation"] = r.matching.permutation;
  d["misclassified_as_new"] = r.errors.misclassified_as_new;
  d["misclassified_as_old"] = r.errors.misclassified_as_old;
  d["n_all"] = r.n_all;
  d["n_old"] = r.n_old;
  d["n_new"] = r.n_new;
  return d;
}

EmbeddingFormat format_arg(const std::filesystem::path& path, const std::optional<std::string>& fmt) {
  if (!fmt) return format_from_path(path);
  if (*fmt == "binary") return EmbeddingFormat::kBinary;
  if (*fmt == "csv") return EmbeddingFormat::kCsv;
  throw Error(ErrorCode::kInvalidArgument, "format must be 'binary' or 'csv'");
}

}  // namespace

PYBIND11_MODULE(_dsel, m) {
  m.doc() = "Labeled-data selection and category discovery on frozen embeddings";
  py::register_exception<Error>(m, "DselError", PyExc_ValueError);
  set_warnings_enabled(false);
  m.def("set_warnings_enabled", &set_warnings_enabled);

  py::class_<EmbeddingSet>(m, "EmbeddingSet")
      .def(py::init([](const Matrix& features, std::optional<std::vector<int>> labels) {
             return EmbeddingSet::create(features, std::move(labels));
           }),
           py::arg("features"), py::arg("labels") = py::none())
      .def_property_readonly("features", &EmbeddingSet::features)
      .def_property_readonly("labels",
                             [](const EmbeddingSet& s) -> std::optional<std::vector<int>> {
                               if (!s.has_labels()) return std::nullopt;
                               return s.labels();
                             })
      .def_property_readonly("n_categories", &EmbeddingSet::n_categories)
      .def_property_readonly("source_tags", &EmbeddingSet::source_tags)
      .def_property_readonly("dim", &EmbeddingSet::dim)
      .def("__len__", &EmbeddingSet::size)
      .def("without_labels", &EmbeddingSet::without_labels);

  m.def("load_embeddings",
        [](const std::filesystem::path& p, std::optional<std::string> fmt) { return load_embeddings(p, format_arg(p, fmt)); },
        py::arg("path"), py::arg("format") = py::none());
  m.def("save_embeddings",
        [](const EmbeddingSet& s, const std::filesystem::path& p, std::optional<std::string> fmt) {
          save_embeddings(s, p, format_arg(p, fmt));
        },
        py::arg("set"), py::arg("path"), py::arg("format") = py::none());
  m.def("merge_sources",
        [](const std::vector<EmbeddingSet>& sets, const std::vector<std::string>& names) {
          return merge_sources(sets, names);
        },
        py::arg("sets"), py::arg("names") = std::vector<std::string>{});

  m.def("pairwise_cost",
        [](const Matrix& a, const Matrix& b, const std::string& metric) {
          return pairwise_cost(a, b, metric_from_string(metric)).d;
        },
        py::arg("a"), py::arg("b"), py::arg("metric") = "euclidean");
  m.def("solve_emd",
        [](const Matrix& cost, const std::vector<double>& source, const std::vector<double>& target) {
          CostMatrix c;
          c.d = cost;
          const EmdResult r = solve_emd(c, source, target);
          return py::make_tuple(r.value, r.flow.k);
        },
        py::arg("cost"), py::arg("source"), py::arg("target"),
        "Exact EMD; returns (value, flow). Marginals must each sum to 1.");
  m.def("domain_similarity", &domain_similarity, py::arg("emd"), py::arg("gamma") = 1.0);

  m.def("beta_pdf", py::overload_cast<double, double, double>(&beta_pdf), py::arg("x"), py::arg("alpha"),
        py::arg("beta"));
  m.def("category_similarity",
        [](const EmbeddingSet& labeled, const EmbeddingSet& target, const std::string& reduce) {
          return category_similarity(category_centroids(labeled), target, reduce_from_string(reduce));
        },
        py::arg("labeled"), py::arg("target"), py::arg("reduce") = "min");
  m.def("beta_weights",
        [](const std::vector<double>& sims, double alpha, double beta) {
          return selection_dict(beta_weights(sims, BetaParams{alpha, beta}));
        },
        py::arg("similarities"), py::arg("alpha") = 5.0, py::arg("beta") = 5.0);
  m.def("binning_select",
        [](const EmbeddingSet& labeled, const EmbeddingSet& unlabeled, int k, int L, int splits, int chunk,
           std::uint64_t seed) {
          BinningParams p;
          p.n_chunks = L;
          p.n_splits = splits;
          p.select_chunk = chunk;
          p.seed = seed;
          return selection_dict(binning_select(labeled, unlabeled, k, p));
        },
        py::arg("labeled"), py::arg("unlabeled"), py::arg("k_unlabeled"), py::arg("L") = 2, py::arg("splits") = 10,
        py::arg("chunk") = 2, py::arg("seed") = 0);
  m.def("greedy_select",
        [](const EmbeddingSet& labeled, const EmbeddingSet& unlabeled, int k, int budget, std::uint64_t seed) {
          KMeansOptions o;
          o.seed = seed;
          const KMeansResult km = kmeans(unlabeled, k, o);
          return selection_dict(greedy_similar_selection(category_centroids(labeled), km.centroids, budget));
        },
        py::arg("labeled"), py::arg("unlabeled"), py::arg("k_unlabeled"), py::arg("budget"), py::arg("seed") = 0);
  m.def("harden_weights",
        [](const std::map<int, double>& w, double threshold) {
          return harden_weights(to_weights(w), threshold).category_weights;
        },
        py::arg("weights"), py::arg("threshold"));

  m.def("kmeans",
        [](const EmbeddingSet& data, int k, std::uint64_t seed) {
          KMeansOptions o;
          o.seed = seed;
          const KMeansResult r = kmeans(data, k, o);
          return py::make_tuple(r.assignment.labels, r.centroids.centroids, r.assignment.inertia);
        },
        py::arg("data"), py::arg("k"), py::arg("seed") = 0, "Returns (labels, centroids, inertia).");
  m.def("semi_supervised_kmeans",
        [](const EmbeddingSet& labeled, const EmbeddingSet& unlabeled, int k, std::uint64_t seed) {
          SemiSupervisedKMeansOptions o;
          o.seed = seed;
          const KMeansResult r = semi_supervised_kmeans(labeled, unlabeled, k, o);
          return py::make_tuple(r.assignment.labels, r.centroids.centroids);
        },
        py::arg("labeled"), py::arg("unlabeled"), py::arg("k"), py::arg("seed") = 0,
        "Returns (labels over labeled then unlabeled rows, centroids).");

  py::class_<HyperParams>(m, "HyperParams")
      .def(py::init<>())
      .def_readwrite("tau_u", &HyperParams::tau_u)
      .def_readwrite("tau_s", &HyperParams::tau_s)
      .def_readwrite("tau_t", &HyperParams::tau_t)
      .def_readwrite("lambda_", &HyperParams::lambda)
      .def_readwrite("epsilon", &HyperParams::epsilon)
      .def_readwrite("lr", &HyperParams::lr)
      .def_readwrite("epochs", &HyperParams::epochs)
      .def_readwrite("batch_size", &HyperParams::batch_size)
      .def_readwrite("seed", &HyperParams::seed)
      .def_readwrite("noise_std", &HyperParams::noise_std)
      .def("to_json", &HyperParams::to_json);

  py::class_<DiscoveryModel>(m, "DiscoveryModel")
      .def_readonly("prototypes", &DiscoveryModel::prototypes)
      .def_readonly("n_labeled_categories", &DiscoveryModel::n_labeled_categories)
      .def_property_readonly("K", &DiscoveryModel::K)
      .def("assign", [](const DiscoveryModel& model, const EmbeddingSet& data) { return assign_labels(model, data); })
      .def("save", [](const DiscoveryModel& model, const std::filesystem::path& p) { save_checkpoint(model, p); });
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  m.def("train",
        [](const EmbeddingSet& labeled, const EmbeddingSet& unlabeled, int K, const HyperParams& hp,
           std::optional<std::map<int, double>> weights) {
          const WeightAssignment w = weights ? to_weights(*weights) : WeightAssignment::all_ones(labeled.n_categories());
          py::gil_scoped_release release;
          return train(labeled, unlabeled, w, hp, K);
        },
        py::arg("labeled"), py::arg("unlabeled"), py::arg("K"), py::arg("hp") = HyperParams{},
        py::arg("weights") = py::none());

  m.def("clustering_accuracy",
        [](const std::vector<int>& t, const std::vector<int>& p) { return clustering_accuracy(t, p); },
        py::arg("truth"), py::arg("predicted"));
  m.def("split_accuracy",
        [](const std::vector<int>& t, const std::vector<int>& p, const std::set<int>& old) {
          return report_dict(split_accuracy(t, p, old));
        },
        py::arg("truth"), py::arg("predicted"), py::arg("old_classes"));

  py::class_<Scene>(m, "Scene")
      .def_readonly("target", &Scene::target)
      .def_readonly("old_labeled", &Scene::old_labeled)
      .def_readonly("old_classes", &Scene::old_classes)
      .def_property_readonly("tiers",
                             [](const Scene& s) {
                               std::map<std::string, EmbeddingSet> out;
                               for (const auto& [t, set] : s.tiers) out.emplace(std::string(to_string(t)), set);
                               return out;
                             })
      .def("pooled", [](const Scene& s) { return s.labeled_source(kAllTiers); })
      .def("labeled_source", [](const Scene& s, const std::vector<std::string>& names) {
        std::vector<HierarchyTier> tiers;
        for (const auto& n : names) tiers.push_back(tier_from_string(n));
        return s.labeled_source(tiers);
      });
  m.def("generate_scene",
        [](std::uint64_t seed, std::optional<std::string> config_json) {
          SynthConfig c = config_json ? SynthConfig::from_json(*config_json) : default_synth_config();
          c.seed = seed;
          return generate_scene(c);
        },
        py::arg("seed") = 1, py::arg("config_json") = py::none());
}
