// Python bindings for the core operations: KQI scoring, the selective
// scan, B-spline bases, metrics, and the file-level pipeline commands.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "emkken/autodiff.hpp"
#include "emkken/commands.hpp"
#include "emkken/eval.hpp"
#include "emkken/io_util.hpp"
#include "emkken/kqi.hpp"
#include "emkken/layers.hpp"
#include "emkken/model.hpp"
#include "emkken/tensor.hpp"

namespace py = pybind11;
using namespace emkken;

namespace {

Tensor tensor_from(const std::vector<double>& data, std::vector<int> shape) {
    return Tensor(std::move(shape), data);
}

py::dict kqi_scores(const std::vector<std::pair<std::int64_t, std::int64_t>>& edges, std::int64_t n_nodes) {
    graph::CitationCorpus corpus;
    corpus.f_meta = 1;
    corpus.f_embed = 1;
    for (std::int64_t i = 0; i < n_nodes; ++i) {
        graph::PaperNode node;
        node.id = i;
        node.meta = {0.0};
        node.embedding = {0.0};
        corpus.nodes.push_back(node);
        corpus.external_ids.push_back(i);
    }
    for (const auto& [a, b] : edges) corpus.edges.emplace_back(a, b);
    kqi::KnowledgeTree tree = kqi::to_dag(corpus);
    kqi::VolumeTable volumes = kqi::compute_volumes(tree);
    kqi::KqiScore score = kqi::kqi_all(tree, volumes);
    py::dict out;
    out["volume"] = volumes.volume;
    out["total_volume"] = volumes.total;
    out["kappa"] = score.kappa;
    out["removed_cycle_edges"] = tree.removed_cycle_edges;
    return out;
}

std::vector<double> selective_scan_py(const std::vector<double>& x, const std::vector<double>& dt,
                                      const std::vector<double>& b, const std::vector<double>& c,
                                      const std::vector<double>& a, const std::vector<double>& d, int n, int l,
                                      int d_inner, int d_state, const std::string& mode) {
    Tape t;
    Var y = layers::selective_scan(
        t, t.input(tensor_from(x, {n, l, d_inner})), t.input(tensor_from(dt, {n, l, d_inner})),
        t.input(tensor_from(b, {n, l, d_state})), t.input(tensor_from(c, {n, l, d_state})),
        t.input(tensor_from(a, {d_inner, d_state})), t.input(tensor_from(d, {d_inner})),
        mode == "zoh" ? layers::ScanMode::zoh : layers::ScanMode::paper_literal);
    return t.value(y).vec();
}

std::vector<std::vector<double>> bspline_basis_py(const std::vector<double>& xs, double lo, double hi,
                                                  int intervals, int order) {
    layers::KanGrid grid = layers::make_kan_grid(lo, hi, intervals, order);
    Tensor bases = layers::bspline_basis(xs, grid);
    std::vector<std::vector<double>> out(xs.size(), std::vector<double>(grid.basis_count()));
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (int j = 0; j < grid.basis_count(); ++j) out[i][j] = bases.at(static_cast<int>(i), j);
    return out;
}

double auc_ovr_py(const std::vector<double>& scores, const std::vector<int>& truth, int n_classes) {
    return eval::auc_ovr(tensor_from(scores, {static_cast<int>(truth.size()), n_classes}), truth);
}

}  // namespace

PYBIND11_MODULE(emkken, m) {
    m.doc() = "Citation-network knowledge evaluation toolkit: KQI scoring and the EMK-KEN model pipeline";

    m.def("kqi_scores", &kqi_scores, py::arg("edges"), py::arg("n_nodes"),
          "Knowledge-tree volumes and KQI per node from a (citing, cited) edge list");
    m.def("log_bin",
          [](const std::vector<double>& scores, int n_classes) {
              kqi::LogBinResult r = kqi::log_bin(scores, n_classes);
              return py::make_tuple(r.labels, r.degenerate_all_zero);
          },
          py::arg("scores"), py::arg("n_classes"),
          "Equal-frequency quantile labels over ln(scores); zeros pin to class 0");

    m.def("selective_scan", &selective_scan_py, py::arg("x"), py::arg("dt"), py::arg("b"), py::arg("c"),
          py::arg("a"), py::arg("d"), py::arg("n"), py::arg("l"), py::arg("d_inner"), py::arg("d_state"),
          py::arg("mode") = "paper-literal", "Flat row-major selective scan; returns y of shape n*l*d_inner");
    m.def("bspline_basis", &bspline_basis_py, py::arg("xs"), py::arg("lo") = -1.0, py::arg("hi") = 1.0,
          py::arg("intervals") = 5, py::arg("order") = 3);

    m.def("accuracy", &eval::accuracy, py::arg("pred"), py::arg("truth"));
    m.def("macro_f1",
          [](const std::vector<int>& pred, const std::vector<int>& truth, int n_classes) {
              return eval::macro_f1(pred, truth, n_classes);
          },
          py::arg("pred"), py::arg("truth"), py::arg("n_classes"));
    m.def("auc_ovr", &auc_ovr_py, py::arg("scores"), py::arg("truth"), py::arg("n_classes"));

    m.def("default_config_json", [] { return model::config_to_json(model::EmkKenConfig{}); });
    m.def("validate_config_json", [](const std::string& text) {
        (void)model::config_from_json(text);
        return true;
    });

    // file-level pipeline, mirroring the CLI subcommands
    m.def("ingest",
          [](const std::string& edges, const std::string& meta, const std::string& embed, const std::string& out,
             int year_column) {
              cli::IngestArgs args;
              args.edge_path = edges;
              args.meta_path = meta;
              args.embed_path = embed;
              args.out_dir = out;
              args.year_column = year_column;
              return cli::cmd_ingest(args);
          },
          py::arg("edges"), py::arg("meta"), py::arg("embed"), py::arg("out"), py::arg("year_column") = -1);
    m.def("kqi_command",
          [](const std::string& corpus, const std::string& out, int classes) {
              return cli::cmd_kqi(cli::KqiArgs{corpus, out, classes});
          },
          py::arg("corpus"), py::arg("out"), py::arg("classes") = 0);
    m.def("train",
          [](const std::string& corpus, const std::string& config_json, const std::string& out) {
              cli::TrainArgs args;
              args.corpus_path = corpus;
              args.out_dir = out;
              args.config = cli::load_cli_config("", {}, nullptr);
              // re-parse the full document so harness keys apply too
              if (!config_json.empty()) {
                  const std::string tmp_path = out + ".config.json";
                  io::write_atomic(tmp_path, config_json);
                  args.config = cli::load_cli_config(tmp_path, {}, nullptr);
              }
              return cli::cmd_train(args);
          },
          py::arg("corpus"), py::arg("config_json") = "", py::arg("out") = "out");
    m.def("evaluate",
          [](const std::string& corpus, const std::string& config_json, const std::string& out, int jobs) {
              cli::EvalArgs args;
              args.corpus_path = corpus;
              args.out_dir = out;
              args.jobs = jobs;
              if (!config_json.empty()) {
                  const std::string tmp_path = out + ".config.json";
                  io::write_atomic(tmp_path, config_json);
                  args.config = cli::load_cli_config(tmp_path, {}, nullptr);
              }
              return cli::cmd_eval(args);
          },
          py::arg("corpus"), py::arg("config_json") = "", py::arg("out") = "out", py::arg("jobs") = 1);
}
