#include "emkken/model.hpp"

#include <algorithm>
#include <cmath>

#include "emkken/errors.hpp"
#include "emkken/eval.hpp"
#include "emkken/optim.hpp"
#include "emkken/io_util.hpp"
#include "nlohmann/json.hpp"

namespace emkken::model {

using layers::MambaOptions;

const std::vector<std::string>& ablation_variant_names() {
    static const std::vector<std::string> names = {"no_metafp", "no_conv",       "no_ssm",
                                                   "no_mamba",  "no_kan",        "no_kan_dropout"};
    return names;
}

AblationFlags ablation_by_name(const std::string& name) {
    AblationFlags f;
    if (name == "full") return f;
    if (name == "no_metafp")
        f.no_metafp = true;
    else if (name == "no_conv")
        f.no_conv = true;
    else if (name == "no_ssm")
        f.no_ssm = true;
    else if (name == "no_mamba")
        f.no_mamba = true;
    else if (name == "no_kan")
        f.no_kan = true;
    else if (name == "no_kan_dropout")
        f.no_kan_dropout = true;
    else
        throw ConfigError("unknown ablation variant '" + name + "'");
    return f;
}

EmkKenConfig apply_ablation(const EmkKenConfig& base, const std::string& variant) {
    EmkKenConfig cfg = base;
    cfg.ablation = ablation_by_name(variant);
    cfg.validate();
    return cfg;
}

void EmkKenConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("field " + field + ": " + why);
    };
    if (f_meta < 1) fail("F_meta", "must be >= 1");
    if (f_embed < 1) fail("F_embed", "must be >= 1");
    if (h_dim < 1) fail("H_dim", "must be >= 1");
    if (d_state1 < 1 || d_state1 > 16) fail("d_state1", "must be in [1,16]");
    if (d_state2 < 8 || d_state2 > 120) fail("d_state2", "must be in [8,120]");
    if (knu_hdim < 1) fail("KNU_Hdim", "must be >= 1");
    if (knu_outputdim < 0) fail("KNU_outputdim", "must be >= 0 (0 = KNU_Hdim/2)");
    if (n_classes < 2) fail("n_classes", "must be >= 2");
    if (lambda < 0.0) fail("lambda", "must be >= 0");
    if (dropout_mamba < 0.0 || dropout_mamba >= 1.0) fail("dropout_mamba", "must be in [0,1)");
    if (dropout_kan < 0.0 || dropout_kan >= 1.0) fail("dropout_kan", "must be in [0,1)");
    if (lr <= 0.0) fail("lr", "must be > 0");
    if (epochs < 0) fail("epochs", "must be >= 0");
    if (batch_size < 1) fail("batch_size", "must be >= 1");
    if (conv_width < 1) fail("conv_width", "must be >= 1");
    if (kan_grid_size < 1) fail("kan_grid_size", "must be >= 1");
    if (kan_spline_order < 1) fail("kan_spline_order", "must be >= 1");
    if (ablation.count() > 1) fail("ablation", "at most one ablation flag may be set");
}

namespace {

ScanMode scan_mode_from_string(const std::string& s) {
    if (s == "paper-literal") return ScanMode::paper_literal;
    if (s == "zoh") return ScanMode::zoh;
    throw ConfigError("field scan_mode: must be 'paper-literal' or 'zoh', got '" + s + "'");
}

std::string scan_mode_to_string(ScanMode m) { return m == ScanMode::zoh ? "zoh" : "paper-literal"; }

}  // namespace

EmkKenConfig config_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    EmkKenConfig cfg;
    try {
        if (j.contains("schema_version") && j["schema_version"].get<int>() != 1)
            throw ConfigError("unsupported schema_version " + j["schema_version"].dump());
        auto get_int = [&](const char* key, int dflt) { return j.contains(key) ? j[key].get<int>() : dflt; };
        auto get_dbl = [&](const char* key, double dflt) { return j.contains(key) ? j[key].get<double>() : dflt; };
        cfg.f_meta = get_int("F_meta", cfg.f_meta);
        cfg.f_embed = get_int("F_embed", cfg.f_embed);
        cfg.h_dim = get_int("H_dim", cfg.h_dim);
        cfg.d_state1 = get_int("d_state1", cfg.d_state1);
        cfg.d_state2 = get_int("d_state2", cfg.d_state2);
        cfg.knu_hdim = get_int("KNU_Hdim", cfg.knu_hdim);
        cfg.knu_outputdim = get_int("KNU_outputdim", cfg.knu_outputdim);
        cfg.n_classes = get_int("n_classes", cfg.n_classes);
        cfg.lambda = get_dbl("lambda", cfg.lambda);
        cfg.dropout_mamba = get_dbl("dropout_mamba", cfg.dropout_mamba);
        cfg.dropout_kan = get_dbl("dropout_kan", cfg.dropout_kan);
        cfg.lr = get_dbl("lr", cfg.lr);
        cfg.epochs = get_int("epochs", cfg.epochs);
        cfg.batch_size = get_int("batch_size", cfg.batch_size);
        if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("scan_mode")) cfg.scan_mode = scan_mode_from_string(j["scan_mode"].get<std::string>());
        cfg.conv_width = get_int("conv_width", cfg.conv_width);
        cfg.kan_grid_size = get_int("kan_grid_size", cfg.kan_grid_size);
        cfg.kan_spline_order = get_int("kan_spline_order", cfg.kan_spline_order);
        if (j.contains("ablation")) {
            const auto& a = j["ablation"];
            auto flag = [&](const char* key) { return a.contains(key) && a[key].get<bool>(); };
            cfg.ablation.no_metafp = flag("no_metafp");
            cfg.ablation.no_conv = flag("no_conv");
            cfg.ablation.no_ssm = flag("no_ssm");
            cfg.ablation.no_mamba = flag("no_mamba");
            cfg.ablation.no_kan = flag("no_kan");
            cfg.ablation.no_kan_dropout = flag("no_kan_dropout");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string config_to_json(const EmkKenConfig& cfg) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["F_meta"] = cfg.f_meta;
    j["F_embed"] = cfg.f_embed;
    j["H_dim"] = cfg.h_dim;
    j["d_state1"] = cfg.d_state1;
    j["d_state2"] = cfg.d_state2;
    j["KNU_Hdim"] = cfg.knu_hdim;
    j["KNU_outputdim"] = cfg.knu_outputdim;
    j["n_classes"] = cfg.n_classes;
    j["lambda"] = cfg.lambda;
    j["dropout_mamba"] = cfg.dropout_mamba;
    j["dropout_kan"] = cfg.dropout_kan;
    j["lr"] = cfg.lr;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["seed"] = cfg.seed;
    j["scan_mode"] = scan_mode_to_string(cfg.scan_mode);
    j["conv_width"] = cfg.conv_width;
    j["kan_grid_size"] = cfg.kan_grid_size;
    j["kan_spline_order"] = cfg.kan_spline_order;
    j["ablation"] = {{"no_metafp", cfg.ablation.no_metafp},     {"no_conv", cfg.ablation.no_conv},
                     {"no_ssm", cfg.ablation.no_ssm},           {"no_mamba", cfg.ablation.no_mamba},
                     {"no_kan", cfg.ablation.no_kan},           {"no_kan_dropout", cfg.ablation.no_kan_dropout}};
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

EgoDataset build_ego_dataset(const graph::CitationCorpus& corpus) {
    EgoDataset ds;
    ds.corpus = &corpus;
    ds.egos.reserve(corpus.node_count());
    for (std::size_t i = 0; i < corpus.node_count(); ++i)
        ds.egos.push_back(graph::build_ego_network(corpus, static_cast<graph::NodeId>(i)));
    return ds;
}

BatchInput make_batch(const EgoDataset& dataset, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw ContractError("make_batch: empty index list");
    const graph::CitationCorpus& corpus = *dataset.corpus;
    int l_max = 1;
    for (std::size_t idx : indices)
        l_max = std::max(l_max, static_cast<int>(dataset.egos[idx].ordered_nodes.size()));
    const int n = static_cast<int>(indices.size());
    BatchInput b;
    b.meta = Tensor({n, l_max, corpus.f_meta});
    b.embed = Tensor({n, l_max, corpus.f_embed});
    b.valid_mask = Tensor({n, l_max});
    b.central_mask = Tensor({n, l_max});
    b.labels.resize(n, 0);
    for (int s = 0; s < n; ++s) {
        const graph::EgoNetwork& ego = dataset.egos[indices[s]];
        const int len = static_cast<int>(ego.ordered_nodes.size());
        for (int p = 0; p < len; ++p) {
            const graph::PaperNode& node = corpus.nodes[ego.ordered_nodes[p]];
            for (int f = 0; f < corpus.f_meta; ++f) b.meta.at(s, p, f) = node.meta[f];
            for (int f = 0; f < corpus.f_embed; ++f) b.embed.at(s, p, f) = node.embedding[f];
            b.valid_mask.at(s, p) = 1.0;
        }
        b.central_mask.at(s, ego.central_index) = 1.0;
        if (!dataset.labels.empty()) b.labels[s] = dataset.labels[indices[s]];
    }
    return b;
}

// ---------------------------------------------------------------------------

EmkKenModel EmkKenModel::init(const EmkKenConfig& cfg, Rng& rng) {
    cfg.validate();
    EmkKenModel m;
    m.config = cfg;
    const int dm_meta = cfg.d_model_meta();
    const int dm_text = cfg.d_model_text();
    const int knu_out = cfg.knu_out();

    m.metafp = layers::MetaFpParams::init("metafp", cfg.f_meta, cfg.h_dim, rng);
    m.posconcat = layers::PosConcatParams::init("posconcat", dm_meta, rng);

    auto uniform = [&rng](const std::string& name, std::vector<int> shape, double bound) {
        Tensor t(std::move(shape));
        rng.fill_uniform(t, -bound, bound);
        t.quantize();
        return Parameter(name, t);
    };

    if (cfg.ablation.no_mamba) {
        const double bm = 1.0 / std::sqrt(static_cast<double>(dm_meta));
        const double bt = 1.0 / std::sqrt(static_cast<double>(dm_text));
        m.mamba_stub_w_meta = uniform("mamba_stub_meta.W", {dm_meta, dm_meta}, bm);
        m.mamba_stub_b_meta = uniform("mamba_stub_meta.b", {dm_meta}, bm);
        m.mamba_stub_w_text = uniform("mamba_stub_text.W", {dm_text, dm_text}, bt);
        m.mamba_stub_b_text = uniform("mamba_stub_text.b", {dm_text}, bt);
    } else {
        const bool with_conv = !cfg.ablation.no_conv;
        const bool with_ssm = !cfg.ablation.no_ssm;
        m.mamba_meta =
            layers::MambaParams::init("mamba_meta", dm_meta, cfg.d_state1, rng, cfg.conv_width, with_conv, with_ssm);
        m.mamba_text =
            layers::MambaParams::init("mamba_text", dm_text, cfg.d_state2, rng, cfg.conv_width, with_conv, with_ssm);
    }

    if (cfg.ablation.no_kan) {
        const double bm = 1.0 / std::sqrt(static_cast<double>(dm_meta));
        const double bt = 1.0 / std::sqrt(static_cast<double>(dm_text));
        m.knu_stub_w_meta = uniform("knu_stub_meta.W", {dm_meta, knu_out}, bm);
        m.knu_stub_b_meta = uniform("knu_stub_meta.b", {knu_out}, bm);
        m.knu_stub_w_text = uniform("knu_stub_text.W", {dm_text, knu_out}, bt);
        m.knu_stub_b_text = uniform("knu_stub_text.b", {knu_out}, bt);
    } else {
        m.knu_meta = layers::KanLayerParams::init("knu_meta", dm_meta, knu_out, rng, cfg.kan_grid_size,
                                                  cfg.kan_spline_order);
        m.knu_text = layers::KanLayerParams::init("knu_text", dm_text, knu_out, rng, cfg.kan_grid_size,
                                                  cfg.kan_spline_order);
    }

    const double bo = 1.0 / std::sqrt(static_cast<double>(2 * knu_out));
    m.w_out = uniform("W_out", {2 * knu_out, cfg.n_classes}, bo);
    m.b_out = uniform("b_out", {cfg.n_classes}, bo);
    return m;
}

EmkKenModel EmkKenModel::init_seeded(const EmkKenConfig& cfg) {
    Rng rng(cfg.seed);
    return init(cfg, rng);
}

std::vector<Parameter*> EmkKenModel::parameters() {
    std::vector<Parameter*> out;
    auto push = [&out](std::vector<Parameter*> ps) {
        for (Parameter* p : ps)
            if (p->numel() > 0) out.push_back(p);
    };
    push(metafp.parameters());
    push(posconcat.parameters());
    if (config.ablation.no_mamba) {
        push({&mamba_stub_w_meta, &mamba_stub_b_meta, &mamba_stub_w_text, &mamba_stub_b_text});
    } else {
        push(mamba_meta.parameters());
        push(mamba_text.parameters());
    }
    if (config.ablation.no_kan) {
        push({&knu_stub_w_meta, &knu_stub_b_meta, &knu_stub_w_text, &knu_stub_b_text});
    } else {
        push(knu_meta.parameters());
        push(knu_text.parameters());
    }
    push({&w_out, &b_out});
    return out;
}

std::size_t EmkKenModel::parameter_count() {
    std::size_t n = 0;
    for (Parameter* p : parameters()) n += p->numel();
    return n;
}

Var forward(Tape& t, EmkKenModel& m, const BatchInput& batch, RunMode mode, Rng& rng) {
    const EmkKenConfig& cfg = m.config;
    if (batch.meta.rank() != 3 || batch.meta.dim(2) != cfg.f_meta)
        throw ShapeError("batch meta " + shape_str(batch.meta.shape()) + " vs F_meta " + std::to_string(cfg.f_meta));
    if (batch.embed.rank() != 3 || batch.embed.dim(2) != cfg.f_embed)
        throw ShapeError("batch embed " + shape_str(batch.embed.shape()) + " vs F_embed " +
                         std::to_string(cfg.f_embed));

    const double kan_rate = cfg.ablation.no_kan_dropout ? 0.0 : cfg.dropout_kan;
    MambaOptions mopts;
    mopts.scan_mode = cfg.scan_mode;
    mopts.dropout_rate = cfg.dropout_mamba;
    mopts.run_mode = mode;
    mopts.with_conv = !cfg.ablation.no_conv;
    mopts.with_ssm = !cfg.ablation.no_ssm;

    // metadata branch: MetaFP -> positional concat -> Mamba -> central node -> KNU
    Var meta_in = t.input(batch.meta);
    Var h = layers::metafp_forward(t, meta_in, m.metafp, !cfg.ablation.no_metafp);
    Tensor positions = layers::relative_positions(batch.valid_mask);
    Var hc = layers::positional_concat(t, h, positions, m.posconcat);
    Var seq_meta;
    if (cfg.ablation.no_mamba) {
        Var lin = layers::linear_lastdim(t, hc, t.param(m.mamba_stub_w_meta), t.param(m.mamba_stub_b_meta));
        seq_meta = dropout(t, lin, cfg.dropout_mamba, mode, rng);
    } else {
        seq_meta = layers::mamba_forward(t, hc, m.mamba_meta, mopts, rng);
    }
    Var center = masked_mean_seq(t, seq_meta, batch.central_mask);
    Var feat_meta = cfg.ablation.no_kan
                        ? add_rowwise(t, matmul(t, center, t.param(m.knu_stub_w_meta)), t.param(m.knu_stub_b_meta))
                        : layers::kan_forward(t, center, m.knu_meta, kan_rate, mode, rng);

    // text branch: Mamba -> masked mean pooling -> KNU
    Var embed_in = t.input(batch.embed);
    Var seq_text;
    if (cfg.ablation.no_mamba) {
        Var lin = layers::linear_lastdim(t, embed_in, t.param(m.mamba_stub_w_text), t.param(m.mamba_stub_b_text));
        seq_text = dropout(t, lin, cfg.dropout_mamba, mode, rng);
    } else {
        seq_text = layers::mamba_forward(t, embed_in, m.mamba_text, mopts, rng);
    }
    Var pooled = masked_mean_seq(t, seq_text, batch.valid_mask);
    Var feat_text = cfg.ablation.no_kan
                        ? add_rowwise(t, matmul(t, pooled, t.param(m.knu_stub_w_text)), t.param(m.knu_stub_b_text))
                        : layers::kan_forward(t, pooled, m.knu_text, kan_rate, mode, rng);

    Var feats = concat_last(t, feat_meta, feat_text);
    return add_rowwise(t, matmul(t, feats, t.param(m.w_out)), t.param(m.b_out));
}

Var loss_op(Tape& t, EmkKenModel& m, Var logits, const std::vector<int>& labels) {
    Var ce = cross_entropy_logits(t, logits, labels);
    if (m.config.ablation.no_kan || m.config.lambda == 0.0) return ce;
    Var reg = add(t, layers::kan_reg_loss(t, m.knu_meta), layers::kan_reg_loss(t, m.knu_text));
    return add(t, ce, scale(t, reg, m.config.lambda));
}

Tensor predict(EmkKenModel& m, const BatchInput& batch) {
    Tape t;
    Rng rng(0);  // unused in eval mode
    Var logits = forward(t, m, batch, RunMode::eval, rng);
    return softmax_rows(t.value(logits));
}

EvalResult evaluate(EmkKenModel& m, const EgoDataset& dataset, const std::vector<std::size_t>& indices,
                    int batch_size) {
    if (indices.empty()) throw ContractError("evaluate: empty index list");
    EvalResult r;
    const int c = m.config.n_classes;
    r.probabilities = Tensor({static_cast<int>(indices.size()), c});
    std::vector<int> labels(indices.size());
    std::size_t row = 0;
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
        const std::size_t stop = std::min(indices.size(), start + batch_size);
        std::vector<std::size_t> chunk(indices.begin() + start, indices.begin() + stop);
        BatchInput b = make_batch(dataset, chunk);
        Tensor probs = predict(m, b);
        for (std::size_t i = 0; i < chunk.size(); ++i, ++row) {
            for (int j = 0; j < c; ++j) r.probabilities.at(static_cast<int>(row), j) = probs.at(static_cast<int>(i), j);
            labels[row] = b.labels[i];
        }
    }
    r.predictions.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        int best = 0;
        for (int j = 1; j < c; ++j)
            if (r.probabilities.at(static_cast<int>(i), j) > r.probabilities.at(static_cast<int>(i), best)) best = j;
        r.predictions[i] = best;
    }
    r.loss = cross_entropy(r.probabilities, labels);
    r.acc = eval::accuracy(r.predictions, labels);
    r.f1 = eval::macro_f1(r.predictions, labels, c);
    int skipped = 0;
    // a slice can miss whole classes; score 0.5 (chance) when AUC is undefined
    bool feasible = false;
    {
        std::vector<int> counts(c, 0);
        for (int y : labels) ++counts[y];
        for (int j = 0; j < c; ++j)
            if (counts[j] > 0 && counts[j] < static_cast<int>(labels.size())) feasible = true;
    }
    r.auc = feasible ? eval::auc_ovr(r.probabilities, labels, &skipped) : 0.5;
    return r;
}

History train(EmkKenModel& m, const EgoDataset& dataset, const graph::DatasetSplit& split) {
    const EmkKenConfig& cfg = m.config;
    if (split.train.empty()) throw ContractError("train: empty training split");
    if (dataset.labels.empty()) throw ContractError("train: dataset has no labels");

    Rng rng(cfg.seed ^ 0xd1b54a32d192ed03ull);  // distinct stream from init
    Adam optimizer(m.parameters(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    History history;
    std::vector<std::size_t> order = split.train;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::vector<std::size_t> chunk(order.begin() + start, order.begin() + stop);
            BatchInput b = make_batch(dataset, chunk);
            Tape t;
            Var logits = forward(t, m, b, RunMode::train, rng);
            Var loss = loss_op(t, m, logits, b.labels);
            const double lv = t.value(loss)[0];
            if (!std::isfinite(lv))
                throw DivergenceError("training loss non-finite at epoch " + std::to_string(epoch) + " batch " +
                                      std::to_string(batches));
            t.backward(loss);
            optimizer.step();
            loss_sum += lv;
            ++batches;
        }
        EvalResult train_eval = evaluate(m, dataset, split.train, cfg.batch_size);
        history.push_back({epoch, "train", loss_sum / std::max(1, batches), train_eval.acc, train_eval.f1,
                           train_eval.auc});
        if (!split.validation.empty()) {
            EvalResult val_eval = evaluate(m, dataset, split.validation, cfg.batch_size);
            history.push_back({epoch, "validation", val_eval.loss, val_eval.acc, val_eval.f1, val_eval.auc});
        }
    }
    return history;
}

std::string history_to_csv(const History& history) {
    std::string out = "epoch,split,loss,acc,f1,auc\n";
    for (const EpochMetrics& e : history) {
        out += std::to_string(e.epoch) + "," + e.split + "," + io::fmt_double(e.loss) + "," + io::fmt_double(e.acc) +
               "," + io::fmt_double(e.f1) + "," + io::fmt_double(e.auc) + "\n";
    }
    return out;
}

}  // namespace emkken::model
