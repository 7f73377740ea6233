#include "memjack/nullspace.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "memjack/errors.hpp"

namespace memjack {

double LogisticModel::raw(const EmbeddingVector& x) const {
    double s = bias;
    for (size_t i = 0; i < weights.size() && i < x.values.size(); ++i)
        s += weights[i] * x.values[i];
    return s;
}

LogisticModel fit_logistic(std::span<const EmbeddingVector> points, std::span<const int> labels,
                           int epochs, double learning_rate) {
    const size_t n = points.size();
    const size_t d = n ? points.front().values.size() : 0;
    LogisticModel model;
    model.weights.assign(d, 0.0);
    model.bias = 0.0;
    if (n == 0) return model;

    std::vector<double> grad(d);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double grad_bias = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double z = model.raw(points[i]);
            double p = 1.0 / (1.0 + std::exp(-z));
            double err = p - static_cast<double>(labels[i]);
            for (size_t j = 0; j < d; ++j) grad[j] += err * points[i].values[j];
            grad_bias += err;
        }
        double scale = learning_rate / static_cast<double>(n);
        for (size_t j = 0; j < d; ++j) model.weights[j] -= scale * grad[j];
        model.bias -= scale * grad_bias;
    }
    return model;
}

double classifier_accuracy(const LogisticModel& model, std::span<const EmbeddingVector> points,
                           std::span<const int> labels) {
    if (points.empty()) return 0.0;
    size_t correct = 0;
    for (size_t i = 0; i < points.size(); ++i)
        if (model.predict(points[i]) == labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(points.size());
}

namespace {

void check_corpus(const LabeledCorpus& corpus, size_t min_per_label) {
    size_t pos = 0, neg = 0;
    for (int l : corpus.labels) (l ? pos : neg)++;
    if (pos < min_per_label || neg < min_per_label)
        throw DegenerateCorpusError("corpus needs at least " + std::to_string(min_per_label) +
                                    " items per label (got " + std::to_string(neg) + " safe, " +
                                    std::to_string(pos) + " unsafe)");
}

// Stratified shuffle: permutes indexes within each label class.
std::vector<size_t> stratified_order(std::span<const int> labels, RngStream& rng) {
    std::vector<size_t> pos, neg;
    for (size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
    auto shuffle = [&](std::vector<size_t>& v) {
        for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.next_index(i)]);
    };
    shuffle(pos);
    shuffle(neg);
    std::vector<size_t> order;
    order.reserve(labels.size());
    // Interleave proportionally so any prefix is roughly stratified.
    size_t ip = 0, in = 0;
    while (ip < pos.size() || in < neg.size()) {
        double fp = pos.empty() ? 1.0 : static_cast<double>(ip) / static_cast<double>(pos.size());
        double fn = neg.empty() ? 1.0 : static_cast<double>(in) / static_cast<double>(neg.size());
        if (ip < pos.size() && (in >= neg.size() || fp <= fn))
            order.push_back(pos[ip++]);
        else
            order.push_back(neg[in++]);
    }
    return order;
}

void project_out_direction(std::vector<EmbeddingVector>& points, const std::vector<double>& w) {
    for (auto& p : points) {
        double d = 0;
        for (size_t j = 0; j < w.size(); ++j) d += w[j] * p.values[j];
        for (size_t j = 0; j < w.size(); ++j) p.values[j] -= d * w[j];
    }
}

}  // namespace

RefusalBasis train_refusal_basis(const LabeledCorpus& corpus, const FilterConfig& config,
                                 RngStream& rng) {
    check_corpus(corpus, 2);
    const int d = corpus.dim();

    std::vector<EmbeddingVector> work = corpus.points;
    std::vector<int> labels = corpus.labels;

    RefusalBasis basis;
    basis.dim = d;
    std::vector<std::vector<double>> collected;

    for (int iter = 0; iter < config.max_iterations; ++iter) {
        // 80/20 held-out split, re-drawn each iteration.
        std::vector<size_t> order = stratified_order(labels, rng);
        size_t n_train = (order.size() * 4) / 5;
        if (n_train == 0 || n_train == order.size()) {
            basis.meta.stop_reason = "corpus too small to split";
            break;
        }
        std::vector<EmbeddingVector> train_x, held_x;
        std::vector<int> train_y, held_y;
        for (size_t i = 0; i < order.size(); ++i) {
            if (i < n_train) {
                train_x.push_back(work[order[i]]);
                train_y.push_back(labels[order[i]]);
            } else {
                held_x.push_back(work[order[i]]);
                held_y.push_back(labels[order[i]]);
            }
        }

        LogisticModel model = fit_logistic(train_x, train_y);
        double acc = classifier_accuracy(model, held_x, held_y);
        basis.meta.heldout_accuracy.push_back(acc);
        basis.meta.iterations_run = iter + 1;
        if (acc <= config.chance_stop_accuracy) {
            basis.meta.stop_reason = "held-out accuracy at chance";
            break;
        }

        double norm = std::sqrt(std::inner_product(model.weights.begin(), model.weights.end(),
                                                   model.weights.begin(), 0.0));
        if (norm < config.gram_schmidt_drop_tol) {
            basis.meta.stop_reason = "degenerate classifier direction";
            break;
        }
        std::vector<double> w = model.weights;
        for (double& x : w) x /= norm;
        collected.push_back(w);
        project_out_direction(work, w);
        if (basis.meta.stop_reason.empty() && iter + 1 == config.max_iterations)
            basis.meta.stop_reason = "iteration budget exhausted";
    }
    if (basis.meta.stop_reason.empty()) basis.meta.stop_reason = "iteration budget exhausted";

    // Gram-Schmidt over the collected directions; near-dependent vectors are
    // dropped rather than normalized into noise.
    for (const auto& w : collected) {
        std::vector<double> v = w;
        for (const auto& row : basis.rows) {
            double d2 = 0;
            for (size_t j = 0; j < v.size(); ++j) d2 += row[j] * v[j];
            for (size_t j = 0; j < v.size(); ++j) v[j] -= d2 * row[j];
        }
        double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (norm < config.gram_schmidt_drop_tol) continue;
        for (double& x : v) x /= norm;
        basis.rows.push_back(std::move(v));
    }
    return basis;
}

EmbeddingVector project(const RefusalBasis& basis, const EmbeddingVector& e) {
    if (basis.count() == 0) return e;
    if (e.dim() != basis.dim)
        throw DimMismatchError("projection dim mismatch: " + std::to_string(e.dim()) + " vs " +
                               std::to_string(basis.dim));
    EmbeddingVector out = e;
    for (const auto& row : basis.rows) {
        double d = 0;
        for (size_t j = 0; j < row.size(); ++j) d += row[j] * e.values[j];
        for (size_t j = 0; j < row.size(); ++j) out.values[j] -= d * row[j];
    }
    return out;
}

double refusal_residue(const RefusalBasis& basis, const EmbeddingVector& e) {
    if (basis.count() == 0) return 0.0;
    if (e.dim() != basis.dim)
        throw DimMismatchError("residue dim mismatch: " + std::to_string(e.dim()) + " vs " +
                               std::to_string(basis.dim));
    double s = 0;
    for (const auto& row : basis.rows) {
        double d = 0;
        for (size_t j = 0; j < row.size(); ++j) d += row[j] * e.values[j];
        s += d * d;
    }
    return std::sqrt(s);
}

FilterResult filter_candidates(const RefusalBasis& basis,
                               std::span<const EmbeddingVector> embeddings, double epsilon) {
    FilterResult result;
    result.residues.reserve(embeddings.size());
    double best = 0;
    for (size_t i = 0; i < embeddings.size(); ++i) {
        double rho = refusal_residue(basis, embeddings[i]);
        result.residues.push_back(rho);
        if (rho < epsilon) result.admitted.push_back(i);
        if (i == 0 || rho < best) {
            best = rho;
            result.fallback = i;
        }
    }
    return result;
}

double attenuation_factor(double rho, double beta) { return std::exp(-beta * rho); }

double linear_probe_accuracy(const LabeledCorpus& corpus, RngStream& rng) {
    check_corpus(corpus, 10);
    const int folds = 5;
    std::vector<size_t> order = stratified_order(corpus.labels, rng);

    size_t total = 0, correct = 0;
    for (int f = 0; f < folds; ++f) {
        std::vector<EmbeddingVector> train_x, test_x;
        std::vector<int> train_y, test_y;
        for (size_t i = 0; i < order.size(); ++i) {
            bool in_fold = (i % folds) == static_cast<size_t>(f);
            if (in_fold) {
                test_x.push_back(corpus.points[order[i]]);
                test_y.push_back(corpus.labels[order[i]]);
            } else {
                train_x.push_back(corpus.points[order[i]]);
                train_y.push_back(corpus.labels[order[i]]);
            }
        }
        LogisticModel model = fit_logistic(train_x, train_y);
        for (size_t i = 0; i < test_x.size(); ++i) {
            if (model.predict(test_x[i]) == test_y[i]) ++correct;
            ++total;
        }
    }
    return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

LabeledCorpus load_corpus(std::istream& in) {
    LabeledCorpus corpus;
    std::string line;
    int expected_dim = -1;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string label;
        if (!(ss >> label)) continue;
        int y;
        if (label == "safe")
            y = 0;
        else if (label == "unsafe")
            y = 1;
        else
            throw ParseError("corpus line " + std::to_string(line_no) + ": unknown label '" +
                                 label + "'",
                             "label");
        EmbeddingVector v;
        double x;
        while (ss >> x) v.values.push_back(x);
        if (expected_dim < 0) expected_dim = v.dim();
        if (v.dim() != expected_dim)
            throw DimMismatchError("corpus line " + std::to_string(line_no) +
                                   ": dim " + std::to_string(v.dim()) + " != " +
                                   std::to_string(expected_dim));
        corpus.points.push_back(std::move(v));
        corpus.labels.push_back(y);
    }
    return corpus;
}

void save_corpus(std::ostream& out, const LabeledCorpus& corpus) {
    out.precision(17);
    for (size_t i = 0; i < corpus.points.size(); ++i) {
        out << (corpus.labels[i] ? "unsafe" : "safe");
        for (double v : corpus.points[i].values) out << ' ' << v;
        out << '\n';
    }
}

void save_basis(std::ostream& out, const RefusalBasis& basis) {
    out.precision(17);
    out << basis.count() << ' ' << basis.dim << '\n';
    for (const auto& row : basis.rows) {
        for (size_t j = 0; j < row.size(); ++j) out << (j ? " " : "") << row[j];
        out << '\n';
    }
}

RefusalBasis load_basis(std::istream& in) {
    RefusalBasis basis;
    int count = 0;
    if (!(in >> count >> basis.dim)) throw ParseError("basis file lacks 'L D' header", "header");
    for (int i = 0; i < count; ++i) {
        std::vector<double> row(static_cast<size_t>(basis.dim));
        for (auto& v : row)
            if (!(in >> v)) throw ParseError("basis file truncated at row " + std::to_string(i));
        basis.rows.push_back(std::move(row));
    }
    basis.meta.stop_reason = "loaded from file";
    return basis;
}

}  // namespace memjack
