#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "memjack/embedding.hpp"
#include "memjack/rng.hpp"

namespace memjack {

// Labeled embedding corpus; label 1 = unsafe, 0 = safe.
struct LabeledCorpus {
    std::vector<EmbeddingVector> points;
    std::vector<int> labels;

    int dim() const { return points.empty() ? 0 : points.front().dim(); }
    size_t size() const { return points.size(); }
};

struct TrainingMeta {
    int iterations_run = 0;
    std::string stop_reason;
    std::vector<double> heldout_accuracy;  // one entry per fitted classifier
};

// Orthonormal refusal directions W (rows) and the induced projector
// P = I - W^T W onto their nullspace.
struct RefusalBasis {
    std::vector<std::vector<double>> rows;
    int dim = 0;
    TrainingMeta meta;

    int count() const { return static_cast<int>(rows.size()); }
};

struct FilterConfig {
    int max_iterations = 10;
    double residue_threshold = 0.15;
    double fitness_coefficient = 2.0;  // beta_p
    double reward_coefficient = 2.0;   // beta_r
    double chance_stop_accuracy = 0.55;
    double gram_schmidt_drop_tol = 1e-8;
};

// Logistic regression fit by full-batch gradient descent; deterministic and
// dependency-free. Exposed for the probe-accuracy path and for tests.
struct LogisticModel {
    std::vector<double> weights;
    double bias = 0;

    double raw(const EmbeddingVector& x) const;
    int predict(const EmbeddingVector& x) const { return raw(x) >= 0 ? 1 : 0; }
};

LogisticModel fit_logistic(std::span<const EmbeddingVector> points, std::span<const int> labels,
                           int epochs = 200, double learning_rate = 0.1);
double classifier_accuracy(const LogisticModel& model, std::span<const EmbeddingVector> points,
                           std::span<const int> labels);

RefusalBasis train_refusal_basis(const LabeledCorpus& corpus, const FilterConfig& config,
                                 RngStream& rng);

EmbeddingVector project(const RefusalBasis& basis, const EmbeddingVector& e);
double refusal_residue(const RefusalBasis& basis, const EmbeddingVector& e);

struct FilterResult {
    std::vector<size_t> admitted;  // indexes into the candidate span, order preserved
    size_t fallback = 0;           // argmin-rho index, used when admitted is empty
    std::vector<double> residues;
};

FilterResult filter_candidates(const RefusalBasis& basis,
                               std::span<const EmbeddingVector> embeddings, double epsilon);

double attenuation_factor(double rho, double beta);

// Stratified 5-fold cross-validated accuracy of the training classifier
// family; desk-scale separability audit.
double linear_probe_accuracy(const LabeledCorpus& corpus, RngStream& rng);

// Corpus file: one record per line, "<label> v1 ... vD".
LabeledCorpus load_corpus(std::istream& in);
void save_corpus(std::ostream& out, const LabeledCorpus& corpus);

// Basis file: header "L' D" followed by L' rows of D floats.
void save_basis(std::ostream& out, const RefusalBasis& basis);
RefusalBasis load_basis(std::istream& in);

}  // namespace memjack
