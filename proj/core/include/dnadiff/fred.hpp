#pragma once

// FReD: Frechet distance between the embedding distributions of two sequence
// sets.  Embeddings are the flattened posterior means of a reference encoder
// trained on sequences held out from the sets under comparison.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dnadiff/metrics.hpp"
#include "dnadiff/vae.hpp"

namespace dnadiff {

// One row per sequence: the flattened posterior mean, [N, latent_numel].
Eigen::MatrixXd sequence_embeddings(VaeModelF& encoder, const std::vector<std::string>& seqs,
                                    int64_t batch_size = 64);

struct FredResult {
    double distance = 0;
    int64_t dim = 0;  // embedding dimensionality
    int64_t real_count = 0;
    int64_t generated_count = 0;
    bool undersized = false;  // a set smaller than dim + 1 makes the Gaussian fit noisy
};

FredResult fred(const std::vector<std::string>& real_seqs,
                const std::vector<std::string>& generated_seqs, VaeModelF& reference_encoder,
                int64_t batch_size = 64);

}  // namespace dnadiff
