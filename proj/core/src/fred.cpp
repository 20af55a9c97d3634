#include "dnadiff/fred.hpp"

namespace dnadiff {

Eigen::MatrixXd sequence_embeddings(VaeModelF& encoder, const std::vector<std::string>& seqs,
                                    int64_t batch_size) {
    if (seqs.empty()) throw ValueError("sequence_embeddings: empty sequence set");
    nn::Tensor<float> means = encode_means(encoder, seqs, batch_size);
    const int64_t N = means.dim(0);
    const int64_t d = means.numel() / N;
    Eigen::MatrixXd out(N, d);
    for (int64_t n = 0; n < N; ++n)
        for (int64_t i = 0; i < d; ++i) out(n, i) = means[n * d + i];
    return out;
}

FredResult fred(const std::vector<std::string>& real_seqs,
                const std::vector<std::string>& generated_seqs, VaeModelF& reference_encoder,
                int64_t batch_size) {
    Eigen::MatrixXd a = sequence_embeddings(reference_encoder, real_seqs, batch_size);
    Eigen::MatrixXd b = sequence_embeddings(reference_encoder, generated_seqs, batch_size);
    FredResult r;
    r.dim = a.cols();
    r.real_count = a.rows();
    r.generated_count = b.rows();
    r.undersized = a.rows() < r.dim + 1 || b.rows() < r.dim + 1;
    r.distance = frechet_distance(fit_gaussian(a), fit_gaussian(b));
    return r;
}

}  // namespace dnadiff
